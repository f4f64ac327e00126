//! Construction, decomposition, application, and symmetry verification of
//! bimodule quantum Markov semigroup generators.
//!
//! A generator is handed around as its commutant-algebra coefficient `L̂`
//! together with a positive modular element `Δ̂`.  Splitting `L̂` against the
//! Jones projection `e₂` yields four blocks
//!
//! ```text
//!   scalar = e₂ L̂ e₂,     L̂₁  = e₂ L̂ (1−e₂),
//!   L̂₁ᵈ = (1−e₂) L̂ e₂,   L̂₀ = −(1−e₂) L̂ (1−e₂)   (required ⪰ 0),
//! ```
//!
//! from which the generator splits as `ℒ = ℒ_a + ℒ_w`: a completely
//! Dirichlet "Laplacian" part
//!
//! ```text
//!   ℒ_a(x) = ½(1*L̂₀)x + ½x(1*L̂₀) − x*L̂₀
//! ```
//!
//! and a weak (derivation) part `ℒ_w(x) = i[x, Im E_M(𝔉⁻¹(L̂₁))]`.  The
//! symmetry report checks the modular sandwich `L̄̂ = Δ̄̂ L̂ Δ̄̂` together with
//! its block-wise consequences; the conjunction certifies KMS symmetry of
//! the semigroup `Φ_t = e^{−tℒ}` in the bimodule sense.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matcore::{
    cr, dagger, expm, eye, frob, herm_eig, herm_residual, kron, mat_pow, mat_unit,
    range_projection, schur, svd, unvec, vec_mat, zeros, CMat, CVec, C_I, C_ZERO,
};
use crate::tower::{
    channel_apply, channel_dual_apply, full_e1, hat_delta_from_density, hat_e2, hat_from_pair,
    hat_identity_channel, one_star, regroup, ungroup, InclusionModel, ModelKind, ModuleElement,
    RelCommElem,
};

/// Residual level at which a verification entry counts as passing.
const TOL_CHECK: f64 = 1e-9;
/// Level below which a relaxation rate counts as an exact kernel rate.
const RATE_TOL: f64 = 1e-10;

fn herm_part(a: &CMat) -> CMat {
    (a + &dagger(a)).mapv(|z| z * cr(0.5))
}

fn anti_herm_over_2i(a: &CMat) -> CMat {
    (a - &dagger(a)).mapv(|z| z / (cr(2.0) * C_I))
}

/// A bimodule Markov generator, decomposed against the Jones projection.
///
/// All fields are immutable after construction; every verification below is
/// a pure function of them.
#[derive(Debug, Clone)]
pub struct Generator {
    pub model: InclusionModel,
    /// Full generator coefficient `L̂`.
    pub lhat: RelCommElem,
    /// Dirichlet block `L̂₀ = −(1−e₂)L̂(1−e₂)`, positive semidefinite.
    pub l0: RelCommElem,
    /// Off-diagonal block `L̂₁ = e₂L̂(1−e₂)` feeding the weak part.
    pub l1: RelCommElem,
    /// Mirror block `(1−e₂)L̂e₂`.
    pub l1_dual: RelCommElem,
    /// Scalar block `e₂L̂e₂`.
    pub scalar_part: RelCommElem,
    /// `𝐲 = ½(1*L̂₀) + i·Im E_M(𝔉⁻¹(L̂₁))`, the one-sided multiplier of ℒ.
    pub y: CMat,
    /// Modular element `Δ̂` the symmetry is measured against.
    pub delta: RelCommElem,
}

impl Generator {
    /// `1*L̂₀` recovered from the multiplier (`𝐲 + 𝐲†`); Hermitian.
    pub fn one_star_l0(&self) -> CMat {
        &self.y + &dagger(&self.y)
    }

    /// Hermitian weak multiplier `Im 𝐲 = (𝐲 − 𝐲†)/(2i)`.
    pub fn weak_multiplier(&self) -> CMat {
        anti_herm_over_2i(&self.y)
    }

    /// Entrywise relaxation rates of the Laplacian on the diagonal backend:
    /// `c_{jk} = ½(g_{jj} + g_{kk}) − g_{jk}` with `g = √n·L̂₀`.
    pub fn schur_rates(&self) -> Result<CMat> {
        if !self.model.is_diag() {
            return Err(Error::UnsupportedTarget {
                target: "entrywise rates exist only for the diagonal-inclusion backend".into(),
            });
        }
        let n = self.model.n;
        let g = self.l0.y.mapv(|z| z * cr((n as f64).sqrt()));
        let mut c = zeros(n);
        for j in 0..n {
            for k in 0..n {
                c[[j, k]] = cr(0.5) * (g[[j, j]] + g[[k, k]]) - g[[j, k]];
            }
        }
        Ok(c)
    }

    /// Entrywise rates of the full generator on the diagonal backend.  Every
    /// commutant coefficient acts entrywise there, so `ℒ(x)_{jk} =
    /// √n·L̂_{jk}·x_{jk}` and `e^{−tℒ}` multiplies each entry by
    /// `exp(−t√n·L̂_{jk})`.
    fn full_rates(&self) -> Result<CMat> {
        if !self.model.is_diag() {
            return Err(Error::UnsupportedTarget {
                target: "entrywise rates exist only for the diagonal-inclusion backend".into(),
            });
        }
        let sqn = cr((self.model.n as f64).sqrt());
        Ok(self.lhat.y.mapv(|z| z * sqn))
    }
}

/// `E_M(𝔉⁻¹(Y))` for a commutant coefficient `Y`.
///
/// On the diagonal backend this is the closed column-sum form; on the matrix
/// backend it is evaluated through the bimodule carrier of `e₁`: the inverse
/// transform of `Y` has carrier `λ^{−1/2}·(Y acting on the carrier of e₁)`.
pub(crate) fn fourier_inv_em(model: &InclusionModel, y: &RelCommElem) -> Result<CMat> {
    match model.kind {
        ModelKind::DiagInMatn => crate::tower::e_m_fourier_inv(model, y),
        ModelKind::FullMat => {
            let d = model.n;
            let e1m = ModuleElement::from_mat(model, full_e1(d))?;
            let carrier = e1m.hat_action(y).scale(cr(1.0 / model.lambda.sqrt()));
            Ok(carrier.e_m())
        }
    }
}

/// Split a generator coefficient into its `e₂`-blocks and assemble the
/// one-sided multiplier `𝐲`.
pub fn decompose(
    model: &InclusionModel,
    lhat: &RelCommElem,
    delta: &RelCommElem,
) -> Result<Generator> {
    if !lhat.y.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::InvalidParameters {
            reason: "generator coefficient contains non-finite entries".into(),
        });
    }
    let e2 = hat_e2(model);
    let le2 = lhat.op_mul(&e2)?;
    let e2l = e2.op_mul(lhat)?;
    let scalar = e2.op_mul(&le2)?;
    let l1 = e2l.sub(&scalar)?;
    let l1_dual = le2.sub(&scalar)?;
    // L̂₀ = −(L̂ − e₂L̂ − L̂e₂ + e₂L̂e₂).
    let l0 = lhat.sub(&e2l)?.sub(&le2)?.add(&scalar)?.scale(cr(-1.0));

    let min_eig = herm_eig(&herm_part(&l0.y))?.min_eig();
    if min_eig < -TOL_CHECK {
        return Err(Error::NegativeL0 { min_eig });
    }

    let a = one_star(model, &l0)?;
    let m_fi = fourier_inv_em(model, &l1)?;
    let y = a.mapv(|z| z * cr(0.5)) + anti_herm_over_2i(&m_fi).mapv(|z| z * C_I);

    Ok(Generator {
        model: model.clone(),
        lhat: lhat.clone(),
        l0,
        l1,
        l1_dual,
        scalar_part: scalar,
        y,
        delta: delta.clone(),
    })
}

/// Apply the Laplacian part `ℒ_a(x) = ½(1*L̂₀)x + ½x(1*L̂₀) − x*L̂₀`.
pub fn laplacian_apply(gen: &Generator, x: &CMat) -> Result<CMat> {
    if gen.model.is_diag() {
        let c = gen.schur_rates()?;
        return Ok(schur(&c, x));
    }
    let a = gen.one_star_l0();
    Ok((a.dot(x) + x.dot(&a)).mapv(|z| z * cr(0.5)) - channel_apply(&gen.model, &gen.l0, x)?)
}

/// Apply the trace-pairing adjoint of the Laplacian part.
pub fn laplacian_dual_apply(gen: &Generator, y: &CMat) -> Result<CMat> {
    if gen.model.is_diag() {
        let c = gen.schur_rates()?;
        let cbar = c.mapv(|z| z.conj());
        return Ok(schur(&cbar, y));
    }
    let a = gen.one_star_l0();
    Ok((a.dot(y) + y.dot(&a)).mapv(|z| z * cr(0.5)) - channel_dual_apply(&gen.model, &gen.l0, y)?)
}

/// Apply the weak part `ℒ_w(x) = i[x, Im 𝐲]`.
pub fn weak_part_apply(gen: &Generator, x: &CMat) -> CMat {
    let h = gen.weak_multiplier();
    (x.dot(&h) - h.dot(x)).mapv(|z| z * C_I)
}

/// Apply the full generator `ℒ = ℒ_a + ℒ_w` through its defining bimodule
/// action (the coefficient `L̂` acting as an entrywise/block multiplier).
pub fn generator_apply(gen: &Generator, x: &CMat) -> Result<CMat> {
    channel_apply(&gen.model, &gen.lhat, x)
}

/// Apply the trace-pairing adjoint of the full generator.
pub fn generator_dual_apply(gen: &Generator, y: &CMat) -> Result<CMat> {
    channel_dual_apply(&gen.model, &gen.lhat, y)
}

/// Gradient form `Γ(x,y) = ½(y†ℒ(x) + ℒ(y)†x − ℒ(y†x))`.
pub fn gradient_form(gen: &Generator, x: &CMat, y: &CMat) -> Result<CMat> {
    let lx = generator_apply(gen, x)?;
    let ly = generator_apply(gen, y)?;
    let lyx = generator_apply(gen, &dagger(y).dot(x))?;
    Ok((dagger(y).dot(&lx) + dagger(&ly).dot(x) - lyx).mapv(|z| z * cr(0.5)))
}

/// Same form with only the Laplacian part substituted; agrees with
/// [`gradient_form`] because the weak part is a derivation.
pub fn gradient_form_laplacian(gen: &Generator, x: &CMat, y: &CMat) -> Result<CMat> {
    let lx = laplacian_apply(gen, x)?;
    let ly = laplacian_apply(gen, y)?;
    let lyx = laplacian_apply(gen, &dagger(y).dot(x))?;
    Ok((dagger(y).dot(&lx) + dagger(&ly).dot(x) - lyx).mapv(|z| z * cr(0.5)))
}

/// One verification entry: a pass flag plus the measured residual.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct CheckEntry {
    pub pass: bool,
    pub residual: f64,
}

impl CheckEntry {
    fn new(residual: f64) -> Self {
        CheckEntry { pass: residual <= TOL_CHECK, residual }
    }
}

/// Result of the symmetry verification battery.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SymmetryReport {
    /// Δ̂ is Hermitian and positive semidefinite.
    pub delta_positive: CheckEntry,
    /// Δ̂e₂ = e₂.
    pub delta_fixes_e2: CheckEntry,
    /// Δ̂-transpose agrees with Δ̂⁻¹ on the range of L̂.
    pub range_condition: CheckEntry,
    /// Full modular sandwich `L̄̂ = Δ̄̂ L̂ Δ̄̂`.
    pub sandwich: CheckEntry,
    /// Block consequence for L̂₀.
    pub part_l0: CheckEntry,
    /// Block consequence for L̂₁: `(L̄̂₁)† = L̂₁Δ̄̂`.
    pub part_l1: CheckEntry,
    /// Compatibility of the multiplier 𝐲 with Δ̂.
    pub y_condition: CheckEntry,
    /// The Laplacian semigroup preserves the trace functional (or the
    /// supplied reference state).
    pub equilibrium: CheckEntry,
    /// Diagnostic only: whether `[L̂, Δ̂] = 0` (commutation-symmetric case).
    pub gns_commutation_diagnostic: CheckEntry,
    /// Relative ergodicity (kernel of ℒ_a is exactly the small algebra).
    pub relatively_ergodic: CheckEntry,
    /// Dimension of the fixed-point space of the Laplacian semigroup.
    pub fixed_point_dim: usize,
}

impl SymmetryReport {
    /// Flat `key → {pass, residual}` record (the dimension entry is a bare
    /// integer).  Key order is fixed for byte-stable output.
    pub fn to_flat(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        let mut put = |k: &str, e: &CheckEntry| {
            map.insert(
                k.to_string(),
                serde_json::json!({"pass": e.pass, "residual": e.residual}),
            );
        };
        put("delta_positive", &self.delta_positive);
        put("delta_fixes_e2", &self.delta_fixes_e2);
        put("range_condition", &self.range_condition);
        put("sandwich", &self.sandwich);
        put("part_l0", &self.part_l0);
        put("part_l1", &self.part_l1);
        put("y_condition", &self.y_condition);
        put("equilibrium", &self.equilibrium);
        put("gns_commutation_diagnostic", &self.gns_commutation_diagnostic);
        put("relatively_ergodic", &self.relatively_ergodic);
        map.insert("fixed_point_dim".to_string(), serde_json::json!(self.fixed_point_dim));
        serde_json::Value::Object(map)
    }

    /// The conjunction that constitutes verified KMS symmetry (the
    /// commutation diagnostic and ergodicity are informational).
    pub fn kms_pass(&self) -> bool {
        self.delta_positive.pass
            && self.delta_fixes_e2.pass
            && self.range_condition.pass
            && self.sandwich.pass
            && self.part_l0.pass
            && self.part_l1.pass
            && self.y_condition.pass
            && self.equilibrium.pass
    }
}

/// Run the full verification battery against the τ-trace reading of
/// equilibrium.
pub fn verify_kms(gen: &Generator) -> Result<SymmetryReport> {
    verify_kms_with_state(gen, None)
}

/// Verification battery; `state` overrides the equilibrium reading with a
/// reference density (residual `‖ℒ*(ρ)‖`), for semigroups stationary with
/// respect to a non-tracial state.
pub fn verify_kms_with_state(gen: &Generator, state: Option<&CMat>) -> Result<SymmetryReport> {
    let model = &gen.model;
    let m = model.hat_dim();
    let dy = &gen.delta.y;

    // Δ̂ Hermitian positive.
    let dh = herm_part(dy);
    let delta_positive =
        CheckEntry::new(herm_residual(dy) + (-herm_eig(&dh)?.min_eig()).max(0.0));

    // Δ̂e₂ = e₂.
    let e2 = hat_e2(model);
    let delta_fixes_e2 = CheckEntry::new(frob(&(&gen.delta.op_mul(&e2)?.y - &e2.y)));

    // Range condition: P_{𝓡(L̂)}(Δ̄̂ − Δ̂⁻¹) = 0.
    let norm_l = frob(&gen.lhat.y).max(1.0);
    let pr = range_projection(&gen.lhat.y);
    let dinv = mat_pow(&dh, -1.0)?;
    let dbar = gen.delta.contragredient();
    let range_condition =
        CheckEntry::new(frob(&pr.dot(&(&dbar.y - &dinv))) / frob(dy).max(1.0));

    // Full sandwich and its block consequences.
    let sandwich_defect = |z: &RelCommElem| -> Result<CMat> {
        let lhs = z.contragredient();
        let rhs = dbar.op_mul(z)?.op_mul(&dbar)?;
        Ok(&lhs.y - &rhs.y)
    };
    let sw = sandwich_defect(&gen.lhat)?;
    let sandwich = CheckEntry::new(frob(&sw) / norm_l);
    let part_l0 =
        CheckEntry::new(frob(&sandwich_defect(&gen.l0)?) / frob(&gen.l0.y).max(1.0));
    let lhs1 = gen.l1.contragredient().dagger();
    let rhs1 = gen.l1.op_mul(&dbar)?;
    let part_l1 =
        CheckEntry::new(frob(&(&lhs1.y - &rhs1.y)) / frob(&gen.l1.y).max(1.0));

    // Multiplier condition.
    let y_condition = match model.kind {
        ModelKind::DiagInMatn => {
            // Δ̂ᵀ applied to the diagonal vector of 𝐲† returns that of 𝐲.
            let n = model.n;
            let mut r = 0.0f64;
            for j in 0..n {
                let mut lhs = C_ZERO;
                for k in 0..n {
                    lhs += dy[[k, j]] * gen.y[[k, k]].conj();
                }
                r += (lhs - gen.y[[j, j]]).norm_sqr();
            }
            CheckEntry::new(r.sqrt() / frob(&gen.y).max(1.0))
        }
        ModelKind::FullMat => {
            // The blocks of the sandwich defect that touch e₂.
            let one_minus = eye(m) - &e2.y;
            let interior = one_minus.dot(&sw).dot(&one_minus);
            CheckEntry::new(frob(&(&sw - &interior)) / norm_l)
        }
    };

    // Equilibrium.
    let equilibrium = match state {
        Some(rho) => {
            CheckEntry::new(frob(&generator_dual_apply(gen, rho)?) / frob(rho).max(1.0))
        }
        None => {
            let id = eye(model.n);
            let r1 = frob(&laplacian_dual_apply(gen, &id)?);
            let phi = laplacian_semigroup_dual_apply(gen, 0.7, &id)?;
            let r2 = frob(&(&phi - &id));
            CheckEntry::new(r1 + r2)
        }
    };

    // Commutation diagnostic.
    let comm = gen.lhat.y.dot(dy) - dy.dot(&gen.lhat.y);
    let gns_commutation_diagnostic =
        CheckEntry::new(frob(&comm) / (norm_l * frob(dy).max(1.0)));

    // Ergodicity.
    let (ergodic, kernel) = relative_ergodicity(gen)?;
    let p_fwd = range_projection(&gen.l0.y);
    let p_bwd = range_projection(&gen.l0.contragredient().y);
    let relatively_ergodic =
        CheckEntry { pass: ergodic, residual: frob(&(&p_fwd - &p_bwd)) };

    Ok(SymmetryReport {
        delta_positive,
        delta_fixes_e2,
        range_condition,
        sandwich,
        part_l0,
        part_l1,
        y_condition,
        equilibrium,
        gns_commutation_diagnostic,
        relatively_ergodic,
        fixed_point_dim: kernel.len(),
    })
}

/// Build a generator from a normalized Dirichlet block:
/// `L̂ = λ^{−1/2}e₂ − L̂₀`.
///
/// `q` is a positive element of the small relative commutant fixed by the
/// dual of the channel of `L̂₀`.
pub fn build_from_l0(
    model: &InclusionModel,
    l0: &RelCommElem,
    delta: &RelCommElem,
    q: &CMat,
) -> Result<Generator> {
    let fail = |identity: &str, residual: f64| -> Error {
        Error::PreconditionViolated { identity: identity.to_string(), residual }
    };

    let min_eig = herm_eig(&herm_part(&l0.y))?.min_eig();
    let r = herm_residual(&l0.y) + (-min_eig).max(0.0);
    if r > TOL_CHECK {
        return Err(fail("L0 is Hermitian positive semidefinite", r));
    }

    let e2 = hat_e2(model);
    let r = frob(&l0.op_mul(&e2)?.y);
    if r > TOL_CHECK {
        return Err(fail("L0 annihilates e2", r));
    }

    let a = one_star(model, l0)?;
    let r = frob(&(&a - &eye(model.n)));
    if r > TOL_CHECK {
        return Err(fail("unit contraction of L0 equals the identity", r));
    }

    // q positive in the small relative commutant, fixed by the dual channel.
    if model.is_diag() {
        let mut off = 0.0f64;
        for j in 0..model.n {
            for k in 0..model.n {
                if j != k {
                    off += q[[j, k]].norm_sqr();
                }
            }
        }
        if off.sqrt() > TOL_CHECK {
            return Err(fail("q lies in the small relative commutant", off.sqrt()));
        }
    }
    let q_min = herm_eig(&herm_part(q))?.min_eig();
    let r = herm_residual(q) + if q_min <= 0.0 { 1.0 } else { 0.0 };
    if r > TOL_CHECK {
        return Err(fail("q is positive definite", r));
    }
    let r = frob(&(&channel_dual_apply(model, l0, q)? - q)) / frob(q).max(1.0);
    if r > TOL_CHECK {
        return Err(fail("q is fixed by the dual channel of L0", r));
    }

    let dbar = delta.contragredient();
    let rhs = dbar.op_mul(l0)?.op_mul(&dbar)?;
    let r = frob(&(&l0.contragredient().y - &rhs.y)) / frob(&l0.y).max(1.0);
    if r > TOL_CHECK {
        return Err(fail("modular sandwich of L0", r));
    }

    let lhat = hat_identity_channel(model).sub(l0)?;
    decompose(model, &lhat, delta)
}

/// Build a generator by modular dressing of a symmetric block:
/// `L̂ = λ^{−1/2}e₂ − Δ̂^{1/2}H₀Δ̂^{1/2}`.
///
/// The dressed block must have unit contraction one so that the resulting
/// channel fixes the identity; the modular sandwich then holds identically
/// because conjugating `Δ̂^{1/2}H₀Δ̂^{1/2}` by `Δ̂̄ = Δ̂⁻¹` reproduces its
/// contragredient whenever `H₀` is contragredient-symmetric.
pub fn build_sandwich(
    model: &InclusionModel,
    h0: &RelCommElem,
    delta: &RelCommElem,
) -> Result<Generator> {
    let fail = |identity: &str, residual: f64| -> Error {
        Error::PreconditionViolated { identity: identity.to_string(), residual }
    };

    let min_eig = herm_eig(&herm_part(&h0.y))?.min_eig();
    let r = herm_residual(&h0.y) + (-min_eig).max(0.0);
    if r > TOL_CHECK {
        return Err(fail("H0 is Hermitian positive semidefinite", r));
    }

    let e2 = hat_e2(model);
    let r = frob(&h0.op_mul(&e2)?.y);
    if r > TOL_CHECK {
        return Err(fail("H0 annihilates e2", r));
    }

    let r = frob(&(&h0.contragredient().y - &h0.y)) / frob(&h0.y).max(1.0);
    if r > TOL_CHECK {
        return Err(fail("H0 is contragredient-symmetric", r));
    }

    let dh = herm_part(&delta.y);
    let d_min = herm_eig(&dh)?.min_eig();
    if herm_residual(&delta.y) > TOL_CHECK || d_min <= 0.0 {
        return Err(fail(
            "delta is positive definite",
            herm_residual(&delta.y) + (-d_min).max(0.0),
        ));
    }
    let dinv = mat_pow(&dh, -1.0)?;
    let r = frob(&(&delta.contragredient().y - &dinv)) / frob(&delta.y).max(1.0);
    if r > TOL_CHECK {
        return Err(fail("delta contragredient equals delta inverse", r));
    }
    let r = frob(&(&delta.op_mul(&e2)?.y - &e2.y));
    if r > TOL_CHECK {
        return Err(fail("delta fixes e2", r));
    }

    let d_phalf = mat_pow(&dh, 0.5)?;
    let dressed = RelCommElem::new(model, d_phalf.dot(&h0.y).dot(&d_phalf))?;
    let r = frob(&(&one_star(model, &dressed)? - &eye(model.n)));
    if r > TOL_CHECK {
        return Err(fail("dressed H0 has unit contraction one", r));
    }

    let lhat = e2.scale(cr(1.0 / model.lambda.sqrt())).sub(&dressed)?;
    decompose(model, &lhat, delta)
}

/// Three-point inclusion example: a modular element with circulant spectral
/// projections and a two-parameter quadratic form, producing a modularly
/// symmetric generator that does not commute with the modular element.
pub fn build_example_n3(mu: f64) -> Result<Generator> {
    example_n3_impl(mu, false)
}

/// Variant with the circulant quadratic form `(2/(μ+μ⁻¹))·(1 − cycle)`; the
/// generator commutes with the modular element, so it satisfies the stronger
/// commuting symmetry in addition to the modular sandwich.
pub fn build_example_n3_gns(mu: f64) -> Result<Generator> {
    example_n3_impl(mu, true)
}

fn example_n3_impl(mu: f64, gns: bool) -> Result<Generator> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidMu { mu });
    }
    let n = 3usize;
    let model = InclusionModel::diag_in_matn(n)?;

    // Spectral projections of the cyclic shift: (P_m)_{jk} = ω^{m(k−j)}/3.
    let mut p = vec![zeros(n), zeros(n), zeros(n)];
    for (m, pm) in p.iter_mut().enumerate() {
        for j in 0..n {
            for k in 0..n {
                let e = (m * ((k + 3 - j) % 3)) % 3;
                let phase = 2.0 * std::f64::consts::PI * (e as f64) / 3.0;
                pm[[j, k]] = Complex64::from_polar(1.0 / 3.0, phase);
            }
        }
    }
    let delta_mat = &p[0] + &p[1].mapv(|z| z * cr(mu)) + &p[2].mapv(|z| z * cr(1.0 / mu));
    let delta = RelCommElem::new(&model, delta_mat.clone())?;

    let h_mat = if gns {
        let s = 2.0 / (mu + 1.0 / mu);
        let mut h = zeros(n);
        for j in 0..n {
            for k in 0..n {
                h[[j, k]] = if j == k { cr(s) } else { cr(-0.5 * s) };
            }
        }
        h
    } else {
        let mut h = zeros(n);
        h[[0, 0]] = cr(1.0);
        h[[1, 1]] = cr(0.5);
        h[[2, 2]] = cr(0.5);
        h[[0, 1]] = cr(-0.5);
        h[[1, 0]] = cr(-0.5);
        h[[0, 2]] = cr(-0.5);
        h[[2, 0]] = cr(-0.5);
        h
    };

    let d_phalf = mat_pow(&herm_part(&delta_mat), 0.5)?;
    let l0 = RelCommElem::new(&model, d_phalf.dot(&h_mat).dot(&d_phalf))?;

    let a = one_star(&model, &l0)?;
    let hc = if gns { 0.0 } else { (1.0 - mu) / (4.0 * (1.0 + mu)) };
    let mut y = a.mapv(|z| z * cr(0.5));
    y[[1, 1]] -= C_I * cr(hc);
    y[[2, 2]] += C_I * cr(hc);

    // L̂ = (𝐲-edge terms) − L̂₀; on the diagonal backend the two one-sided
    // edge terms contribute (conj(𝐲_j) + 𝐲_k)/√n at entry (j,k).
    let sqn = (n as f64).sqrt();
    let mut lhat_mat = zeros(n);
    for j in 0..n {
        for k in 0..n {
            lhat_mat[[j, k]] = (y[[j, j]].conj() + y[[k, k]]) / cr(sqn) - l0.y[[j, k]];
        }
    }
    let lhat = RelCommElem::new(&model, lhat_mat)?;
    decompose(&model, &lhat, &delta)
}

/// Build the jump-operator model on the matrix backend: the completely
/// positive block `H₀ = Σ_j (v_j, v_j†)-pair` is dressed by the modular
/// element of `ρ` and convolved back against `H₀` itself.
pub fn build_carlen_maas(
    jump_ops: &[CMat],
    rho: &CMat,
    delta_exponent: f64,
) -> Result<Generator> {
    let d = rho.nrows();
    let model = InclusionModel::full_mat(d)?;
    if jump_ops.is_empty() {
        return Err(Error::InvalidParameters { reason: "no jump operators supplied".into() });
    }
    for v in jump_ops {
        if v.nrows() != d || v.ncols() != d {
            return Err(Error::ModelMismatch {
                left: format!("{}×{} jump operator", v.nrows(), v.ncols()),
                right: format!("{0}×{0} model", d),
            });
        }
    }
    if !delta_exponent.is_finite() {
        return Err(Error::InvalidParameters { reason: "non-finite modular exponent".into() });
    }

    // Σ v†v = 1.
    let mut s = zeros(d);
    for v in jump_ops {
        s = s + dagger(v).dot(v);
    }
    let r = frob(&(&s - &eye(d)));
    if r > TOL_CHECK {
        return Err(Error::ConstraintViolated {
            constraint: "sum of v†v equals the identity".into(),
            residual: r,
        });
    }

    // ρ strictly positive; normalize to the τ-unit scale (trace d).
    let rho_h = herm_part(rho);
    let eig = herm_eig(&rho_h)?;
    let r = herm_residual(rho);
    if r > TOL_CHECK || eig.min_eig() <= 1e-12 * eig.max_eig().max(1.0) {
        return Err(Error::ConstraintViolated {
            constraint: "rho is strictly positive".into(),
            residual: r + (-eig.min_eig()).max(0.0),
        });
    }
    let tr: Complex64 = (0..d).map(|j| rho_h[[j, j]]).sum();
    let rho_n = rho_h.mapv(|z| z * cr(d as f64) / tr);

    // Σ vρv† = ρ.
    let mut fix = zeros(d);
    for v in jump_ops {
        fix = fix + v.dot(&rho_n).dot(&dagger(v));
    }
    let r = frob(&(&fix - &rho_n)) / frob(&rho_n).max(1.0);
    if r > TOL_CHECK {
        return Err(Error::ConstraintViolated {
            constraint: "jump operators fix rho".into(),
            residual: r,
        });
    }

    let mut h0 = RelCommElem::new(&model, zeros(d * d))?;
    for v in jump_ops {
        h0 = h0.add(&hat_from_pair(&model, v, &dagger(v))?)?;
    }
    let delta = hat_delta_from_density(&model, &rho_n, delta_exponent)?;

    let dressed = delta.op_mul(&h0.contragredient())?.op_mul(&delta)?;
    let k = conv_hats(&model, &dressed, &h0);
    let lhat = hat_identity_channel(&model).sub(&k)?;
    let gen = decompose(&model, &lhat, &delta)?;

    // Certify the construction: ℒ(1) = 0 and ℒ*(ρ) = 0.
    let r1 = frob(&generator_apply(&gen, &eye(d))?);
    if r1 > TOL_CHECK {
        return Err(Error::ConstraintViolated {
            constraint: "constructed generator is unital".into(),
            residual: r1,
        });
    }
    let r2 = frob(&generator_dual_apply(&gen, &rho_n)?) / frob(&rho_n).max(1.0);
    if r2 > TOL_CHECK {
        return Err(Error::ConstraintViolated {
            constraint: "constructed generator is stationary for rho".into(),
            residual: r2,
        });
    }
    Ok(gen)
}

/// Convolution of two matrix-backend coefficients: the coefficient of the
/// composed bimodule maps, `Φ_{x*y} = Φ_x ∘ Φ_y` (link product of the block
/// matrices; the `e₂`-normalized identity coefficient is its unit).
fn conv_hats(model: &InclusionModel, x: &RelCommElem, y: &RelCommElem) -> RelCommElem {
    let d = model.n;
    let mut u = zeros(d * d);
    for j in 0..d {
        for r in 0..d {
            for k in 0..d {
                for s in 0..d {
                    let mut acc = C_ZERO;
                    for a in 0..d {
                        for b in 0..d {
                            acc += y.y[[j * d + a, k * d + b]] * x.y[[a * d + r, b * d + s]];
                        }
                    }
                    u[[j * d + r, k * d + s]] = acc;
                }
            }
        }
    }
    RelCommElem { kind: model.kind, n: d, y: u }
}

/// Apply `Φ_t = e^{−tℒ}` to `x`.
pub fn semigroup_apply(gen: &Generator, t: f64, x: &CMat) -> Result<CMat> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::NegativeTime { t });
    }
    if gen.model.is_diag() {
        let rates = gen.full_rates()?;
        let mut out = x.clone();
        for j in 0..gen.model.n {
            for k in 0..gen.model.n {
                out[[j, k]] *= (rates[[j, k]] * cr(-t)).exp();
            }
        }
        return Ok(out);
    }
    let s = regroup(&gen.lhat.y, gen.model.n);
    let e = expm(&s.mapv(|z| z * cr(-t)));
    Ok(unvec(&e.dot(&vec_mat(x)), gen.model.n))
}

/// Apply the trace-pairing dual `Φ_t^* = e^{−tℒ*}`.
pub fn semigroup_dual_apply(gen: &Generator, t: f64, y: &CMat) -> Result<CMat> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::NegativeTime { t });
    }
    if gen.model.is_diag() {
        let rates = gen.full_rates()?;
        let mut out = y.clone();
        for j in 0..gen.model.n {
            for k in 0..gen.model.n {
                out[[j, k]] *= (rates[[j, k]].conj() * cr(-t)).exp();
            }
        }
        return Ok(out);
    }
    let s = regroup(&gen.lhat.y, gen.model.n);
    let e = expm(&dagger(&s).mapv(|z| z * cr(-t)));
    Ok(unvec(&e.dot(&vec_mat(y)), gen.model.n))
}

/// Apply the Laplacian semigroup `Φ_t^{(a)} = e^{−tℒ_a}`.
pub fn laplacian_semigroup_apply(gen: &Generator, t: f64, x: &CMat) -> Result<CMat> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::NegativeTime { t });
    }
    if gen.model.is_diag() {
        let c = gen.schur_rates()?;
        let mut out = x.clone();
        for j in 0..gen.model.n {
            for k in 0..gen.model.n {
                out[[j, k]] *= (c[[j, k]] * cr(-t)).exp();
            }
        }
        return Ok(out);
    }
    let s = laplacian_superop(gen)?;
    let e = expm(&s.mapv(|z| z * cr(-t)));
    Ok(unvec(&e.dot(&vec_mat(x)), gen.model.n))
}

/// Apply the dual of the Laplacian semigroup.
pub fn laplacian_semigroup_dual_apply(gen: &Generator, t: f64, y: &CMat) -> Result<CMat> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::NegativeTime { t });
    }
    if gen.model.is_diag() {
        let c = gen.schur_rates()?;
        let mut out = y.clone();
        for j in 0..gen.model.n {
            for k in 0..gen.model.n {
                out[[j, k]] *= (c[[j, k]].conj() * cr(-t)).exp();
            }
        }
        return Ok(out);
    }
    let s = laplacian_superop(gen)?;
    let e = expm(&dagger(&s).mapv(|z| z * cr(-t)));
    Ok(unvec(&e.dot(&vec_mat(y)), gen.model.n))
}

/// Row-major-vectorized matrix of ℒ_a on the matrix backend:
/// `½(a⊗I + I⊗aᵀ) − S(L̂₀)` where `S` is the channel shuffle of the block
/// coefficient and `a = 1*L̂₀`.
pub(crate) fn laplacian_superop(gen: &Generator) -> Result<CMat> {
    let d = gen.model.n;
    let a = gen.one_star_l0();
    let id = eye(d);
    let at = a.t().mapv(|z| z);
    let mult = (kron(&a, &id) + kron(&id, &at)).mapv(|z| z * cr(0.5));
    Ok(&mult - &regroup(&gen.l0.y, d))
}

/// Decide relative ergodicity and return a basis of the fixed-point space
/// of the Laplacian semigroup.
///
/// Requires the forward and contragredient Dirichlet blocks to span the
/// same range, and the kernel of ℒ_a to be exactly the small algebra.
pub fn relative_ergodicity(gen: &Generator) -> Result<(bool, Vec<CMat>)> {
    let p_fwd = range_projection(&gen.l0.y);
    let p_bwd = range_projection(&gen.l0.contragredient().y);
    let range_ok = frob(&(&p_fwd - &p_bwd)) <= TOL_CHECK;

    if gen.model.is_diag() {
        let n = gen.model.n;
        let c = gen.schur_rates()?;
        let mut basis = Vec::new();
        let mut off_kernel = false;
        for j in 0..n {
            for k in 0..n {
                if c[[j, k]].norm() <= RATE_TOL {
                    basis.push(mat_unit(n, j, k));
                    if j != k {
                        off_kernel = true;
                    }
                }
            }
        }
        return Ok((range_ok && !off_kernel, basis));
    }

    let d = gen.model.n;
    let s = laplacian_superop(gen)?;
    let basis = nullspace_mats(&s, d);
    // The small algebra is the scalars: ergodic exactly when the kernel is
    // one-dimensional (the identity is always fixed).
    Ok((range_ok && basis.len() == 1, basis))
}

/// Orthonormal kernel vectors of a superoperator matrix, reshaped to
/// matrices.
fn nullspace_mats(s: &CMat, d: usize) -> Vec<CMat> {
    nullspace_vecs(s).into_iter().map(|v| unvec(&v, d)).collect()
}

fn nullspace_vecs(s: &CMat) -> Vec<CVec> {
    let dec = svd(s);
    let smax = dec.s.iter().cloned().fold(0.0f64, f64::max);
    let cut = (1e-10 * smax).max(1e-12);
    let mut out = Vec::new();
    for (i, &sv) in dec.s.iter().enumerate() {
        if sv <= cut {
            out.push(dec.v.column(i).to_owned());
        }
    }
    out
}

/// Long-time limit of the Laplacian semigroup as a commutant coefficient.
///
/// Exists when every relaxation rate has nonnegative real part and no
/// purely oscillatory rate survives; the ergodic diagonal case returns the
/// coefficient of the conditional expectation onto the small algebra.
pub fn limit_f(gen: &Generator) -> Result<RelCommElem> {
    if gen.model.is_diag() {
        let n = gen.model.n;
        let c = gen.schur_rates()?;
        let mut f = zeros(n);
        for j in 0..n {
            for k in 0..n {
                let z = c[[j, k]];
                if z.re < -RATE_TOL {
                    return Err(Error::NotErgodic {
                        reason: format!(
                            "relaxation rate at ({j},{k}) has negative real part {:.3e}",
                            z.re
                        ),
                    });
                }
                if z.norm() <= RATE_TOL {
                    f[[j, k]] = cr(1.0 / (n as f64).sqrt());
                } else if z.re <= RATE_TOL {
                    return Err(Error::NotErgodic {
                        reason: format!("purely oscillatory relaxation rate at ({j},{k})"),
                    });
                }
            }
        }
        return RelCommElem::new(&gen.model, f);
    }

    let d = gen.model.n;
    let s = laplacian_superop(gen)?;
    let right = nullspace_vecs(&s);
    let left = nullspace_vecs(&dagger(&s));
    if right.is_empty() || right.len() != left.len() {
        return Err(Error::NotErgodic {
            reason: "kernel and co-kernel of the Laplacian differ in dimension".into(),
        });
    }
    let k = right.len();
    let mut v = CMat::zeros((d * d, k));
    let mut u = CMat::zeros((d * d, k));
    for (i, (rv, lv)) in right.iter().zip(left.iter()).enumerate() {
        for r in 0..d * d {
            v[[r, i]] = rv[r];
            u[[r, i]] = lv[r];
        }
    }
    let g = dagger(&u).dot(&v);
    let gd = svd(&g);
    let gmin = gd.s.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(gmin > 1e-8) {
        return Err(Error::NotErgodic { reason: "defective kernel pairing".into() });
    }
    let mut ginv = zeros(k);
    for i in 0..k {
        for j in 0..k {
            let mut acc = C_ZERO;
            for l in 0..k {
                acc += gd.v[[i, l]] * gd.u[[j, l]].conj() / cr(gd.s[l]);
            }
            ginv[[i, j]] = acc;
        }
    }
    let p = v.dot(&ginv).dot(&dagger(&u));
    let sn = frob(&s).max(1.0);
    if frob(&s.dot(&p)) / sn > 1e-8 || frob(&p.dot(&s)) / sn > 1e-8 {
        return Err(Error::NotErgodic {
            reason: "spectral projection does not annihilate the Laplacian".into(),
        });
    }
    // Confirm the semigroup actually converges to the projection: square
    // e^{−S/‖S‖} thirty times (time horizon 2³⁰/‖S‖), which crushes every
    // decaying mode while leaving oscillatory ones at unit size.
    let mut e = expm(&s.mapv(|z| z * cr(-1.0 / sn)));
    for _ in 0..30 {
        e = e.dot(&e);
    }
    if frob(&(&e - &p)) > 1e-5 {
        return Err(Error::NotErgodic {
            reason: "Laplacian semigroup does not converge to its kernel projection".into(),
        });
    }
    RelCommElem::new(&gen.model, ungroup(&p, d))
}

// ---------------------------------------------------------------------------
// tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{
        hs_inner, max_abs_diff, sample_density, sample_hermitian, sample_unitary, trace, Rng,
    };
    use crate::tower::fourier_inv;
    use ndarray::Array2;

    const PI2: f64 = 2.0 * std::f64::consts::PI;

    fn random_mat(rng: &mut Rng, n: usize) -> CMat {
        Array2::from_shape_fn((n, n), |_| rng.cnormal())
    }

    /// Circulant spectral projection `(P_m)_{jk} = ω^{m(k−j)}/n`.
    fn pmat(n: usize, m: usize) -> CMat {
        let mut p = zeros(n);
        for j in 0..n {
            for k in 0..n {
                let e = (m * ((k + n - j) % n)) % n;
                p[[j, k]] =
                    Complex64::from_polar(1.0 / n as f64, PI2 * e as f64 / n as f64);
            }
        }
        p
    }

    /// Circulant with prescribed eigenvalue `d[m]` on the m-th Fourier mode.
    fn circulant_from_modes(modes: &[f64]) -> CMat {
        let n = modes.len();
        let mut out = zeros(n);
        for (m, &dm) in modes.iter().enumerate() {
            out = out + pmat(n, m).mapv(|z| z * cr(dm));
        }
        out
    }

    fn delta3(mu: f64) -> CMat {
        circulant_from_modes(&[1.0, mu, 1.0 / mu])
    }

    /// Independent square root of `delta3` through the mode list.
    fn delta3_half(mu: f64) -> CMat {
        circulant_from_modes(&[1.0, mu.sqrt(), (1.0 / mu).sqrt()])
    }

    /// The two-parameter quadratic form of the three-point model.
    fn h3() -> CMat {
        let mut h = zeros(3);
        h[[0, 0]] = cr(1.0);
        h[[1, 1]] = cr(0.5);
        h[[2, 2]] = cr(0.5);
        h[[0, 1]] = cr(-0.5);
        h[[1, 0]] = cr(-0.5);
        h[[0, 2]] = cr(-0.5);
        h[[2, 0]] = cr(-0.5);
        h
    }

    /// Random positive block supported away from the Jones projection.
    fn away_from_e2_psd(model: &InclusionModel, rng: &mut Rng) -> RelCommElem {
        let dim = model.hat_dim();
        let g = random_mat(rng, dim);
        let gg = dagger(&g).dot(&g);
        let q = eye(dim) - &hat_e2(model).y;
        RelCommElem::new(model, q.dot(&gg).dot(&q)).unwrap()
    }

    /// Thermal qubit with raising/lowering/dephasing jumps fixing
    /// `ρ = diag(4/3, 2/3)`.
    fn thermal_qubit_gen() -> Generator {
        let v1 = mat_unit(2, 0, 1).mapv(|z| z * cr(0.3f64.sqrt()));
        let v2 = mat_unit(2, 1, 0).mapv(|z| z * cr(0.15f64.sqrt()));
        let mut v3 = zeros(2);
        v3[[0, 0]] = cr(0.85f64.sqrt());
        v3[[1, 1]] = cr(0.7f64.sqrt());
        build_carlen_maas(&[v1, v2, v3], &thermal_rho(), 0.5).unwrap()
    }

    fn thermal_rho() -> CMat {
        let mut rho = zeros(2);
        rho[[0, 0]] = cr(4.0 / 3.0);
        rho[[1, 1]] = cr(2.0 / 3.0);
        rho
    }

    // ---------------- decomposition ----------------

    #[test]
    fn decompose_blocks_and_reassembly() {
        let mut rng = Rng::new(11);
        for model in [
            InclusionModel::diag_in_matn(4).unwrap(),
            InclusionModel::full_mat(2).unwrap(),
        ] {
            let dim = model.hat_dim();
            let e2 = hat_e2(&model);
            let a = RelCommElem::new(&model, random_mat(&mut rng, dim)).unwrap();
            let b = RelCommElem::new(&model, random_mat(&mut rng, dim)).unwrap();
            let k = away_from_e2_psd(&model, &mut rng);
            let lhat = e2
                .op_mul(&a)
                .unwrap()
                .add(&b.op_mul(&e2).unwrap())
                .unwrap()
                .sub(&k)
                .unwrap();
            let delta = RelCommElem::new(&model, eye(dim)).unwrap();
            let gen = decompose(&model, &lhat, &delta).unwrap();

            assert!(max_abs_diff(&gen.l0.y, &k.y) < 1e-12, "Dirichlet block recovery");
            // Each block sits on its own corner of the Jones projection.
            assert!(frob(&gen.l0.op_mul(&e2).unwrap().y) < 1e-12);
            assert!(frob(&e2.op_mul(&gen.l0).unwrap().y) < 1e-12);
            assert!(frob(&gen.l1.op_mul(&e2).unwrap().y) < 1e-12);
            assert!(max_abs_diff(&e2.op_mul(&gen.l1).unwrap().y, &gen.l1.y) < 1e-12);
            assert!(frob(&e2.op_mul(&gen.l1_dual).unwrap().y) < 1e-12);
            assert!(
                max_abs_diff(&gen.l1_dual.op_mul(&e2).unwrap().y, &gen.l1_dual.y) < 1e-12
            );
            // The four blocks reassemble the coefficient.
            let back = gen
                .scalar_part
                .add(&gen.l1)
                .unwrap()
                .add(&gen.l1_dual)
                .unwrap()
                .sub(&gen.l0)
                .unwrap();
            assert!(max_abs_diff(&back.y, &lhat.y) < 1e-12, "block reassembly");
        }
    }

    #[test]
    fn decompose_from_l0_form_has_no_weak_block() {
        let mut rng = Rng::new(12);
        for model in [
            InclusionModel::diag_in_matn(3).unwrap(),
            InclusionModel::full_mat(2).unwrap(),
        ] {
            let k = away_from_e2_psd(&model, &mut rng);
            let lhat = hat_identity_channel(&model).sub(&k).unwrap();
            let delta = RelCommElem::new(&model, eye(model.hat_dim())).unwrap();
            let gen = decompose(&model, &lhat, &delta).unwrap();
            assert!(frob(&gen.l1.y) < 1e-12);
            assert!(frob(&gen.l1_dual.y) < 1e-12);
            assert!(
                max_abs_diff(&gen.scalar_part.y, &hat_identity_channel(&model).y) < 1e-12
            );
            assert!(max_abs_diff(&gen.l0.y, &k.y) < 1e-12);
            let a = one_star(&model, &k).unwrap();
            assert!(max_abs_diff(&gen.one_star_l0(), &a) < 1e-12);
            assert!(frob(&gen.weak_multiplier()) < 1e-12);
        }
    }

    #[test]
    fn decompose_rejects_negative_dirichlet_block() {
        let mut rng = Rng::new(13);
        let model = InclusionModel::diag_in_matn(3).unwrap();
        let k = away_from_e2_psd(&model, &mut rng);
        let delta = RelCommElem::new(&model, eye(3)).unwrap();
        match decompose(&model, &k, &delta) {
            Err(Error::NegativeL0 { min_eig }) => assert!(min_eig < -1e-3),
            other => panic!("expected negative-block rejection, got {other:?}"),
        }
    }

    #[test]
    fn decompose_rejects_nonfinite_coefficients() {
        let model = InclusionModel::diag_in_matn(3).unwrap();
        let mut y = zeros(3);
        y[[0, 1]] = Complex64::new(f64::NAN, 0.0);
        let lhat = RelCommElem::new(&model, y).unwrap();
        let delta = RelCommElem::new(&model, eye(3)).unwrap();
        assert!(matches!(
            decompose(&model, &lhat, &delta),
            Err(Error::InvalidParameters { .. })
        ));
    }

    // ---------------- three-point model: pinned values ----------------

    #[test]
    fn example_dirichlet_block_closed_form() {
        for &mu in &[2.0, 0.5, 5.0] {
            let gen = build_example_n3(mu).unwrap();
            let dh = delta3_half(mu);
            let want = dh.dot(&h3()).dot(&dh);
            assert!(max_abs_diff(&gen.l0.y, &want) < 1e-12, "mu={mu}");
            assert!(gen.l0.min_eig().unwrap() > -1e-12);
            let e2 = hat_e2(&gen.model);
            assert!(frob(&gen.l0.op_mul(&e2).unwrap().y) < 1e-12);
            assert!(frob(&e2.op_mul(&gen.l0).unwrap().y) < 1e-12);
        }
    }

    #[test]
    fn example_one_star_pinned_values() {
        for &mu in &[2.0, 5.0, 0.5] {
            let gen = build_example_n3(mu).unwrap();
            let s3 = 3f64.sqrt();
            let scal = (mu + 1.0 / mu) / 3.0;
            let mut want = zeros(3);
            want[[0, 0]] = cr(s3 * (1.0 / 3.0 + scal));
            want[[1, 1]] = cr(s3 * (-1.0 / 6.0 + scal));
            want[[2, 2]] = cr(s3 * (-1.0 / 6.0 + scal));
            let a = one_star(&gen.model, &gen.l0).unwrap();
            assert!(max_abs_diff(&a, &want) < 1e-12, "mu={mu}");
            // The multiplier route recovers the same Hermitian part.
            assert!(max_abs_diff(&gen.one_star_l0(), &want) < 1e-11, "mu={mu}");
        }
    }

    #[test]
    fn example_weak_multiplier_pinned() {
        for &mu in &[2.0, 5.0, 0.5] {
            let gen = build_example_n3(mu).unwrap();
            let hc = (1.0 - mu) / (4.0 * (1.0 + mu));
            let mut want = zeros(3);
            want[[1, 1]] = cr(-hc);
            want[[2, 2]] = cr(hc);
            assert!(max_abs_diff(&gen.weak_multiplier(), &want) < 1e-11, "mu={mu}");
        }
    }

    #[test]
    fn example_rejects_invalid_parameters() {
        for bad in [0.0, -2.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(build_example_n3(bad), Err(Error::InvalidMu { .. })));
            assert!(matches!(build_example_n3_gns(bad), Err(Error::InvalidMu { .. })));
        }
    }

    // ---------------- generator application ----------------

    #[test]
    fn laplacian_fixes_identity_and_scales_matrix_units() {
        let gen = build_example_n3(2.0).unwrap();
        assert!(frob(&laplacian_apply(&gen, &eye(3)).unwrap()) < 1e-12);
        let c = gen.schur_rates().unwrap();
        for j in 0..3 {
            for k in 0..3 {
                let u = mat_unit(3, j, k);
                let lu = laplacian_apply(&gen, &u).unwrap();
                let want = u.mapv(|z| z * c[[j, k]]);
                assert!(max_abs_diff(&lu, &want) < 1e-12);
                assert!(c[[j, k]].re >= -1e-12, "rates have nonnegative real part");
            }
            assert!(c[[j, j]].norm() < 1e-12, "diagonal rates vanish");
        }
    }

    #[test]
    fn laplacian_block_formula_matches_rate_route() {
        let mut rng = Rng::new(21);
        let gen = build_example_n3(2.0).unwrap();
        for _ in 0..5 {
            let x = random_mat(&mut rng, 3);
            let via_rates = laplacian_apply(&gen, &x).unwrap();
            let a = gen.one_star_l0();
            let direct = (a.dot(&x) + x.dot(&a)).mapv(|z| z * cr(0.5))
                - channel_apply(&gen.model, &gen.l0, &x).unwrap();
            assert!(max_abs_diff(&via_rates, &direct) < 1e-11);
        }
    }

    #[test]
    fn generator_splits_into_laplacian_plus_weak() {
        let mut rng = Rng::new(22);
        let diag_gen = build_example_n3(2.0).unwrap();
        let gns = build_example_n3_gns(2.0).unwrap();
        let full_gen = thermal_qubit_gen();
        assert!(frob(&gns.weak_multiplier()) < 1e-12);
        for gen in [&diag_gen, &gns, &full_gen] {
            let n = gen.model.n;
            for _ in 0..5 {
                let x = random_mat(&mut rng, n);
                let full = generator_apply(gen, &x).unwrap();
                let split = laplacian_apply(gen, &x).unwrap() + weak_part_apply(gen, &x);
                assert!(max_abs_diff(&full, &split) < 1e-10, "ℒ = ℒ_a + ℒ_w");
            }
        }
    }

    #[test]
    fn generator_matches_defining_representation() {
        let mut rng = Rng::new(23);
        let gen = build_example_n3(2.0).unwrap();
        let rep = gen.model.rep().unwrap();
        for _ in 0..3 {
            let x = random_mat(&mut rng, 3);
            let via_channel = generator_apply(&gen, &x).unwrap();
            let via_rep = rep.channel_defining(&gen.lhat.y, &x);
            assert!(max_abs_diff(&via_channel, &via_rep) < 1e-10);
        }
    }

    #[test]
    fn duality_pairing_across_backends() {
        let mut rng = Rng::new(24);
        let diag_gen = build_example_n3(2.0).unwrap();
        let full_gen = thermal_qubit_gen();
        for gen in [&diag_gen, &full_gen] {
            let n = gen.model.n;
            for _ in 0..4 {
                let x = random_mat(&mut rng, n);
                let y = random_mat(&mut rng, n);
                let d1 = hs_inner(&laplacian_apply(gen, &x).unwrap(), &y)
                    - hs_inner(&x, &laplacian_dual_apply(gen, &y).unwrap());
                assert!(d1.norm() < 1e-10, "dissipative part duality");
                let d2 = hs_inner(&generator_apply(gen, &x).unwrap(), &y)
                    - hs_inner(&x, &generator_dual_apply(gen, &y).unwrap());
                assert!(d2.norm() < 1e-10, "generator duality");
                let d3 = hs_inner(&semigroup_apply(gen, 0.4, &x).unwrap(), &y)
                    - hs_inner(&x, &semigroup_dual_apply(gen, 0.4, &y).unwrap());
                assert!(d3.norm() < 1e-9, "semigroup duality");
                let d4 = hs_inner(&laplacian_semigroup_apply(gen, 0.4, &x).unwrap(), &y)
                    - hs_inner(&x, &laplacian_semigroup_dual_apply(gen, 0.4, &y).unwrap());
                assert!(d4.norm() < 1e-9, "dissipative semigroup duality");
            }
        }
    }

    #[test]
    fn gradient_form_positivity_and_laplacian_agreement() {
        let mut rng = Rng::new(25);
        let diag_gen = build_example_n3(2.0).unwrap();
        let full_gen = thermal_qubit_gen();
        for gen in [&diag_gen, &full_gen] {
            let n = gen.model.n;
            assert!(frob(&gradient_form(gen, &eye(n), &eye(n)).unwrap()) < 1e-11);
            for _ in 0..4 {
                let x = random_mat(&mut rng, n);
                let y = random_mat(&mut rng, n);
                let g1 = gradient_form(gen, &x, &y).unwrap();
                let g2 = gradient_form_laplacian(gen, &x, &y).unwrap();
                assert!(
                    max_abs_diff(&g1, &g2) < 1e-10,
                    "the derivation part drops out of the squared form"
                );
                let gxx = gradient_form(gen, &x, &x).unwrap();
                assert!(herm_residual(&gxx) < 1e-10);
                assert!(
                    herm_eig(&herm_part(&gxx)).unwrap().min_eig() > -1e-10,
                    "carré du champ is positive"
                );
            }
        }
    }

    #[test]
    fn trace_functional_is_annihilated() {
        let mut rng = Rng::new(53);
        let diag_gen = build_example_n3(2.0).unwrap();
        let gns = build_example_n3_gns(0.5).unwrap();
        for gen in [&diag_gen, &gns] {
            for _ in 0..5 {
                let x = random_mat(&mut rng, gen.model.n);
                assert!(trace(&laplacian_apply(gen, &x).unwrap()).norm() < 1e-11);
                assert!(trace(&generator_apply(gen, &x).unwrap()).norm() < 1e-11);
            }
        }
    }

    // ---------------- verification battery ----------------

    #[test]
    fn verify_example_battery() {
        for &mu in &[2.0, 5.0, 0.5] {
            let gen = build_example_n3(mu).unwrap();
            let rep = verify_kms(&gen).unwrap();
            assert!(rep.delta_positive.pass);
            assert!(rep.delta_fixes_e2.pass);
            assert!(rep.range_condition.pass);
            assert!(
                rep.sandwich.pass,
                "sandwich residual {:.3e} at mu={mu}",
                rep.sandwich.residual
            );
            assert!(rep.part_l0.pass);
            assert!(rep.part_l1.pass);
            assert!(rep.y_condition.pass, "multiplier residual {:.3e}", rep.y_condition.residual);
            assert!(rep.equilibrium.pass);
            assert!(rep.kms_pass());
            assert!(
                !rep.gns_commutation_diagnostic.pass,
                "the generator must not commute with the modular element"
            );
            assert!(rep.relatively_ergodic.pass);
            assert_eq!(rep.fixed_point_dim, 3);
        }
    }

    #[test]
    fn verify_commuting_variant_battery() {
        for &mu in &[2.0, 5.0] {
            let gen = build_example_n3_gns(mu).unwrap();
            let rep = verify_kms(&gen).unwrap();
            assert!(rep.kms_pass());
            assert!(rep.gns_commutation_diagnostic.pass, "circulant variant commutes");
            assert!(rep.relatively_ergodic.pass);
            assert_eq!(rep.fixed_point_dim, 3);
        }
    }

    #[test]
    fn verify_flags_misscaled_weak_multiplier() {
        // Doubling the skew multiplier keeps every block shape intact but
        // breaks the modular symmetry; the battery must notice.
        let mu = 2.0;
        let good = build_example_n3(mu).unwrap();
        let dh = delta3_half(mu);
        let l0 = dh.dot(&h3()).dot(&dh);
        let a = one_star(&good.model, &good.l0).unwrap();
        let hc = 2.0 * (1.0 - mu) / (4.0 * (1.0 + mu));
        let mut y = a.mapv(|z| z * cr(0.5));
        y[[1, 1]] -= C_I * cr(hc);
        y[[2, 2]] += C_I * cr(hc);
        let sqn = 3f64.sqrt();
        let mut lm = zeros(3);
        for j in 0..3 {
            for k in 0..3 {
                lm[[j, k]] = (y[[j, j]].conj() + y[[k, k]]) / cr(sqn) - l0[[j, k]];
            }
        }
        let lhat = RelCommElem::new(&good.model, lm).unwrap();
        let gen = decompose(&good.model, &lhat, &good.delta).unwrap();
        let rep = verify_kms(&gen).unwrap();
        assert!(rep.part_l0.pass, "the Dirichlet block is untouched");
        assert!(!rep.sandwich.pass, "misscaled multiplier must break the sandwich");
        assert!(!rep.y_condition.pass);
        assert!(!rep.kms_pass());
    }

    #[test]
    fn transpose_symmetric_block_with_unit_modular_element() {
        let mut rng = Rng::new(31);
        let model = InclusionModel::diag_in_matn(4).unwrap();
        let k0 = away_from_e2_psd(&model, &mut rng);
        let k = k0.add(&k0.contragredient()).unwrap().scale(cr(0.5));
        let lhat = hat_identity_channel(&model).sub(&k).unwrap();
        let delta = RelCommElem::new(&model, eye(4)).unwrap();
        let gen = decompose(&model, &lhat, &delta).unwrap();
        let rep = verify_kms(&gen).unwrap();
        assert!(rep.kms_pass(), "sandwich residual {:.3e}", rep.sandwich.residual);
        assert!(rep.gns_commutation_diagnostic.pass);
    }

    #[test]
    fn random_symmetric_blocks_dressed_by_circulants_are_kms() {
        // Any transpose-symmetric positive block vanishing on the Jones
        // projection, dressed by a circulant modular element, passes the
        // battery once the multiplier solves the compatibility equation mode
        // by mode.
        let mut rng = Rng::new(33);
        for modes in [vec![1.0, 1.8, 1.0 / 1.8], vec![1.0, 2.5, 1.0, 0.4]] {
            let n = modes.len();
            let model = InclusionModel::diag_in_matn(n).unwrap();
            let delta = RelCommElem::new(&model, circulant_from_modes(&modes)).unwrap();
            let half: Vec<f64> = modes.iter().map(|d| d.sqrt()).collect();
            let dhalf = circulant_from_modes(&half);
            let sqn = (n as f64).sqrt();
            for _ in 0..3 {
                // Real symmetric positive block with zero row and column sums.
                let b = Array2::from_shape_fn((n, n), |_| cr(rng.normal()));
                let bt = b.t().to_owned();
                let m = b.dot(&bt);
                let q = eye(n) - &CMat::from_elem((n, n), cr(1.0 / n as f64));
                let h = q.dot(&m).dot(&q);
                let l0 = dhalf.dot(&h).dot(&dhalf);

                // Mode-by-mode multiplier solve: η_m = −i α_m (1−d_m)/(2(1+d_m)).
                let a: Vec<f64> = (0..n).map(|j| sqn * l0[[j, j]].re).collect();
                let fvec = |m: usize| -> Vec<Complex64> {
                    (0..n)
                        .map(|j| {
                            Complex64::from_polar(1.0 / sqn, PI2 * ((m * j) % n) as f64 / n as f64)
                        })
                        .collect()
                };
                let mut hvec = vec![C_ZERO; n];
                for m in 1..n {
                    let f = fvec(m);
                    let alpha: Complex64 =
                        (0..n).map(|j| f[j].conj() * cr(a[j])).sum();
                    let eta = -C_I * alpha * cr((1.0 - modes[m]) / (2.0 * (1.0 + modes[m])));
                    for j in 0..n {
                        hvec[j] += eta * f[j];
                    }
                }
                for v in &hvec {
                    assert!(v.im.abs() < 1e-12, "multiplier must be real");
                }
                let mut lm = zeros(n);
                for j in 0..n {
                    for k in 0..n {
                        let yj = cr(a[j] / 2.0) - C_I * cr(hvec[j].re);
                        let yk = cr(a[k] / 2.0) - C_I * cr(hvec[k].re);
                        lm[[j, k]] = (yj.conj() + yk) / cr(sqn) - l0[[j, k]];
                    }
                }
                let lhat = RelCommElem::new(&model, lm).unwrap();
                let gen = decompose(&model, &lhat, &delta).unwrap();
                let rep = verify_kms(&gen).unwrap();
                assert!(
                    rep.kms_pass(),
                    "n={n}: sandwich {:.3e}, multiplier {:.3e}",
                    rep.sandwich.residual,
                    rep.y_condition.residual
                );
                assert!(rep.sandwich.residual < 1e-10);
            }
        }
    }

    // ---------------- builders ----------------

    #[test]
    fn from_l0_builder_accepts_and_rejects() {
        let model = InclusionModel::diag_in_matn(3).unwrap();
        let c = 1.0 / (2.0 * 3f64.sqrt());
        // Cycle difference block scaled to unit contraction one.
        let mut k = zeros(3);
        for j in 0..3 {
            k[[j, j]] = cr(2.0 * c);
            k[[j, (j + 1) % 3]] = k[[j, (j + 1) % 3]] - cr(c);
            k[[(j + 1) % 3, j]] = k[[(j + 1) % 3, j]] - cr(c);
        }
        let kk = RelCommElem::new(&model, k.clone()).unwrap();
        let id_delta = RelCommElem::new(&model, eye(3)).unwrap();
        let gen = build_from_l0(&model, &kk, &id_delta, &eye(3)).unwrap();
        assert!(verify_kms(&gen).unwrap().kms_pass());
        assert!(frob(&gen.l1.y) < 1e-12);

        let reject = |l0: &RelCommElem, delta: &RelCommElem, q: &CMat, word: &str| {
            match build_from_l0(&model, l0, delta, q) {
                Err(Error::PreconditionViolated { identity, .. }) => {
                    assert!(identity.contains(word), "expected '{word}', got '{identity}'");
                }
                other => panic!("expected precondition failure ({word}), got {other:?}"),
            }
        };
        reject(&kk.scale(cr(-1.0)), &id_delta, &eye(3), "positive semidefinite");
        let mut bad = k.clone();
        bad[[0, 0]] += cr(1.0);
        reject(
            &RelCommElem::new(&model, bad).unwrap(),
            &id_delta,
            &eye(3),
            "annihilates e2",
        );
        reject(&kk.scale(cr(2.0)), &id_delta, &eye(3), "unit contraction");
        let mut qoff = eye(3);
        qoff[[0, 1]] = cr(0.25);
        reject(&kk, &id_delta, &qoff, "small relative commutant");
        reject(&kk, &id_delta, &eye(3).mapv(|z| z * cr(-1.0)), "positive definite");
        // A circulant modular element rescales the Fourier modes of the cycle
        // block, so the block sandwich fails.
        let delta = RelCommElem::new(&model, delta3(2.0)).unwrap();
        reject(&kk, &delta, &eye(3), "modular sandwich");
    }

    #[test]
    fn sandwich_builder_accepts_and_rejects() {
        let model = InclusionModel::diag_in_matn(3).unwrap();
        let mu = 2.0;
        let delta = RelCommElem::new(&model, delta3(mu)).unwrap();
        // Circulant block scaled so the dressed element has unit contraction.
        let c = 1.0 / (3f64.sqrt() * (mu + 1.0 / mu));
        let mut h = zeros(3);
        for j in 0..3 {
            h[[j, j]] = cr(2.0 * c);
            h[[j, (j + 1) % 3]] = h[[j, (j + 1) % 3]] - cr(c);
            h[[(j + 1) % 3, j]] = h[[(j + 1) % 3, j]] - cr(c);
        }
        let h0 = RelCommElem::new(&model, h.clone()).unwrap();
        let gen = build_sandwich(&model, &h0, &delta).unwrap();
        let rep = verify_kms(&gen).unwrap();
        assert!(rep.kms_pass(), "sandwich {:.3e}", rep.sandwich.residual);
        let dh = delta3_half(mu);
        let want = &hat_identity_channel(&model).y - &dh.dot(&h).dot(&dh);
        assert!(max_abs_diff(&gen.lhat.y, &want) < 1e-12, "construction form");
        let one = semigroup_apply(&gen, 1.3, &eye(3)).unwrap();
        assert!(max_abs_diff(&one, &eye(3)) < 1e-11, "unital semigroup");

        let reject = |h0: &RelCommElem, delta: &RelCommElem, word: &str| {
            match build_sandwich(&model, h0, delta) {
                Err(Error::PreconditionViolated { identity, .. }) => {
                    assert!(identity.contains(word), "expected '{word}', got '{identity}'");
                }
                other => panic!("expected precondition failure ({word}), got {other:?}"),
            }
        };
        reject(&RelCommElem::new(&model, h3()).unwrap(), &delta, "unit contraction");
        let mut rng = Rng::new(41);
        let g = random_mat(&mut rng, 3);
        reject(
            &RelCommElem::new(&model, dagger(&g).dot(&g)).unwrap(),
            &delta,
            "annihilates e2",
        );
        // Hermitian positive but not transpose-symmetric.
        let q = eye(3) - &CMat::from_elem((3, 3), cr(1.0 / 3.0));
        let w = sample_hermitian(&mut rng, 3, 1.0) + eye(3).mapv(|z| z * cr(2.0));
        let skew = RelCommElem::new(&model, q.dot(&w).dot(&q)).unwrap();
        reject(&skew, &delta, "contragredient-symmetric");
        // Modular element whose transpose is not its inverse.
        let baddelta =
            RelCommElem::new(&model, circulant_from_modes(&[1.0, 2.0, 3.0])).unwrap();
        reject(&h0, &baddelta, "delta contragredient equals delta inverse");
    }

    #[test]
    fn jump_operator_builder_thermal_qubit() {
        let gen = thermal_qubit_gen();
        let rho = thermal_rho();
        let rep = verify_kms_with_state(&gen, Some(&rho)).unwrap();
        assert!(
            rep.kms_pass(),
            "sandwich {:.3e}, multiplier {:.3e}, equilibrium {:.3e}",
            rep.sandwich.residual,
            rep.y_condition.residual,
            rep.equilibrium.residual
        );
        let evolved = semigroup_dual_apply(&gen, 0.8, &rho).unwrap();
        assert!(max_abs_diff(&evolved, &rho) < 1e-9, "stationary state");
        let one = semigroup_apply(&gen, 0.8, &eye(2)).unwrap();
        assert!(max_abs_diff(&one, &eye(2)) < 1e-9, "unital evolution");
    }

    #[test]
    fn jump_operator_builder_identity_jump_is_static() {
        let mut rng = Rng::new(43);
        let rho = sample_density(&mut rng, 2);
        let gen = build_carlen_maas(&[eye(2)], &rho, 0.5).unwrap();
        assert!(frob(&gen.lhat.y) < 1e-10, "identity jump yields the zero generator");
        let x = random_mat(&mut rng, 2);
        assert!(frob(&generator_apply(&gen, &x).unwrap()) < 1e-10);
    }

    #[test]
    fn jump_operator_builder_tracial_unitaries() {
        let mut rng = Rng::new(44);
        let u = sample_unitary(&mut rng, 2);
        let v = sample_unitary(&mut rng, 2);
        let s = cr(std::f64::consts::FRAC_1_SQRT_2);
        let gen =
            build_carlen_maas(&[u.mapv(|z| z * s), v.mapv(|z| z * s)], &eye(2), 0.5).unwrap();
        let rep = verify_kms(&gen).unwrap();
        assert!(rep.kms_pass(), "sandwich {:.3e}", rep.sandwich.residual);
        assert!(rep.gns_commutation_diagnostic.pass, "tracial modular element is the unit");
    }

    #[test]
    fn jump_operator_builder_rejects_bad_inputs() {
        let rho = thermal_rho();
        assert!(matches!(
            build_carlen_maas(&[], &rho, 0.5),
            Err(Error::InvalidParameters { .. })
        ));
        match build_carlen_maas(&[mat_unit(2, 0, 1)], &rho, 0.5) {
            Err(Error::ConstraintViolated { constraint, .. }) => {
                assert!(constraint.contains("v†v"), "got '{constraint}'");
            }
            other => panic!("expected normalization failure, got {other:?}"),
        }
        let mut swap = zeros(2);
        swap[[0, 1]] = cr(1.0);
        swap[[1, 0]] = cr(1.0);
        match build_carlen_maas(&[swap], &rho, 0.5) {
            Err(Error::ConstraintViolated { constraint, .. }) => {
                assert!(constraint.contains("fix rho"), "got '{constraint}'");
            }
            other => panic!("expected stationarity failure, got {other:?}"),
        }
        let mut rho0 = zeros(2);
        rho0[[0, 0]] = cr(2.0);
        assert!(matches!(
            build_carlen_maas(&[eye(2)], &rho0, 0.5),
            Err(Error::ConstraintViolated { .. })
        ));
        assert!(matches!(
            build_carlen_maas(&[eye(3)], &rho, 0.5),
            Err(Error::ModelMismatch { .. })
        ));
    }

    // ---------------- semigroup ----------------

    #[test]
    fn semigroup_composition_and_guards() {
        let mut rng = Rng::new(51);
        let diag_gen = build_example_n3(2.0).unwrap();
        let full_gen = thermal_qubit_gen();
        for gen in [&diag_gen, &full_gen] {
            let n = gen.model.n;
            let x = random_mat(&mut rng, n);
            assert!(max_abs_diff(&semigroup_apply(gen, 0.0, &x).unwrap(), &x) < 1e-13);
            let ab = semigroup_apply(gen, 0.3, &semigroup_apply(gen, 0.7, &x).unwrap()).unwrap();
            let whole = semigroup_apply(gen, 1.0, &x).unwrap();
            assert!(max_abs_diff(&ab, &whole) < 1e-9, "one-parameter law");
            assert!(matches!(
                semigroup_apply(gen, -0.1, &x),
                Err(Error::NegativeTime { .. })
            ));
            assert!(matches!(
                semigroup_apply(gen, f64::NAN, &x),
                Err(Error::NegativeTime { .. })
            ));
            // Short-time series as an independent evaluation.
            let t = 0.05;
            let mut term = x.clone();
            let mut acc = x.clone();
            for k in 1..=14 {
                term = generator_apply(gen, &term).unwrap().mapv(|z| z * cr(-t / k as f64));
                acc = acc + &term;
            }
            assert!(
                max_abs_diff(&semigroup_apply(gen, t, &x).unwrap(), &acc) < 1e-11,
                "series evaluation"
            );
            let mut term = x.clone();
            let mut acc = x.clone();
            for k in 1..=14 {
                term = laplacian_apply(gen, &term).unwrap().mapv(|z| z * cr(-t / k as f64));
                acc = acc + &term;
            }
            assert!(
                max_abs_diff(&laplacian_semigroup_apply(gen, t, &x).unwrap(), &acc) < 1e-11,
                "dissipative series evaluation"
            );
        }
    }

    // ---------------- ergodicity and limits ----------------

    #[test]
    fn ergodicity_and_long_time_limits() {
        let mut rng = Rng::new(52);
        // The three-point model relaxes onto the diagonal expectation.
        let gen = build_example_n3(2.0).unwrap();
        let (erg, basis) = relative_ergodicity(&gen).unwrap();
        assert!(erg);
        assert_eq!(basis.len(), 3);
        let f = limit_f(&gen).unwrap();
        let x = random_mat(&mut rng, 3);
        let proj = channel_apply(&gen.model, &f, &x).unwrap();
        assert!(
            max_abs_diff(&proj, &gen.model.e_n(&x)) < 1e-12,
            "limit is the small conditional expectation"
        );
        let longt = laplacian_semigroup_apply(&gen, 40.0, &x).unwrap();
        assert!(max_abs_diff(&longt, &proj) < 1e-6);

        // Zero Dirichlet block: nothing relaxes; the limit is the identity.
        let model = InclusionModel::diag_in_matn(3).unwrap();
        let delta = RelCommElem::new(&model, eye(3)).unwrap();
        let idgen = decompose(&model, &hat_identity_channel(&model), &delta).unwrap();
        let (erg0, basis0) = relative_ergodicity(&idgen).unwrap();
        assert!(!erg0, "no relaxation at all");
        assert_eq!(basis0.len(), 9);
        let f0 = limit_f(&idgen).unwrap();
        assert!(max_abs_diff(&channel_apply(&model, &f0, &x).unwrap(), &x) < 1e-12);

        // A rank-one block with a repeated weight leaves an off-diagonal
        // fixed line.
        let v = [1.0, 1.0, -2.0];
        let mut g = zeros(3);
        for j in 0..3 {
            for k in 0..3 {
                g[[j, k]] = cr(v[j] * v[k] / 3f64.sqrt());
            }
        }
        let planted = RelCommElem::new(&model, g).unwrap();
        let lhat = hat_identity_channel(&model).sub(&planted).unwrap();
        let pgen = decompose(&model, &lhat, &delta).unwrap();
        let (erg1, basis1) = relative_ergodicity(&pgen).unwrap();
        assert!(!erg1);
        assert_eq!(basis1.len(), 5);
        let f1 = limit_f(&pgen).unwrap();
        let p_long = laplacian_semigroup_apply(&pgen, 60.0, &x).unwrap();
        assert!(max_abs_diff(&channel_apply(&model, &f1, &x).unwrap(), &p_long) < 1e-6);

        // Matrix backend limit through the spectral projection.
        let fgen = thermal_qubit_gen();
        let xf = random_mat(&mut rng, 2);
        let ff = limit_f(&fgen).unwrap();
        let want = laplacian_semigroup_apply(&fgen, 50.0, &xf).unwrap();
        assert!(max_abs_diff(&channel_apply(&fgen.model, &ff, &xf).unwrap(), &want) < 1e-5);

        // Negative and purely oscillatory relaxation rates are refused.
        let mut bad = decompose(&model, &hat_identity_channel(&model), &delta).unwrap();
        let mut l0bad = zeros(3);
        l0bad[[0, 0]] = cr(1.0 / 3f64.sqrt());
        l0bad[[1, 1]] = cr(1.0 / 3f64.sqrt());
        l0bad[[0, 1]] = cr(1.2 / 3f64.sqrt());
        l0bad[[1, 0]] = cr(1.2 / 3f64.sqrt());
        bad.l0 = RelCommElem::new(&model, l0bad).unwrap();
        assert!(matches!(limit_f(&bad), Err(Error::NotErgodic { .. })));
        let mut osc = zeros(3);
        osc[[0, 1]] = C_I * cr(1.0 / 3f64.sqrt());
        bad.l0 = RelCommElem::new(&model, osc).unwrap();
        assert!(matches!(limit_f(&bad), Err(Error::NotErgodic { .. })));
    }

    // ---------------- serialization ----------------

    #[test]
    fn report_serialization_is_stable() {
        let gen = build_example_n3(2.0).unwrap();
        let r1 = verify_kms(&gen).unwrap();
        let r2 = verify_kms(&gen).unwrap();
        let s1 = serde_json::to_string(&r1.to_flat()).unwrap();
        let s2 = serde_json::to_string(&r2.to_flat()).unwrap();
        assert_eq!(s1, s2, "identical inputs serialize identically");
        let v: serde_json::Value = serde_json::from_str(&s1).unwrap();
        let obj = v.as_object().unwrap();
        assert_eq!(obj.len(), 11);
        for key in [
            "delta_positive",
            "delta_fixes_e2",
            "range_condition",
            "sandwich",
            "part_l0",
            "part_l1",
            "y_condition",
            "equilibrium",
            "gns_commutation_diagnostic",
            "relatively_ergodic",
        ] {
            let entry = obj.get(key).unwrap_or_else(|| panic!("missing {key}"));
            assert!(entry.get("pass").unwrap().is_boolean());
            assert!(entry.get("residual").unwrap().is_number());
        }
        assert!(obj.get("fixed_point_dim").unwrap().is_u64());
    }

    #[test]
    fn transform_expectation_routes_agree() {
        let mut rng = Rng::new(54);
        let model = InclusionModel::diag_in_matn(3).unwrap();
        for _ in 0..3 {
            let yhat = RelCommElem::new(&model, random_mat(&mut rng, 3)).unwrap();
            let closed = fourier_inv_em(&model, &yhat).unwrap();
            let module = fourier_inv(&model, &yhat).unwrap().e_m();
            assert!(max_abs_diff(&closed, &module) < 1e-12);
        }
    }
}
