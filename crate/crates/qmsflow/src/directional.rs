//! Directional decomposition of the dissipative block of a symmetric
//! generator.
//!
//! Dressing the Dirichlet coefficient `L̂₀` on both sides by the
//! contragredient of the square-root modular element produces a
//! contragredient-invariant positive coefficient `L̂_Δ`.  The
//! finite-dimensional *-algebra generated by `L̂_Δ` and the modular
//! compression `Δ̂Q` (where `Q` projects onto the range of `L̂₀`) splits
//! into matrix blocks that the contragredient permutes.  Choosing matrix
//! units that diagonalize `L̂_Δ`, and inside each block a unitary that
//! diagonalizes the square-root modular coefficients, yields a finite
//! family of *directions*: each direction carries a twisted difference
//! operator on `M`, and the dissipative generator becomes a weighted
//! divergence of these differences.  The weights are logarithmic-mean
//! multipliers in the state, which is what makes entropy production
//! representable as a metric gradient flow.
//!
//! Module layout:
//!
//! * [`algebra_closure`] — numerically closed orthonormal basis of the
//!   *-algebra generated by a list of coefficients.
//! * [`build_frame`] — the full frame: central decomposition, matrix
//!   units, contragredient pairing, diagonalizing unitaries, directions.
//! * [`DirectionalFrame`] — gradient, divergence, directional matrix,
//!   weight transform, and the two equivalent forms of the dual
//!   dissipative generator.

use crate::error::{Error, Result};
use crate::matcore::{
    cr, dagger, frob, herm_eig, hs_inner, log_mean, mat_pow, max_abs_diff,
    range_projection, trace, zeros, CMat, Rng, C_ONE, C_ZERO,
};
use crate::semigroup::Generator;
use crate::tower::{fourier_inv, full_e1, InclusionModel, ModuleElement, RelCommElem};
use ndarray::Array2;
use num_complex::Complex64;
use serde::Serialize;

/// Internal seed for the randomized (but deterministic) separations used
/// while splitting the algebra into blocks and refining projections.
const FRAME_SEED: u64 = 0x00D1_5EED;

/// Relative tolerance for declaring a vector linearly dependent during
/// Gram–Schmidt closure of the algebra.
const SPAN_TOL: f64 = 1e-8;

/// Residual ceiling for the structural identities a frame must satisfy
/// (unit relations, reassembly of the dressed block and of the modular
/// coefficients).
const FRAME_TOL: f64 = 1e-7;

// ---------------------------------------------------------------------------
// Small spectral helpers
// ---------------------------------------------------------------------------

pub(crate) fn herm_part(a: &CMat) -> CMat {
    (a + &dagger(a)).mapv(|z| 0.5 * z)
}

/// Logarithm of a strictly positive Hermitian matrix.
pub(crate) fn herm_log(a: &CMat) -> Result<CMat> {
    let eig = herm_eig(&herm_part(a))?;
    if eig.min_eig() <= 0.0 {
        return Err(Error::InvalidParameters {
            reason: format!(
                "matrix logarithm needs a strictly positive operand (min eigenvalue {:.3e})",
                eig.min_eig()
            ),
        });
    }
    let n = eig.eigenvalues.len();
    let v = &eig.eigenvectors;
    let mut out = zeros(n);
    for i in 0..n {
        let li = cr(eig.eigenvalues[i].ln());
        for r in 0..n {
            for c in 0..n {
                out[(r, c)] += li * v[(r, i)] * v[(c, i)].conj();
            }
        }
    }
    Ok(out)
}

/// Square root of a positive semidefinite Hermitian matrix.  Eigenvalues in
/// the rounding band below zero are clamped; genuinely negative spectrum is
/// rejected.
fn psd_sqrt(a: &CMat) -> Result<CMat> {
    let eig = herm_eig(&herm_part(a))?;
    let floor = -1e-10 * (1.0 + eig.max_eig().abs());
    if eig.min_eig() < floor {
        return Err(Error::NotPositive { min_eig: eig.min_eig() });
    }
    let n = eig.eigenvalues.len();
    let v = &eig.eigenvectors;
    let mut out = zeros(n);
    for i in 0..n {
        let li = cr(eig.eigenvalues[i].max(0.0).sqrt());
        for r in 0..n {
            for c in 0..n {
                out[(r, c)] += li * v[(r, i)] * v[(c, i)].conj();
            }
        }
    }
    Ok(out)
}

/// Orthogonal projection of `x` onto the span of the orthonormal family
/// `basis` (orthonormal under the Hilbert–Schmidt inner product).
fn span_project(basis: &[CMat], x: &CMat) -> CMat {
    let mut p = Array2::from_elem(x.dim(), C_ZERO);
    for b in basis {
        let c = hs_inner(b, x);
        p = &p + &b.mapv(|z| z * c);
    }
    p
}

/// Try to absorb `x` into the orthonormal family; returns `true` if a new
/// basis vector was appended.
fn absorb(basis: &mut Vec<CMat>, x: &CMat) -> bool {
    let scale = frob(x);
    if scale <= 1e-14 {
        return false;
    }
    let mut r = x - &span_project(basis, x);
    // One re-orthogonalization pass keeps the family orthonormal to ~1e-15.
    r = &r - &span_project(basis, &r);
    let nr = frob(&r);
    if nr <= SPAN_TOL * (1.0 + scale) {
        return false;
    }
    basis.push(r.mapv(|z| z / cr(nr)));
    true
}

/// Orthonormal basis (Hilbert–Schmidt) of the *-algebra generated by the
/// given coefficients, without adjoining a unit: the span of all words of
/// length ≥ 1 in the generators and their adjoints.
pub fn algebra_closure(model: &InclusionModel, gens: &[CMat]) -> Result<Vec<CMat>> {
    let dim = model.hat_dim();
    for g in gens {
        if g.nrows() != dim || g.ncols() != dim {
            return Err(Error::InvalidParameters {
                reason: format!(
                    "algebra generator is {}×{}, expected {}×{}",
                    g.nrows(),
                    g.ncols(),
                    dim,
                    dim
                ),
            });
        }
    }
    let mut basis: Vec<CMat> = Vec::new();
    for g in gens {
        absorb(&mut basis, g);
        absorb(&mut basis, &dagger(g));
    }
    // Multiply fresh elements against the whole family until stable.
    let mut fresh = 0usize;
    while fresh < basis.len() {
        let start = fresh;
        fresh = basis.len();
        let snapshot = basis.clone();
        for a_idx in 0..snapshot.len() {
            for b_idx in 0..snapshot.len() {
                if a_idx < start && b_idx < start {
                    continue; // both old: product already absorbed
                }
                let prod = snapshot[a_idx].dot(&snapshot[b_idx]);
                absorb(&mut basis, &prod);
            }
        }
        if basis.len() > dim * dim {
            return Err(Error::InvalidParameters {
                reason: "algebra closure exceeded the ambient dimension".into(),
            });
        }
    }
    Ok(basis)
}

/// Orthonormal basis of the center of the algebra spanned by `basis`
/// (which must be closed under products and adjoints).
fn center_basis(basis: &[CMat]) -> Result<Vec<CMat>> {
    let m = basis.len();
    if m == 0 {
        return Ok(Vec::new());
    }
    // Gram kernel of the commutator map b ↦ ([b, F_α])_α; its null space is
    // exactly the center because the Frobenius norm of all commutators
    // vanishes there.
    let mut comms: Vec<Vec<CMat>> = Vec::with_capacity(m);
    for b in basis {
        let row: Vec<CMat> = basis.iter().map(|f| b.dot(f) - f.dot(b)).collect();
        comms.push(row);
    }
    let mut g = zeros(m);
    for i in 0..m {
        for j in i..m {
            let mut acc = C_ZERO;
            for a in 0..m {
                acc += hs_inner(&comms[i][a], &comms[j][a]);
            }
            g[(i, j)] = acc;
            g[(j, i)] = acc.conj();
        }
    }
    let eig = herm_eig(&g)?;
    let cut = 1e-9 * (1.0 + eig.max_eig().abs());
    let mut center = Vec::new();
    for (idx, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev.abs() <= cut {
            let mut z = Array2::from_elem(basis[0].dim(), C_ZERO);
            for b_idx in 0..m {
                let c = eig.eigenvectors[(b_idx, idx)];
                z = &z + &basis[b_idx].mapv(|w| w * c);
            }
            center.push(z);
        }
    }
    Ok(center)
}

/// Deterministic Hermitian element of the real span of `family`.
fn random_hermitian_in_span(family: &[CMat], rng: &mut Rng) -> CMat {
    let dim = family[0].nrows();
    let mut h = zeros(dim);
    for f in family {
        let (re, im) = (rng.normal(), rng.normal());
        let c = Complex64::new(re, im);
        h = &h + &f.mapv(|z| z * c);
    }
    herm_part(&h)
}

/// Eigenvalue clusters of a Hermitian matrix: groups of eigenvalues whose
/// pairwise gaps stay below a relative threshold, each returned with its
/// mean value and spectral projection.  Only clusters whose mean satisfies
/// `keep` are returned.
fn eigen_cluster_projections(
    h: &CMat,
    keep: impl Fn(f64) -> bool,
) -> Result<Vec<(f64, CMat)>> {
    let eig = herm_eig(h)?;
    let n = eig.eigenvalues.len();
    let spread = eig.max_eig() - eig.min_eig();
    let gap = 1e-6 * (1.0 + spread.abs());
    let mut clusters: Vec<(f64, CMat)> = Vec::new();
    let mut i = 0usize;
    while i < n {
        let mut j = i + 1;
        while j < n && eig.eigenvalues[j] - eig.eigenvalues[j - 1] <= gap {
            j += 1;
        }
        let mean =
            eig.eigenvalues[i..j].iter().sum::<f64>() / (j - i) as f64;
        if keep(mean) {
            let mut p = zeros(h.nrows());
            for col in i..j {
                for r in 0..h.nrows() {
                    for c in 0..h.nrows() {
                        p[(r, c)] += eig.eigenvectors[(r, col)]
                            * eig.eigenvectors[(c, col)].conj();
                    }
                }
            }
            clusters.push((mean, p));
        }
        i = j;
    }
    Ok(clusters)
}

/// Dimension of the compressed corner `p·span(basis)·p`.
fn corner_dim(basis: &[CMat], p: &CMat) -> usize {
    let mut corner: Vec<CMat> = Vec::new();
    for f in basis {
        let c = p.dot(f).dot(p);
        absorb(&mut corner, &c);
    }
    corner.len()
}

// ---------------------------------------------------------------------------
// Frame data types
// ---------------------------------------------------------------------------

/// One matrix block of the direction algebra.
#[derive(Debug, Clone)]
pub struct DirectionalBlock {
    /// Matrix size `d` of the block (`d²` matrix units).
    pub dim: usize,
    /// Index of the block the contragredient maps this one to (itself for
    /// self-paired blocks).
    pub dual: usize,
    /// Trace of a minimal diagonal unit (the multiplicity of the block in
    /// the ambient coefficient space).
    pub unit_trace: f64,
    /// Central projection of the block.
    pub z: RelCommElem,
    /// Eigenvalues of the dressed dissipative coefficient on the diagonal
    /// units (strictly positive).
    pub omega: Vec<f64>,
    /// Matrix units `units[j][k] = E_{j,k}` with `E_{j,k}† = E_{k,j}` and
    /// `E_{j,k}E_{s,t} = δ_{k,s}E_{j,t}`.
    pub units: Vec<Vec<RelCommElem>>,
    /// Coefficients of the square-root modular element in the units.
    pub a_coeff: CMat,
    /// Unitary diagonalizing `a_coeff`; columns ordered by decreasing
    /// modular eigenvalue (paired blocks inherit the conjugate unitary).
    pub u_coeff: CMat,
    /// Modular eigenvalues attached to the directions of this block.
    pub mu: Vec<f64>,
}

/// A single direction: a matched unit combination together with its
/// difference operator data.
#[derive(Debug, Clone)]
pub struct Direction {
    /// Index of the owning block.
    pub block: usize,
    /// Index of the direction inside its block.
    pub index: usize,
    /// Eigenvalue of the dressed dissipative coefficient on the diagonal
    /// unit the direction is attached to.
    pub omega: f64,
    /// Modular eigenvalue of the direction.
    pub mu: f64,
    /// Direction coefficient `Ẽ_k = Σ_t conj(u_{t,k}) E_{k,t}`.
    pub e_tilde: RelCommElem,
    /// Modular-weighted coefficient `Δ̂_k⁺ = Σ_j ω_j conj(u_{j,k}) E_{k,j} Δ̂^{1/2}z`.
    pub delta_dir: RelCommElem,
    /// Inverse-weighted coefficient `Δ̂_k⁻ = Σ_j ω_j conj(u_{j,k}) E_{k,j} Δ̂^{−1/2}z`.
    pub delta_dir_minus: RelCommElem,
    /// Transported direction `A_k = 𝔉⁻¹(Ẽ_k)` acting by commutator.
    pub a_mod: ModuleElement,
    /// Adjoint `A_k†` used by the divergence.
    pub a_mod_dag: ModuleElement,
    /// Transported weighted direction `B_k⁺ = 𝔉⁻¹(Δ̂_k⁺)`.
    pub b_mod: ModuleElement,
    /// Transported inverse-weighted direction `B_k⁻ = 𝔉⁻¹(Δ̂_k⁻)`.
    pub b_minus_mod: ModuleElement,
}

/// Residuals of the structural identities checked while building a frame.
#[derive(Debug, Clone, Serialize)]
pub struct FrameResiduals {
    /// `E_{j,k}E_{s,t} = δ_{k,s}E_{j,t}` over all blocks.
    pub unit_relations: f64,
    /// `Σ_j ω_j E_{j,j} = L̂_Δ z` over all blocks.
    pub dressed_reassembly: f64,
    /// `Σ_{j,k} a_{j,k} E_{j,k} = Δ̂^{1/2} z` over all blocks.
    pub modular_reassembly: f64,
    /// `u† a u = diag(μ)` (including paired blocks with the transported
    /// unitary).
    pub diagonalization: f64,
    /// `bar(E_{j,k}) = E'_{k,j}` against the paired block's units.
    pub dual_pairing: f64,
    /// `a' = (aᵀ)⁻¹` between paired blocks.
    pub dual_inverse: f64,
}

/// Direction frame of a symmetric generator: blocks, matched units and the
/// derived difference operators.
#[derive(Debug, Clone)]
pub struct DirectionalFrame {
    pub model: InclusionModel,
    pub lambda: f64,
    /// Rank of the dissipative block.
    pub range_dim: usize,
    /// Projection onto the range of the dissipative block.
    pub q: RelCommElem,
    /// Dressed dissipative coefficient `L̂_Δ = bar(Δ̂^{1/2}) L̂₀ bar(Δ̂^{1/2})`.
    pub l_delta: RelCommElem,
    /// Square root of the modular element.
    pub delta_half: RelCommElem,
    pub blocks: Vec<DirectionalBlock>,
    pub directions: Vec<Direction>,
    pub residuals: FrameResiduals,
    /// Square roots of the dissipative coefficients, transported to the
    /// module, for the kernel comparison tests.
    l0_half_mod: ModuleElement,
    l_delta_half_mod: ModuleElement,
}

/// JSON view of a block (complex entries as `[re, im]` pairs).
#[derive(Debug, Clone, Serialize)]
pub struct BlockSummary {
    pub dim: usize,
    pub dual: usize,
    pub unit_trace: f64,
    pub omega: Vec<f64>,
    pub mu: Vec<f64>,
    pub u: Vec<Vec<[f64; 2]>>,
}

/// JSON view of a frame.
#[derive(Debug, Clone, Serialize)]
pub struct FrameSummary {
    pub lambda: f64,
    pub range_dim: usize,
    pub direction_count: usize,
    pub blocks: Vec<BlockSummary>,
    pub residuals: FrameResiduals,
}

// ---------------------------------------------------------------------------
// Module-side transport
// ---------------------------------------------------------------------------

/// Transport of a relative-commutant coefficient into the middle algebra:
/// the inverse Fourier transform, realized for both backends (for the
/// full-matrix model it is `λ^{−1/2} Y · e₁` under the left coefficient
/// action).
pub fn fourier_inv_module(model: &InclusionModel, y: &RelCommElem) -> Result<ModuleElement> {
    if model.is_diag() {
        fourier_inv(model, y)
    } else {
        let d = model.n;
        let e1 = ModuleElement::from_mat(model, full_e1(d))?;
        Ok(e1.hat_action(y).scale(cr(d as f64)))
    }
}

/// Dressed dissipative coefficient `L̂_Δ = bar(Δ̂^{1/2}) L̂₀ bar(Δ̂^{1/2})`.
pub fn lhat_delta(gen: &Generator) -> Result<RelCommElem> {
    let dh = mat_pow(&herm_part(&gen.delta.y), 0.5)?;
    let dh_bar = RelCommElem::new(&gen.model, dh)?.contragredient();
    let ld = dh_bar.y.dot(&gen.l0.y).dot(&dh_bar.y);
    RelCommElem::new(&gen.model, herm_part(&ld))
}

/// Prefactor of the divergence form of the dual dissipative generator.
pub fn master_prefactor(lambda: f64) -> f64 {
    lambda.powf(-0.5) / 2.0
}

// ---------------------------------------------------------------------------
// Frame construction
// ---------------------------------------------------------------------------

#[derive(Clone)]
struct RawBlock {
    z: CMat,
    basis: Vec<CMat>,
    dim: usize,
    unit_trace: f64,
    omega: Vec<f64>,
    diag_units: Vec<CMat>,
}

/// Split a projection `p` (an element of the algebra spanned by `basis`)
/// into minimal subprojections, using spectra of deterministic generic
/// Hermitian elements.  When `symmetrize` is set the generic elements are
/// averaged with their contragredient so the resulting minimal projections
/// are contragredient-invariant whenever possible.
fn refine_projection(
    model: &InclusionModel,
    basis: &[CMat],
    p: &CMat,
    symmetrize: bool,
    rng: &mut Rng,
) -> Result<Vec<CMat>> {
    let mut queue = vec![p.clone()];
    let mut minimal = Vec::new();
    let mut guard = 0usize;
    while let Some(cur) = queue.pop() {
        guard += 1;
        if guard > 16 * basis.len() + 64 {
            return Err(Error::InvalidParameters {
                reason: "projection refinement did not terminate".into(),
            });
        }
        if corner_dim(basis, &cur) <= 1 {
            minimal.push(cur);
            continue;
        }
        let mut split: Option<Vec<CMat>> = None;
        for attempt in 0..8 {
            let mut h = random_hermitian_in_span(basis, rng);
            h = cur.dot(&h).dot(&cur);
            h = herm_part(&h);
            if symmetrize && attempt < 5 {
                let hb = RelCommElem::new(model, h.clone())?.contragredient().y;
                h = herm_part(&(&h + &hb).mapv(|z| 0.5 * z));
            }
            let shift = 2.0 * (1.0 + frob(&h));
            let shifted = &h + &cur.mapv(|z| z * cr(shift));
            let clusters = eigen_cluster_projections(&shifted, |v| v > 1.0)?;
            if clusters.len() > 1 {
                split = Some(clusters.into_iter().map(|(_, proj)| proj).collect());
                break;
            }
        }
        match split {
            Some(parts) => queue.extend(parts),
            None => minimal.push(cur), // indivisible under the allowed moves
        }
    }
    Ok(minimal)
}

fn build_raw_block(
    model: &InclusionModel,
    z: &CMat,
    full_basis: &[CMat],
    l_delta: &CMat,
    self_dual: bool,
    rng: &mut Rng,
) -> Result<RawBlock> {
    let mut basis = Vec::new();
    for f in full_basis {
        let c = z.dot(f).dot(z);
        absorb(&mut basis, &c);
    }
    let dsq = basis.len();
    let dim = (dsq as f64).sqrt().round() as usize;
    if dim * dim != dsq {
        return Err(Error::InvalidParameters {
            reason: format!("block dimension {dsq} is not a square"),
        });
    }
    let zt = trace(z).re;
    let unit_trace = zt / dim as f64;

    // Diagonal units: spectral projections of the dressed coefficient,
    // refined to minimal projections of the block.
    let b_carrier = herm_part(&z.dot(l_delta).dot(z));
    let shift = 2.0 * (1.0 + frob(&b_carrier));
    let shifted = &b_carrier + &z.mapv(|w| w * cr(shift));
    let spectral = eigen_cluster_projections(&shifted, |v| v > 1.0)?;
    let mut diag_units: Vec<(f64, CMat)> = Vec::new();
    for (mean, proj) in &spectral {
        let omega_val = mean - shift;
        if omega_val <= FRAME_TOL {
            return Err(Error::InvalidParameters {
                reason: format!(
                    "dressed dissipative coefficient is not positive definite on its \
                     range (eigenvalue {omega_val:.3e})"
                ),
            });
        }
        for part in refine_projection(model, &basis, proj, self_dual, rng)? {
            diag_units.push((omega_val, part));
        }
    }
    // Deterministic order: increasing eigenvalue, then increasing modular
    // weight of the unit.
    diag_units.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| {
                let ta = trace(&a.1).re;
                let tb = trace(&b.1).re;
                ta.partial_cmp(&tb).unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    if diag_units.len() != dim {
        return Err(Error::InvalidParameters {
            reason: format!(
                "found {} minimal diagonal units in a block of size {}",
                diag_units.len(),
                dim
            ),
        });
    }
    let omega = diag_units.iter().map(|(w, _)| *w).collect();
    let units = diag_units.into_iter().map(|(_, p)| p).collect();
    Ok(RawBlock { z: z.clone(), basis, dim, unit_trace, omega, diag_units: units })
}

/// Complete a family of minimal diagonal units to a full system of matrix
/// units `E_{j,k} = E_{j,1}(E_{k,1})†` via generic partial isometries.
fn complete_units(
    raw: &RawBlock,
    rng: &mut Rng,
) -> Result<Vec<Vec<CMat>>> {
    let d = raw.dim;
    let m = raw.unit_trace;
    let mut column: Vec<CMat> = Vec::with_capacity(d);
    column.push(raw.diag_units[0].clone());
    for j in 1..d {
        let mut found = None;
        for _ in 0..8 {
            let g = {
                let mut acc = zeros(raw.z.nrows());
                for f in &raw.basis {
                    let c = Complex64::new(rng.normal(), rng.normal());
                    acc = &acc + &f.mapv(|z| z * c);
                }
                acc
            };
            let v = raw.diag_units[j].dot(&g).dot(&raw.diag_units[0]);
            let c = trace(&dagger(&v).dot(&v)).re / m;
            if c > 1e-10 {
                found = Some(v.mapv(|z| z / cr(c.sqrt())));
                break;
            }
        }
        column.push(found.ok_or_else(|| Error::InvalidParameters {
            reason: "failed to connect minimal units inside a block".into(),
        })?);
    }
    let mut units = vec![vec![zeros(raw.z.nrows()); d]; d];
    for j in 0..d {
        for k in 0..d {
            units[j][k] = column[j].dot(&dagger(&column[k]));
        }
    }
    Ok(units)
}

/// Build the directional frame of a symmetric generator.
///
/// Preconditions (checked): the modular element is strictly positive and
/// commutes with the range projection `Q` of the dissipative block; the
/// contragredient of the dissipative block has the same range; the dressed
/// coefficient is contragredient-invariant (this is the fingerprint of the
/// verified symmetry — run the symmetry report first).
pub fn build_frame(gen: &Generator) -> Result<DirectionalFrame> {
    let model = gen.model.clone();
    let lambda = model.lambda;
    let dim = model.hat_dim();
    let scale = 1.0 + frob(&gen.l0.y);

    let delta_eig = herm_eig(&herm_part(&gen.delta.y))?;
    if delta_eig.min_eig() <= 0.0 {
        return Err(Error::InvalidParameters {
            reason: format!(
                "modular element must be strictly positive (min eigenvalue {:.3e})",
                delta_eig.min_eig()
            ),
        });
    }
    let delta_half_carrier = mat_pow(&herm_part(&gen.delta.y), 0.5)?;
    let delta_half = RelCommElem::new(&model, delta_half_carrier.clone())?;

    // Range projection of the dissipative block.
    let q_carrier = range_projection(&gen.l0.y);
    let range_dim = trace(&q_carrier).re.round() as usize;
    let comm_dq = &gen.delta.y.dot(&q_carrier) - &q_carrier.dot(&gen.delta.y);
    if frob(&comm_dq) > 1e-8 * scale {
        return Err(Error::InvalidParameters {
            reason: format!(
                "modular element must commute with the dissipative range projection \
                 (residual {:.3e})",
                frob(&comm_dq)
            ),
        });
    }
    let q_bar = range_projection(&gen.l0.contragredient().y);
    if max_abs_diff(&q_bar, &q_carrier) > 1e-7 {
        return Err(Error::InvalidParameters {
            reason: "dissipative block and its contragredient must have the same range"
                .into(),
        });
    }

    let l_delta = lhat_delta(gen)?;
    let ld_bar_res = max_abs_diff(&l_delta.contragredient().y, &l_delta.y);
    if ld_bar_res > 1e-7 * scale {
        return Err(Error::InvalidParameters {
            reason: format!(
                "dressed dissipative block is not contragredient-invariant \
                 (residual {ld_bar_res:.3e}); verify the generator symmetry first"
            ),
        });
    }
    let q = RelCommElem::new(&model, q_carrier.clone())?;

    let l0_half_mod =
        fourier_inv_module(&model, &RelCommElem::new(&model, psd_sqrt(&gen.l0.y)?)?)?;
    let l_delta_half_mod =
        fourier_inv_module(&model, &RelCommElem::new(&model, psd_sqrt(&l_delta.y)?)?)?;

    // Trivial dissipative part: empty frame.
    if range_dim == 0 {
        return Ok(DirectionalFrame {
            model,
            lambda,
            range_dim,
            q,
            l_delta,
            delta_half,
            blocks: Vec::new(),
            directions: Vec::new(),
            residuals: FrameResiduals {
                unit_relations: 0.0,
                dressed_reassembly: 0.0,
                modular_reassembly: 0.0,
                diagonalization: 0.0,
                dual_pairing: 0.0,
                dual_inverse: 0.0,
            },
            l0_half_mod,
            l_delta_half_mod,
        });
    }

    // The direction algebra and its center.
    let dq = herm_part(&gen.delta.y.dot(&q_carrier));
    let basis = algebra_closure(&model, &[l_delta.y.clone(), dq])?;
    let center = center_basis(&basis)?;
    if center.is_empty() {
        return Err(Error::InvalidParameters {
            reason: "direction algebra has an empty center".into(),
        });
    }

    // Minimal central projections: cluster a generic Hermitian central
    // element, retrying with fresh draws if eigenvalues collide.
    let mut rng = Rng::new(FRAME_SEED);
    let want = center.len();
    let mut centrals: Option<Vec<CMat>> = None;
    for _ in 0..6 {
        let mut h = random_hermitian_in_span(&center, &mut rng);
        let shift = 2.0 * (1.0 + frob(&h));
        h = &h + &q_carrier.mapv(|z| z * cr(shift));
        let clusters = eigen_cluster_projections(&h, |v| v > 1.0)?;
        if clusters.len() != want {
            continue;
        }
        let mut ok = true;
        let mut zs = Vec::with_capacity(want);
        for (_, p) in clusters {
            let back = span_project(&center, &p);
            if max_abs_diff(&back, &p) > 1e-7 {
                ok = false;
                break;
            }
            zs.push(p);
        }
        if ok {
            centrals = Some(zs);
            break;
        }
    }
    let centrals = centrals.ok_or_else(|| Error::InvalidParameters {
        reason: "central projections of the direction algebra did not separate".into(),
    })?;
    let z_sum = centrals.iter().fold(zeros(dim), |acc, z| &acc + z);
    if max_abs_diff(&z_sum, &q_carrier) > 1e-7 {
        return Err(Error::InvalidParameters {
            reason: "central projections do not resolve the range projection".into(),
        });
    }

    // Contragredient pairing on central projections.
    let bar_of = |x: &CMat| -> Result<CMat> {
        Ok(RelCommElem::new(&model, x.clone())?.contragredient().y)
    };
    let mut dual_of_raw = vec![usize::MAX; centrals.len()];
    for (i, z) in centrals.iter().enumerate() {
        let zb = bar_of(z)?;
        let mut best = (f64::INFINITY, usize::MAX);
        for (j, w) in centrals.iter().enumerate() {
            let d = max_abs_diff(&zb, w);
            if d < best.0 {
                best = (d, j);
            }
        }
        if best.0 > 1e-6 {
            return Err(Error::InvalidParameters {
                reason: "contragredient does not permute the central projections".into(),
            });
        }
        dual_of_raw[i] = best.1;
    }

    // Raw per-block data (diagonal units and eigenvalues), then canonical
    // block order: decreasing size, lexicographic eigenvalue list,
    // increasing modular trace.
    let mut raws: Vec<RawBlock> = Vec::with_capacity(centrals.len());
    for (i, z) in centrals.iter().enumerate() {
        let self_dual = dual_of_raw[i] == i;
        raws.push(build_raw_block(&model, z, &basis, &l_delta.y, self_dual, &mut rng)?);
    }
    let mut order: Vec<usize> = (0..raws.len()).collect();
    let sort_key = |rb: &RawBlock| {
        let mtrace = trace(&rb.z.dot(&delta_half_carrier)).re;
        (rb.dim, rb.omega.clone(), mtrace)
    };
    order.sort_by(|&a, &b| {
        let ka = sort_key(&raws[a]);
        let kb = sort_key(&raws[b]);
        kb.0.cmp(&ka.0)
            .then_with(|| {
                for (x, y) in ka.1.iter().zip(kb.1.iter()) {
                    if (x - y).abs() <= 1e-8 * (1.0 + x.abs() + y.abs()) {
                        continue;
                    }
                    match x.partial_cmp(y) {
                        Some(std::cmp::Ordering::Equal) | None => continue,
                        Some(o) => return o,
                    }
                }
                std::cmp::Ordering::Equal
            })
            .then_with(|| {
                ka.2.partial_cmp(&kb.2).unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    let position: Vec<usize> = {
        let mut pos = vec![0usize; order.len()];
        for (new_idx, &old_idx) in order.iter().enumerate() {
            pos[old_idx] = new_idx;
        }
        pos
    };
    let sorted: Vec<RawBlock> = order.iter().map(|&i| raws[i].clone()).collect();
    let dual_map: Vec<usize> = order.iter().map(|&i| position[dual_of_raw[i]]).collect();
    drop(raws);
    drop(centrals);

    // Matrix units, with contragredient transport across paired blocks and
    // phase alignment inside self-paired blocks.
    let mut units_raw: Vec<Option<Vec<Vec<CMat>>>> = vec![None; sorted.len()];
    let mut dual_pairing_res: f64 = 0.0;
    for idx in 0..sorted.len() {
        if units_raw[idx].is_some() {
            continue;
        }
        let mut units = complete_units(&sorted[idx], &mut rng)?;
        let d = sorted[idx].dim;
        let m = sorted[idx].unit_trace;
        let partner = dual_map[idx];
        if partner == idx {
            // Align phases so the contragredient maps E_{j,k} to E_{k,j}.
            for j in 1..d {
                let target = bar_of(&units[j][0])?;
                let theta = hs_inner(&units[0][j], &target) / cr(m);
                if (theta.norm() - 1.0).abs() < 1e-6 {
                    let c = theta.sqrt().conj();
                    for k in 0..d {
                        units[j][k] = units[j][k].mapv(|z| z * c);
                        units[k][j] = units[k][j].mapv(|z| z * c.conj());
                    }
                }
            }
            for j in 0..d {
                for k in 0..d {
                    let res = max_abs_diff(&bar_of(&units[j][k])?, &units[k][j]);
                    dual_pairing_res = dual_pairing_res.max(res);
                }
            }
            units_raw[idx] = Some(units);
        } else {
            // Transport units to the partner block through the
            // contragredient; eigenvalue lists coincide by construction.
            let mut partner_units = vec![vec![zeros(dim); d]; d];
            for j in 0..d {
                for k in 0..d {
                    partner_units[k][j] = bar_of(&units[j][k])?;
                }
            }
            units_raw[idx] = Some(units);
            units_raw[partner] = Some(partner_units);
        }
    }

    // Assemble blocks: coefficients of the modular element, diagonalizing
    // unitaries, eigenvalue pairing.
    let mut blocks: Vec<DirectionalBlock> = Vec::with_capacity(sorted.len());
    let mut unit_rel_res: f64 = 0.0;
    let mut dressed_res: f64 = 0.0;
    let mut modular_res: f64 = 0.0;
    let mut diag_res: f64 = 0.0;
    let mut dual_inv_res: f64 = 0.0;
    for idx in 0..sorted.len() {
        let rb = &sorted[idx];
        let units = units_raw[idx].clone().expect("all blocks populated");
        let d = rb.dim;
        let m = rb.unit_trace;

        // Structural checks on the units.
        for j in 0..d {
            for k in 0..d {
                for s in 0..d {
                    for t in 0..d {
                        let prod = units[j][k].dot(&units[s][t]);
                        let expect = if k == s {
                            units[j][t].clone()
                        } else {
                            zeros(dim)
                        };
                        unit_rel_res = unit_rel_res.max(max_abs_diff(&prod, &expect));
                    }
                }
            }
        }
        let mut zsum = zeros(dim);
        for j in 0..d {
            zsum = &zsum + &units[j][j];
        }
        unit_rel_res = unit_rel_res.max(max_abs_diff(&zsum, &rb.z));

        // Eigenvalues of the dressed block on the (possibly transported)
        // diagonal units.
        let bz = herm_part(&rb.z.dot(&l_delta.y).dot(&rb.z));
        let mut omega = Vec::with_capacity(d);
        for j in 0..d {
            let w = hs_inner(&units[j][j], &bz).re / m;
            omega.push(w);
        }
        let mut reass = zeros(dim);
        for j in 0..d {
            reass = &reass + &units[j][j].mapv(|z| z * cr(omega[j]));
        }
        dressed_res = dressed_res.max(max_abs_diff(&reass, &bz));

        // Modular coefficients on the block.
        let dz = herm_part(&rb.z.dot(&delta_half_carrier).dot(&rb.z));
        let mut a_coeff = zeros(d);
        for j in 0..d {
            for k in 0..d {
                a_coeff[(j, k)] = hs_inner(&units[j][k], &dz) / cr(m);
            }
        }
        let mut dreass = zeros(dim);
        for j in 0..d {
            for k in 0..d {
                dreass = &dreass + &units[j][k].mapv(|z| z * a_coeff[(j, k)]);
            }
        }
        modular_res = modular_res.max(max_abs_diff(&dreass, &dz));

        // Diagonalizing unitary: fresh for a leading block, conjugated for
        // a transported partner (so that μ' = 1/μ index-aligned).
        let partner = dual_map[idx];
        let (u_coeff, mu): (CMat, Vec<f64>) = if partner < idx {
            let lead = &blocks[partner];
            let u = lead.u_coeff.mapv(|z| z.conj());
            let mu: Vec<f64> = lead.mu.iter().map(|v| 1.0 / v).collect();
            (u, mu)
        } else {
            let eig = herm_eig(&a_coeff)?;
            if eig.min_eig() <= 0.0 {
                return Err(Error::InvalidParameters {
                    reason: "modular coefficients are not positive definite on a block"
                        .into(),
                });
            }
            // Decreasing eigenvalues; fix each column's phase by making its
            // largest entry real positive.
            let mut u = zeros(d);
            let mut mu = Vec::with_capacity(d);
            for (col, src) in (0..d).rev().enumerate() {
                mu.push(eig.eigenvalues[src]);
                let mut best = (0.0f64, 0usize);
                for r in 0..d {
                    let a = eig.eigenvectors[(r, src)].norm();
                    if a > best.0 + 1e-12 {
                        best = (a, r);
                    }
                }
                let pivot = eig.eigenvectors[(best.1, src)];
                let phase = if pivot.norm() > 0.0 {
                    pivot.conj() / cr(pivot.norm())
                } else {
                    C_ONE
                };
                for r in 0..d {
                    u[(r, col)] = eig.eigenvectors[(r, src)] * phase;
                }
            }
            (u, mu)
        };
        let mut diag_check = zeros(d);
        for j in 0..d {
            diag_check[(j, j)] = cr(mu[j]);
        }
        let ua = dagger(&u_coeff).dot(&a_coeff).dot(&u_coeff);
        diag_res = diag_res.max(max_abs_diff(&ua, &diag_check));
        if partner < idx {
            let lead = &blocks[partner];
            let inv_t = {
                // a' should equal the inverse transpose of the partner's
                // coefficients.
                let eig = herm_eig(&lead.a_coeff)?;
                let mut inv = zeros(d);
                for i in 0..d {
                    let li = cr(1.0 / eig.eigenvalues[i]);
                    for r in 0..d {
                        for c in 0..d {
                            inv[(r, c)] += li
                                * eig.eigenvectors[(r, i)]
                                * eig.eigenvectors[(c, i)].conj();
                        }
                    }
                }
                inv.t().mapv(|z| z)
            };
            dual_inv_res = dual_inv_res.max(max_abs_diff(&a_coeff, &inv_t));
        }

        let units_rel: Vec<Vec<RelCommElem>> = units
            .iter()
            .map(|row| {
                row.iter()
                    .map(|u| RelCommElem::new(&model, u.clone()))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        blocks.push(DirectionalBlock {
            dim: d,
            dual: dual_map[idx],
            unit_trace: m,
            z: RelCommElem::new(&model, rb.z.clone())?,
            omega,
            units: units_rel,
            a_coeff,
            u_coeff,
            mu,
        });
    }

    if unit_rel_res > FRAME_TOL * (1.0 + scale)
        || dressed_res > FRAME_TOL * (1.0 + scale)
        || modular_res > FRAME_TOL * (1.0 + scale)
    {
        return Err(Error::InvalidParameters {
            reason: format!(
                "matrix-unit construction failed (units {unit_rel_res:.3e}, dressed \
                 {dressed_res:.3e}, modular {modular_res:.3e})"
            ),
        });
    }

    // Directions.
    let delta_minus_half_carrier = mat_pow(&herm_part(&gen.delta.y), -0.5)?;
    let mut directions = Vec::new();
    for (bidx, block) in blocks.iter().enumerate() {
        let d = block.dim;
        let dz = herm_part(&block.z.y.dot(&delta_half_carrier));
        let dz_minus = herm_part(&block.z.y.dot(&delta_minus_half_carrier));
        for k in 0..d {
            let mut et = zeros(dim);
            for t in 0..d {
                et = &et + &block.units[k][t].y.mapv(|z| z * block.u_coeff[(t, k)].conj());
            }
            let mut w1 = zeros(dim);
            for j in 0..d {
                w1 = &w1
                    + &block.units[k][j]
                        .y
                        .mapv(|z| z * (cr(block.omega[j]) * block.u_coeff[(j, k)].conj()));
            }
            let delta_dir_carrier = w1.dot(&dz);
            let delta_dir_minus_carrier = w1.dot(&dz_minus);
            let e_tilde = RelCommElem::new(&model, et)?;
            let delta_dir = RelCommElem::new(&model, delta_dir_carrier)?;
            let delta_dir_minus = RelCommElem::new(&model, delta_dir_minus_carrier)?;
            let a_mod = fourier_inv_module(&model, &e_tilde)?;
            let a_mod_dag = a_mod.m1_dagger();
            let b_mod = fourier_inv_module(&model, &delta_dir)?;
            let b_minus_mod = fourier_inv_module(&model, &delta_dir_minus)?;
            directions.push(Direction {
                block: bidx,
                index: k,
                omega: block.omega[k],
                mu: block.mu[k],
                e_tilde,
                delta_dir,
                delta_dir_minus,
                a_mod,
                a_mod_dag,
                b_mod,
                b_minus_mod,
            });
        }
    }

    Ok(DirectionalFrame {
        model,
        lambda,
        range_dim,
        q,
        l_delta,
        delta_half,
        blocks,
        directions,
        residuals: FrameResiduals {
            unit_relations: unit_rel_res,
            dressed_reassembly: dressed_res,
            modular_reassembly: modular_res,
            diagonalization: diag_res,
            dual_pairing: dual_pairing_res,
            dual_inverse: dual_inv_res,
        },
        l0_half_mod,
        l_delta_half_mod,
    })
}

// ---------------------------------------------------------------------------
// Calculus on the frame
// ---------------------------------------------------------------------------

impl DirectionalFrame {
    /// Number of directions.
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    fn check_operand(&self, x: &CMat) -> Result<()> {
        let n = self.model.n;
        if x.nrows() != n || x.ncols() != n {
            return Err(Error::InvalidParameters {
                reason: format!(
                    "operand is {}×{}, expected {}×{}",
                    x.nrows(),
                    x.ncols(),
                    n,
                    n
                ),
            });
        }
        Ok(())
    }

    fn check_tuple(&self, xs: &[ModuleElement]) -> Result<()> {
        if xs.len() != self.directions.len() {
            return Err(Error::InvalidParameters {
                reason: format!(
                    "tuple has {} components, frame has {} directions",
                    xs.len(),
                    self.directions.len()
                ),
            });
        }
        Ok(())
    }

    /// Difference operator of one direction: `∂_k x = x·A_k − A_k·x`.
    pub fn partial(&self, k: usize, x: &CMat) -> Result<ModuleElement> {
        self.check_operand(x)?;
        let a = &self.directions[k].a_mod;
        Ok(a.m_lmul(x).sub(&a.m_rmul(x)))
    }

    /// Gradient: all difference quotients.
    pub fn gradient(&self, x: &CMat) -> Result<Vec<ModuleElement>> {
        (0..self.directions.len()).map(|k| self.partial(k, x)).collect()
    }

    /// Divergence, the adjoint of the gradient for the plain normalized
    /// inner products on the middle algebra and on `M`:
    /// `Div ξ = Σ_k E_M([ξ_k, A_k†])`.
    pub fn divergence(&self, xs: &[ModuleElement]) -> Result<CMat> {
        self.check_tuple(xs)?;
        let mut out = zeros(self.model.n);
        for (k, xk) in xs.iter().enumerate() {
            let ad = &self.directions[k].a_mod_dag;
            let comm = xk.m1_mul(ad).sub(&ad.m1_mul(xk));
            out = &out + &comm.e_m();
        }
        Ok(out)
    }

    /// Directional matrix: `(Π ξ)_k = Σ_t π^{(ℓ)}_{k,t} E_{k,t} ▷ ξ_t`
    /// within each block, where `π = u† diag(ω) u diag(μ)` and `▷` is the
    /// coefficient action on the module.
    pub fn apply_pi(&self, xs: &[ModuleElement]) -> Result<Vec<ModuleElement>> {
        self.check_tuple(xs)?;
        let mut out = Vec::with_capacity(xs.len());
        let mut offset = 0usize;
        for block in &self.blocks {
            let d = block.dim;
            let mut pi = zeros(d);
            for k in 0..d {
                for t in 0..d {
                    let mut acc = C_ZERO;
                    for j in 0..d {
                        acc += block.u_coeff[(j, k)].conj()
                            * cr(block.omega[j])
                            * block.u_coeff[(j, t)];
                    }
                    pi[(k, t)] = acc * cr(block.mu[t]);
                }
            }
            for k in 0..d {
                let mut acc = ModuleElement::zeros(&self.model);
                for t in 0..d {
                    let transported = xs[offset + t]
                        .hat_action(&block.units[k][t])
                        .scale(pi[(k, t)]);
                    acc = acc.add(&transported);
                }
                out.push(acc);
            }
            offset += d;
        }
        Ok(out)
    }

    /// Weight transform of one component: spectral multiplier with the
    /// logarithmic mean `Λ(λ_a/μ, μ·λ_b)` over the eigenbasis of the state.
    /// `inverse` divides by the weights instead.
    pub fn weight_transform(
        &self,
        state: &CMat,
        mu: f64,
        v: &ModuleElement,
        inverse: bool,
    ) -> Result<ModuleElement> {
        self.check_operand(state)?;
        if mu <= 0.0 {
            return Err(Error::InvalidMu { mu });
        }
        let eig = herm_eig(&herm_part(state))?;
        if eig.min_eig() <= 0.0 {
            return Err(Error::InvalidParameters {
                reason: format!(
                    "weight transform needs a strictly positive state (min eigenvalue {:.3e})",
                    eig.min_eig()
                ),
            });
        }
        let n = self.model.n;
        let vmat = &eig.eigenvectors;
        let vdag = dagger(vmat);
        let mut w = vec![vec![0.0f64; n]; n];
        for r in 0..n {
            for s in 0..n {
                let lm = log_mean(eig.eigenvalues[r] / mu, mu * eig.eigenvalues[s])?;
                w[r][s] = if inverse { 1.0 / lm } else { lm };
            }
        }
        let rotated = v.m_lmul(&vdag).m_rmul(vmat);
        let scaled = scale_m_legs(&self.model, &rotated, &w)?;
        Ok(scaled.m_lmul(vmat).m_rmul(&vdag))
    }

    /// Weight transform applied across a whole tuple with each direction's
    /// modular eigenvalue.
    pub fn weight_transform_tuple(
        &self,
        state: &CMat,
        xs: &[ModuleElement],
        inverse: bool,
    ) -> Result<Vec<ModuleElement>> {
        self.check_tuple(xs)?;
        xs.iter()
            .enumerate()
            .map(|(k, v)| self.weight_transform(state, self.directions[k].mu, v, inverse))
            .collect()
    }

    /// Metric pairing of two tuples in a state:
    /// `Σ_k ⟨x_k, (K_D Π y)_k⟩` with the normalized middle-algebra trace.
    pub fn weighted_inner(
        &self,
        state: &CMat,
        xs: &[ModuleElement],
        ys: &[ModuleElement],
    ) -> Result<f64> {
        self.check_tuple(xs)?;
        self.check_tuple(ys)?;
        let piy = self.apply_pi(ys)?;
        let kpiy = self.weight_transform_tuple(state, &piy, false)?;
        let mut acc = 0.0;
        for (xk, wk) in xs.iter().zip(kpiy.iter()) {
            acc += xk.inner_tau1(wk).re;
        }
        Ok(acc)
    }

    /// Dual dissipative generator in divergence form, written directly in
    /// the modular-weighted differences:
    /// `κ · Σ_k E_M([μ_k⁻¹ D B_k⁻ − μ_k B_k⁺ D, A_k†])` with `κ = λ^{−1/2}/2`.
    ///
    /// The left slot carries the inverse-weighted direction `B_k⁻` and the
    /// right slot the weighted one `B_k⁺`: summed against the directions
    /// these reassemble `Δ̂^{∓1/2} L̂_Δ Δ̂^{∓1/2}`, which is exactly the pair
    /// of coefficients the two sides of the dual generator require.
    pub fn laplacian_dual_direct(&self, state: &CMat) -> Result<CMat> {
        self.check_operand(state)?;
        let mut out = zeros(self.model.n);
        for dir in &self.directions {
            let v = dir
                .b_minus_mod
                .m_lmul(state)
                .scale(cr(1.0 / dir.mu))
                .sub(&dir.b_mod.m_rmul(state).scale(cr(dir.mu)));
            let comm = v.m1_mul(&dir.a_mod_dag).sub(&dir.a_mod_dag.m1_mul(&v));
            out = &out + &comm.e_m();
        }
        Ok(out.mapv(|z| z * cr(master_prefactor(self.lambda))))
    }

    /// Dual dissipative generator in gradient-flow form:
    /// `κ · Div K_D Π ∇ log D − 2κ · Σ_k log μ_k · E_M([K_{D,μ_k}(B_k⁺), A_k†])
    ///  + κ · Σ_k E_M([μ_k⁻¹ D (B_k⁻ − B_k⁺), A_k†])`.
    ///
    /// The first term is the metric gradient of the entropy; the other two
    /// are the drift produced by the modular weights (they vanish when the
    /// modular element is trivial on the dissipative range).
    pub fn laplacian_dual_flow(&self, state: &CMat) -> Result<CMat> {
        self.check_operand(state)?;
        let kappa = master_prefactor(self.lambda);
        let n = self.model.n;
        if self.directions.is_empty() {
            return Ok(zeros(n));
        }
        let logd = herm_log(state)?;
        let grad = self.gradient(&logd)?;
        let pigrad = self.apply_pi(&grad)?;
        let kpigrad = self.weight_transform_tuple(state, &pigrad, false)?;
        let main = self.divergence(&kpigrad)?;

        let mut drift = zeros(n);
        for dir in &self.directions {
            let kb = self.weight_transform(state, dir.mu, &dir.b_mod, false)?;
            let comm = kb.m1_mul(&dir.a_mod_dag).sub(&dir.a_mod_dag.m1_mul(&kb));
            drift = &drift + &comm.e_m().mapv(|z| z * cr(2.0 * dir.mu.ln()));

            let skew = dir
                .b_minus_mod
                .sub(&dir.b_mod)
                .m_lmul(state)
                .scale(cr(1.0 / dir.mu));
            let comm2 = skew.m1_mul(&dir.a_mod_dag).sub(&dir.a_mod_dag.m1_mul(&skew));
            drift = &drift - &comm2.e_m();
        }
        Ok((&main - &drift).mapv(|z| z * cr(kappa)))
    }

    /// Residuals of the three equivalent vanishing-gradient criteria for an
    /// element of the middle algebra: the gradient itself, the commutator
    /// with the transported square root of the dressed block, and the
    /// commutator with the transported square root of the plain block.
    pub fn kernel_residuals(&self, x: &CMat) -> Result<(f64, f64, f64)> {
        self.check_operand(x)?;
        let mut g = 0.0f64;
        for k in 0..self.directions.len() {
            g = g.max(self.partial(k, x)?.norm_tau1());
        }
        let cd = self
            .l_delta_half_mod
            .m_lmul(x)
            .sub(&self.l_delta_half_mod.m_rmul(x))
            .norm_tau1();
        let c0 = self
            .l0_half_mod
            .m_lmul(x)
            .sub(&self.l0_half_mod.m_rmul(x))
            .norm_tau1();
        Ok((g, cd, c0))
    }

    /// Serializable view.
    pub fn summary(&self) -> FrameSummary {
        FrameSummary {
            lambda: self.lambda,
            range_dim: self.range_dim,
            direction_count: self.directions.len(),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockSummary {
                    dim: b.dim,
                    dual: b.dual,
                    unit_trace: b.unit_trace,
                    omega: b.omega.clone(),
                    mu: b.mu.clone(),
                    u: (0..b.dim)
                        .map(|r| {
                            (0..b.dim)
                                .map(|c| [b.u_coeff[(r, c)].re, b.u_coeff[(r, c)].im])
                                .collect()
                        })
                        .collect(),
                })
                .collect(),
            residuals: self.residuals.clone(),
        }
    }
}

/// Entrywise multiplier on the two middle-algebra legs of a module element.
fn scale_m_legs(
    model: &InclusionModel,
    v: &ModuleElement,
    w: &[Vec<f64>],
) -> Result<ModuleElement> {
    let n = model.n;
    if model.is_diag() {
        let t = v.rank3().ok_or_else(|| Error::InvalidParameters {
            reason: "diagonal model expects a rank-3 module carrier".into(),
        })?;
        let mut out = t.clone();
        for r in 0..n {
            for s in 0..n {
                for k in 0..n {
                    out[(r, s, k)] = t[(r, s, k)] * cr(w[r][s]);
                }
            }
        }
        ModuleElement::from_rank3(model, out)
    } else {
        let a = v.mat().ok_or_else(|| Error::InvalidParameters {
            reason: "full model expects a matrix module carrier".into(),
        })?;
        let mut out = a.clone();
        for r in 0..n {
            for s in 0..n {
                for b1 in 0..n {
                    for b2 in 0..n {
                        out[(r * n + b1, s * n + b2)] =
                            a[(r * n + b1, s * n + b2)] * cr(w[r][s]);
                    }
                }
            }
        }
        ModuleElement::from_mat(model, out)
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
