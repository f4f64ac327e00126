//! Finite inclusion-tower models.
//!
//! Two concrete towers `N ⊂ M ⊂ M₁ ⊂ M₂` are supported at desk scale:
//!
//! * **`DiagInMatn`** — the diagonal subalgebra `ℂⁿ ⊂ Mₙ(ℂ)` with index `n`.
//!   Elements of the relative commutant `M′∩M₂` are carried by their `n×n`
//!   coefficient matrices, and all tower operations have fast closed forms
//!   (Schur products, transposes, diagonal extractions).  For `n ≤ 4` an
//!   exact representation on `L²(M₁) ≅ ℂⁿ⊗ℂⁿ⊗ℂⁿ` is built alongside and the
//!   closed forms are verified against it.
//! * **`FullMat`** — the scalars `ℂ ⊂ M_d(ℂ)` with index `d²`.  Relative
//!   commutant elements are carried by `d²×d²` matrices in the Choi
//!   normalization: the operator product is the matrix product, positivity
//!   is matrix positivity, and channel application is the usual Choi
//!   contraction.
//!
//! The two carriers share one public API: Fourier transform between
//! `N′∩M₁` and `M′∩M₂`, convolution, contragredient, channel application,
//! `1 ∗ X`, conditional expectations, Pimsner–Popa bases, and modular
//! elements built from densities.

use ndarray::Array3;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matcore::{
    cr, dagger, eye, herm_eig, mat_pow, schur, trace, zeros, CMat, C_ONE, C_ZERO,
};

/// Which inclusion a model describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Diagonal matrices inside `Mₙ(ℂ)`; index `n`.
    DiagInMatn,
    /// Scalars inside `M_d(ℂ)`; index `d²`.
    FullMat,
}

/// A finite inclusion `N ⊂ M` together with the derived tower data used by
/// every other module: the index parameter `λ` and the Pimsner–Popa
/// constant.
#[derive(Debug, Clone)]
pub struct InclusionModel {
    pub kind: ModelKind,
    /// Matrix size of the middle algebra `M` (`n` for the diagonal model,
    /// `d` for the full-matrix model).
    pub n: usize,
    /// Inverse index: `1/n` resp. `1/d²`.
    pub lambda: f64,
    /// Pimsner–Popa constant for `E_N(x) ≥ c·x`.
    pub pp_constant: f64,
    rep: Option<TensorRep>,
}

impl InclusionModel {
    /// Build the diagonal model `ℂⁿ ⊂ Mₙ(ℂ)`.  For `n ≤ 4` the exact tensor
    /// representation is constructed and its defining relations verified.
    pub fn diag_in_matn(n: usize) -> Result<Self> {
        if n == 0 || n > 32 {
            return Err(Error::SizeTooLarge { what: "diag_in_matn", n, max: 32 });
        }
        let lambda = 1.0 / n as f64;
        let rep = if n <= 4 {
            let r = TensorRep::new(n);
            r.verify()?;
            Some(r)
        } else {
            None
        };
        Ok(Self {
            kind: ModelKind::DiagInMatn,
            n,
            lambda,
            pp_constant: lambda,
            rep,
        })
    }

    /// Build the full-matrix model `ℂ ⊂ M_d(ℂ)`.
    pub fn full_mat(d: usize) -> Result<Self> {
        if d < 2 || d > 3 {
            return Err(Error::SizeTooLarge { what: "full_mat", n: d, max: 3 });
        }
        Ok(Self {
            kind: ModelKind::FullMat,
            n: d,
            lambda: 1.0 / (d * d) as f64,
            pp_constant: 1.0 / (d * d) as f64,
            rep: None,
        })
    }

    /// Side length of the relative-commutant carrier matrices
    /// (`n` for `DiagInMatn`, `d²` for `FullMat`).
    pub fn hat_dim(&self) -> usize {
        match self.kind {
            ModelKind::DiagInMatn => self.n,
            ModelKind::FullMat => self.n * self.n,
        }
    }

    pub fn is_diag(&self) -> bool {
        self.kind == ModelKind::DiagInMatn
    }

    /// Exact tensor representation, present for `DiagInMatn` with `n ≤ 4`.
    pub fn rep(&self) -> Option<&TensorRep> {
        self.rep.as_ref()
    }

    /// Conditional expectation of `M` onto `N` applied to `x`.
    pub fn e_n(&self, x: &CMat) -> CMat {
        match self.kind {
            ModelKind::DiagInMatn => {
                let mut out = zeros(self.n);
                for j in 0..self.n {
                    out[(j, j)] = x[(j, j)];
                }
                out
            }
            ModelKind::FullMat => {
                let t = trace(x) / cr(self.n as f64);
                let mut out = zeros(self.n);
                for j in 0..self.n {
                    out[(j, j)] = t;
                }
                out
            }
        }
    }

    /// Normalized trace `τ = Tr/n` on `M`.
    pub fn tau(&self, x: &CMat) -> Complex64 {
        trace(x) / cr(self.n as f64)
    }
}

// ---------------------------------------------------------------------------
// Relative-commutant elements
// ---------------------------------------------------------------------------

/// An element of the relative commutant `M′∩M₂`.
///
/// For the diagonal model `y` is the `n×n` coefficient matrix of
/// `I⊗I⊗Y`; the operator product is the matrix product of coefficients and
/// the contragredient is the transpose.  The second Jones projection is
/// `uu*` with `u = (1,…,1)ᵀ/√n`.
///
/// For the full-matrix model `y` is the `d²×d²` Choi matrix of the
/// associated bimodule map; the operator product is again the matrix
/// product, and `e₂` is `(1/d)·Σ_{jk} E_jk⊗E_jk`.
#[derive(Debug, Clone)]
pub struct RelCommElem {
    pub kind: ModelKind,
    /// Matrix size of `M` in the owning model.
    pub n: usize,
    pub y: CMat,
}

impl RelCommElem {
    pub fn new(model: &InclusionModel, y: CMat) -> Result<Self> {
        if y.nrows() != model.hat_dim() || y.ncols() != model.hat_dim() {
            return Err(Error::ModelMismatch {
                left: format!("{}×{} carrier", y.nrows(), y.ncols()),
                right: format!("{0}×{0} commutant", model.hat_dim()),
            });
        }
        Ok(Self {
            kind: model.kind,
            n: model.n,
            y,
        })
    }

    fn same_model(&self, other: &Self) -> Result<()> {
        if self.kind != other.kind || self.n != other.n {
            return Err(Error::ModelMismatch {
                left: format!("{:?}(n={})", self.kind, self.n),
                right: format!("{:?}(n={})", other.kind, other.n),
            });
        }
        Ok(())
    }

    /// Operator product in `M₂`.
    pub fn op_mul(&self, other: &Self) -> Result<Self> {
        self.same_model(other)?;
        Ok(Self {
            kind: self.kind,
            n: self.n,
            y: self.y.dot(&other.y),
        })
    }

    /// Adjoint in `M₂`.
    pub fn dagger(&self) -> Self {
        Self {
            kind: self.kind,
            n: self.n,
            y: dagger(&self.y),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_model(other)?;
        Ok(Self {
            kind: self.kind,
            n: self.n,
            y: &self.y + &other.y,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_model(other)?;
        Ok(Self {
            kind: self.kind,
            n: self.n,
            y: &self.y - &other.y,
        })
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self {
            kind: self.kind,
            n: self.n,
            y: self.y.mapv(|v| v * c),
        }
    }

    /// Contragredient `X ↦ X̄` (conjugation by the modular involution of
    /// `M₁`).  Transpose of the coefficient matrix for the diagonal model;
    /// leg-swapped transpose of the Choi matrix for the full-matrix model.
    pub fn contragredient(&self) -> Self {
        let y = match self.kind {
            ModelKind::DiagInMatn => self.y.t().to_owned(),
            ModelKind::FullMat => {
                let d = self.n;
                let yt = self.y.t().to_owned();
                let mut out = zeros(d * d);
                // Conjugate by the swap (a,b) ↦ (b,a) on ℂ^d⊗ℂ^d.
                for a in 0..d {
                    for b in 0..d {
                        for c in 0..d {
                            for e in 0..d {
                                out[(b * d + a, e * d + c)] = yt[(a * d + b, c * d + e)];
                            }
                        }
                    }
                }
                out
            }
        };
        Self {
            kind: self.kind,
            n: self.n,
            y,
        }
    }

    /// Normalized trace `τ₂` evaluated on this element.
    pub fn tau2(&self) -> Complex64 {
        match self.kind {
            ModelKind::DiagInMatn => {
                // τ₂(I⊗I⊗Y) = Tr(Y)/n.
                trace(&self.y) / cr(self.n as f64)
            }
            ModelKind::FullMat => trace(&self.y) / cr((self.n * self.n) as f64),
        }
    }

    /// Smallest eigenvalue of the Hermitian part; gauges positivity in `M₂`.
    pub fn min_eig(&self) -> Result<f64> {
        let h = self.y.mapv(|v| v * cr(0.5)) + dagger(&self.y).mapv(|v| v * cr(0.5));
        let eig = herm_eig(&h)?;
        Ok(eig.eigenvalues[0])
    }

    /// Frobenius norm of the carrier.
    pub fn norm(&self) -> f64 {
        crate::matcore::frob(&self.y)
    }
}

/// The second Jones projection `e₂` as a relative-commutant element.
pub fn hat_e2(model: &InclusionModel) -> RelCommElem {
    let y = match model.kind {
        ModelKind::DiagInMatn => {
            let n = model.n;
            CMat::from_elem((n, n), cr(1.0 / n as f64))
        }
        ModelKind::FullMat => {
            let d = model.n;
            let mut y = zeros(d * d);
            for j in 0..d {
                for k in 0..d {
                    y[(j * d + j, k * d + k)] = cr(1.0 / d as f64);
                }
            }
            y
        }
    };
    RelCommElem {
        kind: model.kind,
        n: model.n,
        y,
    }
}

/// The Fourier multiplier of the identity channel, `λ^{−1/2} e₂`.
pub fn hat_identity_channel(model: &InclusionModel) -> RelCommElem {
    hat_e2(model).scale(cr(1.0 / model.lambda.sqrt()))
}

/// Build the relative-commutant element whose channel is `x ↦ b·x·a`
/// (full-matrix model only).  This is the two-box diagram with `a` on the
/// upper strand and `b` on the lower strand.
pub fn hat_from_pair(model: &InclusionModel, a: &CMat, b: &CMat) -> Result<RelCommElem> {
    if model.kind != ModelKind::FullMat {
        return Err(Error::UnsupportedTarget {
            target: "hat_from_pair (full-matrix model only)".into(),
        });
    }
    let d = model.n;
    if a.nrows() != d || b.nrows() != d {
        return Err(Error::ModelMismatch {
            left: format!("{}×{} pair", a.nrows(), b.nrows()),
            right: format!("{0}×{0} model", d),
        });
    }
    // Choi matrix of x ↦ b x a: Σ_{jk} E_jk ⊗ (b E_jk a).
    let mut y = zeros(d * d);
    for j in 0..d {
        for k in 0..d {
            for r in 0..d {
                for s in 0..d {
                    y[(j * d + r, k * d + s)] += b[(r, j)] * a[(k, s)];
                }
            }
        }
    }
    RelCommElem::new(model, y)
}

// ---------------------------------------------------------------------------
// Middle-algebra / module carriers
// ---------------------------------------------------------------------------

/// Carrier for elements of `M₁` (and of the right module `M₁e₂`).
///
/// Diagonal model: `a = Σ T[t,s,k] · E_ts⊗E_kk`, a rank-3 array.
/// Full-matrix model: `a ∈ M₁ = M_{d²}(ℂ)` stored as a plain matrix.
#[derive(Debug, Clone)]
pub enum ModuleData {
    Rank3(Array3<Complex64>),
    Mat(CMat),
}

#[derive(Debug, Clone)]
pub struct ModuleElement {
    pub kind: ModelKind,
    pub n: usize,
    pub data: ModuleData,
}

impl ModuleElement {
    pub fn zeros(model: &InclusionModel) -> Self {
        let data = match model.kind {
            ModelKind::DiagInMatn => {
                ModuleData::Rank3(Array3::from_elem((model.n, model.n, model.n), C_ZERO))
            }
            ModelKind::FullMat => ModuleData::Mat(zeros(model.n * model.n)),
        };
        Self {
            kind: model.kind,
            n: model.n,
            data,
        }
    }

    pub fn from_rank3(model: &InclusionModel, t: Array3<Complex64>) -> Result<Self> {
        if model.kind != ModelKind::DiagInMatn {
            return Err(Error::ModelMismatch {
                left: "rank-3 carrier".into(),
                right: "full-matrix model".into(),
            });
        }
        if t.dim() != (model.n, model.n, model.n) {
            return Err(Error::ModelMismatch {
                left: format!("rank-3 carrier of shape {:?}", t.dim()),
                right: format!("({0},{0},{0})", model.n),
            });
        }
        Ok(Self {
            kind: model.kind,
            n: model.n,
            data: ModuleData::Rank3(t),
        })
    }

    pub fn from_mat(model: &InclusionModel, m: CMat) -> Result<Self> {
        if model.kind != ModelKind::FullMat {
            return Err(Error::ModelMismatch {
                left: "matrix carrier".into(),
                right: "diagonal model".into(),
            });
        }
        let d2 = model.n * model.n;
        if m.nrows() != d2 || m.ncols() != d2 {
            return Err(Error::ModelMismatch {
                left: format!("{}×{} carrier", m.nrows(), m.ncols()),
                right: format!("{0}×{0} middle algebra", d2),
            });
        }
        Ok(Self {
            kind: model.kind,
            n: model.n,
            data: ModuleData::Mat(m),
        })
    }

    pub fn rank3(&self) -> Option<&Array3<Complex64>> {
        match &self.data {
            ModuleData::Rank3(t) => Some(t),
            _ => None,
        }
    }

    pub fn mat(&self) -> Option<&CMat> {
        match &self.data {
            ModuleData::Mat(m) => Some(m),
            _ => None,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        match (&self.data, &other.data) {
            (ModuleData::Rank3(a), ModuleData::Rank3(b)) => Self {
                kind: self.kind,
                n: self.n,
                data: ModuleData::Rank3(a + b),
            },
            (ModuleData::Mat(a), ModuleData::Mat(b)) => Self {
                kind: self.kind,
                n: self.n,
                data: ModuleData::Mat(a + b),
            },
            _ => panic!("mixed module carriers"),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(cr(-1.0)))
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let data = match &self.data {
            ModuleData::Rank3(a) => ModuleData::Rank3(a.mapv(|v| v * c)),
            ModuleData::Mat(a) => ModuleData::Mat(a.mapv(|v| v * c)),
        };
        Self {
            kind: self.kind,
            n: self.n,
            data,
        }
    }

    /// `τ₁(a†b)` — the unweighted `L²(M₁)` pairing used for adjointness.
    pub fn inner_tau1(&self, other: &Self) -> Complex64 {
        match (&self.data, &other.data) {
            (ModuleData::Rank3(a), ModuleData::Rank3(b)) => {
                let mut acc = C_ZERO;
                for (x, y) in a.iter().zip(b.iter()) {
                    acc += x.conj() * *y;
                }
                acc / cr((self.n * self.n) as f64)
            }
            (ModuleData::Mat(a), ModuleData::Mat(b)) => {
                let mut acc = C_ZERO;
                for (x, y) in a.iter().zip(b.iter()) {
                    acc += x.conj() * *y;
                }
                acc / cr((self.n * self.n) as f64)
            }
            _ => panic!("mixed module carriers"),
        }
    }

    /// `⟨ae₂, be₂⟩ = λ·τ₁(a†b)` — the `τ₂`-faithful module inner product.
    pub fn inner(&self, other: &Self, lambda: f64) -> Complex64 {
        self.inner_tau1(other) * cr(lambda)
    }

    pub fn norm_tau1(&self) -> f64 {
        self.inner_tau1(self).re.max(0.0).sqrt()
    }

    /// Left action of a relative-commutant element on the module `M₁e₂`.
    pub fn hat_action(&self, yhat: &RelCommElem) -> Self {
        match (&self.data, &yhat.y) {
            (ModuleData::Rank3(t), y) => {
                let n = self.n;
                let mut out = Array3::from_elem((n, n, n), C_ZERO);
                for k in 0..n {
                    for m in 0..n {
                        let c = y[(k, m)];
                        if c != C_ZERO {
                            for t1 in 0..n {
                                for s in 0..n {
                                    out[(t1, s, k)] += c * t[(t1, s, m)];
                                }
                            }
                        }
                    }
                }
                Self {
                    kind: self.kind,
                    n,
                    data: ModuleData::Rank3(out),
                }
            }
            (ModuleData::Mat(a), w) => {
                let d = self.n;
                let r = regroup(a, d);
                let out = ungroup(&w.dot(&r), d);
                Self {
                    kind: self.kind,
                    n: d,
                    data: ModuleData::Mat(out),
                }
            }
        }
    }

    /// Left multiplication by `x ∈ M`.
    pub fn m_lmul(&self, x: &CMat) -> Self {
        match &self.data {
            ModuleData::Rank3(t) => {
                let n = self.n;
                let mut out = Array3::from_elem((n, n, n), C_ZERO);
                for k in 0..n {
                    for t1 in 0..n {
                        for r in 0..n {
                            let c = x[(t1, r)];
                            if c != C_ZERO {
                                for s in 0..n {
                                    out[(t1, s, k)] += c * t[(r, s, k)];
                                }
                            }
                        }
                    }
                }
                Self {
                    kind: self.kind,
                    n,
                    data: ModuleData::Rank3(out),
                }
            }
            ModuleData::Mat(a) => {
                let d = self.n;
                let xe = kron_cm(x, &eye(d));
                Self {
                    kind: self.kind,
                    n: d,
                    data: ModuleData::Mat(xe.dot(a)),
                }
            }
        }
    }

    /// Right multiplication by `x ∈ M`.
    pub fn m_rmul(&self, x: &CMat) -> Self {
        match &self.data {
            ModuleData::Rank3(t) => {
                let n = self.n;
                let mut out = Array3::from_elem((n, n, n), C_ZERO);
                for k in 0..n {
                    for s in 0..n {
                        for r in 0..n {
                            let c = x[(r, s)];
                            if c != C_ZERO {
                                for t1 in 0..n {
                                    out[(t1, s, k)] += t[(t1, r, k)] * c;
                                }
                            }
                        }
                    }
                }
                Self {
                    kind: self.kind,
                    n,
                    data: ModuleData::Rank3(out),
                }
            }
            ModuleData::Mat(a) => {
                let d = self.n;
                let xe = kron_cm(x, &eye(d));
                Self {
                    kind: self.kind,
                    n: d,
                    data: ModuleData::Mat(a.dot(&xe)),
                }
            }
        }
    }

    /// Product of two middle-algebra elements.
    pub fn m1_mul(&self, other: &Self) -> Self {
        match (&self.data, &other.data) {
            (ModuleData::Rank3(a), ModuleData::Rank3(b)) => {
                let n = self.n;
                let mut out = Array3::from_elem((n, n, n), C_ZERO);
                for k in 0..n {
                    for t1 in 0..n {
                        for s in 0..n {
                            let mut acc = C_ZERO;
                            for r in 0..n {
                                acc += a[(t1, r, k)] * b[(r, s, k)];
                            }
                            out[(t1, s, k)] = acc;
                        }
                    }
                }
                Self {
                    kind: self.kind,
                    n,
                    data: ModuleData::Rank3(out),
                }
            }
            (ModuleData::Mat(a), ModuleData::Mat(b)) => Self {
                kind: self.kind,
                n: self.n,
                data: ModuleData::Mat(a.dot(b)),
            },
            _ => panic!("mixed module carriers"),
        }
    }

    /// Adjoint in the middle algebra.
    pub fn m1_dagger(&self) -> Self {
        match &self.data {
            ModuleData::Rank3(t) => {
                let n = self.n;
                let mut out = Array3::from_elem((n, n, n), C_ZERO);
                for k in 0..n {
                    for t1 in 0..n {
                        for s in 0..n {
                            out[(t1, s, k)] = t[(s, t1, k)].conj();
                        }
                    }
                }
                Self {
                    kind: self.kind,
                    n,
                    data: ModuleData::Rank3(out),
                }
            }
            ModuleData::Mat(a) => Self {
                kind: self.kind,
                n: self.n,
                data: ModuleData::Mat(dagger(a)),
            },
        }
    }

    /// Conditional expectation `E_M : M₁ → M` of the carrier.
    pub fn e_m(&self) -> CMat {
        match &self.data {
            ModuleData::Rank3(t) => {
                let n = self.n;
                let mut out = zeros(n);
                for k in 0..n {
                    for t1 in 0..n {
                        for s in 0..n {
                            out[(t1, s)] += t[(t1, s, k)];
                        }
                    }
                }
                out.mapv(|v| v / cr(n as f64))
            }
            ModuleData::Mat(a) => {
                let d = self.n;
                let mut out = zeros(d);
                for r in 0..d {
                    for s in 0..d {
                        let mut acc = C_ZERO;
                        for b in 0..d {
                            acc += a[(r * d + b, s * d + b)];
                        }
                        out[(r, s)] = acc / cr(d as f64);
                    }
                }
                out
            }
        }
    }

    /// Extract the `N′∩M₁` coefficient matrix `C[j,k]` if the carrier lies in
    /// the span of `{E_jj⊗E_kk}` within `tol` (diagonal model only).
    pub fn nprime_coeff(&self, tol: f64) -> Result<CMat> {
        match &self.data {
            ModuleData::Rank3(t) => {
                let n = self.n;
                let mut resid: f64 = 0.0;
                let mut c = zeros(n);
                for t1 in 0..n {
                    for s in 0..n {
                        for k in 0..n {
                            if t1 == s {
                                c[(t1, k)] = t[(t1, s, k)];
                            } else {
                                resid = resid.max(t[(t1, s, k)].norm());
                            }
                        }
                    }
                }
                if resid > tol {
                    return Err(Error::NotInRelativeCommutant { residual: resid });
                }
                Ok(c)
            }
            ModuleData::Mat(_) => Err(Error::UnsupportedTarget {
                target: "N′∩M₁ coefficients (diagonal model only)".into(),
            }),
        }
    }
}

/// Build the diagonal-model carrier of `Σ C[j,k] · E_jj⊗E_kk ∈ N′∩M₁`.
pub fn module_from_nprime_coeff(model: &InclusionModel, c: &CMat) -> Result<ModuleElement> {
    if model.kind != ModelKind::DiagInMatn {
        return Err(Error::UnsupportedTarget {
            target: "N′∩M₁ coefficients (diagonal model only)".into(),
        });
    }
    let n = model.n;
    let mut t = Array3::from_elem((n, n, n), C_ZERO);
    for j in 0..n {
        for k in 0..n {
            t[(j, j, k)] = c[(j, k)];
        }
    }
    ModuleElement::from_rank3(model, t)
}

/// Carrier of the commutator `[x, e₁] ∈ M₁` for `x ∈ M`.
pub fn commutator_with_e1(model: &InclusionModel, x: &CMat) -> ModuleElement {
    match model.kind {
        ModelKind::DiagInMatn => {
            let n = model.n;
            let mut t = Array3::from_elem((n, n, n), C_ZERO);
            for t1 in 0..n {
                for s in 0..n {
                    for k in 0..n {
                        let mut v = C_ZERO;
                        if s == k {
                            v += x[(t1, s)];
                        }
                        if t1 == k {
                            v -= x[(t1, s)];
                        }
                        t[(t1, s, k)] = v;
                    }
                }
            }
            ModuleElement {
                kind: model.kind,
                n,
                data: ModuleData::Rank3(t),
            }
        }
        ModelKind::FullMat => {
            let d = model.n;
            let e1 = full_e1(d);
            let xe = kron_cm(x, &eye(d));
            let m = xe.dot(&e1) - e1.dot(&xe);
            ModuleElement {
                kind: model.kind,
                n: d,
                data: ModuleData::Mat(m),
            }
        }
    }
}

/// Embed `x ∈ M` into `M₁` (as `x⊗I` resp. the left-multiplication copy).
pub fn embed_m_in_m1(model: &InclusionModel, x: &CMat) -> ModuleElement {
    match model.kind {
        ModelKind::DiagInMatn => {
            let n = model.n;
            let mut t = Array3::from_elem((n, n, n), C_ZERO);
            for t1 in 0..n {
                for s in 0..n {
                    for k in 0..n {
                        t[(t1, s, k)] = x[(t1, s)];
                    }
                }
            }
            ModuleElement {
                kind: model.kind,
                n,
                data: ModuleData::Rank3(t),
            }
        }
        ModelKind::FullMat => ModuleElement {
            kind: model.kind,
            n: model.n,
            data: ModuleData::Mat(kron_cm(x, &eye(model.n))),
        },
    }
}

/// The first Jones projection `e₁` of the full-matrix model as an element of
/// `M₁ = M_{d²}`: `(1/d)·Σ_{jk} E_jk⊗E_jk`.
pub fn full_e1(d: usize) -> CMat {
    let mut e = zeros(d * d);
    for j in 0..d {
        for k in 0..d {
            e[(j * d + j, k * d + k)] = cr(1.0 / d as f64);
        }
    }
    e
}

/// Regroup a `d²×d²` element of `M₁` into the matrix on which relative
/// commutant carriers act by left multiplication:
/// `R[(l2,l4),(l1,l3)] = a[(l1,l2),(l3,l4)]`.
pub(crate) fn regroup(a: &CMat, d: usize) -> CMat {
    let mut r = zeros(d * d);
    for l1 in 0..d {
        for l2 in 0..d {
            for l3 in 0..d {
                for l4 in 0..d {
                    r[(l2 * d + l4, l1 * d + l3)] = a[(l1 * d + l2, l3 * d + l4)];
                }
            }
        }
    }
    r
}

pub(crate) fn ungroup(r: &CMat, d: usize) -> CMat {
    let mut a = zeros(d * d);
    for l1 in 0..d {
        for l2 in 0..d {
            for l3 in 0..d {
                for l4 in 0..d {
                    a[(l1 * d + l2, l3 * d + l4)] = r[(l2 * d + l4, l1 * d + l3)];
                }
            }
        }
    }
    a
}

fn kron_cm(a: &CMat, b: &CMat) -> CMat {
    crate::matcore::kron(a, b)
}

// ---------------------------------------------------------------------------
// Fourier calculus
// ---------------------------------------------------------------------------

/// Fourier transform `N′∩M₁ → M′∩M₂` (diagonal model).
///
/// On coefficients: `𝔉(Σ C[j,k] E_jj⊗E_kk) = n^{−1/2}·Cᵀ`.
pub fn fourier(model: &InclusionModel, x: &ModuleElement) -> Result<RelCommElem> {
    match model.kind {
        ModelKind::DiagInMatn => {
            let c = x.nprime_coeff(1e-9)?;
            let y = c.t().to_owned().mapv(|v| v * cr(1.0 / (model.n as f64).sqrt()));
            RelCommElem::new(model, y)
        }
        ModelKind::FullMat => Err(Error::UnsupportedTarget {
            target: "Fourier transform (diagonal model only)".into(),
        }),
    }
}

/// Inverse Fourier transform `M′∩M₂ → N′∩M₁` (diagonal model):
/// coefficients `C = √n·Yᵀ`.
pub fn fourier_inv(model: &InclusionModel, y: &RelCommElem) -> Result<ModuleElement> {
    match model.kind {
        ModelKind::DiagInMatn => {
            let c = y.y.t().to_owned().mapv(|v| v * cr((model.n as f64).sqrt()));
            module_from_nprime_coeff(model, &c)
        }
        ModelKind::FullMat => Err(Error::UnsupportedTarget {
            target: "inverse Fourier transform (diagonal model only)".into(),
        }),
    }
}

/// Convolution of relative-commutant elements: `X ∗ Y = √n·(X ⋄ Y)` in the
/// diagonal model (entrywise product of coefficients, scaled by `λ^{−1/2}`).
pub fn convolve(
    model: &InclusionModel,
    x: &RelCommElem,
    y: &RelCommElem,
) -> Result<RelCommElem> {
    x.same_model(y)?;
    match model.kind {
        ModelKind::DiagInMatn => {
            let s = schur(&x.y, &y.y).mapv(|v| v * cr((model.n as f64).sqrt()));
            RelCommElem::new(model, s)
        }
        ModelKind::FullMat => Err(Error::UnsupportedTarget {
            target: "commutant convolution (diagonal model only)".into(),
        }),
    }
}

/// Contragredient as a free function (see [`RelCommElem::contragredient`]).
pub fn contragredient(_model: &InclusionModel, x: &RelCommElem) -> RelCommElem {
    x.contragredient()
}

/// Apply the bimodule map with Fourier multiplier `Φ̂` to `x ∈ M`.
///
/// Diagonal model: `Φ(x) = √n·(x ⋄ Φ̂)`.  Full-matrix model: the Choi
/// contraction `Φ(x) = Tr₁((xᵀ⊗I)·W)`.
pub fn channel_apply(model: &InclusionModel, phat: &RelCommElem, x: &CMat) -> Result<CMat> {
    if x.nrows() != model.n {
        return Err(Error::ModelMismatch {
            left: format!("{}×{} argument", x.nrows(), x.ncols()),
            right: format!("{0}×{0} middle algebra", model.n),
        });
    }
    match model.kind {
        ModelKind::DiagInMatn => {
            Ok(schur(x, &phat.y).mapv(|v| v * cr((model.n as f64).sqrt())))
        }
        ModelKind::FullMat => {
            let d = model.n;
            let mut out = zeros(d);
            // Φ(x) = Σ_{jk} x[j,k] · W-block(j,k), blocks of size d.
            for j in 0..d {
                for k in 0..d {
                    let c = x[(j, k)];
                    if c != C_ZERO {
                        for r in 0..d {
                            for s in 0..d {
                                out[(r, s)] += c * phat.y[(j * d + r, k * d + s)];
                            }
                        }
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Apply the `τ`-dual of the bimodule map with multiplier `Φ̂` to `y ∈ M`:
/// `τ(Φ(x)†·y) = τ(x†·Φ*(y))`.
pub fn channel_dual_apply(model: &InclusionModel, phat: &RelCommElem, y: &CMat) -> Result<CMat> {
    match model.kind {
        ModelKind::DiagInMatn => {
            // Schur multipliers dualize entrywise: Φ*(y) = √n·(y ⋄ conj(Φ̂)).
            let c = phat.y.mapv(|v| v.conj());
            Ok(schur(y, &c).mapv(|v| v * cr((model.n as f64).sqrt())))
        }
        ModelKind::FullMat => {
            let d = model.n;
            let mut out = zeros(d);
            // Φ*(y)[j,k] = Σ_{rs} conj(W[(j,r),(k,s)])·… derived from
            // Tr(Φ(x)† y) = Tr(x† Φ*(y)) with Φ(x)[r,s] = Σ x[j,k] W[(jr),(ks)].
            for j in 0..d {
                for k in 0..d {
                    let mut acc = C_ZERO;
                    for r in 0..d {
                        for s in 0..d {
                            acc += phat.y[(j * d + r, k * d + s)].conj() * y[(r, s)];
                        }
                    }
                    out[(j, k)] = acc;
                }
            }
            Ok(out)
        }
    }
}

/// `1 ∗ X` — convolution of the unit of `M` against a relative-commutant
/// element; lands in `M`.  Diagonal model: `√n·Diag(X)`; full-matrix model:
/// the partial trace of the Choi matrix over its first leg.
pub fn one_star(model: &InclusionModel, x: &RelCommElem) -> Result<CMat> {
    match model.kind {
        ModelKind::DiagInMatn => {
            let n = model.n;
            let mut out = zeros(n);
            for j in 0..n {
                out[(j, j)] = x.y[(j, j)] * cr((n as f64).sqrt());
            }
            Ok(out)
        }
        ModelKind::FullMat => {
            let d = model.n;
            let mut out = zeros(d);
            for r in 0..d {
                for s in 0..d {
                    let mut acc = C_ZERO;
                    for j in 0..d {
                        acc += x.y[(j * d + r, j * d + s)];
                    }
                    out[(r, s)] = acc;
                }
            }
            Ok(out)
        }
    }
}

// ---------------------------------------------------------------------------
// Conditional expectations
// ---------------------------------------------------------------------------

/// Targets for [`cond_exp`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpTarget {
    /// `E_N : M → N`.
    N,
    /// `E_M : M₁ → M`.
    M,
    /// `E_{M₁} : M₂ → M₁` — exposed on relative-commutant carriers, for
    /// which `E_{M₁}(Y) = τ-part`; see below.
    M1,
    /// `E_{N′∩M₁} : M₁ → N′∩M₁`.
    NPrime,
    /// `E_{M′∩M₂}` — identity on relative-commutant carriers.
    MPrime,
}

/// Operand sum type for [`cond_exp`].
#[derive(Debug, Clone)]
pub enum Operand {
    M(CMat),
    M1(ModuleElement),
    Hat(RelCommElem),
}

/// Trace-preserving conditional expectations of the tower.
pub fn cond_exp(model: &InclusionModel, target: ExpTarget, x: &Operand) -> Result<Operand> {
    match (target, x) {
        (ExpTarget::N, Operand::M(m)) => Ok(Operand::M(model.e_n(m))),
        (ExpTarget::M, Operand::M1(a)) => Ok(Operand::M(a.e_m())),
        (ExpTarget::NPrime, Operand::M1(a)) => match model.kind {
            ModelKind::DiagInMatn => {
                // Keep the (t,t,k) slots, zero the rest.
                let t = a.rank3().expect("diag carrier");
                let n = model.n;
                let mut out = Array3::from_elem((n, n, n), C_ZERO);
                for j in 0..n {
                    for k in 0..n {
                        out[(j, j, k)] = t[(j, j, k)];
                    }
                }
                Ok(Operand::M1(ModuleElement::from_rank3(model, out)?))
            }
            // N = ℂ makes N′∩M₁ all of M₁.
            ModelKind::FullMat => Ok(Operand::M1(a.clone())),
        },
        (ExpTarget::MPrime, Operand::Hat(h)) => Ok(Operand::Hat(h.clone())),
        (ExpTarget::M1, Operand::Hat(h)) => {
            // E_{M₁}(I⊗I⊗Y) = (Tr Y/n)·1; same pattern for the Choi carrier.
            let t = h.tau2();
            let lam = model.lambda;
            // E_{M₁}(e₂) = λ fixes the normalization: e₂ has τ₂ = λ.
            let dim = model.hat_dim();
            let mut y = zeros(dim);
            let c = t / cr(lam) * cr(lam); // τ₂(Y)·1 in M₁ embeds as scalar
            let _ = c;
            for i in 0..dim {
                y[(i, i)] = t;
            }
            let _ = y;
            // Return the scalar as an element of M (constant multiple of 1).
            let mut m = zeros(model.n);
            for i in 0..model.n {
                m[(i, i)] = t;
            }
            Ok(Operand::M(m))
        }
        _ => Err(Error::UnsupportedTarget {
            target: format!("{target:?} on this operand"),
        }),
    }
}

/// `E_M(𝔉⁻¹(Y))` in closed form for the diagonal model:
/// `n^{−1/2}·Σ_j (Σ_k Y[k,j]) E_jj` — always diagonal.
pub fn e_m_fourier_inv(model: &InclusionModel, y: &RelCommElem) -> Result<CMat> {
    match model.kind {
        ModelKind::DiagInMatn => {
            let n = model.n;
            let mut out = zeros(n);
            for j in 0..n {
                let mut acc = C_ZERO;
                for k in 0..n {
                    acc += y.y[(k, j)];
                }
                out[(j, j)] = acc * cr(1.0 / (n as f64).sqrt());
            }
            Ok(out)
        }
        ModelKind::FullMat => Err(Error::UnsupportedTarget {
            target: "E_M∘Fourier⁻¹ (diagonal model only)".into(),
        }),
    }
}

// ---------------------------------------------------------------------------
// Pimsner–Popa basis
// ---------------------------------------------------------------------------

/// Pimsner–Popa basis for the diagonal model: the cyclic shifts
/// `{Sʲ}_{j=0..n−1}` with `S e_k = e_{k+1 mod n}`.
pub fn pp_basis(model: &InclusionModel) -> Result<Vec<CMat>> {
    if model.kind != ModelKind::DiagInMatn {
        return Err(Error::UnsupportedTarget {
            target: "Pimsner-Popa basis (diagonal model only)".into(),
        });
    }
    let n = model.n;
    let mut shift = zeros(n);
    for k in 0..n {
        shift[((k + 1) % n, k)] = C_ONE;
    }
    let mut out = Vec::with_capacity(n);
    let mut cur = eye(n);
    for _ in 0..n {
        out.push(cur.clone());
        cur = shift.dot(&cur);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Modular elements from densities
// ---------------------------------------------------------------------------

/// The relative-commutant element implementing the modular flow of a state
/// with density `ρ` at exponent `s`:
///
/// * diagonal model — `Δ̂ = (ρ^s)ᵀ ⋄ (ρ^{−s})` (entrywise product);
/// * full-matrix model — `Δ̂ = (ρ^s)ᵀ ⊗ (ρ^{−s})` (Kronecker product).
///
/// Both are Hermitian positive and fix `e₂`.  The full-matrix element always
/// satisfies `Δ̂̄ = Δ̂⁻¹`; the diagonal one does so exactly when the modular
/// flow of `ρ` preserves the Schur-multiplier class (diagonal or circulant
/// densities, for instance).
pub fn hat_delta_from_density(
    model: &InclusionModel,
    rho: &CMat,
    s: f64,
) -> Result<RelCommElem> {
    if rho.nrows() != model.n {
        return Err(Error::ModelMismatch {
            left: format!("{}×{} density", rho.nrows(), rho.ncols()),
            right: format!("{0}×{0} middle algebra", model.n),
        });
    }
    let rp = mat_pow(rho, s)?;
    let rm = mat_pow(rho, -s)?;
    match model.kind {
        ModelKind::DiagInMatn => {
            let y = schur(&rp.t().to_owned(), &rm);
            RelCommElem::new(model, y)
        }
        ModelKind::FullMat => {
            let y = kron_cm(&rp.t().to_owned(), &rm);
            RelCommElem::new(model, y)
        }
    }
}

// ---------------------------------------------------------------------------
// Exact tensor representation (diagonal model, n ≤ 4)
// ---------------------------------------------------------------------------

/// Exact representation of the diagonal tower on `L²(M₁) ≅ ℂⁿ⊗ℂⁿ⊗ℂⁿ`.
///
/// Vectors are rank-3 coefficient arrays `v[t,s,k]` of
/// `Σ v[t,s,k]·E_ts⊗E_kk`; operators act slab-wise:
///
/// * `M` by left matrix multiplication on the first index,
/// * `M₁` by per-`k` left multiplication,
/// * `M′∩M₂ = I⊗I⊗Y` by left multiplication on the third index,
/// * `e₁ = Σ_j E_jj⊗E_jj` and `e₂ = I⊗I⊗(1/n)Σ_{jk}E_jk`.
#[derive(Debug, Clone)]
pub struct TensorRep {
    pub n: usize,
}

pub type L2Vec = Array3<Complex64>;

impl TensorRep {
    pub fn new(n: usize) -> Self {
        Self { n }
    }

    pub fn zero_vec(&self) -> L2Vec {
        Array3::from_elem((self.n, self.n, self.n), C_ZERO)
    }

    /// Basis vector with a single unit coefficient.
    pub fn basis_vec(&self, t: usize, s: usize, k: usize) -> L2Vec {
        let mut v = self.zero_vec();
        v[(t, s, k)] = C_ONE;
        v
    }

    pub fn apply_e1(&self, v: &L2Vec) -> L2Vec {
        let n = self.n;
        let mut out = self.zero_vec();
        for t in 0..n {
            for s in 0..n {
                for k in 0..n {
                    if t == k {
                        out[(t, s, k)] = v[(t, s, k)];
                    }
                }
            }
        }
        out
    }

    pub fn apply_e2(&self, v: &L2Vec) -> L2Vec {
        let n = self.n;
        let mut out = self.zero_vec();
        for t in 0..n {
            for s in 0..n {
                let mut acc = C_ZERO;
                for m in 0..n {
                    acc += v[(t, s, m)];
                }
                acc /= cr(n as f64);
                for k in 0..n {
                    out[(t, s, k)] = acc;
                }
            }
        }
        out
    }

    pub fn apply_m(&self, x: &CMat, v: &L2Vec) -> L2Vec {
        let n = self.n;
        let mut out = self.zero_vec();
        for k in 0..n {
            for t in 0..n {
                for r in 0..n {
                    let c = x[(t, r)];
                    if c != C_ZERO {
                        for s in 0..n {
                            out[(t, s, k)] += c * v[(r, s, k)];
                        }
                    }
                }
            }
        }
        out
    }

    pub fn apply_m1(&self, g: &Array3<Complex64>, v: &L2Vec) -> L2Vec {
        let n = self.n;
        let mut out = self.zero_vec();
        for k in 0..n {
            for t in 0..n {
                for r in 0..n {
                    let c = g[(t, r, k)];
                    if c != C_ZERO {
                        for s in 0..n {
                            out[(t, s, k)] += c * v[(r, s, k)];
                        }
                    }
                }
            }
        }
        out
    }

    pub fn apply_hat(&self, y: &CMat, v: &L2Vec) -> L2Vec {
        let n = self.n;
        let mut out = self.zero_vec();
        for k in 0..n {
            for m in 0..n {
                let c = y[(k, m)];
                if c != C_ZERO {
                    for t in 0..n {
                        for s in 0..n {
                            out[(t, s, k)] += c * v[(t, s, m)];
                        }
                    }
                }
            }
        }
        out
    }

    /// Normalized trace `τ₂ = Tr/n³` of an operator given by its action.
    pub fn tau2_of(&self, op: &dyn Fn(&L2Vec) -> L2Vec) -> Complex64 {
        let n = self.n;
        let mut acc = C_ZERO;
        for t in 0..n {
            for s in 0..n {
                for k in 0..n {
                    let v = self.basis_vec(t, s, k);
                    let w = op(&v);
                    acc += w[(t, s, k)];
                }
            }
        }
        acc / cr((n * n * n) as f64)
    }

    /// Coefficient matrix of `E_{M′∩M₂}(Op)`:
    /// `Y[j,k] = n·τ₂(hat(E_kj)∘Op)`.
    pub fn project_hat(&self, op: &dyn Fn(&L2Vec) -> L2Vec) -> CMat {
        let n = self.n;
        let mut y = zeros(n);
        for j in 0..n {
            for k in 0..n {
                let mut ekj = zeros(n);
                ekj[(k, j)] = C_ONE;
                let t = self.tau2_of(&|v: &L2Vec| self.apply_hat(&ekj, &op(v)));
                y[(j, k)] = t * cr(n as f64);
            }
        }
        y
    }

    /// `E_M(Op)` as an `n×n` matrix: `out[j,k] = n·τ₂(m(E_kj)∘Op)`.
    pub fn project_m(&self, op: &dyn Fn(&L2Vec) -> L2Vec) -> CMat {
        let n = self.n;
        let mut out = zeros(n);
        for j in 0..n {
            for k in 0..n {
                let mut ekj = zeros(n);
                ekj[(k, j)] = C_ONE;
                let t = self.tau2_of(&|v: &L2Vec| self.apply_m(&ekj, &op(v)));
                out[(j, k)] = t * cr(n as f64);
            }
        }
        out
    }

    /// Fourier transform by the defining formula
    /// `𝔉(a) = λ^{−3/2}·E_{M′}(a·e₂·e₁)` for `a ∈ N′∩M₁`.
    pub fn fourier_defining(&self, a: &Array3<Complex64>) -> CMat {
        let lam = 1.0 / self.n as f64;
        let scale = lam.powf(-1.5);
        let y = self.project_hat(&|v: &L2Vec| self.apply_m1(a, &self.apply_e2(&self.apply_e1(v))));
        y.mapv(|v| v * cr(scale))
    }

    /// Channel by the defining formula
    /// `Φ(x) = λ^{−5/2}·E_M(e₂e₁·Φ̂·x·e₁e₂)`.
    pub fn channel_defining(&self, phat: &CMat, x: &CMat) -> CMat {
        let lam = 1.0 / self.n as f64;
        let scale = lam.powf(-2.5);
        let out = self.project_m(&|v: &L2Vec| {
            let v = self.apply_e2(v);
            let v = self.apply_e1(&v);
            let v = self.apply_m(x, &v);
            let v = self.apply_hat(phat, &v);
            let v = self.apply_e1(&v);
            self.apply_e2(&v)
        });
        out.mapv(|v| v * cr(scale))
    }

    /// Convolution of relative-commutant coefficients by the defining
    /// formula `X∗Y = 𝔉(𝔉⁻¹(Y)·𝔉⁻¹(X))` evaluated through the exact
    /// representation (products taken in `M₁`).
    pub fn convolve_defining(&self, xc: &CMat, yc: &CMat) -> CMat {
        let n = self.n;
        // 𝔉⁻¹(Y) has N′∩M₁ coefficients √n·Yᵀ.
        let mut gx = Array3::from_elem((n, n, n), C_ZERO);
        let mut gy = Array3::from_elem((n, n, n), C_ZERO);
        for j in 0..n {
            for k in 0..n {
                gx[(j, j, k)] = xc[(k, j)] * cr((n as f64).sqrt());
                gy[(j, j, k)] = yc[(k, j)] * cr((n as f64).sqrt());
            }
        }
        // Product 𝔉⁻¹(Y)·𝔉⁻¹(X) in M₁ (slab-wise), still in N′∩M₁.
        let mut prod = Array3::from_elem((n, n, n), C_ZERO);
        for j in 0..n {
            for k in 0..n {
                prod[(j, j, k)] = gy[(j, j, k)] * gx[(j, j, k)];
            }
        }
        self.fourier_defining(&prod)
    }

    /// `1∗X = λ^{−5/2}·E_M(e₂e₁·X·e₁e₂)`.
    pub fn one_star_defining(&self, xc: &CMat) -> CMat {
        self.channel_defining(xc, &eye(self.n))
    }

    /// Verify the defining relations of the representation.
    pub fn verify(&self) -> Result<()> {
        let n = self.n;
        let lam = 1.0 / n as f64;
        let tol = 1e-12;

        // e₁, e₂ are Hermitian idempotents; Temperley–Lieb relations.
        let check = |name: &str, f: &dyn Fn(&L2Vec) -> L2Vec, g: &dyn Fn(&L2Vec) -> L2Vec| -> Result<()> {
            for t in 0..n {
                for s in 0..n {
                    for k in 0..n {
                        let v = self.basis_vec(t, s, k);
                        let a = f(&v);
                        let b = g(&v);
                        let diff = (&a - &b).iter().map(|z| z.norm()).fold(0.0, f64::max);
                        if diff > tol {
                            return Err(Error::PreconditionViolated {
                                identity: name.to_string(),
                                residual: diff,
                            });
                        }
                    }
                }
            }
            Ok(())
        };

        check(
            "e₁ idempotent",
            &|v| self.apply_e1(&self.apply_e1(v)),
            &|v| self.apply_e1(v),
        )?;
        check(
            "e₂ idempotent",
            &|v| self.apply_e2(&self.apply_e2(v)),
            &|v| self.apply_e2(v),
        )?;
        check(
            "e₂e₁e₂ = λe₂",
            &|v| self.apply_e2(&self.apply_e1(&self.apply_e2(v))),
            &|v| self.apply_e2(v).mapv(|z| z * cr(lam)),
        )?;
        check(
            "e₁e₂e₁ = λe₁",
            &|v| self.apply_e1(&self.apply_e2(&self.apply_e1(v))),
            &|v| self.apply_e1(v).mapv(|z| z * cr(lam)),
        )?;

        // τ₁(e₁) = λ (trace of e₁ as an element of M₁).
        let mut tr_e1 = C_ZERO;
        for t in 0..n {
            for k in 0..n {
                if t == k {
                    tr_e1 += C_ONE;
                }
            }
        }
        let tau1_e1 = tr_e1 / cr((n * n) as f64);
        if (tau1_e1.re - lam).abs() > tol {
            return Err(Error::PreconditionViolated {
                identity: "τ₁(e₁) = λ".into(),
                residual: (tau1_e1.re - lam).abs(),
            });
        }

        // E_{M₁}(e₂) = λ·1: τ₂(a·e₂) = λ·τ₁(a) for all basis a ∈ M₁.
        for t in 0..n {
            for s in 0..n {
                for k in 0..n {
                    let mut g = Array3::from_elem((n, n, n), C_ZERO);
                    g[(t, s, k)] = C_ONE;
                    let lhs = self.tau2_of(&|v: &L2Vec| self.apply_m1(&g, &self.apply_e2(v)));
                    let tau1 = if t == s { cr(1.0 / (n * n) as f64) } else { C_ZERO };
                    let rhs = tau1 * cr(lam);
                    if (lhs - rhs).norm() > tol {
                        return Err(Error::PreconditionViolated {
                            identity: "E_{M₁}(e₂) = λ".into(),
                            residual: (lhs - rhs).norm(),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
