//! Dense complex-matrix kernel.
//!
//! Everything downstream works with `ndarray::Array2<Complex64>` carriers at
//! desk scale (n ≤ 64). The kernel provides the few primitives the rest of
//! the crate needs and nothing else:
//!
//! * a deterministic cyclic-Jacobi Hermitian eigensolver (`herm_eig`),
//! * spectral matrix functions `log` / `exp` / fractional powers (`mat_fn`),
//! * the logarithmic mean with a cancellation-free branch (`log_mean`),
//! * a one-sided Jacobi SVD and minimal-norm least squares (`svd`,
//!   `pinv_apply`), accurate for small singular values,
//! * a general (non-Hermitian) scaling-and-squaring exponential for small
//!   superoperators (`expm`),
//! * seeded, bit-reproducible samplers for Hermitian matrices, strictly
//!   positive densities and unitaries (`Rng`, `sample_*`).
//!
//! All routines are pure functions of their inputs; randomness enters only
//! through an explicitly passed [`Rng`].

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Dense complex matrix carrier used throughout the crate.
pub type CMat = Array2<Complex64>;
/// Dense complex vector carrier.
pub type CVec = Array1<Complex64>;

pub const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const C_ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const C_I: Complex64 = Complex64::new(0.0, 1.0);

/// Convenience constructor for a real scalar as `Complex64`.
#[inline]
pub fn cr(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// n×n identity.
pub fn eye(n: usize) -> CMat {
    Array2::from_diag(&Array1::from_elem(n, C_ONE))
}

/// n×n zero matrix.
pub fn zeros(n: usize) -> CMat {
    Array2::from_elem((n, n), C_ZERO)
}

/// Matrix unit E_{jk} (1 at row j, column k).
pub fn mat_unit(n: usize, j: usize, k: usize) -> CMat {
    let mut m = zeros(n);
    m[(j, k)] = C_ONE;
    m
}

/// Conjugate transpose.
pub fn dagger(a: &CMat) -> CMat {
    a.t().mapv(|z| z.conj())
}

/// Plain (unnormalized) trace.
pub fn trace(a: &CMat) -> Complex64 {
    a.diag().sum()
}

/// Frobenius norm.
pub fn frob(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Euclidean norm of a vector.
pub fn vec_norm(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Hilbert–Schmidt inner product Tr(a† b).
pub fn hs_inner(a: &CMat, b: &CMat) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Commutator [a, b] = ab − ba.
pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a.dot(b) - b.dot(a)
}

/// Entrywise (Schur) product a ⋄ b.
pub fn schur(a: &CMat, b: &CMat) -> CMat {
    a * b
}

/// Kronecker product with index convention
/// `kron(A,B)[(i·p+k, j·q+l)] = A[i,j]·B[k,l]` for B of shape p×q.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (m, n) = a.dim();
    let (p, q) = b.dim();
    let mut out = Array2::from_elem((m * p, n * q), C_ZERO);
    for i in 0..m {
        for j in 0..n {
            let aij = a[(i, j)];
            if aij == C_ZERO {
                continue;
            }
            for k in 0..p {
                for l in 0..q {
                    out[(i * p + k, j * q + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Row-major vectorization: `vec(X)[i·n+j] = X[i,j]`.
pub fn vec_mat(x: &CMat) -> CVec {
    Array1::from_iter(x.iter().copied())
}

/// Inverse of [`vec_mat`] for square matrices.
pub fn unvec(v: &CVec, n: usize) -> CMat {
    Array2::from_shape_fn((n, n), |(i, j)| v[i * n + j])
}

/// Hermiticity residual ‖A − A†‖_F.
pub fn herm_residual(a: &CMat) -> f64 {
    frob(&(a - &dagger(a)))
}

/// Checks the relative Hermiticity invariant ‖A − A†‖_F ≤ 1e−12·(1+‖A‖_F).
pub fn is_hermitian(a: &CMat) -> bool {
    a.is_square() && herm_residual(a) <= 1e-12 * (1.0 + frob(a))
}

/// Largest absolute entry of the difference — the workhorse test metric.
pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Hermitian eigendecomposition (cyclic Jacobi)
// ---------------------------------------------------------------------------

/// Result of [`herm_eig`]: `a = V · diag(eigenvalues) · V†` with the
/// eigenvalues sorted ascending and `V` unitary (eigenvectors in columns).
#[derive(Debug, Clone)]
pub struct HermEig {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMat,
}

impl HermEig {
    /// Rebuild V Λ V† (used by tests and spectral functions).
    pub fn reconstruct(&self) -> CMat {
        let n = self.eigenvalues.len();
        let v = &self.eigenvectors;
        let mut lam_vd = Array2::from_elem((n, n), C_ZERO);
        for i in 0..n {
            let li = cr(self.eigenvalues[i]);
            for j in 0..n {
                lam_vd[(i, j)] = li * v[(j, i)].conj();
            }
        }
        v.dot(&lam_vd)
    }

    pub fn min_eig(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn max_eig(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }
}

/// Hermitian eigendecomposition by cyclic Jacobi rotations.
///
/// Deterministic for a fixed input: fixed sweep order, no thresholding
/// heuristics, convergence when the off-diagonal Frobenius mass drops below
/// `1e−13·max(1, ‖A‖_F)`. Accurate to ~1e−14 relative on the sizes used here
/// (n ≤ 64); eigenvectors within a degenerate cluster are orthonormal but
/// otherwise arbitrary, so callers must be gauge-invariant.
pub fn herm_eig(a: &CMat) -> Result<HermEig> {
    let (rows, cols) = a.dim();
    if rows != cols {
        return Err(Error::NonSquare { rows, cols });
    }
    let norm = frob(a);
    let tol_herm = 1e-12 * (1.0 + norm);
    let res = herm_residual(a);
    if res > tol_herm {
        return Err(Error::NonHermitian { residual: res, tol: tol_herm });
    }
    let n = rows;
    // Work on the Hermitian part so the diagonal is exactly real.
    let mut m = (a + &dagger(a)).mapv(|z| 0.5 * z);
    let mut v = eye(n);
    let stop = 1e-13 * norm.max(1.0);

    for _sweep in 0..60 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[(p, q)].norm_sqr();
            }
        }
        if (2.0 * off).sqrt() <= stop {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                let r = apq.norm();
                if r == 0.0 {
                    continue;
                }
                let phase = apq / r; // e^{iθ}
                let app = m[(p, p)].re;
                let aqq = m[(q, q)].re;
                let tau = (aqq - app) / (2.0 * r);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let sp = cr(s) * phase; // s·e^{iθ}
                // A ← U† A U with U = I except U[p,p]=U[q,q]=c,
                // U[p,q] = s·e^{iθ}, U[q,p] = −s·e^{−iθ}.
                for k in 0..n {
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    m[(k, p)] = akp * c - akq * sp.conj();
                    m[(k, q)] = akp * sp + akq * c;
                }
                for k in 0..n {
                    let apk = m[(p, k)];
                    let aqk = m[(q, k)];
                    m[(p, k)] = apk * c - aqk * sp;
                    m[(q, k)] = apk * sp.conj() + aqk * c;
                }
                m[(p, q)] = C_ZERO;
                m[(q, p)] = C_ZERO;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * c - vkq * sp.conj();
                    v[(k, q)] = vkp * sp + vkq * c;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].re.partial_cmp(&m[(j, j)].re).unwrap().then(i.cmp(&j)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| m[(i, i)].re).collect();
    let mut vectors = Array2::from_elem((n, n), C_ZERO);
    for (new_col, &old_col) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, new_col)] = v[(k, old_col)];
        }
    }
    Ok(HermEig { eigenvalues, eigenvectors: vectors })
}

// ---------------------------------------------------------------------------
// Spectral matrix functions
// ---------------------------------------------------------------------------

/// Scalar functions applied spectrally by [`mat_fn`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatFun {
    Log,
    Exp,
    Power(f64),
}

/// Applies `f` to a Hermitian matrix through its eigendecomposition.
///
/// `Log` and negative `Power` exponents require the smallest eigenvalue to
/// exceed 1e−12, otherwise [`Error::NotPositive`] is raised.
pub fn mat_fn(a: &CMat, f: MatFun) -> Result<CMat> {
    let eig = herm_eig(a)?;
    let needs_positive = matches!(f, MatFun::Log) || matches!(f, MatFun::Power(s) if s < 0.0 || s.fract() != 0.0);
    if needs_positive && eig.min_eig() <= 1e-12 {
        return Err(Error::NotPositive { min_eig: eig.min_eig() });
    }
    let mapped: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| match f {
            MatFun::Log => l.ln(),
            MatFun::Exp => l.exp(),
            MatFun::Power(s) => l.powf(s),
        })
        .collect();
    let n = mapped.len();
    let v = &eig.eigenvectors;
    let mut lam_vd = Array2::from_elem((n, n), C_ZERO);
    for i in 0..n {
        let li = cr(mapped[i]);
        for j in 0..n {
            lam_vd[(i, j)] = li * v[(j, i)].conj();
        }
    }
    Ok(v.dot(&lam_vd))
}

pub fn mat_log(a: &CMat) -> Result<CMat> {
    mat_fn(a, MatFun::Log)
}

pub fn mat_exp_herm(a: &CMat) -> Result<CMat> {
    mat_fn(a, MatFun::Exp)
}

pub fn mat_pow(a: &CMat, s: f64) -> Result<CMat> {
    mat_fn(a, MatFun::Power(s))
}

/// General (non-Hermitian) matrix exponential by scaling and squaring with a
/// Taylor core. Intended for small vectorized generators (≤ 16×16 here);
/// deterministic and accurate to ~1e−13 at these sizes.
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    let norm = frob(a);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let scale = cr(0.5f64.powi(squarings as i32)); // 2^{−squarings}
    let b = a.mapv(|z| z * scale);
    // Taylor series of e^B for ‖B‖ ≤ 0.5: 24 terms reach well below 1e−16.
    let mut term = eye(n);
    let mut sum = eye(n);
    for k in 1..=24 {
        term = term.dot(&b).mapv(|z| z / cr(k as f64));
        sum += &term;
    }
    let mut out = sum;
    for _ in 0..squarings {
        out = out.dot(&out);
    }
    out
}

// ---------------------------------------------------------------------------
// Logarithmic mean
// ---------------------------------------------------------------------------

/// Logarithmic mean Λ(a,b) = (a−b)/(ln a − ln b), Λ(a,a) = a.
///
/// Near equal arguments (|ln(b/a)| < 1e−6) the quotient cancels badly, so it
/// switches to the short series `a·(1 + d/2 + d²/12)` in d = ln(b/a).
pub fn log_mean(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(Error::NonPositiveInput { a, b });
    }
    let d = (b / a).ln();
    if d.abs() < 1e-6 {
        Ok(a * (1.0 + d / 2.0 + d * d / 12.0))
    } else {
        Ok((b - a) / d)
    }
}

// ---------------------------------------------------------------------------
// One-sided Jacobi SVD and minimal-norm least squares
// ---------------------------------------------------------------------------

/// Thin singular value decomposition `a = U · diag(s) · V†` with singular
/// values descending. `U` is m×r and `V` is n×r with r = min(m,n).
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMat,
    pub s: Vec<f64>,
    pub v: CMat,
}

/// One-sided Jacobi SVD: orthogonalizes the columns of the working copy by
/// complex plane rotations, which computes small singular values to high
/// relative accuracy — important because range cutoffs at 1e−10·σ_max are
/// used downstream. Deterministic (fixed sweep order).
pub fn svd(a: &CMat) -> Svd {
    let (m, n) = a.dim();
    if m < n {
        // Work on the adjoint and swap factors: A = U S V† ⟺ A† = V S U†.
        let s = svd(&dagger(a));
        return Svd { u: s.v, s: s.s, v: s.u };
    }
    let mut b = a.clone();
    let mut v = eye(n);
    let max_sq = b.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max) * m as f64;
    let floor = max_sq * 1e-32;

    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = C_ZERO;
                for k in 0..m {
                    let bp = b[(k, p)];
                    let bq = b[(k, q)];
                    alpha += bp.norm_sqr();
                    beta += bq.norm_sqr();
                    gamma += bp.conj() * bq;
                }
                if alpha <= floor || beta <= floor {
                    continue;
                }
                let g = gamma.norm();
                if g <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = gamma / g;
                let tau = (beta - alpha) / (2.0 * g);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s_ = t * c;
                let sp = cr(s_) * phase;
                for k in 0..m {
                    let bp = b[(k, p)];
                    let bq = b[(k, q)];
                    b[(k, p)] = bp * c - bq * sp.conj();
                    b[(k, q)] = bp * sp + bq * c;
                }
                for k in 0..n {
                    let vp = v[(k, p)];
                    let vq = v[(k, q)];
                    v[(k, p)] = vp * c - vq * sp.conj();
                    v[(k, q)] = vp * sp + vq * c;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    // Column norms are the singular values.
    let mut entries: Vec<(f64, usize)> = (0..n)
        .map(|j| {
            let nrm = (0..m).map(|k| b[(k, j)].norm_sqr()).sum::<f64>().sqrt();
            (nrm, j)
        })
        .collect();
    entries.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap().then(x.1.cmp(&y.1)));

    let r = n; // m ≥ n here
    let mut u = Array2::from_elem((m, r), C_ZERO);
    let mut vv = Array2::from_elem((n, r), C_ZERO);
    let mut s = Vec::with_capacity(r);
    for (new_j, &(nrm, old_j)) in entries.iter().enumerate() {
        s.push(nrm);
        if nrm > 0.0 {
            for k in 0..m {
                u[(k, new_j)] = b[(k, old_j)] / nrm;
            }
        }
        for k in 0..n {
            vv[(k, new_j)] = v[(k, old_j)];
        }
    }
    Svd { u, s, v: vv }
}

/// Minimal-norm least-squares solve of `L x = b`.
///
/// Singular values below `1e−10·σ_max` are treated as zero. Always returns a
/// solution together with the residual norm ‖Lx − b‖₂.
pub fn pinv_apply(l: &CMat, b: &CVec) -> (CVec, f64) {
    let dec = svd(l);
    let cutoff = dec.s.first().copied().unwrap_or(0.0) * 1e-10;
    let n = l.ncols();
    let mut x = Array1::from_elem(n, C_ZERO);
    for (j, &sj) in dec.s.iter().enumerate() {
        if sj <= cutoff || sj == 0.0 {
            continue;
        }
        let mut coef = C_ZERO;
        for k in 0..l.nrows() {
            coef += dec.u[(k, j)].conj() * b[k];
        }
        coef /= cr(sj);
        for k in 0..n {
            x[k] += dec.v[(k, j)] * coef;
        }
    }
    let res = vec_norm(&(l.dot(&x) - b));
    (x, res)
}

/// Orthogonal projection onto the range of `a` (singular vectors above the
/// relative cutoff `1e−10·σ_max`).
pub fn range_projection(a: &CMat) -> CMat {
    let dec = svd(a);
    let cutoff = dec.s.first().copied().unwrap_or(0.0) * 1e-10;
    let m = a.nrows();
    let mut p = zeros(m);
    for (j, &sj) in dec.s.iter().enumerate() {
        if sj <= cutoff || sj == 0.0 {
            continue;
        }
        for r in 0..m {
            for c in 0..m {
                p[(r, c)] += dec.u[(r, j)] * dec.u[(c, j)].conj();
            }
        }
    }
    p
}

// ---------------------------------------------------------------------------
// General (non-Hermitian) eigenvalues
// ---------------------------------------------------------------------------

/// QR factorization by modified Gram–Schmidt with re-orthogonalization.
/// Rank-deficient columns receive a zero `R` entry and an arbitrary
/// orthonormal completion in `Q`.
fn qr_factor(a: &CMat) -> (CMat, CMat) {
    let n = a.nrows();
    let mut q = zeros(n);
    let mut r = zeros(n);
    for j in 0..n {
        let mut v: Vec<Complex64> = (0..n).map(|i| a[(i, j)]).collect();
        for _pass in 0..2 {
            for i in 0..j {
                let mut proj = C_ZERO;
                for t in 0..n {
                    proj += q[(t, i)].conj() * v[t];
                }
                r[(i, j)] += proj;
                for t in 0..n {
                    v[t] -= proj * q[(t, i)];
                }
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-300 {
            r[(j, j)] = cr(norm);
            for t in 0..n {
                q[(t, j)] = v[t] / cr(norm);
            }
        } else {
            // Complete the basis: take the coordinate direction least
            // represented so far and orthogonalize it.
            let mut w: Vec<Complex64> = vec![C_ZERO; n];
            w[j % n] = cr(1.0);
            for i in 0..j {
                let mut proj = C_ZERO;
                for t in 0..n {
                    proj += q[(t, i)].conj() * w[t];
                }
                for t in 0..n {
                    w[t] -= proj * q[(t, i)];
                }
            }
            let wn = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(1e-300);
            for t in 0..n {
                q[(t, j)] = w[t] / cr(wn);
            }
        }
    }
    (q, r)
}

/// Eigenvalues of the 2×2 matrix `[[a, b], [c, d]]`.
fn eig2(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> (Complex64, Complex64) {
    let tr = a + d;
    let disc = ((a - d) * (a - d) + cr(4.0) * b * c).sqrt();
    ((tr + disc) * cr(0.5), (tr - disc) * cr(0.5))
}

/// Eigenvalues of a general square complex matrix by shifted QR iteration
/// with bottom-up deflation.  Intended for the small coefficient matrices
/// that arise in commutation-relation fits (sizes ≲ 20); returns the
/// spectrum sorted by real part, then imaginary part.
pub fn eigenvalues(a: &CMat) -> Vec<Complex64> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut out: Vec<Complex64> = Vec::with_capacity(n);
    let scale = frob(a).max(1e-300);
    let mut hi = n;
    let mut sweeps = 0usize;
    while hi > 0 {
        if hi == 1 {
            out.push(m[(0, 0)]);
            hi = 0;
            continue;
        }
        if m[(hi - 1, hi - 2)].norm() <= 1e-14 * scale {
            out.push(m[(hi - 1, hi - 1)]);
            hi -= 1;
            continue;
        }
        if hi == 2 {
            let (l1, l2) = eig2(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
            out.push(l1);
            out.push(l2);
            hi = 0;
            continue;
        }
        sweeps += 1;
        if sweeps > 40_000 {
            // Convergence stall (defective cluster at working precision):
            // report the remaining diagonal as the best available estimate.
            for i in 0..hi {
                out.push(m[(i, i)]);
            }
            break;
        }
        // Shift with the trailing 2×2 eigenvalue closest to the corner.
        let (l1, l2) = eig2(
            m[(hi - 2, hi - 2)],
            m[(hi - 2, hi - 1)],
            m[(hi - 1, hi - 2)],
            m[(hi - 1, hi - 1)],
        );
        let corner = m[(hi - 1, hi - 1)];
        let sh = if (l1 - corner).norm() <= (l2 - corner).norm() { l1 } else { l2 };
        let mut act = CMat::zeros((hi, hi));
        for r in 0..hi {
            for c in 0..hi {
                act[(r, c)] = m[(r, c)];
            }
            act[(r, r)] -= sh;
        }
        let (q, r) = qr_factor(&act);
        let next = r.dot(&q);
        for rr in 0..hi {
            for cc in 0..hi {
                m[(rr, cc)] = next[(rr, cc)] + if rr == cc { sh } else { C_ZERO };
            }
        }
    }
    out.sort_by(|x, y| {
        x.re.partial_cmp(&y.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.im.partial_cmp(&y.im).unwrap_or(std::cmp::Ordering::Equal))
    });
    out
}

// ---------------------------------------------------------------------------
// Seeded samplers
// ---------------------------------------------------------------------------

/// Deterministic random stream: identical seeds reproduce identical samples.
pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Uniform in [0,1).
    pub fn uniform(&mut self) -> f64 {
        // 53 random mantissa bits.
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box–Muller (keeps the stream crate-independent).
    pub fn normal(&mut self) -> f64 {
        let u1 = loop {
            let u = self.uniform();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Standard complex normal (real and imaginary parts N(0, 1/2)).
    pub fn cnormal(&mut self) -> Complex64 {
        Complex64::new(self.normal(), self.normal()) * cr(std::f64::consts::FRAC_1_SQRT_2)
    }

    /// Independent child stream (used to give each check its own seed).
    pub fn fork(&mut self) -> Rng {
        Rng::new(self.inner.next_u64())
    }
}

/// Random Hermitian matrix rescaled so the operator norm equals `scale`.
pub fn sample_hermitian(rng: &mut Rng, n: usize, scale: f64) -> CMat {
    let g = Array2::from_shape_fn((n, n), |_| rng.cnormal());
    let mut a = (&g + &dagger(&g)).mapv(|z| 0.5 * z);
    let eig = herm_eig(&a).expect("symmetrized sample is Hermitian");
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
    if top > 0.0 {
        a.mapv_inplace(|z| z * cr(scale / top));
    }
    a
}

/// Strictly positive density with plain trace n (τ-normalized, τ = Tr/n),
/// generated as a normalized exponential of a random Hermitian matrix. The
/// smallest eigenvalue is kept ≥ 1e−6 so logarithms and negative powers stay
/// well-conditioned.
pub fn sample_density(rng: &mut Rng, n: usize) -> CMat {
    let h = sample_hermitian(rng, n, 1.0);
    let mut d = mat_exp_herm(&h).expect("Hermitian exponential");
    let tr = trace(&d).re;
    d.mapv_inplace(|z| z * cr(n as f64 / tr));
    let eig = herm_eig(&d).expect("density is Hermitian");
    let min = eig.min_eig();
    if min < 1e-6 {
        // Blend toward the unit density; preserves the trace.
        let w = (1e-6 - min) / (1.0 - min);
        let id = eye(n);
        d = d.mapv(|z| z * cr(1.0 - w)) + id.mapv(|z| z * cr(w));
    }
    d
}

/// Haar-ish random unitary via twice-iterated modified Gram–Schmidt on a
/// complex Gaussian matrix; unitarity residual ≲ 1e−14.
pub fn sample_unitary(rng: &mut Rng, n: usize) -> CMat {
    let g = Array2::from_shape_fn((n, n), |_| rng.cnormal());
    let mut q = g;
    for _pass in 0..2 {
        for j in 0..n {
            for i in 0..j {
                let mut proj = C_ZERO;
                for k in 0..n {
                    proj += q[(k, i)].conj() * q[(k, j)];
                }
                for k in 0..n {
                    let qki = q[(k, i)];
                    q[(k, j)] = q[(k, j)] - proj * qki;
                }
            }
            let nrm = (0..n).map(|k| q[(k, j)].norm_sqr()).sum::<f64>().sqrt();
            for k in 0..n {
                q[(k, j)] /= cr(nrm);
            }
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(x: f64, y: f64, tol: f64) {
        assert!((x - y).abs() <= tol, "{x} vs {y} (tol {tol})");
    }

    #[test]
    fn herm_eig_identity() {
        let eig = herm_eig(&eye(3)).unwrap();
        for l in &eig.eigenvalues {
            assert_close(*l, 1.0, 1e-14);
        }
    }

    #[test]
    fn herm_eig_pauli_x() {
        let mut a = zeros(2);
        a[(0, 1)] = C_ONE;
        a[(1, 0)] = C_ONE;
        let eig = herm_eig(&a).unwrap();
        assert_close(eig.eigenvalues[0], -1.0, 1e-14);
        assert_close(eig.eigenvalues[1], 1.0, 1e-14);
    }

    #[test]
    fn herm_eig_reconstruction_random() {
        let mut rng = Rng::new(7);
        for _ in 0..5 {
            let a = sample_hermitian(&mut rng, 6, 2.5);
            let eig = herm_eig(&a).unwrap();
            let rec = eig.reconstruct();
            assert!(frob(&(&rec - &a)) <= 1e-11 * (1.0 + frob(&a)));
            let v = &eig.eigenvectors;
            let vtv = dagger(v).dot(v);
            assert!(frob(&(&vtv - &eye(6))) <= 1e-11);
        }
    }

    #[test]
    fn herm_eig_rejects_non_hermitian() {
        let mut a = zeros(2);
        a[(0, 1)] = C_ONE;
        assert!(matches!(herm_eig(&a), Err(Error::NonHermitian { .. })));
    }

    #[test]
    fn herm_eig_rejects_non_square() {
        let a = Array2::from_elem((2, 3), C_ZERO);
        assert!(matches!(herm_eig(&a), Err(Error::NonSquare { .. })));
    }

    #[test]
    fn mat_fn_log_identity_is_zero() {
        let l = mat_log(&eye(4)).unwrap();
        assert!(frob(&l) <= 1e-13);
    }

    #[test]
    fn mat_fn_sqrt_of_diagonal() {
        let mut a = zeros(2);
        a[(0, 0)] = cr(4.0);
        a[(1, 1)] = cr(9.0);
        let r = mat_pow(&a, 0.5).unwrap();
        assert_close(r[(0, 0)].re, 2.0, 1e-13);
        assert_close(r[(1, 1)].re, 3.0, 1e-13);
    }

    #[test]
    fn mat_fn_exp_log_round_trip() {
        let mut rng = Rng::new(11);
        let d = sample_density(&mut rng, 5);
        let back = mat_exp_herm(&mat_log(&d).unwrap()).unwrap();
        assert!(max_abs_diff(&back, &d) <= 1e-10);
    }

    #[test]
    fn mat_fn_rejects_log_of_singular() {
        let mut a = zeros(2);
        a[(0, 0)] = cr(1.0);
        assert!(matches!(mat_log(&a), Err(Error::NotPositive { .. })));
    }

    #[test]
    fn mat_fn_unitary_conjugation_covariance() {
        let mut rng = Rng::new(13);
        let d = sample_density(&mut rng, 4);
        let u = sample_unitary(&mut rng, 4);
        let lhs = mat_log(&u.dot(&d).dot(&dagger(&u))).unwrap();
        let rhs = u.dot(&mat_log(&d).unwrap()).dot(&dagger(&u));
        assert!(max_abs_diff(&lhs, &rhs) <= 1e-10);
    }

    /// Composite-Simpson oracle for ∫₀¹ a^s b^{1−s} ds, frozen as the ground
    /// truth for the logarithmic mean.
    fn log_mean_quadrature(a: f64, b: f64) -> f64 {
        let m = 4096usize;
        let h = 1.0 / m as f64;
        let f = |s: f64| a.powf(s) * b.powf(1.0 - s);
        let mut acc = f(0.0) + f(1.0);
        for k in 1..m {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(k as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn log_mean_trivial_and_analytic_values() {
        assert_close(log_mean(1.0, 1.0).unwrap(), 1.0, 1e-15);
        // ∫₀¹ e^s ds = e − 1
        assert_close(log_mean(std::f64::consts::E, 1.0).unwrap(), std::f64::consts::E - 1.0, 1e-12);
        // (4−1)/ln4
        assert_close(log_mean(4.0, 1.0).unwrap(), 3.0 / 4.0f64.ln(), 1e-12);
        assert_close(log_mean(4.0, 1.0).unwrap(), log_mean_quadrature(4.0, 1.0), 1e-10);
    }

    #[test]
    fn log_mean_matches_quadrature_across_range() {
        let grid = [1e-3, 2e-2, 0.5, 1.0, 3.0, 40.0, 1e3];
        for &a in &grid {
            for &b in &grid {
                let lm = log_mean(a, b).unwrap();
                let q = log_mean_quadrature(a, b);
                assert!((lm - q).abs() <= 1e-8 * (1.0 + q.abs()), "a={a} b={b}: {lm} vs {q}");
                assert!(lm >= a.min(b) - 1e-12 && lm <= a.max(b) + 1e-12);
            }
        }
    }

    #[test]
    fn log_mean_series_branch_is_smooth() {
        // Straddle the series switch: values on both sides of |d| = 1e−6 agree.
        let a = 2.0;
        let b1 = a * (1.0 + 4e-7);
        let b2 = a * (1.0 + 2e-6);
        let l1 = log_mean(a, b1).unwrap();
        let l2 = log_mean(a, b2).unwrap();
        assert!(l1 > a && l2 > l1 && l2 < b2);
        assert_close(log_mean(a, b1).unwrap(), log_mean(b1, a).unwrap(), 1e-14);
    }

    #[test]
    fn log_mean_rejects_nonpositive() {
        assert!(log_mean(0.0, 1.0).is_err());
        assert!(log_mean(1.0, -2.0).is_err());
    }

    #[test]
    fn svd_reconstructs_and_orders() {
        let mut rng = Rng::new(23);
        let a = Array2::from_shape_fn((7, 4), |_| rng.cnormal());
        let dec = svd(&a);
        let mut rec = Array2::from_elem((7, 4), C_ZERO);
        for (j, &sj) in dec.s.iter().enumerate() {
            for r in 0..7 {
                for c in 0..4 {
                    rec[(r, c)] += dec.u[(r, j)] * cr(sj) * dec.v[(c, j)].conj();
                }
            }
        }
        assert!(max_abs_diff(&rec, &a) <= 1e-12);
        for w in dec.s.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn pinv_identity_returns_input() {
        let b = Array1::from_vec(vec![cr(1.0), cr(-2.0), C_I]);
        let (x, res) = pinv_apply(&eye(3), &b);
        assert!(vec_norm(&(&x - &b)) <= 1e-13);
        assert!(res <= 1e-13);
    }

    #[test]
    fn pinv_rank_deficient_minimal_norm() {
        // L = diag(1,0), b = (1,1) → x = (1,0), residual 1.
        let mut l = zeros(2);
        l[(0, 0)] = C_ONE;
        let b = Array1::from_vec(vec![cr(1.0), cr(1.0)]);
        let (x, res) = pinv_apply(&l, &b);
        assert!((x[0] - C_ONE).norm() <= 1e-13);
        assert!(x[1].norm() <= 1e-13);
        assert_close(res, 1.0, 1e-13);
    }

    #[test]
    fn pinv_consistent_system_is_solved() {
        let mut rng = Rng::new(31);
        let l = Array2::from_shape_fn((12, 8), |_| rng.cnormal());
        let x0 = Array1::from_shape_fn(8, |_| rng.cnormal());
        let b = l.dot(&x0);
        let (x, res) = pinv_apply(&l, &b);
        assert!(res <= 1e-9 * (1.0 + vec_norm(&b)));
        assert!(vec_norm(&(l.dot(&x) - &b)) <= 1e-9);
    }

    #[test]
    fn expm_matches_hermitian_exponential() {
        let mut rng = Rng::new(41);
        let h = sample_hermitian(&mut rng, 4, 1.7);
        let e1 = expm(&h);
        let e2 = mat_exp_herm(&h).unwrap();
        assert!(max_abs_diff(&e1, &e2) <= 1e-12);
    }

    #[test]
    fn expm_group_law() {
        let mut rng = Rng::new(43);
        let g = Array2::from_shape_fn((4, 4), |_| rng.cnormal());
        let e1 = expm(&g.mapv(|z| z * cr(0.3)));
        let e2 = expm(&g.mapv(|z| z * cr(0.7)));
        let e3 = expm(&g);
        assert!(max_abs_diff(&e1.dot(&e2), &e3) <= 1e-11);
    }

    #[test]
    fn samplers_are_seed_deterministic() {
        let a = sample_density(&mut Rng::new(99), 3);
        let b = sample_density(&mut Rng::new(99), 3);
        assert_eq!(max_abs_diff(&a, &b), 0.0);
    }

    #[test]
    fn sampled_density_is_normalized_and_positive() {
        let mut rng = Rng::new(5);
        for n in [1usize, 3, 6] {
            let d = sample_density(&mut rng, n);
            assert_close(trace(&d).re, n as f64, 1e-12);
            let eig = herm_eig(&d).unwrap();
            assert!(eig.min_eig() >= 1e-6);
        }
    }

    #[test]
    fn sampled_unitary_is_unitary() {
        let mut rng = Rng::new(6);
        let u = sample_unitary(&mut rng, 4);
        assert!(frob(&(dagger(&u).dot(&u) - eye(4))) <= 1e-11);
    }

    #[test]
    fn sampled_hermitian_respects_scale() {
        let mut rng = Rng::new(8);
        let a = sample_hermitian(&mut rng, 5, 0.7);
        let eig = herm_eig(&a).unwrap();
        let top = eig.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
        assert_close(top, 0.7, 1e-12);
    }
}
