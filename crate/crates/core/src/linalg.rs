//! Dense linear-algebra primitives shared by the solvers and the learned
//! scoring model.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};

/// Relative singular-value cutoff used for rank decisions and truncated
/// pseudo-inverses.
pub const RANK_RTOL: f64 = 1e-12;

/// Scalar proximal map of `v ↦ |d1|·|v| + d2²·v²`.
#[inline]
pub fn soft_threshold_scalar(x: f64, d1: f64, d2: f64) -> f64 {
    let a = d1.abs();
    let scale = 1.0 + 2.0 * d2 * d2;
    if x - a > 0.0 {
        (x - a) / scale
    } else if x + a < 0.0 {
        (x + a) / scale
    } else {
        0.0
    }
}

/// Elementwise weighted ℓ1 + squared-ℓ2 shrinkage.
///
/// Equals the proximal operator of `v ↦ ‖diag(d1) v‖₁ + ‖diag(d2) v‖₂²`.
pub fn soft_threshold(x: &DVector<f64>, d1: &DVector<f64>, d2: &DVector<f64>) -> Result<DVector<f64>> {
    check_len("soft_threshold d1", x.len(), d1.len())?;
    check_len("soft_threshold d2", x.len(), d2.len())?;
    Ok(DVector::from_fn(x.len(), |i, _| {
        soft_threshold_scalar(x[i], d1[i], d2[i])
    }))
}

/// Moore-Penrose pseudo-inverse.
///
/// With `ridge > 0` the regularized closed form `Aᵀ(AAᵀ + ridge·I)⁻¹` is used
/// (or its tall-matrix counterpart). With `ridge == 0` singular values below
/// `1e-12·σ_max` are truncated.
pub fn pseudo_inverse(a: &DMatrix<f64>, ridge: f64) -> DMatrix<f64> {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return DMatrix::zeros(cols, rows);
    }
    if ridge > 0.0 {
        if rows <= cols {
            let mut gram = a * a.transpose();
            for i in 0..rows {
                gram[(i, i)] += ridge;
            }
            if let Some(chol) = gram.clone().cholesky() {
                return a.transpose() * chol.inverse();
            }
        } else {
            let mut gram = a.transpose() * a;
            for i in 0..cols {
                gram[(i, i)] += ridge;
            }
            if let Some(chol) = gram.clone().cholesky() {
                return chol.inverse() * a.transpose();
            }
        }
    }
    let svd = Svd::new(a);
    let cutoff = RANK_RTOL * svd.max();
    let mut out = DMatrix::zeros(cols, rows);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            // out += v_k u_kᵀ / s
            out.ger(1.0 / s, &svd.v.column(k), &svd.u.column(k), 1.0);
        }
    }
    out
}

/// Thin singular value decomposition `A = U diag(s) Vᵀ`, singular values in
/// decreasing order.
///
/// One-sided Jacobi rotations on the columns of `A` (or `Aᵀ` when wide).
/// nalgebra's bidiagonal SVD returns a wrong factorization for some
/// rank-deficient inputs (e.g. matrices with repeated rows), which this
/// avoids; it also resolves small singular values to high relative accuracy.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `m × k`, `k = min(m, n)`
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    /// `n × k`
    pub v: DMatrix<f64>,
}

impl Svd {
    pub fn new(a: &DMatrix<f64>) -> Self {
        if a.nrows() < a.ncols() {
            let t = Self::tall(a.transpose());
            return Self {
                u: t.v,
                singular_values: t.singular_values,
                v: t.u,
            };
        }
        Self::tall(a.clone())
    }

    pub fn max(&self) -> f64 {
        self.singular_values.iter().copied().fold(0.0, f64::max)
    }

    fn tall(mut w: DMatrix<f64>) -> Self {
        let (m, n) = w.shape();
        let mut v = DMatrix::<f64>::identity(n, n);
        for _sweep in 0..80 {
            let mut rotated = false;
            for p in 0..n {
                for q in p + 1..n {
                    let (cp, cq) = (w.column(p), w.column(q));
                    let alpha = cp.norm_squared();
                    let beta = cq.norm_squared();
                    let gamma = cp.dot(&cq);
                    if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    rotate(&mut w, p, q, c, s);
                    rotate(&mut v, p, q, c, s);
                }
            }
            if !rotated {
                break;
            }
        }
        let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
        let mut u = DMatrix::zeros(m, n);
        let mut vs = DMatrix::zeros(n, n);
        let mut sv = DVector::zeros(n);
        for (k, &j) in order.iter().enumerate() {
            sv[k] = norms[j];
            if norms[j] > 0.0 {
                u.set_column(k, &(w.column(j) / norms[j]));
            }
            vs.set_column(k, &v.column(j));
        }
        Self {
            u,
            singular_values: sv,
            v: vs,
        }
    }
}

/// Columns `(p, q) ← (c·p − s·q, s·p + c·q)`.
fn rotate(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let (x, y) = (m[(i, p)], m[(i, q)]);
        m[(i, p)] = c * x - s * y;
        m[(i, q)] = s * x + c * y;
    }
}

/// Orthogonal projector `I − A†A` onto the null space of `A`.
pub fn nullspace_projector(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    let mut proj = DMatrix::identity(n, n);
    if a.nrows() == 0 || n == 0 {
        return proj;
    }
    let svd = Svd::new(a);
    let cutoff = RANK_RTOL * svd.max();
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            let vk = svd.v.column(k);
            proj.ger(-1.0, &vk, &vk, 1.0);
        }
    }
    // Symmetrize away rounding asymmetry from the rank-one updates.
    (&proj + proj.transpose()) * 0.5
}

/// Numerical rank with relative singular-value tolerance `rtol`.
pub fn rank(a: &DMatrix<f64>, rtol: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let svd = Svd::new(a);
    let smax = svd.max();
    if smax == 0.0 {
        return 0;
    }
    svd.singular_values.iter().filter(|&&s| s > rtol * smax).count()
}

/// Pseudo-inverse of a symmetric positive-semidefinite matrix through its
/// eigendecomposition.
pub(crate) fn psd_pseudo_inverse(s: &DMatrix<f64>) -> DMatrix<f64> {
    let n = s.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = s.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let cutoff = RANK_RTOL * lmax;
    let mut out = DMatrix::zeros(n, n);
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > cutoff && lam > 0.0 {
            let v = eig.eigenvectors.column(k);
            out.ger(1.0 / lam, &v, &v, 1.0);
        }
    }
    out
}

/// Block-diagonal Kronecker product `I_k ⊗ block`.
pub fn block_diag_repeat(block: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let (r, c) = block.shape();
    let mut out = DMatrix::zeros(r * k, c * k);
    for i in 0..k {
        out.view_mut((i * r, i * c), (r, c)).copy_from(block);
    }
    out
}

pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()))
}

pub(crate) fn require_square(context: &'static str, m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::dim(context, m.nrows(), m.ncols()));
    }
    Ok(())
}
