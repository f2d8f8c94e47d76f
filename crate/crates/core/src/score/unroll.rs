//! Unrolled Douglas-Rachford evaluation of `Prox_Ŝ` and its exact reverse
//! pass.
//!
//! The splitting variable is `v = (ξ, η) ∈ R^{n_z} × R^{n_τ}`. One iteration:
//!
//! ```text
//! h  = (sh(ξ), (τ + η)/2)
//! v⁺ = v + P(2h − v) − h,     P = I − G̃ᵀ(G̃G̃ᵀ)⁻¹G̃
//! ```
//!
//! After `K` iterations the output is the `τ̂` half-step `(τ + η^K)/2`.
//! Everything is evaluated column-wise on a batch so the dense products run
//! as matrix-matrix multiplies.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::params::{ParamGradients, ScoringModelParams};
use crate::deepc::TrajectorySegment;
use crate::error::{check_len, Error, Result};
use crate::linalg::soft_threshold_scalar;

/// Gram condition number above which the ridge is switched on.
pub const RIDGE_COND: f64 = 1e12;
/// Ridge added to `G̃G̃ᵀ`, relative to its largest eigenvalue.
pub const RIDGE: f64 = 1e-8;

/// Cached `P = I − G̃ᵀ X` with `X = (G̃G̃ᵀ + ρI)⁻¹ G̃`.
#[derive(Debug, Clone)]
pub struct Projector {
    g_tilde: DMatrix<f64>,
    p: DMatrix<f64>,
    x: DMatrix<f64>,
    ridge: f64,
}

impl Projector {
    pub fn new(params: &ScoringModelParams) -> Result<Self> {
        Self::from_g_tilde(params.g_tilde())
    }

    pub fn from_g_tilde(gt: DMatrix<f64>) -> Result<Self> {
        if gt.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalRank("G̃ has non-finite entries".into()));
        }
        let mut gram = &gt * gt.transpose();
        let eig = gram.clone().symmetric_eigen();
        let lmax = eig.eigenvalues.max();
        let lmin = eig.eigenvalues.min();
        if !(lmax > 0.0) {
            return Err(Error::NumericalRank("G̃ is zero".into()));
        }
        let ridge = if lmin <= 0.0 || lmax / lmin > RIDGE_COND {
            RIDGE * lmax
        } else {
            0.0
        };
        for i in 0..gram.nrows() {
            gram[(i, i)] += ridge;
        }
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::NumericalRank("G̃G̃ᵀ is not positive definite after ridge".into()))?;
        let x = chol.solve(&gt);
        let nv = gt.ncols();
        let mut p = DMatrix::identity(nv, nv) - gt.transpose() * &x;
        p = (&p + p.transpose()) * 0.5;
        Ok(Self {
            g_tilde: gt,
            p,
            x,
            ridge,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    /// Ridge actually applied; zero when `G̃G̃ᵀ` was well conditioned.
    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn g_tilde(&self) -> &DMatrix<f64> {
        &self.g_tilde
    }

    /// Pull a cotangent of `P` back to `G̃`: `−X (P̄ + P̄ᵀ) P`.
    pub fn pullback(&self, p_bar: &DMatrix<f64>) -> DMatrix<f64> {
        let sym = p_bar + p_bar.transpose();
        -(&self.x * sym) * &self.p
    }
}

/// Iterates of one sample: `z = sh(ξ)` and `τ̂ = (τ + η)/2` are the half-step
/// values computed from `(ξ, η)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DrsState {
    pub z: DVector<f64>,
    pub tau_hat: DVector<f64>,
    pub xi: DVector<f64>,
    pub eta: DVector<f64>,
}

impl DrsState {
    pub fn zeros(n_z: usize, n_tau: usize) -> Self {
        Self {
            z: DVector::zeros(n_z),
            tau_hat: DVector::zeros(n_tau),
            xi: DVector::zeros(n_z),
            eta: DVector::zeros(n_tau),
        }
    }
}

/// Recorded splitting variables `v^0..v^K` for a batch, plus the projector.
#[derive(Debug, Clone)]
pub struct UnrollTape {
    pub(crate) projector: Arc<Projector>,
    pub(crate) tau: DMatrix<f64>,
    pub(crate) v: Vec<DMatrix<f64>>,
}

impl UnrollTape {
    pub fn k_drs(&self) -> usize {
        self.v.len() - 1
    }

    pub fn batch(&self) -> usize {
        self.tau.ncols()
    }

    pub fn projector(&self) -> &Projector {
        &self.projector
    }

    /// States `k = 0..=K` of sample `b`.
    pub fn states(&self, params: &ScoringModelParams, b: usize) -> Vec<DrsState> {
        let nz = params.n_z();
        let nt = self.tau.nrows();
        self.v
            .iter()
            .map(|v| {
                let xi = v.view((0, b), (nz, 1)).column(0).into_owned();
                let eta = v.view((nz, b), (nt, 1)).column(0).into_owned();
                let z = DVector::from_fn(nz, |i, _| soft_threshold_scalar(xi[i], params.d1[i], params.d2[i]));
                let tau_hat = (self.tau.column(b) + &eta) * 0.5;
                DrsState { z, tau_hat, xi, eta }
            })
            .collect()
    }

    /// Output `(τ + η^K)/2`, one column per sample.
    pub fn output(&self) -> DMatrix<f64> {
        let nt = self.tau.nrows();
        let last = self.v.last().expect("tape has v^0");
        let nz = last.nrows() - nt;
        (&self.tau + last.rows(nz, nt)) * 0.5
    }
}

/// Half-step `h = (sh(ξ), (τ + η)/2)` for every column.
fn half_step(params: &ScoringModelParams, v: &DMatrix<f64>, tau: &DMatrix<f64>) -> DMatrix<f64> {
    let nz = params.n_z();
    let nt = tau.nrows();
    let mut h = DMatrix::zeros(v.nrows(), v.ncols());
    for b in 0..v.ncols() {
        for i in 0..nz {
            h[(i, b)] = soft_threshold_scalar(v[(i, b)], params.d1[i], params.d2[i]);
        }
        for i in 0..nt {
            h[(nz + i, b)] = 0.5 * (tau[(i, b)] + v[(nz + i, b)]);
        }
    }
    h
}

/// Run `K` iterations on each column of `tau` (`n_τ × B`).
pub fn forward_batch(
    params: &ScoringModelParams,
    projector: Arc<Projector>,
    tau: &DMatrix<f64>,
    init: Option<&DMatrix<f64>>,
) -> Result<UnrollTape> {
    let nz = params.n_z();
    let nt = params.layout.dim();
    let nv = nz + nt;
    check_len("τ batch rows", nt, tau.nrows())?;
    if projector.g_tilde.shape() != (params.m_z(), nv) {
        return Err(Error::Precondition("projector does not match the parameters".into()));
    }
    let v0 = match init {
        Some(v) => {
            if v.shape() != (nv, tau.ncols()) {
                return Err(Error::dim("DRS initial state", nv, v.nrows()));
            }
            v.clone()
        }
        None => DMatrix::zeros(nv, tau.ncols()),
    };
    let mut vs = Vec::with_capacity(params.k_drs + 1);
    vs.push(v0);
    for _ in 0..params.k_drs {
        let v = vs.last().expect("nonempty");
        let h = half_step(params, v, tau);
        let r = &h * 2.0 - v;
        let pr = &projector.p * r;
        vs.push(v + pr - h);
    }
    Ok(UnrollTape {
        projector,
        tau: tau.clone(),
        v: vs,
    })
}

/// Reverse pass for a batch; `grad_out` is the cotangent of the output
/// (`n_τ × B`). Gradients are summed over the batch.
pub fn backward_batch(params: &ScoringModelParams, tape: &UnrollTape, grad_out: &DMatrix<f64>) -> Result<ParamGradients> {
    let nz = params.n_z();
    let nt = params.layout.dim();
    let nv = nz + nt;
    let batch = tape.batch();
    if grad_out.shape() != (nt, batch) {
        return Err(Error::dim("output cotangent", nt * batch, grad_out.len()));
    }
    if tape.k_drs() != params.k_drs || tape.projector.g_tilde != params.g_tilde() {
        return Err(Error::Precondition("tape was recorded with different parameters".into()));
    }
    let p = &tape.projector.p;
    let mut grads = ParamGradients::zeros_like(params);
    let mut p_bar = DMatrix::zeros(nv, nv);
    let mut v_bar = DMatrix::zeros(nv, batch);
    v_bar.rows_mut(nz, nt).copy_from(&(grad_out * 0.5));

    for k in (0..tape.k_drs()).rev() {
        let v = &tape.v[k];
        let h = half_step(params, v, &tape.tau);
        let r = &h * 2.0 - v;
        p_bar += &v_bar * r.transpose();
        let r_bar = p * &v_bar;
        let h_bar = &r_bar * 2.0 - &v_bar;
        v_bar -= &r_bar;
        for b in 0..batch {
            for i in 0..nz {
                let xi = v[(i, b)];
                let (d1, d2) = (params.d1[i], params.d2[i]);
                let a = d1.abs();
                if xi > a || xi < -a {
                    let s = 1.0 / (1.0 + 2.0 * d2 * d2);
                    let hb = h_bar[(i, b)];
                    v_bar[(i, b)] += s * hb;
                    grads.d1[i] -= xi.signum() * sign0(d1) * s * hb;
                    grads.d2[i] -= 4.0 * d2 * h[(i, b)] * s * hb;
                }
            }
            for i in 0..nt {
                v_bar[(nz + i, b)] += 0.5 * h_bar[(nz + i, b)];
            }
        }
    }
    let gt_bar = tape.projector.pullback(&p_bar);
    grads.g.copy_from(&gt_bar.columns(0, nz));
    grads.w.copy_from(&gt_bar.columns(nz, nt));
    Ok(grads)
}

fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn state_matrix(params: &ScoringModelParams, init: Option<&DrsState>) -> Result<Option<DMatrix<f64>>> {
    let Some(s) = init else { return Ok(None) };
    check_len("DRS ξ", params.n_z(), s.xi.len())?;
    check_len("DRS η", params.layout.dim(), s.eta.len())?;
    let mut v = DMatrix::zeros(params.n_z() + params.layout.dim(), 1);
    v.view_mut((0, 0), (params.n_z(), 1)).copy_from(&s.xi);
    v.view_mut((params.n_z(), 0), (params.layout.dim(), 1)).copy_from(&s.eta);
    Ok(Some(v))
}

/// `Prox_Ŝ(τ)` approximated by `K` unrolled iterations from `init` (zeros by
/// default).
pub fn prox_hat_forward(
    params: &ScoringModelParams,
    tau: &TrajectorySegment,
    init: Option<&DrsState>,
) -> Result<(TrajectorySegment, UnrollTape)> {
    params.validate()?;
    if tau.layout != params.layout {
        return Err(Error::Precondition("segment layout does not match the model".into()));
    }
    let projector = Arc::new(Projector::new(params)?);
    prox_hat_forward_cached(params, projector, tau, init)
}

/// As [`prox_hat_forward`] with a projector built once by the caller.
pub fn prox_hat_forward_cached(
    params: &ScoringModelParams,
    projector: Arc<Projector>,
    tau: &TrajectorySegment,
    init: Option<&DrsState>,
) -> Result<(TrajectorySegment, UnrollTape)> {
    let v0 = state_matrix(params, init)?;
    let t = DMatrix::from_column_slice(tau.data.len(), 1, tau.data.as_slice());
    let tape = forward_batch(params, projector, &t, v0.as_ref())?;
    let out = tape.output().column(0).into_owned();
    Ok((TrajectorySegment::new(params.layout, out)?, tape))
}

pub fn prox_hat_backward(
    tape: &UnrollTape,
    grad_out: &DVector<f64>,
    params: &ScoringModelParams,
) -> Result<ParamGradients> {
    let g = DMatrix::from_column_slice(grad_out.len(), 1, grad_out.as_slice());
    backward_batch(params, tape, &g)
}
