//! Generic first-order splitting solver for
//!
//! ```text
//! minimize   ½ xᵀP x + qᵀx + c + Σ_j ‖diag(d_j) E_j x‖₁
//! subject to A x = b,  lo ≤ x ≤ hi
//! ```
//!
//! The solver is two-block ADMM (Douglas-Rachford on the dual): the smooth
//! part together with the equality constraint forms one block, solved exactly
//! through a cached Schur-complement factorization; the ℓ1 terms and the box
//! form the other block, whose proximal map is a clipped soft-threshold.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{inf_norm, psd_pseudo_inverse, RANK_RTOL};

#[cfg(not(target_arch = "wasm32"))]
use std::time::Instant;

/// `wasm32-unknown-unknown` has no monotonic clock in std; solve times read 0
/// there and callers time from the host.
#[cfg(target_arch = "wasm32")]
#[derive(Clone, Copy)]
struct Instant;

#[cfg(target_arch = "wasm32")]
impl Instant {
    fn now() -> Self {
        Instant
    }
    fn elapsed(&self) -> std::time::Duration {
        std::time::Duration::ZERO
    }
}

/// ℓ1 penalty `‖diag(weights) · x[indices]‖₁`; `indices` acts as the
/// coordinate selector `E`.
#[derive(Debug, Clone, PartialEq)]
pub struct L1Term {
    pub weights: DVector<f64>,
    pub indices: Vec<usize>,
}

impl L1Term {
    pub fn new(weights: DVector<f64>, indices: Vec<usize>) -> Self {
        Self { weights, indices }
    }

    /// Uniform weight over a contiguous coordinate range.
    pub fn uniform(weight: f64, start: usize, len: usize) -> Self {
        Self {
            weights: DVector::from_element(len, weight),
            indices: (start..start + len).collect(),
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.indices
            .iter()
            .zip(self.weights.iter())
            .map(|(&i, &w)| (w * x[i]).abs())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeProgram {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    /// Constant objective offset; does not affect the minimizer.
    pub constant: f64,
    pub l1_terms: Vec<L1Term>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub eq_a: DMatrix<f64>,
    pub eq_b: DVector<f64>,
}

impl CompositeProgram {
    /// Unconstrained program with zero objective over `n` variables.
    pub fn new(n: usize) -> Self {
        Self {
            p: DMatrix::zeros(n, n),
            q: DVector::zeros(n),
            constant: 0.0,
            l1_terms: Vec::new(),
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
            eq_a: DMatrix::zeros(0, n),
            eq_b: DVector::zeros(0),
        }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn n_eq(&self) -> usize {
        self.eq_b.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        check_len("program P rows", n, self.p.nrows())?;
        check_len("program P cols", n, self.p.ncols())?;
        check_len("program lower bound", n, self.lower.len())?;
        check_len("program upper bound", n, self.upper.len())?;
        check_len("program A cols", n, self.eq_a.ncols())?;
        check_len("program b", self.eq_a.nrows(), self.eq_b.len())?;
        let scale = 1.0 + crate::linalg::max_abs(&self.p);
        for i in 0..n {
            for j in (i + 1)..n {
                if (self.p[(i, j)] - self.p[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::Precondition(format!(
                        "P is not symmetric at ({i},{j})"
                    )));
                }
            }
            if self.lower[i] > self.upper[i] {
                return Err(Error::Infeasible(format!("empty box on coordinate {i}")));
            }
        }
        for term in &self.l1_terms {
            check_len("l1 term", term.indices.len(), term.weights.len())?;
            if let Some(&bad) = term.indices.iter().find(|&&i| i >= n) {
                return Err(Error::dim("l1 selector index", n, bad));
            }
            if term.weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
                return Err(Error::Precondition(
                    "l1 weights must be finite and nonnegative".into(),
                ));
            }
        }
        Ok(())
    }

    /// Objective value including ℓ1 terms and the constant (box and equality
    /// are not checked).
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        let quad = 0.5 * x.dot(&(&self.p * x));
        let l1: f64 = self.l1_terms.iter().map(|t| t.value(x)).sum();
        quad + self.q.dot(x) + self.constant + l1
    }

    /// Per-coordinate ℓ1 weight obtained by summing all terms.
    pub fn l1_weights(&self) -> DVector<f64> {
        let mut w = DVector::zeros(self.dim());
        for term in &self.l1_terms {
            for (&i, &d) in term.indices.iter().zip(term.weights.iter()) {
                w[i] += d;
            }
        }
        w
    }

    pub fn project_box(&self, x: &mut DVector<f64>) {
        for i in 0..x.len() {
            x[i] = x[i].clamp(self.lower[i], self.upper[i]);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
    /// ADMM penalty parameter; coordinate `i` uses `rho · max(P_ii, rho_floor)`.
    pub rho: f64,
    pub rho_floor: f64,
    /// Over-relaxation factor in (0, 2); 1 is plain ADMM.
    pub relaxation: f64,
    /// Rescale `rho` when the primal and dual residuals drift apart.
    pub adaptive_rho: bool,
    /// Anderson acceleration memory; 0 disables it.
    pub anderson_memory: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self::online()
    }
}

impl SolverSettings {
    /// Tight settings used for ground-truth solves and training labels.
    pub fn oracle() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50_000,
            rho: 1.0,
            rho_floor: 0.1,
            relaxation: 1.6,
            adaptive_rho: true,
            anderson_memory: 5,
        }
    }

    /// Settings for receding-horizon control solves.
    pub fn online() -> Self {
        Self {
            tol: 1e-5,
            max_iter: 10_000,
            rho: 1.0,
            rho_floor: 0.1,
            relaxation: 1.6,
            adaptive_rho: true,
            anderson_memory: 5,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: DVector<f64>,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    /// Seconds spent in the iteration loop (factorization excluded when a
    /// prepared [`Workspace`] is reused).
    pub wall_time: f64,
    pub status: SolveStatus,
    /// Multiplier of the splitting constraint, reusable as part of a warm start.
    pub dual: DVector<f64>,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    pub fn warm_start(&self) -> WarmStart {
        WarmStart {
            primal: self.solution.clone(),
            dual: Some(self.dual.clone()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct WarmStart {
    pub primal: DVector<f64>,
    pub dual: Option<DVector<f64>>,
}

impl WarmStart {
    pub fn primal(primal: DVector<f64>) -> Self {
        Self { primal, dual: None }
    }
}

/// Persistent primal gap (relative to `1 + ‖b‖∞`) that, with stalled
/// iterates, is reported as infeasibility.
const STALL_GAP: f64 = 1e-4;
/// Iterations between penalty-adaptation checks.
const ADAPT_EVERY: usize = 25;
/// Residual ratio outside `[1/band, band]` triggers a penalty update.
const ADAPT_BAND: f64 = 3.0;
const SCALE_MIN: f64 = 1e-4;
const SCALE_MAX: f64 = 1e4;

enum SmoothInverse {
    Diagonal(DVector<f64>),
    Dense(Cholesky<f64, Dyn>),
}

impl SmoothInverse {
    fn apply_in_place(&self, v: &mut DVector<f64>) {
        match self {
            SmoothInverse::Diagonal(inv) => v.component_mul_assign(inv),
            SmoothInverse::Dense(chol) => chol.solve_mut(v),
        }
    }
}

/// Type-II Anderson acceleration of the fixed-point map `w ↦ T(w)` with a
/// residual-norm safeguard: an extrapolated point whose residual exceeds the
/// previous one is discarded in favour of the plain step.
struct Anderson {
    memory: usize,
    /// Ring buffers of iterate and residual differences (columns).
    dw: DMatrix<f64>,
    dg: DMatrix<f64>,
    /// `dgᵀ dg` for the filled columns.
    gram: DMatrix<f64>,
    len: usize,
    head: usize,
    w: DVector<f64>,
    fw: DVector<f64>,
    g: DVector<f64>,
    prev_w: DVector<f64>,
    prev_g: DVector<f64>,
    prev_norm: f64,
    has_prev: bool,
    /// Plain step from the previous iterate while an extrapolated point is
    /// on trial.
    fallback: DVector<f64>,
    on_trial: bool,
}

impl Anderson {
    fn new(memory: usize, dim: usize) -> Self {
        let (cols, dim) = if memory == 0 { (0, 0) } else { (memory, dim) };
        Self {
            memory,
            dw: DMatrix::zeros(dim, cols),
            dg: DMatrix::zeros(dim, cols),
            gram: DMatrix::zeros(cols, cols),
            len: 0,
            head: 0,
            w: DVector::zeros(dim),
            fw: DVector::zeros(dim),
            g: DVector::zeros(dim),
            prev_w: DVector::zeros(dim),
            prev_g: DVector::zeros(dim),
            prev_norm: f64::INFINITY,
            has_prev: false,
            fallback: DVector::zeros(dim),
            on_trial: false,
        }
    }

    fn reset(&mut self) {
        self.len = 0;
        self.head = 0;
        self.has_prev = false;
        self.on_trial = false;
    }

    /// Overwrite the iterate `(z, u)` given its image `(fz, fu)`.
    fn next(&mut self, z: &mut DVector<f64>, u: &mut DVector<f64>, fz: &DVector<f64>, fu: &DVector<f64>) {
        let n = z.len();
        if self.memory == 0 {
            z.copy_from(fz);
            u.copy_from(fu);
            return;
        }
        self.w.rows_mut(0, n).copy_from(z);
        self.w.rows_mut(n, n).copy_from(u);
        self.fw.rows_mut(0, n).copy_from(fz);
        self.fw.rows_mut(n, n).copy_from(fu);
        self.g.copy_from(&self.fw);
        self.g -= &self.w;
        let gnorm = self.g.norm();
        if self.on_trial {
            self.on_trial = false;
            if gnorm > self.prev_norm {
                self.reset();
                z.copy_from(&self.fallback.rows(0, n));
                u.copy_from(&self.fallback.rows(n, n));
                return;
            }
        }
        if self.has_prev {
            let col = self.head;
            self.head = (self.head + 1) % self.memory;
            self.len = (self.len + 1).min(self.memory);
            let mut dw = self.dw.column_mut(col);
            dw.copy_from(&self.w);
            dw -= &self.prev_w;
            let mut dg = self.dg.column_mut(col);
            dg.copy_from(&self.g);
            dg -= &self.prev_g;
            for j in 0..self.len {
                let v = self.dg.column(col).dot(&self.dg.column(j));
                self.gram[(col, j)] = v;
                self.gram[(j, col)] = v;
            }
        }
        self.prev_w.copy_from(&self.w);
        self.prev_g.copy_from(&self.g);
        self.prev_norm = gnorm;
        self.has_prev = true;

        let k = self.len;
        if k > 0 {
            let mut gram = self.gram.view((0, 0), (k, k)).clone_owned();
            let rhs = self.dg.columns(0, k).tr_mul(&self.g);
            let reg = 1e-10 * gram.trace().max(1e-300);
            for i in 0..k {
                gram[(i, i)] += reg;
            }
            if let Some(ch) = gram.cholesky() {
                let gamma = ch.solve(&rhs);
                if gamma.iter().all(|v| v.is_finite()) {
                    self.fallback.copy_from(&self.fw);
                    self.fw.gemv(-1.0, &self.dw.columns(0, k), &gamma, 1.0);
                    self.fw.gemv(-1.0, &self.dg.columns(0, k), &gamma, 1.0);
                    self.on_trial = true;
                }
            }
        }
        z.copy_from(&self.fw.rows(0, n));
        u.copy_from(&self.fw.rows(n, n));
    }
}

/// Cached factorization of the equality-constrained quadratic step for a
/// fixed `(P, A)`. Reusable across solves that only change `q`, `b`, the ℓ1
/// weights, or the box.
pub struct Workspace {
    n: usize,
    base: DVector<f64>,
    scale: f64,
    rho: DVector<f64>,
    smooth: Smooth,
    kinv: SmoothInverse,
    a: DMatrix<f64>,
    /// `A (P + ρI)⁻¹`
    f: DMatrix<f64>,
    /// Solver for `A (P + ρI)⁻¹ Aᵀ`.
    schur: SchurSolve,
}

/// Cholesky when the Schur complement is positive definite; otherwise a
/// truncated pseudo-inverse (redundant equality rows).
enum SchurSolve {
    Cholesky(Cholesky<f64, Dyn>),
    Pinv(DMatrix<f64>),
}

impl SchurSolve {
    fn new(s: DMatrix<f64>) -> Self {
        let lmax = s.diagonal().max();
        match s.clone().cholesky() {
            Some(c) if c.l_dirty().diagonal().min() > (RANK_RTOL * lmax).sqrt() => SchurSolve::Cholesky(c),
            _ => SchurSolve::Pinv(psd_pseudo_inverse(&s)),
        }
    }

    fn solve(&self, c: &DVector<f64>, out: &mut DVector<f64>) {
        match self {
            SchurSolve::Cholesky(ch) => {
                out.copy_from(c);
                ch.solve_mut(out);
            }
            SchurSolve::Pinv(p) => p.mul_to(c, out),
        }
    }
}

enum Smooth {
    Diagonal(DVector<f64>),
    Dense(DMatrix<f64>),
}

impl Smooth {
    fn from_matrix(p: &DMatrix<f64>) -> Self {
        let n = p.nrows();
        let diagonal = (0..n).all(|j| (0..n).all(|i| i == j || p[(i, j)] == 0.0));
        if diagonal {
            Smooth::Diagonal(p.diagonal())
        } else {
            Smooth::Dense(p.clone())
        }
    }

    fn diag(&self, i: usize) -> f64 {
        match self {
            Smooth::Diagonal(d) => d[i],
            Smooth::Dense(p) => p[(i, i)],
        }
    }

    fn quad(&self, x: &DVector<f64>) -> f64 {
        match self {
            Smooth::Diagonal(d) => x.iter().zip(d.iter()).map(|(v, di)| di * v * v).sum(),
            Smooth::Dense(p) => x.dot(&(p * x)),
        }
    }
}

impl Workspace {
    /// Per-coordinate penalty `rho · max(P_ii, floor)`.
    pub fn new(p: &DMatrix<f64>, eq_a: &DMatrix<f64>, rho: f64, floor: f64) -> Result<Self> {
        let n = p.nrows();
        check_len("workspace P", n, p.ncols())?;
        check_len("workspace A cols", n, eq_a.ncols())?;
        if !(rho > 0.0) || !(floor > 0.0) {
            return Err(Error::Precondition("rho and its floor must be positive".into()));
        }
        let smooth = Smooth::from_matrix(p);
        let base = DVector::from_fn(n, |i, _| smooth.diag(i).max(floor));
        let mut ws = Self {
            n,
            base,
            scale: rho,
            rho: DVector::zeros(n),
            smooth,
            kinv: SmoothInverse::Diagonal(DVector::zeros(0)),
            a: eq_a.clone(),
            f: DMatrix::zeros(0, 0),
            schur: SchurSolve::Pinv(DMatrix::zeros(0, 0)),
        };
        ws.factor()?;
        Ok(ws)
    }

    fn factor(&mut self) -> Result<()> {
        let n = self.n;
        self.rho = &self.base * self.scale;
        let rho = &self.rho;
        let eq_a = &self.a;
        let (kinv, f) = match &self.smooth {
            Smooth::Diagonal(d) => {
                let inv = DVector::from_fn(n, |i, _| 1.0 / (d[i] + rho[i]));
                let mut f = eq_a.clone();
                for j in 0..n {
                    f.column_mut(j).scale_mut(inv[j]);
                }
                (SmoothInverse::Diagonal(inv), f)
            }
            Smooth::Dense(p) => {
                let mut k = p.clone();
                for i in 0..n {
                    k[(i, i)] += rho[i];
                }
                let chol = k.cholesky().ok_or_else(|| {
                    Error::Precondition("P + rho I is not positive definite; P must be PSD".into())
                })?;
                let mut ft = eq_a.transpose();
                chol.solve_mut(&mut ft);
                (SmoothInverse::Dense(chol), ft.transpose())
            }
        };
        let schur = if eq_a.nrows() > 0 {
            let s = &f * eq_a.transpose();
            (&s + s.transpose()) * 0.5
        } else {
            DMatrix::zeros(0, 0)
        };
        self.kinv = kinv;
        self.f = f;
        self.schur = SchurSolve::new(schur);
        Ok(())
    }

    pub fn for_program(prog: &CompositeProgram, settings: &SolverSettings) -> Result<Self> {
        prog.validate()?;
        Self::new(&prog.p, &prog.eq_a, settings.rho, settings.rho_floor)
    }

    /// Current penalty multiplier (changes when adaptation is on).
    pub fn penalty_scale(&self) -> f64 {
        self.scale
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Same value as [`CompositeProgram::objective`], using the stored smooth part.
    fn objective(&self, prog: &CompositeProgram, x: &DVector<f64>) -> f64 {
        let l1: f64 = prog.l1_terms.iter().map(|t| t.value(x)).sum();
        0.5 * self.smooth.quad(x) + prog.q.dot(x) + prog.constant + l1
    }

    /// Run ADMM on `prog`, whose `P` and `A` must be the ones this workspace
    /// was built from.
    pub fn solve(
        &mut self,
        prog: &CompositeProgram,
        settings: &SolverSettings,
        warm: Option<&WarmStart>,
    ) -> Result<SolveReport> {
        let n = self.n;
        check_len("solve program dimension", n, prog.dim())?;
        check_len("solve equality rows", self.a.nrows(), prog.n_eq())?;
        if !(settings.tol > 0.0) {
            return Err(Error::Precondition("tolerance must be positive".into()));
        }
        let start = Instant::now();
        let mut rho = self.rho.clone();
        let alpha = settings.relaxation;
        let m = self.a.nrows();
        let (q, b) = (&prog.q, &prog.eq_b);
        let (lower, upper) = (&prog.lower, &prog.upper);
        let weights = prog.l1_weights();
        let mut thresh = weights.component_div(&rho);

        let mut z = DVector::zeros(n);
        let mut u = DVector::zeros(n);
        if let Some(ws) = warm {
            check_len("warm start primal", n, ws.primal.len())?;
            z.copy_from(&ws.primal);
            if let Some(y) = &ws.dual {
                check_len("warm start dual", n, y.len())?;
                u = y.component_div(&rho);
            }
        }
        for i in 0..n {
            z[i] = z[i].clamp(lower[i], upper[i]);
        }

        let mut x = DVector::zeros(n);
        let mut t = DVector::zeros(n);
        let mut c = DVector::zeros(m);
        let mut nu = DVector::zeros(m);
        let mut atnu = DVector::zeros(n);
        // one ADMM step maps the iterate (z, u) to (fz, fu)
        let mut fz = z.clone();
        let mut fu = u.clone();
        let mut accel = Anderson::new(settings.anderson_memory, 2 * n);
        let mut primal = f64::INFINITY;
        let mut dual = f64::INFINITY;
        let mut status = SolveStatus::MaxIterations;
        let mut iterations = 0;
        let b_scale = 1.0 + inf_norm(&prog.eq_b);

        for k in 1..=settings.max_iter {
            iterations = k;
            // x-step: argmin ½x̃ᵀP̃x̃ + q̃ᵀx̃ + ρ/2‖x̃ − (z̃ − ũ)‖² s.t. Ãx̃ = b̃
            for i in 0..n {
                t[i] = rho[i] * (z[i] - u[i]) - q[i];
            }
            // x = K⁻¹t − Fᵀν with F = ÃK⁻¹ and S ν = F t − b̃
            x.copy_from(&t);
            self.kinv.apply_in_place(&mut x);
            if m > 0 {
                self.f.mul_to(&t, &mut c);
                c -= b;
                self.schur.solve(&c, &mut nu);
                self.f.tr_mul_to(&nu, &mut atnu);
                x -= &atnu;
            }

            if k == 1 && m > 0 {
                let resid = inf_norm(&(&self.a * &x - b));
                if resid > 1e-6 * b_scale {
                    status = SolveStatus::Infeasible;
                    primal = resid;
                    break;
                }
            }

            // z-step: clipped soft-threshold of the relaxed point
            for i in 0..n {
                let xr = alpha * x[i] + (1.0 - alpha) * z[i];
                let v = xr + u[i];
                let s = crate::linalg::soft_threshold_scalar(v, thresh[i], 0.0);
                fz[i] = s.clamp(lower[i], upper[i]);
                fu[i] = v - fz[i];
            }

            primal = 0.0;
            dual = 0.0;
            for i in 0..n {
                primal = primal.max((x[i] - fz[i]).abs());
                dual = dual.max((rho[i] * (fz[i] - z[i])).abs());
            }
            if primal <= settings.tol && dual <= settings.tol {
                status = SolveStatus::Converged;
                break;
            }
            if settings.adaptive_rho && k % ADAPT_EVERY == 0 {
                let mut p_s: f64 = 0.0;
                let mut d_s: f64 = 0.0;
                let mut x_n: f64 = 1e-12;
                let mut y_n: f64 = 1e-12;
                for i in 0..n {
                    p_s = p_s.max((x[i] - fz[i]).abs());
                    d_s = d_s.max((rho[i] * (fz[i] - z[i])).abs());
                    x_n = x_n.max(x[i].abs()).max(fz[i].abs());
                    y_n = y_n.max((rho[i] * fu[i]).abs());
                }
                let ratio = ((p_s / x_n) / (d_s / y_n).max(1e-300)).sqrt();
                let factor = (self.scale * ratio).clamp(SCALE_MIN, SCALE_MAX) / self.scale;
                if factor.is_finite() && !(1.0 / ADAPT_BAND..=ADAPT_BAND).contains(&factor) {
                    self.scale *= factor;
                    self.factor()?;
                    rho.copy_from(&self.rho);
                    fu /= factor;
                    thresh = weights.component_div(&rho);
                    accel.reset();
                    z.copy_from(&fz);
                    u.copy_from(&fu);
                    continue;
                }
            }
            accel.next(&mut z, &mut u, &fz, &fu);
        }
        if status == SolveStatus::MaxIterations
            && dual <= settings.tol
            && primal > STALL_GAP * b_scale
        {
            // The iterates stopped moving while a finite gap between the
            // equality block and the box block persists.
            status = SolveStatus::Infeasible;
        }
        let (z, u) = (fz, fu);

        let solution = z;
        // multiplier of the splitting constraint x = z
        let dual_var = u.component_mul(&rho);
        Ok(SolveReport {
            objective: self.objective(prog, &solution),
            solution,
            primal_residual: primal,
            dual_residual: dual,
            iterations,
            wall_time: start.elapsed().as_secs_f64(),
            status,
            dual: dual_var,
        })
    }
}

/// One-shot solve: factorizes, then iterates.
pub fn solve_composite(
    prog: &CompositeProgram,
    settings: &SolverSettings,
    warm_start: Option<&WarmStart>,
) -> Result<SolveReport> {
    let mut ws = Workspace::for_program(prog, settings)?;
    ws.solve(prog, settings, warm_start)
}
