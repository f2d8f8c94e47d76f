//! DeePC: the full data-driven program, the scoring function `S(τ)` it
//! implies, and the proximal operator of `S` used as the learning target.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::controller::{shift_blocks, Controller, StepContext};
use crate::error::{check_len, Error, Result};
use crate::linalg::block_diag_repeat;
use crate::plant::{BoxBounds, DataMatrix, Layout};
use crate::solver::{
    CompositeProgram, L1Term, SolveReport, SolveStatus, SolverSettings, WarmStart, Workspace,
};

/// Stacked I/O segment `τ = col(u_ini, u_future, y_ini, y_future)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySegment {
    pub layout: Layout,
    pub data: DVector<f64>,
}

impl TrajectorySegment {
    pub fn new(layout: Layout, data: DVector<f64>) -> Result<Self> {
        check_len("trajectory segment", layout.dim(), data.len())?;
        Ok(Self { layout, data })
    }

    pub fn zeros(layout: Layout) -> Self {
        Self {
            layout,
            data: DVector::zeros(layout.dim()),
        }
    }

    pub fn u_ini(&self) -> DVector<f64> {
        self.slice(self.layout.u_ini())
    }
    pub fn u_future(&self) -> DVector<f64> {
        self.slice(self.layout.u_future())
    }
    pub fn y_ini(&self) -> DVector<f64> {
        self.slice(self.layout.y_ini())
    }
    pub fn y_future(&self) -> DVector<f64> {
        self.slice(self.layout.y_future())
    }

    fn slice(&self, r: std::ops::Range<usize>) -> DVector<f64> {
        self.data.rows(r.start, r.len()).into_owned()
    }
}

/// Quadratic tracking cost and I/O constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlCostSpec {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub reference: DVector<f64>,
    pub input_box: BoxBounds,
    pub output_box: BoxBounds,
    pub horizon: usize,
    pub t_ini: usize,
}

impl ControlCostSpec {
    pub fn m(&self) -> usize {
        self.r.nrows()
    }

    pub fn p(&self) -> usize {
        self.q.nrows()
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.m(), self.p(), self.t_ini, self.horizon)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("Q", &self.q), ("R", &self.r)] {
            crate::linalg::require_square(if name == "Q" { "Q" } else { "R" }, w)?;
            if crate::linalg::max_abs(&(w - w.transpose())) > 1e-12 {
                return Err(Error::Precondition(format!("{name} is not symmetric")));
            }
            if w.clone().cholesky().is_none() {
                return Err(Error::Precondition(format!("{name} is not positive definite")));
            }
        }
        check_len("reference", self.p(), self.reference.len())?;
        check_len("input box", self.m(), self.input_box.dim())?;
        check_len("output box", self.p(), self.output_box.dim())?;
        self.input_box.validate()?;
        self.output_box.validate()?;
        if self.horizon == 0 {
            return Err(Error::Precondition("horizon must be positive".into()));
        }
        Ok(())
    }

    /// `‖y − r‖²_Q + ‖u‖²_R`
    pub fn stage_cost(&self, u: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let e = y - &self.reference;
        e.dot(&(&self.q * &e)) + u.dot(&(&self.r * u))
    }

    /// Quadratic tracking terms for decision blocks `u ∈ R^{mN}` at
    /// `u_off` and `y ∈ R^{pN}` at `y_off`, plus box constraints.
    pub(crate) fn write_tracking(&self, prog: &mut CompositeProgram, u_off: usize, y_off: usize) {
        let (m, p, n) = (self.m(), self.p(), self.horizon);
        let r2 = block_diag_repeat(&(&self.r * 2.0), n);
        let q2 = block_diag_repeat(&(&self.q * 2.0), n);
        prog.p.view_mut((u_off, u_off), (m * n, m * n)).copy_from(&r2);
        prog.p.view_mut((y_off, y_off), (p * n, p * n)).copy_from(&q2);
        let qr = &self.q * &self.reference;
        for k in 0..n {
            for i in 0..p {
                prog.q[y_off + k * p + i] = -2.0 * qr[i];
            }
            for i in 0..m {
                prog.lower[u_off + k * m + i] = self.input_box.lower[i];
                prog.upper[u_off + k * m + i] = self.input_box.upper[i];
            }
            for i in 0..p {
                prog.lower[y_off + k * p + i] = self.output_box.lower[i];
                prog.upper[y_off + k * p + i] = self.output_box.upper[i];
            }
        }
        prog.constant += n as f64 * self.reference.dot(&qr);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularizationWeights {
    pub lambda_g1: f64,
    pub lambda_g2: f64,
    pub lambda_y1: f64,
    pub lambda_y2: f64,
}

impl RegularizationWeights {
    pub fn zero() -> Self {
        Self {
            lambda_g1: 0.0,
            lambda_g2: 0.0,
            lambda_y1: 0.0,
            lambda_y2: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_g1, self.lambda_g2, self.lambda_y1, self.lambda_y2];
        if all.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
            return Err(Error::Precondition(
                "regularization weights must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }
}

impl Default for RegularizationWeights {
    fn default() -> Self {
        Self {
            lambda_g1: 1.0,
            lambda_g2: 100.0,
            lambda_y1: 100.0,
            lambda_y2: 100_000.0,
        }
    }
}

/// Past `T_ini` measured inputs and outputs, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct InitWindow {
    pub u_ini: DVector<f64>,
    pub y_ini: DVector<f64>,
}

impl InitWindow {
    pub fn check(&self, layout: &Layout) -> Result<()> {
        check_len("u_ini", layout.m * layout.t_ini, self.u_ini.len())?;
        check_len("y_ini", layout.p * layout.t_ini, self.y_ini.len())
    }

    /// Build from the most recent `t_ini` samples.
    pub fn from_history(inputs: &[DVector<f64>], outputs: &[DVector<f64>], t_ini: usize) -> Result<Self> {
        if inputs.len() < t_ini || outputs.len() < t_ini {
            return Err(Error::Precondition(format!(
                "need {t_ini} past samples, have {}",
                inputs.len().min(outputs.len())
            )));
        }
        let stack = |v: &[DVector<f64>]| {
            let tail = &v[v.len() - t_ini..];
            let data: Vec<f64> = tail.iter().flat_map(|x| x.iter().copied()).collect();
            DVector::from_vec(data)
        };
        Ok(Self {
            u_ini: stack(inputs),
            y_ini: stack(outputs),
        })
    }
}

/// Append the `[H  E_σ]` block columns for `(g, σ_y)` at column offset 0 and
/// the regularizer on them.
fn write_score_block(prog: &mut CompositeProgram, data: &DataMatrix, reg: &RegularizationWeights) {
    let l = data.layout;
    let mcols = data.cols();
    let ns = l.p * l.t_ini;
    prog.eq_a.view_mut((0, 0), (l.dim(), mcols)).copy_from(&data.h);
    let yr = l.y_ini();
    for i in 0..ns {
        prog.eq_a[(yr.start + i, mcols + i)] = -1.0;
    }
    for i in 0..mcols {
        prog.p[(i, i)] = 2.0 * reg.lambda_g2;
    }
    for i in 0..ns {
        prog.p[(mcols + i, mcols + i)] = 2.0 * reg.lambda_y2;
    }
    if reg.lambda_g1 > 0.0 {
        prog.l1_terms.push(L1Term::uniform(reg.lambda_g1, 0, mcols));
    }
    if reg.lambda_y1 > 0.0 && ns > 0 {
        prog.l1_terms.push(L1Term::uniform(reg.lambda_y1, mcols, ns));
    }
}

fn check_shapes(data: &DataMatrix, cost: &ControlCostSpec) -> Result<()> {
    cost.validate()?;
    let (a, b) = (data.layout, cost.layout());
    if a != b {
        return Err(Error::Precondition(format!(
            "data layout {a:?} does not match cost layout {b:?}"
        )));
    }
    Ok(())
}

/// Decision-vector offsets of the DeePC program `(g, σ_y, u, y)`.
#[derive(Debug, Clone, Copy)]
pub struct DeepcIndex {
    pub g: usize,
    pub sigma: usize,
    pub u: usize,
    pub y: usize,
    pub len: usize,
}

impl DeepcIndex {
    pub fn new(layout: &Layout, cols: usize) -> Self {
        let sigma = cols;
        let u = sigma + layout.p * layout.t_ini;
        let y = u + layout.m * layout.horizon;
        Self {
            g: 0,
            sigma,
            u,
            y,
            len: y + layout.p * layout.horizon,
        }
    }
}

/// Assemble the DeePC program for one time step.
///
/// Equality rows follow the segment layout: `U_p g = u_ini`,
/// `U_f g = u`, `Y_p g = y_ini + σ_y`, `Y_f g = y`.
pub fn assemble_deepc(
    data: &DataMatrix,
    cost: &ControlCostSpec,
    reg: &RegularizationWeights,
    win: &InitWindow,
) -> Result<CompositeProgram> {
    check_shapes(data, cost)?;
    reg.validate()?;
    let l = data.layout;
    win.check(&l)?;
    let idx = DeepcIndex::new(&l, data.cols());
    let mut prog = CompositeProgram::new(idx.len);
    prog.eq_a = DMatrix::zeros(l.dim(), idx.len);
    prog.eq_b = DVector::zeros(l.dim());
    write_score_block(&mut prog, data, reg);
    let uf = l.u_future();
    for i in 0..uf.len() {
        prog.eq_a[(uf.start + i, idx.u + i)] = -1.0;
    }
    let yf = l.y_future();
    for i in 0..yf.len() {
        prog.eq_a[(yf.start + i, idx.y + i)] = -1.0;
    }
    cost.write_tracking(&mut prog, idx.u, idx.y);
    set_window_rhs(&mut prog.eq_b, &l, win);
    Ok(prog)
}

fn set_window_rhs(b: &mut DVector<f64>, l: &Layout, win: &InitWindow) {
    b.rows_mut(l.u_ini().start, l.u_ini().len()).copy_from(&win.u_ini);
    b.rows_mut(l.y_ini().start, l.y_ini().len()).copy_from(&win.y_ini);
}

/// Receding-horizon DeePC controller with a cached factorization.
pub struct DeepcController {
    layout: Layout,
    idx: DeepcIndex,
    prog: CompositeProgram,
    workspace: Workspace,
    settings: SolverSettings,
    warm: Option<WarmStart>,
}

impl DeepcController {
    pub fn new(
        data: &DataMatrix,
        cost: &ControlCostSpec,
        reg: &RegularizationWeights,
        settings: SolverSettings,
    ) -> Result<Self> {
        let l = data.layout;
        let zero = InitWindow {
            u_ini: DVector::zeros(l.m * l.t_ini),
            y_ini: DVector::zeros(l.p * l.t_ini),
        };
        let prog = assemble_deepc(data, cost, reg, &zero)?;
        let workspace = Workspace::for_program(&prog, &settings)?;
        Ok(Self {
            layout: l,
            idx: DeepcIndex::new(&l, data.cols()),
            prog,
            workspace,
            settings,
            warm: None,
        })
    }

    /// Force `σ_y ≡ 0` (exact data consistency on the initial window).
    pub fn pin_slack(mut self) -> Self {
        let ns = self.layout.p * self.layout.t_ini;
        for i in 0..ns {
            self.prog.lower[self.idx.sigma + i] = 0.0;
            self.prog.upper[self.idx.sigma + i] = 0.0;
        }
        self
    }

    pub fn index(&self) -> DeepcIndex {
        self.idx
    }

    pub fn program(&self) -> &CompositeProgram {
        &self.prog
    }

    /// Solve for one window, returning the full report.
    pub fn solve_window(&mut self, win: &InitWindow) -> Result<SolveReport> {
        win.check(&self.layout)?;
        set_window_rhs(&mut self.prog.eq_b, &self.layout, win);
        let report = self
            .workspace
            .solve(&self.prog, &self.settings, self.warm.as_ref())?;
        if report.status == SolveStatus::Infeasible {
            return Err(Error::Infeasible("DeePC program".into()));
        }
        let blocks = [
            (self.idx.u, self.layout.m * self.layout.horizon, self.layout.m),
            (self.idx.y, self.layout.p * self.layout.horizon, self.layout.p),
        ];
        self.warm = Some(WarmStart {
            primal: shift_blocks(&report.solution, &blocks),
            dual: Some(shift_blocks(&report.dual, &blocks)),
        });
        Ok(report)
    }

    pub fn first_input(&self, report: &SolveReport) -> DVector<f64> {
        report.solution.rows(self.idx.u, self.layout.m).into_owned()
    }
}

/// One DeePC step: assemble, solve, return `u₀`.
pub fn deepc_step(
    data: &DataMatrix,
    cost: &ControlCostSpec,
    reg: &RegularizationWeights,
    win: &InitWindow,
    settings: &SolverSettings,
) -> Result<(DVector<f64>, SolveReport)> {
    let mut ctl = DeepcController::new(data, cost, reg, *settings)?;
    let rep = ctl.solve_window(win)?;
    Ok((ctl.first_input(&rep), rep))
}

impl Controller for DeepcController {
    fn name(&self) -> &str {
        "deepc"
    }

    fn layout(&self) -> Layout {
        self.layout
    }

    fn reset(&mut self) {
        self.warm = None;
    }

    fn step(&mut self, ctx: &StepContext<'_>) -> Result<(DVector<f64>, SolveReport)> {
        let rep = self.solve_window(ctx.window)?;
        Ok((self.first_input(&rep), rep))
    }
}

/// Program for `S(τ)`: variables `(g, σ_y)` with `H g + E_σ σ_y = τ`.
pub fn score_program(data: &DataMatrix, reg: &RegularizationWeights, tau: &TrajectorySegment) -> Result<CompositeProgram> {
    reg.validate()?;
    if tau.layout != data.layout {
        return Err(Error::Precondition("segment layout does not match data".into()));
    }
    let l = data.layout;
    let n = data.cols() + l.p * l.t_ini;
    let mut prog = CompositeProgram::new(n);
    prog.eq_a = DMatrix::zeros(l.dim(), n);
    write_score_block(&mut prog, data, reg);
    prog.eq_b = tau.data.clone();
    Ok(prog)
}

/// Scoring function `S(τ)`; errors with [`Error::Infeasible`] when `τ` is not
/// in the range of `[H  E_σ]`.
pub fn score(
    data: &DataMatrix,
    reg: &RegularizationWeights,
    tau: &TrajectorySegment,
    settings: &SolverSettings,
) -> Result<f64> {
    let prog = score_program(data, reg, tau)?;
    let rep = crate::solver::solve_composite(&prog, settings, None)?;
    match rep.status {
        SolveStatus::Infeasible => Err(Error::Infeasible("τ is not in the range of [H E_σ]".into())),
        _ => Ok(rep.objective),
    }
}

/// Proximal operator of `S` with a cached factorization, for repeated
/// evaluation against one data matrix.
///
/// Solves `min λ-regularizer(g, σ) + ½‖τ̂ − τ‖²` over `(g, σ, τ̂)` subject to
/// `H g + E_σ σ − τ̂ = 0`.
pub struct ProxOracle {
    data: DataMatrix,
    prog: CompositeProgram,
    workspace: Workspace,
    settings: SolverSettings,
}

impl ProxOracle {
    pub fn new(data: &DataMatrix, reg: &RegularizationWeights, settings: SolverSettings) -> Result<Self> {
        reg.validate()?;
        let l = data.layout;
        let nsc = data.cols() + l.p * l.t_ini;
        let n = nsc + l.dim();
        let mut prog = CompositeProgram::new(n);
        prog.eq_a = DMatrix::zeros(l.dim(), n);
        prog.eq_b = DVector::zeros(l.dim());
        write_score_block(&mut prog, data, reg);
        for i in 0..l.dim() {
            prog.eq_a[(i, nsc + i)] = -1.0;
            prog.p[(nsc + i, nsc + i)] = 1.0;
        }
        let workspace = Workspace::for_program(&prog, &settings)?;
        Ok(Self {
            data: data.clone(),
            prog,
            workspace,
            settings,
        })
    }

    pub fn layout(&self) -> Layout {
        self.data.layout
    }

    /// Returns `(τ̂, objective, report)` where `τ̂ = H g* + E_σ σ*`.
    pub fn prox_with_report(
        &mut self,
        tau: &TrajectorySegment,
        warm: Option<&WarmStart>,
    ) -> Result<(TrajectorySegment, SolveReport)> {
        if tau.layout != self.data.layout {
            return Err(Error::Precondition("segment layout does not match data".into()));
        }
        let l = self.data.layout;
        let nsc = self.data.cols() + l.p * l.t_ini;
        for i in 0..l.dim() {
            self.prog.q[nsc + i] = -tau.data[i];
        }
        self.prog.constant = 0.5 * tau.data.norm_squared();
        let rep = self.workspace.solve(&self.prog, &self.settings, warm)?;
        let mut hat = &self.data.h * rep.solution.rows(0, self.data.cols());
        let yr = l.y_ini();
        for i in 0..yr.len() {
            hat[yr.start + i] -= rep.solution[self.data.cols() + i];
        }
        Ok((TrajectorySegment::new(l, hat)?, rep))
    }

    pub fn prox(&mut self, tau: &TrajectorySegment) -> Result<TrajectorySegment> {
        Ok(self.prox_with_report(tau, None)?.0)
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }
}

/// `Prox_S(τ)` at the given solver settings.
pub fn prox_score(
    data: &DataMatrix,
    reg: &RegularizationWeights,
    tau: &TrajectorySegment,
    settings: &SolverSettings,
) -> Result<TrajectorySegment> {
    ProxOracle::new(data, reg, *settings)?.prox(tau)
}
