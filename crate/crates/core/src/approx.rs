//! Reduced controller `min_τ ℓ(τ) + Ŝ(τ)` with learned parameters.
//!
//! Decision vector `(z, u, y)`; the initial-window part of `τ` is fixed, so
//! its columns of `W` move to the right-hand side:
//! `G z + W_u u + W_y y = −(W_uini u_ini + W_yini y_ini)`.

use nalgebra::{DMatrix, DVector};

use crate::controller::{shift_blocks, Controller, StepContext};
use crate::deepc::{ControlCostSpec, InitWindow};
use crate::error::{Error, Result};
use crate::plant::Layout;
use crate::score::ScoringModelParams;
use crate::solver::{CompositeProgram, L1Term, SolveReport, SolveStatus, SolverSettings, WarmStart, Workspace};

#[derive(Debug, Clone, Copy)]
pub struct ApproxIndex {
    pub z: usize,
    pub u: usize,
    pub y: usize,
    pub len: usize,
}

impl ApproxIndex {
    pub fn new(layout: &Layout, n_z: usize) -> Self {
        let u = n_z;
        let y = u + layout.m * layout.horizon;
        Self {
            z: 0,
            u,
            y,
            len: y + layout.p * layout.horizon,
        }
    }
}

fn check(params: &ScoringModelParams, cost: &ControlCostSpec) -> Result<()> {
    cost.validate()?;
    params.validate()?;
    if params.layout != cost.layout() {
        return Err(Error::Precondition(format!(
            "model layout {:?} does not match cost layout {:?}",
            params.layout,
            cost.layout()
        )));
    }
    Ok(())
}

fn window_rhs(params: &ScoringModelParams, win: &InitWindow) -> DVector<f64> {
    let l = params.layout;
    let (ui, yi) = (l.u_ini(), l.y_ini());
    let wu = params.w.columns(ui.start, ui.len());
    let wy = params.w.columns(yi.start, yi.len());
    -(wu * &win.u_ini + wy * &win.y_ini)
}

pub fn assemble_approx(
    params: &ScoringModelParams,
    cost: &ControlCostSpec,
    win: &InitWindow,
) -> Result<CompositeProgram> {
    check(params, cost)?;
    let l = params.layout;
    win.check(&l)?;
    let nz = params.n_z();
    let idx = ApproxIndex::new(&l, nz);
    let mut prog = CompositeProgram::new(idx.len);
    for i in 0..nz {
        prog.p[(i, i)] = 2.0 * params.d2[i] * params.d2[i];
    }
    prog.l1_terms.push(L1Term::new(params.d1.abs(), (0..nz).collect()));
    cost.write_tracking(&mut prog, idx.u, idx.y);

    let mut a = DMatrix::zeros(params.m_z(), idx.len);
    a.columns_mut(0, nz).copy_from(&params.g);
    let (uf, yf) = (l.u_future(), l.y_future());
    a.columns_mut(idx.u, uf.len()).copy_from(&params.w.columns(uf.start, uf.len()));
    a.columns_mut(idx.y, yf.len()).copy_from(&params.w.columns(yf.start, yf.len()));
    prog.eq_a = a;
    prog.eq_b = window_rhs(params, win);
    Ok(prog)
}

/// Receding-horizon reduced controller with a cached factorization.
pub struct ApproxController {
    params: ScoringModelParams,
    idx: ApproxIndex,
    prog: CompositeProgram,
    workspace: Workspace,
    settings: SolverSettings,
    warm: Option<WarmStart>,
    warm_enabled: bool,
}

impl ApproxController {
    pub fn new(params: &ScoringModelParams, cost: &ControlCostSpec, settings: SolverSettings) -> Result<Self> {
        let l = params.layout;
        let zero = InitWindow {
            u_ini: DVector::zeros(l.m * l.t_ini),
            y_ini: DVector::zeros(l.p * l.t_ini),
        };
        let prog = assemble_approx(params, cost, &zero)?;
        let workspace = Workspace::for_program(&prog, &settings)?;
        Ok(Self {
            params: params.clone(),
            idx: ApproxIndex::new(&l, params.n_z()),
            prog,
            workspace,
            settings,
            warm: None,
            warm_enabled: true,
        })
    }

    /// Disable the shifted warm start (every solve starts from zero).
    pub fn cold(mut self) -> Self {
        self.warm_enabled = false;
        self
    }

    pub fn index(&self) -> ApproxIndex {
        self.idx
    }

    pub fn program(&self) -> &CompositeProgram {
        &self.prog
    }

    /// Solve for one window. A report that hit the iteration cap is returned
    /// as is; check [`SolveReport::converged`].
    pub fn solve_window(&mut self, win: &InitWindow) -> Result<SolveReport> {
        win.check(&self.params.layout)?;
        self.prog.eq_b = window_rhs(&self.params, win);
        let warm = if self.warm_enabled { self.warm.as_ref() } else { None };
        let report = self.workspace.solve(&self.prog, &self.settings, warm)?;
        if report.status == SolveStatus::Infeasible {
            return Err(Error::Infeasible("reduced program".into()));
        }
        let l = self.params.layout;
        let blocks = [
            (self.idx.u, l.m * l.horizon, l.m),
            (self.idx.y, l.p * l.horizon, l.p),
        ];
        self.warm = Some(WarmStart {
            primal: shift_blocks(&report.solution, &blocks),
            dual: Some(shift_blocks(&report.dual, &blocks)),
        });
        Ok(report)
    }

    pub fn first_input(&self, report: &SolveReport) -> DVector<f64> {
        report.solution.rows(self.idx.u, self.params.layout.m).into_owned()
    }
}

impl Controller for ApproxController {
    fn name(&self) -> &str {
        "approx"
    }

    fn layout(&self) -> Layout {
        self.params.layout
    }

    fn reset(&mut self) {
        self.warm = None;
    }

    fn step(&mut self, ctx: &StepContext<'_>) -> Result<(DVector<f64>, SolveReport)> {
        let rep = self.solve_window(ctx.window)?;
        Ok((self.first_input(&rep), rep))
    }
}

/// One reduced-controller step from an optional warm start.
pub fn approx_step(
    params: &ScoringModelParams,
    cost: &ControlCostSpec,
    win: &InitWindow,
    settings: &SolverSettings,
    warm: Option<&WarmStart>,
) -> Result<(DVector<f64>, SolveReport)> {
    let prog = assemble_approx(params, cost, win)?;
    let rep = Workspace::for_program(&prog, settings)?.solve(&prog, settings, warm)?;
    if rep.status == SolveStatus::Infeasible {
        return Err(Error::Infeasible("reduced program".into()));
    }
    let idx = ApproxIndex::new(&params.layout, params.n_z());
    Ok((rep.solution.rows(idx.u, params.layout.m).into_owned(), rep))
}
