//! Model-based MPC baseline on the nominal plant and the measured true state.
//!
//! States are eliminated; outputs stay as decision variables tied to the
//! inputs by `y = Φ x₀ + Γ u`, so boxes on `y` are plain variable bounds.

use nalgebra::{DMatrix, DVector};

use crate::controller::{shift_blocks, Controller, StepContext};
use crate::deepc::ControlCostSpec;
use crate::error::{check_len, Error, Result};
use crate::plant::{Layout, LtiSystem};
use crate::solver::{CompositeProgram, SolveReport, SolveStatus, SolverSettings, WarmStart, Workspace};

/// `Φ` (`pN × n`) and `Γ` (`pN × mN`) with `y_k = C Aᵏ x₀ + Σ_{j<k} C A^{k−1−j} B u_j`.
pub fn prediction_matrices(sys: &LtiSystem, horizon: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, m, p) = (sys.n(), sys.m(), sys.p());
    let mut phi = DMatrix::zeros(p * horizon, n);
    let mut gamma = DMatrix::zeros(p * horizon, m * horizon);
    // markov[k] = C Aᵏ B
    let mut ak = DMatrix::identity(n, n);
    let mut markov = Vec::with_capacity(horizon);
    for k in 0..horizon {
        phi.view_mut((k * p, 0), (p, n)).copy_from(&(sys.c() * &ak));
        markov.push(sys.c() * &ak * sys.b());
        ak = sys.a() * ak;
    }
    for k in 1..horizon {
        for j in 0..k {
            gamma
                .view_mut((k * p, j * m), (p, m))
                .copy_from(&markov[k - 1 - j]);
        }
    }
    (phi, gamma)
}

pub struct MpcController {
    sys: LtiSystem,
    phi: DMatrix<f64>,
    layout: Layout,
    prog: CompositeProgram,
    workspace: Workspace,
    settings: SolverSettings,
    warm: Option<WarmStart>,
}

impl MpcController {
    pub fn new(sys: &LtiSystem, cost: &ControlCostSpec, settings: SolverSettings) -> Result<Self> {
        cost.validate()?;
        if sys.m() != cost.m() || sys.p() != cost.p() {
            return Err(Error::Precondition("plant and cost dimensions differ".into()));
        }
        let (m, p, nh) = (sys.m(), sys.p(), cost.horizon);
        let (phi, gamma) = prediction_matrices(sys, nh);
        let len = (m + p) * nh;
        let mut prog = CompositeProgram::new(len);
        cost.write_tracking(&mut prog, 0, m * nh);
        let mut a = DMatrix::zeros(p * nh, len);
        a.columns_mut(0, m * nh).copy_from(&(-gamma));
        a.columns_mut(m * nh, p * nh).fill_with_identity();
        prog.eq_a = a;
        prog.eq_b = DVector::zeros(p * nh);
        let workspace = Workspace::for_program(&prog, &settings)?;
        Ok(Self {
            sys: sys.without_noise(),
            phi,
            layout: cost.layout(),
            prog,
            workspace,
            settings,
            warm: None,
        })
    }

    pub fn program(&self) -> &CompositeProgram {
        &self.prog
    }

    pub fn solve_state(&mut self, x: &DVector<f64>) -> Result<SolveReport> {
        check_len("MPC state", self.sys.n(), x.len())?;
        self.prog.eq_b = &self.phi * x;
        let rep = self.workspace.solve(&self.prog, &self.settings, self.warm.as_ref())?;
        if rep.status == SolveStatus::Infeasible {
            return Err(Error::Infeasible("MPC program (box conflict)".into()));
        }
        let (m, p, nh) = (self.layout.m, self.layout.p, self.layout.horizon);
        let blocks = [(0, m * nh, m), (m * nh, p * nh, p)];
        self.warm = Some(WarmStart {
            primal: shift_blocks(&rep.solution, &blocks),
            dual: Some(shift_blocks(&rep.dual, &blocks)),
        });
        Ok(rep)
    }

    pub fn first_input(&self, rep: &SolveReport) -> DVector<f64> {
        rep.solution.rows(0, self.layout.m).into_owned()
    }
}

impl Controller for MpcController {
    fn name(&self) -> &str {
        "mpc"
    }

    fn layout(&self) -> Layout {
        self.layout
    }

    fn reset(&mut self) {
        self.warm = None;
    }

    fn step(&mut self, ctx: &StepContext<'_>) -> Result<(DVector<f64>, SolveReport)> {
        let rep = self.solve_state(ctx.state)?;
        Ok((self.first_input(&rep), rep))
    }
}

/// One MPC step from state `x`.
pub fn mpc_step(
    sys: &LtiSystem,
    x: &DVector<f64>,
    cost: &ControlCostSpec,
    settings: &SolverSettings,
) -> Result<(DVector<f64>, SolveReport)> {
    let mut ctl = MpcController::new(sys, cost, *settings)?;
    let rep = ctl.solve_state(x)?;
    Ok((ctl.first_input(&rep), rep))
}
