//! Learned approximate scoring function `Ŝ` and its training pipeline.

mod dataset;
mod params;
mod train;
mod unroll;

pub use dataset::{build_dataset, CombinationLaw, DatasetConfig, DatasetMeta, ProxDataset};
pub use params::{init_params, InitMode, InitSource, ParamGradients, Provenance, ScoringModelParams};
pub use train::{evaluate_loss, train, train_with_progress, EpochRecord, TrainConfig, TrainOutcome};
pub use unroll::{
    backward_batch, forward_batch, prox_hat_backward, prox_hat_forward, prox_hat_forward_cached, DrsState,
    Projector, UnrollTape, RIDGE, RIDGE_COND,
};

use nalgebra::DMatrix;

use crate::deepc::TrajectorySegment;
use crate::error::{Error, Result};
use crate::solver::{solve_composite, CompositeProgram, L1Term, SolveStatus, SolverSettings};

/// `min_z ‖diag(d1) z‖₁ + ‖diag(d2) z‖₂²  s.t.  G z = −W τ`.
pub fn score_hat_program(params: &ScoringModelParams, tau: &TrajectorySegment) -> Result<CompositeProgram> {
    params.validate()?;
    if tau.layout != params.layout {
        return Err(Error::Precondition("segment layout does not match the model".into()));
    }
    let nz = params.n_z();
    let mut prog = CompositeProgram::new(nz);
    prog.p = DMatrix::from_diagonal(&params.d2.map(|d| 2.0 * d * d));
    prog.l1_terms.push(L1Term::new(params.d1.abs(), (0..nz).collect()));
    prog.eq_a = params.g.clone();
    prog.eq_b = -(&params.w * &tau.data);
    Ok(prog)
}

/// Optimal value of `Ŝ(τ)`; `+∞` when `W τ ∉ range(G)`.
pub fn score_hat(params: &ScoringModelParams, tau: &TrajectorySegment, settings: &SolverSettings) -> Result<f64> {
    let prog = score_hat_program(params, tau)?;
    let rep = solve_composite(&prog, settings, None)?;
    Ok(match rep.status {
        SolveStatus::Infeasible => f64::INFINITY,
        _ => rep.objective,
    })
}
