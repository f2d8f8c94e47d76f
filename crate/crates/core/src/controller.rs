//! Shared controller interface and the closed-loop episode runner.

use std::io::Write;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::deepc::{ControlCostSpec, InitWindow};
use crate::error::{Error, Result};
use crate::plant::{Layout, LtiSystem};
use crate::solver::SolveReport;

/// Information available to a controller at one time step.
pub struct StepContext<'a> {
    pub window: &'a InitWindow,
    /// True plant state; only the model-based baseline reads it.
    pub state: &'a DVector<f64>,
}

pub trait Controller {
    fn name(&self) -> &str;
    fn layout(&self) -> Layout;
    /// Drop any warm-start state.
    fn reset(&mut self);
    fn step(&mut self, ctx: &StepContext<'_>) -> Result<(DVector<f64>, SolveReport)>;
}

/// Shift each `(offset, len, stride)` block of `v` forward by one stride,
/// repeating the final stride-sized chunk.
pub(crate) fn shift_blocks(v: &DVector<f64>, blocks: &[(usize, usize, usize)]) -> DVector<f64> {
    let mut out = v.clone();
    for &(off, len, stride) in blocks {
        if len <= stride {
            continue;
        }
        for i in 0..len - stride {
            out[off + i] = v[off + i + stride];
        }
    }
    out
}

/// How the first `T_ini` samples are produced before control starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WarmupPolicy {
    /// Inputs i.i.d. uniform over the input box.
    #[default]
    Uniform,
    /// Zero inputs.
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub y: DVector<f64>,
    pub stage_cost: f64,
    pub solve_ms: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub controller: String,
    pub seed: u64,
    pub t_sim: usize,
    pub records: Vec<StepRecord>,
    /// Set when the controller failed; `records` then holds the partial run.
    pub failure: Option<String>,
}

impl EpisodeLog {
    pub fn accumulated_cost(&self) -> f64 {
        self.records.iter().map(|r| r.stage_cost).sum()
    }

    pub fn mean_solve_ms(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.solve_ms).sum::<f64>() / self.records.len() as f64
    }

    pub fn worst_solve_ms(&self) -> f64 {
        self.records.iter().map(|r| r.solve_ms).fold(0.0, f64::max)
    }

    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }

    /// CSV with header `t,u1..um,y1..yp,stage_cost,solve_ms,iters`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let m = self.records.first().map_or(0, |r| r.u.len());
        let p = self.records.first().map_or(0, |r| r.y.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=m).map(|i| format!("u{i}")));
        header.extend((1..=p).map(|i| format!("y{i}")));
        header.extend(["stage_cost", "solve_ms", "iters"].map(String::from));
        writeln!(w, "{}", header.join(","))?;
        for r in &self.records {
            let mut row = r.t.to_string();
            for v in r.u.iter().chain(r.y.iter()) {
                row.push(',');
                row.push_str(&v.to_string());
            }
            row.push_str(&format!(",{},{:.4},{}", r.stage_cost, r.solve_ms, r.iterations));
            writeln!(w, "{row}")?;
        }
        Ok(())
    }
}

/// Run one closed-loop episode from `x(0) = 0`.
pub fn run_receding_horizon(
    controller: &mut dyn Controller,
    sys: &LtiSystem,
    cost: &ControlCostSpec,
    t_sim: usize,
    warmup: WarmupPolicy,
    seed: u64,
) -> Result<EpisodeLog> {
    if t_sim == 0 {
        return Err(Error::Precondition("T_sim must be at least 1".into()));
    }
    cost.validate()?;
    let layout = controller.layout();
    if layout != cost.layout() {
        return Err(Error::Precondition(format!(
            "controller layout {layout:?} does not match cost layout {:?}",
            cost.layout()
        )));
    }
    if sys.m() != layout.m || sys.p() != layout.p {
        return Err(Error::Precondition("plant dimensions do not match the controller".into()));
    }
    controller.reset();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DVector::zeros(sys.n());
    let mut inputs = Vec::with_capacity(layout.t_ini + t_sim);
    let mut outputs = Vec::with_capacity(layout.t_ini + t_sim);
    for _ in 0..layout.t_ini {
        let u = match warmup {
            WarmupPolicy::Uniform => cost.input_box.sample(&mut rng),
            WarmupPolicy::Zero => DVector::zeros(layout.m),
        };
        let (xn, y) = sys.step(&x, &u, &mut rng)?;
        inputs.push(u);
        outputs.push(y);
        x = xn;
    }

    let mut log = EpisodeLog {
        controller: controller.name().to_string(),
        seed,
        t_sim,
        records: Vec::with_capacity(t_sim),
        failure: None,
    };
    for t in 0..t_sim {
        let window = InitWindow::from_history(&inputs, &outputs, layout.t_ini)?;
        let ctx = StepContext {
            window: &window,
            state: &x,
        };
        let (u, report) = match controller.step(&ctx) {
            Ok(v) => v,
            Err(e) => {
                log.failure = Some(format!("step {t}: {e}"));
                break;
            }
        };
        let (xn, y) = sys.step(&x, &u, &mut rng)?;
        log.records.push(StepRecord {
            t,
            x: x.clone(),
            stage_cost: cost.stage_cost(&u, &y),
            u: u.clone(),
            y: y.clone(),
            solve_ms: report.wall_time * 1e3,
            iterations: report.iterations,
            converged: report.converged(),
        });
        inputs.push(u);
        outputs.push(y);
        x = xn;
    }
    Ok(log)
}
