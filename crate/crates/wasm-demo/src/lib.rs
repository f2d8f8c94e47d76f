//! Browser bindings: the elastic-net soft threshold, closed-loop episodes on
//! the quadruple tank, and the unrolled DRS approximation of the score prox.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

use redpc::approx::ApproxController;
use redpc::controller::{run_receding_horizon, Controller, WarmupPolicy};
use redpc::deepc::{prox_score, ControlCostSpec, DeepcController, RegularizationWeights, TrajectorySegment};
use redpc::linalg::soft_threshold_scalar;
use redpc::mpc::MpcController;
use redpc::plant::{collect_data, hankel, BoxBounds, LtiSystem};
use redpc::score::{init_params, prox_hat_forward, InitMode, InitSource};
use redpc::solver::SolverSettings;

fn js_err(e: redpc::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// `argmin_x |d1|·|x| + d2²·x² + ½(x − v)²` for every `v`.
#[wasm_bindgen]
pub fn soft_threshold(values: &[f64], d1: f64, d2: f64) -> Vec<f64> {
    values.iter().map(|&v| soft_threshold_scalar(v, d1, d2)).collect()
}

/// Result of [`closed_loop`], flattened per channel for plotting.
#[wasm_bindgen(getter_with_clone)]
pub struct Episode {
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub stage_cost: Vec<f64>,
    pub iterations: Vec<u32>,
    pub total_cost: f64,
    /// Empty unless the controller failed part way.
    pub failure: String,
}

fn tank_cost(r1: f64, r2: f64) -> ControlCostSpec {
    ControlCostSpec {
        q: DMatrix::identity(2, 2) * 35.0,
        r: DMatrix::identity(2, 2) * 1e-4,
        reference: DVector::from_vec(vec![r1, r2]),
        input_box: BoxBounds::symmetric(2, 2.0),
        output_box: BoxBounds::symmetric(2, 2.0),
        horizon: 20,
        t_ini: 10,
    }
}

/// Run one episode of `method` (`deepc`, `approx` or `mpc`) on the quadruple
/// tank. `noise` scales both noise covariances (1 = the benchmark setting).
/// The reduced controller uses embedding parameters built from the data.
#[wasm_bindgen]
pub fn closed_loop(
    method: &str,
    t_sim: usize,
    t_data: usize,
    seed: u64,
    noise: f64,
    r1: f64,
    r2: f64,
) -> Result<Episode, JsError> {
    let base = LtiSystem::quadruple_tank();
    let sys = LtiSystem::new(
        base.a().clone(),
        base.b().clone(),
        base.c().clone(),
        base.sigma_w() * noise,
        base.sigma_v() * noise,
    )
    .map_err(js_err)?;
    let cost = tank_cost(r1, r2);
    let reg = RegularizationWeights::default();
    let settings = SolverSettings::online();
    let needs_data = method != "mpc";
    let data = if needs_data {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let log = collect_data(&sys, t_data, &cost.input_box, &mut rng).map_err(js_err)?;
        Some(hankel(&log, cost.t_ini, cost.horizon).map_err(js_err)?)
    } else {
        None
    };
    let mut ctl: Box<dyn Controller> = match (method, &data) {
        ("deepc", Some(d)) => Box::new(DeepcController::new(d, &cost, &reg, settings).map_err(js_err)?),
        ("approx", Some(d)) => {
            let l = d.layout;
            let params = init_params(
                d.cols() + l.p * l.t_ini,
                l.dim(),
                l,
                20,
                InitMode::Embedding,
                0,
                Some(InitSource { data: d, reg: &reg }),
            )
            .map_err(js_err)?;
            Box::new(ApproxController::new(&params, &cost, settings).map_err(js_err)?)
        }
        ("mpc", _) => Box::new(MpcController::new(&sys, &cost, settings).map_err(js_err)?),
        _ => return Err(JsError::new(&format!("unknown method {method:?}"))),
    };
    let log = run_receding_horizon(ctl.as_mut(), &sys, &cost, t_sim, WarmupPolicy::Uniform, seed).map_err(js_err)?;
    let col = |f: &dyn Fn(&redpc::controller::StepRecord) -> f64| log.records.iter().map(f).collect::<Vec<_>>();
    Ok(Episode {
        y1: col(&|r| r.y[0]),
        y2: col(&|r| r.y[1]),
        u1: col(&|r| r.u[0]),
        u2: col(&|r| r.u[1]),
        stage_cost: col(&|r| r.stage_cost),
        iterations: log.records.iter().map(|r| r.iterations as u32).collect(),
        total_cost: log.accumulated_cost(),
        failure: log.failure.clone().unwrap_or_default(),
    })
}

/// Relative error `‖Prox̂_K(τ) − Prox_S(τ)‖ / ‖Prox_S(τ)‖` of the unrolled DRS
/// with embedding parameters, for each `K` in `ks`, on a second-order
/// single-input system with random `τ`.
#[wasm_bindgen]
pub fn unroll_error(ks: &[u32], seed: u64) -> Result<Vec<f64>, JsError> {
    let sys = LtiSystem::deterministic(
        DMatrix::from_row_slice(2, 2, &[0.9, 0.2, 0.0, 0.7]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
    )
    .map_err(js_err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let log = collect_data(&sys, 45, &BoxBounds::symmetric(1, 1.0), &mut rng).map_err(js_err)?;
    let data = hankel(&log, 2, 4).map_err(js_err)?;
    let reg = RegularizationWeights {
        lambda_g1: 0.1,
        lambda_g2: 1.0,
        lambda_y1: 1.0,
        lambda_y2: 10.0,
    };
    let l = data.layout;
    let tau = TrajectorySegment::new(l, DVector::from_fn(l.dim(), |_, _| rng.gen_range(-1.0..1.0))).map_err(js_err)?;
    let exact = prox_score(&data, &reg, &tau, &SolverSettings::oracle()).map_err(js_err)?;
    let scale = exact.data.norm().max(1e-12);
    ks.iter()
        .map(|&k| {
            let params = init_params(
                data.cols() + l.p * l.t_ini,
                l.dim(),
                l,
                k.max(1) as usize,
                InitMode::Embedding,
                0,
                Some(InitSource { data: &data, reg: &reg }),
            )
            .map_err(js_err)?;
            let (hat, _) = prox_hat_forward(&params, &tau, None).map_err(js_err)?;
            Ok((hat.data - &exact.data).norm() / scale)
        })
        .collect()
}
