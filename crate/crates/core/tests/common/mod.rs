#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use redpc::deepc::{ControlCostSpec, InitWindow, RegularizationWeights, TrajectorySegment};
use redpc::plant::{collect_data, hankel, BoxBounds, DataMatrix, LtiSystem};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Second-order, single-input single-output, stable and observable.
pub fn small_system() -> LtiSystem {
    LtiSystem::deterministic(
        DMatrix::from_row_slice(2, 2, &[0.9, 0.2, 0.0, 0.7]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
    )
    .unwrap()
}

/// Noise-free data for [`small_system`] with `T_ini = 2`, `N = 4`, `M = 40`.
pub fn small_data(seed: u64) -> DataMatrix {
    let log = collect_data(&small_system(), 45, &BoxBounds::symmetric(1, 1.0), &mut rng(seed)).unwrap();
    hankel(&log, 2, 4).unwrap()
}

pub fn small_reg() -> RegularizationWeights {
    RegularizationWeights {
        lambda_g1: 0.1,
        lambda_g2: 1.0,
        lambda_y1: 1.0,
        lambda_y2: 10.0,
    }
}

pub fn small_cost(r: f64, t_ini: usize, horizon: usize) -> ControlCostSpec {
    ControlCostSpec {
        q: DMatrix::identity(1, 1),
        r: DMatrix::identity(1, 1) * 1e-3,
        reference: DVector::from_element(1, r),
        input_box: BoxBounds::symmetric(1, 10.0),
        output_box: BoxBounds::symmetric(1, 10.0),
        horizon,
        t_ini,
    }
}

pub fn tank_cost() -> ControlCostSpec {
    ControlCostSpec {
        q: DMatrix::identity(2, 2) * 35.0,
        r: DMatrix::identity(2, 2) * 1e-4,
        reference: DVector::from_vec(vec![0.65, 0.77]),
        input_box: BoxBounds::symmetric(2, 2.0),
        output_box: BoxBounds::symmetric(2, 2.0),
        horizon: 20,
        t_ini: 10,
    }
}

pub fn tank_data(seed: u64) -> DataMatrix {
    let log = collect_data(&LtiSystem::quadruple_tank(), 1500, &BoxBounds::symmetric(2, 2.0), &mut rng(seed)).unwrap();
    hankel(&log, 10, 20).unwrap()
}

pub fn gaussian_vec<R: Rng>(rng: &mut R, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| scale * rng.sample::<f64, _>(rand_distr::StandardNormal))
}

/// `τ = H g + E_σ σ` with Gaussian `g`, `σ`, so `S(τ)` is finite.
pub fn tau_in_range<R: Rng>(data: &DataMatrix, rng: &mut R) -> TrajectorySegment {
    let l = data.layout;
    let g = gaussian_vec(rng, data.cols(), 1.0 / (data.cols() as f64).sqrt());
    let sigma = gaussian_vec(rng, l.p * l.t_ini, 0.1);
    let mut tau = &data.h * g;
    let yi = l.y_ini();
    for i in 0..yi.len() {
        tau[yi.start + i] -= sigma[i];
    }
    TrajectorySegment::new(l, tau).unwrap()
}

pub fn random_window<R: Rng>(data: &DataMatrix, rng: &mut R) -> InitWindow {
    let tau = tau_in_range(data, rng);
    InitWindow {
        u_ini: tau.u_ini(),
        y_ini: tau.y_ini(),
    }
}
