use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::deepc::{ProxOracle, RegularizationWeights, TrajectorySegment};
use crate::error::{Error, Result};
use crate::plant::{DataMatrix, Layout};
use crate::solver::{SolveStatus, SolverSettings};

/// Distribution of the combination vector `g` in `τ = H g + ε`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombinationLaw {
    /// `g ∼ N(0, I/M)`
    Gaussian,
    /// `g = e_j`, cycling through the columns.
    Column,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_samples: usize,
    pub noise_scale: f64,
    pub law: CombinationLaw,
    /// Put the raw columns of `H` first (capped at `n_samples`).
    pub include_raw_columns: bool,
    pub validation_fraction: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_samples: 2000,
            noise_scale: 0.1,
            law: CombinationLaw::Gaussian,
            include_raw_columns: true,
            validation_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: u64,
    pub config: DatasetConfig,
    pub raw_columns: usize,
    pub oracle_tol: f64,
    /// Largest primal residual reported by the oracle over all targets.
    pub oracle_max_residual: f64,
}

/// Pairs `(τ, Prox_S(τ))` stored column-wise; the first `n_train` columns are
/// the training split.
#[derive(Debug, Clone)]
pub struct ProxDataset {
    pub layout: Layout,
    pub taus: DMatrix<f64>,
    pub targets: DMatrix<f64>,
    pub n_train: usize,
    pub meta: DatasetMeta,
}

impl ProxDataset {
    pub fn len(&self) -> usize {
        self.taus.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_validation(&self) -> usize {
        self.len() - self.n_train
    }

    pub fn pair(&self, i: usize) -> (TrajectorySegment, TrajectorySegment) {
        (
            TrajectorySegment {
                layout: self.layout,
                data: self.taus.column(i).into_owned(),
            },
            TrajectorySegment {
                layout: self.layout,
                data: self.targets.column(i).into_owned(),
            },
        )
    }

    /// Build from explicit pairs, all used for training.
    pub fn from_pairs(layout: Layout, taus: DMatrix<f64>, targets: DMatrix<f64>) -> Result<Self> {
        if taus.shape() != targets.shape() || taus.nrows() != layout.dim() {
            return Err(Error::Precondition("τ and target batches must share the layout".into()));
        }
        let n = taus.ncols();
        Ok(Self {
            layout,
            taus,
            targets,
            n_train: n,
            meta: DatasetMeta {
                seed: 0,
                config: DatasetConfig {
                    n_samples: n,
                    validation_fraction: 0.0,
                    ..DatasetConfig::default()
                },
                raw_columns: 0,
                oracle_tol: f64::NAN,
                oracle_max_residual: f64::NAN,
            },
        })
    }
}

/// Per-row standard deviation of `H`.
fn row_std(h: &DMatrix<f64>) -> DVector<f64> {
    let n = h.ncols() as f64;
    DVector::from_fn(h.nrows(), |i, _| {
        let row = h.row(i);
        let mean = row.sum() / n;
        (row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
    })
}

pub fn build_dataset(
    data: &DataMatrix,
    reg: &RegularizationWeights,
    cfg: &DatasetConfig,
    seed: u64,
) -> Result<ProxDataset> {
    if cfg.n_samples == 0 {
        return Err(Error::Precondition("n_samples must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&cfg.validation_fraction) || !(cfg.noise_scale >= 0.0) {
        return Err(Error::Precondition("invalid dataset configuration".into()));
    }
    let layout = data.layout;
    let (nt, mcols) = (layout.dim(), data.cols());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = if cfg.include_raw_columns { mcols.min(cfg.n_samples) } else { 0 };
    let sd = row_std(&data.h);
    let mut taus = DMatrix::zeros(nt, cfg.n_samples);
    let gstd = 1.0 / (mcols as f64).sqrt();
    for s in 0..cfg.n_samples {
        let mut tau = if s < raw {
            data.h.column(s).into_owned()
        } else {
            match cfg.law {
                CombinationLaw::Gaussian => {
                    let g = DVector::from_fn(mcols, |_, _| { let e: f64 = StandardNormal.sample(&mut rng); gstd * e });
                    &data.h * g
                }
                CombinationLaw::Column => data.h.column((s - raw) % mcols).into_owned(),
            }
        };
        for i in 0..nt {
            let e: f64 = StandardNormal.sample(&mut rng);
            tau[i] += cfg.noise_scale * sd[i] * e;
        }
        taus.set_column(s, &tau);
    }
    let mut order: Vec<usize> = (0..cfg.n_samples).collect();
    order.shuffle(&mut rng);
    let taus = DMatrix::from_fn(nt, cfg.n_samples, |i, j| taus[(i, order[j])]);

    let settings = SolverSettings::oracle();
    let mut oracle = ProxOracle::new(data, reg, settings)?;
    let mut targets = DMatrix::zeros(nt, cfg.n_samples);
    let mut max_res: f64 = 0.0;
    for s in 0..cfg.n_samples {
        let tau = TrajectorySegment::new(layout, taus.column(s).into_owned())?;
        let (hat, rep) = oracle.prox_with_report(&tau, None)?;
        if rep.status == SolveStatus::Infeasible {
            return Err(Error::Infeasible(format!("prox oracle failed on sample {s}")));
        }
        max_res = max_res.max(rep.primal_residual);
        targets.set_column(s, &hat.data);
    }
    let n_val = (cfg.n_samples as f64 * cfg.validation_fraction).floor() as usize;
    Ok(ProxDataset {
        layout,
        taus,
        targets,
        n_train: cfg.n_samples - n_val,
        meta: DatasetMeta {
            seed,
            config: cfg.clone(),
            raw_columns: raw,
            oracle_tol: settings.tol,
            oracle_max_residual: max_res,
        },
    })
}
