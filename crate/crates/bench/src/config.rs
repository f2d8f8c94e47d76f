//! TOML configuration for every command. Every field has a default, so an
//! empty file (or the literal `default`) reproduces the reference benchmark.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use redpc::controller::WarmupPolicy;
use redpc::deepc::{ControlCostSpec, RegularizationWeights};
use redpc::plant::{BoxBounds, LtiSystem};
use redpc::score::{DatasetConfig, InitMode, TrainConfig};
use redpc::solver::SolverSettings;
use redpc::{Error, Result};

/// Environment variable naming the output directory used when the config
/// leaves `output_dir` unset.
pub const OUT_DIR_ENV: &str = "REDPC_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub plant: PlantConfig,
    /// One closed-loop episode per seed and method.
    pub seeds: Vec<u64>,
    pub t_sim: usize,
    pub t_data: usize,
    /// Seed for the excitation experiment that produces the data matrix.
    pub data_seed: u64,
    pub warmup: WarmupPolicy,
    pub cost: CostConfig,
    pub regularization: RegularizationWeights,
    pub model: ModelConfig,
    pub dataset: DatasetConfig,
    pub training: TrainConfig,
    pub solver: SolverConfig,
    pub sweep: SweepConfig,
    /// Falls back to `$REDPC_OUT_DIR`, then `out`.
    pub output_dir: Option<PathBuf>,
    /// Episodes run concurrently; keep at 1 for clean timings.
    pub workers: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            plant: PlantConfig::default(),
            seeds: vec![1, 2, 3, 4, 5],
            t_sim: 200,
            t_data: 1500,
            data_seed: 0,
            warmup: WarmupPolicy::Uniform,
            cost: CostConfig::default(),
            regularization: RegularizationWeights::default(),
            model: ModelConfig::default(),
            dataset: DatasetConfig::default(),
            training: TrainConfig::default(),
            solver: SolverConfig::default(),
            sweep: SweepConfig::default(),
            output_dir: None,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantPreset {
    QuadrupleTank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    pub preset: PlantPreset,
    /// Process-noise covariance `sigma_w · I`.
    pub sigma_w: f64,
    /// Measurement-noise covariance `sigma_v · I`.
    pub sigma_v: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            preset: PlantPreset::QuadrupleTank,
            sigma_w: 0.01,
            sigma_v: 0.1,
        }
    }
}

impl PlantConfig {
    pub fn build(&self) -> Result<LtiSystem> {
        let base = match self.preset {
            PlantPreset::QuadrupleTank => LtiSystem::quadruple_tank(),
        };
        if !(self.sigma_w >= 0.0) || !(self.sigma_v >= 0.0) {
            return Err(Error::Precondition("noise covariances must be nonnegative".into()));
        }
        LtiSystem::new(
            base.a().clone(),
            base.b().clone(),
            base.c().clone(),
            DMatrix::identity(base.n(), base.n()) * self.sigma_w,
            DMatrix::identity(base.p(), base.p()) * self.sigma_v,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    /// Row-major `p × p` output weight.
    pub q: Vec<Vec<f64>>,
    /// Row-major `m × m` input weight.
    pub r: Vec<Vec<f64>>,
    pub reference: Vec<f64>,
    pub input_lower: Vec<f64>,
    pub input_upper: Vec<f64>,
    pub output_lower: Vec<f64>,
    pub output_upper: Vec<f64>,
    pub horizon: usize,
    pub t_ini: usize,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            q: vec![vec![35.0, 0.0], vec![0.0, 35.0]],
            r: vec![vec![1e-4, 0.0], vec![0.0, 1e-4]],
            reference: vec![0.65, 0.77],
            input_lower: vec![-2.0; 2],
            input_upper: vec![2.0; 2],
            output_lower: vec![-2.0; 2],
            output_upper: vec![2.0; 2],
            horizon: 20,
            t_ini: 10,
        }
    }
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Precondition(format!("{name} must be a square matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl CostConfig {
    pub fn build(&self) -> Result<ControlCostSpec> {
        let spec = ControlCostSpec {
            q: matrix("cost.q", &self.q)?,
            r: matrix("cost.r", &self.r)?,
            reference: DVector::from_vec(self.reference.clone()),
            input_box: BoxBounds {
                lower: self.input_lower.clone(),
                upper: self.input_upper.clone(),
            },
            output_box: BoxBounds {
                lower: self.output_lower.clone(),
                upper: self.output_upper.clone(),
            },
            horizon: self.horizon,
            t_ini: self.t_ini,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Stored as `<output_dir>/models/<name>.redpc`.
    pub name: String,
    pub n_z: usize,
    pub m_z: usize,
    pub k_drs: usize,
    pub init: InitMode,
    /// Seed for parameter initialization and the training dataset.
    pub seed: u64,
    /// Use embedding parameters (sized `M + p·T_ini` by `(m+p)·L`, so
    /// `n_z`/`m_z` are ignored) when the model file is missing. The approx
    /// row is then labelled `embedding`. When false a missing model is an
    /// error.
    pub allow_fallback: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            name: "tank".into(),
            n_z: 110,
            m_z: 55,
            k_drs: 20,
            init: InitMode::Random,
            seed: 0,
            allow_fallback: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Receding-horizon solves (all three controllers).
    pub online: SolverSettings,
    /// Ground-truth proximal targets and diagnostics.
    pub oracle: SolverSettings,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            online: SolverSettings::online(),
            oracle: SolverSettings::oracle(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Data-matrix column counts for DeePC (columns of `H` are truncated).
    pub m_grid: Vec<usize>,
    /// Latent sizes for the reduced controller; `m_z = round(m_z_ratio · n_z)`.
    pub n_z_grid: Vec<usize>,
    pub m_z_ratio: f64,
    /// Training epochs per sweep model; the main `training` section is used
    /// for everything else.
    pub epochs: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            m_grid: vec![200, 500, 1000, 1471],
            n_z_grid: vec![32, 64, 110, 160],
            m_z_ratio: 0.5,
            epochs: 100,
        }
    }
}

impl BenchConfig {
    /// `"default"` selects the built-in configuration.
    pub fn load(path: &str) -> Result<Self> {
        let cfg = if path == "default" {
            Self::default()
        } else {
            let text = std::fs::read_to_string(path)
                .map_err(|e| std::io::Error::new(e.kind(), format!("cannot read config {path}: {e}")))?;
            Self::from_toml(&text)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format {
            what: "config",
            detail: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is serializable")
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Precondition("at least one seed is required".into()));
        }
        if self.t_sim == 0 || self.workers == 0 {
            return Err(Error::Precondition("t_sim and workers must be at least 1".into()));
        }
        if self.model.n_z == 0 || self.model.m_z == 0 || self.model.k_drs == 0 {
            return Err(Error::Precondition("model sizes must be positive".into()));
        }
        if self.sweep.m_grid.is_empty() || self.sweep.n_z_grid.is_empty() {
            return Err(Error::Precondition("sweep grids must be nonempty".into()));
        }
        self.cost.build()?;
        self.plant.build()?;
        self.regularization.validate()
    }

    pub fn output_dir(&self) -> PathBuf {
        match &self.output_dir {
            Some(p) => p.clone(),
            None => std::env::var_os(OUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
        }
    }

    pub fn model_path(&self, out: &Path) -> PathBuf {
        model_path(out, &self.model.name)
    }
}

pub fn model_path(out: &Path, name: &str) -> PathBuf {
    out.join("models").join(format!("{name}.redpc"))
}
