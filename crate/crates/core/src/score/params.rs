use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::container;
use crate::deepc::RegularizationWeights;
use crate::error::{check_len, Error, Result};
use crate::plant::{DataMatrix, Layout};

/// How the learnable parameters are initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// `G, W ∼ N(0, 1/m_z)`, `d1, d2 ∼ |N(0, 1)|`.
    Random,
    /// Exact embedding of the true scoring function: `G = [H  E_σ]`,
    /// `W = −I`, weights taken from the regularizer.
    Embedding,
}

/// Where a parameter set came from; persisted with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub init: InitMode,
    pub seed: u64,
    pub regularization: Option<RegularizationWeights>,
    pub data_columns: Option<usize>,
}

/// Learnable parameters of
/// `Ŝ(τ) = min_z ‖diag(d1) z‖₁ + ‖diag(d2) z‖₂²  s.t.  G z + W τ = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoringModelParams {
    pub layout: Layout,
    pub d1: DVector<f64>,
    pub d2: DVector<f64>,
    /// `m_z × n_z`
    pub g: DMatrix<f64>,
    /// `m_z × (m+p)L`
    pub w: DMatrix<f64>,
    /// Number of unrolled Douglas-Rachford iterations.
    pub k_drs: usize,
    pub provenance: Provenance,
}

/// Gradients with the same shapes as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradients {
    pub d1: DVector<f64>,
    pub d2: DVector<f64>,
    pub g: DMatrix<f64>,
    pub w: DMatrix<f64>,
}

impl ParamGradients {
    pub fn zeros_like(p: &ScoringModelParams) -> Self {
        Self {
            d1: DVector::zeros(p.n_z()),
            d2: DVector::zeros(p.n_z()),
            g: DMatrix::zeros(p.m_z(), p.n_z()),
            w: DMatrix::zeros(p.m_z(), p.layout.dim()),
        }
    }

    pub fn max_abs(&self) -> f64 {
        [
            self.d1.amax(),
            self.d2.amax(),
            crate::linalg::max_abs(&self.g),
            crate::linalg::max_abs(&self.w),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn scale(&mut self, s: f64) {
        self.d1 *= s;
        self.d2 *= s;
        self.g *= s;
        self.w *= s;
    }
}

impl ScoringModelParams {
    pub fn n_z(&self) -> usize {
        self.d1.len()
    }

    pub fn m_z(&self) -> usize {
        self.g.nrows()
    }

    /// `[G  W]`
    pub fn g_tilde(&self) -> DMatrix<f64> {
        let (mz, nz, nt) = (self.m_z(), self.n_z(), self.layout.dim());
        let mut gt = DMatrix::zeros(mz, nz + nt);
        gt.columns_mut(0, nz).copy_from(&self.g);
        gt.columns_mut(nz, nt).copy_from(&self.w);
        gt
    }

    pub fn validate(&self) -> Result<()> {
        let (nz, mz) = (self.n_z(), self.m_z());
        check_len("d2", nz, self.d2.len())?;
        check_len("G cols", nz, self.g.ncols())?;
        check_len("W rows", mz, self.w.nrows())?;
        check_len("W cols", self.layout.dim(), self.w.ncols())?;
        if self.k_drs == 0 {
            return Err(Error::Precondition("K_drs must be at least 1".into()));
        }
        let finite = self.d1.iter().chain(self.d2.iter()).chain(self.g.iter()).chain(self.w.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::Precondition("parameters contain non-finite values".into()));
        }
        Ok(())
    }

    /// `θ ← θ + step · grad`
    pub fn axpy(&mut self, step: f64, grad: &ParamGradients) {
        self.d1.axpy(step, &grad.d1, 1.0);
        self.d2.axpy(step, &grad.d2, 1.0);
        self.g += &grad.g * step;
        self.w += &grad.w * step;
    }

    /// Flattened views in the fixed order `(d1, d2, G, W)`.
    pub fn blocks_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.d1.as_mut_slice(),
            self.d2.as_mut_slice(),
            self.g.as_mut_slice(),
            self.w.as_mut_slice(),
        ]
    }

    /// Persist as a versioned binary model file (`.redpc`).
    pub fn save<W: Write>(&self, w: W) -> Result<()> {
        let header = serde_json::json!({
            "format": "redpc-scoring-model",
            "layout": self.layout,
            "n_z": self.n_z(),
            "m_z": self.m_z(),
            "k_drs": self.k_drs,
            "provenance": self.provenance,
            "arrays": ["d1", "d2", "G (column-major)", "W (column-major)"],
        });
        container::write(
            w,
            container::MODEL_MAGIC,
            &header,
            &[
                self.d1.as_slice(),
                self.d2.as_slice(),
                self.g.as_slice(),
                self.w.as_slice(),
            ],
        )
    }

    pub fn load<R: Read>(r: R) -> Result<Self> {
        let (header, arrays) = container::read(r, container::MODEL_MAGIC)?;
        let bad = |d: &str| Error::format("model header", d.to_string());
        let layout: Layout = serde_json::from_value(header["layout"].clone()).map_err(|e| bad(&e.to_string()))?;
        let provenance: Provenance =
            serde_json::from_value(header["provenance"].clone()).map_err(|e| bad(&e.to_string()))?;
        let get = |k: &str| header[k].as_u64().map(|v| v as usize).ok_or_else(|| bad(k));
        let (nz, mz, k_drs) = (get("n_z")?, get("m_z")?, get("k_drs")?);
        let [d1, d2, g, w]: [Vec<f64>; 4] = arrays
            .try_into()
            .map_err(|_| Error::format("model file", "expected four arrays"))?;
        check_len("model d1", nz, d1.len())?;
        check_len("model d2", nz, d2.len())?;
        check_len("model G", mz * nz, g.len())?;
        check_len("model W", mz * layout.dim(), w.len())?;
        let params = Self {
            layout,
            d1: DVector::from_vec(d1),
            d2: DVector::from_vec(d2),
            g: DMatrix::from_vec(mz, nz, g),
            w: DMatrix::from_vec(mz, layout.dim(), w),
            k_drs,
            provenance,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn save_path(&self, path: &std::path::Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        let f = std::fs::File::create(path)?;
        self.save(std::io::BufWriter::new(f))
    }

    pub fn load_path(path: &std::path::Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::load(std::io::BufReader::new(f))
    }
}

/// Source data for [`InitMode::Embedding`].
pub struct InitSource<'a> {
    pub data: &'a DataMatrix,
    pub reg: &'a RegularizationWeights,
}

pub fn init_params(
    n_z: usize,
    m_z: usize,
    layout: Layout,
    k_drs: usize,
    mode: InitMode,
    seed: u64,
    source: Option<InitSource<'_>>,
) -> Result<ScoringModelParams> {
    if n_z == 0 || m_z == 0 {
        return Err(Error::Precondition("n_z and m_z must be positive".into()));
    }
    let nt = layout.dim();
    let params = match mode {
        InitMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let normal = Normal::new(0.0, (1.0 / m_z as f64).sqrt()).expect("valid std");
            let mut abs_std = || StandardNormal.sample(&mut rng);
            let d1 = DVector::from_fn(n_z, |_, _| f64::abs(abs_std()));
            let d2 = DVector::from_fn(n_z, |_, _| f64::abs(abs_std()));
            let g = DMatrix::from_fn(m_z, n_z, |_, _| normal.sample(&mut rng));
            let w = DMatrix::from_fn(m_z, nt, |_, _| normal.sample(&mut rng));
            ScoringModelParams {
                layout,
                d1,
                d2,
                g,
                w,
                k_drs,
                provenance: Provenance {
                    init: mode,
                    seed,
                    regularization: None,
                    data_columns: None,
                },
            }
        }
        InitMode::Embedding => {
            let src = source.ok_or_else(|| {
                Error::Precondition("embedding initialization needs a data matrix and weights".into())
            })?;
            if src.data.layout != layout {
                return Err(Error::Precondition("data layout does not match the model layout".into()));
            }
            let mcols = src.data.cols();
            let ns = layout.p * layout.t_ini;
            if n_z < mcols + ns || m_z < nt {
                return Err(Error::Precondition(format!(
                    "embedding needs n_z ≥ {} and m_z ≥ {nt}, got n_z = {n_z}, m_z = {m_z}",
                    mcols + ns
                )));
            }
            let reg = src.reg;
            let mut d1 = DVector::zeros(n_z);
            let mut d2 = DVector::zeros(n_z);
            for i in 0..mcols {
                d1[i] = reg.lambda_g1;
                d2[i] = reg.lambda_g2.sqrt();
            }
            for i in mcols..mcols + ns {
                d1[i] = reg.lambda_y1;
                d2[i] = reg.lambda_y2.sqrt();
            }
            let mut g = DMatrix::zeros(m_z, n_z);
            g.view_mut((0, 0), (nt, mcols)).copy_from(&src.data.h);
            let yr = layout.y_ini();
            for i in 0..ns {
                g[(yr.start + i, mcols + i)] = -1.0;
            }
            let mut w = DMatrix::zeros(m_z, nt);
            for i in 0..nt {
                w[(i, i)] = -1.0;
            }
            ScoringModelParams {
                layout,
                d1,
                d2,
                g,
                w,
                k_drs,
                provenance: Provenance {
                    init: mode,
                    seed,
                    regularization: Some(*reg),
                    data_columns: Some(mcols),
                },
            }
        }
    };
    params.validate()?;
    Ok(params)
}
