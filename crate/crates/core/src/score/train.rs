use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::ProxDataset;
use super::params::{ParamGradients, ScoringModelParams};
use super::unroll::{backward_batch, forward_batch, Projector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many epochs without a new best validation loss.
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Seed for the mini-batch order.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 500,
            patience: 50,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of the mini-batch losses seen during the epoch; epoch 0 is a full
    /// evaluation of the initial parameters.
    pub train_loss: f64,
    pub val_loss: f64,
    /// Running minimum of the selection loss.
    pub best_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ScoringModelParams,
    pub curve: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Sum of squared errors of the unrolled prox over `cols`, and optionally
/// the gradient of `scale ×` that sum.
fn batch_loss(
    params: &ScoringModelParams,
    projector: &Arc<Projector>,
    ds: &ProxDataset,
    cols: &[usize],
    grad_scale: Option<f64>,
) -> Result<(f64, Option<ParamGradients>)> {
    let nt = ds.layout.dim();
    let taus = DMatrix::from_fn(nt, cols.len(), |i, j| ds.taus[(i, cols[j])]);
    let tape = forward_batch(params, projector.clone(), &taus, None)?;
    let mut resid = tape.output();
    for (j, &c) in cols.iter().enumerate() {
        for i in 0..nt {
            resid[(i, j)] -= ds.targets[(i, c)];
        }
    }
    let sse = resid.norm_squared();
    let grads = match grad_scale {
        Some(s) => Some(backward_batch(params, &tape, &(resid * (2.0 * s)))?),
        None => None,
    };
    Ok((sse, grads))
}

/// Mean squared prox error over the given columns (mean over samples and
/// coordinates).
pub fn evaluate_loss(params: &ScoringModelParams, ds: &ProxDataset, cols: &[usize], batch: usize) -> Result<f64> {
    if cols.is_empty() {
        return Ok(f64::NAN);
    }
    let projector = Arc::new(Projector::new(params)?);
    let mut sse = 0.0;
    for chunk in cols.chunks(batch.max(1)) {
        sse += batch_loss(params, &projector, ds, chunk, None)?.0;
    }
    Ok(sse / (cols.len() * ds.layout.dim()) as f64)
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    fn new(params: &mut ScoringModelParams) -> Self {
        let sizes: Vec<usize> = params.blocks_mut().iter().map(|b| b.len()).collect();
        Self {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut ScoringModelParams, grads: &mut ParamGradients, cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        let gblocks = [
            grads.d1.as_slice(),
            grads.d2.as_slice(),
            grads.g.as_slice(),
            grads.w.as_slice(),
        ];
        for (((theta, g), m), v) in params.blocks_mut().into_iter().zip(gblocks).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..theta.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                theta[i] -= cfg.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.eps);
            }
        }
    }
}

/// Mini-batch Adam on the mean squared prox error, keeping the parameters
/// with the best validation loss (training loss when there is no validation
/// split).
pub fn train(params0: &ScoringModelParams, ds: &ProxDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_progress(params0, ds, cfg, |_| {})
}

pub fn train_with_progress(
    params0: &ScoringModelParams,
    ds: &ProxDataset,
    cfg: &TrainConfig,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    params0.validate()?;
    if ds.n_train == 0 {
        return Err(Error::Precondition("training split is empty".into()));
    }
    if ds.layout != params0.layout {
        return Err(Error::Precondition("dataset layout does not match the model".into()));
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate >= 0.0) {
        return Err(Error::Precondition("batch size must be positive and the learning rate nonnegative".into()));
    }
    let train_cols: Vec<usize> = (0..ds.n_train).collect();
    let val_cols: Vec<usize> = (ds.n_train..ds.len()).collect();
    let nt = ds.layout.dim() as f64;

    let mut params = params0.clone();
    let mut adam = Adam::new(&mut params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let train0 = evaluate_loss(&params, ds, &train_cols, cfg.batch_size)?;
    let val0 = evaluate_loss(&params, ds, &val_cols, cfg.batch_size)?;
    let select = |tr: f64, va: f64| if val_cols.is_empty() { tr } else { va };
    let mut best = select(train0, val0);
    if !best.is_finite() {
        return Err(Error::Divergence(format!("initial loss is {best}")));
    }
    let mut best_params = params.clone();
    let mut best_epoch = 0;
    let rec0 = EpochRecord {
        epoch: 0,
        train_loss: train0,
        val_loss: val0,
        best_loss: best,
    };
    progress(&rec0);
    let mut curve = vec![rec0];

    let mut order = train_cols.clone();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sse = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let projector = Arc::new(Projector::new(&params)?);
            let scale = 1.0 / (chunk.len() as f64 * nt);
            let (s, grads) = batch_loss(&params, &projector, ds, chunk, Some(scale))?;
            let mut grads = grads.expect("gradient requested");
            if !s.is_finite() || !grads.max_abs().is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite loss or gradient at epoch {epoch}; lower the learning rate"
                )));
            }
            sse += s;
            adam.step(&mut params, &mut grads, cfg);
        }
        let train_loss = sse / (ds.n_train as f64 * nt);
        let val_loss = evaluate_loss(&params, ds, &val_cols, cfg.batch_size)?;
        let sel = select(train_loss, val_loss);
        if !sel.is_finite() {
            return Err(Error::Divergence(format!("loss became {sel} at epoch {epoch}")));
        }
        if sel < best {
            best = sel;
            best_params = params.clone();
            best_epoch = epoch;
        }
        let rec = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            best_loss: best,
        };
        progress(&rec);
        curve.push(rec);
        if epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    Ok(TrainOutcome {
        params: best_params,
        curve,
        best_epoch,
    })
}
