//! Experiment pipelines shared by the CLI commands.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use redpc::approx::ApproxController;
use redpc::controller::{run_receding_horizon, Controller, EpisodeLog};
use redpc::deepc::{ControlCostSpec, DeepcController, RegularizationWeights};
use redpc::mpc::MpcController;
use redpc::plant::{collect_data, hankel, DataMatrix, IoLog, LtiSystem};
use redpc::score::{
    build_dataset, init_params, train_with_progress, EpochRecord, InitMode, InitSource, ProxDataset,
    ScoringModelParams, TrainOutcome,
};
use redpc::solver::SolverSettings;
use redpc::{Error, Result};

use crate::config::BenchConfig;
use crate::metrics::{MethodMetrics, MetricsTable};

/// Plant, cost and the data matrix from the excitation experiment.
pub struct Experiment {
    pub sys: LtiSystem,
    pub cost: ControlCostSpec,
    pub reg: RegularizationWeights,
    pub log: IoLog,
    pub data: DataMatrix,
}

impl Experiment {
    pub fn prepare(cfg: &BenchConfig) -> Result<Self> {
        cfg.validate()?;
        let sys = cfg.plant.build()?;
        let cost = cfg.cost.build()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.data_seed);
        let log = collect_data(&sys, cfg.t_data, &cost.input_box, &mut rng)?;
        let data = hankel(&log, cost.t_ini, cost.horizon)?;
        Ok(Self {
            sys,
            cost,
            reg: cfg.regularization,
            log,
            data,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Deepc,
    Approx,
    Mpc,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Deepc, Method::Approx, Method::Mpc];

    pub fn name(self) -> &'static str {
        match self {
            Method::Deepc => "deepc",
            Method::Approx => "approx",
            Method::Mpc => "mpc",
        }
    }
}

/// Everything needed to build a controller for one method.
pub enum ControllerSpec<'a> {
    Deepc(&'a DataMatrix),
    Approx(&'a ScoringModelParams),
    Mpc,
}

impl ControllerSpec<'_> {
    fn build(&self, exp: &Experiment, settings: SolverSettings) -> Result<Box<dyn Controller>> {
        Ok(match self {
            ControllerSpec::Deepc(data) => Box::new(DeepcController::new(data, &exp.cost, &exp.reg, settings)?),
            ControllerSpec::Approx(params) => Box::new(ApproxController::new(params, &exp.cost, settings)?),
            ControllerSpec::Mpc => Box::new(MpcController::new(&exp.sys, &exp.cost, settings)?),
        })
    }
}

/// One episode per seed, `workers` at a time; results are in seed order.
pub fn run_episodes(cfg: &BenchConfig, exp: &Experiment, spec: &ControllerSpec<'_>) -> Result<Vec<EpisodeLog>> {
    let settings = cfg.solver.online;
    let run = |seed: u64| -> Result<EpisodeLog> {
        let mut ctl = spec.build(exp, settings)?;
        run_receding_horizon(ctl.as_mut(), &exp.sys, &exp.cost, cfg.t_sim, cfg.warmup, seed)
    };
    if cfg.workers <= 1 {
        return cfg.seeds.iter().map(|&s| run(s)).collect();
    }
    let mut out: Vec<Option<Result<EpisodeLog>>> = (0..cfg.seeds.len()).map(|_| None).collect();
    for chunk in cfg.seeds.iter().enumerate().collect::<Vec<_>>().chunks(cfg.workers) {
        let results: Vec<(usize, Result<EpisodeLog>)> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&(i, &seed)| (i, s.spawn(move || run(seed))))
                .collect();
            handles
                .into_iter()
                .map(|(i, h)| (i, h.join().unwrap_or_else(|_| Err(Error::Precondition("episode thread panicked".into())))))
                .collect()
        });
        for (i, r) in results {
            out[i] = Some(r);
        }
    }
    out.into_iter().map(|r| r.expect("every seed ran")).collect()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn episode_path(out: &Path, method: &str, seed: u64) -> PathBuf {
    out.join("episodes").join(format!("{method}_seed{seed}.csv"))
}

pub fn write_episodes(out: &Path, method: &str, logs: &[EpisodeLog]) -> Result<()> {
    for log in logs {
        let mut w = create(&episode_path(out, method, log.seed))?;
        log.write_csv(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

pub fn write_metrics(path: &Path, table: &MetricsTable) -> Result<()> {
    let mut w = create(path)?;
    table.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Write `iolog.csv` and the data-matrix container `hankel.redpcdm` under
/// `<out>/data`.
pub fn write_data(out: &Path, exp: &Experiment) -> Result<(PathBuf, PathBuf)> {
    let log_path = out.join("data").join("iolog.csv");
    let mut w = create(&log_path)?;
    exp.log.write_csv(&mut w)?;
    w.flush()?;
    let h_path = out.join("data").join("hankel.redpcdm");
    let mut w = create(&h_path)?;
    exp.data.save(&mut w)?;
    w.flush()?;
    Ok((log_path, h_path))
}

pub fn training_set(cfg: &BenchConfig, exp: &Experiment) -> Result<ProxDataset> {
    build_dataset(&exp.data, &exp.reg, &cfg.dataset, cfg.model.seed)
}

/// Initialize and train a model of the given size on `ds`.
pub fn train_model(
    cfg: &BenchConfig,
    exp: &Experiment,
    ds: &ProxDataset,
    n_z: usize,
    m_z: usize,
    epochs: usize,
    progress: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    let source = match cfg.model.init {
        InitMode::Embedding => Some(InitSource {
            data: &exp.data,
            reg: &exp.reg,
        }),
        InitMode::Random => None,
    };
    let params0 = init_params(n_z, m_z, exp.data.layout, cfg.model.k_drs, cfg.model.init, cfg.model.seed, source)?;
    let mut tcfg = cfg.training.clone();
    tcfg.epochs = epochs;
    train_with_progress(&params0, ds, &tcfg, progress)
}

pub fn write_training_curve(path: &Path, curve: &[EpochRecord]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "epoch,train_loss,val_loss,best_loss")?;
    for r in curve {
        writeln!(w, "{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.best_loss)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_model(path: &Path, params: &ScoringModelParams) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    params.save_path(path)
}

/// Where the approx controller's parameters came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelSource {
    File,
    EmbeddingFallback,
}

impl ModelSource {
    pub fn label(self) -> &'static str {
        match self {
            ModelSource::File => "trained",
            ModelSource::EmbeddingFallback => "embedding",
        }
    }
}

/// Load `models/<name>.redpc`, or fall back to embedding parameters when
/// the config allows it.
pub fn load_model(cfg: &BenchConfig, exp: &Experiment, out: &Path) -> Result<(ScoringModelParams, ModelSource)> {
    let path = cfg.model_path(out);
    if path.exists() {
        let params = ScoringModelParams::load_path(&path)?;
        if params.layout != exp.cost.layout() {
            return Err(Error::Precondition(format!(
                "model {} was trained for layout {:?}, config uses {:?}",
                path.display(),
                params.layout,
                exp.cost.layout()
            )));
        }
        return Ok((params, ModelSource::File));
    }
    if cfg.model.allow_fallback {
        let l = exp.data.layout;
        let params = init_params(
            exp.data.cols() + l.p * l.t_ini,
            l.dim(),
            l,
            cfg.model.k_drs,
            InitMode::Embedding,
            cfg.model.seed,
            Some(InitSource {
                data: &exp.data,
                reg: &exp.reg,
            }),
        )?;
        return Ok((params, ModelSource::EmbeddingFallback));
    }
    Err(Error::MissingModel {
        path,
        hint: format!("redpc train --config <this config> --out {}", out.display()),
    })
}

pub struct BenchOutcome {
    pub table: MetricsTable,
    pub logs: Vec<(Method, Vec<EpisodeLog>)>,
    pub model_source: ModelSource,
}

/// Run all three controllers over the configured seeds, writing per-episode
/// logs and `metrics.csv` under `out`.
pub fn run_benchmark(cfg: &BenchConfig, out: &Path) -> Result<BenchOutcome> {
    let exp = Experiment::prepare(cfg)?;
    let (params, model_source) = load_model(cfg, &exp, out)?;
    let mut logs = Vec::new();
    let mut table = MetricsTable::default();
    for method in Method::ALL {
        let (spec, source) = match method {
            Method::Deepc => (ControllerSpec::Deepc(&exp.data), "data"),
            Method::Approx => (ControllerSpec::Approx(&params), model_source.label()),
            Method::Mpc => (ControllerSpec::Mpc, "model"),
        };
        let episodes = run_episodes(cfg, &exp, &spec)?;
        write_episodes(out, method.name(), &episodes)?;
        table.rows.push(MethodMetrics::from_logs(method.name(), source, &episodes));
        logs.push((method, episodes));
    }
    write_metrics(&out.join("metrics.csv"), &table)?;
    Ok(BenchOutcome {
        table,
        logs,
        model_source,
    })
}

/// Run one controller over the configured seeds, writing episode logs and
/// `metrics_<method>.csv`.
pub fn run_method(cfg: &BenchConfig, out: &Path, method: Method) -> Result<MethodMetrics> {
    let exp = Experiment::prepare(cfg)?;
    let (row, episodes) = match method {
        Method::Deepc => {
            let logs = run_episodes(cfg, &exp, &ControllerSpec::Deepc(&exp.data))?;
            (MethodMetrics::from_logs(method.name(), "data", &logs), logs)
        }
        Method::Approx => {
            let (params, source) = load_model(cfg, &exp, out)?;
            let logs = run_episodes(cfg, &exp, &ControllerSpec::Approx(&params))?;
            (MethodMetrics::from_logs(method.name(), source.label(), &logs), logs)
        }
        Method::Mpc => {
            let logs = run_episodes(cfg, &exp, &ControllerSpec::Mpc)?;
            (MethodMetrics::from_logs(method.name(), "model", &logs), logs)
        }
    };
    write_episodes(out, method.name(), &episodes)?;
    let table = MetricsTable { rows: vec![row.clone()] };
    write_metrics(&out.join(format!("metrics_{}.csv", method.name())), &table)?;
    Ok(row)
}
