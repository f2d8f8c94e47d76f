use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use redpc_bench::config::BenchConfig;
use redpc_bench::run::{self, Experiment, Method};
use redpc_bench::sweep;

#[derive(Parser)]
#[command(name = "redpc", version, about = "DeePC, learned approximate DeePC and MPC on the quadruple tank")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the excitation experiment and write the I/O log and data matrix.
    CollectData(Common),
    /// Train the scoring model and write models/<name>.redpc.
    Train(Common),
    /// Closed-loop episodes with DeePC.
    RunDeepc(Common),
    /// Closed-loop episodes with the learned reduced controller.
    RunApprox(Common),
    /// Closed-loop episodes with model-based MPC.
    RunMpc(Common),
    /// All three controllers; writes metrics.csv.
    Bench(Common),
    /// Cost against solve-time sweep; writes curve.csv and curve.svg.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config file, or `default`.
    #[arg(long, value_name = "PATH", default_value = "default")]
    config: String,
    /// Overrides the data seed (collect-data), the model seed (train) or
    /// runs a single episode seed (run-*, bench, sweep).
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory; overrides the config and $REDPC_OUT_DIR.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> redpc::Result<(BenchConfig, PathBuf)> {
        let cfg = BenchConfig::load(&self.config)?;
        let out = self.out.clone().unwrap_or_else(|| cfg.output_dir());
        Ok((cfg, out))
    }
}

fn with_episode_seed(mut cfg: BenchConfig, seed: Option<u64>) -> BenchConfig {
    if let Some(s) = seed {
        cfg.seeds = vec![s];
    }
    cfg
}

fn fallback_note(config: &str, cfg: &BenchConfig, out: &std::path::Path) {
    eprintln!(
        "warning: {} not found; the approx controller used embedding parameters. \
         Train a model with `redpc train --config {config} --out {}`",
        cfg.model_path(out).display(),
        out.display()
    );
}

fn run_one(common: &Common, method: Method) -> redpc::Result<()> {
    let (cfg, out) = common.load()?;
    let cfg = with_episode_seed(cfg, common.seed);
    let row = run::run_method(&cfg, &out, method)?;
    if row.source == "embedding" {
        fallback_note(&common.config, &cfg, &out);
    }
    println!(
        "{}: avg cost {:.2}, avg solve {:.3} ms, worst {:.3} ms over {} episodes ({} failed)",
        row.method, row.avg_cost, row.avg_solve_ms, row.worst_solve_ms, row.episodes, row.failed
    );
    println!("wrote {}", out.join(format!("metrics_{}.csv", method.name())).display());
    Ok(())
}

fn execute(cli: Cli) -> redpc::Result<()> {
    match cli.command {
        Command::CollectData(c) => {
            let (mut cfg, out) = c.load()?;
            if let Some(s) = c.seed {
                cfg.data_seed = s;
            }
            let exp = Experiment::prepare(&cfg)?;
            let (log, h) = run::write_data(&out, &exp)?;
            println!("wrote {} ({} samples)", log.display(), exp.log.len());
            println!("wrote {} ({} columns)", h.display(), exp.data.cols());
        }
        Command::Train(c) => {
            let (mut cfg, out) = c.load()?;
            if let Some(s) = c.seed {
                cfg.model.seed = s;
            }
            let exp = Experiment::prepare(&cfg)?;
            let ds = run::training_set(&cfg, &exp)?;
            eprintln!(
                "dataset: {} samples ({} validation), n_z={} m_z={} K_drs={}",
                ds.len(),
                ds.n_validation(),
                cfg.model.n_z,
                cfg.model.m_z,
                cfg.model.k_drs
            );
            let outcome = run::train_model(
                &cfg,
                &exp,
                &ds,
                cfg.model.n_z,
                cfg.model.m_z,
                cfg.training.epochs,
                |r| {
                    if r.epoch % 10 == 0 {
                        eprintln!("epoch {:4}  train {:.6e}  val {:.6e}", r.epoch, r.train_loss, r.val_loss);
                    }
                },
            )?;
            let path = cfg.model_path(&out);
            run::save_model(&path, &outcome.params)?;
            let curve = path.with_file_name(format!("{}_training.csv", cfg.model.name));
            run::write_training_curve(&curve, &outcome.curve)?;
            println!("best epoch {}; wrote {}", outcome.best_epoch, path.display());
        }
        Command::RunDeepc(c) => run_one(&c, Method::Deepc)?,
        Command::RunApprox(c) => run_one(&c, Method::Approx)?,
        Command::RunMpc(c) => run_one(&c, Method::Mpc)?,
        Command::Bench(c) => {
            let (cfg, out) = c.load()?;
            let cfg = with_episode_seed(cfg, c.seed);
            let res = run::run_benchmark(&cfg, &out)?;
            print!("{}", res.table.render());
            if res.model_source == run::ModelSource::EmbeddingFallback {
                println!("* embedding parameters (no trained model)");
                fallback_note(&c.config, &cfg, &out);
            }
            println!("wrote {}", out.join("metrics.csv").display());
        }
        Command::Sweep(c) => {
            let (cfg, out) = c.load()?;
            let cfg = with_episode_seed(cfg, c.seed);
            let exp = Experiment::prepare(&cfg)?;
            let curve = sweep::cost_time_sweep(&cfg, &exp, |p| match &p.skipped {
                None => eprintln!(
                    "{} {}={}: cost {:.2}, solve {:.3} ms, {:.1} iterations",
                    p.method, p.param, p.value, p.avg_cost, p.avg_solve_ms, p.avg_iters
                ),
                Some(why) => eprintln!("{} {}={}: skipped ({why})", p.method, p.param, p.value),
            })?;
            sweep::write_sweep(&out, &curve, true)?;
            println!("wrote {}", out.join("curve.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
