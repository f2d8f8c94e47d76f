use std::fs;
use std::path::Path;

use redpc::controller::WarmupPolicy;
use redpc_bench::config::{model_path, BenchConfig, OUT_DIR_ENV};
use redpc_bench::run::{
    episode_path, load_model, run_benchmark, save_model, train_model, training_set, Experiment, ModelSource,
};
use redpc_bench::sweep::{cost_time_sweep, write_sweep};
use redpc_bench::MetricsTable;

fn small() -> BenchConfig {
    let mut cfg = BenchConfig {
        seeds: vec![1, 2],
        t_sim: 15,
        t_data: 160,
        ..BenchConfig::default()
    };
    cfg.cost.t_ini = 4;
    cfg.cost.horizon = 8;
    cfg.model.n_z = 16;
    cfg.model.m_z = 8;
    cfg.model.k_drs = 5;
    cfg.dataset.n_samples = 40;
    cfg.training.epochs = 2;
    cfg.sweep.m_grid = vec![60, 120];
    cfg.sweep.n_z_grid = vec![8];
    cfg.sweep.epochs = 1;
    cfg
}

#[test]
fn default_config_round_trips_through_toml() {
    let cfg = BenchConfig::default();
    assert_eq!(BenchConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    assert_eq!(BenchConfig::from_toml("").unwrap(), cfg);
    assert_eq!(BenchConfig::load("default").unwrap(), cfg);
    let partial = BenchConfig::from_toml("t_sim = 7\n[plant]\nsigma_v = 0.0\n").unwrap();
    assert_eq!((partial.t_sim, partial.plant.sigma_v, partial.plant.sigma_w), (7, 0.0, 0.01));
}

#[test]
fn unknown_or_invalid_fields_are_rejected() {
    assert!(BenchConfig::from_toml("t_simm = 3").is_err());
    assert!(BenchConfig::from_toml("[cost]\nhorizn = 3").is_err());
    assert!(BenchConfig::from_toml("[training]\nepoch = 3").is_err());
    assert!(BenchConfig::from_toml("[solver.online]\ntolerance = 1e-3").is_err());
    let reg = BenchConfig::from_toml("[regularization]\nlambda_g1 = 2.0").unwrap().regularization;
    assert_eq!((reg.lambda_g1, reg.lambda_y2), (2.0, 1e5));
    let mut cfg = BenchConfig::default();
    cfg.seeds.clear();
    assert!(cfg.validate().is_err());
    assert!(BenchConfig::load("/nonexistent/config.toml").is_err());
}

#[test]
fn output_dir_precedence() {
    let mut cfg = BenchConfig {
        output_dir: Some("explicit".into()),
        ..BenchConfig::default()
    };
    assert_eq!(cfg.output_dir(), Path::new("explicit"));
    cfg.output_dir = None;
    // Only this test touches the variable.
    std::env::set_var(OUT_DIR_ENV, "from-env");
    assert_eq!(cfg.output_dir(), Path::new("from-env"));
    std::env::remove_var(OUT_DIR_ENV);
    assert_eq!(cfg.output_dir(), Path::new("out"));
}

fn episode_sums(path: &Path) -> (f64, Vec<f64>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header, ["t", "u1", "u2", "y1", "y2", "stage_cost", "solve_ms", "iters"]);
    let mut cost = 0.0;
    let mut times = Vec::new();
    for line in lines {
        let f: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        cost += f[5];
        times.push(f[6]);
    }
    (cost, times)
}

#[test]
fn metrics_agree_with_episode_logs_and_rerun() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let out = run_benchmark(&cfg, dir.path()).unwrap();
    assert_eq!(out.model_source, ModelSource::EmbeddingFallback);
    let table = MetricsTable::read_csv(fs::read(dir.path().join("metrics.csv")).unwrap().as_slice()).unwrap();
    let methods: Vec<&str> = table.rows.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(methods, ["deepc", "approx", "mpc"]);
    assert_eq!(table.row("approx").unwrap().source, "embedding");
    for row in &table.rows {
        let mut costs = Vec::new();
        let mut times = Vec::new();
        for &seed in &cfg.seeds {
            let (c, t) = episode_sums(&episode_path(dir.path(), &row.method, seed));
            assert_eq!(t.len(), cfg.t_sim);
            costs.push(c);
            times.extend(t);
        }
        let avg_cost = costs.iter().sum::<f64>() / costs.len() as f64;
        let avg_ms = times.iter().sum::<f64>() / times.len() as f64;
        assert_eq!(row.episodes, 2);
        assert!((avg_cost - row.avg_cost).abs() <= 1e-9 * avg_cost.abs().max(1.0), "{}", row.method);
        assert!((avg_ms - row.avg_solve_ms).abs() <= 2e-4, "{}", row.method);
    }
    let again = run_benchmark(&cfg, dir.path()).unwrap();
    for (a, b) in out.table.rows.iter().zip(&again.table.rows) {
        assert_eq!((&a.method, a.avg_cost, a.failed), (&b.method, b.avg_cost, b.failed));
    }
}

#[test]
fn quiet_plant_at_rest_costs_nothing() {
    let mut cfg = small();
    cfg.plant.sigma_w = 0.0;
    cfg.plant.sigma_v = 0.0;
    cfg.cost.reference = vec![0.0, 0.0];
    cfg.warmup = WarmupPolicy::Zero;
    let dir = tempfile::tempdir().unwrap();
    let out = run_benchmark(&cfg, dir.path()).unwrap();
    for row in &out.table.rows {
        assert!(row.avg_cost <= 1e-8, "{}: {}", row.method, row.avg_cost);
    }
}

#[test]
fn missing_model_without_fallback_names_the_train_command() {
    let mut cfg = small();
    cfg.model.allow_fallback = false;
    let dir = tempfile::tempdir().unwrap();
    let exp = Experiment::prepare(&cfg).unwrap();
    let err = load_model(&cfg, &exp, dir.path()).unwrap_err().to_string();
    assert!(err.contains("redpc train"), "{err}");
}

#[test]
fn trained_model_is_picked_up() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let exp = Experiment::prepare(&cfg).unwrap();
    let ds = training_set(&cfg, &exp).unwrap();
    let outcome = train_model(&cfg, &exp, &ds, cfg.model.n_z, cfg.model.m_z, cfg.training.epochs, |_| {}).unwrap();
    save_model(&model_path(dir.path(), &cfg.model.name), &outcome.params).unwrap();
    let (params, source) = load_model(&cfg, &exp, dir.path()).unwrap();
    assert_eq!(source, ModelSource::File);
    assert_eq!(params, outcome.params);
    let out = run_benchmark(&cfg, dir.path()).unwrap();
    assert_eq!(out.table.row("approx").unwrap().source, "trained");
}

#[test]
fn sweep_writes_one_point_per_grid_entry() {
    let mut cfg = small();
    cfg.seeds = vec![1];
    let exp = Experiment::prepare(&cfg).unwrap();
    let curve = cost_time_sweep(&cfg, &exp, |_| {}).unwrap();
    assert_eq!(curve.series("deepc").len(), 2);
    assert_eq!(curve.series("approx").len(), 1);
    let dir = tempfile::tempdir().unwrap();
    write_sweep(dir.path(), &curve, true).unwrap();
    let csv = fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    assert!(csv.starts_with("method,param,value,avg_solve_ms,avg_cost,avg_iters,status\n"));
    assert_eq!(csv.lines().count(), 4);
    let svg = fs::read_to_string(dir.path().join("curve.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}
