//! Cost against solve-time curves: DeePC over data-matrix widths, the reduced
//! controller over latent sizes.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use redpc::controller::EpisodeLog;
use redpc::score::ScoringModelParams;
use redpc::Result;

use crate::config::BenchConfig;
use crate::metrics::MethodMetrics;
use crate::run::{run_episodes, train_model, training_set, ControllerSpec, Experiment};

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub method: String,
    /// `M` for DeePC, `n_z` for the reduced controller.
    pub param: String,
    pub value: usize,
    pub avg_solve_ms: f64,
    pub avg_cost: f64,
    /// Mean solver iterations per control step.
    pub avg_iters: f64,
    /// `None` when the point ran; otherwise why it was skipped.
    pub skipped: Option<String>,
}

impl CurvePoint {
    fn from_logs(method: &str, param: &str, value: usize, logs: &[EpisodeLog]) -> Self {
        let m = MethodMetrics::from_logs(method, "", logs);
        let iters: Vec<usize> = logs.iter().flat_map(|l| l.records.iter().map(|r| r.iterations)).collect();
        Self {
            method: method.into(),
            param: param.into(),
            value,
            avg_solve_ms: m.avg_solve_ms,
            avg_cost: m.avg_cost,
            avg_iters: iters.iter().sum::<usize>() as f64 / iters.len().max(1) as f64,
            skipped: None,
        }
    }

    fn skipped(method: &str, param: &str, value: usize, why: String) -> Self {
        Self {
            method: method.into(),
            param: param.into(),
            value,
            avg_solve_ms: f64::NAN,
            avg_cost: f64::NAN,
            avg_iters: f64::NAN,
            skipped: Some(why),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Curve {
    pub points: Vec<CurvePoint>,
}

impl Curve {
    pub fn series(&self, method: &str) -> Vec<&CurvePoint> {
        self.points
            .iter()
            .filter(|p| p.method == method && p.skipped.is_none())
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "method,param,value,avg_solve_ms,avg_cost,avg_iters,status")?;
        for p in &self.points {
            let status = match &p.skipped {
                None => "ok".to_string(),
                Some(why) => format!("skipped: {}", why.replace([',', '\n'], ";")),
            };
            writeln!(
                w,
                "{},{},{},{:.4},{},{:.2},{}",
                p.method, p.param, p.value, p.avg_solve_ms, p.avg_cost, p.avg_iters, status
            )?;
        }
        Ok(())
    }
}

/// Run the DeePC width sweep and the reduced-controller size sweep.
///
/// One model is trained per `n_z` on a shared dataset; a training failure
/// skips that point and is recorded in the curve.
pub fn cost_time_sweep(cfg: &BenchConfig, exp: &Experiment, mut progress: impl FnMut(&CurvePoint)) -> Result<Curve> {
    let mut curve = Curve::default();
    for &m in &cfg.sweep.m_grid {
        let point = match exp.data.truncate(m) {
            Ok(data) => match run_episodes(cfg, exp, &ControllerSpec::Deepc(&data)) {
                Ok(logs) => CurvePoint::from_logs("deepc", "M", m, &logs),
                Err(e) => CurvePoint::skipped("deepc", "M", m, e.to_string()),
            },
            Err(e) => CurvePoint::skipped("deepc", "M", m, e.to_string()),
        };
        progress(&point);
        curve.points.push(point);
    }

    let ds = training_set(cfg, exp)?;
    let sizes: Vec<(usize, usize)> = cfg
        .sweep
        .n_z_grid
        .iter()
        .map(|&n| (n, ((n as f64) * cfg.sweep.m_z_ratio).round().max(1.0) as usize))
        .collect();
    let train = |&(n_z, m_z): &(usize, usize)| -> Result<ScoringModelParams> {
        Ok(train_model(cfg, exp, &ds, n_z, m_z, cfg.sweep.epochs, |_| {})?.params)
    };
    let mut models: Vec<Result<ScoringModelParams>> = Vec::with_capacity(sizes.len());
    for chunk in sizes.chunks(cfg.workers.max(1)) {
        let trained: Vec<Result<ScoringModelParams>> = std::thread::scope(|s| {
            let hs: Vec<_> = chunk.iter().map(|sz| s.spawn(|| train(sz))).collect();
            hs.into_iter()
                .map(|h| {
                    h.join()
                        .unwrap_or_else(|_| Err(redpc::Error::Precondition("training thread panicked".into())))
                })
                .collect()
        });
        models.extend(trained);
    }
    for (&(n_z, _), model) in sizes.iter().zip(models) {
        let point = match model.and_then(|p| run_episodes(cfg, exp, &ControllerSpec::Approx(&p))) {
            Ok(logs) => CurvePoint::from_logs("approx", "n_z", n_z, &logs),
            Err(e) => CurvePoint::skipped("approx", "n_z", n_z, e.to_string()),
        };
        progress(&point);
        curve.points.push(point);
    }
    Ok(curve)
}

/// Scatter-and-line plot of cost against mean solve time, one series per
/// method, as a standalone SVG document.
pub fn render_svg(curve: &Curve) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const PAD: f64 = 60.0;
    let pts: Vec<&CurvePoint> = curve.points.iter().filter(|p| p.skipped.is_none()).collect();
    let range = |f: fn(&CurvePoint) -> f64| {
        let (lo, hi) = pts
            .iter()
            .map(|p| f(p))
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            let m = 0.05 * (hi - lo);
            (lo - m, hi + m)
        }
    };
    let (x0, x1) = range(|p| p.avg_solve_ms);
    let (y0, y1) = range(|p| p.avg_cost);
    let sx = |v: f64| PAD + (v - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |v: f64| H - PAD - (v - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{PAD} {t} V{b} H{r}" fill="none" stroke="black"/>"#,
        t = PAD,
        b = H - PAD,
        r = W - PAD
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.3}</text>"#,
            sx(xv),
            H - PAD + 18.0,
            xv
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.1}</text>"#,
            PAD - 6.0,
            sy(yv) + 4.0,
            yv
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">average solve time per step [ms]</text>"#,
        W / 2.0,
        H - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.1}" text-anchor="middle" transform="rotate(-90 15 {:.1})">average accumulated cost</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (k, (method, color)) in [("deepc", "#1f77b4"), ("approx", "#d62728")].iter().enumerate() {
        let series = curve.series(method);
        if series.is_empty() {
            continue;
        }
        let path: Vec<String> = series
            .iter()
            .map(|p| format!("{:.1},{:.1}", sx(p.avg_solve_ms), sy(p.avg_cost)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            path.join(" ")
        );
        for p in &series {
            let (cx, cy) = (sx(p.avg_solve_ms), sy(p.avg_cost));
            let _ = writeln!(s, r#"<circle cx="{cx:.1}" cy="{cy:.1}" r="3.5" fill="{color}"/>"#);
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" fill="{color}">{}={}</text>"#,
                cx + 5.0,
                cy - 5.0,
                p.param,
                p.value
            );
        }
        let ly = PAD + 18.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{ly:.1}" fill="{color}">{method}</text>"#,
            W - PAD - 60.0
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_sweep(out: &Path, curve: &Curve, svg: bool) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(out.join("curve.csv"))?);
    curve.write_csv(&mut f)?;
    f.flush()?;
    if svg {
        std::fs::write(out.join("curve.svg"), render_svg(curve))?;
    }
    Ok(())
}
