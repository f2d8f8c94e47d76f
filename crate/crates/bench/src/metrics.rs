use std::io::{BufRead, Write};

use redpc::controller::EpisodeLog;
use redpc::{Error, Result};

/// Averages for one controller over its episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodMetrics {
    pub method: String,
    /// What the controller was built from: `data`, `model`, `trained` or
    /// `embedding` (fallback parameters for the reduced controller).
    pub source: String,
    pub episodes: usize,
    pub failed: usize,
    /// Mean over episodes of `Σ_t ‖y(t) − r‖²_Q + ‖u(t)‖²_R`.
    pub avg_cost: f64,
    /// Mean solver wall time per control step, pooled over all episodes.
    pub avg_solve_ms: f64,
    pub worst_solve_ms: f64,
}

impl MethodMetrics {
    pub fn from_logs(method: &str, source: &str, logs: &[EpisodeLog]) -> Self {
        let steps: Vec<f64> = logs.iter().flat_map(|l| l.records.iter().map(|r| r.solve_ms)).collect();
        let avg = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
        let costs: Vec<f64> = logs.iter().map(|l| l.accumulated_cost()).collect();
        Self {
            method: method.to_string(),
            source: source.to_string(),
            episodes: logs.len(),
            failed: logs.iter().filter(|l| l.failed()).count(),
            avg_cost: avg(&costs),
            avg_solve_ms: avg(&steps),
            worst_solve_ms: steps.iter().copied().fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsTable {
    pub rows: Vec<MethodMetrics>,
}

const HEADER: &str = "method,source,episodes,failed,avg_cost,avg_solve_ms,worst_solve_ms";

impl MetricsTable {
    pub fn row(&self, method: &str) -> Option<&MethodMetrics> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{:.4},{:.4}",
                r.method, r.source, r.episodes, r.failed, r.avg_cost, r.avg_solve_ms, r.worst_solve_ms
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let bad = |d: String| Error::Format { what: "metrics CSV", detail: d };
        let mut lines = r.lines();
        let header = lines.next().transpose()?;
        if header.as_deref() != Some(HEADER) {
            return Err(bad("missing header".into()));
        }
        let mut rows = Vec::new();
        for line in lines {
            let line = line?;
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad(format!("expected 7 fields in {line:?}")));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(e.to_string()));
            let int = |s: &str| s.parse::<usize>().map_err(|e| bad(e.to_string()));
            rows.push(MethodMetrics {
                method: f[0].to_string(),
                source: f[1].to_string(),
                episodes: int(f[2])?,
                failed: int(f[3])?,
                avg_cost: num(f[4])?,
                avg_solve_ms: num(f[5])?,
                worst_solve_ms: num(f[6])?,
            });
        }
        Ok(Self { rows })
    }

    /// Fixed-width text rendering for terminals.
    pub fn render(&self) -> String {
        let mut s = format!(
            "{:<8} {:>14} {:>14} {:>15}\n",
            "method", "avg cost", "avg solve ms", "worst solve ms"
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{:<8} {:>14.2} {:>14.3} {:>15.3}{}\n",
                if r.source == "embedding" { format!("{}*", r.method) } else { r.method.clone() },
                r.avg_cost,
                r.avg_solve_ms,
                r.worst_solve_ms,
                if r.failed > 0 { format!("  ({} failed)", r.failed) } else { String::new() }
            ));
        }
        s
    }
}
