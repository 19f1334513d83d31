//! Plot-ready CSV, provenance sidecar and slope fitting.

use std::path::Path;

use serde_json::json;

use super::run::ReplicationReport;
use super::HarnessError;
use crate::dynamics::least_squares;

pub const CSV_HEADER: &str = "scenario,estimator,N,T,ell,r,b,n_instances,n_draws,gate,mse,bias,bias_ci95,variance,retained_frac,dropped_draws,seed";

/// Ten significant digits.
fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.9e}")
    }
}

fn opt(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn results_csv(report: &ReplicationReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &report.rows {
        let cells = [
            field(&r.scenario),
            field(&r.estimator),
            r.n_units.to_string(),
            r.horizon.to_string(),
            r.ell.to_string(),
            opt(r.r),
            opt(r.b),
            r.n_instances.to_string(),
            r.n_draws.to_string(),
            num(r.gate),
            num(r.mse),
            num(r.bias),
            num(r.bias_ci95),
            num(r.variance),
            num(r.retained_frac),
            r.dropped_draws.to_string(),
            r.seed.to_string(),
        ];
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn sidecar_json(report: &ReplicationReport) -> String {
    let doc = json!({
        "generator": concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")),
        "configs": report.configs,
        "rows": report.rows,
    });
    serde_json::to_string_pretty(&doc).expect("report serializes") + "\n"
}

/// Writes the CSV to `path` and the full configs and rows next to it with a
/// `.json` extension.
pub fn emit_results(report: &ReplicationReport, path: &Path) -> Result<(), HarnessError> {
    let write = |p: &Path, text: String| {
        std::fs::write(p, text).map_err(|source| HarnessError::Io {
            path: p.to_path_buf(),
            source,
        })
    };
    write(path, results_csv(report))?;
    write(&path.with_extension("json"), sidecar_json(report))
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64, HarnessError> {
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0) || !x.is_finite() || !y.is_finite()) {
        return Err(HarnessError::Fit("all coordinates must be positive and finite".into()));
    }
    let first = points.first().map(|p| p.0);
    if points.len() < 2 || points.iter().all(|p| Some(p.0) == first) {
        return Err(HarnessError::Fit("need at least two distinct x values".into()));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    Ok(least_squares(&logs).0)
}
