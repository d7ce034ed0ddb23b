//! Command-line front end: configuration loading, experiment dispatch and
//! result files.

pub mod config;
pub mod output;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use pilot_kalman_core::{Experiment, ExperimentConfig, Method, MetricSeries};

pub use config::{load, parse_methods, parse_toml, resolve, FileConfig, Overrides, Preset};
pub use output::{render_csv, summarize, RunManifest, Summary, CSV_HEADER};

/// Result of one method.
pub struct MethodResult {
    pub method: Method,
    pub series: MetricSeries,
    pub csv: String,
    pub summary: Summary,
}

/// Runs every configured method and renders its outputs in memory.
pub fn simulate(cfg: &ExperimentConfig) -> anyhow::Result<Vec<MethodResult>> {
    let exp = Experiment::new(cfg.clone()).map_err(config::field_error)?;
    cfg.methods
        .iter()
        .map(|&method| {
            let series = exp
                .monte_carlo(method, cfg.runs, cfg.seed)
                .map_err(config::field_error)
                .with_context(|| format!("method {method}"))?;
            let manifest = RunManifest::new(cfg, method);
            let csv = render_csv(&series, &manifest)?;
            let summary = summarize(&series, manifest)?;
            Ok(MethodResult { method, series, csv, summary })
        })
        .collect()
}

/// Runs the experiment and writes `<method>.csv` and `<method>.json` under `out`.
/// Either all files are written or none are.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let results = simulate(cfg)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let timestamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    let mut batch = output::AtomicBatch::new();
    for r in results {
        let (csv_path, json_path) = output::output_paths(out, r.method);
        let mut summary = r.summary;
        summary.manifest.timestamp = Some(timestamp.clone());
        summary.manifest.outputs = vec![csv_path.display().to_string(), json_path.display().to_string()];
        batch.stage(csv_path, &r.csv)?;
        batch.stage(json_path, &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    }
    batch.commit()
}
