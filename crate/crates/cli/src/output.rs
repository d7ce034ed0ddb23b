//! CSV and JSON result files with an embedded run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use pilot_kalman_core::{ExperimentConfig, Method, MetricSeries};
use serde::Serialize;

pub const CSV_HEADER: &str = "k,nmse,empirical_nmse,received_snr_db,rate_bits,ber";

/// dB floor for a vanishing received SNR (no channel knowledge yet), keeping
/// every emitted value finite.
pub const SNR_DB_FLOOR: f64 = -300.0;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything needed to reproduce a result file.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub artifact: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub method: String,
    pub config: ExperimentConfig,
    /// RFC 3339 creation time; JSON only, so CSV output stays byte-stable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(cfg: &ExperimentConfig, method: Method) -> Self {
        Self {
            artifact: "pilot-kalman",
            version: VERSION,
            seed: cfg.seed,
            method: method.to_string(),
            config: cfg.clone(),
            timestamp: None,
            outputs: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub method: String,
    pub steady_state_nmse: f64,
    pub mean_rate: f64,
    pub mean_ber: Option<f64>,
    pub runs: usize,
    pub fallback_beams: usize,
    pub guessed_symbols: usize,
    pub manifest: RunManifest,
}

fn snr_db(x: f64) -> f64 {
    if x > 0.0 {
        (10.0 * x.log10()).max(SNR_DB_FLOOR)
    } else {
        SNR_DB_FLOOR
    }
}

fn finite(name: &str, k: usize, v: f64) -> anyhow::Result<f64> {
    if !v.is_finite() {
        bail!("non-finite {name} at k = {k}");
    }
    Ok(v)
}

/// CSV text: manifest comment lines, the header, one row per symbol index.
pub fn render_csv(series: &MetricSeries, manifest: &RunManifest) -> anyhow::Result<String> {
    let mut out = String::new();
    writeln!(out, "# {} {} method={} seed={}", manifest.artifact, manifest.version, manifest.method, manifest.seed)?;
    writeln!(out, "# config {}", serde_json::to_string(&manifest.config)?)?;
    writeln!(out, "{CSV_HEADER}")?;
    for k in 0..series.len() {
        let kk = k + 1;
        let nmse = finite("nmse", kk, series.nmse[k])?;
        let emp = finite("empirical_nmse", kk, series.empirical_nmse[k])?;
        let snr = finite("received_snr_db", kk, snr_db(series.received_snr[k]))?;
        let rate = finite("rate_bits", kk, series.rate_bits[k])?;
        let ber = match series.ber[k] {
            Some(b) => format!("{}", finite("ber", kk, b)?),
            None => String::new(),
        };
        writeln!(out, "{kk},{nmse:e},{emp:e},{snr:.6},{rate:e},{ber}")?;
    }
    Ok(out)
}

pub fn summarize(series: &MetricSeries, manifest: RunManifest) -> anyhow::Result<Summary> {
    let s = Summary {
        method: manifest.method.clone(),
        steady_state_nmse: finite("steady_state_nmse", series.len(), series.steady_state_nmse())?,
        mean_rate: finite("mean_rate", series.len(), series.mean_rate())?,
        mean_ber: series.mean_ber(),
        runs: series.runs,
        fallback_beams: series.fallback_beams,
        guessed_symbols: series.guessed_symbols,
        manifest,
    };
    Ok(s)
}

/// Output file stem for a method.
pub fn file_stem(method: Method) -> String {
    method.to_string()
}

/// Writes all files or none: every file goes to a `.partial` sibling first and
/// is renamed once all of them were written.
pub struct AtomicBatch {
    staged: Vec<(PathBuf, PathBuf)>,
}

impl AtomicBatch {
    pub fn new() -> Self {
        Self { staged: Vec::new() }
    }

    pub fn stage(&mut self, path: PathBuf, contents: &str) -> anyhow::Result<()> {
        let mut tmp = path.clone().into_os_string();
        tmp.push(".partial");
        let tmp = PathBuf::from(tmp);
        self.staged.push((tmp.clone(), path));
        fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))
    }

    /// Renames staged files into place; on failure removes everything written.
    pub fn commit(mut self) -> anyhow::Result<Vec<PathBuf>> {
        let staged = std::mem::take(&mut self.staged);
        let mut done = Vec::new();
        for (tmp, path) in &staged {
            if let Err(e) = fs::rename(tmp, path) {
                for p in &done {
                    let _ = fs::remove_file(p);
                }
                for (t, _) in &staged {
                    let _ = fs::remove_file(t);
                }
                return Err(e).with_context(|| format!("moving {} into place", path.display()));
            }
            done.push(path.clone());
        }
        Ok(done)
    }
}

impl Default for AtomicBatch {
    fn default() -> Self {
        Self::new()
    }
}

impl Drop for AtomicBatch {
    fn drop(&mut self) {
        for (tmp, _) in &self.staged {
            let _ = fs::remove_file(tmp);
        }
    }
}

/// Paths of the CSV and JSON files for `method` under `dir`.
pub fn output_paths(dir: &Path, method: Method) -> (PathBuf, PathBuf) {
    let stem = file_stem(method);
    (dir.join(format!("{stem}.csv")), dir.join(format!("{stem}.json")))
}
