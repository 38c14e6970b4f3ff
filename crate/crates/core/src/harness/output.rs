//! Per-run output directories: configuration, CSV, metrics and plots.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

use super::config::ScenarioConfig;
use super::csv::emit_csv;
use super::metrics::{metrics, Metrics};
use super::plot::{emit_overlays, emit_plots};
use super::record::RunRecord;

pub const OUT_DIR_ENV: &str = "MAGLEV_OUT_DIR";

/// Output root from the environment, falling back to `./out`.
pub fn default_out_root() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("output types serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Scenario names become directory names; anything unusual is replaced.
pub fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

/// Writes `config.json`, `record.csv`, `metrics.json` and optionally `plots/`.
pub fn write_run(cfg: &ScenarioConfig, rec: &RunRecord, dir: &Path, plots: bool) -> Result<Metrics> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join("config.json"), cfg)?;
    emit_csv(rec, &dir.join("record.csv"))?;
    let m = metrics(rec);
    write_json(&dir.join("metrics.json"), &m)?;
    if plots {
        emit_plots(rec, &dir.join("plots"))?;
    }
    Ok(m)
}

/// Overlay plots for every group of same-system runs in a sweep.
pub fn write_overlays(records: &[RunRecord], dir: &Path) -> Result<()> {
    if records.len() < 2 {
        return Ok(());
    }
    let refs: Vec<&RunRecord> = records.iter().collect();
    if refs.iter().all(|r| r.system == refs[0].system) {
        emit_overlays(&refs, &dir.join("overlay"))?;
    }
    Ok(())
}
