use std::path::Path;
use std::time::Duration;

use anyhow::{Context, Result};
use serde_json::json;

use crate::commands::Outcome;
use crate::config::ExperimentConfig;

/// Writes tables, extra files, `report.json` and `manifest.json` under `dir`.
pub fn write_artifacts(
    dir: &Path,
    cfg: &ExperimentConfig,
    outcome: &Outcome,
    wall: Duration,
    threads: usize,
) -> Result<()> {
    let tables = dir.join("tables");
    std::fs::create_dir_all(&tables).with_context(|| format!("creating {}", tables.display()))?;
    for t in &outcome.tables {
        std::fs::write(tables.join(format!("{}.csv", t.name)), t.to_csv()?)?;
    }
    for (name, text) in &outcome.files {
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, text)?;
    }
    let mut report = outcome.report.clone();
    if let Some(obj) = report.as_object_mut() {
        obj.insert("failures".into(), json!(outcome.failures));
    }
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    let manifest = json!({
        "command": cfg.command.name(),
        "config": cfg,
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "version": env!("CARGO_PKG_VERSION"),
        "wall_time_s": wall.as_secs_f64(),
        "threads": threads,
        "delta_exponent": cfg.delta_exponent(),
    });
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}
