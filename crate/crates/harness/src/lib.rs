//! Experiment runner: configuration, dataset loading, the eight experiment
//! pipelines and CSV/SVG/manifest output.

pub mod config;
pub mod data;
pub mod experiments;
pub mod svg;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{Alpha, ConfigIssue, ExperimentConfig, ExperimentId, Planetoid, ToyFeatures};
pub use svg::{emit_svg, ChartSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl HarnessError {
    /// Process exit status for the error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Data(_) => 3,
            HarnessError::Runtime(_) => 4,
        }
    }
}

pub fn runtime(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Runtime(e.to_string())
}

/// What an experiment produced, before anything touches the disk.
#[derive(Debug, Default, Clone)]
pub struct Output {
    /// `(file name, contents)` in write order.
    pub csvs: Vec<(String, String)>,
    /// `(svg name, csv name, chart)`.
    pub charts: Vec<(String, String, ChartSpec)>,
    pub inputs: Vec<PathBuf>,
}

impl Output {
    pub fn csv(&self, name: &str) -> Option<&str> {
        self.csvs.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct ResultBundle {
    pub dir: PathBuf,
    pub output: Output,
    pub manifest: serde_json::Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn default_out_dir(id: ExperimentId) -> PathBuf {
    Path::new("results").join(id.name())
}

/// Runs the configured experiment and writes CSVs, SVGs and
/// `manifest.json` into the output directory. An existing directory is
/// only replaced when `force` is set.
pub fn run_experiment(config: &ExperimentConfig, force: bool) -> Result<ResultBundle, HarnessError> {
    config.validate().map_err(|errs| {
        HarnessError::Config(errs.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))
    })?;
    let dir = config.out.clone().unwrap_or_else(|| default_out_dir(config.experiment));
    if dir.exists() {
        if !force {
            return Err(HarnessError::Config(format!(
                "output directory {} exists; pass --force to replace it",
                dir.display()
            )));
        }
        fs::remove_dir_all(&dir).map_err(runtime)?;
    }
    let start = Instant::now();
    let output = experiments::compute(config)?;
    let seconds = start.elapsed().as_secs_f64();

    fs::create_dir_all(&dir).map_err(runtime)?;
    let mut outputs = Vec::new();
    for (name, body) in &output.csvs {
        fs::write(dir.join(name), body).map_err(runtime)?;
        outputs.push(serde_json::json!({ "file": name, "sha256": sha256_hex(body.as_bytes()) }));
    }
    for (svg_name, csv_name, chart) in &output.charts {
        let csv = output
            .csv(csv_name)
            .ok_or_else(|| HarnessError::Runtime(format!("chart refers to missing {csv_name}")))?;
        let body = emit_svg(csv, chart)?;
        fs::write(dir.join(svg_name), &body).map_err(runtime)?;
        outputs.push(serde_json::json!({ "file": svg_name, "sha256": sha256_hex(body.as_bytes()) }));
    }
    let mut inputs = Vec::new();
    for path in &output.inputs {
        let bytes = fs::read(path).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))?;
        inputs.push(serde_json::json!({ "path": path.display().to_string(), "sha256": sha256_hex(&bytes) }));
    }
    let text = config.to_text();
    let manifest = serde_json::json!({
        "experiment": config.experiment.name(),
        "config_sha256": sha256_hex(text.as_bytes()),
        "config": text,
        "seeds": config.seeds,
        "inputs": inputs,
        "outputs": outputs,
        "runtime_seconds": seconds,
    });
    let pretty = serde_json::to_string_pretty(&manifest).map_err(runtime)?;
    fs::write(dir.join("manifest.json"), pretty + "\n").map_err(runtime)?;
    Ok(ResultBundle { dir, output, manifest })
}
