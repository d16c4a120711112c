//! Result tables (long-format CSV) and run manifests (JSON).
//!
//! Output is bitwise reproducible: row order follows the sweep-point sort,
//! floats use Rust's shortest round-trip formatting, and every run writes a
//! manifest holding the fully resolved configuration so the exact table can
//! be regenerated with `qrc run --manifest <file>`.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

pub const RUN_CSV_HEADER: &str =
    "task,protocol,noise,observables,axes,reservoir_seed,input_seed,g,n_meas,delay,horizon,metric,value,uncertainty";

pub const RESOURCES_CSV_HEADER: &str =
    "protocol,n_t,n_wo,n_f,dt,tau_m,tau_r,n_meas,metric,value";

pub const SERIES_CSV_HEADER: &str =
    "task,protocol,noise,observables,axes,reservoir_seed,input_seed,g,n_meas,step,label,estimate,uncertainty";

/// One output record of the `run` command.
#[derive(Clone, Debug)]
pub struct ResultRow {
    pub task: String,
    pub protocol: String,
    pub noise: String,
    pub observables: String,
    pub axes: String,
    pub reservoir_seed: u64,
    pub input_seed: u64,
    pub g: f64,
    pub n_meas: String,
    pub delay: Option<usize>,
    pub horizon: Option<usize>,
    pub metric: String,
    pub value: f64,
    pub uncertainty: Option<f64>,
}

impl ResultRow {
    fn to_csv(&self) -> String {
        let opt_usize = |v: &Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        let opt_f64 = |v: &Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.task,
            self.protocol,
            self.noise,
            self.observables,
            self.axes,
            self.reservoir_seed,
            self.input_seed,
            self.g,
            self.n_meas,
            opt_usize(&self.delay),
            opt_usize(&self.horizon),
            self.metric,
            self.value,
            opt_f64(&self.uncertainty),
        )
    }
}

pub fn write_run_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut text = String::with_capacity(64 * (rows.len() + 1));
    text.push_str(RUN_CSV_HEADER);
    text.push('\n');
    for row in rows {
        text.push_str(&row.to_csv());
        text.push('\n');
    }
    write_atomically(path, text.as_bytes())
}

/// One per-step observable estimate (the dynamics behind the capacity
/// numbers), emitted when the config asks for a series table.
#[derive(Clone, Debug)]
pub struct SeriesRow {
    pub coordinates: String, // task..n_meas columns, pre-joined
    pub step: usize,
    pub label: String,
    pub estimate: f64,
    pub uncertainty: f64,
}

pub fn write_series_csv(path: &Path, rows: &[SeriesRow]) -> Result<()> {
    let mut text = String::with_capacity(48 * (rows.len() + 1));
    text.push_str(SERIES_CSV_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            r.coordinates, r.step, r.label, r.estimate, r.uncertainty
        ));
    }
    write_atomically(path, text.as_bytes())
}

/// One output record of the `resources` command.
#[derive(Clone, Debug)]
pub struct ResourceRow {
    pub protocol: String,
    pub n_t: usize,
    pub n_wo: usize,
    pub n_f: usize,
    pub dt: f64,
    pub tau_m: f64,
    pub tau_r: f64,
    pub n_meas: String,
    pub metric: String,
    pub value: f64,
}

pub fn write_resources_csv(path: &Path, rows: &[ResourceRow]) -> Result<()> {
    let mut text = String::with_capacity(48 * (rows.len() + 1));
    text.push_str(RESOURCES_CSV_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.protocol, r.n_t, r.n_wo, r.n_f, r.dt, r.tau_m, r.tau_r, r.n_meas, r.metric, r.value
        ));
    }
    write_atomically(path, text.as_bytes())
}

/// Everything needed to regenerate a table byte for byte.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub rng: String,
    pub csv_schema: Vec<String>,
    pub config: ExperimentConfig,
}

impl RunManifest {
    pub fn new(command: &str, header: &str, config: &ExperimentConfig) -> Self {
        Self {
            tool: "qrc".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            rng: qrc_core::rng::RNG_DESCRIPTION.into(),
            csv_schema: header.split(',').map(str::to_string).collect(),
            config: config.clone(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).context("serializing manifest")?;
        write_atomically(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_str(&text).context("parsing manifest JSON")
    }
}

/// Manifest path for a given table path: `results.csv` -> `results.manifest.json`.
pub fn manifest_path(csv_path: &Path) -> std::path::PathBuf {
    csv_path.with_extension("manifest.json")
}

fn write_atomically(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating directory {}", parent.display()))?;
        }
    }
    let tmp = path.with_extension("tmp");
    {
        let mut file = std::fs::File::create(&tmp)
            .with_context(|| format!("creating {}", tmp.display()))?;
        file.write_all(bytes)?;
    }
    std::fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
