//! Declarative experiment configuration: one TOML file, optionally patched by
//! `--set path=value` overrides, deserialized with field-path error reporting.

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use qrc_core::measurement::EnsembleSize;
use qrc_core::protocols::{NoiseMode, ObservableSet, OrderSelect, Protocol};
use qrc_core::quantum::Axis;
use qrc_core::tasks::TaskKind;

/// Ensemble sizes in config files: an integer, an integral float such as
/// `1.5e6`, or the string `"inf"`.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(untagged)]
pub enum EnsembleField {
    Int(u64),
    Float(f64),
    Text(String),
}

impl EnsembleField {
    pub fn resolve(&self) -> Result<EnsembleSize> {
        match self {
            EnsembleField::Int(n) => Ok(EnsembleSize::Finite(*n)),
            EnsembleField::Float(x) => format!("{x}")
                .parse()
                .map_err(|e| anyhow!("{e}")),
            EnsembleField::Text(s) => s.parse().map_err(|e| anyhow!("{e}")),
        }
    }
}

fn default_output() -> String {
    "results.csv".into()
}

fn default_j_s() -> f64 {
    1.0
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}

fn default_axes() -> Vec<Axis> {
    vec![Axis::X, Axis::Y, Axis::Z]
}

fn default_g() -> Vec<f64> {
    vec![0.0]
}

fn default_n_meas() -> Vec<EnsembleField> {
    vec![EnsembleField::Text("inf".into())]
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ReservoirConfig {
    pub n: usize,
    pub h: f64,
    #[serde(default = "default_j_s")]
    pub j_s: f64,
    pub dt: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub kind: TaskKind,
    pub n_t: usize,
    #[serde(default = "qrc_core::tasks::default_washout")]
    pub n_wo: usize,
    #[serde(default)]
    pub input_seed: u64,
    /// Forecast task: path to the series file (one number per line).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series_file: Option<String>,
    /// Forecast task without a file: use the bundled synthetic chaotic
    /// generator (not comparable to the laser benchmark).
    #[serde(default)]
    pub synthetic: bool,
    #[serde(default)]
    pub taus: Vec<usize>,
    #[serde(default)]
    pub etas: Vec<usize>,
    #[serde(default)]
    pub ridge: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ObservablesConfig {
    pub orders: OrderSelect,
    #[serde(default = "default_axes")]
    pub axes: Vec<Axis>,
}

impl Default for ObservablesConfig {
    fn default() -> Self {
        Self {
            orders: OrderSelect::Order1,
            axes: default_axes(),
        }
    }
}

impl ObservablesConfig {
    pub fn to_set(&self) -> Result<ObservableSet> {
        ObservableSet::new(self.orders, &self.axes).map_err(|e| anyhow!("observables: {e}"))
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub protocol: Protocol,
    pub noise: NoiseMode,
    #[serde(default = "default_g")]
    pub g: Vec<f64>,
    #[serde(default = "default_n_meas")]
    pub n_meas: Vec<EnsembleField>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ResourcesConfig {
    #[serde(default)]
    pub tau_m: f64,
    #[serde(default)]
    pub tau_r: f64,
    #[serde(default)]
    pub n_t_values: Vec<usize>,
    #[serde(default)]
    pub n_meas: Vec<EnsembleField>,
}

impl Default for ResourcesConfig {
    fn default() -> Self {
        Self {
            tau_m: 0.0,
            tau_r: 0.0,
            n_t_values: Vec::new(),
            n_meas: Vec::new(),
        }
    }
}

/// The full declarative experiment description. This struct is echoed
/// verbatim into run manifests, making every output reproducible.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_output")]
    pub output: String,
    /// Optional second table with the per-step observable estimates behind
    /// the capacities (one row per sweep point, step and observable column).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series_output: Option<String>,
    pub reservoir: ReservoirConfig,
    pub task: TaskConfig,
    #[serde(default)]
    pub observables: ObservablesConfig,
    #[serde(default)]
    pub protocols: Vec<ProtocolConfig>,
    #[serde(default)]
    pub resources: ResourcesConfig,
}

impl ExperimentConfig {
    pub fn from_toml_value(value: toml::Value) -> Result<Self> {
        let config: ExperimentConfig = serde_path_to_error::deserialize(value)
            .map_err(|e| anyhow!("config field `{}`: {}", e.path(), e.inner()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &str, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {path}"))?;
        let table: toml::Table = text
            .parse()
            .with_context(|| format!("parsing TOML in {path}"))?;
        let mut value = toml::Value::Table(table);
        for entry in overrides {
            apply_override(&mut value, entry)?;
        }
        Self::from_toml_value(value)
    }

    /// Cross-field checks beyond what deserialization can express; error
    /// messages name the offending field.
    pub fn validate(&self) -> Result<()> {
        let r = &self.reservoir;
        if r.n < 2 || r.n > qrc_core::quantum::MAX_QUBITS {
            bail!(
                "reservoir.n: {} outside supported range 2..={}",
                r.n,
                qrc_core::quantum::MAX_QUBITS
            );
        }
        if r.dt <= 0.0 || r.h < 0.0 || r.j_s < 0.0 {
            bail!("reservoir: require dt > 0, h >= 0, j_s >= 0");
        }
        if r.seeds.is_empty() {
            bail!("reservoir.seeds: at least one seed required");
        }
        if self.task.n_t <= self.task.n_wo + 1 {
            bail!(
                "task.n_t: {} leaves no usable steps after n_wo = {}",
                self.task.n_t,
                self.task.n_wo
            );
        }
        match self.task.kind {
            TaskKind::Stm => {
                if self.task.taus.is_empty() {
                    bail!("task.taus: the memory task needs at least one delay");
                }
                if let Some(&tau) = self.task.taus.iter().find(|&&t| t == 0) {
                    bail!("task.taus: delay {tau} must be >= 1");
                }
            }
            TaskKind::Forecast => {
                if self.task.etas.is_empty() {
                    bail!("task.etas: the forecast task needs at least one horizon");
                }
                if self.task.series_file.is_none() && !self.task.synthetic {
                    bail!(
                        "task.series_file: forecast needs a series file \
                         (or task.synthetic = true for the bundled stand-in)"
                    );
                }
            }
        }
        if self.task.ridge < 0.0 {
            bail!("task.ridge: must be >= 0");
        }
        self.observables.to_set()?;
        for (ix, p) in self.protocols.iter().enumerate() {
            if p.g.is_empty() {
                bail!("protocols[{ix}].g: empty sweep");
            }
            if p.n_meas.is_empty() {
                bail!("protocols[{ix}].n_meas: empty sweep");
            }
            for (jx, field) in p.n_meas.iter().enumerate() {
                field
                    .resolve()
                    .map_err(|e| anyhow!("protocols[{ix}].n_meas[{jx}]: {e}"))?;
            }
            for (jx, &g) in p.g.iter().enumerate() {
                if g < 0.0 {
                    bail!("protocols[{ix}].g[{jx}]: must be >= 0");
                }
            }
        }
        Ok(())
    }
}

/// Apply one `path.to.key=value` override onto the parsed TOML tree. The
/// value is parsed as a TOML literal (so `3`, `true`, `[1, 2]`, `"text"` all
/// work); bare words fall back to strings.
pub fn apply_override(root: &mut toml::Value, entry: &str) -> Result<()> {
    let (path, raw) = entry
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{entry}` is not of the form path=value"))?;
    let parsed: toml::Value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(table) => table["v"].clone(),
        Err(_) => toml::Value::String(raw.to_string()),
    };

    let segments: Vec<&str> = path.split('.').collect();
    let mut cursor = root;
    for (ix, segment) in segments.iter().enumerate() {
        let last = ix == segments.len() - 1;
        if let Ok(index) = segment.parse::<usize>() {
            let array = cursor
                .as_array_mut()
                .ok_or_else(|| anyhow!("override `{path}`: `{segment}` indexes a non-array"))?;
            if index >= array.len() {
                bail!("override `{path}`: index {index} out of bounds");
            }
            if last {
                array[index] = parsed;
                return Ok(());
            }
            cursor = &mut array[index];
        } else {
            let table = cursor
                .as_table_mut()
                .ok_or_else(|| anyhow!("override `{path}`: `{segment}` indexes a non-table"))?;
            if last {
                table.insert(segment.to_string(), parsed);
                return Ok(());
            }
            cursor = table
                .entry(segment.to_string())
                .or_insert(toml::Value::Table(Default::default()));
        }
    }
    Ok(())
}
