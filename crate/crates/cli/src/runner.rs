//! Command implementations: sweep expansion, protocol execution, metric rows.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;

use qrc_core::measurement::{EnsembleSize, ObservableOrder};
use qrc_core::protocols::{
    experimental_time, g_threshold, run_protocol, Protocol, ProtocolRun, ResourceParams,
};
use qrc_core::reservoir::ReservoirSpec;
use qrc_core::tasks::{
    evaluate_task, generate_stm_inputs_with_washout, load_series_file_with_washout,
    synthetic_series_with_washout, Dataset, TaskKind, TaskTarget, DEFAULT_MAX_DELAY,
};
use qrc_core::validate::PropertyCheck;

use crate::config::ExperimentConfig;
use crate::output::{
    manifest_path, write_resources_csv, write_run_csv, write_series_csv, ResourceRow, ResultRow,
    RunManifest, SeriesRow, RESOURCES_CSV_HEADER, RUN_CSV_HEADER,
};

fn order_label(orders: qrc_core::protocols::OrderSelect) -> &'static str {
    match orders {
        qrc_core::protocols::OrderSelect::Order1 => "order1",
        qrc_core::protocols::OrderSelect::Order2 => "order2",
        qrc_core::protocols::OrderSelect::Both => "both",
    }
}

fn build_dataset(config: &ExperimentConfig) -> Result<Dataset<f64>> {
    let t = &config.task;
    let dataset = match t.kind {
        TaskKind::Stm => generate_stm_inputs_with_washout(t.n_t, t.input_seed, t.n_wo)?,
        TaskKind::Forecast => match &t.series_file {
            Some(path) => load_series_file_with_washout(path, t.n_t, t.n_wo)?,
            None => synthetic_series_with_washout(t.n_t, t.input_seed, t.n_wo)?,
        },
    };
    Ok(dataset)
}

/// One fully resolved sweep point, in deterministic order.
struct SweepPoint {
    seed: u64,
    protocol_ix: usize,
    g: f64,
    n_meas: EnsembleSize,
    n_meas_label: String,
}

fn expand_sweep(config: &ExperimentConfig) -> Result<Vec<SweepPoint>> {
    let mut points = Vec::new();
    for &seed in &config.reservoir.seeds {
        for (protocol_ix, p) in config.protocols.iter().enumerate() {
            for &g in &p.g {
                for field in &p.n_meas {
                    let n_meas = field.resolve().map_err(|e| anyhow!("n_meas: {e}"))?;
                    points.push(SweepPoint {
                        seed,
                        protocol_ix,
                        g,
                        n_meas,
                        n_meas_label: n_meas.to_string(),
                    });
                }
            }
        }
    }
    if points.is_empty() {
        bail!("protocols: nothing to run (empty sweep)");
    }
    Ok(points)
}

/// Execute the full sweep and write the result table plus its manifest.
/// Output is deterministic for a fixed config, whatever the worker count.
pub fn cmd_run(config: &ExperimentConfig, output_override: Option<&str>) -> Result<PathBuf> {
    config.validate().map_err(|e| anyhow!("invalid config: {e}"))?;
    let observables = config.observables.to_set()?;
    let dataset = build_dataset(config)?;
    let inputs = dataset
        .input_samples()
        .map_err(|e| anyhow!("dataset inputs: {e}"))?;

    let reservoirs: Vec<ReservoirSpec<f64>> = config
        .reservoir
        .seeds
        .iter()
        .map(|&seed| {
            ReservoirSpec::build(
                config.reservoir.n,
                config.reservoir.h,
                config.reservoir.j_s,
                config.reservoir.dt,
                seed,
            )
            .map_err(|e| anyhow!("reservoir seed {seed}: {e}"))
        })
        .collect::<Result<_>>()?;
    let reservoir_for = |seed: u64| {
        reservoirs
            .iter()
            .find(|r| r.seed() == seed)
            .expect("seed was built")
    };

    let points = expand_sweep(config)?;
    let want_series = config.series_output.is_some();
    let row_groups: Vec<(Vec<ResultRow>, Vec<SeriesRow>)> = points
        .par_iter()
        .map(|point| -> Result<(Vec<ResultRow>, Vec<SeriesRow>)> {
            let p = &config.protocols[point.protocol_ix];
            let run = ProtocolRun {
                protocol: p.protocol,
                n_meas: point.n_meas,
                n_wo: config.task.n_wo,
                noise_mode: p.noise,
                g: point.g,
                observables: observables.clone(),
                seed: point.seed,
            };
            let series = run_protocol(reservoir_for(point.seed), &inputs, &run)
                .map_err(|e| anyhow!("{} (seed {}): {e}", p.protocol, point.seed))?;

            let base = ResultRow {
                task: match config.task.kind {
                    TaskKind::Stm => "stm".into(),
                    TaskKind::Forecast => "forecast".into(),
                },
                protocol: p.protocol.to_string(),
                noise: p.noise.to_string(),
                observables: order_label(config.observables.orders).into(),
                axes: observables
                    .axes()
                    .iter()
                    .map(|a| a.label())
                    .collect::<String>(),
                reservoir_seed: point.seed,
                input_seed: config.task.input_seed,
                g: point.g,
                n_meas: point.n_meas_label.clone(),
                delay: None,
                horizon: None,
                metric: String::new(),
                value: 0.0,
                uncertainty: None,
            };

            let mut series_rows = Vec::new();
            if want_series {
                let coordinates = format!(
                    "{},{},{},{},{},{},{},{},{}",
                    base.task,
                    base.protocol,
                    base.noise,
                    base.observables,
                    base.axes,
                    base.reservoir_seed,
                    base.input_seed,
                    base.g,
                    base.n_meas
                );
                for row in 0..series.num_steps() {
                    for (col, label) in series.labels().iter().enumerate() {
                        series_rows.push(SeriesRow {
                            coordinates: coordinates.clone(),
                            step: series.first_step() + row,
                            label: label.to_string(),
                            estimate: series.estimates()[(row, col)],
                            uncertainty: series.uncertainties()[(row, col)],
                        });
                    }
                }
            }

            let mut rows = Vec::new();
            match config.task.kind {
                TaskKind::Stm => {
                    let mut capacities = Vec::new();
                    for &tau in &config.task.taus {
                        let result =
                            evaluate_task(&series, &dataset, TaskTarget::Stm { tau }, config.task.ridge)
                                .map_err(|e| anyhow!("stm tau {tau}: {e}"))?;
                        if tau <= DEFAULT_MAX_DELAY {
                            capacities.push(result.capacity);
                        }
                        let mut row = base.clone();
                        row.delay = Some(tau);
                        row.metric = "capacity".into();
                        row.value = result.capacity;
                        rows.push(row);
                    }
                    let mut row = base.clone();
                    row.metric = "sum_capacity".into();
                    row.value = qrc_core::tasks::sum_capacity(&capacities);
                    rows.push(row);
                }
                TaskKind::Forecast => {
                    for &eta in &config.task.etas {
                        let result = evaluate_task(
                            &series,
                            &dataset,
                            TaskTarget::Forecast { eta },
                            config.task.ridge,
                        )
                        .map_err(|e| anyhow!("forecast eta {eta}: {e}"))?;
                        let mut row = base.clone();
                        row.horizon = Some(eta);
                        row.metric = "capacity".into();
                        row.value = result.capacity;
                        rows.push(row);
                    }
                }
            }
            Ok((rows, series_rows))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut series_rows = Vec::new();
    for (group, series_group) in row_groups {
        rows.extend(group);
        series_rows.extend(series_group);
    }
    let csv_path = PathBuf::from(output_override.unwrap_or(&config.output));
    write_run_csv(&csv_path, &rows)?;
    if let Some(series_path) = &config.series_output {
        write_series_csv(Path::new(series_path), &series_rows)?;
    }
    RunManifest::new("run", RUN_CSV_HEADER, config).write(&manifest_path(&csv_path))?;
    Ok(csv_path)
}

/// `run` from a previously written manifest: regenerates the table from the
/// embedded configuration.
pub fn cmd_run_from_manifest(path: &Path, output_override: Option<&str>) -> Result<PathBuf> {
    let manifest = RunManifest::load(path)?;
    if manifest.command != "run" {
        bail!("manifest {} was written by `{}`", path.display(), manifest.command);
    }
    cmd_run(&manifest.config, output_override)
}

/// Experiment-time table for each protocol across the configured sweeps, with
/// the minimum-strength thresholds for online processing.
pub fn cmd_resources(config: &ExperimentConfig, output_override: Option<&str>) -> Result<PathBuf> {
    config.validate().map_err(|e| anyhow!("invalid config: {e}"))?;
    let r = &config.resources;
    let n_t_values = if r.n_t_values.is_empty() {
        vec![config.task.n_t]
    } else {
        r.n_t_values.clone()
    };
    if r.n_meas.is_empty() {
        bail!("resources.n_meas: at least one finite ensemble size required");
    }

    let mut rows = Vec::new();
    for &n_t in &n_t_values {
        for field in &r.n_meas {
            let n_meas = field.resolve().map_err(|e| anyhow!("resources.n_meas: {e}"))?;
            if n_meas.is_infinite() {
                bail!("resources.n_meas: experimental time is undefined for `inf`");
            }
            let params = ResourceParams {
                tau_m: r.tau_m,
                tau_r: r.tau_r,
                dt: config.reservoir.dt,
                n_t,
                n_wo: config.task.n_wo,
                n_meas,
            };
            for protocol in [Protocol::Rsp, Protocol::Rwp, Protocol::Olp] {
                let value = experimental_time(protocol, &params)
                    .map_err(|e| anyhow!("experimental_time({protocol}): {e}"))?;
                rows.push(ResourceRow {
                    protocol: protocol.to_string(),
                    n_t,
                    n_wo: config.task.n_wo,
                    n_f: n_t - config.task.n_wo,
                    dt: config.reservoir.dt,
                    tau_m: r.tau_m,
                    tau_r: r.tau_r,
                    n_meas: n_meas.to_string(),
                    metric: "experimental_time".into(),
                    value,
                });
            }
        }
    }
    for (metric, order) in [
        ("g_threshold_order1", ObservableOrder::Single),
        ("g_threshold_order2", ObservableOrder::Pair),
    ] {
        let value = g_threshold::<f64>(config.task.n_wo, order)
            .map_err(|e| anyhow!("{metric}: {e}"))?;
        rows.push(ResourceRow {
            protocol: "olp".into(),
            n_t: config.task.n_t,
            n_wo: config.task.n_wo,
            n_f: config.task.n_t - config.task.n_wo,
            dt: config.reservoir.dt,
            tau_m: r.tau_m,
            tau_r: r.tau_r,
            n_meas: String::new(),
            metric: metric.into(),
            value,
        });
    }

    let csv_path = PathBuf::from(output_override.unwrap_or(&config.output));
    write_resources_csv(&csv_path, &rows)?;
    RunManifest::new("resources", RESOURCES_CSV_HEADER, config)
        .write(&manifest_path(&csv_path))?;
    Ok(csv_path)
}

/// Run the oracle property suites; failures are report content, not errors.
pub fn cmd_validate(seed: u64, report_path: Option<&Path>) -> Result<Vec<PropertyCheck>> {
    let checks = qrc_core::validate::run_all(seed);
    if let Some(path) = report_path {
        let text =
            serde_json::to_string_pretty(&checks).context("serializing validation report")?;
        std::fs::write(path, text)
            .with_context(|| format!("writing report {}", path.display()))?;
    }
    Ok(checks)
}
