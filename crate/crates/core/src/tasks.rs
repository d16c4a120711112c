//! Benchmark tasks and the linear readout.
//!
//! The short-term memory task asks the readout to reproduce a past input
//! (`y_k = s_{k-tau}`); the forecasting task asks for a future one
//! (`y_k = s_{k+eta}`). Performance is the squared normalized correlation
//! (capacity) between predictions and targets on a held-out test segment.

use std::io::BufRead;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocols::{ObservableLabel, ObservableSeries};
use crate::reservoir::InputSample;
use crate::rng::{stream, CompensatedSum};
use crate::scalar::Real;

/// Washout steps discarded before training, long enough for the operating
/// regime used here to forget its initialization.
pub const DEFAULT_WASHOUT: usize = 20;

/// Function form of [`DEFAULT_WASHOUT`] for use as a serde default.
pub fn default_washout() -> usize {
    DEFAULT_WASHOUT
}

/// An input sequence with its washout/train/test split.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T: Real> {
    name: String,
    inputs: Vec<T>,
    n_wo: usize,
    train_count: usize,
    test_count: usize,
}

impl<T: Real> Dataset<T> {
    pub fn new(
        name: impl Into<String>,
        inputs: Vec<T>,
        n_wo: usize,
        train_count: usize,
        test_count: usize,
    ) -> Result<Self> {
        if n_wo + train_count + test_count != inputs.len() {
            return Err(Error::Dataset(format!(
                "split {n_wo}+{train_count}+{test_count} does not cover {} steps",
                inputs.len()
            )));
        }
        if train_count == 0 || test_count == 0 {
            return Err(Error::Dataset("empty train or test segment".into()));
        }
        if inputs.iter().any(|&s| s < T::zero() || s > T::one()) {
            return Err(Error::Dataset("inputs must lie in [0, 1]".into()));
        }
        Ok(Self {
            name: name.into(),
            inputs,
            n_wo,
            train_count,
            test_count,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn inputs(&self) -> &[T] {
        &self.inputs
    }

    pub fn input_samples(&self) -> Result<Vec<InputSample<T>>> {
        self.inputs.iter().map(|&s| InputSample::new(s)).collect()
    }

    pub fn n_t(&self) -> usize {
        self.inputs.len()
    }

    pub fn n_wo(&self) -> usize {
        self.n_wo
    }

    pub fn train_count(&self) -> usize {
        self.train_count
    }

    pub fn test_count(&self) -> usize {
        self.test_count
    }
}

/// Uniform i.i.d. inputs in `[0, 1]` for the memory task, reproducible per
/// seed. A quarter of the post-washout steps form the test set (245 of 980 at
/// the reference length 1000).
pub fn generate_stm_inputs<T: Real>(n_t: usize, seed: u64) -> Result<Dataset<T>> {
    generate_stm_inputs_with_washout(n_t, seed, DEFAULT_WASHOUT)
}

/// [`generate_stm_inputs`] with an explicit washout length.
pub fn generate_stm_inputs_with_washout<T: Real>(
    n_t: usize,
    seed: u64,
    n_wo: usize,
) -> Result<Dataset<T>> {
    if n_t < n_wo + 2 {
        return Err(Error::Dataset(format!(
            "need at least {} steps, got {n_t}",
            n_wo + 2
        )));
    }
    let mut rng = stream(seed, "stm-inputs", &[]);
    let inputs: Vec<T> = (0..n_t).map(|_| T::of(rng.random::<f64>())).collect();
    let post = n_t - n_wo;
    let test = ((post as f64 * 0.25).round() as usize).clamp(1, post - 1);
    let train = post - test;
    Dataset::new(format!("stm-{seed}"), inputs, n_wo, train, test)
}

/// Load the first `n_t` values of a one-number-per-line ASCII series and
/// min-max normalize them to `[0, 1]`. 70% of the post-washout steps train
/// the readout, the last 30% are the test set.
pub fn load_series_file<T: Real>(path: impl AsRef<Path>, n_t: usize) -> Result<Dataset<T>> {
    load_series_file_with_washout(path, n_t, DEFAULT_WASHOUT)
}

/// [`load_series_file`] with an explicit washout length.
pub fn load_series_file_with_washout<T: Real>(
    path: impl AsRef<Path>,
    n_t: usize,
    n_wo: usize,
) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let to_io_err = |source| Error::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::open(path).map_err(to_io_err)?;
    let reader = std::io::BufReader::new(file);
    let mut raw: Vec<f64> = Vec::with_capacity(n_t);
    for (ix, line) in reader.lines().enumerate() {
        if raw.len() == n_t {
            break;
        }
        let line = line.map_err(to_io_err)?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let value: f64 = text.parse().map_err(|_| {
            Error::Dataset(format!(
                "line {} of {} is not numeric: `{text}`",
                ix + 1,
                path.display()
            ))
        })?;
        raw.push(value);
    }
    if raw.len() < n_t {
        return Err(Error::Dataset(format!(
            "{} holds {} numeric values, need {n_t}",
            path.display(),
            raw.len()
        )));
    }
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    // also rejects NaN from non-finite file content
    if range <= 0.0 || range.is_nan() {
        return Err(Error::Dataset(format!(
            "{} has degenerate value range [{min}, {max}]",
            path.display()
        )));
    }
    let inputs: Vec<T> = raw.iter().map(|&x| T::of(((x - min) / range).clamp(0.0, 1.0))).collect();

    if n_t < n_wo + 2 {
        return Err(Error::Dataset(format!(
            "need at least {} steps, got {n_t}",
            n_wo + 2
        )));
    }
    let post = n_t - n_wo;
    let train = ((post as f64 * 0.7).round() as usize).clamp(1, post - 1);
    let test = post - train;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "series".into());
    Dataset::new(name, inputs, n_wo, train, test)
}

/// A deterministic chaotic surrogate series (a delay-feedback oscillator with
/// the classic parameter set), normalized to `[0, 1]`, for exercising the
/// forecasting pipeline without external data. This is NOT the laser
/// benchmark series; results on it are not comparable to published figures.
pub fn synthetic_series<T: Real>(n_t: usize, seed: u64) -> Result<Dataset<T>> {
    synthetic_series_with_washout(n_t, seed, DEFAULT_WASHOUT)
}

/// [`synthetic_series`] with an explicit washout length.
pub fn synthetic_series_with_washout<T: Real>(
    n_t: usize,
    seed: u64,
    n_wo: usize,
) -> Result<Dataset<T>> {
    const TAU: usize = 17;
    const BURN_IN: usize = 500;
    let mut rng = stream(seed, "synthetic-series", &[]);
    let mut history: Vec<f64> = (0..TAU + 1)
        .map(|_| 1.2 + 0.2 * (rng.random::<f64>() - 0.5))
        .collect();
    let mut raw = Vec::with_capacity(n_t);
    let total = BURN_IN + n_t;
    for t in 0..total {
        let x = history[history.len() - 1];
        let x_delay = history[history.len() - 1 - TAU];
        let next = x + 0.2 * x_delay / (1.0 + x_delay.powi(10)) - 0.1 * x;
        history.push(next);
        if t >= BURN_IN {
            raw.push(next);
        }
        if history.len() > TAU + 2 {
            history.remove(0);
        }
    }
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if range <= 0.0 || range.is_nan() {
        return Err(Error::Dataset("degenerate synthetic series".into()));
    }
    let inputs: Vec<T> = raw.iter().map(|&x| T::of((x - min) / range)).collect();
    let post = n_t.checked_sub(n_wo).filter(|&p| p >= 2).ok_or_else(|| {
        Error::Dataset(format!("need at least {} steps, got {n_t}", n_wo + 2))
    })?;
    let train = ((post as f64 * 0.7).round() as usize).clamp(1, post - 1);
    Dataset::new(format!("synthetic-{seed}"), inputs, n_wo, train, post - train)
}

// ---------------------------------------------------------------------------
// Targets
// ---------------------------------------------------------------------------

/// Target values aligned to absolute time steps: `values[0]` is the target of
/// step `first_step` (1-based). Steps with no defined target are simply not
/// covered.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetSeries<T: Real> {
    pub first_step: usize,
    pub values: Vec<T>,
}

impl<T: Real> TargetSeries<T> {
    pub fn value_at_step(&self, k: usize) -> Option<T> {
        k.checked_sub(self.first_step).and_then(|ix| self.values.get(ix).copied())
    }

    pub fn last_step(&self) -> usize {
        self.first_step + self.values.len() - 1
    }
}

/// Memory-task targets `y_k = s_{k-tau}`; steps `k <= tau` have no target.
pub fn stm_targets<T: Real>(inputs: &[T], tau: usize) -> Result<TargetSeries<T>> {
    if tau == 0 {
        return Err(Error::InvalidParameter("delay must be >= 1".into()));
    }
    if tau >= inputs.len() {
        return Err(Error::InvalidParameter(format!(
            "delay {tau} >= sequence length {}",
            inputs.len()
        )));
    }
    Ok(TargetSeries {
        first_step: tau + 1,
        values: inputs[..inputs.len() - tau].to_vec(),
    })
}

/// Forecast targets `y_k = s_{k+eta}`; the final `eta` steps have no target.
pub fn forecast_targets<T: Real>(inputs: &[T], eta: usize) -> Result<TargetSeries<T>> {
    if eta == 0 {
        return Err(Error::InvalidParameter("horizon must be >= 1".into()));
    }
    if eta >= inputs.len() {
        return Err(Error::InvalidParameter(format!(
            "horizon {eta} >= sequence length {}",
            inputs.len()
        )));
    }
    Ok(TargetSeries {
        first_step: 1,
        values: inputs[eta..].to_vec(),
    })
}

// ---------------------------------------------------------------------------
// Readout
// ---------------------------------------------------------------------------

/// Trained linear readout: `prediction = w · features + bias`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReadoutModel<T: Real> {
    weights: DVector<T>,
    bias: T,
    labels: Vec<ObservableLabel>,
}

impl<T: Real> ReadoutModel<T> {
    pub fn weights(&self) -> &DVector<T> {
        &self.weights
    }

    pub fn bias(&self) -> T {
        self.bias
    }

    pub fn labels(&self) -> &[ObservableLabel] {
        &self.labels
    }

    pub fn with_labels(mut self, labels: &[ObservableLabel]) -> Self {
        self.labels = labels.to_vec();
        self
    }

    pub fn predict_row(&self, features: &[T]) -> T {
        debug_assert_eq!(features.len(), self.weights.len());
        let mut acc = CompensatedSum::new();
        for (w, x) in self.weights.iter().zip(features) {
            acc.add(*w * *x);
        }
        acc.value() + self.bias
    }

    pub fn predict(&self, features: &DMatrix<T>) -> Vec<T> {
        (0..features.nrows())
            .map(|r| {
                let row: Vec<T> = features.row(r).iter().copied().collect();
                self.predict_row(&row)
            })
            .collect()
    }
}

/// Least-squares fit of `features * w + bias ~ targets` through a
/// rank-revealing pseudoinverse (singular values below `1e-10 * sigma_max`
/// are dropped). `ridge > 0` adds Tikhonov damping on the weights (not the
/// bias) for ill-conditioned feature sets; the baseline is plain least
/// squares.
pub fn train_readout<T: Real>(
    features: &DMatrix<T>,
    targets: &[T],
    ridge: T,
) -> Result<ReadoutModel<T>> {
    let rows = features.nrows();
    let cols = features.ncols();
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    if targets.len() != rows {
        return Err(Error::LengthMismatch {
            left: rows,
            right: targets.len(),
        });
    }
    if ridge < T::zero() {
        return Err(Error::InvalidParameter("ridge must be >= 0".into()));
    }

    let extra = if ridge > T::zero() { cols } else { 0 };
    let mut x = DMatrix::zeros(rows + extra, cols + 1);
    for r in 0..rows {
        for c in 0..cols {
            x[(r, c)] = features[(r, c)];
        }
        x[(r, cols)] = T::one();
    }
    let mut y = DVector::zeros(rows + extra);
    for (r, &t) in targets.iter().enumerate() {
        y[r] = t;
    }
    if extra > 0 {
        let damp = ridge.sqrt();
        for c in 0..cols {
            x[(rows + c, c)] = damp;
        }
    }

    let svd = x.svd(true, true);
    let sigma_max = svd
        .singular_values
        .iter()
        .fold(T::zero(), |m, &s| if s > m { s } else { m });
    if sigma_max <= T::zero() {
        return Err(Error::InvalidParameter("features are identically zero".into()));
    }
    let cutoff = sigma_max * T::of(1e-10);
    let solution = svd
        .solve(&y, cutoff)
        .map_err(|e| Error::InvalidParameter(format!("least-squares solve failed: {e}")))?;

    let weights = DVector::from_iterator(cols, solution.iter().take(cols).copied());
    let bias = solution[cols];
    Ok(ReadoutModel {
        weights,
        bias,
        labels: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// Capacity
// ---------------------------------------------------------------------------

/// Squared normalized correlation `cov^2(y, p) / (var(y) var(p))`, in
/// `[0, 1]`; returns 0 when either series is (numerically) constant.
pub fn capacity<T: Real>(predictions: &[T], targets: &[T]) -> Result<T> {
    if predictions.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: targets.len(),
        });
    }
    if predictions.len() < 2 {
        return Err(Error::InvalidParameter(
            "capacity needs at least two points".into(),
        ));
    }
    let count = T::of(predictions.len() as f64);
    let mean = |xs: &[T]| {
        let mut acc = CompensatedSum::new();
        for &x in xs {
            acc.add(x);
        }
        acc.value() / count
    };
    let mp = mean(predictions);
    let mt = mean(targets);
    let mut cov = CompensatedSum::new();
    let mut var_p = CompensatedSum::new();
    let mut var_t = CompensatedSum::new();
    for (&p, &t) in predictions.iter().zip(targets) {
        let dp = p - mp;
        let dt = t - mt;
        cov.add(dp * dt);
        var_p.add(dp * dp);
        var_t.add(dt * dt);
    }
    let var_p = var_p.value() / count;
    let var_t = var_t.value() / count;
    let floor = T::of(1e-14);
    if var_p < floor || var_t < floor {
        return Ok(T::zero());
    }
    let cov = cov.value() / count;
    let c = (cov * cov) / (var_p * var_t);
    Ok(c.max(T::zero()).min(T::one()))
}

/// Total memory over the evaluated delays.
pub fn sum_capacity<T: Real>(capacities: &[T]) -> T {
    let mut acc = CompensatedSum::new();
    for &c in capacities {
        acc.add(c);
    }
    acc.value()
}

/// Delays are summed up to 10 by default; beyond that the capacity of this
/// register size is indistinguishable from zero.
pub const DEFAULT_MAX_DELAY: usize = 10;

// ---------------------------------------------------------------------------
// Task evaluation pipeline
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Stm,
    Forecast,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskTarget {
    Stm { tau: usize },
    Forecast { eta: usize },
}

/// Outcome of one task evaluation on the test segment.
#[derive(Clone, Debug)]
pub struct TaskResult<T: Real> {
    pub capacity: T,
    pub predictions: Vec<T>,
    pub targets: Vec<T>,
    pub train_rows: usize,
    pub test_rows: usize,
}

/// Train the readout on the training segment of `dataset` and score it on the
/// test segment.
///
/// Row alignment: a step is usable when its target exists and, for the memory
/// task, when the recalled input lies beyond the washout region (the first
/// `tau` post-washout rows are dropped from whichever segment they fall in).
/// For forecasting the final `eta` steps lack targets and drop from the test
/// segment.
pub fn evaluate_task<T: Real>(
    series: &ObservableSeries<T>,
    dataset: &Dataset<T>,
    target: TaskTarget,
    ridge: T,
) -> Result<TaskResult<T>> {
    let n_t = dataset.n_t();
    let n_wo = dataset.n_wo();
    if series.first_step() != n_wo + 1 || series.num_steps() != n_t - n_wo {
        return Err(Error::InvalidParameter(format!(
            "series covers steps {}..{}, dataset expects {}..{}",
            series.first_step(),
            series.first_step() + series.num_steps() - 1,
            n_wo + 1,
            n_t
        )));
    }
    let targets = match target {
        TaskTarget::Stm { tau } => stm_targets(dataset.inputs(), tau)?,
        TaskTarget::Forecast { eta } => forecast_targets(dataset.inputs(), eta)?,
    };
    let usable = |k: usize| -> bool {
        if targets.value_at_step(k).is_none() {
            return false;
        }
        match target {
            TaskTarget::Stm { tau } => k > n_wo + tau,
            TaskTarget::Forecast { .. } => true,
        }
    };

    let train_end = n_wo + dataset.train_count();
    let collect_segment = |from: usize, to: usize| -> (DMatrix<T>, Vec<T>) {
        let steps: Vec<usize> = (from..=to).filter(|&k| usable(k)).collect();
        let cols = series.num_observables();
        let mut x = DMatrix::zeros(steps.len(), cols);
        let mut y = Vec::with_capacity(steps.len());
        for (r, &k) in steps.iter().enumerate() {
            let row = series.row_for_step(k).expect("step in range");
            for c in 0..cols {
                x[(r, c)] = series.estimates()[(row, c)];
            }
            y.push(targets.value_at_step(k).expect("usable step"));
        }
        (x, y)
    };

    let (x_train, y_train) = collect_segment(n_wo + 1, train_end);
    let (x_test, y_test) = collect_segment(train_end + 1, n_t);
    if x_train.nrows() == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    if x_test.nrows() < 2 {
        return Err(Error::InvalidParameter("test segment too short".into()));
    }

    let model = train_readout(&x_train, &y_train, ridge)?.with_labels(series.labels());
    let predictions = model.predict(&x_test);
    let c = capacity(&predictions, &y_test)?;
    Ok(TaskResult {
        capacity: c,
        predictions,
        targets: y_test,
        train_rows: x_train.nrows(),
        test_rows: x_test.nrows(),
    })
}
