//! The three measurement protocols over an input sequence.
//!
//! * Restarting (RSP): the whole sequence is re-run from scratch for every
//!   output step, so recorded statistics are free of measurement back-action.
//! * Rewinding (RWP): like RSP, but only the last `N_wo` inputs are replayed
//!   from a reset state, exploiting the reservoir's fading memory.
//! * Online (OLP): the register is weakly measured at every step of a single
//!   continuous evolution; back-action accumulates in the state.
//!
//! RSP and RWP are evaluated against the unperturbed map, with finite-ensemble
//! statistics produced by the Gaussian surrogate (a literal low-`N_meas`
//! restart mode exists for validating that equivalence). The OLP supports full
//! trajectory sampling and the exact infinite-ensemble back-action evolution.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{
    backaction_map_with, gaussian_surrogate, pair_uncertainty_bound, sample_outcomes_and_collapse,
    single_uncertainty_bound, BackActionMatrix, EnsembleSize, MeasurementSpec, ObservableOrder,
};
use crate::quantum::{pauli_string, Axis, DensityMatrix, QubitOperator};
use crate::reservoir::{InputSample, ReservoirSpec};
use crate::rng::{stream, CompensatedSum};
use crate::scalar::Real;

/// Literal restart simulation is for validation only; larger ensembles must
/// use the Gaussian surrogate.
pub const MAX_LITERAL_RESTART_ENSEMBLE: u64 = 1_000;

/// Realizations per reduction block. Blocks are summed in index order, so the
/// result is identical for every worker count.
const REALIZATION_BLOCK: u64 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Rsp,
    Rwp,
    Olp,
}

impl Protocol {
    pub fn label(self) -> &'static str {
        match self {
            Protocol::Rsp => "rsp",
            Protocol::Rwp => "rwp",
            Protocol::Olp => "olp",
        }
    }

    fn stream_id(self) -> u64 {
        match self {
            Protocol::Rsp => 1,
            Protocol::Rwp => 2,
            Protocol::Olp => 3,
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// Sample explicit measurement outcomes realization by realization.
    Trajectory,
    /// Exact expectations plus Gaussian noise at the nominal standard error.
    GaussianSurrogate,
    /// Exact expectations of the unperturbed evolution.
    IdealUnperturbed,
    /// Exact expectations of the back-action evolution (infinite ensemble).
    IdealWithBackaction,
}

impl NoiseMode {
    pub fn label(self) -> &'static str {
        match self {
            NoiseMode::Trajectory => "trajectory",
            NoiseMode::GaussianSurrogate => "gaussian-surrogate",
            NoiseMode::IdealUnperturbed => "ideal-unperturbed",
            NoiseMode::IdealWithBackaction => "ideal-with-backaction",
        }
    }
}

impl std::fmt::Display for NoiseMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

// ---------------------------------------------------------------------------
// Observable sets
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderSelect {
    Order1,
    Order2,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ObservableTarget {
    Single(usize),
    Pair(usize, usize),
}

/// One readout column: a Pauli direction on one qubit or on a qubit pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ObservableLabel {
    pub axis: Axis,
    pub target: ObservableTarget,
}

impl ObservableLabel {
    pub fn order(&self) -> ObservableOrder {
        match self.target {
            ObservableTarget::Single(_) => ObservableOrder::Single,
            ObservableTarget::Pair(_, _) => ObservableOrder::Pair,
        }
    }
}

impl std::fmt::Display for ObservableLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.target {
            ObservableTarget::Single(q) => write!(f, "{}{}", self.axis, q),
            ObservableTarget::Pair(i, j) => write!(f, "{}{}{}{}", self.axis, i, self.axis, j),
        }
    }
}

/// Which observables feed the readout. Axes may be restricted; the canonical
/// order is kept regardless of how they were listed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservableSet {
    order: OrderSelect,
    axes: Vec<Axis>,
}

impl ObservableSet {
    pub fn new(order: OrderSelect, axes: &[Axis]) -> Result<Self> {
        let canonical: Vec<Axis> = Axis::ALL
            .iter()
            .copied()
            .filter(|a| axes.contains(a))
            .collect();
        if canonical.is_empty() {
            return Err(Error::InvalidParameter("observable set has no axes".into()));
        }
        Ok(Self {
            order,
            axes: canonical,
        })
    }

    pub fn all_axes(order: OrderSelect) -> Self {
        Self {
            order,
            axes: Axis::ALL.to_vec(),
        }
    }

    pub fn order(&self) -> OrderSelect {
        self.order
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    /// Column labels in the documented fixed order: all single-qubit columns
    /// (qubit-major, axes in x, y, z order), then all pair columns
    /// (pair-major over i < j, same axis order). This layout is what makes
    /// trained weight vectors portable across runs.
    pub fn labels(&self, n: usize) -> Vec<ObservableLabel> {
        let mut out = Vec::new();
        if matches!(self.order, OrderSelect::Order1 | OrderSelect::Both) {
            for q in 0..n {
                for &axis in &self.axes {
                    out.push(ObservableLabel {
                        axis,
                        target: ObservableTarget::Single(q),
                    });
                }
            }
        }
        if matches!(self.order, OrderSelect::Order2 | OrderSelect::Both) {
            for i in 0..n {
                for j in (i + 1)..n {
                    for &axis in &self.axes {
                        out.push(ObservableLabel {
                            axis,
                            target: ObservableTarget::Pair(i, j),
                        });
                    }
                }
            }
        }
        out
    }
}

fn build_operators<T: Real>(labels: &[ObservableLabel], n: usize) -> Result<Vec<QubitOperator<T>>> {
    labels
        .iter()
        .map(|label| match label.target {
            ObservableTarget::Single(q) => pauli_string(n, &[(q, label.axis)]),
            ObservableTarget::Pair(i, j) => pauli_string(n, &[(i, label.axis), (j, label.axis)]),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Run configuration and output series
// ---------------------------------------------------------------------------

/// Full description of one protocol execution.
#[derive(Clone, Debug)]
pub struct ProtocolRun<T: Real> {
    pub protocol: Protocol,
    pub n_meas: EnsembleSize,
    pub n_wo: usize,
    pub noise_mode: NoiseMode,
    pub g: T,
    pub observables: ObservableSet,
    pub seed: u64,
}

impl<T: Real> ProtocolRun<T> {
    pub fn validate(&self) -> Result<()> {
        if self.g < T::zero() {
            return Err(Error::NegativeStrength(self.g.approx_f64()));
        }
        match self.protocol {
            Protocol::Rsp | Protocol::Rwp => match self.noise_mode {
                NoiseMode::IdealUnperturbed | NoiseMode::GaussianSurrogate => {}
                NoiseMode::IdealWithBackaction => {
                    return Err(Error::UnsupportedNoiseMode {
                        protocol: self.protocol.label(),
                        mode: self.noise_mode.label(),
                        reason: "reset protocols are defined on the unperturbed evolution".into(),
                    });
                }
                NoiseMode::Trajectory => match self.n_meas {
                    EnsembleSize::Finite(n) if n <= MAX_LITERAL_RESTART_ENSEMBLE => {}
                    _ => {
                        return Err(Error::UnsupportedNoiseMode {
                            protocol: self.protocol.label(),
                            mode: self.noise_mode.label(),
                            reason: format!(
                                "literal restart simulation is limited to N_meas <= {MAX_LITERAL_RESTART_ENSEMBLE} \
                                 (validation only); use the Gaussian surrogate for realistic ensembles"
                            ),
                        });
                    }
                },
            },
            Protocol::Olp => match self.noise_mode {
                NoiseMode::IdealWithBackaction => {}
                NoiseMode::Trajectory | NoiseMode::GaussianSurrogate => {
                    if self.noise_mode == NoiseMode::Trajectory && self.n_meas.is_infinite() {
                        return Err(Error::UnsupportedNoiseMode {
                            protocol: "olp",
                            mode: "trajectory",
                            reason: "trajectory sampling needs a finite ensemble; use \
                                     ideal-with-backaction for the infinite limit"
                                .into(),
                        });
                    }
                    if self.g <= T::zero() && self.n_meas.finite().is_some() {
                        return Err(Error::ZeroStrength);
                    }
                }
                NoiseMode::IdealUnperturbed => {
                    return Err(Error::UnsupportedNoiseMode {
                        protocol: "olp",
                        mode: "ideal-unperturbed",
                        reason: "online monitoring always carries back-action; \
                                 use ideal-with-backaction"
                            .into(),
                    });
                }
            },
        }
        // Finite-ensemble surrogate noise needs an informative measurement.
        if self.noise_mode == NoiseMode::GaussianSurrogate
            && self.n_meas.finite().is_some()
            && self.g <= T::zero()
        {
            return Err(Error::ZeroStrength);
        }
        Ok(())
    }
}

/// Per-step observable estimates (rows: post-washout steps, columns: the
/// fixed label order) with companion nominal uncertainties.
#[derive(Clone, Debug)]
pub struct ObservableSeries<T: Real> {
    first_step: usize,
    labels: Vec<ObservableLabel>,
    estimates: DMatrix<T>,
    uncertainties: DMatrix<T>,
}

impl<T: Real> ObservableSeries<T> {
    fn new(
        first_step: usize,
        labels: Vec<ObservableLabel>,
        estimates: DMatrix<T>,
        uncertainties: DMatrix<T>,
    ) -> Result<Self> {
        if estimates.nrows() == 0 {
            return Err(Error::InvalidParameter("no output steps".into()));
        }
        if estimates.iter().any(|x| !x.approx_f64().is_finite()) {
            return Err(Error::InvalidParameter(
                "non-finite observable estimate".into(),
            ));
        }
        Ok(Self {
            first_step,
            labels,
            estimates,
            uncertainties,
        })
    }

    /// Time-step index (1-based) of the first row.
    pub fn first_step(&self) -> usize {
        self.first_step
    }

    pub fn num_steps(&self) -> usize {
        self.estimates.nrows()
    }

    pub fn num_observables(&self) -> usize {
        self.estimates.ncols()
    }

    pub fn labels(&self) -> &[ObservableLabel] {
        &self.labels
    }

    pub fn estimates(&self) -> &DMatrix<T> {
        &self.estimates
    }

    pub fn uncertainties(&self) -> &DMatrix<T> {
        &self.uncertainties
    }

    /// Row index holding time step `k`, if it is in range.
    pub fn row_for_step(&self, k: usize) -> Option<usize> {
        k.checked_sub(self.first_step)
            .filter(|&r| r < self.num_steps())
    }
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

fn exact_row<T: Real>(
    state: &DensityMatrix<T>,
    operators: &[QubitOperator<T>],
    row: &mut [T],
) -> Result<()> {
    for (slot, op) in row.iter_mut().zip(operators) {
        *slot = state.expectation(op)?;
    }
    Ok(())
}

/// Draw `n_meas` outcome vectors from a fixed state and fold them into
/// single and pair estimates for the given axis columns. Used by the literal
/// restart modes where every ensemble member measures the same state once.
fn sampled_row_at_state<T: Real>(
    state: &DensityMatrix<T>,
    axis: Axis,
    g: T,
    n_meas: u64,
    seed: u64,
    stream_ids: (u64, u64, u64),
) -> Result<(Vec<T>, Vec<T>)> {
    let n = state.num_qubits();
    let spec = MeasurementSpec::new(g, axis)?;
    let n_pairs = n * (n - 1) / 2;
    let mut singles = vec![CompensatedSum::<T>::new(); n];
    let mut pairs = vec![CompensatedSum::<T>::new(); n_pairs];
    let (protocol_id, axis_id, step_id) = stream_ids;
    for l in 0..n_meas {
        let mut rng = stream(seed, "restart-traj", &[protocol_id, axis_id, step_id, l]);
        let (_, outcomes) = sample_outcomes_and_collapse(state, &spec, &mut rng)?;
        let v = outcomes.values();
        for q in 0..n {
            singles[q].add(v[q]);
        }
        let mut p = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                pairs[p].add(v[i] * v[j]);
                p += 1;
            }
        }
    }
    let count = T::of(n_meas as f64);
    let single_estimates = singles
        .iter()
        .map(|s| s.value() / (count * g))
        .collect();
    let pair_estimates = pairs
        .iter()
        .map(|s| s.value() / (count * g * g))
        .collect();
    Ok((single_estimates, pair_estimates))
}

/// Canonical initial (and rewind reset) state: maximally mixed.
///
/// The driven reservoir contracts quickly between generic mixed states, so a
/// washout of a few tens of steps erases this choice. Strongly polarized pure
/// states are a slow corner of this model (the field nearly conserves total
/// magnetization, which only the input qubit can change), so they are not
/// used as defaults.
pub fn initial_state<T: Real>(n: usize) -> Result<DensityMatrix<T>> {
    DensityMatrix::maximally_mixed(n)
}

fn axis_id(axis: Axis) -> u64 {
    match axis {
        Axis::X => 0,
        Axis::Y => 1,
        Axis::Z => 2,
    }
}

/// Column index paired with its qubit (singles) or pair rank (pairs).
type AxisColumns = Vec<(usize, usize)>;

/// Column indices of `labels` measured along `axis`, split into single-qubit
/// (paired with the qubit) and two-qubit (paired with the pair rank) columns.
fn axis_columns(labels: &[ObservableLabel], axis: Axis, n: usize) -> (AxisColumns, AxisColumns) {
    let pair_rank = |i: usize, j: usize| -> usize {
        // rank of (i, j), i < j, in lexicographic order
        let mut r = 0;
        for a in 0..i {
            r += n - 1 - a;
        }
        r + (j - i - 1)
    };
    let mut singles = Vec::new();
    let mut pairs = Vec::new();
    for (col, label) in labels.iter().enumerate() {
        if label.axis != axis {
            continue;
        }
        match label.target {
            ObservableTarget::Single(q) => singles.push((col, q)),
            ObservableTarget::Pair(i, j) => pairs.push((col, pair_rank(i, j))),
        }
    }
    (singles, pairs)
}

fn apply_surrogate_noise<T: Real>(
    estimates: &mut DMatrix<T>,
    uncertainties: &mut DMatrix<T>,
    labels: &[ObservableLabel],
    run: &ProtocolRun<T>,
) -> Result<()> {
    let EnsembleSize::Finite(n_meas) = run.n_meas else {
        return Ok(());
    };
    let first_step = run.n_wo + 1;
    for row in 0..estimates.nrows() {
        let k = (first_step + row) as u64;
        let mut rng = stream(run.seed, "surrogate", &[run.protocol.stream_id(), k]);
        for (col, label) in labels.iter().enumerate() {
            let order = label.order();
            let noisy = gaussian_surrogate(estimates[(row, col)], run.g, run.n_meas, order, &mut rng)?;
            estimates[(row, col)] = noisy;
            uncertainties[(row, col)] = match order {
                ObservableOrder::Single => single_uncertainty_bound(run.g, n_meas),
                ObservableOrder::Pair => pair_uncertainty_bound(run.g, n_meas),
            };
        }
    }
    Ok(())
}

fn check_run_shape<T: Real>(
    res: &ReservoirSpec<T>,
    inputs: &[InputSample<T>],
    run: &ProtocolRun<T>,
) -> Result<usize> {
    run.validate()?;
    let n_t = inputs.len();
    if n_t <= run.n_wo {
        return Err(Error::InvalidParameter(format!(
            "need more than N_wo = {} input steps, got {n_t}",
            run.n_wo
        )));
    }
    let _ = res;
    Ok(n_t)
}

// ---------------------------------------------------------------------------
// Restarting protocol
// ---------------------------------------------------------------------------

/// Run the restarting protocol. Restarted evolutions share their prefix with
/// the full unperturbed trajectory, so the per-step states are computed in a
/// single pass.
pub fn run_rsp<T: Real>(
    res: &ReservoirSpec<T>,
    inputs: &[InputSample<T>],
    run: &ProtocolRun<T>,
) -> Result<ObservableSeries<T>> {
    if run.protocol != Protocol::Rsp {
        return Err(Error::InvalidParameter("run is not configured for rsp".into()));
    }
    run_reset_protocol(res, inputs, run, None)
}

/// Run the rewinding protocol with the canonical (maximally mixed) reset
/// state.
pub fn run_rwp<T: Real>(
    res: &ReservoirSpec<T>,
    inputs: &[InputSample<T>],
    run: &ProtocolRun<T>,
) -> Result<ObservableSeries<T>> {
    let reset = initial_state(res.num_qubits())?;
    run_rwp_with_reset(res, inputs, run, &reset)
}

/// Rewinding protocol with an explicit reset state. Among generic mixed
/// states the choice is irrelevant once the window exceeds the convergence
/// time (the reset-insensitivity check verifies this); see [`initial_state`]
/// for why strongly polarized pure resets are not a good idea here.
pub fn run_rwp_with_reset<T: Real>(
    res: &ReservoirSpec<T>,
    inputs: &[InputSample<T>],
    run: &ProtocolRun<T>,
    reset: &DensityMatrix<T>,
) -> Result<ObservableSeries<T>> {
    if run.protocol != Protocol::Rwp {
        return Err(Error::InvalidParameter("run is not configured for rwp".into()));
    }
    run_reset_protocol(res, inputs, run, Some(reset))
}

/// The state replayed by the rewinding protocol for output step `k`
/// (1-based): reset, then apply the last `min(window, k)` inputs.
pub fn rwp_state<T: Real>(
    res: &ReservoirSpec<T>,
    inputs: &[InputSample<T>],
    k: usize,
    window: usize,
    reset: &DensityMatrix<T>,
) -> Result<DensityMatrix<T>> {
    if k == 0 || k > inputs.len() {
        return Err(Error::InvalidParameter(format!(
            "step {k} outside input range 1..={}",
            inputs.len()
        )));
    }
    let start = k.saturating_sub(window); // 0-based index of first replayed input
    let mut state = reset.clone();
    for x in &inputs[start..k] {
        state = res.step_unperturbed(&state, *x)?;
    }
    Ok(state)
}

/// Common implementation of RSP (`rewind = None`) and RWP.
fn run_reset_protocol<T: Real>(
    res: &ReservoirSpec<T>,
    inputs: &[InputSample<T>],
    run: &ProtocolRun<T>,
    rewind_reset: Option<&DensityMatrix<T>>,
) -> Result<ObservableSeries<T>> {
    let n_t = check_run_shape(res, inputs, run)?;
    let n = res.num_qubits();
    let labels = run.observables.labels(n);
    let operators = build_operators::<T>(&labels, n)?;
    let rows = n_t - run.n_wo;
    let first_step = run.n_wo + 1;

    let states: Vec<DensityMatrix<T>> = match rewind_reset {
        None => {
            let mut state = initial_state(n)?;
            let mut states = Vec::with_capacity(rows);
            for (ix, x) in inputs.iter().enumerate() {
                state = res.step_unperturbed(&state, *x)?;
                if ix + 1 > run.n_wo {
                    states.push(state.clone());
                }
            }
            states
        }
        Some(reset) => (0..rows)
            .into_par_iter()
            .map(|row| rwp_state(res, inputs, first_step + row, run.n_wo, reset))
            .collect::<Result<Vec<_>>>()?,
    };

    let mut estimates = DMatrix::zeros(rows, labels.len());
    let mut uncertainties = DMatrix::zeros(rows, labels.len());

    match run.noise_mode {
        NoiseMode::IdealUnperturbed | NoiseMode::GaussianSurrogate => {
            for (row, state) in states.iter().enumerate() {
                let mut buffer = vec![T::zero(); labels.len()];
                exact_row(state, &operators, &mut buffer)?;
                for (col, v) in buffer.into_iter().enumerate() {
                    estimates[(row, col)] = v;
                }
            }
            if run.noise_mode == NoiseMode::GaussianSurrogate {
                apply_surrogate_noise(&mut estimates, &mut uncertainties, &labels, run)?;
            }
        }
        NoiseMode::Trajectory => {
            let n_meas = run.n_meas.finite().expect("validated finite");
            let results: Vec<_> = states
                .par_iter()
                .enumerate()
                .map(|(row, state)| -> Result<_> {
                    let mut per_axis = Vec::new();
                    for &axis in run.observables.axes() {
                        let ids = (run.protocol.stream_id(), axis_id(axis), (first_step + row) as u64);
                        per_axis.push((
                            axis,
                            sampled_row_at_state(state, axis, run.g, n_meas, run.seed, ids)?,
                        ));
                    }
                    Ok((row, per_axis))
                })
                .collect::<Result<Vec<_>>>()?;
            for (row, per_axis) in results {
                for (axis, (single_vals, pair_vals)) in per_axis {
                    let (single_cols, pair_cols) = axis_columns(&labels, axis, n);
                    for (col, q) in single_cols {
                        estimates[(row, col)] = single_vals[q];
                        uncertainties[(row, col)] = single_uncertainty_bound(run.g, n_meas);
                    }
                    for (col, rank) in pair_cols {
                        estimates[(row, col)] = pair_vals[rank];
                        uncertainties[(row, col)] = pair_uncertainty_bound(run.g, n_meas);
                    }
                }
            }
        }
        NoiseMode::IdealWithBackaction => unreachable!("rejected by validate"),
    }

    ObservableSeries::new(first_step, labels, estimates, uncertainties)
}

// ---------------------------------------------------------------------------
// Online protocol
// ---------------------------------------------------------------------------

/// Run the online protocol. One independent ensemble (or exact evolution) per
/// axis in the observable set; two-qubit estimates reuse the same outcome
/// vectors as the single-qubit ones within an axis ensemble.
pub fn run_olp<T: Real>(
    res: &ReservoirSpec<T>,
    inputs: &[InputSample<T>],
    run: &ProtocolRun<T>,
) -> Result<ObservableSeries<T>> {
    if run.protocol != Protocol::Olp {
        return Err(Error::InvalidParameter("run is not configured for olp".into()));
    }
    let n_t = check_run_shape(res, inputs, run)?;
    let n = res.num_qubits();
    let labels = run.observables.labels(n);
    let rows = n_t - run.n_wo;
    let first_step = run.n_wo + 1;

    let mut estimates = DMatrix::zeros(rows, labels.len());
    let mut uncertainties = DMatrix::zeros(rows, labels.len());

    match run.noise_mode {
        NoiseMode::IdealWithBackaction | NoiseMode::GaussianSurrogate => {
            let operators = build_operators::<T>(&labels, n)?;
            let map = BackActionMatrix::new(n, run.g)?;
            for &axis in run.observables.axes() {
                let (single_cols, pair_cols) = axis_columns(&labels, axis, n);
                let columns: Vec<usize> = single_cols
                    .iter()
                    .map(|&(c, _)| c)
                    .chain(pair_cols.iter().map(|&(c, _)| c))
                    .collect();
                let mut state = initial_state(n)?;
                for (ix, x) in inputs.iter().enumerate() {
                    state = backaction_map_with(&res.step_unperturbed(&state, *x)?, &map, axis);
                    if ix + 1 > run.n_wo {
                        let row = ix + 1 - first_step;
                        for &col in &columns {
                            estimates[(row, col)] = state.expectation(&operators[col])?;
                        }
                    }
                }
            }
            if run.noise_mode == NoiseMode::GaussianSurrogate {
                apply_surrogate_noise(&mut estimates, &mut uncertainties, &labels, run)?;
            }
        }
        NoiseMode::Trajectory => {
            let n_meas = run.n_meas.finite().expect("validated finite");
            for &axis in run.observables.axes() {
                let sums = trajectory_axis_sums(res, inputs, run, axis, n_meas)?;
                let (single_cols, pair_cols) = axis_columns(&labels, axis, n);
                let count = T::of(n_meas as f64);
                for row in 0..rows {
                    for &(col, q) in &single_cols {
                        estimates[(row, col)] = sums.single(row, q) / (count * run.g);
                        uncertainties[(row, col)] = single_uncertainty_bound(run.g, n_meas);
                    }
                    for &(col, rank) in &pair_cols {
                        estimates[(row, col)] =
                            sums.pair(row, rank) / (count * run.g * run.g);
                        uncertainties[(row, col)] = pair_uncertainty_bound(run.g, n_meas);
                    }
                }
            }
        }
        NoiseMode::IdealUnperturbed => unreachable!("rejected by validate"),
    }

    ObservableSeries::new(first_step, labels, estimates, uncertainties)
}

/// Accumulated outcome sums for one axis ensemble: per post-washout step, the
/// per-qubit sums of `V` and per-pair sums of `V_i V_j`.
struct AxisSums<T: Real> {
    n: usize,
    singles: Vec<T>,
    pairs: Vec<T>,
}

impl<T: Real> AxisSums<T> {
    fn single(&self, row: usize, q: usize) -> T {
        self.singles[row * self.n + q]
    }

    fn pair(&self, row: usize, rank: usize) -> T {
        let n_pairs = self.n * (self.n - 1) / 2;
        self.pairs[row * n_pairs + rank]
    }
}

fn trajectory_axis_sums<T: Real>(
    res: &ReservoirSpec<T>,
    inputs: &[InputSample<T>],
    run: &ProtocolRun<T>,
    axis: Axis,
    n_meas: u64,
) -> Result<AxisSums<T>> {
    let n = res.num_qubits();
    let n_pairs = n * (n - 1) / 2;
    let rows = inputs.len() - run.n_wo;
    let spec = MeasurementSpec::new(run.g, axis)?;
    let n_blocks = n_meas.div_ceil(REALIZATION_BLOCK);

    // Each block accumulates a fixed slice of realizations sequentially; the
    // ordered fold over blocks below makes the reduction independent of how
    // rayon schedules them.
    let block_sums: Vec<(Vec<T>, Vec<T>)> = (0..n_blocks)
        .into_par_iter()
        .map(|block| -> Result<(Vec<T>, Vec<T>)> {
            let lo = block * REALIZATION_BLOCK;
            let hi = ((block + 1) * REALIZATION_BLOCK).min(n_meas);
            let mut singles = vec![CompensatedSum::<T>::new(); rows * n];
            let mut pairs = vec![CompensatedSum::<T>::new(); rows * n_pairs];
            for l in lo..hi {
                let mut rng = stream(run.seed, "olp-traj", &[axis_id(axis), l]);
                let mut state = initial_state(n)?;
                for (ix, x) in inputs.iter().enumerate() {
                    state = res.step_unperturbed(&state, *x)?;
                    let (collapsed, outcomes) =
                        sample_outcomes_and_collapse(&state, &spec, &mut rng)?;
                    state = collapsed;
                    if ix + 1 > run.n_wo {
                        let row = ix - run.n_wo;
                        let v = outcomes.values();
                        for q in 0..n {
                            singles[row * n + q].add(v[q]);
                        }
                        let mut p = 0;
                        for i in 0..n {
                            for j in (i + 1)..n {
                                pairs[row * n_pairs + p].add(v[i] * v[j]);
                                p += 1;
                            }
                        }
                    }
                }
            }
            Ok((
                singles.iter().map(|s| s.value()).collect(),
                pairs.iter().map(|s| s.value()).collect(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut singles = vec![CompensatedSum::<T>::new(); rows * n];
    let mut pairs = vec![CompensatedSum::<T>::new(); rows * n_pairs];
    for (block_singles, block_pairs) in block_sums {
        for (acc, v) in singles.iter_mut().zip(block_singles) {
            acc.add(v);
        }
        for (acc, v) in pairs.iter_mut().zip(block_pairs) {
            acc.add(v);
        }
    }
    Ok(AxisSums {
        n,
        singles: singles.iter().map(|s| s.value()).collect(),
        pairs: pairs.iter().map(|s| s.value()).collect(),
    })
}

/// Dispatch on the configured protocol.
pub fn run_protocol<T: Real>(
    res: &ReservoirSpec<T>,
    inputs: &[InputSample<T>],
    run: &ProtocolRun<T>,
) -> Result<ObservableSeries<T>> {
    match run.protocol {
        Protocol::Rsp => run_rsp(res, inputs, run),
        Protocol::Rwp => run_rwp(res, inputs, run),
        Protocol::Olp => run_olp(res, inputs, run),
    }
}

// ---------------------------------------------------------------------------
// Resource accounting
// ---------------------------------------------------------------------------

/// Experiment-time parameters: per-step, measurement and reset durations plus
/// the sequence bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResourceParams<T: Real> {
    pub tau_m: T,
    pub tau_r: T,
    pub dt: T,
    pub n_t: usize,
    pub n_wo: usize,
    pub n_meas: EnsembleSize,
}

impl<T: Real> ResourceParams<T> {
    pub fn validate(&self) -> Result<()> {
        if self.tau_m < T::zero() || self.tau_r < T::zero() || self.dt < T::zero() {
            return Err(Error::InvalidParameter("durations must be >= 0".into()));
        }
        if self.n_t <= self.n_wo {
            return Err(Error::InvalidParameter(
                "need at least one post-washout step".into(),
            ));
        }
        Ok(())
    }

    pub fn n_f(&self) -> usize {
        self.n_t - self.n_wo
    }
}

/// Total wall time of an experiment under the given protocol. The factor 3
/// accounts for the disjoint x, y and z ensembles.
pub fn experimental_time<T: Real>(protocol: Protocol, p: &ResourceParams<T>) -> Result<T> {
    p.validate()?;
    let n_meas = p.n_meas.finite().ok_or(Error::InfiniteEnsemble)?;
    let reps = T::of(3.0) * T::of(n_meas as f64);
    let n_f = T::of(p.n_f() as f64);
    let tau_wo = T::of(p.n_wo as f64) * p.dt;
    let olp = reps * (tau_wo + (p.dt + p.tau_m) * n_f);
    let rwp = reps * (tau_wo + (tau_wo + p.tau_r + p.tau_m) * n_f);
    Ok(match protocol {
        Protocol::Olp => olp,
        Protocol::Rwp => rwp,
        Protocol::Rsp => {
            let half = T::of(0.5);
            rwp + reps * (half * n_f * (n_f + T::one()) * p.dt)
        }
    })
}

/// Minimum measurement strength for which online processing beats rewinding
/// at equal statistical uncertainty: `sqrt(1 / (N_wo - 1))` for single-qubit
/// observables, `sqrt(1 / (sqrt(N_wo) - 1))` for two-qubit ones.
pub fn g_threshold<T: Real>(n_wo: usize, order: ObservableOrder) -> Result<T> {
    let n = T::of(n_wo as f64);
    let denominator = match order {
        ObservableOrder::Single => n - T::one(),
        ObservableOrder::Pair => n.sqrt() - T::one(),
    };
    if denominator <= T::zero() {
        return Err(Error::ThresholdUndefined(n_wo));
    }
    Ok((T::one() / denominator).sqrt())
}
