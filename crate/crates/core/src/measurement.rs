//! Weak and projective measurement machinery.
//!
//! A single-qubit indirect measurement of strength `g` along z is described by
//! the Kraus operator
//!
//! `Omega_V = (2 pi)^(-1/4) ( e^{-(V-g)^2/4} |0><0| + e^{-(V+g)^2/4} |1><1| )`,
//!
//! whose outcome `V` is distributed as a two-Gaussian mixture centered at
//! `+g` and `-g` with weights given by the measured populations. Measurements
//! along x and y are the same operator conjugated into the rotated frame.
//!
//! Averaging the conditional update over all outcomes leaves the element-wise
//! map `rho -> M (.) rho` in the measured frame, where `M` has entry
//! `exp(-g^2/2 * d(i, j))` and `d` is the Hamming distance between basis
//! indices: populations are untouched and every coherence decays by
//! `exp(-g^2/2)` per differing qubit.

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{
    rotate_from_measurement_frame, rotate_to_measurement_frame, Axis, DensityMatrix,
};
use crate::rng::CompensatedSum;
use crate::scalar::{scaled_tol, Real};

/// Whether an estimate targets a single-qubit or a two-qubit observable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservableOrder {
    Single,
    Pair,
}

impl ObservableOrder {
    pub fn index(self) -> u8 {
        match self {
            ObservableOrder::Single => 1,
            ObservableOrder::Pair => 2,
        }
    }
}

/// Number of experiment repetitions used to estimate expectation values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EnsembleSize {
    Finite(u64),
    Infinite,
}

impl EnsembleSize {
    pub fn finite(self) -> Option<u64> {
        match self {
            EnsembleSize::Finite(n) => Some(n),
            EnsembleSize::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, EnsembleSize::Infinite)
    }
}

impl std::fmt::Display for EnsembleSize {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EnsembleSize::Finite(n) => write!(f, "{n}"),
            EnsembleSize::Infinite => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for EnsembleSize {
    type Err = Error;

    /// Accepts `inf`, a non-negative integer, or an integral float such as
    /// `1.5e6`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") {
            return Ok(EnsembleSize::Infinite);
        }
        if let Ok(n) = t.parse::<u64>() {
            return Ok(EnsembleSize::Finite(n));
        }
        let x: f64 = t
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("unparseable ensemble size `{s}`")))?;
        if !(x.is_finite() && x >= 0.0 && x.fract() == 0.0 && x <= u64::MAX as f64) {
            return Err(Error::InvalidParameter(format!(
                "ensemble size `{s}` is not a non-negative integer or `inf`"
            )));
        }
        Ok(EnsembleSize::Finite(x as u64))
    }
}

/// Measurement configuration: strength and direction, applied to every qubit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasurementSpec<T: Real> {
    g: T,
    axis: Axis,
}

impl<T: Real> MeasurementSpec<T> {
    pub fn new(g: T, axis: Axis) -> Result<Self> {
        if g < T::zero() {
            return Err(Error::NegativeStrength(g.approx_f64()));
        }
        Ok(Self { g, axis })
    }

    pub fn strength(&self) -> T {
        self.g
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }
}

/// Per-qubit outcomes of one measurement round, tagged with the time step and
/// realization they belong to.
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeVector<T: Real> {
    values: Vec<T>,
    step: usize,
    realization: u64,
}

impl<T: Real> OutcomeVector<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self {
            values,
            step: 0,
            realization: 0,
        }
    }

    pub fn with_labels(mut self, step: usize, realization: u64) -> Self {
        self.step = step;
        self.realization = realization;
        self
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn realization(&self) -> u64 {
        self.realization
    }
}

// ---------------------------------------------------------------------------
// Kraus operators and outcome distributions
// ---------------------------------------------------------------------------

/// `(2 pi)^(-1/4)`.
fn gauss_quartic_norm<T: Real>() -> T {
    T::of((2.0 * std::f64::consts::PI).powf(-0.25))
}

/// The z-direction Kraus operator for outcome `v` at strength `g`.
pub fn kraus_z<T: Real>(v: T, g: T) -> Matrix2<Complex<T>> {
    let quarter = T::of(0.25);
    let norm = gauss_quartic_norm::<T>();
    let a0 = norm * (-(v - g) * (v - g) * quarter).exp();
    let a1 = norm * (-(v + g) * (v + g) * quarter).exp();
    let zero = Complex::new(T::zero(), T::zero());
    Matrix2::new(
        Complex::new(a0, T::zero()),
        zero,
        zero,
        Complex::new(a1, T::zero()),
    )
}

/// The 2x2 rotation mapping the `axis` eigenbasis onto the computational
/// basis: `H` for x, `H S†` for y, identity for z.
pub(crate) fn frame_rotation<T: Real>(axis: Axis) -> Matrix2<Complex<T>> {
    let s = T::of(std::f64::consts::FRAC_1_SQRT_2);
    let re = |x: T| Complex::new(x, T::zero());
    let im = |x: T| Complex::new(T::zero(), x);
    match axis {
        Axis::Z => Matrix2::identity(),
        Axis::X => Matrix2::new(re(s), re(s), re(s), re(-s)),
        Axis::Y => Matrix2::new(re(s), im(-s), re(s), im(s)),
    }
}

/// Kraus operator for outcome `v` measured along `axis`: the z operator
/// conjugated into the rotated frame (`R† Omega_V R`).
pub fn kraus_axis<T: Real>(v: T, g: T, axis: Axis) -> Matrix2<Complex<T>> {
    match axis {
        Axis::Z => kraus_z(v, g),
        _ => {
            let r = frame_rotation::<T>(axis);
            r.adjoint() * kraus_z(v, g) * r
        }
    }
}

/// Outcome distribution of a single-qubit measurement: the mixture
/// `w N(+g, 1) + (1 - w) N(-g, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutcomePdf<T: Real> {
    weight_plus: T,
    g: T,
}

impl<T: Real> OutcomePdf<T> {
    pub fn weight_plus(&self) -> T {
        self.weight_plus
    }

    pub fn density(&self, v: T) -> T {
        let inv_sqrt_2pi = T::of(1.0 / (2.0 * std::f64::consts::PI).sqrt());
        let half = T::of(0.5);
        let plus = (-(v - self.g) * (v - self.g) * half).exp();
        let minus = (-(v + self.g) * (v + self.g) * half).exp();
        inv_sqrt_2pi * (self.weight_plus * plus + (T::one() - self.weight_plus) * minus)
    }

    /// `<V> = g <sigma_axis>`.
    pub fn mean(&self) -> T {
        self.g * (T::of(2.0) * self.weight_plus - T::one())
    }

    /// `Var V = 1 + g^2 (1 - <sigma_axis>^2)`.
    pub fn variance(&self) -> T {
        let m = T::of(2.0) * self.weight_plus - T::one();
        T::one() + self.g * self.g * (T::one() - m * m)
    }
}

/// Outcome distribution for measuring the single-qubit state `omega` along
/// `axis` with strength `g`. The mixture weight is read off the state:
/// `omega_00` for z, `1/2 + Re omega_01` for x, `1/2 - Im omega_01` for y.
pub fn outcome_pdf<T: Real>(omega: &DensityMatrix<T>, g: T, axis: Axis) -> Result<OutcomePdf<T>> {
    if omega.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: omega.dim(),
        });
    }
    if g < T::zero() {
        return Err(Error::NegativeStrength(g.approx_f64()));
    }
    let m = omega.matrix();
    let half = T::of(0.5);
    let w = match axis {
        Axis::Z => m[(0, 0)].re,
        Axis::X => half + m[(0, 1)].re,
        Axis::Y => half - m[(0, 1)].im,
    };
    let tol = scaled_tol::<T>(1e-9, 2);
    if w < -tol || w > T::one() + tol {
        return Err(Error::InvalidOutcomeWeight {
            weight: w.approx_f64(),
        });
    }
    Ok(OutcomePdf {
        weight_plus: w.max(T::zero()).min(T::one()),
        g,
    })
}

// ---------------------------------------------------------------------------
// Trajectory sampling
// ---------------------------------------------------------------------------

/// Smallest admissible renormalization denominator; anything below signals a
/// numerically dead trajectory and aborts the realization rather than
/// renormalizing garbage.
const NORM_FLOOR: f64 = 1e-300;

/// Measure every qubit along the configured axis, drawing a joint outcome and
/// applying the conditional state update.
///
/// Qubits are sampled in ascending index from the conditional state left by
/// the previous collapses; same-axis Kraus operators on distinct qubits
/// commute, so the order only fixes the random-stream layout, not the joint
/// law. Mixture components are drawn by weight, then `V ~ N(±g, 1)`.
pub fn sample_outcomes_and_collapse<T: Real, R: Rng + ?Sized>(
    rho: &DensityMatrix<T>,
    spec: &MeasurementSpec<T>,
    rng: &mut R,
) -> Result<(DensityMatrix<T>, OutcomeVector<T>)> {
    let n = rho.num_qubits();
    let dim = rho.dim();
    let g = spec.strength();
    let quarter = T::of(0.25);
    let floor = T::of(NORM_FLOOR);

    let mut m = rho.matrix().clone();
    rotate_to_measurement_frame(&mut m, spec.axis());

    let mut outcomes = Vec::with_capacity(n);
    let mut trace = T::one();
    for q in 0..n {
        let hi_bit = n - 1 - q;

        // Conditional marginal population of |0> on this qubit.
        let mut pop0 = T::zero();
        for i in 0..dim {
            if (i >> hi_bit) & 1 == 0 {
                pop0 += m[(i, i)].re;
            }
        }
        let w_plus = pop0 / trace;
        let tol = scaled_tol::<T>(1e-9, dim);
        if w_plus < -tol || w_plus > T::one() + tol {
            return Err(Error::InvalidOutcomeWeight {
                weight: w_plus.approx_f64(),
            });
        }

        let u: f64 = rng.random();
        let noise: f64 = rng.sample(StandardNormal);
        let center = if T::of(u) < w_plus { g } else { -g };
        let v = center + T::of(noise);
        outcomes.push(v);

        // Conditional Kraus update. The common Gaussian normalization cancels
        // against the final renormalization, and the larger of the two
        // amplitudes is factored out so extreme outcomes cannot underflow
        // both branches at once.
        let e0 = -(v - g) * (v - g) * quarter;
        let e1 = -(v + g) * (v + g) * quarter;
        let shift = e0.max(e1);
        let f = [(e0 - shift).exp(), (e1 - shift).exp()];

        let data = m.as_mut_slice();
        for col in 0..dim {
            let fc = f[(col >> hi_bit) & 1];
            let base = col * dim;
            for row in 0..dim {
                let scale = f[(row >> hi_bit) & 1] * fc;
                data[base + row] *= scale;
            }
        }

        trace = T::zero();
        for i in 0..dim {
            trace += m[(i, i)].re;
        }
        if trace <= floor {
            return Err(Error::VanishingNorm {
                norm: trace.approx_f64(),
            });
        }
    }

    let inv = Complex::new(T::one() / trace, T::zero());
    m *= inv;
    rotate_from_measurement_frame(&mut m, spec.axis());

    Ok((DensityMatrix::new_unchecked(m), OutcomeVector::new(outcomes)))
}

// ---------------------------------------------------------------------------
// Ensemble back-action map
// ---------------------------------------------------------------------------

/// The element-wise decoherence factors of a full-register measurement:
/// entry `(i, j)` is `exp(-g^2/2 * d(i, j))` with `d` the Hamming distance
/// between basis indices, equivalently the N-fold tensor power of the
/// single-qubit factor matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct BackActionMatrix<T: Real> {
    g: T,
    /// `exp(-g^2/2)^d` indexed by Hamming distance `d`.
    powers: Vec<T>,
    data: DMatrix<T>,
}

impl<T: Real> BackActionMatrix<T> {
    pub fn new(n: usize, g: T) -> Result<Self> {
        if g < T::zero() {
            return Err(Error::NegativeStrength(g.approx_f64()));
        }
        if n == 0 || n > crate::quantum::MAX_QUBITS {
            return Err(Error::QubitCountOutOfRange(n, crate::quantum::MAX_QUBITS));
        }
        let dim = 1usize << n;
        let base = (-g * g * T::of(0.5)).exp();
        let mut powers = Vec::with_capacity(n + 1);
        let mut acc = T::one();
        for _ in 0..=n {
            powers.push(acc);
            acc *= base;
        }
        let data = DMatrix::from_fn(dim, dim, |i, j| powers[(i ^ j).count_ones() as usize]);
        Ok(Self { g, powers, data })
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn strength(&self) -> T {
        self.g
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.data
    }

    /// Element-wise product with the state in the measured frame.
    fn apply_in_frame(&self, m: &mut DMatrix<Complex<T>>) {
        let dim = self.data.nrows();
        let data = m.as_mut_slice();
        for col in 0..dim {
            let base = col * dim;
            for row in 0..dim {
                let factor = self.powers[(row ^ col).count_ones() as usize];
                data[base + row] *= factor;
            }
        }
    }
}

/// Exact infinite-ensemble post-measurement state: the element-wise
/// decoherence map applied in the measured frame. Trace and Hermiticity are
/// preserved; populations in the measured basis are untouched.
pub fn backaction_map<T: Real>(rho: &DensityMatrix<T>, g: T, axis: Axis) -> Result<DensityMatrix<T>> {
    let map = BackActionMatrix::new(rho.num_qubits(), g)?;
    Ok(backaction_map_with(rho, &map, axis))
}

/// [`backaction_map`] with a precomputed factor matrix, for iterated use.
pub fn backaction_map_with<T: Real>(
    rho: &DensityMatrix<T>,
    map: &BackActionMatrix<T>,
    axis: Axis,
) -> DensityMatrix<T> {
    debug_assert_eq!(rho.dim(), map.dim());
    let mut m = rho.matrix().clone();
    rotate_to_measurement_frame(&mut m, axis);
    map.apply_in_frame(&mut m);
    rotate_from_measurement_frame(&mut m, axis);
    DensityMatrix::new_unchecked(m)
}

// ---------------------------------------------------------------------------
// Estimators and uncertainty bounds
// ---------------------------------------------------------------------------

/// An observable estimate together with the nominal (state-independent upper
/// bound) statistical uncertainty for the strength and ensemble size used.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorReport<T: Real> {
    pub estimate: T,
    pub nominal_uncertainty: T,
    pub g: T,
    pub n_meas: u64,
    pub order: ObservableOrder,
}

/// Upper bound on the standard error of a single-qubit estimate:
/// `sqrt((g^2 + 1) / (g^2 N))`.
pub fn single_uncertainty_bound<T: Real>(g: T, n_meas: u64) -> T {
    let g2 = g * g;
    ((g2 + T::one()) / (g2 * T::of(n_meas as f64))).sqrt()
}

/// Upper bound on the standard error of a two-qubit estimate:
/// `sqrt((g^4 + 2 g^2 + 1) / (g^4 N))`.
pub fn pair_uncertainty_bound<T: Real>(g: T, n_meas: u64) -> T {
    let g2 = g * g;
    let g4 = g2 * g2;
    ((g4 + T::of(2.0) * g2 + T::one()) / (g4 * T::of(n_meas as f64))).sqrt()
}

/// State-dependent standard error of a single-qubit estimate,
/// `sqrt((1 + g^2 (1 - m^2)) / (g^2 N))` for expectation `m`; coincides with
/// the bound at `m = 0`.
pub fn single_uncertainty_state_dependent<T: Real>(g: T, n_meas: u64, expectation: T) -> T {
    let g2 = g * g;
    let spread = T::one() - expectation * expectation;
    ((T::one() + g2 * spread) / (g2 * T::of(n_meas as f64))).sqrt()
}

/// State-dependent standard error of a two-qubit estimate.
pub fn pair_uncertainty_state_dependent<T: Real>(g: T, n_meas: u64, expectation: T) -> T {
    let g2 = g * g;
    let g4 = g2 * g2;
    let spread = T::one() - expectation * expectation;
    ((T::one() + T::of(2.0) * g2 + g4 * spread) / (g4 * T::of(n_meas as f64))).sqrt()
}

pub fn uncertainty_bound<T: Real>(order: ObservableOrder, g: T, n_meas: u64) -> T {
    match order {
        ObservableOrder::Single => single_uncertainty_bound(g, n_meas),
        ObservableOrder::Pair => pair_uncertainty_bound(g, n_meas),
    }
}

fn mean<T: Real>(values: &[T]) -> T {
    let mut acc = CompensatedSum::new();
    for &v in values {
        acc.add(v);
    }
    acc.value() / T::of(values.len() as f64)
}

/// Estimate `<sigma_axis>` from raw outcomes of one qubit: `mean(V) / g`.
pub fn estimate_single<T: Real>(outcomes: &[T], g: T) -> Result<EstimatorReport<T>> {
    if g < T::zero() {
        return Err(Error::NegativeStrength(g.approx_f64()));
    }
    if g == T::zero() {
        return Err(Error::ZeroStrength);
    }
    if outcomes.is_empty() {
        return Err(Error::InvalidParameter("no outcomes".into()));
    }
    let n = outcomes.len() as u64;
    Ok(EstimatorReport {
        estimate: mean(outcomes) / g,
        nominal_uncertainty: single_uncertainty_bound(g, n),
        g,
        n_meas: n,
        order: ObservableOrder::Single,
    })
}

/// Estimate `<sigma_axis (x) sigma_axis>` from per-realization outcome
/// products: `mean(V_i V_j) / g^2`.
pub fn estimate_pair<T: Real>(outcome_products: &[T], g: T) -> Result<EstimatorReport<T>> {
    if g < T::zero() {
        return Err(Error::NegativeStrength(g.approx_f64()));
    }
    if g == T::zero() {
        return Err(Error::ZeroStrength);
    }
    if outcome_products.is_empty() {
        return Err(Error::InvalidParameter("no outcomes".into()));
    }
    let n = outcome_products.len() as u64;
    Ok(EstimatorReport {
        estimate: mean(outcome_products) / (g * g),
        nominal_uncertainty: pair_uncertainty_bound(g, n),
        g,
        n_meas: n,
        order: ObservableOrder::Pair,
    })
}

/// Emulate a finite-ensemble estimate by adding zero-mean Gaussian noise with
/// the nominal standard error to the exact expectation. Infinite ensembles
/// return the exact value.
pub fn gaussian_surrogate<T: Real, R: Rng + ?Sized>(
    ideal: T,
    g: T,
    n_meas: EnsembleSize,
    order: ObservableOrder,
    rng: &mut R,
) -> Result<T> {
    match n_meas {
        EnsembleSize::Infinite => Ok(ideal),
        EnsembleSize::Finite(n) => {
            if g <= T::zero() {
                return Err(Error::ZeroStrength);
            }
            let noise: f64 = rng.sample(StandardNormal);
            Ok(ideal + uncertainty_bound(order, g, n) * T::of(noise))
        }
    }
}

/// Ensemble size at strength `g` matching the statistical uncertainty of
/// `n_meas_prime` repetitions at strength `g_prime`, rounded up.
pub fn equivalent_measurements<T: Real>(
    g: T,
    g_prime: T,
    n_meas_prime: u64,
    order: ObservableOrder,
) -> Result<u64> {
    if g <= T::zero() || g_prime <= T::zero() {
        return Err(Error::ZeroStrength);
    }
    let ratio = match order {
        ObservableOrder::Single => {
            let g2 = g * g;
            let gp2 = g_prime * g_prime;
            ((T::one() + g2) * gp2) / ((T::one() + gp2) * g2)
        }
        ObservableOrder::Pair => {
            let g2 = g * g;
            let g4 = g2 * g2;
            let gp2 = g_prime * g_prime;
            let gp4 = gp2 * gp2;
            let two = T::of(2.0);
            ((T::one() + two * g2 + g4) * gp4) / ((T::one() + two * gp2 + gp4) * g4)
        }
    };
    let n = (ratio.approx_f64() * n_meas_prime as f64).ceil();
    if !n.is_finite() || n < 0.0 {
        return Err(Error::InvalidParameter("ensemble size overflow".into()));
    }
    Ok(n as u64)
}
