//! Dense complex linear algebra specialized to multi-qubit operators: Pauli
//! strings, partial trace, Hermitian matrix exponentials and state validity
//! checks.
//!
//! Basis convention: qubit 0 is the most significant bit of the computational
//! basis index, so an `N`-qubit operator factors as
//! `op(qubit 0) ⊗ op(qubit 1) ⊗ ... ⊗ op(qubit N-1)` and the first qubit is
//! the outer 2x2 block structure of the matrix.

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cnorm, scaled_tol, Real};

/// Hard cap on the register size; dense storage grows as `4^N`.
pub const MAX_QUBITS: usize = 12;

/// Measurement / Pauli direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn label(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            other => Err(Error::InvalidParameter(format!("unknown axis `{other}`"))),
        }
    }
}

/// The 2x2 Pauli matrix along `axis`.
pub fn pauli_matrix<T: Real>(axis: Axis) -> Matrix2<Complex<T>> {
    let zero = Complex::new(T::zero(), T::zero());
    let one = Complex::new(T::one(), T::zero());
    let i = Complex::new(T::zero(), T::one());
    match axis {
        Axis::X => Matrix2::new(zero, one, one, zero),
        Axis::Y => Matrix2::new(zero, -i, i, zero),
        Axis::Z => Matrix2::new(one, zero, zero, -one),
    }
}

fn num_qubits_of_dim(dim: usize) -> Result<usize> {
    if dim < 2 || !dim.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(dim));
    }
    let n = dim.trailing_zeros() as usize;
    if n > MAX_QUBITS {
        return Err(Error::QubitCountOutOfRange(n, MAX_QUBITS));
    }
    Ok(n)
}

fn check_square<T: Real>(m: &DMatrix<Complex<T>>) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    num_qubits_of_dim(m.nrows())?;
    Ok(m.nrows())
}

fn hermiticity_deviation<T: Real>(m: &DMatrix<Complex<T>>) -> T {
    let d = m.nrows();
    let mut worst = T::zero();
    for j in 0..d {
        for i in 0..=j {
            let dev = cnorm(m[(i, j)] - m[(j, i)].conj());
            if dev > worst {
                worst = dev;
            }
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// Density matrices
// ---------------------------------------------------------------------------

/// A multi-qubit mixed state: Hermitian, unit trace, positive semidefinite.
///
/// Values are immutable after construction; operations return fresh states.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix<T: Real> {
    pub(crate) data: DMatrix<Complex<T>>,
}

impl<T: Real> DensityMatrix<T> {
    /// Build from a raw matrix, checking unit trace and Hermiticity.
    /// Positivity is checked separately via [`DensityMatrix::validate`]
    /// because it requires an eigendecomposition.
    pub fn new(data: DMatrix<Complex<T>>) -> Result<Self> {
        let dim = check_square(&data)?;
        let tol = scaled_tol::<T>(1e-10, dim);
        let trace_dev = cnorm(trace(&data) - Complex::new(T::one(), T::zero()));
        if trace_dev > tol {
            return Err(Error::TraceNotUnit {
                deviation: trace_dev.approx_f64(),
            });
        }
        let herm_dev = hermiticity_deviation(&data);
        if herm_dev > tol {
            return Err(Error::NotHermitian {
                deviation: herm_dev.approx_f64(),
            });
        }
        Ok(Self { data })
    }

    /// Construct without invariant checks; callers guarantee validity.
    pub(crate) fn new_unchecked(data: DMatrix<Complex<T>>) -> Self {
        Self { data }
    }

    /// The pure state |0...0><0...0| on `n` qubits.
    pub fn ground(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS {
            return Err(Error::QubitCountOutOfRange(n, MAX_QUBITS));
        }
        let dim = 1usize << n;
        let mut data = DMatrix::zeros(dim, dim);
        data[(0, 0)] = Complex::new(T::one(), T::zero());
        Ok(Self { data })
    }

    /// The maximally mixed state I/2^n.
    pub fn maximally_mixed(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS {
            return Err(Error::QubitCountOutOfRange(n, MAX_QUBITS));
        }
        let dim = 1usize << n;
        let p = Complex::new(T::one() / T::of(dim as f64), T::zero());
        Ok(Self {
            data: DMatrix::from_diagonal_element(dim, dim, p),
        })
    }

    /// Rank-1 projector |psi><psi| from (unnormalized) amplitudes.
    pub fn from_pure(amplitudes: &[Complex<T>]) -> Result<Self> {
        let dim = amplitudes.len();
        num_qubits_of_dim(dim)?;
        let norm_sq: T = amplitudes.iter().map(|a| a.norm_sqr()).fold(T::zero(), |s, x| s + x);
        if norm_sq <= T::zero() {
            return Err(Error::InvalidParameter("zero state vector".into()));
        }
        let data = DMatrix::from_fn(dim, dim, |i, j| {
            amplitudes[i] * amplitudes[j].conj() / Complex::new(norm_sq, T::zero())
        });
        Ok(Self { data })
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn num_qubits(&self) -> usize {
        self.data.nrows().trailing_zeros() as usize
    }

    pub fn matrix(&self) -> &DMatrix<Complex<T>> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<Complex<T>> {
        self.data
    }

    pub fn trace(&self) -> Complex<T> {
        trace(&self.data)
    }

    /// Full invariant check. With `check_psd` the eigenvalues are computed and
    /// required to be above `-1e-9`; this is the expensive part and is kept
    /// out of the trajectory inner loops.
    pub fn validate(&self, check_psd: bool) -> Result<()> {
        let dim = self.dim();
        let tol = scaled_tol::<T>(1e-10, dim);
        let trace_dev = cnorm(self.trace() - Complex::new(T::one(), T::zero()));
        if trace_dev > tol {
            return Err(Error::TraceNotUnit {
                deviation: trace_dev.approx_f64(),
            });
        }
        let herm_dev = hermiticity_deviation(&self.data);
        if herm_dev > tol {
            return Err(Error::NotHermitian {
                deviation: herm_dev.approx_f64(),
            });
        }
        if check_psd {
            let eigs = self.data.clone().symmetric_eigenvalues();
            let floor = -scaled_tol::<T>(1e-9, dim);
            for lambda in eigs.iter() {
                if *lambda < floor {
                    return Err(Error::NotPositiveSemidefinite {
                        eigenvalue: lambda.approx_f64(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Expectation value Tr(O rho) of a Hermitian observable.
    pub fn expectation(&self, op: &QubitOperator<T>) -> Result<T> {
        if op.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: op.dim(),
            });
        }
        if !op.is_hermitian() {
            return Err(Error::InvalidParameter(
                "expectation values need a Hermitian observable".into(),
            ));
        }
        let mut acc = Complex::new(T::zero(), T::zero());
        for j in 0..self.dim() {
            for i in 0..self.dim() {
                acc += op.data[(i, j)] * self.data[(j, i)];
            }
        }
        let tol = scaled_tol::<T>(1e-9, self.dim());
        if acc.im.abs() > tol {
            return Err(Error::ImaginaryResidue {
                residue: acc.im.approx_f64(),
            });
        }
        Ok(acc.re)
    }

    /// Trace distance (1/2)·Tr|rho - sigma| via the eigenvalues of the
    /// Hermitian difference.
    pub fn trace_distance(&self, other: &Self) -> Result<T> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        let diff = &self.data - &other.data;
        let eigs = diff.symmetric_eigenvalues();
        let half = T::of(0.5);
        Ok(eigs.iter().fold(T::zero(), |s, l| s + l.abs()) * half)
    }
}

/// Trace of a square matrix.
pub(crate) fn trace<T: Real>(m: &DMatrix<Complex<T>>) -> Complex<T> {
    let mut acc = Complex::new(T::zero(), T::zero());
    for i in 0..m.nrows() {
        acc += m[(i, i)];
    }
    acc
}

/// A mixed state drawn from the Ginibre ensemble: `G G† / Tr(G G†)` with
/// i.i.d. complex Gaussian entries. Full rank almost surely.
pub fn random_density_matrix<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<DensityMatrix<T>> {
    if n == 0 || n > MAX_QUBITS {
        return Err(Error::QubitCountOutOfRange(n, MAX_QUBITS));
    }
    let dim = 1usize << n;
    // Draws are taken at f64 precision regardless of T so that a given stream
    // yields the same state in every instantiation.
    let g = DMatrix::from_fn(dim, dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex::new(T::of(re), T::of(im))
    });
    let mut rho = &g * g.adjoint();
    let t = trace(&rho).re;
    rho /= Complex::new(t, T::zero());
    // Symmetrize away the last bits of rounding noise.
    let rho_h = rho.adjoint();
    let half = Complex::new(T::of(0.5), T::zero());
    Ok(DensityMatrix::new_unchecked((rho + rho_h) * half))
}

// ---------------------------------------------------------------------------
// Observables
// ---------------------------------------------------------------------------

/// A dense multi-qubit operator, optionally tagged (and verified) Hermitian.
#[derive(Clone, Debug, PartialEq)]
pub struct QubitOperator<T: Real> {
    pub(crate) data: DMatrix<Complex<T>>,
    hermitian: bool,
}

impl<T: Real> QubitOperator<T> {
    pub fn new(data: DMatrix<Complex<T>>, hermitian: bool) -> Result<Self> {
        let dim = check_square(&data)?;
        if hermitian {
            let dev = hermiticity_deviation(&data);
            if dev > scaled_tol::<T>(1e-10, dim) {
                return Err(Error::NotHermitian {
                    deviation: dev.approx_f64(),
                });
            }
        }
        Ok(Self { data, hermitian })
    }

    pub fn identity(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS {
            return Err(Error::QubitCountOutOfRange(n, MAX_QUBITS));
        }
        let dim = 1usize << n;
        Ok(Self {
            data: DMatrix::identity(dim, dim),
            hermitian: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn num_qubits(&self) -> usize {
        self.data.nrows().trailing_zeros() as usize
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn matrix(&self) -> &DMatrix<Complex<T>> {
        &self.data
    }
}

/// Tensor product of single-qubit Paulis at the listed positions, identity
/// elsewhere. `assignments` must name distinct qubits in `0..n`.
pub fn pauli_string<T: Real>(n: usize, assignments: &[(usize, Axis)]) -> Result<QubitOperator<T>> {
    if n == 0 || n > MAX_QUBITS {
        return Err(Error::QubitCountOutOfRange(n, MAX_QUBITS));
    }
    let mut chosen: Vec<Option<Axis>> = vec![None; n];
    for &(q, axis) in assignments {
        if q >= n {
            return Err(Error::QubitIndexOutOfRange { index: q, n });
        }
        if chosen[q].is_some() {
            return Err(Error::DuplicateQubitIndex(q));
        }
        chosen[q] = Some(axis);
    }
    let mut acc = DMatrix::identity(1, 1);
    for slot in &chosen {
        let factor: DMatrix<Complex<T>> = match slot {
            None => DMatrix::identity(2, 2),
            Some(axis) => DMatrix::from_iterator(2, 2, pauli_matrix::<T>(*axis).iter().copied()),
        };
        acc = acc.kronecker(&factor);
    }
    Ok(QubitOperator {
        data: acc,
        hermitian: true,
    })
}

// ---------------------------------------------------------------------------
// Unitaries
// ---------------------------------------------------------------------------

/// A unitary propagator.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryMatrix<T: Real> {
    pub(crate) data: DMatrix<Complex<T>>,
}

impl<T: Real> UnitaryMatrix<T> {
    pub fn new(data: DMatrix<Complex<T>>) -> Result<Self> {
        let dim = check_square(&data)?;
        let dev = unitarity_deviation(&data);
        if dev > scaled_tol::<T>(1e-9, dim) {
            return Err(Error::NotUnitary {
                deviation: dev.approx_f64(),
            });
        }
        Ok(Self { data })
    }

    pub fn identity(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS {
            return Err(Error::QubitCountOutOfRange(n, MAX_QUBITS));
        }
        let dim = 1usize << n;
        Ok(Self {
            data: DMatrix::identity(dim, dim),
        })
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex<T>> {
        &self.data
    }
}

fn unitarity_deviation<T: Real>(m: &DMatrix<Complex<T>>) -> T {
    let product = m * m.adjoint();
    let dim = m.nrows();
    let mut worst = T::zero();
    for j in 0..dim {
        for i in 0..dim {
            let expect = if i == j { T::one() } else { T::zero() };
            let dev = cnorm(product[(i, j)] - Complex::new(expect, T::zero()));
            if dev > worst {
                worst = dev;
            }
        }
    }
    worst
}

/// exp(-i H t) for Hermitian `H`, via eigendecomposition.
///
/// The input is symmetrized first; eigendecomposition keeps the result unitary
/// to working precision for the register sizes supported here, and a polar
/// projection is applied in the rare case the deviation exceeds tolerance.
pub fn hermitian_expm<T: Real>(h: &QubitOperator<T>, t: T) -> Result<UnitaryMatrix<T>> {
    let dim = h.dim();
    let dev = hermiticity_deviation(&h.data);
    if dev > scaled_tol::<T>(1e-10, dim) {
        return Err(Error::NotHermitian {
            deviation: dev.approx_f64(),
        });
    }
    let half = Complex::new(T::of(0.5), T::zero());
    let sym = (&h.data + h.data.adjoint()) * half;
    let eig = sym.symmetric_eigen();
    let phases = eig.eigenvalues.map(|lambda| {
        let angle = -lambda * t;
        Complex::new(angle.cos(), angle.sin())
    });
    let mut scaled = eig.eigenvectors.clone();
    for (mut col, phase) in scaled.column_iter_mut().zip(phases.iter()) {
        for entry in col.iter_mut() {
            *entry *= *phase;
        }
    }
    let mut u = scaled * eig.eigenvectors.adjoint();
    if unitarity_deviation(&u) > scaled_tol::<T>(1e-9, dim) {
        u = polar_unitary(u);
    }
    UnitaryMatrix::new(u)
}

/// Closest unitary in Frobenius norm: W X† from the SVD U = W S X†.
fn polar_unitary<T: Real>(m: DMatrix<Complex<T>>) -> DMatrix<Complex<T>> {
    let svd = m.svd(true, true);
    let w = svd.u.expect("svd requested u");
    let xt = svd.v_t.expect("svd requested v_t");
    w * xt
}

// ---------------------------------------------------------------------------
// Partial trace
// ---------------------------------------------------------------------------

/// Trace out the first qubit: the sum of the two diagonal blocks.
pub fn partial_trace_first<T: Real>(rho: &DensityMatrix<T>) -> Result<DensityMatrix<T>> {
    let reduced = partial_trace_first_raw(&rho.data)?;
    Ok(DensityMatrix::new_unchecked(reduced))
}

pub(crate) fn partial_trace_first_raw<T: Real>(
    m: &DMatrix<Complex<T>>,
) -> Result<DMatrix<Complex<T>>> {
    let dim = m.nrows();
    if dim < 4 {
        return Err(Error::DimensionMismatch { expected: 4, got: dim });
    }
    let half = dim / 2;
    let mut out = DMatrix::zeros(half, half);
    for j in 0..half {
        for i in 0..half {
            out[(i, j)] = m[(i, j)] + m[(i + half, j + half)];
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Measurement-frame rotations
// ---------------------------------------------------------------------------
//
// A measurement along x or y is handled by conjugating the state into the
// frame where that axis is diagonal, reusing the z-basis machinery, and
// rotating back. The frame change is `sigma = R rho R†` with `R = H` for x and
// `R = H S†` for y, applied per qubit. The kernels below apply the per-qubit
// factors in place; both gates have entries in {±1, ±i}/sqrt(2), so the loops
// stay in cheap add/swap territory.

#[inline]
fn mul_i<T: Real>(z: Complex<T>) -> Complex<T> {
    Complex::new(-z.im, z.re)
}

#[inline]
fn mul_neg_i<T: Real>(z: Complex<T>) -> Complex<T> {
    Complex::new(z.im, -z.re)
}

/// Visit all index pairs `(i0, i1 = i0 + stride)` that differ only in the bit
/// of `qubit`, yielding the pair offsets into a `dim`-length axis.
#[inline]
fn for_each_pair(dim: usize, stride: usize, mut f: impl FnMut(usize, usize)) {
    let mut base = 0;
    while base < dim {
        for lo in base..base + stride {
            f(lo, lo + stride);
        }
        base += 2 * stride;
    }
}

fn qubit_stride(dim: usize, qubit: usize) -> usize {
    let n = dim.trailing_zeros() as usize;
    1usize << (n - 1 - qubit)
}

/// In place `m <- (G_q) m` and `m <- m (G_q)†` for the single-qubit gate G on
/// `qubit`, where G is selected by `kind`.
#[derive(Clone, Copy)]
enum FrameGate {
    Hadamard,
    /// R = H S† (maps the y eigenbasis onto the computational basis).
    YForward,
    /// R† for the gate above.
    YBackward,
}

fn conjugate_single_qubit<T: Real>(m: &mut DMatrix<Complex<T>>, qubit: usize, gate: FrameGate) {
    let dim = m.nrows();
    let stride = qubit_stride(dim, qubit);
    let inv_sqrt2 = T::of(std::f64::consts::FRAC_1_SQRT_2);
    let data = m.as_mut_slice();

    // Left multiplication: combine row pairs within each column.
    for col in 0..dim {
        let base = col * dim;
        for_each_pair(dim, stride, |i0, i1| {
            let a = data[base + i0];
            let b = data[base + i1];
            let (na, nb) = match gate {
                FrameGate::Hadamard => (a + b, a - b),
                FrameGate::YForward => (a + mul_neg_i(b), a + mul_i(b)),
                FrameGate::YBackward => (a + b, mul_i(a - b)),
            };
            data[base + i0] = na * inv_sqrt2;
            data[base + i1] = nb * inv_sqrt2;
        });
    }

    // Right multiplication by the adjoint: combine column pairs.
    for_each_pair(dim, stride, |j0, j1| {
        let b0 = j0 * dim;
        let b1 = j1 * dim;
        for row in 0..dim {
            let a = data[b0 + row];
            let b = data[b1 + row];
            let (na, nb) = match gate {
                FrameGate::Hadamard => (a + b, a - b),
                FrameGate::YForward => (a + mul_i(b), a + mul_neg_i(b)),
                FrameGate::YBackward => (a + b, mul_i(b - a)),
            };
            data[b0 + row] = na * inv_sqrt2;
            data[b1 + row] = nb * inv_sqrt2;
        }
    });
}

/// Rotate a state (or any operator) into the frame where `axis` measurements
/// are diagonal: `m <- R m R†` with the per-qubit `R` applied on every qubit.
pub(crate) fn rotate_to_measurement_frame<T: Real>(m: &mut DMatrix<Complex<T>>, axis: Axis) {
    let n = m.nrows().trailing_zeros() as usize;
    match axis {
        Axis::Z => {}
        Axis::X => {
            for q in 0..n {
                conjugate_single_qubit(m, q, FrameGate::Hadamard);
            }
        }
        Axis::Y => {
            for q in 0..n {
                conjugate_single_qubit(m, q, FrameGate::YForward);
            }
        }
    }
}

/// Inverse of [`rotate_to_measurement_frame`].
pub(crate) fn rotate_from_measurement_frame<T: Real>(m: &mut DMatrix<Complex<T>>, axis: Axis) {
    let n = m.nrows().trailing_zeros() as usize;
    match axis {
        Axis::Z => {}
        Axis::X => {
            for q in 0..n {
                conjugate_single_qubit(m, q, FrameGate::Hadamard);
            }
        }
        Axis::Y => {
            for q in 0..n {
                conjugate_single_qubit(m, q, FrameGate::YBackward);
            }
        }
    }
}
