//! The reservoir: a disordered transverse-field Ising qubit network driven by
//! a scalar input sequence.
//!
//! One processing step rewrites the state of the input qubit (qubit 0) with
//! the encoded input and evolves the register for a fixed interval under
//!
//! `H = (1/2) sum_i h sigma_i^z + sum_{i<j} J_ij sigma_i^x sigma_j^x`,
//!
//! with couplings drawn uniformly from `[-J_s/2, J_s/2]`. The step map is
//! `rho -> U (rho_in (x) Tr_in[rho]) U†`, which is completely positive and
//! trace preserving.

use nalgebra::DMatrix;
use num_complex::Complex;
use rand::Rng;

use crate::error::{Error, Result};
use crate::quantum::{
    hermitian_expm, partial_trace_first_raw, pauli_string, Axis, DensityMatrix, QubitOperator,
    UnitaryMatrix, MAX_QUBITS,
};
use crate::rng::stream;
use crate::scalar::Real;

/// One input value `s` in `[0, 1]` together with the derived coherence
/// amplitude `r = sqrt(s (1 - s))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InputSample<T: Real> {
    s: T,
    r: T,
}

impl<T: Real> InputSample<T> {
    pub fn new(s: T) -> Result<Self> {
        if s < T::zero() || s > T::one() {
            return Err(Error::InputOutOfRange(s.approx_f64()));
        }
        Ok(Self {
            s,
            r: (s * (T::one() - s)).sqrt(),
        })
    }

    pub fn s(&self) -> T {
        self.s
    }

    pub fn r(&self) -> T {
        self.r
    }
}

/// The encoded input state `|psi><psi|` with
/// `|psi> = sqrt(1-s) |0> + sqrt(s) |1>`.
pub fn input_state<T: Real>(x: InputSample<T>) -> DensityMatrix<T> {
    let mut m = DMatrix::zeros(2, 2);
    m[(0, 0)] = Complex::new(T::one() - x.s, T::zero());
    m[(0, 1)] = Complex::new(x.r, T::zero());
    m[(1, 0)] = Complex::new(x.r, T::zero());
    m[(1, 1)] = Complex::new(x.s, T::zero());
    DensityMatrix::new_unchecked(m)
}

/// Immutable description of a reservoir realization: parameters, the sampled
/// coupling matrix, the assembled Hamiltonian and the cached step propagator.
#[derive(Clone, Debug)]
pub struct ReservoirSpec<T: Real> {
    n: usize,
    h: T,
    j_s: T,
    dt: T,
    seed: u64,
    couplings: DMatrix<T>,
    hamiltonian: QubitOperator<T>,
    step_unitary: UnitaryMatrix<T>,
    step_unitary_adjoint: DMatrix<Complex<T>>,
}

impl<T: Real> ReservoirSpec<T> {
    /// Build a reservoir realization. `seed` fully determines the couplings:
    /// `J_ij` for `i < j` are drawn in row-major order from one substream and
    /// mirrored, so a realization is identified by its seed.
    pub fn build(n: usize, h: T, j_s: T, dt: T, seed: u64) -> Result<Self> {
        if !(2..=MAX_QUBITS).contains(&n) {
            return Err(Error::QubitCountOutOfRange(n, MAX_QUBITS));
        }
        if h < T::zero() || j_s < T::zero() || dt <= T::zero() {
            return Err(Error::InvalidParameter(
                "require h >= 0, J_s >= 0, dt > 0".into(),
            ));
        }

        let mut rng = stream(seed, "couplings", &[]);
        let mut couplings = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let u: f64 = rng.random();
                let value = j_s * T::of(u - 0.5);
                couplings[(i, j)] = value;
                couplings[(j, i)] = value;
            }
        }

        let dim = 1usize << n;
        let mut h_matrix = DMatrix::<Complex<T>>::zeros(dim, dim);
        let half = Complex::new(h * T::of(0.5), T::zero());
        for i in 0..n {
            let z = pauli_string::<T>(n, &[(i, Axis::Z)])?;
            h_matrix += z.matrix() * half;
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let xx = pauli_string::<T>(n, &[(i, Axis::X), (j, Axis::X)])?;
                h_matrix += xx.matrix() * Complex::new(couplings[(i, j)], T::zero());
            }
        }
        let hamiltonian = QubitOperator::new(h_matrix, true)?;
        let step_unitary = hermitian_expm(&hamiltonian, dt)?;
        let step_unitary_adjoint = step_unitary.matrix().adjoint();

        Ok(Self {
            n,
            h,
            j_s,
            dt,
            seed,
            couplings,
            hamiltonian,
            step_unitary,
            step_unitary_adjoint,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1usize << self.n
    }

    pub fn field(&self) -> T {
        self.h
    }

    pub fn coupling_scale(&self) -> T {
        self.j_s
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn couplings(&self) -> &DMatrix<T> {
        &self.couplings
    }

    pub fn hamiltonian(&self) -> &QubitOperator<T> {
        &self.hamiltonian
    }

    pub fn step_unitary(&self) -> &UnitaryMatrix<T> {
        &self.step_unitary
    }

    /// One unperturbed processing step: rewrite qubit 0 with the encoded
    /// input, then evolve under the cached propagator.
    pub fn step_unperturbed(
        &self,
        rho: &DensityMatrix<T>,
        x: InputSample<T>,
    ) -> Result<DensityMatrix<T>> {
        if rho.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: rho.dim(),
            });
        }
        let rest = partial_trace_first_raw(rho.matrix())?;
        let injected = input_state(x).into_matrix().kronecker(&rest);
        let evolved = self.step_unitary.matrix() * injected * &self.step_unitary_adjoint;
        Ok(DensityMatrix::new_unchecked(evolved))
    }
}

/// Per-step trace distance between two states driven by the same inputs.
/// Decaying distances witness the convergence (echo state) property that
/// justifies washing out initial conditions.
pub fn echo_state_convergence<T: Real>(
    res: &ReservoirSpec<T>,
    rho_a: &DensityMatrix<T>,
    rho_b: &DensityMatrix<T>,
    inputs: &[InputSample<T>],
) -> Result<Vec<T>> {
    if rho_a.dim() != res.dim() || rho_b.dim() != res.dim() {
        return Err(Error::DimensionMismatch {
            expected: res.dim(),
            got: rho_a.dim().max(rho_b.dim()),
        });
    }
    let mut a = rho_a.clone();
    let mut b = rho_b.clone();
    let mut distances = Vec::with_capacity(inputs.len());
    for &x in inputs {
        a = res.step_unperturbed(&a, x)?;
        b = res.step_unperturbed(&b, x)?;
        distances.push(a.trace_distance(&b)?);
    }
    Ok(distances)
}
