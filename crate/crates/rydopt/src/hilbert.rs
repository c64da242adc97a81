//! Dense complex linear algebra for small multi-atom quantum systems.
//!
//! Everything here works on explicit `d^m x d^m` matrices (`d` the local
//! dimension, `m` the atom count). At desk scale (`d^m <= 729`) dense
//! storage is simpler and fast enough; no sparse or tensor-network
//! representations are attempted.
//!
//! The central dynamical object is [`evolve`], which integrates
//!
//! ```text
//!   i d/dt |psi(t)> = (H_V + sum_l z_l(t) H_l) |psi(t)>
//! ```
//!
//! for piecewise-constant channel amplitudes `z_l`. Each time step is
//! propagated by a dense matrix exponential (scaling-and-squaring), which is
//! exact for a constant step Hamiltonian, and every per-step and cumulative
//! propagator is cached in an [`EvolutionRecord`] so that downstream gradient
//! evaluations can form `U(T) U(t_k)^dag` without re-integrating.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::hardware::PulseSet;

/// `i` as a `Complex64`.
pub(crate) const IM: Complex64 = Complex64::new(0.0, 1.0);

/// Maximum Hilbert-space dimension accepted by the eigensolver (3^6).
pub const MAX_DENSE_DIM: usize = 729;

/// Tolerance for the state normalization invariant.
pub const NORM_TOL: f64 = 1e-10;

/// Tolerance for the Hermiticity check on flagged operators.
pub const HERMITICITY_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum HilbertError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("amplitude vector of length {len} is not a power of local dimension {local_dim}")]
    BadStateLength { len: usize, local_dim: usize },
    #[error("state norm {norm} deviates from 1 by more than {NORM_TOL}")]
    NotNormalized { norm: f64 },
    #[error("matrix flagged Hermitian deviates from its adjoint by {max_dev:e}")]
    NotHermitian { max_dev: f64 },
    #[error("operation requires a Hermitian operator")]
    HermitianRequired,
    #[error("unknown Pauli letter '{0}' (expected one of I, X, Y, Z)")]
    UnknownPauli(char),
    #[error("Pauli word of length {found} does not match qubit count {expected}")]
    WordLengthMismatch { expected: usize, found: usize },
    #[error("Pauli coefficient must be finite, got {0}")]
    NonFiniteCoefficient(f64),
    #[error("local dimension {0} unsupported (expected 2 or 3)")]
    UnsupportedLocalDim(usize),
    #[error("non-finite pulse value at channel {channel}, step {step}")]
    NonFinitePulse { channel: usize, step: usize },
    #[error("dimension {0} exceeds the dense eigensolver cap {MAX_DENSE_DIM}")]
    DimensionTooLarge(usize),
}

/// Single-atom Pauli letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn from_char(c: char) -> Result<Self, HilbertError> {
        match c {
            'I' => Ok(Pauli::I),
            'X' => Ok(Pauli::X),
            'Y' => Ok(Pauli::Y),
            'Z' => Ok(Pauli::Z),
            other => Err(HilbertError::UnknownPauli(other)),
        }
    }

    pub fn to_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    /// The `d x d` matrix of this letter in the local basis.
    ///
    /// For `d = 3` the letter acts on the `{|0>, |1>}` block and has a zero
    /// row and column for the auxiliary level, so that a materialized target
    /// Hamiltonian never rewards population outside the computational
    /// subspace. Note this applies to `I` as well: every letter embeds as a
    /// computational-subspace operator.
    pub fn matrix(self, local_dim: usize) -> Result<DMatrix<Complex64>, HilbertError> {
        if local_dim != 2 && local_dim != 3 {
            return Err(HilbertError::UnsupportedLocalDim(local_dim));
        }
        let mut m = DMatrix::zeros(local_dim, local_dim);
        let one = Complex64::new(1.0, 0.0);
        match self {
            Pauli::I => {
                m[(0, 0)] = one;
                m[(1, 1)] = one;
            }
            Pauli::X => {
                m[(0, 1)] = one;
                m[(1, 0)] = one;
            }
            Pauli::Y => {
                m[(0, 1)] = -IM;
                m[(1, 0)] = IM;
            }
            Pauli::Z => {
                m[(0, 0)] = one;
                m[(1, 1)] = -one;
            }
        }
        Ok(m)
    }
}

/// One weighted Pauli word.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliTerm {
    pub coeff: f64,
    pub word: Vec<Pauli>,
}

impl PauliTerm {
    pub fn parse(coeff: f64, word: &str) -> Result<Self, HilbertError> {
        let word = word
            .chars()
            .map(Pauli::from_char)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { coeff, word })
    }

    pub fn word_string(&self) -> String {
        self.word.iter().map(|p| p.to_char()).collect()
    }
}

/// A target Hamiltonian as a real-weighted sum of Pauli words.
///
/// Real coefficients guarantee that [`materialize`] produces a Hermitian
/// matrix. All words must have length equal to the qubit count.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliSum {
    num_qubits: usize,
    terms: Vec<PauliTerm>,
}

impl PauliSum {
    pub fn new(num_qubits: usize, terms: Vec<PauliTerm>) -> Result<Self, HilbertError> {
        for t in &terms {
            if t.word.len() != num_qubits {
                return Err(HilbertError::WordLengthMismatch {
                    expected: num_qubits,
                    found: t.word.len(),
                });
            }
            if !t.coeff.is_finite() {
                return Err(HilbertError::NonFiniteCoefficient(t.coeff));
            }
        }
        Ok(Self { num_qubits, terms })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn terms(&self) -> &[PauliTerm] {
        &self.terms
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }
}

/// A normalized state vector over `m` atoms with local dimension `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    amplitudes: DVector<Complex64>,
    local_dim: usize,
    num_atoms: usize,
}

impl QuantumState {
    /// Wrap an amplitude vector, checking the length and normalization
    /// invariants.
    pub fn new(amplitudes: DVector<Complex64>, local_dim: usize) -> Result<Self, HilbertError> {
        let num_atoms = infer_num_atoms(amplitudes.len(), local_dim)?;
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(HilbertError::NotNormalized { norm });
        }
        Ok(Self {
            amplitudes,
            local_dim,
            num_atoms,
        })
    }

    /// The computational basis state with the given index.
    pub fn basis_state(local_dim: usize, num_atoms: usize, index: usize) -> Self {
        let dim = local_dim.pow(num_atoms as u32);
        assert!(index < dim, "basis index out of range");
        let mut amplitudes = DVector::zeros(dim);
        amplitudes[index] = Complex64::new(1.0, 0.0);
        Self {
            amplitudes,
            local_dim,
            num_atoms,
        }
    }

    /// The all-ground product state `|0...0>`.
    pub fn ground_product(local_dim: usize, num_atoms: usize) -> Self {
        Self::basis_state(local_dim, num_atoms, 0)
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amplitudes
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn num_atoms(&self) -> usize {
        self.num_atoms
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    /// `|<self|other>|`, useful for phase-insensitive comparisons.
    pub fn overlap_magnitude(&self, other: &Self) -> f64 {
        self.amplitudes.dotc(&other.amplitudes).norm()
    }
}

fn infer_num_atoms(len: usize, local_dim: usize) -> Result<usize, HilbertError> {
    if local_dim < 2 {
        return Err(HilbertError::UnsupportedLocalDim(local_dim));
    }
    let mut dim = 1usize;
    let mut m = 0usize;
    while dim < len {
        dim = dim.saturating_mul(local_dim);
        m += 1;
    }
    if dim != len || m == 0 {
        return Err(HilbertError::BadStateLength { len, local_dim });
    }
    Ok(m)
}

/// A dense operator with an optional Hermiticity assertion.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    matrix: DMatrix<Complex64>,
    hermitian: bool,
}

impl DenseOperator {
    /// Wrap a matrix asserting Hermiticity; fails if `max |M - M^dag|`
    /// exceeds the tolerance.
    pub fn hermitian(matrix: DMatrix<Complex64>) -> Result<Self, HilbertError> {
        let max_dev = hermiticity_deviation(&matrix);
        if max_dev > HERMITICITY_TOL {
            return Err(HilbertError::NotHermitian { max_dev });
        }
        Ok(Self {
            matrix,
            hermitian: true,
        })
    }

    /// Wrap a matrix without the Hermiticity assertion.
    pub fn general(matrix: DMatrix<Complex64>) -> Self {
        Self {
            matrix,
            hermitian: false,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(dim, dim),
            hermitian: true,
        }
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

pub(crate) fn hermiticity_deviation(m: &DMatrix<Complex64>) -> f64 {
    let mut max_dev = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let dev = (m[(i, j)] - m[(j, i)].conj()).norm();
            if dev > max_dev {
                max_dev = dev;
            }
        }
    }
    max_dev
}

/// Materialize a Pauli sum as a dense Hermitian operator with the given
/// local dimension (2 for qubit encodings, 3 for the qutrit encoding).
pub fn materialize(p: &PauliSum, local_dim: usize) -> Result<DenseOperator, HilbertError> {
    if local_dim != 2 && local_dim != 3 {
        return Err(HilbertError::UnsupportedLocalDim(local_dim));
    }
    let dim = local_dim.pow(p.num_qubits() as u32);
    let mut total = DMatrix::<Complex64>::zeros(dim, dim);
    for term in p.terms() {
        let mut kron = DMatrix::<Complex64>::identity(1, 1);
        for letter in &term.word {
            kron = kron.kronecker(&letter.matrix(local_dim)?);
        }
        total += kron.scale(term.coeff);
    }
    DenseOperator::hermitian(total)
}

/// Uniform time grid: `steps` intervals of width `dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub steps: usize,
    pub dt: f64,
}

impl TimeGrid {
    pub fn duration(&self) -> f64 {
        self.steps as f64 * self.dt
    }
}

/// Full record of one piecewise-constant Schroedinger solve: per-step
/// propagators, cumulative propagators `U(t_k)`, and the grid states.
///
/// `cumulative[0]` is the identity and `states[0]` the initial state, so
/// both vectors have `steps + 1` entries while `step_unitaries` has `steps`.
#[derive(Debug, Clone)]
pub struct EvolutionRecord {
    step_unitaries: Vec<DMatrix<Complex64>>,
    cumulative_unitaries: Vec<DMatrix<Complex64>>,
    states: Vec<DVector<Complex64>>,
    grid: TimeGrid,
    local_dim: usize,
    num_atoms: usize,
}

impl EvolutionRecord {
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn step_unitaries(&self) -> &[DMatrix<Complex64>] {
        &self.step_unitaries
    }

    pub fn cumulative_unitaries(&self) -> &[DMatrix<Complex64>] {
        &self.cumulative_unitaries
    }

    /// State amplitudes at grid point `k` (`k = 0` is the initial state).
    pub fn state(&self, k: usize) -> &DVector<Complex64> {
        &self.states[k]
    }

    pub fn states(&self) -> &[DVector<Complex64>] {
        &self.states
    }

    pub fn final_state(&self) -> Result<QuantumState, HilbertError> {
        QuantumState::new(self.states.last().unwrap().clone(), self.local_dim)
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn num_atoms(&self) -> usize {
        self.num_atoms
    }

    /// `Gamma(T, t_k) = U(T) U(t_k)^dag`, formed from the cached cumulative
    /// unitaries.
    pub fn gamma_from_end(&self, k: usize) -> DMatrix<Complex64> {
        self.cumulative_unitaries.last().unwrap() * self.cumulative_unitaries[k].adjoint()
    }
}

/// Propagate `psi0` under `H_V + sum_l z_l(t) H_l` with the piecewise-constant
/// pulses, caching all propagators and intermediate states.
pub fn evolve(
    psi0: &QuantumState,
    h_v: &DenseOperator,
    pulses: &PulseSet,
    controls: &[DenseOperator],
) -> Result<EvolutionRecord, HilbertError> {
    let dim = psi0.dim();
    if h_v.dim() != dim {
        return Err(HilbertError::DimensionMismatch {
            context: "interaction Hamiltonian",
            expected: dim,
            found: h_v.dim(),
        });
    }
    for c in controls {
        if c.dim() != dim {
            return Err(HilbertError::DimensionMismatch {
                context: "control operator",
                expected: dim,
                found: c.dim(),
            });
        }
    }
    if pulses.num_channels() != controls.len() {
        return Err(HilbertError::DimensionMismatch {
            context: "pulse channels",
            expected: controls.len(),
            found: pulses.num_channels(),
        });
    }
    let values = pulses.values();
    for l in 0..pulses.num_channels() {
        for k in 0..pulses.steps() {
            if !values[(l, k)].is_finite() {
                return Err(HilbertError::NonFinitePulse {
                    channel: l,
                    step: k,
                });
            }
        }
    }

    let steps = pulses.steps();
    let dt = pulses.dt();
    let grid = TimeGrid { steps, dt };

    let mut step_unitaries = Vec::with_capacity(steps);
    let mut cumulative_unitaries = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    cumulative_unitaries.push(DMatrix::identity(dim, dim));
    states.push(psi0.amplitudes().clone());

    for k in 0..steps {
        let h = step_hamiltonian(h_v, controls, values, k);
        let u_step = h.map(|x| -IM * x * dt).exp();
        let cum = &u_step * cumulative_unitaries.last().unwrap();
        let psi = &u_step * states.last().unwrap();
        step_unitaries.push(u_step);
        cumulative_unitaries.push(cum);
        states.push(psi);
    }

    Ok(EvolutionRecord {
        step_unitaries,
        cumulative_unitaries,
        states,
        grid,
        local_dim: psi0.local_dim(),
        num_atoms: psi0.num_atoms(),
    })
}

/// The constant Hamiltonian on step `k`: `H_V + sum_l z_{l,k} H_l`.
pub(crate) fn step_hamiltonian(
    h_v: &DenseOperator,
    controls: &[DenseOperator],
    values: &DMatrix<f64>,
    k: usize,
) -> DMatrix<Complex64> {
    let mut h = h_v.matrix().clone();
    for (l, ctrl) in controls.iter().enumerate() {
        let z = values[(l, k)];
        if z != 0.0 {
            h += ctrl.matrix().scale(z);
        }
    }
    h
}

/// `<psi| H |psi>` for Hermitian `H`.
pub fn expectation(psi: &QuantumState, h: &DenseOperator) -> Result<f64, HilbertError> {
    if !h.is_hermitian() {
        return Err(HilbertError::HermitianRequired);
    }
    if h.dim() != psi.dim() {
        return Err(HilbertError::DimensionMismatch {
            context: "expectation",
            expected: psi.dim(),
            found: h.dim(),
        });
    }
    Ok(expectation_raw(psi.amplitudes(), h.matrix()))
}

pub(crate) fn expectation_raw(psi: &DVector<Complex64>, h: &DMatrix<Complex64>) -> f64 {
    psi.dotc(&(h * psi)).re
}

/// Minimum eigenvalue and a normalized eigenvector of a Hermitian operator.
pub fn ground_energy(
    h: &DenseOperator,
    local_dim: usize,
) -> Result<(f64, QuantumState), HilbertError> {
    if !h.is_hermitian() {
        return Err(HilbertError::HermitianRequired);
    }
    if h.dim() > MAX_DENSE_DIM {
        return Err(HilbertError::DimensionTooLarge(h.dim()));
    }
    let eig = nalgebra::SymmetricEigen::new(h.matrix().clone());
    let mut best = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] < eig.eigenvalues[best] {
            best = i;
        }
    }
    let energy = eig.eigenvalues[best];
    let mut vec = eig.eigenvectors.column(best).into_owned();
    let norm = vec.norm();
    vec /= Complex64::new(norm, 0.0);
    Ok((energy, QuantumState::new(vec, local_dim)?))
}
