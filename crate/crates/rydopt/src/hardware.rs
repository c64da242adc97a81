//! Neutral-atom physical model: atom configurations, qubit encodings,
//! control Hamiltonians and position-dependent interactions.
//!
//! Three encodings are supported. Two use a pair of levels coupled by a
//! single laser channel per atom (coupling strength and detuning); the
//! third keeps both ground-manifold states as the computational pair and
//! adds the Rydberg level as an auxiliary third level, giving four channels
//! per atom. Interactions are pairwise and depend only on the interatomic
//! distance: a `1/R^6` level shift of the doubly excited Rydberg state, or
//! a `1/R^3` excitation exchange. The interaction coefficient is fixed to 1
//! (arbitrary units); other unit systems are reached by rescaling time.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hilbert::{DenseOperator, HilbertError};

/// Distances below this are treated as coincident when building
/// interactions (the pair energy would overflow well before this scale).
pub const MIN_PAIR_DISTANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum HardwareError {
    #[error("non-finite coordinate for atom {0}")]
    NonFinitePosition(usize),
    #[error("atoms {i} and {j} are coincident (distance {distance:e})")]
    CoincidentAtoms { i: usize, j: usize, distance: f64 },
    #[error("pulse matrix contains a non-finite entry at channel {channel}, step {step}")]
    NonFinitePulse { channel: usize, step: usize },
    #[error("pulse entry {value} at channel {channel}, step {step} exceeds bound {z_max}")]
    PulseOutOfBounds {
        channel: usize,
        step: usize,
        value: f64,
        z_max: f64,
    },
    #[error("invalid pulse grid: {0}")]
    InvalidPulseGrid(String),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

/// Ordered 2D atom positions, in units where the interaction coefficient
/// is 1. Atoms are distinguishable: permuting the list is a different
/// configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    positions: Vec<[f64; 2]>,
}

impl Configuration {
    pub fn new(positions: Vec<[f64; 2]>) -> Result<Self, HardwareError> {
        for (i, p) in positions.iter().enumerate() {
            if !p[0].is_finite() || !p[1].is_finite() {
                return Err(HardwareError::NonFinitePosition(i));
            }
        }
        for i in 0..positions.len() {
            for j in (i + 1)..positions.len() {
                let d = dist(positions[i], positions[j]);
                if d == 0.0 {
                    return Err(HardwareError::CoincidentAtoms { i, j, distance: d });
                }
            }
        }
        Ok(Self { positions })
    }

    pub fn num_atoms(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        dist(self.positions[i], self.positions[j])
    }

    /// All pairwise distances, pairs ordered `(i, j)` with `i < j`.
    pub fn pairwise_distances(&self) -> Vec<f64> {
        let m = self.num_atoms();
        let mut out = Vec::with_capacity(m * (m.saturating_sub(1)) / 2);
        for i in 0..m {
            for j in (i + 1)..m {
                out.push(self.distance(i, j));
            }
        }
        out
    }

    pub fn min_pairwise_distance(&self) -> Option<f64> {
        self.pairwise_distances()
            .into_iter()
            .min_by(|a, b| a.total_cmp(b))
    }

    /// Coordinate-wise distance to another configuration of the same size,
    /// as the Frobenius norm of the position difference.
    pub fn distance_to(&self, other: &Configuration) -> f64 {
        self.positions
            .iter()
            .zip(other.positions.iter())
            .map(|(a, b)| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

pub(crate) fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[derive(Serialize, Deserialize)]
struct ConfigurationRepr {
    positions: Vec<[f64; 2]>,
}

impl Serialize for Configuration {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ConfigurationRepr {
            positions: self.positions.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Configuration {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = ConfigurationRepr::deserialize(d)?;
        Configuration::new(repr.positions).map_err(serde::de::Error::custom)
    }
}

/// Which levels encode the qubit and how the atoms interact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EncodingKind {
    /// Both ground states computational, Rydberg auxiliary; local dimension
    /// 3, four channels per atom, `1/R^6` Rydberg-pair level shift.
    GgVdw,
    /// Ground + Rydberg computational; local dimension 2, two channels per
    /// atom, `1/R^6` shift of the doubly excited state (blockade included).
    GrVdw,
    /// Ground + Rydberg computational with `1/R^3` excitation exchange.
    #[default]
    Dipole,
}

/// Laser channel kinds. Two-level encodings use only the first two.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    /// Coupling between the two computational levels, `1/2 (|0><1| + |1><0|)`.
    Omega01,
    /// Detuning of the upper computational level, `-|1><1|`.
    Delta1,
    /// Coupling from `|1>` to the auxiliary Rydberg level (three-level
    /// encoding only).
    Omega1r,
    /// Detuning of the auxiliary Rydberg level (three-level encoding only).
    DeltaR,
}

/// One control channel: a channel kind acting on one atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Channel {
    pub atom: usize,
    pub kind: ChannelKind,
}

/// An encoding choice for a fixed atom count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Encoding {
    pub kind: EncodingKind,
    pub num_atoms: usize,
}

impl Encoding {
    pub fn new(kind: EncodingKind, num_atoms: usize) -> Self {
        Self { kind, num_atoms }
    }

    pub fn local_dim(&self) -> usize {
        match self.kind {
            EncodingKind::GgVdw => 3,
            EncodingKind::GrVdw | EncodingKind::Dipole => 2,
        }
    }

    pub fn hilbert_dim(&self) -> usize {
        self.local_dim().pow(self.num_atoms as u32)
    }

    pub fn channels_per_atom(&self) -> usize {
        match self.kind {
            EncodingKind::GgVdw => 4,
            EncodingKind::GrVdw | EncodingKind::Dipole => 2,
        }
    }

    pub fn num_channels(&self) -> usize {
        self.channels_per_atom() * self.num_atoms
    }

    /// Channel layout, grouped by atom.
    pub fn channels(&self) -> Vec<Channel> {
        let kinds: &[ChannelKind] = match self.kind {
            EncodingKind::GgVdw => &[
                ChannelKind::Omega01,
                ChannelKind::Delta1,
                ChannelKind::Omega1r,
                ChannelKind::DeltaR,
            ],
            EncodingKind::GrVdw | EncodingKind::Dipole => {
                &[ChannelKind::Omega01, ChannelKind::Delta1]
            }
        };
        let mut out = Vec::with_capacity(self.num_channels());
        for atom in 0..self.num_atoms {
            for &kind in kinds {
                out.push(Channel { atom, kind });
            }
        }
        out
    }

    /// Distance exponent `p` of the pair interaction.
    pub fn interaction_exponent(&self) -> i32 {
        match self.kind {
            EncodingKind::GgVdw | EncodingKind::GrVdw => 6,
            EncodingKind::Dipole => 3,
        }
    }
}

/// `L x K` real channel amplitudes: one step function per channel over
/// `[0, duration]`, entrywise bounded by `z_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSet {
    values: DMatrix<f64>,
    z_max: f64,
    duration: f64,
}

impl PulseSet {
    pub fn new(values: DMatrix<f64>, z_max: f64, duration: f64) -> Result<Self, HardwareError> {
        if values.ncols() == 0 {
            return Err(HardwareError::InvalidPulseGrid(
                "pulse grid needs at least one step".into(),
            ));
        }
        if !(duration > 0.0) || !(z_max > 0.0) {
            return Err(HardwareError::InvalidPulseGrid(format!(
                "duration {duration} and z_max {z_max} must be positive"
            )));
        }
        for l in 0..values.nrows() {
            for k in 0..values.ncols() {
                let v = values[(l, k)];
                if !v.is_finite() {
                    return Err(HardwareError::NonFinitePulse {
                        channel: l,
                        step: k,
                    });
                }
                if v.abs() > z_max {
                    return Err(HardwareError::PulseOutOfBounds {
                        channel: l,
                        step: k,
                        value: v,
                        z_max,
                    });
                }
            }
        }
        Ok(Self {
            values,
            z_max,
            duration,
        })
    }

    /// Like [`PulseSet::new`] but projecting out-of-bound entries onto
    /// `[-z_max, z_max]` instead of rejecting them.
    pub fn new_clamped(
        mut values: DMatrix<f64>,
        z_max: f64,
        duration: f64,
    ) -> Result<Self, HardwareError> {
        for v in values.iter_mut() {
            *v = v.clamp(-z_max, z_max);
        }
        Self::new(values, z_max, duration)
    }

    pub fn zeros(channels: usize, steps: usize, z_max: f64, duration: f64) -> Self {
        Self::new(DMatrix::zeros(channels, steps), z_max, duration)
            .expect("zero pulses are always valid")
    }

    /// Entrywise uniform draw from `[-amplitude, amplitude]` (clamped to the
    /// bound).
    pub fn random_uniform<R: Rng>(
        channels: usize,
        steps: usize,
        amplitude: f64,
        z_max: f64,
        duration: f64,
        rng: &mut R,
    ) -> Self {
        let amp = amplitude.min(z_max);
        let values = DMatrix::from_fn(channels, steps, |_, _| rng.gen_range(-amp..=amp));
        Self::new(values, z_max, duration).expect("bounded draw is always valid")
    }

    /// One uniform draw from `[-amplitude, amplitude]` per channel, held
    /// constant over the grid. The preferred descent seed: independent
    /// per-step noise largely self-cancels (net pulse area of order
    /// `amplitude * sqrt(duration * dt)`), parking the optimizer on the
    /// do-nothing plateau, while constant channels accumulate rotation
    /// angles of order `amplitude * duration`.
    pub fn random_constant<R: Rng>(
        channels: usize,
        steps: usize,
        amplitude: f64,
        z_max: f64,
        duration: f64,
        rng: &mut R,
    ) -> Self {
        let amp = amplitude.min(z_max);
        let levels: Vec<f64> = (0..channels).map(|_| rng.gen_range(-amp..=amp)).collect();
        let values = DMatrix::from_fn(channels, steps, |l, _| levels[l]);
        Self::new(values, z_max, duration).expect("bounded draw is always valid")
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn num_channels(&self) -> usize {
        self.values.nrows()
    }

    pub fn steps(&self) -> usize {
        self.values.ncols()
    }

    pub fn z_max(&self) -> f64 {
        self.z_max
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn dt(&self) -> f64 {
        self.duration / self.steps() as f64
    }

    /// Discrete L2 norm squared: `sum_{l,k} z_{l,k}^2 dt`.
    pub fn l2_norm_squared(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() * self.dt()
    }
}

/// Embed a single-atom operator at position `atom` in the `m`-atom product
/// space (atom 0 is the leftmost / most significant factor).
pub(crate) fn site_operator(
    local: &DMatrix<Complex64>,
    atom: usize,
    num_atoms: usize,
) -> DMatrix<Complex64> {
    let d = local.nrows();
    let left = DMatrix::<Complex64>::identity(d.pow(atom as u32), d.pow(atom as u32));
    let right_dim = d.pow((num_atoms - atom - 1) as u32);
    let right = DMatrix::<Complex64>::identity(right_dim, right_dim);
    left.kronecker(local).kronecker(&right)
}

fn local_channel_matrix(kind: ChannelKind, d: usize) -> DMatrix<Complex64> {
    let mut m = DMatrix::<Complex64>::zeros(d, d);
    let half = Complex64::new(0.5, 0.0);
    let one = Complex64::new(1.0, 0.0);
    match kind {
        ChannelKind::Omega01 => {
            m[(0, 1)] = half;
            m[(1, 0)] = half;
        }
        ChannelKind::Delta1 => {
            m[(1, 1)] = -one;
        }
        ChannelKind::Omega1r => {
            m[(1, 2)] = half;
            m[(2, 1)] = half;
        }
        ChannelKind::DeltaR => {
            m[(2, 2)] = -one;
        }
    }
    m
}

/// The Hermitian operators `H_l` such that the control Hamiltonian is
/// `sum_l z_l(t) H_l`, in channel-layout order.
pub fn control_operators(enc: &Encoding) -> Vec<DenseOperator> {
    let d = enc.local_dim();
    enc.channels()
        .iter()
        .map(|ch| {
            let local = local_channel_matrix(ch.kind, d);
            DenseOperator::hermitian(site_operator(&local, ch.atom, enc.num_atoms))
                .expect("channel operators are Hermitian by construction")
        })
        .collect()
}

/// Digit of basis index `n` at atom `a` (atom 0 most significant).
fn digit(n: usize, a: usize, num_atoms: usize, d: usize) -> usize {
    (n / d.pow((num_atoms - a - 1) as u32)) % d
}

/// Unit-coefficient pair interaction operator for atoms `(i, j)`:
/// the `|rr><rr|` level shift for the Van der Waals encodings, the
/// `|0 1><1 0| + |1 0><0 1|` excitation exchange for the dipole encoding.
pub(crate) fn pair_operator(enc: &Encoding, i: usize, j: usize) -> DMatrix<Complex64> {
    let d = enc.local_dim();
    let m = enc.num_atoms;
    let dim = enc.hilbert_dim();
    let mut op = DMatrix::<Complex64>::zeros(dim, dim);
    let one = Complex64::new(1.0, 0.0);
    match enc.kind {
        EncodingKind::GrVdw | EncodingKind::GgVdw => {
            let r = d - 1;
            for n in 0..dim {
                if digit(n, i, m, d) == r && digit(n, j, m, d) == r {
                    op[(n, n)] = one;
                }
            }
        }
        EncodingKind::Dipole => {
            // map (digit_i, digit_j) = (1, 0) onto (0, 1) and back
            let stride_i = d.pow((m - i - 1) as u32);
            let stride_j = d.pow((m - j - 1) as u32);
            for n in 0..dim {
                if digit(n, i, m, d) == 1 && digit(n, j, m, d) == 0 {
                    let n_to = n - stride_i + stride_j;
                    op[(n_to, n)] = one;
                    op[(n, n_to)] = one;
                }
            }
        }
    }
    op
}

/// The configuration-dependent interaction Hamiltonian, summed over atom
/// pairs with coefficient `1 / distance^p`.
pub fn interaction_hamiltonian(
    x: &Configuration,
    enc: &Encoding,
) -> Result<DenseOperator, HardwareError> {
    assert_eq!(x.num_atoms(), enc.num_atoms, "configuration/encoding size");
    let dim = enc.hilbert_dim();
    let p = enc.interaction_exponent();
    let mut total = DMatrix::<Complex64>::zeros(dim, dim);
    for i in 0..x.num_atoms() {
        for j in (i + 1)..x.num_atoms() {
            let r = x.distance(i, j);
            if r < MIN_PAIR_DISTANCE {
                return Err(HardwareError::CoincidentAtoms { i, j, distance: r });
            }
            let coeff = r.powi(-p);
            total += pair_operator(enc, i, j).scale(coeff);
        }
    }
    Ok(DenseOperator::hermitian(total)?)
}

/// Build a normalized `|0...0>` initial state vector for an encoding.
pub fn ground_state_vector(enc: &Encoding) -> DVector<Complex64> {
    let mut v = DVector::zeros(enc.hilbert_dim());
    v[0] = Complex64::new(1.0, 0.0);
    v
}
