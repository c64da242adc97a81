//! Sources of target Hamiltonians: a seeded random Pauli-sum sampler, the
//! GHZ projector, and JSON file I/O for externally generated Hamiltonians
//! (e.g. molecular problems produced by quantum-chemistry tooling).
//!
//! The Pauli-sum file schema is
//!
//! ```json
//! {"num_qubits": 3, "terms": [{"coeff": 0.5, "pauli": "XIZ"}]}
//! ```
//!
//! with real coefficients in units where the interaction coefficient is 1.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

use crate::hilbert::{DenseOperator, HilbertError, Pauli, PauliSum, PauliTerm, QuantumState};

/// Random sampling enumerates all `4^m` words; beyond this qubit count the
/// enumeration is refused.
pub const MAX_RANDOM_QUBITS: usize = 6;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("random Hamiltonians are limited to {MAX_RANDOM_QUBITS} qubits, got {0}")]
    TooManyQubits(usize),
    #[error("invalid sampler spec: {0}")]
    InvalidSpec(String),
    #[error("GHZ target needs at least 2 atoms, got {0}")]
    TooFewAtoms(usize),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error("failed to read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed Pauli-sum file {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

/// Parameters of the random Pauli-sum ensemble: every word over
/// `{I, X, Y, Z}` is included independently with `inclusion_prob`, and
/// included words draw a uniform coefficient from `coeff_range`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomHamiltonianSpec {
    pub num_qubits: usize,
    pub inclusion_prob: f64,
    pub coeff_range: (f64, f64),
    pub seed: u64,
}

impl RandomHamiltonianSpec {
    pub fn new(num_qubits: usize, seed: u64) -> Self {
        Self {
            num_qubits,
            inclusion_prob: 0.2,
            coeff_range: (0.0, 1.0),
            seed,
        }
    }
}

fn word_from_index(mut idx: usize, m: usize) -> Vec<Pauli> {
    let letters = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];
    let mut word = vec![Pauli::I; m];
    for slot in (0..m).rev() {
        word[slot] = letters[idx % 4];
        idx /= 4;
    }
    word
}

/// Draw a random target Hamiltonian. Deterministic for a given spec: the
/// `4^m` words are visited in a fixed order, each deciding inclusion and
/// coefficient from the seeded stream.
pub fn sample_random_hamiltonian(spec: &RandomHamiltonianSpec) -> Result<PauliSum, ProblemError> {
    if spec.num_qubits == 0 {
        return Err(ProblemError::InvalidSpec("num_qubits = 0".into()));
    }
    if spec.num_qubits > MAX_RANDOM_QUBITS {
        return Err(ProblemError::TooManyQubits(spec.num_qubits));
    }
    if !(spec.inclusion_prob > 0.0 && spec.inclusion_prob <= 1.0) {
        return Err(ProblemError::InvalidSpec(format!(
            "inclusion_prob = {}",
            spec.inclusion_prob
        )));
    }
    let (lo, hi) = spec.coeff_range;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(ProblemError::InvalidSpec(format!(
            "coeff_range = ({lo}, {hi})"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let mut terms = Vec::new();
    for idx in 0..4usize.pow(spec.num_qubits as u32) {
        let included = rng.gen::<f64>() < spec.inclusion_prob;
        let coeff = if lo == hi {
            lo
        } else {
            rng.gen_range(lo..hi)
        };
        if included {
            terms.push(PauliTerm {
                coeff,
                word: word_from_index(idx, spec.num_qubits),
            });
        }
    }
    Ok(PauliSum::new(spec.num_qubits, terms)?)
}

/// The normalized GHZ state `(|0...0> + |1...1>)/sqrt(2)` embedded in the
/// given local dimension.
pub fn ghz_state(num_atoms: usize, local_dim: usize) -> Result<QuantumState, ProblemError> {
    if num_atoms < 2 {
        return Err(ProblemError::TooFewAtoms(num_atoms));
    }
    let dim = local_dim.pow(num_atoms as u32);
    let mut amps = nalgebra::DVector::<Complex64>::zeros(dim);
    let all_ones: usize = (0..num_atoms).fold(0, |acc, _| acc * local_dim + 1);
    let w = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    amps[0] = w;
    amps[all_ones] = w;
    Ok(QuantumState::new(amps, local_dim)?)
}

/// The rank-1 target `-|GHZ><GHZ|`: its ground energy is exactly -1 with
/// the GHZ state as the unique ground state.
pub fn ghz_target(num_atoms: usize, local_dim: usize) -> Result<DenseOperator, ProblemError> {
    let ghz = ghz_state(num_atoms, local_dim)?;
    let v = ghz.amplitudes();
    let proj = v * v.adjoint();
    Ok(DenseOperator::hermitian(proj.scale(-1.0))?)
}

#[derive(Serialize, Deserialize)]
struct PauliTermFile {
    coeff: f64,
    pauli: String,
}

#[derive(Serialize, Deserialize)]
struct PauliSumFile {
    num_qubits: usize,
    terms: Vec<PauliTermFile>,
}

/// Load a Pauli sum from its JSON file format. Malformed JSON, non-real
/// coefficients and word-length mismatches are rejected with context.
pub fn load_pauli_sum<P: AsRef<Path>>(path: P) -> Result<PauliSum, ProblemError> {
    let path_str = path.as_ref().display().to_string();
    let text = std::fs::read_to_string(&path).map_err(|source| ProblemError::Read {
        path: path_str.clone(),
        source,
    })?;
    parse_pauli_sum(&text).map_err(|e| match e {
        ProblemError::Parse { source, .. } => ProblemError::Parse {
            path: path_str.clone(),
            source,
        },
        other => other,
    })
}

/// Parse the JSON schema from a string (the file loader's core, exposed for
/// in-memory use).
pub fn parse_pauli_sum(text: &str) -> Result<PauliSum, ProblemError> {
    let file: PauliSumFile = serde_json::from_str(text).map_err(|source| ProblemError::Parse {
        path: "<inline>".into(),
        source,
    })?;
    let terms = file
        .terms
        .iter()
        .map(|t| PauliTerm::parse(t.coeff, &t.pauli))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PauliSum::new(file.num_qubits, terms)?)
}

/// Save a Pauli sum in the JSON file format (pretty-printed).
pub fn save_pauli_sum<P: AsRef<Path>>(p: &PauliSum, path: P) -> Result<(), ProblemError> {
    let path_str = path.as_ref().display().to_string();
    let file = PauliSumFile {
        num_qubits: p.num_qubits(),
        terms: p
            .terms()
            .iter()
            .map(|t| PauliTermFile {
                coeff: t.coeff,
                pauli: t.word_string(),
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&file).expect("schema serializes");
    std::fs::write(&path, text).map_err(|source| ProblemError::Write {
        path: path_str,
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{expectation, ground_energy, materialize};
    use approx::assert_relative_eq;

    #[test]
    fn degenerate_probabilities_include_every_word() {
        let spec = RandomHamiltonianSpec {
            num_qubits: 2,
            inclusion_prob: 1.0,
            coeff_range: (1.0, 1.0),
            seed: 3,
        };
        let p = sample_random_hamiltonian(&spec).unwrap();
        assert_eq!(p.num_terms(), 16);
        assert!(p.terms().iter().all(|t| t.coeff == 1.0));
        // every word distinct
        let mut words: Vec<String> = p.terms().iter().map(|t| t.word_string()).collect();
        words.sort();
        words.dedup();
        assert_eq!(words.len(), 16);
    }

    #[test]
    fn inclusion_rate_matches_binomial_mean() {
        // 200 draws at m = 3: expected term count 0.2 * 64 = 12.8,
        // binomial sd per draw sqrt(64 * 0.2 * 0.8) = 3.2
        let mut total = 0usize;
        let draws = 200;
        for seed in 0..draws {
            let spec = RandomHamiltonianSpec::new(3, seed as u64);
            total += sample_random_hamiltonian(&spec).unwrap().num_terms();
        }
        let mean = total as f64 / draws as f64;
        let se = 3.2 / (draws as f64).sqrt();
        assert!(
            (mean - 12.8).abs() < 3.0 * se,
            "sample mean {mean}, expected 12.8 +- {}",
            3.0 * se
        );
    }

    #[test]
    fn sampling_is_deterministic_and_bounded() {
        let spec = RandomHamiltonianSpec::new(4, 77);
        let a = sample_random_hamiltonian(&spec).unwrap();
        let b = sample_random_hamiltonian(&spec).unwrap();
        assert_eq!(a, b);
        assert!(a.terms().iter().all(|t| (0.0..1.0).contains(&t.coeff)));
        assert!(matches!(
            sample_random_hamiltonian(&RandomHamiltonianSpec::new(7, 0)),
            Err(ProblemError::TooManyQubits(7))
        ));
    }

    #[test]
    fn random_hamiltonians_are_hermitian_with_sizable_ground_energies() {
        // ground energies of 4-qubit draws cluster around magnitude 10
        let mut magnitudes = Vec::new();
        for seed in 0..50 {
            let spec = RandomHamiltonianSpec::new(4, 1000 + seed);
            let p = sample_random_hamiltonian(&spec).unwrap();
            let h = materialize(&p, 2).unwrap();
            let (e_g, _) = ground_energy(&h, 2).unwrap();
            magnitudes.push(e_g.abs());
        }
        magnitudes.sort_by(|a, b| a.total_cmp(b));
        let median = magnitudes[magnitudes.len() / 2];
        assert!(
            (2.0..=50.0).contains(&median),
            "median |E_g| = {median} outside the expected decade"
        );
    }

    #[test]
    fn ghz_target_spectrum() {
        let h = ghz_target(3, 2).unwrap();
        let ghz = ghz_state(3, 2).unwrap();
        assert_relative_eq!(expectation(&ghz, &h).unwrap(), -1.0, epsilon = 1e-12);
        let (e_g, v) = ground_energy(&h, 2).unwrap();
        assert_relative_eq!(e_g, -1.0, epsilon = 1e-12);
        assert!(v.overlap_magnitude(&ghz) > 1.0 - 1e-10);
        // trace of a rank-1 projector with weight -1
        let trace: Complex64 = h.matrix().diagonal().iter().sum();
        assert_relative_eq!(trace.re, -1.0, epsilon = 1e-12);
        // mixed-bit product states are orthogonal to the GHZ state
        let mixed = QuantumState::basis_state(2, 3, 0b011);
        assert_relative_eq!(expectation(&mixed, &h).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn ghz_target_qutrit_embedding() {
        let h = ghz_target(2, 3).unwrap();
        assert_eq!(h.dim(), 9);
        let ghz = ghz_state(2, 3).unwrap();
        // |11> in base 3 is index 4
        assert_relative_eq!(ghz.amplitudes()[4].re, std::f64::consts::FRAC_1_SQRT_2);
        let (e_g, _) = ground_energy(&h, 3).unwrap();
        assert_relative_eq!(e_g, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn pauli_sum_file_round_trip() {
        let spec = RandomHamiltonianSpec::new(3, 42);
        let p = sample_random_hamiltonian(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.json");
        save_pauli_sum(&p, &path).unwrap();
        let q = load_pauli_sum(&path).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn loader_rejects_malformed_files() {
        // complex coefficient object is not a real number
        let complex_coeff =
            r#"{"num_qubits": 1, "terms": [{"coeff": {"re": 1.0, "im": 2.0}, "pauli": "Z"}]}"#;
        assert!(matches!(
            parse_pauli_sum(complex_coeff),
            Err(ProblemError::Parse { .. })
        ));
        let bad_letter = r#"{"num_qubits": 1, "terms": [{"coeff": 1.0, "pauli": "Q"}]}"#;
        assert!(matches!(
            parse_pauli_sum(bad_letter),
            Err(ProblemError::Hilbert(HilbertError::UnknownPauli('Q')))
        ));
        let bad_length = r#"{"num_qubits": 2, "terms": [{"coeff": 1.0, "pauli": "Z"}]}"#;
        assert!(matches!(
            parse_pauli_sum(bad_length),
            Err(ProblemError::Hilbert(HilbertError::WordLengthMismatch { .. }))
        ));
    }
}
