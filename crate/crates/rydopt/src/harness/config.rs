//! The run-configuration schema.
//!
//! Serialized as TOML; every field has a default and the defaults as a
//! whole reproduce the 3-qubit GHZ experiment. See `RunConfig::example` for
//! a fully commented file.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::cbo::{CboParams, CostSpec, PulseSettings};
use crate::hardware::EncodingKind;
use crate::pulse::DescentOptions;

use super::HarnessError;

/// Where the target Hamiltonian comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSource {
    /// `-|GHZ><GHZ|` on `num_qubits` atoms.
    Ghz {
        #[serde(default = "default_qubits")]
        num_qubits: usize,
    },
    /// Seeded random Pauli sum; a problem batch offsets `coeff_seed`.
    Random {
        #[serde(default = "default_qubits")]
        num_qubits: usize,
        #[serde(default = "default_inclusion_prob")]
        inclusion_prob: f64,
        #[serde(default)]
        coeff_seed: u64,
    },
    /// A Pauli-sum JSON file.
    File { path: PathBuf },
}

fn default_qubits() -> usize {
    3
}

fn default_inclusion_prob() -> f64 {
    0.2
}

impl Default for ProblemSource {
    fn default() -> Self {
        ProblemSource::Ghz {
            num_qubits: default_qubits(),
        }
    }
}

/// Scalar cost fed to the consensus update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CostVariant {
    #[default]
    LogEnergyError,
    RawEnergy,
    GradientRegularized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostConfig {
    pub variant: CostVariant,
    /// Gradient-norm weight of the `gradient_regularized` variant.
    pub nu: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            variant: CostVariant::LogEnergyError,
            nu: 0.1,
        }
    }
}

impl CostConfig {
    /// Bind the variant to a concrete ground energy.
    pub fn to_spec(self, ground_energy: f64) -> CostSpec {
        match self.variant {
            CostVariant::LogEnergyError => CostSpec::LogEnergyError { ground_energy },
            CostVariant::RawEnergy => CostSpec::RawEnergy,
            CostVariant::GradientRegularized => CostSpec::GradientRegularized { nu: self.nu },
        }
    }
}

/// Initial-configuration box sampler parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub r_min: f64,
    pub r_max: f64,
    pub max_resamples: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            r_min: 1.0,
            r_max: 2.5,
            max_resamples: 10_000,
        }
    }
}

impl SamplerConfig {
    pub fn sampler(
        &self,
        num_atoms: usize,
    ) -> Result<crate::configgen::BoxSampler, HarnessError> {
        crate::configgen::BoxSampler::new(self.r_min, self.r_max, num_atoms, self.max_resamples)
            .map_err(|e| HarnessError::Config(e.to_string()))
    }
}

/// Pulse grid and inner-descent parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PulseConfig {
    pub steps: usize,
    pub duration: f64,
    pub z_max: f64,
    pub mu: f64,
    pub rate: f64,
    pub init_amplitude: f64,
    pub backtracking: bool,
}

impl Default for PulseConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            duration: 1.0,
            z_max: 20.0,
            mu: 1e-4,
            rate: 1.0,
            init_amplitude: 2.0,
            backtracking: true,
        }
    }
}

impl PulseConfig {
    pub fn settings(&self) -> PulseSettings {
        PulseSettings {
            steps: self.steps,
            duration: self.duration,
            z_max: self.z_max,
            mu: self.mu,
            rate: self.rate,
            init_amplitude: self.init_amplitude,
            descent: DescentOptions {
                backtracking: self.backtracking,
                ..DescentOptions::default()
            },
        }
    }
}

/// What the `optimize` entry point does with the configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    /// The nested consensus optimization.
    #[default]
    Full,
    /// Skip position updates: optimize pulses for the configuration file
    /// given in `configuration`.
    PulseOnly,
    /// Skip position updates: draw `num_agents` configurations from the
    /// `[sampler]` block (typically holding fitted parameters) and run the
    /// final pulse optimization on each.
    FittedBaseline,
}

/// Everything one experiment needs, in one file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    /// Parent directory for run outputs.
    pub out: PathBuf,
    /// Rayon worker threads (`0` = one per core).
    pub workers: usize,
    pub mode: RunMode,
    /// Configuration file consumed by `pulse-only` mode.
    pub configuration: Option<PathBuf>,
    pub problem: ProblemSource,
    pub encoding: EncodingKind,
    pub cbo: CboParams,
    pub cost: CostConfig,
    pub sampler: SamplerConfig,
    pub pulse: PulseConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(&path).map_err(|e| {
            HarnessError::Config(format!(
                "cannot read config {}: {e}",
                path.as_ref().display()
            ))
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Check ranges and referenced files. Called by [`RunConfig::load`];
    /// call it again after programmatic mutation.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let check = |ok: bool, msg: String| if ok { Ok(()) } else { Err(HarnessError::Config(msg)) };
        match &self.problem {
            ProblemSource::Ghz { num_qubits } => {
                check(*num_qubits >= 2, format!("ghz needs >= 2 qubits, got {num_qubits}"))?;
                check(
                    *num_qubits <= 6,
                    format!("at most 6 atoms supported, got {num_qubits}"),
                )?;
            }
            ProblemSource::Random {
                num_qubits,
                inclusion_prob,
                ..
            } => {
                check(
                    (1..=6).contains(num_qubits),
                    format!("random problems support 1..=6 qubits, got {num_qubits}"),
                )?;
                check(
                    *inclusion_prob > 0.0 && *inclusion_prob <= 1.0,
                    format!("inclusion_prob must lie in (0, 1], got {inclusion_prob}"),
                )?;
            }
            ProblemSource::File { path } => {
                check(
                    path.is_file(),
                    format!("problem file {} does not exist", path.display()),
                )?;
            }
        }
        if self.mode == RunMode::PulseOnly {
            let path = self.configuration.as_ref().ok_or_else(|| {
                HarnessError::Config("pulse-only mode needs a `configuration` file".into())
            })?;
            check(
                path.is_file(),
                format!("configuration file {} does not exist", path.display()),
            )?;
        }
        self.cbo
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        check(self.pulse.steps >= 1, "pulse.steps must be >= 1".into())?;
        check(
            self.pulse.duration > 0.0 && self.pulse.duration.is_finite(),
            format!("pulse.duration must be positive, got {}", self.pulse.duration),
        )?;
        check(
            self.pulse.z_max > 0.0 && self.pulse.z_max.is_finite(),
            format!("pulse.z_max must be positive, got {}", self.pulse.z_max),
        )?;
        check(
            self.pulse.mu >= 0.0 && self.pulse.mu.is_finite(),
            format!("pulse.mu must be >= 0, got {}", self.pulse.mu),
        )?;
        check(
            self.pulse.rate > 0.0 && self.pulse.rate.is_finite(),
            format!("pulse.rate must be positive, got {}", self.pulse.rate),
        )?;
        check(
            self.pulse.init_amplitude >= 0.0,
            format!(
                "pulse.init_amplitude must be >= 0, got {}",
                self.pulse.init_amplitude
            ),
        )?;
        check(
            self.cost.nu >= 0.0,
            format!("cost.nu must be >= 0, got {}", self.cost.nu),
        )?;
        // sampler feasibility is checked by its constructor
        let atoms = self.num_atoms_hint();
        if atoms >= 2 {
            self.sampler.sampler(atoms)?;
        }
        Ok(())
    }

    /// Atom count implied by the problem source (0 when only the file knows).
    pub fn num_atoms_hint(&self) -> usize {
        match &self.problem {
            ProblemSource::Ghz { num_qubits } | ProblemSource::Random { num_qubits, .. } => {
                *num_qubits
            }
            ProblemSource::File { .. } => 0,
        }
    }

    /// A fully commented example configuration.
    pub fn example() -> &'static str {
        EXAMPLE_CONFIG
    }
}

const EXAMPLE_CONFIG: &str = r#"# rydopt run configuration. Every field is optional; the values shown are
# the defaults, which reproduce the 3-qubit GHZ preparation experiment.

seed = 0
out = "runs"        # parent directory for timestamped run outputs
workers = 0          # rayon threads; 0 = one per core
mode = "full"       # full | pulse-only | fitted-baseline
# configuration = "config.json"   # required by pulse-only mode

encoding = "dipole"  # dipole | gr_vdw | gg_vdw

[problem]
kind = "ghz"         # ghz | random | file
num_qubits = 3
# inclusion_prob = 0.2   # random: per-word inclusion probability
# coeff_seed = 0         # random: Hamiltonian seed (batch index offsets it)
# path = "h.json"        # file: Pauli-sum JSON

[cbo]
alpha = 4.0          # weight sharpness
lambda = 0.4         # drift
sigma = 0.1          # diffusion
dtau = 0.5           # outer time step
n_out = 20           # outer iterations
n_in = 100           # pulse iterations per agent evaluation
n_final = 500        # pulse iterations of the final energy determination
num_agents = 12
noise = "componentwise"   # componentwise | isotropic
warm_start = true    # false restarts each evaluation from the initial pulses

[cost]
variant = "log_energy_error"  # log_energy_error | raw_energy | gradient_regularized
nu = 0.1             # gradient-norm weight (gradient_regularized only)

[sampler]
r_min = 1.0          # minimum pairwise distance of initial draws
r_max = 2.5          # box half-width
max_resamples = 10000

[pulse]
steps = 100          # time steps on [0, duration]
duration = 1.0
z_max = 20.0         # amplitude bound
mu = 0.0001          # pulse-strength regularizer
rate = 1.0           # descent rate (on the gradient time-density)
init_amplitude = 2.0 # per-channel constant initial pulse amplitude
backtracking = true
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml_string();
        let back = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn example_config_parses_to_defaults() {
        let cfg = RunConfig::from_toml_str(RunConfig::example()).unwrap();
        let mut expected = RunConfig::default();
        expected.out = PathBuf::from("runs");
        assert_eq!(cfg, expected);
    }

    #[test]
    fn empty_config_is_all_defaults() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.cbo.n_out, 20);
        assert_eq!(cfg.cbo.num_agents, 12);
        assert_eq!(cfg.pulse.steps, 100);
    }

    #[test]
    fn validation_catches_bad_fields() {
        let bad = r#"
[problem]
kind = "random"
num_qubits = 9
"#;
        assert!(matches!(
            RunConfig::from_toml_str(bad),
            Err(HarnessError::Config(_))
        ));
        let bad_file = r#"
[problem]
kind = "file"
path = "/nonexistent/h.json"
"#;
        assert!(matches!(
            RunConfig::from_toml_str(bad_file),
            Err(HarnessError::Config(_))
        ));
        let bad_mode = r#"mode = "pulse-only""#;
        assert!(matches!(
            RunConfig::from_toml_str(bad_mode),
            Err(HarnessError::Config(_))
        ));
    }
}
