//! The `optimize` entry point: the full nested run, plus the two
//! position-frozen modes (single-configuration pulse optimization and
//! sampled baselines).

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::cbo::{self, CboParams, History, RunOutcome};
use crate::hardware::{Configuration, EncodingKind};
use crate::pulse;

use super::config::{RunConfig, RunMode};
use super::{
    create_run_dir, derive_seed, resolve_problem, write_file, write_history_jsonl, write_json,
    HarnessError, ResolvedProblem,
};

const TAG_INIT: u64 = 1;
const TAG_RUN: u64 = 2;

/// Per-agent outcome entry of a summary.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AgentSummary {
    /// Final pulse cost (energy plus regularizer).
    pub j: f64,
    /// Final energy expectation alone.
    pub energy: f64,
    /// `j - E_g`.
    pub j_error: f64,
    /// `energy - E_g`; the number compared against chemical accuracy.
    pub energy_error: f64,
}

/// Machine-readable summary of one run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Summary {
    pub problem: String,
    pub encoding: EncodingKind,
    pub mode: RunMode,
    pub seed: u64,
    pub ground_energy: f64,
    pub agents: Vec<AgentSummary>,
    /// Agent with the lowest `j_error` (equals the minimum over the final
    /// trace values, shifted by the ground energy).
    pub best_agent: usize,
    pub best_j_error: f64,
    /// Minimum `energy_error` over agents.
    pub best_energy_error: f64,
    pub initial_diameter: f64,
    pub final_diameter: f64,
}

/// Artifacts of one `optimize` invocation.
#[derive(Debug)]
pub struct OptimizeOutcome {
    pub run_dir: PathBuf,
    pub summary: Summary,
    pub history: History,
    pub final_configs: Vec<Configuration>,
    pub final_traces: Vec<Vec<f64>>,
}

fn agent_summaries(
    resolved: &ResolvedProblem,
    outcome: &RunOutcome,
    mu: f64,
) -> Result<Vec<AgentSummary>, HarnessError> {
    let e_g = resolved.ground_energy;
    outcome
        .ensemble
        .agents()
        .iter()
        .map(|agent| {
            let report = pulse::cost(
                &agent.config,
                &agent.pulses,
                &resolved.problem.h_targ,
                mu,
                &resolved.problem.encoding,
            )?;
            Ok(AgentSummary {
                j: report.total,
                energy: report.energy,
                j_error: report.total - e_g,
                energy_error: report.energy - e_g,
            })
        })
        .collect()
}

fn summarize(
    resolved: &ResolvedProblem,
    cfg: &RunConfig,
    outcome: &RunOutcome,
) -> Result<Summary, HarnessError> {
    let agents = agent_summaries(resolved, outcome, cfg.pulse.mu)?;
    let best_agent = agents
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.j_error.total_cmp(&b.1.j_error))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let best_energy_error = agents
        .iter()
        .map(|a| a.energy_error)
        .fold(f64::INFINITY, f64::min);
    Ok(Summary {
        problem: resolved.label.clone(),
        encoding: cfg.encoding,
        mode: cfg.mode,
        seed: cfg.seed,
        ground_energy: resolved.ground_energy,
        best_j_error: agents[best_agent].j_error,
        best_energy_error,
        best_agent,
        agents,
        initial_diameter: outcome
            .history
            .snapshots
            .first()
            .map(|s| s.diameter())
            .unwrap_or(0.0),
        final_diameter: outcome
            .history
            .snapshots
            .last()
            .map(|s| s.diameter())
            .unwrap_or(0.0),
    })
}

fn write_outputs(
    cfg: &RunConfig,
    label: &str,
    resolved: &ResolvedProblem,
    outcome: &RunOutcome,
) -> Result<OptimizeOutcome, HarnessError> {
    let run_dir = create_run_dir(&cfg.out, label)?;
    write_file(&run_dir.join("config.toml"), &cfg.to_toml_string())?;
    write_history_jsonl(&run_dir.join("history.jsonl"), &outcome.history)?;
    let final_configs: Vec<Configuration> = outcome
        .ensemble
        .agents()
        .iter()
        .map(|a| a.config.clone())
        .collect();
    write_json(&run_dir.join("final_configs.json"), &final_configs)?;
    write_json(&run_dir.join("final_traces.json"), &outcome.final_traces)?;
    let summary = summarize(resolved, cfg, outcome)?;
    write_json(&run_dir.join("summary.json"), &summary)?;
    Ok(OptimizeOutcome {
        run_dir,
        summary,
        history: outcome.history.clone(),
        final_configs,
        final_traces: outcome.final_traces.clone(),
    })
}

/// Sample the initial agent configurations of a run.
pub fn sample_initial_configs(
    cfg: &RunConfig,
    num_atoms: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<Configuration>, HarnessError> {
    let sampler = cfg.sampler.sampler(num_atoms)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| sampler.sample(&mut rng).map_err(HarnessError::from))
        .collect()
}

/// Run the configured experiment end to end and write its artifacts.
pub fn run_optimize(cfg: &RunConfig) -> Result<OptimizeOutcome, HarnessError> {
    cfg.validate()?;
    match cfg.mode {
        RunMode::PulseOnly => run_pulse_only(cfg),
        RunMode::Full | RunMode::FittedBaseline => {
            let resolved = resolve_problem(cfg, 0)?;
            let num_atoms = resolved.problem.encoding.num_atoms;
            let init = sample_initial_configs(
                cfg,
                num_atoms,
                cfg.cbo.num_agents,
                derive_seed(cfg.seed, &[TAG_INIT]),
            )?;
            let mut params = cfg.cbo;
            if cfg.mode == RunMode::FittedBaseline {
                params = CboParams { n_out: 0, ..params };
            }
            let spec = cfg.cost.to_spec(resolved.ground_energy);
            let outcome = cbo::run(
                &resolved.problem,
                &init,
                &cfg.pulse.settings(),
                &params,
                &spec,
                derive_seed(cfg.seed, &[TAG_RUN]),
            )?;
            let label = match cfg.mode {
                RunMode::Full => "optimize",
                RunMode::FittedBaseline => "fitted-baseline",
                RunMode::PulseOnly => unreachable!(),
            };
            write_outputs(cfg, label, &resolved, &outcome)
        }
    }
}

/// Optimize pulses for one fixed configuration (no position updates).
///
/// Equivalent to a direct [`pulse::optimize_pulses`] call with `n_final`
/// steps from the seeded initial pulse draw; the run artifacts keep the
/// same shape as a full run with a single agent and a single snapshot.
pub fn run_pulse_only(cfg: &RunConfig) -> Result<OptimizeOutcome, HarnessError> {
    cfg.validate()?;
    let path = cfg
        .configuration
        .as_ref()
        .ok_or_else(|| HarnessError::Config("pulse-only mode needs `configuration`".into()))?;
    let config = load_configuration(path)?;
    let resolved = resolve_problem(cfg, 0)?;
    if config.num_atoms() != resolved.problem.encoding.num_atoms {
        return Err(HarnessError::Config(format!(
            "configuration has {} atoms but the problem expects {}",
            config.num_atoms(),
            resolved.problem.encoding.num_atoms
        )));
    }
    let params = CboParams {
        n_out: 0,
        num_agents: 1,
        ..cfg.cbo
    };
    let spec = cfg.cost.to_spec(resolved.ground_energy);
    let outcome = cbo::run(
        &resolved.problem,
        std::slice::from_ref(&config),
        &cfg.pulse.settings(),
        &params,
        &spec,
        derive_seed(cfg.seed, &[TAG_RUN]),
    )?;
    write_outputs(cfg, "pulse-only", &resolved, &outcome)
}

/// Load a configuration JSON file (`{"positions": [[x, y], ...]}`).
pub fn load_configuration(path: &Path) -> Result<Configuration, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        HarnessError::Config(format!("malformed configuration {}: {e}", path.display()))
    })
}
