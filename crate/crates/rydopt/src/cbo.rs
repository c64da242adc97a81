//! Consensus-based optimization over atom configurations.
//!
//! An ensemble of `K` agents carries candidate configurations `X^(k)`
//! together with their own pulse sets. Each outer iteration partially
//! optimizes every agent's pulses (the inner loop), scores the agents with
//! a cost `f`, forms the weighted consensus point
//!
//! ```text
//!   v_f = sum_k X^(k) w_k / sum_k w_k,    w_k = exp(-alpha f(X^(k))),
//! ```
//!
//! and then moves every agent toward it with multiplicative exploration
//! noise:
//!
//! ```text
//!   X <- X - lambda (X - v_f) dtau + sqrt(2) sigma |X - v_f| N sqrt(dtau).
//! ```
//!
//! Weights are computed after subtracting the minimum cost, which leaves
//! `v_f` unchanged but cannot underflow. For large `alpha` the consensus
//! point concentrates on the current best agent; with `sigma = 0` the
//! ensemble diameter contracts exactly by `(1 - lambda dtau)` per step.
//!
//! Agents are evaluated independently (and in parallel); each owns a seeded
//! RNG stream so the schedule cannot perturb results.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hardware::{Configuration, Encoding, HardwareError, PulseSet};
use crate::hilbert::DenseOperator;
use crate::pulse::{self, DescentOptions, PulseError};

#[derive(Debug, Error)]
pub enum CboError {
    #[error("invalid consensus parameters: {0}")]
    InvalidParams(String),
    #[error("ensemble has no agents")]
    EmptyEnsemble,
    #[error("consensus point degenerated: atoms {i} and {j} coincide")]
    DegenerateConsensus { i: usize, j: usize },
    #[error("agent {agent} failed at outer iteration {iteration}: {source}")]
    AgentFailure {
        iteration: usize,
        agent: usize,
        #[source]
        source: PulseError,
    },
    #[error("position update failed for agent {agent} at outer iteration {iteration}: {source}")]
    PositionUpdate {
        iteration: usize,
        agent: usize,
        #[source]
        source: HardwareError,
    },
}

/// How the exploration noise is scaled per coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Fresh standard normal per coordinate, scaled by that coordinate's
    /// own deviation from the consensus point. Keeps agents exploring along
    /// every axis independently.
    #[default]
    Componentwise,
    /// Fresh standard normal per coordinate, all scaled by the full
    /// (Frobenius) deviation norm of the agent.
    Isotropic,
}

/// Hyperparameters of the outer loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CboParams {
    /// Weight sharpness.
    pub alpha: f64,
    /// Drift coefficient.
    pub lambda: f64,
    /// Diffusion coefficient.
    pub sigma: f64,
    /// Outer time step.
    pub dtau: f64,
    /// Outer iterations.
    pub n_out: usize,
    /// Pulse-descent iterations per agent evaluation.
    pub n_in: usize,
    /// Pulse-descent iterations of the final energy determination.
    pub n_final: usize,
    /// Agent count (used by callers that generate the initial ensemble).
    pub num_agents: usize,
    pub noise: NoiseMode,
    /// Keep each agent's pulses across outer iterations (the nested scheme);
    /// `false` restarts every evaluation from the agent's initial pulses.
    pub warm_start: bool,
}

impl Default for CboParams {
    fn default() -> Self {
        Self {
            alpha: 4.0,
            lambda: 0.4,
            sigma: 0.1,
            dtau: 0.5,
            n_out: 20,
            n_in: 100,
            n_final: 500,
            num_agents: 12,
            noise: NoiseMode::Componentwise,
            warm_start: true,
        }
    }
}

impl CboParams {
    pub fn validate(&self) -> Result<(), CboError> {
        if !(self.alpha > 0.0) {
            return Err(CboError::InvalidParams(format!("alpha = {}", self.alpha)));
        }
        if !(self.lambda > 0.0) {
            return Err(CboError::InvalidParams(format!("lambda = {}", self.lambda)));
        }
        if !(self.sigma >= 0.0) {
            return Err(CboError::InvalidParams(format!("sigma = {}", self.sigma)));
        }
        if !(self.dtau > 0.0) {
            return Err(CboError::InvalidParams(format!("dtau = {}", self.dtau)));
        }
        if self.num_agents == 0 {
            return Err(CboError::InvalidParams("num_agents = 0".into()));
        }
        Ok(())
    }
}

/// Choice of the scalar cost an agent reports to the consensus update.
///
/// Every variant is *minimized* by the consensus dynamics (the exponential
/// weights favor small `f`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "variant")]
pub enum CostSpec {
    /// `log(J - E_g)`: the log-energy error after the inner iterations.
    /// Requires the exact ground energy. The logarithm widens the spread of
    /// `f` values across agents, making the weight sharpness less delicate
    /// to choose.
    LogEnergyError { ground_energy: f64 },
    /// `J` itself; the fallback when the ground energy is not known
    /// (typically paired with a larger `alpha`).
    RawEnergy,
    /// `J - nu * ||grad_z J||`: rewards configurations whose pulse landscape
    /// still has large gradients after the inner iterations.
    GradientRegularized { nu: f64 },
}

impl CostSpec {
    pub fn needs_gradient_norm(&self) -> bool {
        matches!(self, CostSpec::GradientRegularized { .. })
    }
}

/// Scalar agent cost for a completed inner optimization.
///
/// Under `LogEnergyError`, a cost at or below the ground energy (possible
/// only through numerical undershoot) is clamped to a `1e-12` floor before
/// the logarithm and flagged with a warning.
pub fn agent_cost(j_value: f64, grad_norm: f64, spec: &CostSpec) -> f64 {
    match *spec {
        CostSpec::LogEnergyError { ground_energy } => {
            let mut arg = j_value - ground_energy;
            if arg <= 0.0 {
                log::warn!(
                    "cost {j_value} at or below ground energy {ground_energy}; \
                     clamping log argument"
                );
                arg = 1e-12;
            }
            arg.max(1e-12).ln()
        }
        CostSpec::RawEnergy => j_value,
        CostSpec::GradientRegularized { nu } => j_value - nu * grad_norm,
    }
}

/// One agent: a configuration, its pulses, and the latest evaluation.
#[derive(Debug, Clone)]
pub struct Agent {
    pub config: Configuration,
    pub pulses: PulseSet,
    /// The pulses the agent started from (used by cold restarts).
    pub initial_pulses: PulseSet,
    /// Latest scalar cost `f`.
    pub f: f64,
    /// Latest pulse cost `J`.
    pub j: f64,
    pub seed: u64,
    rng: ChaCha12Rng,
}

/// The interacting particle system of the outer loop.
#[derive(Debug, Clone)]
pub struct AgentEnsemble {
    agents: Vec<Agent>,
    iteration: usize,
}

impl AgentEnsemble {
    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Maximum pairwise configuration distance.
    pub fn diameter(&self) -> f64 {
        let mut d = 0.0f64;
        for i in 0..self.agents.len() {
            for j in (i + 1)..self.agents.len() {
                d = d.max(self.agents[i].config.distance_to(&self.agents[j].config));
            }
        }
        d
    }

    /// Index of the agent with the lowest scalar cost.
    pub fn argmin_f(&self) -> usize {
        let mut best = 0;
        for (i, a) in self.agents.iter().enumerate() {
            if a.f < self.agents[best].f {
                best = i;
            }
        }
        best
    }

    /// Index of the agent with the lowest pulse cost `J`.
    pub fn argmin_j(&self) -> usize {
        let mut best = 0;
        for (i, a) in self.agents.iter().enumerate() {
            if a.j < self.agents[best].j {
                best = i;
            }
        }
        best
    }
}

/// The exponentially weighted mean configuration of the ensemble,
/// coordinate-wise over the ordered position lists.
pub fn consensus_point(ensemble: &AgentEnsemble, alpha: f64) -> Result<Configuration, CboError> {
    let items: Vec<(&Configuration, f64)> = ensemble
        .agents
        .iter()
        .map(|a| (&a.config, a.f))
        .collect();
    weighted_consensus(&items, alpha)
}

/// [`consensus_point`] on explicit `(configuration, cost)` pairs.
pub fn weighted_consensus(
    items: &[(&Configuration, f64)],
    alpha: f64,
) -> Result<Configuration, CboError> {
    if items.is_empty() {
        return Err(CboError::EmptyEnsemble);
    }
    let m = items[0].0.num_atoms();
    let f_min = items
        .iter()
        .map(|(_, f)| *f)
        .fold(f64::INFINITY, f64::min);
    let mut weight_sum = 0.0;
    let mut mean = vec![[0.0f64; 2]; m];
    for (config, f) in items {
        let w = (-alpha * (f - f_min)).exp();
        weight_sum += w;
        for (acc, p) in mean.iter_mut().zip(config.positions()) {
            acc[0] += w * p[0];
            acc[1] += w * p[1];
        }
    }
    for acc in &mut mean {
        acc[0] /= weight_sum;
        acc[1] /= weight_sum;
    }
    Configuration::new(mean).map_err(|e| match e {
        HardwareError::CoincidentAtoms { i, j, .. } => CboError::DegenerateConsensus { i, j },
        other => CboError::InvalidParams(other.to_string()),
    })
}

/// One discrete consensus update of every agent position. Costs are not
/// re-evaluated here; the caller recomputes them on the next iteration.
pub fn cbo_step(
    ensemble: &mut AgentEnsemble,
    v_f: &Configuration,
    params: &CboParams,
) -> Result<(), CboError> {
    params.validate()?;
    if params.lambda * params.dtau >= 1.0 {
        log::warn!(
            "lambda * dtau = {} >= 1: drift overshoots the consensus point",
            params.lambda * params.dtau
        );
    }
    let iteration = ensemble.iteration;
    for (idx, agent) in ensemble.agents.iter_mut().enumerate() {
        let mut new_positions = Vec::with_capacity(agent.config.num_atoms());
        let frob = agent.config.distance_to(v_f);
        for (p, target) in agent.config.positions().iter().zip(v_f.positions()) {
            let mut q = [0.0f64; 2];
            for c in 0..2 {
                let dev = p[c] - target[c];
                let amp = match params.noise {
                    NoiseMode::Componentwise => dev.abs(),
                    NoiseMode::Isotropic => frob,
                };
                let noise: f64 = agent.rng.sample(StandardNormal);
                q[c] = p[c] - params.lambda * dev * params.dtau
                    + std::f64::consts::SQRT_2 * params.sigma * amp * noise * params.dtau.sqrt();
            }
            new_positions.push(q);
        }
        agent.config = Configuration::new(new_positions).map_err(|e| CboError::PositionUpdate {
            iteration,
            agent: idx,
            source: e,
        })?;
    }
    ensemble.iteration += 1;
    Ok(())
}

/// A ground-state problem instance for the outer optimizer.
#[derive(Debug, Clone)]
pub struct Problem {
    pub h_targ: DenseOperator,
    pub encoding: Encoding,
}

impl Problem {
    pub fn new(h_targ: DenseOperator, encoding: Encoding) -> Result<Self, CboError> {
        if h_targ.dim() != encoding.hilbert_dim() {
            return Err(CboError::InvalidParams(format!(
                "target dimension {} does not match encoding dimension {}",
                h_targ.dim(),
                encoding.hilbert_dim()
            )));
        }
        Ok(Self { h_targ, encoding })
    }
}

/// Pulse-grid and inner-loop settings shared by every agent.
#[derive(Debug, Clone, Copy)]
pub struct PulseSettings {
    pub steps: usize,
    pub duration: f64,
    pub z_max: f64,
    pub mu: f64,
    pub rate: f64,
    /// Amplitude of the per-channel constant initial pulse draw.
    pub init_amplitude: f64,
    pub descent: DescentOptions,
}

impl Default for PulseSettings {
    fn default() -> Self {
        Self {
            steps: 100,
            duration: 1.0,
            z_max: 20.0,
            mu: 1e-4,
            rate: 1.0,
            init_amplitude: 2.0,
            descent: DescentOptions::default(),
        }
    }
}

/// Per-agent state recorded in one history snapshot.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AgentSnapshot {
    pub positions: Vec<[f64; 2]>,
    pub f: f64,
    #[serde(rename = "J")]
    pub j: f64,
}

/// State of the ensemble after one outer iteration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Snapshot {
    pub n: usize,
    pub agents: Vec<AgentSnapshot>,
    pub v_f: Vec<[f64; 2]>,
}

impl Snapshot {
    /// Maximum pairwise agent configuration distance in this snapshot.
    pub fn diameter(&self) -> f64 {
        let dist = |a: &AgentSnapshot, b: &AgentSnapshot| -> f64 {
            a.positions
                .iter()
                .zip(&b.positions)
                .map(|(p, q)| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let mut d = 0.0f64;
        for i in 0..self.agents.len() {
            for j in (i + 1)..self.agents.len() {
                d = d.max(dist(&self.agents[i], &self.agents[j]));
            }
        }
        d
    }
}

/// One snapshot per outer iteration plus a final snapshot after the
/// long pulse optimization.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct History {
    pub snapshots: Vec<Snapshot>,
}

/// Everything produced by a full nested run.
#[derive(Debug)]
pub struct RunOutcome {
    pub ensemble: AgentEnsemble,
    pub history: History,
    /// Final-determination cost traces, one per agent.
    pub final_traces: Vec<Vec<f64>>,
}

struct Evaluation {
    pulses: PulseSet,
    j: f64,
    f: f64,
}

fn evaluate_agent(
    agent: &Agent,
    problem: &Problem,
    settings: &PulseSettings,
    spec: &CostSpec,
    steps: usize,
    warm: bool,
) -> Result<Evaluation, PulseError> {
    let start = if warm {
        &agent.pulses
    } else {
        &agent.initial_pulses
    };
    let (pulses, trace) = pulse::optimize_pulses(
        &agent.config,
        start,
        &problem.h_targ,
        settings.mu,
        &problem.encoding,
        steps,
        settings.rate,
        &settings.descent,
    )?;
    let j = *trace.last().unwrap();
    let grad_norm = if spec.needs_gradient_norm() {
        pulse::pulse_gradient(
            &agent.config,
            &pulses,
            &problem.h_targ,
            settings.mu,
            &problem.encoding,
        )?
        .norm()
    } else {
        0.0
    };
    Ok(Evaluation {
        pulses,
        j,
        f: agent_cost(j, grad_norm, spec),
    })
}

fn evaluate_agent_traced(
    agent: &Agent,
    problem: &Problem,
    settings: &PulseSettings,
    spec: &CostSpec,
    steps: usize,
    warm: bool,
) -> Result<(Evaluation, Vec<f64>), PulseError> {
    let start = if warm {
        &agent.pulses
    } else {
        &agent.initial_pulses
    };
    let (pulses, trace) = pulse::optimize_pulses(
        &agent.config,
        start,
        &problem.h_targ,
        settings.mu,
        &problem.encoding,
        steps,
        settings.rate,
        &settings.descent,
    )?;
    let j = *trace.last().unwrap();
    let grad_norm = if spec.needs_gradient_norm() {
        pulse::pulse_gradient(
            &agent.config,
            &pulses,
            &problem.h_targ,
            settings.mu,
            &problem.encoding,
        )?
        .norm()
    } else {
        0.0
    };
    Ok((
        Evaluation {
            pulses,
            j,
            f: agent_cost(j, grad_norm, spec),
        },
        trace,
    ))
}

fn snapshot_of(ensemble: &AgentEnsemble, n: usize, v_f: &Configuration) -> Snapshot {
    Snapshot {
        n,
        agents: ensemble
            .agents
            .iter()
            .map(|a| AgentSnapshot {
                positions: a.config.positions().to_vec(),
                f: a.f,
                j: a.j,
            })
            .collect(),
        v_f: v_f.positions().to_vec(),
    }
}

/// Run the full nested optimization: `n_out` consensus iterations with
/// `n_in` pulse-descent steps per agent evaluation, then an `n_final`-step
/// final energy determination per agent.
///
/// The history holds one snapshot per outer iteration (positions, costs and
/// the consensus point used for the update) plus a final snapshot. Identical
/// seeds give bitwise-identical outcomes; agents are evaluated in parallel.
pub fn run(
    problem: &Problem,
    init: &[Configuration],
    settings: &PulseSettings,
    params: &CboParams,
    spec: &CostSpec,
    seed: u64,
) -> Result<RunOutcome, CboError> {
    params.validate()?;
    if init.is_empty() {
        return Err(CboError::EmptyEnsemble);
    }
    for (i, cfg) in init.iter().enumerate() {
        if cfg.num_atoms() != problem.encoding.num_atoms {
            return Err(CboError::InvalidParams(format!(
                "initial configuration {i} has {} atoms, encoding expects {}",
                cfg.num_atoms(),
                problem.encoding.num_atoms
            )));
        }
    }

    let mut seeder = ChaCha12Rng::seed_from_u64(seed);
    let num_channels = problem.encoding.num_channels();
    let agents = init
        .iter()
        .map(|cfg| {
            let agent_seed: u64 = seeder.gen();
            let mut rng = ChaCha12Rng::seed_from_u64(agent_seed);
            let z0 = PulseSet::random_constant(
                num_channels,
                settings.steps,
                settings.init_amplitude,
                settings.z_max,
                settings.duration,
                &mut rng,
            );
            Agent {
                config: cfg.clone(),
                pulses: z0.clone(),
                initial_pulses: z0,
                f: f64::INFINITY,
                j: f64::INFINITY,
                seed: agent_seed,
                rng,
            }
        })
        .collect::<Vec<_>>();
    let mut ensemble = AgentEnsemble {
        agents,
        iteration: 0,
    };
    let mut history = History::default();

    for n in 0..params.n_out {
        let evals: Vec<Result<Evaluation, PulseError>> = ensemble
            .agents
            .par_iter()
            .map(|agent| {
                evaluate_agent(agent, problem, settings, spec, params.n_in, params.warm_start)
            })
            .collect();
        for (idx, res) in evals.into_iter().enumerate() {
            let eval = res.map_err(|source| CboError::AgentFailure {
                iteration: n,
                agent: idx,
                source,
            })?;
            let agent = &mut ensemble.agents[idx];
            agent.pulses = eval.pulses;
            agent.j = eval.j;
            agent.f = eval.f;
        }
        let v_f = consensus_point(&ensemble, params.alpha)?;
        history.snapshots.push(snapshot_of(&ensemble, n, &v_f));
        cbo_step(&mut ensemble, &v_f, params)?;
    }

    // Final energy determination
    let finals: Vec<Result<(Evaluation, Vec<f64>), PulseError>> = ensemble
        .agents
        .par_iter()
        .map(|agent| {
            evaluate_agent_traced(
                agent,
                problem,
                settings,
                spec,
                params.n_final,
                params.warm_start,
            )
        })
        .collect();
    let mut final_traces = Vec::with_capacity(ensemble.agents.len());
    for (idx, res) in finals.into_iter().enumerate() {
        let (eval, trace) = res.map_err(|source| CboError::AgentFailure {
            iteration: params.n_out,
            agent: idx,
            source,
        })?;
        let agent = &mut ensemble.agents[idx];
        agent.pulses = eval.pulses;
        agent.j = eval.j;
        agent.f = eval.f;
        final_traces.push(trace);
    }
    let v_f = consensus_point(&ensemble, params.alpha)?;
    history
        .snapshots
        .push(snapshot_of(&ensemble, params.n_out, &v_f));

    Ok(RunOutcome {
        ensemble,
        history,
        final_traces,
    })
}

/// Build a deterministic ensemble for unit-style tests and small tools:
/// fixed configurations, fixed costs, no pulse state beyond zeros.
pub fn ensemble_from_parts(configs: Vec<Configuration>, costs: Vec<f64>, seed: u64) -> AgentEnsemble {
    assert_eq!(configs.len(), costs.len());
    let mut seeder = ChaCha12Rng::seed_from_u64(seed);
    let agents = configs
        .into_iter()
        .zip(costs)
        .map(|(config, f)| {
            let agent_seed: u64 = seeder.gen();
            let z = PulseSet::zeros(1, 1, 1.0, 1.0);
            Agent {
                config,
                pulses: z.clone(),
                initial_pulses: z,
                f,
                j: f,
                seed: agent_seed,
                rng: ChaCha12Rng::seed_from_u64(agent_seed),
            }
        })
        .collect();
    AgentEnsemble {
        agents,
        iteration: 0,
    }
}

/// Convenience: the `L x K` zero matrix sized for an encoding/grid, useful
/// when constructing pulse sets by hand.
pub fn zero_pulse_values(enc: &Encoding, steps: usize) -> DMatrix<f64> {
    DMatrix::zeros(enc.num_channels(), steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hardware::EncodingKind;
    use crate::hilbert::{materialize, PauliSum, PauliTerm};
    use approx::assert_relative_eq;

    fn cfg(points: &[[f64; 2]]) -> Configuration {
        Configuration::new(points.to_vec()).unwrap()
    }

    #[test]
    fn agent_cost_variants() {
        let spec = CostSpec::LogEnergyError { ground_energy: -2.0 };
        assert_relative_eq!(agent_cost(-1.0, 0.0, &spec), 0.0); // log 1
        assert_relative_eq!(agent_cost(5.0, 0.0, &CostSpec::RawEnergy), 5.0);
        let spec = CostSpec::GradientRegularized { nu: 0.5 };
        assert_relative_eq!(agent_cost(5.0, 2.0, &spec), 4.0);
    }

    #[test]
    fn agent_cost_clamps_ground_energy_undershoot() {
        let spec = CostSpec::LogEnergyError { ground_energy: 1.0 };
        let f = agent_cost(1.0 - 1e-15, 0.0, &spec);
        assert_relative_eq!(f, (1e-12f64).ln());
    }

    #[test]
    fn lower_energy_error_gives_lower_agent_cost() {
        // the consensus weights favor small f, so better energies must map
        // to smaller cost values
        let spec = CostSpec::LogEnergyError { ground_energy: -2.0 };
        assert!(agent_cost(-1.9, 0.0, &spec) < agent_cost(-1.0, 0.0, &spec));
    }

    #[test]
    fn consensus_single_agent_is_identity() {
        let e = ensemble_from_parts(vec![cfg(&[[0.3, -0.7], [1.2, 0.4]])], vec![3.0], 1);
        let v = consensus_point(&e, 4.0).unwrap();
        assert_eq!(v.positions(), e.agents()[0].config.positions());
    }

    #[test]
    fn consensus_equal_costs_is_midpoint() {
        let e = ensemble_from_parts(
            vec![cfg(&[[0.0, 0.0], [1.0, 0.0]]), cfg(&[[2.0, 2.0], [3.0, 4.0]])],
            vec![1.5, 1.5],
            2,
        );
        let v = consensus_point(&e, 4.0).unwrap();
        assert_relative_eq!(v.positions()[0][0], 1.0);
        assert_relative_eq!(v.positions()[0][1], 1.0);
        assert_relative_eq!(v.positions()[1][0], 2.0);
        assert_relative_eq!(v.positions()[1][1], 2.0);
    }

    #[test]
    fn consensus_large_alpha_selects_argmin() {
        let best = cfg(&[[0.1, 0.2], [1.1, -0.4]]);
        let e = ensemble_from_parts(
            vec![cfg(&[[5.0, 5.0], [6.0, 5.0]]), best.clone(), cfg(&[[-3.0, 2.0], [0.0, 9.0]])],
            vec![2.0, 0.5, 1.0],
            3,
        );
        let v = consensus_point(&e, 1e6).unwrap();
        for (p, q) in v.positions().iter().zip(best.positions()) {
            assert!((p[0] - q[0]).abs() < 1e-9);
            assert!((p[1] - q[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn consensus_is_shift_invariant_and_in_hull() {
        let e1 = ensemble_from_parts(
            vec![cfg(&[[0.0, 1.0], [2.0, 0.0]]), cfg(&[[1.0, 3.0], [4.0, 1.0]])],
            vec![0.3, 1.9],
            4,
        );
        let e2 = ensemble_from_parts(
            vec![cfg(&[[0.0, 1.0], [2.0, 0.0]]), cfg(&[[1.0, 3.0], [4.0, 1.0]])],
            vec![0.3 + 17.0, 1.9 + 17.0],
            4,
        );
        let v1 = consensus_point(&e1, 4.0).unwrap();
        let v2 = consensus_point(&e2, 4.0).unwrap();
        for (p, q) in v1.positions().iter().zip(v2.positions()) {
            assert!((p[0] - q[0]).abs() < 1e-12);
            assert!((p[1] - q[1]).abs() < 1e-12);
        }
        // convex hull, coordinate-wise
        for (a, p) in v1.positions().iter().enumerate() {
            for c in 0..2 {
                let lo = e1.agents()[0].config.positions()[a][c]
                    .min(e1.agents()[1].config.positions()[a][c]);
                let hi = e1.agents()[0].config.positions()[a][c]
                    .max(e1.agents()[1].config.positions()[a][c]);
                assert!(p[c] >= lo && p[c] <= hi);
            }
        }
    }

    #[test]
    fn consensus_distance_to_argmin_shrinks_with_alpha() {
        let best = cfg(&[[0.0, 0.0], [1.0, 0.0]]);
        let e = ensemble_from_parts(
            vec![best.clone(), cfg(&[[3.0, 1.0], [4.0, 2.0]]), cfg(&[[1.0, 5.0], [2.0, 6.0]])],
            vec![0.1, 0.8, 1.4],
            5,
        );
        let mut last = f64::INFINITY;
        for alpha in [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 64.0] {
            let v = consensus_point(&e, alpha).unwrap();
            let d = v.distance_to(&best);
            assert!(d <= last + 1e-15, "alpha {alpha}: {d} > {last}");
            last = d;
        }
    }

    #[test]
    fn consensus_depends_on_atom_ordering() {
        // permuting one agent's atom list must move v_f: atoms are
        // distinguishable
        let e_orig = ensemble_from_parts(
            vec![cfg(&[[0.0, 0.0], [1.0, 0.0]]), cfg(&[[2.0, 1.0], [5.0, 3.0]])],
            vec![0.4, 0.9],
            6,
        );
        let e_perm = ensemble_from_parts(
            vec![cfg(&[[0.0, 0.0], [1.0, 0.0]]), cfg(&[[5.0, 3.0], [2.0, 1.0]])],
            vec![0.4, 0.9],
            6,
        );
        let v1 = consensus_point(&e_orig, 4.0).unwrap();
        let v2 = consensus_point(&e_perm, 4.0).unwrap();
        assert!(v1.distance_to(&v2) > 1e-6);
    }

    #[test]
    fn step_fixed_point_and_arithmetic() {
        let params = CboParams {
            sigma: 0.0,
            lambda: 0.4,
            dtau: 0.5,
            ..CboParams::default()
        };
        // agent at v_f stays; agent 1 away moves to 0.8
        let mut e = ensemble_from_parts(
            vec![cfg(&[[0.0, 0.0], [1.0, 0.0]]), cfg(&[[1.0, 0.0], [2.0, 0.0]])],
            vec![0.0, 1.0],
            7,
        );
        let v_f = cfg(&[[0.0, 0.0], [1.0, 0.0]]);
        cbo_step(&mut e, &v_f, &params).unwrap();
        assert_eq!(e.agents()[0].config.positions(), v_f.positions());
        assert_relative_eq!(e.agents()[1].config.positions()[0][0], 0.8);
        assert_relative_eq!(e.agents()[1].config.positions()[1][0], 1.8);
        assert_eq!(e.iteration(), 1);
    }

    #[test]
    fn deterministic_contraction_without_noise() {
        let params = CboParams {
            sigma: 0.0,
            lambda: 0.4,
            dtau: 0.5,
            ..CboParams::default()
        };
        let mut e = ensemble_from_parts(
            vec![
                cfg(&[[0.0, 0.0], [1.0, 0.0]]),
                cfg(&[[2.0, 3.0], [4.0, -1.0]]),
                cfg(&[[-1.0, 2.0], [0.5, 2.5]]),
            ],
            vec![0.2, 0.9, 0.5],
            8,
        );
        let d0 = e.diameter();
        let n = 7;
        for _ in 0..n {
            let v_f = consensus_point(&e, 4.0).unwrap();
            cbo_step(&mut e, &v_f, &params).unwrap();
        }
        let expected = d0 * (1.0 - 0.4 * 0.5f64).powi(n);
        assert_relative_eq!(e.diameter(), expected, max_relative = 1e-12);
    }

    fn tiny_problem() -> (Problem, Vec<Configuration>) {
        let enc = Encoding::new(EncodingKind::Dipole, 2);
        let p = PauliSum::new(2, vec![PauliTerm::parse(1.0, "ZZ").unwrap()]).unwrap();
        let h = materialize(&p, 2).unwrap();
        let problem = Problem::new(h, enc).unwrap();
        let init = vec![
            cfg(&[[0.0, 0.0], [1.0, 0.0]]),
            cfg(&[[0.2, 0.4], [1.5, 0.3]]),
            cfg(&[[-0.5, 0.1], [0.8, -0.9]]),
        ];
        (problem, init)
    }

    #[test]
    fn run_zero_outer_iterations_gives_single_snapshot() {
        let (problem, init) = tiny_problem();
        let settings = PulseSettings {
            steps: 12,
            ..PulseSettings::default()
        };
        let params = CboParams {
            n_out: 0,
            n_in: 5,
            n_final: 8,
            num_agents: init.len(),
            ..CboParams::default()
        };
        let spec = CostSpec::RawEnergy;
        let out = run(&problem, &init, &settings, &params, &spec, 99).unwrap();
        assert_eq!(out.history.snapshots.len(), 1);
        assert_eq!(out.final_traces.len(), 3);
        assert_eq!(out.final_traces[0].len(), 9);
        // positions unchanged
        for (agent, orig) in out.ensemble.agents().iter().zip(&init) {
            assert_eq!(agent.config.positions(), orig.positions());
        }
    }

    #[test]
    fn run_single_agent_without_noise_never_moves() {
        let (problem, init) = tiny_problem();
        let settings = PulseSettings {
            steps: 12,
            ..PulseSettings::default()
        };
        let params = CboParams {
            n_out: 4,
            n_in: 3,
            n_final: 3,
            sigma: 0.0,
            num_agents: 1,
            ..CboParams::default()
        };
        let out = run(
            &problem,
            &init[..1],
            &settings,
            &params,
            &CostSpec::RawEnergy,
            5,
        )
        .unwrap();
        assert_eq!(
            out.ensemble.agents()[0].config.positions(),
            init[0].positions()
        );
        assert_eq!(out.history.snapshots.len(), 5);
    }

    #[test]
    fn run_is_bitwise_reproducible() {
        let (problem, init) = tiny_problem();
        let settings = PulseSettings {
            steps: 10,
            ..PulseSettings::default()
        };
        let params = CboParams {
            n_out: 3,
            n_in: 4,
            n_final: 5,
            num_agents: init.len(),
            ..CboParams::default()
        };
        let spec = CostSpec::RawEnergy;
        let a = run(&problem, &init, &settings, &params, &spec, 1234).unwrap();
        let b = run(&problem, &init, &settings, &params, &spec, 1234).unwrap();
        let ja = serde_json::to_string(&a.history).unwrap();
        let jb = serde_json::to_string(&b.history).unwrap();
        assert_eq!(ja, jb);
        assert_eq!(a.final_traces, b.final_traces);
    }

    #[test]
    fn snapshot_serialization_shape() {
        let snap = Snapshot {
            n: 2,
            agents: vec![AgentSnapshot {
                positions: vec![[0.0, 1.0]],
                f: 0.25,
                j: -1.5,
            }],
            v_f: vec![[0.5, 0.5]],
        };
        let json = serde_json::to_string(&snap).unwrap();
        assert!(json.contains("\"J\":-1.5"), "{json}");
        assert!(json.contains("\"v_f\""));
        let back: Snapshot = serde_json::from_str(&json).unwrap();
        assert_eq!(back, snap);
    }
}
