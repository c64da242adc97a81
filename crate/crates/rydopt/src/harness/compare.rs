//! Three-arm comparison: optimized configurations versus fitted and
//! initial random baselines.
//!
//! For every problem in the batch and every repetition seed, a full nested
//! run produces the `final` arm. The final configurations of all runs are
//! pooled, a box sampler is fitted to their distance distribution, and
//! `fitted`-arm configurations are drawn from it; the `initial` arm reuses
//! the exact configurations the runs started from. Both baseline arms get
//! the same final pulse-optimization budget at fixed positions. Each arm
//! contributes one row per agent with its log10 energy error.

use serde::{Deserialize, Serialize};
use std::path::PathBuf;

use crate::cbo::{self, CboParams};
use crate::configgen::{estimate_density, fit_box, FitOptions, FittedBox};
use crate::hardware::Configuration;

use super::config::{ProblemSource, RunConfig};
use super::optimize::sample_initial_configs;
use super::{
    create_run_dir, derive_seed, resolve_problem, write_file, write_json, HarnessError,
    ResolvedProblem,
};

const TAG_COMPARE_INIT: u64 = 11;
const TAG_COMPARE_RUN: u64 = 12;
const TAG_COMPARE_FIT: u64 = 13;
const TAG_COMPARE_FITTED: u64 = 14;
const TAG_ARM_INITIAL: u64 = 15;
const TAG_ARM_FITTED: u64 = 16;

/// Smallest energy error the comparison reports (numerical floor).
pub const ERROR_FLOOR: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompareArm {
    Initial,
    Fitted,
    Final,
}

impl CompareArm {
    pub fn label(self) -> &'static str {
        match self {
            CompareArm::Initial => "initial",
            CompareArm::Fitted => "fitted",
            CompareArm::Final => "final",
        }
    }
}

/// One CSV row: a single agent of one arm of one (problem, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub problem: String,
    pub seed: u64,
    pub arm: CompareArm,
    pub log10_error: f64,
}

/// Per-arm medians over all rows.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CompareMedians {
    pub initial: f64,
    pub fitted: f64,
    pub final_: f64,
}

#[derive(Debug)]
pub struct CompareOutcome {
    pub run_dir: PathBuf,
    pub csv_path: PathBuf,
    pub rows: Vec<CompareRow>,
    pub medians: CompareMedians,
    pub fitted: FittedBox,
}

fn median(mut xs: Vec<f64>) -> f64 {
    assert!(!xs.is_empty());
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn log10_errors(
    resolved: &ResolvedProblem,
    cfg: &RunConfig,
    outcome: &cbo::RunOutcome,
) -> Result<Vec<f64>, HarnessError> {
    outcome
        .ensemble
        .agents()
        .iter()
        .map(|agent| {
            let report = crate::pulse::cost(
                &agent.config,
                &agent.pulses,
                &resolved.problem.h_targ,
                cfg.pulse.mu,
                &resolved.problem.encoding,
            )?;
            let err = (report.energy - resolved.ground_energy).max(ERROR_FLOOR);
            Ok(err.log10())
        })
        .collect()
}

/// Evaluate one baseline arm: the given configurations, no position
/// updates, the full final pulse budget.
fn evaluate_arm(
    resolved: &ResolvedProblem,
    cfg: &RunConfig,
    configs: &[Configuration],
    seed: u64,
) -> Result<Vec<f64>, HarnessError> {
    let params = CboParams {
        n_out: 0,
        num_agents: configs.len(),
        ..cfg.cbo
    };
    let spec = cfg.cost.to_spec(resolved.ground_energy);
    let outcome = cbo::run(
        &resolved.problem,
        configs,
        &cfg.pulse.settings(),
        &params,
        &spec,
        seed,
    )?;
    log10_errors(resolved, cfg, &outcome)
}

/// Run the full comparison batch and write `compare.csv` plus medians.
///
/// Multi-problem batches require the random problem source (each member
/// offsets the Hamiltonian seed); other sources support `n_problems = 1`.
pub fn run_compare(
    cfg: &RunConfig,
    n_problems: usize,
    n_runs: usize,
    fit: &FitOptions,
) -> Result<CompareOutcome, HarnessError> {
    cfg.validate()?;
    if n_problems == 0 || n_runs == 0 {
        return Err(HarnessError::Config(
            "compare needs at least one problem and one run".into(),
        ));
    }
    if n_problems > 1 && !matches!(cfg.problem, ProblemSource::Random { .. }) {
        return Err(HarnessError::Config(
            "multi-problem compare batches need the random problem source".into(),
        ));
    }

    struct Cell {
        problem_idx: usize,
        run: u64,
        init: Vec<Configuration>,
        final_errors: Vec<f64>,
        final_positions: Vec<Vec<[f64; 2]>>,
    }

    let problems: Vec<ResolvedProblem> = (0..n_problems)
        .map(|p| resolve_problem(cfg, p as u64))
        .collect::<Result<_, _>>()?;
    let num_atoms = problems[0].problem.encoding.num_atoms;

    let mut cells = Vec::with_capacity(n_problems * n_runs);
    for (p, resolved) in problems.iter().enumerate() {
        for r in 0..n_runs as u64 {
            let init = sample_initial_configs(
                cfg,
                num_atoms,
                cfg.cbo.num_agents,
                derive_seed(cfg.seed, &[TAG_COMPARE_INIT, p as u64, r]),
            )?;
            let spec = cfg.cost.to_spec(resolved.ground_energy);
            let outcome = cbo::run(
                &resolved.problem,
                &init,
                &cfg.pulse.settings(),
                &cfg.cbo,
                &spec,
                derive_seed(cfg.seed, &[TAG_COMPARE_RUN, p as u64, r]),
            )?;
            let final_errors = log10_errors(resolved, cfg, &outcome)?;
            let final_positions = outcome
                .ensemble
                .agents()
                .iter()
                .map(|a| a.config.positions().to_vec())
                .collect();
            cells.push(Cell {
                problem_idx: p,
                run: r,
                init,
                final_errors,
                final_positions,
            });
        }
    }

    // fit one box to the distance distribution pooled over every run
    let mut pooled = Vec::new();
    for cell in &cells {
        for positions in &cell.final_positions {
            for i in 0..positions.len() {
                for j in (i + 1)..positions.len() {
                    pooled.push(crate::hardware::dist(positions[i], positions[j]));
                }
            }
        }
    }
    let target = estimate_density(&pooled)?;
    let fit_opts = FitOptions {
        seed: derive_seed(cfg.seed, &[TAG_COMPARE_FIT]),
        ..*fit
    };
    let fitted = fit_box(&target, num_atoms, &fit_opts)?;
    let fitted_sampler = fitted.sampler(num_atoms, cfg.sampler.max_resamples);

    let mut rows = Vec::new();
    for cell in &cells {
        let resolved = &problems[cell.problem_idx];
        let tags = [cell.problem_idx as u64, cell.run];

        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(derive_seed(
            cfg.seed,
            &[TAG_COMPARE_FITTED, tags[0], tags[1]],
        ));
        let fitted_configs: Vec<Configuration> = (0..cfg.cbo.num_agents)
            .map(|_| fitted_sampler.sample(&mut rng).map_err(HarnessError::from))
            .collect::<Result<_, _>>()?;

        let initial_errors = evaluate_arm(
            resolved,
            cfg,
            &cell.init,
            derive_seed(cfg.seed, &[TAG_ARM_INITIAL, tags[0], tags[1]]),
        )?;
        let fitted_errors = evaluate_arm(
            resolved,
            cfg,
            &fitted_configs,
            derive_seed(cfg.seed, &[TAG_ARM_FITTED, tags[0], tags[1]]),
        )?;

        for (arm, errors) in [
            (CompareArm::Initial, &initial_errors),
            (CompareArm::Fitted, &fitted_errors),
            (CompareArm::Final, &cell.final_errors),
        ] {
            for &e in errors.iter() {
                rows.push(CompareRow {
                    problem: resolved.label.clone(),
                    seed: cell.run,
                    arm,
                    log10_error: e,
                });
            }
        }
    }

    let arm_values = |arm: CompareArm| -> Vec<f64> {
        rows.iter()
            .filter(|r| r.arm == arm)
            .map(|r| r.log10_error)
            .collect()
    };
    let medians = CompareMedians {
        initial: median(arm_values(CompareArm::Initial)),
        fitted: median(arm_values(CompareArm::Fitted)),
        final_: median(arm_values(CompareArm::Final)),
    };

    let run_dir = create_run_dir(&cfg.out, "compare")?;
    write_file(&run_dir.join("config.toml"), &cfg.to_toml_string())?;
    let mut csv = String::from("problem,seed,arm,log10_error\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            row.problem,
            row.seed,
            row.arm.label(),
            row.log10_error
        ));
    }
    let csv_path = run_dir.join("compare.csv");
    write_file(&csv_path, &csv)?;
    write_json(&run_dir.join("medians.json"), &medians)?;
    write_json(
        &run_dir.join("fitted.json"),
        &serde_json::json!({
            "r_min": fitted.r_min,
            "r_max": fitted.r_max,
            "kl": fitted.kl,
        }),
    )?;

    Ok(CompareOutcome {
        run_dir,
        csv_path,
        rows,
        medians,
        fitted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians_are_medians() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn compare_row_counts_and_floor() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig {
            out: tmp.path().to_path_buf(),
            seed: 5,
            ..RunConfig::default()
        };
        cfg.problem = ProblemSource::Random {
            num_qubits: 2,
            inclusion_prob: 0.3,
            coeff_seed: 9,
        };
        cfg.cbo.num_agents = 2;
        cfg.cbo.n_out = 1;
        cfg.cbo.n_in = 2;
        cfg.cbo.n_final = 3;
        cfg.pulse.steps = 8;
        let fit = FitOptions {
            r_min_steps: 3,
            r_max_steps: 3,
            mc_distance_samples: 500,
            ..FitOptions::default()
        };
        let out = run_compare(&cfg, 2, 2, &fit).unwrap();
        // rows = runs x problems x 3 arms x agents
        assert_eq!(out.rows.len(), 2 * 2 * 3 * 2);
        assert!(out.rows.iter().all(|r| r.log10_error >= -16.0));
        let text = std::fs::read_to_string(&out.csv_path).unwrap();
        assert_eq!(text.lines().count(), 1 + out.rows.len());
        assert!(text.starts_with("problem,seed,arm,log10_error"));
        // two distinct problem labels present
        let mut labels: Vec<&str> = out.rows.iter().map(|r| r.problem.as_str()).collect();
        labels.sort();
        labels.dedup();
        assert_eq!(labels.len(), 2);
    }

    #[test]
    fn multi_problem_batches_need_random_source() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            out: tmp.path().to_path_buf(),
            ..RunConfig::default()
        };
        assert!(matches!(
            run_compare(&cfg, 2, 1, &FitOptions::default()),
            Err(HarnessError::Config(_))
        ));
    }
}
