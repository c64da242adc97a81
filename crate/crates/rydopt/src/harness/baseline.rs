//! Fitting fair random baselines to completed runs.
//!
//! Consensus runs contract the ensemble, so their final configurations have
//! systematically smaller pairwise distances than fresh draws from the
//! initial box. This command pools the final-configuration distances of
//! every history found under a directory, fits `(R_min, R_max)` to that
//! distance distribution, and samples baseline configurations from the
//! fitted box.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::cbo::Snapshot;
use crate::configgen::{estimate_density, fit_box, FitOptions, FittedBox};
use crate::hardware::Configuration;

use super::config::RunConfig;
use super::{
    create_run_dir, derive_seed, read_history_jsonl, write_file, write_json, HarnessError,
};

const TAG_BASELINE: u64 = 3;

/// Fitted parameters together with estimation metadata, as written to
/// `fitted.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedParamsFile {
    pub r_min: f64,
    pub r_max: f64,
    pub kl: f64,
    pub kernel: String,
    pub bandwidth_rule: String,
    pub target_bandwidth: f64,
    pub pooled_distances: usize,
}

/// Artifacts of one `fit-baseline` invocation.
#[derive(Debug)]
pub struct FitBaselineOutcome {
    pub run_dir: PathBuf,
    pub fitted: FittedBox,
    pub baselines: Vec<Configuration>,
    pub pooled_distances: usize,
}

fn find_history_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
    let entries = std::fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| HarnessError::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            find_history_files(&path, out)?;
        } else if path.file_name().is_some_and(|n| n == "history.jsonl") {
            out.push(path);
        }
    }
    Ok(())
}

fn pairwise_distances_of(positions: &[[f64; 2]]) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            out.push(crate::hardware::dist(positions[i], positions[j]));
        }
    }
    out
}

/// Pool the final-configuration pairwise distances of every history file
/// found under `history_dir` (recursively). Returns the distances and the
/// atom count.
pub fn pool_final_distances(history_dir: &Path) -> Result<(Vec<f64>, usize), HarnessError> {
    let mut files = Vec::new();
    find_history_files(history_dir, &mut files)?;
    files.sort();
    if files.is_empty() {
        return Err(HarnessError::Config(format!(
            "no history.jsonl files under {}",
            history_dir.display()
        )));
    }
    let mut distances = Vec::new();
    let mut num_atoms = None;
    for file in &files {
        let history = read_history_jsonl(file)?;
        let last: &Snapshot = history.snapshots.last().ok_or_else(|| {
            HarnessError::Config(format!("history {} has no snapshots", file.display()))
        })?;
        for agent in &last.agents {
            match num_atoms {
                None => num_atoms = Some(agent.positions.len()),
                Some(m) if m != agent.positions.len() => {
                    return Err(HarnessError::Config(format!(
                        "inconsistent atom counts across histories ({} vs {})",
                        m,
                        agent.positions.len()
                    )));
                }
                _ => {}
            }
            distances.extend(pairwise_distances_of(&agent.positions));
        }
    }
    Ok((distances, num_atoms.unwrap_or(0)))
}

/// Fit a box sampler to the final configurations pooled from `history_dir`
/// and draw `n_samples` baseline configurations from it.
pub fn fit_baseline(
    cfg: &RunConfig,
    history_dir: &Path,
    n_samples: usize,
    fit: &FitOptions,
) -> Result<FitBaselineOutcome, HarnessError> {
    let (distances, num_atoms) = pool_final_distances(history_dir)?;
    if num_atoms < 2 {
        return Err(HarnessError::Config(format!(
            "pooled histories have {num_atoms} atoms; need at least 2"
        )));
    }
    let target = estimate_density(&distances)?;
    let fitted = fit_box(&target, num_atoms, fit)?;

    let sampler = fitted.sampler(num_atoms, cfg.sampler.max_resamples);
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(cfg.seed, &[TAG_BASELINE]));
    let baselines: Vec<Configuration> = (0..n_samples)
        .map(|_| sampler.sample(&mut rng).map_err(HarnessError::from))
        .collect::<Result<_, _>>()?;

    let run_dir = create_run_dir(&cfg.out, "fit-baseline")?;
    write_json(
        &run_dir.join("fitted.json"),
        &FittedParamsFile {
            r_min: fitted.r_min,
            r_max: fitted.r_max,
            kl: fitted.kl,
            kernel: "gaussian_reflected".into(),
            bandwidth_rule: "silverman".into(),
            target_bandwidth: target.bandwidth(),
            pooled_distances: distances.len(),
        },
    )?;
    write_json(&run_dir.join("baseline_configs.json"), &baselines)?;
    let mut csv = Vec::new();
    target
        .write_csv(&mut csv)
        .map_err(|e| HarnessError::io(&run_dir.join("target_density.csv"), e))?;
    write_file(
        &run_dir.join("target_density.csv"),
        &String::from_utf8(csv).expect("csv is utf-8"),
    )?;

    Ok(FitBaselineOutcome {
        run_dir,
        fitted,
        baselines,
        pooled_distances: distances.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cbo::{AgentSnapshot, History};
    use crate::harness::write_history_jsonl;

    fn fake_history(dir: &Path, name: &str, positions: Vec<Vec<[f64; 2]>>) {
        let run_dir = dir.join(name);
        std::fs::create_dir_all(&run_dir).unwrap();
        let history = History {
            snapshots: vec![Snapshot {
                n: 0,
                agents: positions
                    .into_iter()
                    .map(|p| AgentSnapshot {
                        positions: p,
                        f: 0.0,
                        j: 0.0,
                    })
                    .collect(),
                v_f: vec![],
            }],
        };
        write_history_jsonl(&run_dir.join("history.jsonl"), &history).unwrap();
    }

    #[test]
    fn pooled_distance_count_matches_formula() {
        // one run of K = 3 agents with m = 4 atoms: K * m(m-1)/2 = 18
        let tmp = tempfile::tempdir().unwrap();
        let agent = |s: f64| {
            vec![
                [0.0, 0.0],
                [1.0 + s, 0.0],
                [0.0, 1.0 + s],
                [1.0, 1.0 + s],
            ]
        };
        fake_history(tmp.path(), "run-a", vec![agent(0.0), agent(0.1), agent(0.2)]);
        let (distances, m) = pool_final_distances(tmp.path()).unwrap();
        assert_eq!(m, 4);
        assert_eq!(distances.len(), 3 * 6);
    }

    #[test]
    fn empty_history_dir_is_a_config_error() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(
            pool_final_distances(tmp.path()),
            Err(HarnessError::Config(_))
        ));
    }

    #[test]
    fn baselines_respect_fitted_r_min() {
        let tmp = tempfile::tempdir().unwrap();
        // two runs whose final configurations sit near pair distance ~1.2
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let sampler = crate::configgen::BoxSampler::new(1.0, 1.5, 3, 10_000).unwrap();
        for name in ["run-a", "run-b"] {
            let agents: Vec<Vec<[f64; 2]>> = (0..4)
                .map(|_| sampler.sample(&mut rng).unwrap().positions().to_vec())
                .collect();
            fake_history(tmp.path(), name, agents);
        }
        let cfg = RunConfig {
            out: tmp.path().join("out"),
            ..RunConfig::default()
        };
        // small grid keeps the test fast
        let fit = FitOptions {
            r_min_steps: 5,
            r_max_steps: 5,
            mc_distance_samples: 2_000,
            ..FitOptions::default()
        };
        let outcome = fit_baseline(&cfg, tmp.path(), 6, &fit).unwrap();
        assert_eq!(outcome.baselines.len(), 6);
        for b in &outcome.baselines {
            assert!(b.min_pairwise_distance().unwrap() >= outcome.fitted.r_min);
        }
        assert!(outcome.run_dir.join("fitted.json").is_file());
        assert!(outcome.run_dir.join("target_density.csv").is_file());
        assert!(outcome.run_dir.join("baseline_configs.json").is_file());
    }
}
