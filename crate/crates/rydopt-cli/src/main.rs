//! Command-line experiment harness.
//!
//! Exit codes: 0 on success, 2 on configuration errors (including bad
//! arguments and malformed input files), 3 on numerical or i/o failures.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use rydopt::configgen::FitOptions;
use rydopt::harness::{self, HarnessError, RunConfig, RunMode};
use rydopt::hilbert::{ground_energy, materialize};
use rydopt::problems::{sample_random_hamiltonian, save_pauli_sum, RandomHamiltonianSpec};

#[derive(Parser)]
#[command(
    name = "rydopt",
    version,
    about = "Neutral-atom qubit configuration and pulse co-optimization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration; omit to use the built-in defaults (the
    /// 3-qubit GHZ experiment)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config)
    #[arg(long)]
    seed: Option<u64>,
    /// Parent output directory (overrides the config)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 = one per core (overrides the config)
    #[arg(long)]
    workers: Option<usize>,
    /// Override any config field by dotted path, e.g. --set cbo.alpha=40
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment end to end
    Optimize(RunArgs),
    /// Optimize pulses for one fixed configuration file (no position moves)
    PulseOnly {
        #[command(flatten)]
        run: RunArgs,
        /// Configuration JSON: {"positions": [[x, y], ...]}
        #[arg(long)]
        configuration: PathBuf,
    },
    /// Fit a box sampler to finished runs and sample baseline configurations
    FitBaseline {
        #[command(flatten)]
        run: RunArgs,
        /// Directory searched recursively for history.jsonl files
        #[arg(long)]
        history: PathBuf,
        /// Number of baseline configurations to draw
        #[arg(long, default_value_t = 12)]
        samples: usize,
    },
    /// Compare optimized configurations against fitted and initial baselines
    Compare {
        #[command(flatten)]
        run: RunArgs,
        /// Number of problem instances (random source only when > 1)
        #[arg(long, default_value_t = 1)]
        problems: usize,
        /// Repetitions per problem
        #[arg(long, default_value_t = 1)]
        runs: usize,
    },
    /// Sample a random Pauli-sum Hamiltonian and write it to a file
    GenHamiltonian {
        #[arg(long, short = 'm', value_parser = clap::value_parser!(u8).range(1..=6))]
        qubits: u8,
        #[arg(long, default_value_t = 0.2)]
        inclusion_prob: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file path
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the exact ground energy of a Pauli-sum file
    Eigs {
        file: PathBuf,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(2..=3))]
        local_dim: u8,
    },
    /// Print a fully commented example configuration
    ExampleConfig,
}

fn apply_set(doc: &mut toml::Value, assignment: &str) -> Result<(), HarnessError> {
    let (key, value) = assignment.split_once('=').ok_or_else(|| {
        HarnessError::Config(format!("--set needs KEY=VALUE, got '{assignment}'"))
    })?;
    let parsed: toml::Value = match format!("x = {value}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("x").unwrap(),
        Err(_) => toml::Value::String(value.to_string()),
    };
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        node = node
            .as_table_mut()
            .ok_or_else(|| HarnessError::Config(format!("'{part}' is not a table in '{key}'")))?
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    node.as_table_mut()
        .ok_or_else(|| HarnessError::Config(format!("cannot set '{key}'")))?
        .insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}

fn load_config(args: &RunArgs) -> Result<RunConfig, HarnessError> {
    let text = match &args.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| {
            HarnessError::Config(format!("cannot read config {}: {e}", path.display()))
        })?,
        None => String::new(),
    };
    let mut doc: toml::Value = text
        .parse::<toml::Table>()
        .map_err(|e| HarnessError::Config(e.to_string()))?
        .into();
    for set in &args.sets {
        apply_set(&mut doc, set)?;
    }
    let mut cfg: RunConfig = doc
        .try_into()
        .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    if let Some(workers) = args.workers {
        cfg.workers = workers;
    }
    cfg.validate()?;
    if cfg.workers > 0 {
        // ignore the error when a pool already exists (repeat calls)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Optimize(args) => {
            let cfg = load_config(&args)?;
            let outcome = harness::run_optimize(&cfg)?;
            println!("run directory: {}", outcome.run_dir.display());
            println!(
                "best agent {}: energy error {:.3e} (J error {:.3e})",
                outcome.summary.best_agent,
                outcome.summary.best_energy_error,
                outcome.summary.best_j_error
            );
            Ok(())
        }
        Command::PulseOnly { run, configuration } => {
            let mut cfg = load_config(&run)?;
            cfg.mode = RunMode::PulseOnly;
            cfg.configuration = Some(configuration);
            cfg.validate()?;
            let outcome = harness::run_pulse_only(&cfg)?;
            println!("run directory: {}", outcome.run_dir.display());
            println!(
                "final energy error {:.3e} (J error {:.3e})",
                outcome.summary.best_energy_error, outcome.summary.best_j_error
            );
            Ok(())
        }
        Command::FitBaseline {
            run,
            history,
            samples,
        } => {
            let cfg = load_config(&run)?;
            let fit = FitOptions {
                seed: cfg.seed,
                ..FitOptions::default()
            };
            let outcome = harness::fit_baseline(&cfg, &history, samples, &fit)?;
            println!("run directory: {}", outcome.run_dir.display());
            println!(
                "fitted box: r_min = {:.4}, r_max = {:.4}, KL = {:.6} \
                 ({} pooled distances, {} baselines)",
                outcome.fitted.r_min,
                outcome.fitted.r_max,
                outcome.fitted.kl,
                outcome.pooled_distances,
                outcome.baselines.len()
            );
            Ok(())
        }
        Command::Compare {
            run,
            problems,
            runs,
        } => {
            let cfg = load_config(&run)?;
            let outcome = harness::run_compare(&cfg, problems, runs, &FitOptions::default())?;
            println!("run directory: {}", outcome.run_dir.display());
            println!("csv: {}", outcome.csv_path.display());
            println!(
                "median log10 error: initial {:.3}, fitted {:.3}, final {:.3}",
                outcome.medians.initial, outcome.medians.fitted, outcome.medians.final_
            );
            Ok(())
        }
        Command::GenHamiltonian {
            qubits,
            inclusion_prob,
            seed,
            out,
        } => {
            let spec = RandomHamiltonianSpec {
                num_qubits: qubits as usize,
                inclusion_prob,
                coeff_range: (0.0, 1.0),
                seed,
            };
            let pauli = sample_random_hamiltonian(&spec)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            save_pauli_sum(&pauli, &out).map_err(HarnessError::from)?;
            println!("wrote {} ({} terms)", out.display(), pauli.num_terms());
            Ok(())
        }
        Command::Eigs { file, local_dim } => {
            let pauli = rydopt::problems::load_pauli_sum(&file).map_err(HarnessError::from)?;
            let h = materialize(&pauli, local_dim as usize).map_err(HarnessError::from)?;
            let (e_g, _) = ground_energy(&h, local_dim as usize).map_err(HarnessError::from)?;
            println!(
                "{}",
                serde_json::json!({
                    "file": file.display().to_string(),
                    "num_qubits": pauli.num_qubits(),
                    "local_dim": local_dim,
                    "ground_energy": e_g,
                })
            );
            Ok(())
        }
        Command::ExampleConfig => {
            print!("{}", RunConfig::example());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = match &e {
                HarnessError::Config(_) => "config",
                HarnessError::Io { .. } => "io",
                HarnessError::Numerical(_) => "numerical",
            };
            eprintln!(
                "{}",
                serde_json::json!({ "error": e.to_string(), "kind": kind })
            );
            match e {
                HarnessError::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}
