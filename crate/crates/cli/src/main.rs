//! `coppkit`: generate synthetic bandit logs, fit the conformal models,
//! run seeded experiments and emit prediction sets.
//!
//! Exit codes: 0 success, 2 usage or validation error, 3 when an experiment
//! finished with failed cells, 1 for any other runtime failure.

mod bundle;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use coppkit::data::{ActionKind, OutcomeKind};
use coppkit::envs::{gen_synthetic, SyntheticEnv};
use coppkit::eval::{run_experiment, ExperimentConfig};
use coppkit::policy::PolicySpec;
use coppkit::Error;

use bundle::{PredictArgs, TrainArgs};

#[derive(Parser)]
#[command(name = "coppkit", version, about = "Conformal off-policy prediction for contextual bandits")]
struct Cli {
    /// Worker threads (default: all cores). `COPPKIT_THREADS` overrides.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EnvName {
    ToyDiscrete,
    ToyContinuous,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a logged dataset from a synthetic environment.
    Generate {
        #[arg(long, value_enum)]
        env: EnvName,
        /// Behaviour policy parameter (default 0.3 discrete, 0 continuous).
        #[arg(long)]
        eps_b: Option<f64>,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit score, behaviour and outcome models and store them with the
    /// calibration split.
    Train(TrainArgs),
    /// Run an experiment config and write `<out>` (JSON) plus a CSV beside it.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Prediction sets for the rows of a covariate CSV.
    Predict(PredictArgs),
}

/// What went wrong, mapped onto the exit-code contract.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
    Partial(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Training(_) | Error::DegenerateWeights(_) | Error::Numeric(_) | Error::Evaluation(_) => {
                Failure::Runtime(e.to_string())
            }
            other => Failure::Usage(other.to_string()),
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    match std::env::var("COPPKIT_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Failure::Usage(format!("COPPKIT_THREADS must be a positive integer, got {v:?}"))),
        },
        Err(_) => match flag {
            Some(0) => Err(Failure::Usage("--threads must be positive".into())),
            other => Ok(other),
        },
    }
}

fn generate(env: EnvName, eps_b: Option<f64>, n: usize, seed: u64, out: &Path) -> Result<(), Failure> {
    if n == 0 {
        return Err(Failure::Usage("--n must be positive".into()));
    }
    let (env, policy) = match env {
        EnvName::ToyDiscrete => (SyntheticEnv::toy_discrete(), PolicySpec::toy_discrete(eps_b.unwrap_or(0.3))?),
        EnvName::ToyContinuous => {
            let eps = eps_b.unwrap_or(0.0);
            if !eps.is_finite() {
                return Err(Failure::Usage(format!("--eps-b must be finite, got {eps}")));
            }
            (SyntheticEnv::toy_continuous(), PolicySpec::toy_continuous(eps))
        }
    };
    let data = gen_synthetic(&env, &policy, n, &mut ChaCha8Rng::seed_from_u64(seed))?;
    data.write_csv(out).map_err(|e| Failure::Usage(format!("{}: {e}", out.display())))?;
    println!("wrote {} rows to {}", data.len(), out.display());
    Ok(())
}

fn run(config: &Path, out: &Path) -> Result<(), Failure> {
    let text = std::fs::read_to_string(config)
        .map_err(|e| Failure::Usage(format!("{}: {e}", config.display())))?;
    let cfg = ExperimentConfig::from_json(&text)?;
    let report = run_experiment(&cfg)?;
    report.write(out).map_err(|e| Failure::Usage(format!("{}: {e}", out.display())))?;
    for r in &report.summary {
        println!(
            "{:<24} eps*={:<5} coverage {:.4} ± {:.4}  length {:.3} ± {:.3}",
            r.method.as_str(),
            r.eps_star,
            r.coverage,
            r.coverage_2se,
            r.length,
            r.length_2se
        );
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    println!("wrote {} and {}", out.display(), out.with_extension("csv").display());
    if report.failures.is_empty() {
        Ok(())
    } else {
        for f in &report.failures {
            eprintln!("failed: seed {} {:?} {:?}: {}", f.seed, f.method, f.eps_star, f.message);
        }
        Err(Failure::Partial(format!("{} experiment cells failed", report.failures.len())))
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = thread_count(cli.threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    match cli.command {
        Command::Generate {
            env,
            eps_b,
            n,
            seed,
            out,
        } => generate(env, eps_b, n, seed, &out),
        Command::Train(args) => bundle::train(&args),
        Command::Run { config, out } => run(&config, &out),
        Command::Predict(args) => bundle::predict(&args),
    }
}

/// Parse `K` or `continuous`.
fn parse_action_kind(s: &str) -> Result<ActionKind, String> {
    if s == "continuous" {
        return Ok(ActionKind::Continuous);
    }
    match s.parse::<usize>() {
        Ok(k) if k > 0 => Ok(ActionKind::Discrete(k)),
        _ => Err(format!("expected an action count or `continuous`, got {s:?}")),
    }
}

fn outcome_kind(labels: Option<usize>) -> OutcomeKind {
    labels.map_or(OutcomeKind::Continuous, OutcomeKind::Discrete)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Partial(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
