use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use shelab::config::{resolve, ConfigError, Kind, RawConfig};
use shelab::run::{resume_experiment, run_experiment, Outcome, RunError, RunSettings, EXIT_CONFIG, EXIT_IO};

#[derive(Parser)]
#[command(
    name = "shelab",
    version,
    about = "Stochastic heat equation simulation and verification laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Heat-kernel identities against quadrature; no simulation.
    VerifyKernels(Common),
    /// Var(G_R) against the exact finite-R formula, and normality of F_R.
    Variance(Common),
    /// Decay of the KS distance of F_R in R over several seeds.
    CltRate(Common),
    /// Covariance of G_R(t_i)/√R against the Brownian time change.
    Fclt(Common),
    /// Increment moments of G_R against R^{p/2}(t-s)^{p/2}.
    Tightness(Common),
    /// Every acceptance criterion on fixed preset ensembles.
    FullSuite(Common),
    /// Continue an interrupted variance, fclt or tightness run.
    Resume {
        /// Output directory of the interrupted run.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, env = "SHELAB_WORKERS")]
        workers: Option<usize>,
        #[arg(long, hide = true)]
        stop_after: Option<u64>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, env = "SHELAB_WORKERS")]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    plot: bool,
    /// Override any configuration key, e.g. `--set R=4,8`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Stop after this many paths, leaving a checkpoint.
    #[arg(long, hide = true)]
    stop_after: Option<u64>,
    /// Write the full field of this path id to `out/path_<id>.she`.
    #[arg(long, hide = true)]
    dump_path: Option<u64>,
}

fn workers(requested: Option<usize>) -> usize {
    requested
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn load(kind: Kind, c: &Common) -> Result<shelab::ExperimentConfig, RunError> {
    let mut raw = match &c.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| RunError::Io {
                context: format!("cannot read {}", path.display()),
                source,
            })?;
            RawConfig::parse(&text)?
        }
        None => RawConfig::default(),
    };
    for kv in &c.set {
        let Some((k, v)) = kv.split_once('=') else {
            return Err(ConfigError {
                origin: None,
                field: None,
                message: format!("--set expects KEY=VALUE, got `{kv}`"),
            }
            .into());
        };
        raw.set(k.trim(), v.trim());
    }
    if let Some(seed) = c.seed {
        raw.set("seed", seed.to_string());
    }
    if let Some(paths) = c.paths {
        raw.set("paths", paths.to_string());
    }
    if let Some(out) = &c.out {
        raw.set("out", out.display().to_string());
    }
    if c.plot {
        raw.set("plot", "true");
    }
    Ok(resolve(&raw, Some(kind))?)
}

fn print_outcome(outcome: &Outcome) {
    match outcome {
        Outcome::Finished(report) => {
            for c in &report.criteria {
                let verdict = if c.pass { "PASS" } else { "FAIL" };
                println!("{verdict}  {:<44} measured {:<12.6e} {}", c.name, c.measured, c.detail);
            }
            let failed = report.criteria.iter().filter(|c| !c.pass).count();
            if failed == 0 {
                println!("all {} criteria passed", report.criteria.len());
            } else {
                println!("{failed} of {} criteria failed", report.criteria.len());
            }
        }
        Outcome::Stopped { covered, total, out } => {
            println!(
                "stopped after {covered} of {total} paths; continue with `shelab resume --out {}`",
                out.display()
            );
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Resume {
            out,
            workers: w,
            stop_after,
        } => {
            let settings = RunSettings {
                workers: workers(*w),
                stop_after: *stop_after,
                dump_path: None,
            };
            resume_experiment(out, &settings)
        }
        other => {
            let (kind, common) = match other {
                Command::VerifyKernels(c) => (Kind::VerifyKernels, c),
                Command::Variance(c) => (Kind::Variance, c),
                Command::CltRate(c) => (Kind::CltRate, c),
                Command::Fclt(c) => (Kind::Fclt, c),
                Command::Tightness(c) => (Kind::Tightness, c),
                Command::FullSuite(c) => (Kind::FullSuite, c),
                Command::Resume { .. } => unreachable!(),
            };
            load(kind, common).and_then(|config| {
                let settings = RunSettings {
                    workers: workers(common.workers),
                    stop_after: common.stop_after,
                    dump_path: common.dump_path,
                };
                run_experiment(&config, &settings)
            })
        }
    };
    match result {
        Ok(outcome) => {
            print_outcome(&outcome);
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            let code = e.exit_code();
            let label = match code {
                EXIT_CONFIG => "configuration error",
                EXIT_IO => "I/O error",
                _ => "error",
            };
            eprintln!("{label}: {e}");
            ExitCode::from(code as u8)
        }
    }
}
