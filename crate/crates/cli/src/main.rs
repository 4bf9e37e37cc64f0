use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use qhid_core::runner::{self, parse_value, RunError, RunOptions, SweepSpec};
use qhid_core::scenario;

/// Identify dipole couplings of a closed quantum system from population
/// measurements.
#[derive(Parser, Debug)]
#[command(name = "qhid", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario (built-in name or TOML file).
    Run {
        scenario: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Measurement seed; the control seed becomes this plus one.
        #[arg(long)]
        seed_override: Option<u64>,
        /// Record every k-th step.
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Sweep one scenario key over a list of values.
    Sweep {
        scenario: String,
        /// Dotted key, e.g. `estimator.state_gain`.
        #[arg(long)]
        param: String,
        /// Comma-separated values, parsed as TOML.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long, default_value_t = 1)]
        replicates: usize,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
        #[arg(long)]
        seed_override: Option<u64>,
        #[arg(long)]
        stride: Option<usize>,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        parallel: usize,
    },
    /// List built-in scenarios.
    List,
    /// Check a scenario without running it.
    Validate { scenario: String },
    /// Print a scenario as TOML.
    PrintScenario { scenario: String },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cmd: Command) -> Result<(), RunError> {
    match cmd {
        Command::Run {
            scenario,
            out,
            seed_override,
            stride,
        } => {
            let s = scenario::resolve(&scenario)?;
            let opts = RunOptions {
                seed_override,
                record_stride: stride,
            };
            let rep = runner::run(&s, &out, &opts)?;
            let sum = &rep.summary;
            println!(
                "{}: theta_hat = {:?}, max error {:.3e}, V {:.3e} -> {:.3e}, {:.2} s",
                sum.run.scenario,
                sum.estimates.final_theta_hat,
                sum.convergence.max_final_error,
                sum.lyapunov.initial,
                sum.lyapunov.last,
                sum.run.runtime_seconds
            );
            println!("outputs in {}", rep.dir.display());
        }
        Command::Sweep {
            scenario,
            param,
            values,
            replicates,
            out,
            seed_override,
            stride,
            parallel,
        } => {
            let s = scenario::resolve(&scenario)?;
            let spec = SweepSpec {
                parameter: param,
                values: values.iter().map(|v| parse_value(v.trim())).collect(),
                replicates,
                parallel,
            };
            let opts = RunOptions {
                seed_override,
                record_stride: stride,
            };
            let rows = runner::sweep(&s, &spec, &out, &opts)?;
            let failed = rows.iter().filter(|r| r.status != "complete").count();
            println!(
                "{} rows ({} failed), table in {}",
                rows.len(),
                failed,
                out.join(runner::SWEEP_FILE).display()
            );
        }
        Command::List => {
            for (name, description) in scenario::list() {
                println!("{name:<22} {description}");
            }
        }
        Command::Validate { scenario } => {
            let s = scenario::resolve(&scenario)?;
            let setup = s.prepare().map_err(RunError::from)?;
            println!(
                "{}: ok ({} levels, {} steps of {:.6})",
                s.name(),
                setup.system.dim(),
                setup.integration.steps(),
                setup.integration.step
            );
        }
        Command::PrintScenario { scenario } => {
            let s = scenario::resolve(&scenario)?;
            print!("{}", s.to_toml_string());
        }
    }
    Ok(())
}
