use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use subjectdp::accountant::{HorizontalMode, ReferenceConstants};
use subjectdp_cli::commands::{account_report, execute_run, execute_sweep, load_config, parse_mechanism, plot_runs, AccountQuery};
use subjectdp_cli::CliError;

/// Subject-level differentially private federated learning experiments.
#[derive(Parser)]
#[command(name = "subjectdp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file (key = value with [sections]).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// `section.key=value`, repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write its reports.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the cross product of sweep axes and write sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `section.key=v1,v2,...`, repeatable.
        #[arg(long = "sweep", value_name = "KEY=V1,V2")]
        sweeps: Vec<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Print the noise plan for a budget and schedule.
    Account {
        #[arg(long, default_value_t = 4.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 1e-5)]
        delta: f64,
        #[arg(long, default_value_t = 100)]
        rounds: usize,
        #[arg(long, default_value_t = 16)]
        users_per_round: usize,
        #[arg(long, default_value_t = 100)]
        batches_per_round: usize,
        /// Item sampling fraction B / |D|.
        #[arg(long, default_value_t = 0.1)]
        sampling_fraction: f64,
        /// item, group, subject or user.
        #[arg(long, default_value = "group")]
        mechanism: String,
        #[arg(long, default_value_t = 1)]
        group_size: usize,
        #[arg(long, default_value_t = 1.0)]
        subject_multiplier: f64,
        /// round_reduction or minibatch_scaling.
        #[arg(long, default_value = "round_reduction")]
        mode: String,
        #[arg(long, default_value_t = 1.0)]
        c1: f64,
        #[arg(long, default_value_t = 1.0)]
        c2: f64,
    },
    /// Render curves, group-size histograms and bound tables from run directories.
    Plot {
        /// Run directory, repeatable.
        #[arg(long = "run", required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { common, out } => {
            let cfg = load_config(common.config.as_deref(), &common.overrides, common.seed)?;
            let s = execute_run(&cfg, &out)?;
            println!(
                "{}: {} rounds, final test accuracy {:.4}, loss {:.4} -> {}",
                s.algorithm,
                s.effective_rounds,
                s.final_test_accuracy,
                s.final_test_loss,
                out.display()
            );
        }
        Command::Sweep { common, sweeps, out } => {
            let all = execute_sweep(common.config.as_deref(), &common.overrides, common.seed, &sweeps, &out)?;
            println!("{} runs -> {}", all.len(), out.join("sweep.csv").display());
        }
        Command::Account {
            epsilon,
            delta,
            rounds,
            users_per_round,
            batches_per_round,
            sampling_fraction,
            mechanism,
            group_size,
            subject_multiplier,
            mode,
            c1,
            c2,
        } => {
            let mode: HorizontalMode = mode.parse().map_err(|e: String| CliError::Config(subjectdp_cli::ConfigError { messages: vec![format!("mode: {e}")] }))?;
            let q = AccountQuery {
                epsilon,
                delta,
                rounds,
                users_per_round,
                batches_per_round,
                sampling_fraction,
                mechanism: parse_mechanism(&mechanism, group_size, subject_multiplier)?,
                mode,
                constants: ReferenceConstants { c1, c2 },
            };
            print!("{}", account_report(&q)?);
        }
        Command::Plot { runs, out } => {
            let p = plot_runs(&runs, &out)?;
            for s in &p.skipped {
                eprintln!("skipped {s}");
            }
            println!("{} files -> {}", p.files.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
