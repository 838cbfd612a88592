use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hopf_critic_cli::{load_source, run, Command, Overrides};

/// Critical fluctuations at a stochastic Hopf bifurcation.
#[derive(Parser)]
#[command(name = "hopf-critic", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate the hypotheses on the drift and noise.
    Check(Opts),
    /// Quadratic normal form, center manifold and reduced field.
    NormalForm(Opts),
    /// Write rescaled and limit trajectories as CSV.
    Simulate(Opts),
    /// Compare rescaled radius marginals with the limit SDE.
    Converge(Opts),
    /// Measure the center-manifold and planar reduction errors.
    Reduce(Opts),
    /// Everything that applies, with a summary and plot data.
    Report(Opts),
}

#[derive(Args)]
struct Opts {
    /// Experiment config file.
    #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
    config: Option<PathBuf>,
    /// Rerun the effective config recorded in a manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// 0 uses every core; defaults to the config, then HOPF_CRITIC_WORKERS.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    halve_dt: Option<bool>,
    #[arg(long)]
    plot: Option<bool>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (cmd, o) = match cli.cmd {
        Cmd::Check(o) => (Command::Check, o),
        Cmd::NormalForm(o) => (Command::NormalForm, o),
        Cmd::Simulate(o) => (Command::Simulate, o),
        Cmd::Converge(o) => (Command::Converge, o),
        Cmd::Reduce(o) => (Command::Reduce, o),
        Cmd::Report(o) => (Command::Report, o),
    };
    let overrides = Overrides {
        paths: o.paths,
        seed: o.seed,
        workers: o.workers,
        dt: o.dt,
        t_end: o.t_end,
        epsilons: o.epsilons,
        out: o.out,
        halve_dt: o.halve_dt,
        plot: o.plot,
    };
    let result = load_source(o.config.as_deref(), o.manifest.as_deref())
        .and_then(|(text, origin)| run(cmd, &text, &origin, &overrides));
    match result {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            for a in &outcome.artifacts {
                println!("wrote {}", a.display());
            }
            if outcome.failed {
                eprintln!("error[verdict]: {} found a failing verdict", cmd.name());
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            for line in e.to_string().lines() {
                eprintln!("error[{}]: {line}", e.code());
            }
            ExitCode::from(e.exit_status() as u8)
        }
    }
}
