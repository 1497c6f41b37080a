use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pndm::cli::{self, EXIT_CONFIG};
use pndm::config::RunConfig;
use pndm::Result;

#[derive(Parser)]
#[command(name = "pndm", version, about = "Pseudo numerical samplers for diffusion-model ODEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// key=value configuration file
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides output.dir)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one sampler and write its trajectory
    Sample {
        #[command(flatten)]
        common: Common,
        /// Also write every predictor evaluation to eps.csv
        #[arg(long)]
        emit_eps: bool,
    },
    /// Estimate convergence orders against a high-resolution reference
    Converge {
        #[command(flatten)]
        common: Common,
    },
    /// Measure growth of the ODE noise coefficient towards t = 0
    Probe {
        #[command(flatten)]
        common: Common,
    },
    /// Norm band and pixel-pair statistics of a sampled trajectory
    Stats {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<(RunConfig, PathBuf)> {
    let config = RunConfig::load(&common.config)?.with_env_seed()?;
    let out = common
        .out
        .clone()
        .or_else(|| config.output_dir().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    Ok((config, out))
}

fn run(command: &Command) -> Result<()> {
    match command {
        Command::Sample { common, emit_eps } => {
            let (config, out) = load(common)?;
            let outcome = cli::cmd_sample(&config, &out, *emit_eps)?;
            let traj = &outcome.trajectory;
            println!(
                "{}: {} steps to t = {}, {} predictor evaluations",
                traj.method,
                traj.states.len() - 1,
                traj.final_time(),
                traj.predictor_eval_count()
            );
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Converge { common } => {
            let (config, out) = load(common)?;
            let outcome = cli::cmd_converge(&config, &out)?;
            for (_, line) in &outcome.lines {
                println!("{line}");
            }
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Probe { common } => {
            let (config, out) = load(common)?;
            let outcome = cli::cmd_probe(&config, &out)?;
            println!(
                "slope {:.4} bounded={}",
                outcome.report.slope, outcome.report.bounded
            );
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Stats { common } => {
            let (config, out) = load(common)?;
            let outcome = cli::cmd_stats(&config, &out)?;
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let parsed = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    match run(&parsed.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e))
        }
    }
}
