use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};

use janus_cli::commands::{self, Experiment, Overrides};

#[derive(Parser)]
#[command(name = "janus", version, about = "Boundary-integral simulation of 2D Janus particles")]
struct Cli {
    /// Output directory (overrides `output.directory`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// RNG seed for generated configurations.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// GMRES relative tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Write a frame every this many steps.
    #[arg(long, global = true)]
    stride: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single-disk convergence table against the analytic solution.
    Validate,
    /// One static solve: forces, torques and energies.
    Forces { config: PathBuf },
    /// Time integration with frame output.
    Simulate { config: PathBuf },
    /// Bending, tilt, stretching or pairwise-force harness.
    Experiment {
        #[arg(value_enum)]
        name: Experiment,
        config: PathBuf,
    },
    /// Wall time per mobility step against particle count.
    Scaling {
        /// Comma-separated particle counts.
        #[arg(value_delimiter = ',', required = true)]
        n: Vec<usize>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let ov = Overrides {
        out: cli.out,
        seed: cli.seed,
        tol: cli.tol,
        stride: cli.stride,
    };
    match cli.command {
        Command::Validate => {
            let (_, ok) = commands::validate(&ov)?;
            if !ok {
                bail!("at least one cell exceeds ten times the reference error");
            }
        }
        Command::Forces { config } => {
            for r in commands::forces(&config, &ov)? {
                println!(
                    "{:>3} F=({:+.6e}, {:+.6e}) pN  tau={:+.6e} pN nm",
                    r.particle, r.fx_pn, r.fy_pn, r.torque_pn_nm
                );
            }
        }
        Command::Simulate { config } => {
            let s = commands::simulate(&config, &ov)?;
            println!("{} steps, t = {:.4} ns, Φ_total = {:.6} pN nm", s.step, s.time, s.energy_total());
        }
        Command::Experiment { name, config } => {
            commands::experiment(name, &config, &ov)?;
        }
        Command::Scaling { n } => {
            commands::scaling(&n, &ov)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
