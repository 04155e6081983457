use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use memwave::config::load_config;
use memwave::experiments;

/// Numerical laboratory for 1-D wave equations with memory.
#[derive(Parser)]
#[command(name = "memwave", version)]
struct Cli {
    /// Experiment name: simulate, adjoint, control, mgcc-check, kernel-check,
    /// sharpness, ode-demo, compare, or sweep. Must match the config.
    experiment: String,
    /// Path to the JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (MEMWAVE_OUT overrides this).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Parallel jobs for the sweep experiment.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Seed for random probes (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = std::env::var_os("MEMWAVE_OUT").map(PathBuf::from).unwrap_or(cli.out);

    let mut cfg = match load_config(&cli.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if cfg.experiment != cli.experiment {
        eprintln!(
            "error: subcommand {:?} does not match config experiment {:?}",
            cli.experiment, cfg.experiment
        );
        return ExitCode::from(1);
    }
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }

    match experiments::run(&cfg, &out, cli.jobs) {
        Ok(report) => {
            for v in &report.verdicts {
                println!("[{}] {}: {}", if v.pass { "pass" } else { "FAIL" }, v.name, v.detail);
            }
            println!(
                "{}: {} ({} ms), report at {}",
                report.experiment,
                if report.pass { "ok" } else { "verdict failure" },
                report.wall_ms,
                out.join("report.json").display()
            );
            if report.pass {
                ExitCode::from(0)
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
