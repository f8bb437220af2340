use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ceui::scenarios::run::{write_doppler_sweep, write_simulation};
use ceui::error::StageExt;
use ceui::scenarios::{self, Overrides, RunManifest, RunOptions, ScenarioConfig};

#[derive(Parser)]
#[command(name = "ceui", version, about = "Continuous emission ultrasound imaging simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Master seed; reseeds the excitation and noise streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Decode every N-th window only.
    #[arg(long = "decimate-decode", value_name = "N")]
    decimate: Option<usize>,
    /// Worker threads (results do not depend on it).
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            output: self.out.clone(),
            decimate: self.decimate,
        }
    }

    fn options(&self) -> RunOptions {
        RunOptions {
            threads: self.threads,
            ..RunOptions::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the RF signals only.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Decode a recorded RF signal into M-mode images.
    Reconstruct {
        config: PathBuf,
        rf: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate, reconstruct and evaluate.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Tabulate metric differences between two runs.
    Compare { manifest_a: PathBuf, manifest_b: PathBuf },
    /// Estimated against predicted Doppler shift over a set of velocities.
    DopplerSweep {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn load(path: &std::path::Path, common: &Common) -> ceui::Result<ScenarioConfig> {
    scenarios::load_config_with(path, &common.overrides()).stage("config")
}

fn execute(cli: Cli) -> ceui::Result<()> {
    match cli.command {
        Command::Simulate { config, common } => {
            let cfg = load(&config, &common)?;
            let sim = ceui::par::with_threads(common.threads, || scenarios::simulate(&cfg))?;
            for name in write_simulation(&sim, &cfg.output)? {
                println!("{}", cfg.output.join(name).display());
            }
        }
        Command::Reconstruct { config, rf, common } => {
            let cfg = load(&config, &common)?;
            let manifest = scenarios::reconstruct_from_file(&cfg, &rf, &common.options())?;
            print_run(&cfg.output, &manifest);
        }
        Command::Run { config, common } => {
            let cfg = load(&config, &common)?;
            let manifest = scenarios::run_scenario(&cfg, &common.options())?;
            print_run(&cfg.output, &manifest);
        }
        Command::Compare { manifest_a, manifest_b } => {
            let a = RunManifest::load(&manifest_a).stage("io")?;
            let b = RunManifest::load(&manifest_b).stage("io")?;
            print!("{}", scenarios::compare_runs(&a, &b).stage("compare")?);
        }
        Command::DopplerSweep { config, common } => {
            let cfg = load(&config, &common)?;
            let points = scenarios::doppler_sweep(&cfg, &common.options())?;
            println!("{:>8} {:>12} {:>12} {:>8}", "v (m/s)", "expected Hz", "estimated Hz", "error");
            for p in &points {
                println!(
                    "{:>8} {:>12.1} {:>12.1} {:>7.2}%",
                    p.velocity,
                    p.expected_hz,
                    p.estimated_hz,
                    100.0 * p.relative_error()
                );
            }
            write_doppler_sweep(&points, &cfg.output)?;
        }
    }
    Ok(())
}

fn print_run(dir: &std::path::Path, manifest: &RunManifest) {
    println!("wrote {} files to {}", manifest.files.len(), dir.display());
    if let Ok(report) = std::fs::read_to_string(dir.join("report.txt")) {
        print!("{report}");
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
