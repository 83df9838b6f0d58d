use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use sqglab::experiment::{
    diagnose, entry_dir_name, read_reports, run_entry, simulate, sweep_csv, write_plots,
    write_reports, ExperimentConfig, SweepRow,
};
use sqglab::io::{write_trajectory, DiskTrajectory};
use sqglab::report::{budget_plot, summary_text, write_json, write_text};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_CERTIFICATION: u8 = 4;

#[derive(Parser)]
#[command(name = "sqglab", version, about = "Generalized SQG simulations with multi-scale flux diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the configured run and store its trajectory.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Trajectory directory; defaults to the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the initial-condition seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Certify covers and evaluate the flux diagnostics of a stored trajectory.
    Diagnose {
        /// Trajectory directory written by `simulate`.
        trajectory: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Report directory; defaults to the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the cover jitter seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        slack: Option<f64>,
    },
    /// Simulate and diagnose once per configured dissipation exponent.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Entries run concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Overrides the initial-condition seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        slack: Option<f64>,
    },
    /// Redraw plots and print the summary of a diagnostics directory.
    Report {
        /// Directory holding the JSON reports.
        dir: PathBuf,
    },
}

/// Marks an error as caused by the configuration.
#[derive(Debug)]
struct ConfigInvalid(PathBuf);

impl fmt::Display for ConfigInvalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration {}", self.0.display())
    }
}

fn load_config(
    path: &Path,
    seed: Option<u64>,
    jitter_seed: Option<u64>,
    slack: Option<f64>,
) -> Result<ExperimentConfig> {
    let invalid = || ConfigInvalid(path.to_path_buf());
    let mut cfg = ExperimentConfig::load(path).with_context(invalid)?;
    if let Some(s) = seed {
        cfg.solver.ic.seed = s;
    }
    if let Some(s) = jitter_seed {
        cfg.cover.jitter_seed = Some(s);
    }
    if let Some(s) = slack {
        cfg.diagnostics.slack = s;
    }
    cfg.validate().with_context(invalid)?;
    Ok(cfg)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigInvalid>().is_some() {
        return EXIT_CONFIG;
    }
    let certification = err.chain().any(|e| {
        matches!(
            e.downcast_ref::<sqglab::Error>(),
            Some(sqglab::Error::Certification(_) | sqglab::Error::InvalidCover(_))
        )
    });
    if certification {
        EXIT_CERTIFICATION
    } else {
        EXIT_RUNTIME
    }
}

fn cmd_simulate(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<()> {
    let cfg = load_config(config, seed, None, None)?;
    let dir = out.unwrap_or_else(|| cfg.output.dir.clone());
    let traj = simulate(&cfg).context("simulation failed")?;
    let manifest = write_trajectory(&dir, &traj)?;
    write_text(&dir.join("budget.svg"), &budget_plot(&traj.budget).to_svg())?;
    println!(
        "wrote {} snapshots to {} (cfl halvings {}, spectral tail {:.3e})",
        manifest.files.len(),
        dir.display(),
        manifest.cfl_halvings,
        manifest.spectral_tail
    );
    Ok(())
}

fn cmd_diagnose(
    trajectory: &Path,
    config: &Path,
    out: Option<PathBuf>,
    seed: Option<u64>,
    slack: Option<f64>,
) -> Result<()> {
    let cfg = load_config(config, None, seed, slack)?;
    let dir = out.unwrap_or_else(|| cfg.output.dir.clone());
    let disk = DiskTrajectory::open(trajectory)?;
    let output = diagnose(&disk, &cfg)?;
    write_reports(&dir, &output)?;
    print!("{}", summary_text(&output.cascade, &output.locality));
    Ok(())
}

fn cmd_sweep(
    config: &Path,
    out: Option<PathBuf>,
    jobs: usize,
    seed: Option<u64>,
    slack: Option<f64>,
) -> Result<()> {
    let cfg = load_config(config, seed, None, slack)?;
    let dir = out.unwrap_or_else(|| cfg.output.dir.clone());
    let alphas = cfg.alphas();
    let next = AtomicUsize::new(0);
    let results: Vec<Mutex<Option<sqglab::Result<SweepRow>>>> =
        alphas.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, alphas.len()) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&alpha) = alphas.get(k) else { break };
                let entry = cfg.with_alpha(alpha);
                let row = run_entry(&entry, &dir.join(entry_dir_name(alpha)));
                eprintln!("alpha = {alpha}: {}", if row.is_ok() { "done" } else { "failed" });
                *results[k].lock().unwrap() = Some(row);
            });
        }
    });
    let mut rows = Vec::with_capacity(alphas.len());
    for (slot, alpha) in results.into_iter().zip(&alphas) {
        let row = slot
            .into_inner()
            .unwrap()
            .expect("every sweep entry is visited")
            .with_context(|| format!("sweep entry alpha = {alpha}"))?;
        rows.push(row);
    }
    let csv = sweep_csv(&rows);
    write_text(&dir.join("sweep_summary.csv"), &csv)?;
    write_json(&dir.join("sweep_summary.json"), &rows)?;
    print!("{csv}");
    Ok(())
}

fn cmd_report(dir: &Path) -> Result<()> {
    let (cascade, locality) = read_reports(dir)?;
    write_plots(dir, &cascade, &locality)?;
    print!("{}", summary_text(&cascade, &locality));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out, seed } => cmd_simulate(&config, out, seed),
        Command::Diagnose {
            trajectory,
            config,
            out,
            seed,
            slack,
        } => cmd_diagnose(&trajectory, &config, out, seed, slack),
        Command::Sweep {
            config,
            out,
            jobs,
            seed,
            slack,
        } => cmd_sweep(&config, out, jobs, seed, slack),
        Command::Report { dir } => cmd_report(&dir),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
