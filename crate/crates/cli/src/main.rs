use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use ddsplit::harness::audit::audit_config;
use ddsplit::harness::csv::emit_probe_csv;
use ddsplit::harness::{demo, emit_csv, run_convergence_study, ExperimentConfig, DEMOS};

/// Domain-decomposition splitting experiments for degenerate parabolic equations.
#[derive(Debug, Parser)]
#[command(name = "ddsplit", version)]
struct Cli {
    /// Worker threads for the subdomain solves (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Directory for CSV and summary output.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Override the experiment seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Write 0 in the wall_ms column so output is byte-reproducible.
    #[arg(long, global = true)]
    no_timing: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the convergence study described by a config file.
    Run { config: PathBuf },
    /// Validate a config file and audit its operators.
    Check {
        config: PathBuf,
        /// Random field pairs per audit.
        #[arg(long, default_value_t = 20)]
        samples: usize,
    },
    /// Run a shipped experiment; `list` prints the names.
    Demo { name: String },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<bool> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(k) = cli.threads {
        if k == 0 {
            bail!("--threads must be at least 1");
        }
        pool = pool.num_threads(k);
    }
    let pool = pool.build()?;
    pool.install(|| match &cli.command {
        Command::Run { config } => {
            let cfg = load(config, cli.seed)?;
            run(cli, cfg, stem(config))
        }
        Command::Check { config, samples } => {
            let cfg = load(config, cli.seed)?;
            let report = audit_config(&cfg, *samples)?;
            print!("{}", report.render());
            println!("{}", if report.passed() { "config ok" } else { "audit failed" });
            Ok(report.passed())
        }
        Command::Demo { name } if name == "list" => {
            DEMOS.iter().for_each(|(n, _)| println!("{n}"));
            Ok(true)
        }
        Command::Demo { name } => {
            let text = demo(name).ok_or_else(|| {
                let names: Vec<&str> = DEMOS.iter().map(|(n, _)| *n).collect();
                anyhow!("unknown demo `{name}`; available: {}", names.join(", "))
            })?;
            let mut cfg = ExperimentConfig::from_toml_str(text)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            run(cli, cfg, name.clone())
        }
    })
}

fn load(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or("experiment".into(), |s| s.to_string_lossy().into_owned())
}

fn run(cli: &Cli, cfg: ExperimentConfig, default_stem: String) -> Result<bool> {
    let mut report = run_convergence_study(&cfg)?;
    if cli.no_timing {
        report.strip_timing();
    }
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let csv_name = cfg.output.csv.clone().unwrap_or_else(|| format!("{default_stem}.csv"));
    let csv_path = cli.out.join(&csv_name);
    emit_csv(&report, &csv_path)?;
    let base = csv_name.strip_suffix(".csv").unwrap_or(&csv_name).to_string();
    if let Some(probe) = &report.probe {
        emit_probe_csv(probe, &cli.out.join(format!("{base}-probe.csv")))?;
    }
    let summary = report.summary();
    std::fs::write(cli.out.join(format!("{base}-summary.txt")), &summary)?;
    print!("{summary}");
    println!("wrote {}", csv_path.display());
    Ok(true)
}
