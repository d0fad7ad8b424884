//! Command-line front end: runs experiment configs, acceptance bundles and
//! lists the shipped examples.

mod catalog;
mod config;
mod experiment;
mod record;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use polycap::suites::{run_suite, Suite, SuiteSettings, FAMILY_SEED};

use crate::config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(name = "polycap", version, about = "Polynomial capacities, Poincare constants and synthesis runs")]
struct Cli {
    /// Worker threads (default: logical cores).
    #[arg(long, global = true, env = "POLYCAP_WORKERS")]
    workers: Option<usize>,
    /// Overrides the seed of the config or suite.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving the output files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Both)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Both,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Runs an experiment config (or a shipped example with `example:NAME`).
    Run { config: String },
    /// Runs an acceptance bundle and prints its pass/fail table.
    Verify { suite: String },
    /// Prints the shipped example configs.
    ListExamples {
        /// Prints the TOML text of one example instead.
        #[arg(long)]
        show: Option<String>,
    },
}

/// Exit status of a finished command.
enum Outcome {
    Success,
    Regression,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Regression) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn execute(cli: &Cli) -> Result<Outcome> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(anyhow!("--workers must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match &cli.command {
        Command::Run { config } => run(cli, config),
        Command::Verify { suite } => verify(cli, suite),
        Command::ListExamples { show } => list(show.as_deref()),
    }
}

fn run(cli: &Cli, source: &str) -> Result<Outcome> {
    let (mut cfg, base, stem) = match source.strip_prefix("example:") {
        Some(name) => {
            let ex = catalog::find(name).ok_or_else(|| anyhow!("no example named `{name}`"))?;
            (ex.config()?, cli.out_dir.clone(), name.to_string())
        }
        None => {
            let path = Path::new(source);
            let cfg = ExperimentConfig::load(path)?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("record").to_string();
            (cfg, base, stem)
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let start = Instant::now();
    let record = experiment::run(&cfg, &base)?;
    record.validate()?;
    let output = cfg.output.clone();
    let json_name = output.as_ref().and_then(|o| o.json.clone()).unwrap_or(format!("{stem}.json"));
    let csv_name = output.as_ref().and_then(|o| o.csv.clone()).unwrap_or(format!("{stem}.csv"));
    std::fs::create_dir_all(&cli.out_dir).with_context(|| format!("creating {}", cli.out_dir.display()))?;
    if cli.format != Format::Csv {
        let path = cli.out_dir.join(json_name);
        std::fs::write(&path, record.to_json()).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    if cli.format != Format::Json {
        let path = cli.out_dir.join(csv_name);
        let file = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        record.write_csv(file)?;
        println!("wrote {}", path.display());
    }
    for v in &record.verdicts {
        println!("[{}] {}: {}", if v.passed { "ok" } else { "FAIL" }, v.check, v.detail);
    }
    eprintln!(
        "{} items in {:.2} s, config {}",
        record.items.len(),
        start.elapsed().as_secs_f64(),
        &record.config_digest[..12]
    );
    Ok(if record.regressed() { Outcome::Regression } else { Outcome::Success })
}

fn verify(cli: &Cli, name: &str) -> Result<Outcome> {
    let suite: Suite = name.parse().map_err(|e| {
        let names: Vec<&str> = Suite::ALL.iter().map(|s| s.name()).collect();
        anyhow!("{e}; expected one of {}", names.join(", "))
    })?;
    let settings = SuiteSettings {
        seed: cli.seed.unwrap_or(FAMILY_SEED),
        ..Default::default()
    };
    let report = run_suite(suite, &settings)?;
    let width = report.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &report.checks {
        println!("{:<4}  {:<width$}  {}", if c.passed { "ok" } else { "FAIL" }, c.name, c.detail);
    }
    println!(
        "{} {}: {} of {} checks passed in {:.1} s",
        suite,
        if report.passed() { "PASS" } else { "FAIL" },
        report.checks.iter().filter(|c| c.passed).count(),
        report.checks.len(),
        report.seconds
    );
    Ok(if report.passed() { Outcome::Success } else { Outcome::Regression })
}

fn list(show: Option<&str>) -> Result<Outcome> {
    if let Some(name) = show {
        let ex = catalog::find(name).ok_or_else(|| anyhow!("no example named `{name}`"))?;
        print!("{}", ex.text);
        return Ok(Outcome::Success);
    }
    for ex in catalog::EXAMPLES {
        let cfg = ex.config()?;
        let kind = serde_json::to_value(cfg.kind)?;
        println!("{:<20} {:<20} {}", ex.name, kind.as_str().unwrap_or_default(), cfg.description);
    }
    Ok(Outcome::Success)
}
