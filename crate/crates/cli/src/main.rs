use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use staytime_lab::base_models::BaseKind;
use staytime_lab::harness::{
    cmd_compare, cmd_curves, cmd_evaluate, cmd_generate, cmd_train, ExperimentConfig, ExperimentReport,
};

#[derive(Parser)]
#[command(name = "staytime-lab", version, about = "Comment-section staytime experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic dataset, its embedding tables and a manifest.
    Generate(Common),
    /// Train one model per seed and write checkpoints plus a report.
    Train(Common),
    /// Evaluate saved checkpoints and write a report.
    Evaluate(Common),
    /// Compare two or more reports against the first.
    Compare {
        #[arg(required = true, num_args = 2..)]
        reports: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write binned staytime curves as CSV.
    Curves(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_kind)]
    model: Option<BaseKind>,
    #[arg(long, value_enum)]
    lcu: Option<Switch>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_kind(s: &str) -> Result<BaseKind, String> {
    s.parse().map_err(|e: staytime_lab::Error| e.to_string())
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::read(&self.config)
            .with_context(|| format!("reading config {}", self.config.display()))?;
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
        }
        if let Some(model) = self.model {
            cfg.model = model;
        }
        if let Some(lcu) = self.lcu {
            cfg.lcu = matches!(lcu, Switch::On);
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_report(r: &ExperimentReport, path: PathBuf) {
    println!("{}: {} seed(s), report {}", r.run, r.seeds.len(), path.display());
    for (k, m) in &r.mean {
        println!("  {k:<12} {m:.6} ± {:.6}", r.std[k]);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(c) => {
            let (dir, manifest) = cmd_generate(&c.load()?)?;
            println!("wrote {} files to {}", manifest.files.len(), dir.display());
        }
        Command::Train(c) => {
            let cfg = c.load()?;
            let r = cmd_train(&cfg)?;
            print_report(&r, cfg.report_path());
        }
        Command::Evaluate(c) => {
            let cfg = c.load()?;
            let r = cmd_evaluate(&cfg)?;
            print_report(&r, cfg.output_dir.join(format!("{}.evaluate.report.json", cfg.run_name())));
        }
        Command::Compare { reports, csv } => {
            let loaded = reports
                .iter()
                .map(|p| ExperimentReport::read(p).with_context(|| format!("reading {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            let table = cmd_compare(&loaded)?;
            print!("{}", table.to_text());
            if let Some(path) = csv {
                fs::write(&path, table.to_csv()).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::Curves(c) => {
            for (feature, path, trend) in cmd_curves(&c.load()?)? {
                let trend = trend.map_or("n/a".to_string(), |t| format!("{t:+.3}"));
                println!("{feature:<15} spearman {trend:>7}  {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

