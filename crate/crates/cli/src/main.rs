use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rtt_ranging::scenario::{run_scenario, CampaignConfig, OneOrMany, ScenarioKind};

/// Seed used by the preset shortcuts when neither a config nor --seed gives one.
const PRESET_SEED: u64 = 1;

#[derive(Parser)]
#[command(name = "rtt-ranging", version, about = "Round-trip-time ranging simulator and campaign runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenarios of a campaign config, or one of the presets.
    Run(RunArgs),
    /// Print a config file with every key at its default.
    Template {
        #[arg(long, default_value_t = PRESET_SEED)]
        seed: u64,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// Campaign config (TOML).
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the CSV files.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Batch-size study (table1.csv).
    #[arg(long)]
    table1: bool,
    /// Distance sweep (distance_sweep.csv).
    #[arg(long)]
    fig5: bool,
    /// Attenuation sweep with exponential fit (attenuation_sweep.csv).
    #[arg(long)]
    fig6: bool,
    /// Trilateration Monte-Carlo and budgets (trilateration.csv, budget.csv).
    #[arg(long)]
    trilateration: bool,
    /// Paper-scale sample counts.
    #[arg(long)]
    full: bool,
}

impl RunArgs {
    fn presets(&self) -> Vec<ScenarioKind> {
        [
            (self.table1, ScenarioKind::BatchSizeStudy),
            (self.fig5, ScenarioKind::DistanceSweep),
            (self.fig6, ScenarioKind::AttenuationSweep),
            (self.trilateration, ScenarioKind::Trilateration),
        ]
        .into_iter()
        .filter_map(|(on, k)| on.then_some(k))
        .collect()
    }

    fn config(&self) -> Result<CampaignConfig> {
        let presets = self.presets();
        let mut cfg = match &self.config {
            Some(path) => CampaignConfig::load(path)?,
            None if presets.is_empty() => {
                bail!("give a config file or at least one of --table1, --fig5, --fig6, --trilateration")
            }
            None => CampaignConfig::preset(presets[0], PRESET_SEED),
        };
        if !presets.is_empty() {
            cfg.scenario = OneOrMany::Many(presets);
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if self.full {
            cfg.full_scale = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(args: &RunArgs) -> Result<bool> {
    let cfg = args.config()?;
    let report = run_scenario(&cfg, &args.out)
        .with_context(|| format!("running campaign into {}", args.out.display()))?;
    for line in &report.summary {
        println!("{line}");
    }
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    for (kind, e) in &report.errors {
        eprintln!("error: {}: {e}", kind.name());
    }
    Ok(report.ok())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Template { seed } => {
            let mut cfg = CampaignConfig::preset(ScenarioKind::BatchSizeStudy, seed);
            cfg.scenario = OneOrMany::Many(vec![
                ScenarioKind::BatchSizeStudy,
                ScenarioKind::DistanceSweep,
                ScenarioKind::AttenuationSweep,
                ScenarioKind::Trilateration,
            ]);
            print!("{}", cfg.to_toml());
            ExitCode::SUCCESS
        }
        Command::Run(args) => match run(&args) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::FAILURE,
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::FAILURE
            }
        },
    }
}
