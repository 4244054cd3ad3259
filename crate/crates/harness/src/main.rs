use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use irml_harness::config::SetError;
use irml_harness::{run_experiment, ExperimentConfig, ExperimentId, HarnessError};

/// Runs one experiment and writes its CSVs, SVGs and manifest.
#[derive(Debug, Parser)]
#[command(name = "irml", version)]
struct Cli {
    /// One of: ser_vs_snr, acc_vs_degree, layering_ablation, imitation_toy,
    /// fed_noniid, fed_servers, bound_check, constellation
    experiment: String,
    #[arg(long)]
    config: PathBuf,
    /// Seed list, e.g. `0,1,2`
    #[arg(long)]
    seed: Option<String>,
    #[arg(long = "snr-db", allow_hyphen_values = true)]
    snr_db: Option<String>,
    #[arg(long)]
    servers: Option<String>,
    #[arg(long = "local-steps")]
    local_steps: Option<String>,
    #[arg(long)]
    rounds: Option<String>,
    #[arg(long = "noniid-p")]
    noniid_p: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace an existing output directory
    #[arg(long)]
    force: bool,
    /// Use the whole relational graph instead of a subgraph
    #[arg(long)]
    full: bool,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, HarnessError> {
    let id: ExperimentId = cli.experiment.parse().map_err(HarnessError::Config)?;
    let text = std::fs::read_to_string(&cli.config)
        .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", cli.config.display())))?;
    let (mut config, warnings) = ExperimentConfig::parse(id, &text).map_err(|errs| {
        HarnessError::Config(errs.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))
    })?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let overrides = [
        ("seeds", &cli.seed),
        ("snr_db", &cli.snr_db),
        ("servers", &cli.servers),
        ("local_steps", &cli.local_steps),
        ("rounds", &cli.rounds),
        ("noniid_p", &cli.noniid_p),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            config.set(key, v).map_err(|e| match e {
                SetError::Bad(m) => HarnessError::Config(format!("--{}: {m}", key.replace('_', "-"))),
                SetError::Unknown => HarnessError::Config(format!("unknown key {key}")),
            })?;
        }
    }
    if let Some(out) = &cli.out {
        config.out = Some(out.clone());
    }
    if cli.full {
        config.full = true;
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load(&cli).and_then(|config| run_experiment(&config, cli.force));
    match result {
        Ok(bundle) => {
            println!("{} -> {}", cli.experiment, bundle.dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("irml: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
