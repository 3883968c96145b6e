use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use rso_anomaly::pipeline::{
    cmd_evaluate, cmd_ingest, cmd_label, cmd_score, cmd_stats, cmd_synth, cmd_train, exit_code, EvaluateOptions,
    IngestSource, Pipeline, RunConfig, StatsOptions, TrainOptions, EXIT_OK,
};
use rso_anomaly::synth::ScenarioConfig;
use rso_anomaly::{Error, Result};

/// Per-element anomaly detection for resident space objects.
#[derive(Debug, Parser)]
#[command(name = "rsoanom", version)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load TLE data and select the study population.
    Ingest(IngestArgs),
    /// Write interquartile-range labels for the selected objects.
    Label {
        #[arg(long)]
        window: Option<String>,
    },
    /// Train one model per selected object.
    Train {
        #[arg(long)]
        window: Option<String>,
        /// Retrain even when the model file is up to date.
        #[arg(long)]
        force: bool,
    },
    /// Score observations inside a window.
    Score {
        #[arg(long)]
        window: String,
        /// Window whose models are applied (default: the training window).
        #[arg(long)]
        model_window: Option<String>,
    },
    /// Compare flags with labels; optionally search a grid or sweep windows.
    Evaluate {
        /// Grid file, or `study` for the built-in search space.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long)]
        temporal: bool,
    },
    /// Hypothesis test and descriptive analytics.
    Stats {
        /// Two window names, e.g. `baseline,leadup`.
        #[arg(long, value_name = "FIRST,SECOND", value_parser = window_pair)]
        chi2: Option<(String, String)>,
        #[arg(long)]
        monthly: bool,
        #[arg(long)]
        diffs: bool,
        #[arg(long)]
        corr: bool,
    },
    /// Generate a synthetic corpus with ground-truth masks.
    Synth {
        /// Scenario file, or `demo` for the built-in scenario.
        #[arg(long)]
        scenario: PathBuf,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct IngestArgs {
    #[arg(long)]
    tle: Option<PathBuf>,
    /// Download from the catalog service configured in `[data.fetch]`.
    #[arg(long)]
    fetch: bool,
    /// Use the `data.tle` path of the configuration.
    #[arg(long)]
    configured: bool,
}

fn window_pair(s: &str) -> std::result::Result<(String, String), String> {
    match s.split(',').map(str::trim).collect::<Vec<_>>()[..] {
        [a, b] if !a.is_empty() && !b.is_empty() => Ok((a.to_string(), b.to_string())),
        _ => Err(format!("expected two comma-separated window names, got {s:?}")),
    }
}

fn run_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Command::Synth { scenario } = &cli.command {
        let mut sc = if scenario.as_os_str() == "demo" {
            ScenarioConfig::demo(cli.seed.unwrap_or(0))
        } else {
            ScenarioConfig::load(scenario).map_err(|e| match e {
                Error::Io { path, source } => Error::Config(format!("{}: {source}", path.display())),
                other => other,
            })?
        };
        if let Some(s) = cli.seed {
            sc.seed = s;
        }
        let cfg = run_config(&cli)?;
        let dir = cfg.out_dir.join("synth");
        return print_json(&cmd_synth(&sc, &dir, cfg.workers)?);
    }

    let pipeline = Pipeline::new(run_config(&cli)?)?;
    match cli.command {
        Command::Ingest(args) => {
            let source = match (args.tle, args.fetch) {
                (Some(p), _) => IngestSource::TleFile(p),
                (None, true) => IngestSource::Fetch,
                (None, false) => IngestSource::Configured,
            };
            print_json(&cmd_ingest(&pipeline, source)?)
        }
        Command::Label { window } => print_json(&cmd_label(&pipeline, window.as_deref())?),
        Command::Train { window, force } => {
            let summary = cmd_train(&pipeline, &TrainOptions { window, force })?;
            for (id, e) in &summary.failures {
                eprintln!("failed: {id}: {e}");
            }
            print_json(&summary)
        }
        Command::Score { window, model_window } => {
            print_json(&cmd_score(&pipeline, &window, model_window.as_deref())?)
        }
        Command::Evaluate { grid, temporal } => print_json(&cmd_evaluate(&pipeline, &EvaluateOptions { grid, temporal })?),
        Command::Stats {
            chi2,
            monthly,
            diffs,
            corr,
        } => {
            print_json(&cmd_stats(
                &pipeline,
                &StatsOptions {
                    chi2,
                    monthly,
                    diffs,
                    corr,
                },
            )?)
        }
        Command::Synth { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { EXIT_OK });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
