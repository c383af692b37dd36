use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use passnet_lab::features::{FeatureMode, Granularity, TargetKind};
use passnet_lab::ingest::{write_events_csv, write_matches_csv, Competition};
use passnet_lab::pipeline::{run_all, PipelineConfig, PipelineLock, Stage, StageStatus, Store};
use passnet_lab::synth::{generate, SynthConfig};
use passnet_lab::{Error, Result};

#[derive(Parser)]
#[command(name = "passnet-lab", version, about = "Passing-network match outcome pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse raw event and match files into canonical CSVs.
    Ingest(StageArgs),
    /// Build per-team passing networks for every match segment.
    BuildNets(StageArgs),
    /// Network metrics and per-team match statistics.
    Metrics(StageArgs),
    /// Rolling pre-match feature tables.
    Features(StageArgs),
    /// Split, tune and fit every configured model.
    Train(StageArgs),
    /// Test-set metrics, ROC/PR curves and per-league results.
    Evaluate(StageArgs),
    /// Elbow scans with silhouette and NMI, with and without PCA.
    Cluster(StageArgs),
    /// Permutation importance and Shapley attributions.
    Importance(StageArgs),
    /// Leave-one-league-out season simulation.
    Simulate(StageArgs),
    /// Metric versus final-rank correlations per league.
    Correlate(StageArgs),
    /// Comparison tables across feature modes.
    Report(StageArgs),
    /// Every stage in order.
    All(StageArgs),
    /// Write a synthetic corpus and a matching config.
    Synth(SynthArgs),
}

#[derive(Args)]
struct StageArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<FeatureMode>,
    #[arg(long)]
    granularity: Option<Granularity>,
    /// Keep draws and predict three outcomes.
    #[arg(long)]
    with_draws: bool,
    #[arg(long)]
    top_n: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    teams_per_league: usize,
    #[arg(long, default_value_t = 1)]
    seasons: usize,
    /// Mean pass attempts per team and half for an average side.
    #[arg(long, default_value_t = 120.0)]
    passes_per_half: f64,
    /// Comma-separated competitions; defaults to the five domestic leagues.
    #[arg(long, value_delimiter = ',')]
    leagues: Vec<Competition>,
}

fn load_config(a: &StageArgs) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(m) = a.mode {
        cfg.modes = vec![m];
        cfg.explain_mode = m;
    }
    if let Some(g) = a.granularity {
        cfg.granularity = g;
    }
    if a.with_draws {
        cfg.target_kind = TargetKind::Ternary;
    }
    if let Some(n) = a.top_n {
        cfg.top_n = n;
    }
    cfg.check()?;
    Ok(cfg)
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("PASSNET_LAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("PASSNET_LAB_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot size worker pool: {e}")))
}

fn run_stages(a: &StageArgs, stage: Option<Stage>) -> Result<()> {
    let cfg = load_config(a)?;
    let _lock = PipelineLock::acquire(&cfg.output_dir)?;
    let store = Store::new(&cfg.output_dir);
    let results = match stage {
        Some(s) => vec![(s, s.run(&cfg, &store)?)],
        None => run_all(&cfg, &store)?,
    };
    for (s, status) in results {
        match status {
            StageStatus::Ran(files) => println!("{s}: wrote {} artifacts", files.len()),
            StageStatus::UpToDate(files) => println!("{s}: up to date ({} artifacts)", files.len()),
        }
    }
    Ok(())
}

fn synth(a: &SynthArgs) -> Result<()> {
    let mut cfg = SynthConfig {
        teams_per_league: a.teams_per_league,
        seasons: a.seasons,
        seed: a.seed,
        passes_per_half: a.passes_per_half,
        ..SynthConfig::default()
    };
    if !a.leagues.is_empty() {
        cfg.leagues = a.leagues.clone();
    }
    if cfg.teams_per_league < 2 || cfg.seasons == 0 || !cfg.passes_per_half.is_finite() || cfg.passes_per_half <= 0.0 {
        return Err(Error::Config(
            "synth needs at least 2 teams per league, 1 season and a positive pass rate".into(),
        ));
    }
    let corpus = generate(&cfg);
    std::fs::create_dir_all(&a.out)?;
    let file = |name: &str| std::fs::File::create(a.out.join(name));
    write_events_csv(&corpus.events, file("events.csv")?)?;
    write_matches_csv(&corpus.matches, file("matches.csv")?)?;
    let conf = "events = events.csv\nmatches = matches.csv\noutput_dir = run\n";
    std::fs::write(a.out.join("pipeline.conf"), conf)?;
    println!(
        "synth: {} matches, {} events in {}",
        corpus.matches.len(),
        corpus.events.len(),
        display(&a.out)
    );
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Ingest(a) => run_stages(a, Some(Stage::Ingest)),
        Command::BuildNets(a) => run_stages(a, Some(Stage::BuildNets)),
        Command::Metrics(a) => run_stages(a, Some(Stage::Metrics)),
        Command::Features(a) => run_stages(a, Some(Stage::Features)),
        Command::Train(a) => run_stages(a, Some(Stage::Train)),
        Command::Evaluate(a) => run_stages(a, Some(Stage::Evaluate)),
        Command::Cluster(a) => run_stages(a, Some(Stage::Cluster)),
        Command::Importance(a) => run_stages(a, Some(Stage::Importance)),
        Command::Simulate(a) => run_stages(a, Some(Stage::Simulate)),
        Command::Correlate(a) => run_stages(a, Some(Stage::Correlate)),
        Command::Report(a) => run_stages(a, Some(Stage::Report)),
        Command::All(a) => run_stages(a, None),
        Command::Synth(a) => synth(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.class());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
