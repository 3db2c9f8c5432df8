use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use felb_cli::{
    cmd_evaluate, cmd_generate, cmd_run, format_evaluation, threads_from_env, with_threads,
    AggChoice, CliError, EvaluateArgs, ExperimentConfig, GenerateSection, Method, Overrides,
    PrivacyChoice,
};

/// Federated Boolean matrix factorization experiments.
#[derive(Parser)]
#[command(name = "felb", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a planted-tile dataset (data.mtx, mask.mtx, spec.jsonl).
    Generate(GenerateCmd),
    /// Run an experiment from a config file and flags.
    Run(RunCmd),
    /// Score a reconstruction against reference data.
    Evaluate(EvaluateCmd),
}

#[derive(Args)]
struct GenerateCmd {
    /// Read `[data.generate]` from this config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    tiles: Option<usize>,
    #[arg(long)]
    tile_rows: Option<usize>,
    #[arg(long)]
    tile_cols: Option<usize>,
    #[arg(long)]
    tile_density: Option<f64>,
    #[arg(long)]
    background: Option<f64>,
    /// XOR noise probability.
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Args)]
struct RunCmd {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<Method>,
    #[arg(long, value_enum)]
    agg: Option<AggChoice>,
    #[arg(long)]
    clients: Option<usize>,
    #[arg(long)]
    sync_interval: Option<usize>,
    #[arg(long, value_enum)]
    privacy: Option<PrivacyChoice>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Clip payloads to this Frobenius norm.
    #[arg(long)]
    theta: Option<f64>,
}

#[derive(Args)]
struct EvaluateCmd {
    #[arg(long)]
    reconstruction: PathBuf,
    #[arg(long)]
    reference: PathBuf,
    /// Clean ground truth, adds F1*.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Real-valued factor (vhat.bin) for the integrality gap.
    #[arg(long)]
    factor: Option<PathBuf>,
}

fn load(path: &Option<PathBuf>) -> Result<ExperimentConfig, CliError> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn generate(cmd: GenerateCmd) -> Result<(), CliError> {
    let mut g = match load(&cmd.config)?.data {
        felb_cli::DataSource::Generate(g) => g,
        felb_cli::DataSource::Files(_) => GenerateSection::default(),
    };
    g.rows = cmd.rows.unwrap_or(g.rows);
    g.cols = cmd.cols.unwrap_or(g.cols);
    g.tiles = cmd.tiles.unwrap_or(g.tiles);
    g.tile_rows = cmd.tile_rows.or(g.tile_rows);
    g.tile_cols = cmd.tile_cols.or(g.tile_cols);
    g.tile_density = cmd.tile_density.unwrap_or(g.tile_density);
    g.background_density = cmd.background.unwrap_or(g.background_density);
    g.noise = cmd.noise.unwrap_or(g.noise);
    cmd_generate(&g, cmd.seed, &cmd.out)
}

fn run(cmd: RunCmd) -> Result<(), CliError> {
    let mut cfg = load(&cmd.config)?;
    cfg.apply(&Overrides {
        seed: cmd.seed,
        out: cmd.out,
        method: cmd.method,
        aggregation: cmd.agg,
        clients: cmd.clients,
        sync_interval: cmd.sync_interval,
        privacy: cmd.privacy,
        epsilon: cmd.epsilon,
        delta: cmd.delta,
        theta: cmd.theta,
    });
    let outcomes = with_threads(threads_from_env()?, || cmd_run(&cfg))??;
    for o in outcomes {
        let star = o.metrics.f1_star.map(|f| format!(" f1_star {f:.4}")).unwrap_or_default();
        println!(
            "seed {} rounds {} rmsd {:.4} f1 {:.4}{star} gap {:.2e} -> {}",
            o.seed,
            o.rounds,
            o.metrics.rmsd,
            o.metrics.f1,
            o.metrics.integrality_gap,
            o.dir.display()
        );
    }
    Ok(())
}

fn evaluate(cmd: EvaluateCmd) -> Result<(), CliError> {
    let m = cmd_evaluate(&EvaluateArgs {
        reconstruction: cmd.reconstruction,
        reference: cmd.reference,
        mask: cmd.mask,
        factor: cmd.factor,
    })?;
    print!("{}", format_evaluation(&m));
    Ok(())
}

fn main() -> ExitCode {
    let result = match Cli::parse().command {
        Command::Generate(c) => generate(c),
        Command::Run(c) => run(c),
        Command::Evaluate(c) => evaluate(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("felb: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
