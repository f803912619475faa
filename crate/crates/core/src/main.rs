use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tilerecon::pipeline::{
    cmd_dense, cmd_eval, cmd_fuse, cmd_group, cmd_match, cmd_run, cmd_sfm, cmd_synth, cmd_tile, cmd_upgrade,
    write_report, PipelineError, RunConfig, StageStatus, Workspace,
};

#[derive(Parser)]
#[command(name = "tilerecon", version, about = "Tiled affine-to-Euclidean reconstruction")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "workspace")]
    workspace: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Caps worker threads; all cores by default.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate a synthetic dataset into the workspace.
    Synth,
    /// Group images by capture time.
    Group,
    /// Crop images into overlapping tiles.
    Tile,
    /// Sparse matching (built-in or external).
    Match,
    /// Incremental affine structure from motion per group.
    Sfm,
    /// Dense matching and densification.
    Dense,
    /// GCP-based metric upgrade.
    Upgrade,
    /// ICP alignment and fusion of group clouds.
    Fuse,
    /// DEM rasterization and metrics.
    Eval,
    /// Every stage from grouping to evaluation.
    Run,
}

fn execute(cli: &Cli) -> Result<(), PipelineError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let ws = Workspace::new(&cli.workspace);
    ws.init()?;
    let stage: fn(&Workspace, &RunConfig) -> Result<StageStatus, PipelineError> = match cli.command {
        Command::Synth => {
            let m = cmd_synth(&ws, &cfg)?;
            println!(
                "synthetic dataset: {} images, {} sparse matches ({} planted outliers) in {}",
                m.images.len(),
                m.total_sparse_matches,
                m.planted_outliers,
                ws.resolve(&cfg.synth.out).display()
            );
            return Ok(());
        }
        Command::Run => {
            let (report, statuses) = cmd_run(&ws, &cfg)?;
            for s in &statuses {
                println!("{:<8} {:<8} {:>8.2} s", s.stage, if s.ran { "ran" } else { "skipped" }, s.seconds);
            }
            if let Some(m) = report.summary("eval").and_then(|s| s.get("metrics")).filter(|m| !m.is_null()) {
                println!("median error {} m, completeness {} %", m["median_error"], m["completeness"]);
            }
            return Ok(());
        }
        Command::Group => cmd_group,
        Command::Tile => cmd_tile,
        Command::Match => cmd_match,
        Command::Sfm => cmd_sfm,
        Command::Dense => cmd_dense,
        Command::Upgrade => cmd_upgrade,
        Command::Fuse => cmd_fuse,
        Command::Eval => cmd_eval,
    };
    let status = stage(&ws, &cfg)?;
    write_report(&ws, &cfg, std::slice::from_ref(&status))?;
    println!(
        "{}: {} in {:.2} s",
        status.stage,
        if status.ran { "ran" } else { "up to date" },
        status.seconds
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: cannot size the thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
