//! `csgaze`: synthetic data generation, two-phase training, evaluation and
//! reporting behind one executable.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::{Mode, Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "csgaze", version, about = "Context-aware social gaze prediction")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory of the command.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Allow writing into a non-empty output directory.
    #[arg(long, global = true)]
    force: bool,
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    /// Freeze the face fusion weights at 0.5 / 0.5.
    #[arg(long, global = true)]
    fixed_equal_alpha: bool,
    /// Train the classifier without a pretrained checkpoint.
    #[arg(long, global = true)]
    from_scratch: bool,
    /// Log level (error, warn, info, debug).
    #[arg(long, global = true, default_value = "info")]
    log: String,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with exact labels.
    SynthGen {
        /// Number of scenes (overrides the config).
        #[arg(long)]
        count: Option<usize>,
    },
    /// Phase 1: heatmap pretraining from a gaze-follow manifest.
    Pretrain {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Phase 2: social gaze classification from a dyad manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Context sidecar used for samples without inline context.
        #[arg(long)]
        contexts: Option<PathBuf>,
        /// Phase-1 checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Metrics of a checkpoint on a manifest, or of a predictions file.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        contexts: Option<PathBuf>,
        /// Precomputed predictions (`sample_id label p_0 … p_N-1`).
        #[arg(long, conflicts_with_all = ["checkpoint", "manifest"])]
        predictions: Option<PathBuf>,
        /// Named class subset, e.g. `Mutual+Share`; repeatable.
        #[arg(long)]
        subset: Vec<String>,
    },
    /// Per-class modality attention of a trained checkpoint.
    Explain {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        contexts: Option<PathBuf>,
    },
    /// Seven-row modality ablation on synthetic data.
    Ablate,
    /// LAH / LAEO / SA flags from gaze points and head boxes.
    LabelPairs {
        /// `sample_id person x y`
        #[arg(long)]
        points: PathBuf,
        /// `sample_id person x_min y_min x_max y_max`; persons ≥ 2 are third parties.
        #[arg(long)]
        boxes: PathBuf,
        /// Auxiliary shared-attention regions, same layout as `--boxes`.
        #[arg(long)]
        regions: Option<PathBuf>,
    },
    /// Export or import the context cache.
    ContextCache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Debug, Subcommand)]
enum CacheAction {
    Export {
        #[arg(long)]
        cache: PathBuf,
    },
    Import {
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.global.log)).init();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let cfg = RunConfig::load(g.config.as_deref())?.resolve(&Overrides {
        seed: g.seed,
        mode: g.mode,
        fixed_equal_alpha: g.fixed_equal_alpha,
        from_scratch: g.from_scratch,
    })?;
    commands::prepare_out(&g.out, g.force)?;
    match cli.command {
        Command::SynthGen { count } => commands::synth_gen(cfg, count, &g.out),
        Command::Pretrain { manifest } => commands::pretrain(cfg, &manifest, &g.out),
        Command::Train {
            manifest,
            contexts,
            checkpoint,
        } => commands::train(cfg, &manifest, contexts.as_deref(), checkpoint.as_deref(), &g.out),
        Command::Eval {
            checkpoint,
            manifest,
            contexts,
            predictions,
            subset,
        } => commands::eval(
            cfg,
            commands::EvalInput::new(checkpoint, manifest, contexts, predictions)?,
            &subset,
            &g.out,
        ),
        Command::Explain {
            checkpoint,
            manifest,
            contexts,
        } => commands::explain(cfg, &checkpoint, &manifest, contexts.as_deref(), &g.out),
        Command::Ablate => commands::ablate(cfg, &g.out),
        Command::LabelPairs { points, boxes, regions } => {
            commands::label_pairs(cfg, &points, &boxes, regions.as_deref(), &g.out)
        }
        Command::ContextCache { action } => match action {
            CacheAction::Export { cache } => commands::cache_export(cfg, &cache, &g.out),
            CacheAction::Import { cache, input } => commands::cache_import(cfg, &cache, &input, &g.out),
        },
    }
}
