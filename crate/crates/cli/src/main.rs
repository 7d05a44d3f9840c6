//! `scene-embed`: ingest → build-graphs → train → embed → eval → cluster → plot.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use scene_embed::config::Config;
use scene_embed::pipeline::{self, PlotInput};
use scene_embed::Error;

#[derive(Parser)]
#[command(name = "scene-embed", version, about = "Semantic scene graph embeddings")]
struct Cli {
    /// TOML config file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one config key, e.g. `--set train.epochs=50`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Accept upstream artifacts written under a different config.
    #[arg(long, global = true)]
    force: bool,

    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn a track CSV recorded on one map into scenes.
    Ingest {
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        map: PathBuf,
        /// Location label; defaults to the map id.
        #[arg(long)]
        location: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate synthetic scenes, maps and track files.
    Generate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Build one scene graph per scene.
    BuildGraphs {
        #[arg(long)]
        scenes: PathBuf,
        /// Extra map file added to the scene set.
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the encoder; writes splits, loss history and checkpoints.
    Train {
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the embedding CSV of a graph file.
    Embed {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        graphs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Triplet accuracy and regression probes.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        scenes: PathBuf,
        /// `splits.json` from training; only its holdout scenes are scored.
        #[arg(long)]
        splits: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reduce embeddings to 2-d and cluster them.
    Cluster {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// SVG scatter of embeddings (PCA) or of a cluster report.
    Plot {
        #[command(flatten)]
        input: PlotSource,
        /// `cluster`, `location`, or a graph-level feature name.
        #[arg(long, default_value = "location")]
        color_by: String,
        /// Graph file, needed when colouring by a feature.
        #[arg(long)]
        graphs: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct PlotSource {
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    clusters: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 1,
        Error::NonFinite(_) => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let config = Config::load_with_overrides(cli.config.as_deref(), &cli.overrides)?;
    let force = cli.force;
    match cli.command {
        Command::Ingest {
            tracks,
            map,
            location,
            out,
        } => {
            let n = pipeline::cmd_ingest(&config, &tracks, &map, location.as_deref(), &out)?;
            println!("{n} scenes -> {}", out.display());
        }
        Command::Generate { out } => {
            let n = pipeline::cmd_generate(&config, &out)?;
            println!("{n} scenes -> {}", out.join("scenes.json").display());
        }
        Command::BuildGraphs { scenes, map, out } => {
            let s = pipeline::cmd_build_graphs(&config, &scenes, map.as_deref(), &out, force)?;
            println!("{} graphs ({} failed) -> {}", s.built, s.failed.len(), out.display());
            if s.built == 0 && !s.failed.is_empty() {
                return Err(Error::Invalid(format!("no scene produced a graph; first error: {}", s.failed[0].1)));
            }
        }
        Command::Train { scenes, out } => {
            let s = pipeline::cmd_train(&config, &scenes, &out, force)?;
            if let Some(last) = s.history.last() {
                println!(
                    "{} epochs, best epoch {}, final validation accuracy {:.3} -> {}",
                    s.history.len(),
                    s.best_epoch.map_or("-".into(), |e| e.to_string()),
                    last.val_accuracy,
                    out.display()
                );
            }
        }
        Command::Embed {
            checkpoint,
            graphs,
            out,
        } => {
            let n = pipeline::cmd_embed(&config, &checkpoint, &graphs, &out, force)?;
            println!("{n} embeddings -> {}", out.display());
        }
        Command::Eval {
            checkpoint,
            scenes,
            splits,
            out,
        } => {
            let r = pipeline::cmd_eval(&config, &checkpoint, &scenes, splits.as_deref(), &out, force)?;
            println!(
                "{:<24} {:>6} {:>8} {:>8} {:>8}",
                "location", "count", "acc", "d+", "d-"
            );
            for row in r.accuracy.locations.iter().chain([&r.accuracy.total]) {
                println!(
                    "{:<24} {:>6} {:>8.3} {:>8.3} {:>8.3}",
                    row.location, row.count, row.accuracy, row.mean_d_pos, row.mean_d_neg
                );
            }
            println!("{:<12} {:>8} {:>8} {:>8}", "feature", "mse", "mae", "mean");
            for p in &r.probes {
                println!(
                    "{:<12} {:>8.3} {:>8.3} {:>8.3}",
                    p.feature, p.report.mse, p.report.mae, p.report.target_mean
                );
            }
        }
        Command::Cluster { embeddings, out } => {
            let c = pipeline::cmd_cluster(&config, &embeddings, &out, force)?;
            println!(
                "k = {} (silhouette {:.3}) -> {}",
                c.report.selected,
                c.report.best_silhouette(),
                out.display()
            );
        }
        Command::Plot {
            input,
            color_by,
            graphs,
            out,
        } => {
            let source = match (&input.embeddings, &input.clusters) {
                (Some(e), _) => PlotInput::Embeddings(e),
                (None, Some(c)) => PlotInput::Clusters(c),
                (None, None) => unreachable!("clap requires one input"),
            };
            pipeline::cmd_plot(&config, source, &color_by, graphs.as_deref(), &out, force)?;
            println!("{}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.quiet { "warn" } else { "info" }))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
