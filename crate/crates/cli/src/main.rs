use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use kgep_cli::config::PipelineConfig;
use kgep_cli::stages::{
    self, paths, run_build_kg, run_build_topics, run_evaluate, run_generate, run_ingest,
    run_pipeline, run_recommend, run_train_kgep, run_train_transd, StageCtx,
};

/// Knowledge-graph app-recommender pipeline.
#[derive(Debug, Parser)]
#[command(name = "kgep", version, about)]
struct Cli {
    /// JSON config file; built-in defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Work directory holding every pipeline artifact.
    #[arg(long, global = true, default_value = "work")]
    workdir: PathBuf,

    /// Override the RNG seed (precedence: this flag, then KGEP_SEED, then
    /// the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for intra-stage parallelism.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Re-run stages even when the manifest marks them up to date.
    #[arg(long, global = true)]
    force: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic clustered dataset into raw/.
    Generate,
    /// Validate and cold-start-filter a dataset into dataset/.
    Ingest {
        /// Apps CSV (default: <workdir>/raw/apps.csv).
        #[arg(long)]
        apps: Option<PathBuf>,
        /// Ratings CSV (default: <workdir>/raw/ratings.csv).
        #[arg(long)]
        ratings: Option<PathBuf>,
    },
    /// Fit the readme topic model into topics/.
    BuildTopics,
    /// Assemble the knowledge graph into kg/.
    BuildKg {
        /// Threshold the raw Hellinger distance instead of the similarity
        /// when linking content topics.
        #[arg(long)]
        ct_raw_distance: bool,
    },
    /// Train structural embeddings into transd.ckpt.
    TrainTransd,
    /// Train the propagation scoring model into kgep.ckpt.
    TrainKgep,
    /// Compare the configured models on held-out data; writes report.tsv.
    Evaluate {
        /// Models to rank (subset of kgep,usercf,popularity).
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
        /// Report cutoffs.
        #[arg(long, value_delimiter = ',')]
        ks: Vec<usize>,
        /// Also copy the report here; without this the report goes to
        /// stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Top-K recommendations for one user.
    Recommend {
        /// User id as it appears in the ratings file.
        #[arg(long)]
        user: String,
        /// How many apps to return.
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Keep apps the user already interacted with in the ranking.
        #[arg(long)]
        include_train: bool,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every stage in order.
    Pipeline {
        /// Generate the synthetic dataset first instead of ingesting
        /// existing files.
        #[arg(long, conflicts_with_all = ["apps", "ratings"])]
        synthetic: bool,
        /// Apps CSV to ingest (default: <workdir>/raw/apps.csv).
        #[arg(long, requires = "ratings")]
        apps: Option<PathBuf>,
        /// Ratings CSV to ingest (default: <workdir>/raw/ratings.csv).
        #[arg(long, requires = "apps")]
        ratings: Option<PathBuf>,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    if let Err(err) = run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .context("cannot configure the thread pool")?;

    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.engine.rng_seed = seed;
    } else if let Some(raw) = std::env::var_os("KGEP_SEED") {
        let raw = raw.to_string_lossy();
        config.engine.rng_seed = raw
            .parse()
            .with_context(|| format!("KGEP_SEED `{raw}` is not an unsigned integer"))?;
    }
    std::fs::create_dir_all(&cli.workdir)
        .with_context(|| format!("cannot create work directory {}", cli.workdir.display()))?;
    let mut ctx = StageCtx::new(cli.workdir, config, cli.force);

    match cli.command {
        Command::Generate => {
            run_generate(&ctx)?;
        }
        Command::Ingest { apps, ratings } => {
            let apps = apps.unwrap_or_else(|| ctx.path(paths::RAW_APPS));
            let ratings = ratings.unwrap_or_else(|| ctx.path(paths::RAW_RATINGS));
            run_ingest(&ctx, &apps, &ratings)?;
        }
        Command::BuildTopics => {
            run_build_topics(&ctx)?;
        }
        Command::BuildKg { ct_raw_distance } => {
            if ct_raw_distance {
                ctx.config.kg.ct_raw_distance = true;
            }
            run_build_kg(&ctx)?;
        }
        Command::TrainTransd => {
            run_train_transd(&ctx)?;
        }
        Command::TrainKgep => {
            run_train_kgep(&ctx)?;
        }
        Command::Evaluate { models, ks, out } => {
            if !models.is_empty() {
                ctx.config.evaluate.models = models;
            }
            if !ks.is_empty() {
                ctx.config.evaluate.ks = ks;
            }
            ctx.config.validate()?;
            run_evaluate(&ctx)?;
            let report = std::fs::read_to_string(ctx.path(paths::REPORT))?;
            match out {
                Some(path) => std::fs::write(&path, &report)
                    .with_context(|| format!("cannot write {}", path.display()))?,
                None => print!("{report}"),
            }
        }
        Command::Recommend {
            user,
            k,
            include_train,
            out,
        } => {
            let table = run_recommend(&ctx, &user, k, !include_train, out.as_deref())?;
            if out.is_none() {
                print!("{table}");
            }
        }
        Command::Pipeline {
            synthetic,
            apps,
            ratings,
        } => {
            let source = if synthetic {
                stages::PipelineSource::Synthetic
            } else {
                stages::PipelineSource::Files {
                    apps: apps.unwrap_or_else(|| ctx.path(paths::RAW_APPS)),
                    ratings: ratings.unwrap_or_else(|| ctx.path(paths::RAW_RATINGS)),
                }
            };
            run_pipeline(&ctx, &source)?;
        }
    }
    Ok(())
}
