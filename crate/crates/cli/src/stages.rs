//! Pipeline stages over a shared work directory.
//!
//! Each cached stage records a fingerprint of the settings it reads, the
//! shared seed, and content hashes of its input and output files in
//! `manifest.json`. A re-run with the same fingerprint, seed, and input
//! hashes — and outputs still intact on disk — is skipped unless forced.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::json;

use kgep_core::dataset::{self, RatingMatrix};
use kgep_core::eval::{
    evaluate, generate_synthetic, split_interactions, PopularityRecommender, TopKRecommender,
    UserCfRecommender,
};
use kgep_core::kg::{build_arkg, describe, user_similarity_matrix, KnowledgeGraph};
use kgep_core::lda::{assign_topics, fit_lda};
use kgep_core::recommender::{recommend, train_kgep, KgepRecommender};
use kgep_core::text::{default_stopwords, preprocess};
use kgep_core::transd::{train_transd, TransdTrainOptions};
use kgep_core::{Checkpoint, Real, TopicModel, TransDParams};

use crate::config::PipelineConfig;
use crate::manifest::{sha256_file, sha256_str, PipelineManifest, StageRecord};

/// Work-directory layout, relative to the work directory root.
pub mod paths {
    pub const RAW_APPS: &str = "raw/apps.csv";
    pub const RAW_RATINGS: &str = "raw/ratings.csv";
    pub const DATASET_APPS: &str = "dataset/apps.csv";
    pub const DATASET_RATINGS: &str = "dataset/ratings.csv";
    pub const DATASET_SKIPS: &str = "dataset/skips.txt";
    pub const DATASET_STATS: &str = "dataset/stats.txt";
    pub const TOPICS_DIR: &str = "topics";
    pub const TOPICS_PHI: &str = "topics/phi.tsv";
    pub const TOPICS_THETA: &str = "topics/theta.tsv";
    pub const TOPICS_VOCAB: &str = "topics/vocab.txt";
    pub const KG_DIR: &str = "kg";
    pub const KG_ENTITIES: &str = "kg/entities.tsv";
    pub const KG_RELATIONS: &str = "kg/relations.tsv";
    pub const KG_TRIPLES: &str = "kg/triples.tsv";
    pub const KG_SUMMARY: &str = "kg/summary.txt";
    pub const TRANSD_CKPT: &str = "transd.ckpt";
    pub const KGEP_CKPT: &str = "kgep.ckpt";
    pub const REPORT: &str = "report.tsv";
}

/// Which stage produces a given work-directory file; used to point the user
/// at the missing step when a stage's input is absent.
fn producer_hint(rel: &str) -> Option<&'static str> {
    let stage = if rel.starts_with("raw/") {
        "generate"
    } else if rel.starts_with("dataset/") {
        "ingest"
    } else if rel.starts_with("topics/") {
        "build-topics"
    } else if rel.starts_with("kg/") {
        "build-kg"
    } else if rel == paths::TRANSD_CKPT {
        "train-transd"
    } else if rel == paths::KGEP_CKPT {
        "train-kgep"
    } else {
        return None;
    };
    Some(stage)
}

/// Whether a cached stage actually executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageOutcome {
    Ran,
    Skipped,
}

/// Everything the stage functions need: where to work, the resolved
/// configuration (seed overrides already applied), and whether to bypass
/// the manifest cache.
#[derive(Debug, Clone)]
pub struct StageCtx {
    pub workdir: PathBuf,
    pub config: PipelineConfig,
    pub force: bool,
}

impl StageCtx {
    pub fn new(workdir: PathBuf, config: PipelineConfig, force: bool) -> StageCtx {
        StageCtx {
            workdir,
            config,
            force,
        }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.workdir.join(rel)
    }
}

/// (manifest key, location) pairs for inputs addressed relative to the
/// work directory.
fn rel_inputs(ctx: &StageCtx, rels: &[&str]) -> Vec<(String, PathBuf)> {
    rels.iter()
        .map(|rel| (rel.to_string(), ctx.path(rel)))
        .collect()
}

/// Runs `body` unless the manifest proves this stage is up to date.
/// `fingerprint` must cover every setting the stage reads (the shared seed
/// is tracked separately); `inputs` and `outputs` must cover every file it
/// reads and writes that belongs to the pipeline.
fn run_cached(
    ctx: &StageCtx,
    stage: &'static str,
    fingerprint: serde_json::Value,
    inputs: &[(String, PathBuf)],
    outputs: &[&str],
    body: impl FnOnce() -> Result<()>,
) -> Result<StageOutcome> {
    let mut input_hashes = BTreeMap::new();
    for (key, path) in inputs {
        let hash = sha256_file(path).with_context(|| {
            let hint = producer_hint(key)
                .map(|s| format!(" (produced by the {s} stage)"))
                .unwrap_or_default();
            format!("stage {stage}: cannot read input {}{hint}", path.display())
        })?;
        input_hashes.insert(key.clone(), hash);
    }
    let mut record = StageRecord {
        config_hash: sha256_str(&fingerprint.to_string()),
        seed: ctx.config.engine.rng_seed,
        inputs: input_hashes,
        outputs: BTreeMap::new(),
    };

    let manifest = PipelineManifest::load(&ctx.workdir);
    if !ctx.force && manifest.is_fresh(&ctx.workdir, stage, &record) {
        log::info!("stage {stage}: up to date, skipping");
        return Ok(StageOutcome::Skipped);
    }

    log::info!("stage {stage}: running");
    let started = std::time::Instant::now();
    body().with_context(|| format!("stage {stage} failed"))?;
    log::info!("stage {stage}: done in {:.2}s", started.elapsed().as_secs_f64());

    for rel in outputs {
        let hash = sha256_file(&ctx.path(rel))
            .with_context(|| format!("stage {stage}: declared output {rel} was not produced"))?;
        record.outputs.insert((*rel).to_string(), hash);
    }
    let mut manifest = PipelineManifest::load(&ctx.workdir);
    manifest.stages.insert(stage.to_string(), record);
    manifest.save(&ctx.workdir)?;
    Ok(StageOutcome::Ran)
}

/// Writes a synthetic clustered dataset into `raw/`.
pub fn run_generate(ctx: &StageCtx) -> Result<StageOutcome> {
    let fingerprint = json!({ "generator": ctx.config.generator });
    run_cached(
        ctx,
        "generate",
        fingerprint,
        &[],
        &[paths::RAW_APPS, paths::RAW_RATINGS],
        || {
            let (apps, ratings) =
                generate_synthetic(&ctx.config.generator, ctx.config.engine.rng_seed)?;
            fs::create_dir_all(ctx.path("raw"))?;
            dataset::write_dataset(
                &ctx.path(paths::RAW_APPS),
                &ctx.path(paths::RAW_RATINGS),
                &apps,
                &ratings,
            )?;
            log::info!("generate: {} apps, {} ratings", apps.len(), ratings.len());
            Ok(())
        },
    )
}

/// Validates the raw CSVs, drops cold-start rows, and writes the filtered
/// dataset plus skip and summary reports into `dataset/`.
pub fn run_ingest(ctx: &StageCtx, apps_src: &Path, ratings_src: &Path) -> Result<StageOutcome> {
    let engine = &ctx.config.engine;
    let fingerprint = json!({
        "min_user_interactions": engine.min_user_interactions,
        "min_app_interactions": engine.min_app_interactions,
    });
    let inputs = vec![
        (apps_src.display().to_string(), apps_src.to_path_buf()),
        (ratings_src.display().to_string(), ratings_src.to_path_buf()),
    ];
    run_cached(
        ctx,
        "ingest",
        fingerprint,
        &inputs,
        &[
            paths::DATASET_APPS,
            paths::DATASET_RATINGS,
            paths::DATASET_SKIPS,
            paths::DATASET_STATS,
        ],
        || {
            let data = dataset::load_dataset(apps_src, ratings_src)?;
            let filtered = dataset::filter_cold_start(
                &data.apps,
                &data.ratings,
                engine.min_user_interactions,
                engine.min_app_interactions,
            )?;
            fs::create_dir_all(ctx.path("dataset"))?;
            dataset::write_dataset(
                &ctx.path(paths::DATASET_APPS),
                &ctx.path(paths::DATASET_RATINGS),
                &filtered.apps,
                &filtered.ratings,
            )?;
            let mut skips = fs::File::create(ctx.path(paths::DATASET_SKIPS))?;
            dataset::write_skip_report(&mut skips, &data.skipped)?;

            let matrix = RatingMatrix::build(&filtered.ratings)?;
            let stats = format!(
                "users\t{}\napps\t{}\ninteractions\t{}\nsparsity\t{:.6}\n\
                 removed_users\t{}\nremoved_apps\t{}\nskipped_rows\t{}\n\
                 second_pass_would_change\t{}\n",
                matrix.users().len(),
                matrix.apps().len(),
                matrix.interaction_count(),
                matrix.sparsity(),
                filtered.removed_users.len(),
                filtered.removed_apps.len(),
                data.skipped.len(),
                filtered.second_pass_would_change,
            );
            fs::write(ctx.path(paths::DATASET_STATS), stats)?;
            log::info!(
                "ingest: kept {} users x {} apps, {} interactions (sparsity {:.4}); \
                 removed {} users, {} apps; skipped {} rows",
                matrix.users().len(),
                matrix.apps().len(),
                matrix.interaction_count(),
                matrix.sparsity(),
                filtered.removed_users.len(),
                filtered.removed_apps.len(),
                data.skipped.len(),
            );
            Ok(())
        },
    )
}

/// Fits the readme topic model and writes it into `topics/`.
pub fn run_build_topics(ctx: &StageCtx) -> Result<StageOutcome> {
    let engine = &ctx.config.engine;
    let lda = &ctx.config.lda;
    let alpha = lda.alpha_for(engine.topic_count);
    let fingerprint = json!({
        "topic_count": engine.topic_count,
        "alpha": alpha,
        "beta": lda.beta,
        "iterations": lda.iterations,
        "min_term_count": lda.min_term_count,
    });
    let inputs = rel_inputs(ctx, &[paths::DATASET_APPS]);
    run_cached(
        ctx,
        "build-topics",
        fingerprint,
        &inputs,
        &[paths::TOPICS_PHI, paths::TOPICS_THETA, paths::TOPICS_VOCAB],
        || {
            let data = dataset::load_dataset(
                &ctx.path(paths::DATASET_APPS),
                &ctx.path(paths::DATASET_RATINGS),
            )?;
            let texts: Vec<String> = data.apps.iter().map(|a| a.readme_text.clone()).collect();
            let corpus = preprocess(&texts, &default_stopwords(), lda.min_term_count)?;
            if !corpus.empty_documents.is_empty() {
                log::warn!(
                    "build-topics: {} of {} readmes empty after preprocessing",
                    corpus.empty_documents.len(),
                    texts.len(),
                );
            }
            let model: TopicModel = fit_lda(
                &corpus,
                engine.topic_count,
                alpha,
                lda.beta,
                lda.iterations,
                engine.rng_seed,
            )?;
            fs::create_dir_all(ctx.path(paths::TOPICS_DIR))?;
            model.save(&ctx.path(paths::TOPICS_DIR), &corpus.vocabulary)?;
            log::info!(
                "build-topics: {} documents, vocabulary {}, {} topics",
                model.doc_count(),
                model.vocab_size(),
                model.topic_count(),
            );
            Ok(())
        },
    )
}

/// Assembles the knowledge graph from the filtered dataset's training
/// interactions, the topic model, and app attributes; writes it into `kg/`.
pub fn run_build_kg(ctx: &StageCtx) -> Result<StageOutcome> {
    let engine = &ctx.config.engine;
    let fingerprint = json!({
        "cts": engine.cts,
        "us": engine.us,
        "ct_raw_distance": ctx.config.kg.ct_raw_distance,
    });
    let inputs = rel_inputs(
        ctx,
        &[
            paths::DATASET_APPS,
            paths::DATASET_RATINGS,
            paths::TOPICS_PHI,
            paths::TOPICS_THETA,
            paths::TOPICS_VOCAB,
        ],
    );
    run_cached(
        ctx,
        "build-kg",
        fingerprint,
        &inputs,
        &[
            paths::KG_ENTITIES,
            paths::KG_RELATIONS,
            paths::KG_TRIPLES,
            paths::KG_SUMMARY,
        ],
        || {
            let data = dataset::load_dataset(
                &ctx.path(paths::DATASET_APPS),
                &ctx.path(paths::DATASET_RATINGS),
            )?;
            let matrix = RatingMatrix::build(&data.ratings)?;
            let split = split_interactions(&matrix, engine.rng_seed)?;
            let train = split.train_matrix(&matrix);
            let (model, _vocab) = TopicModel::load(&ctx.path(paths::TOPICS_DIR))?;
            let assignment = assign_topics(&model);
            let kg = build_arkg(
                &data.apps,
                &train,
                &model,
                &assignment,
                engine,
                ctx.config.kg.ct_raw_distance,
            )?;
            fs::create_dir_all(ctx.path(paths::KG_DIR))?;
            kg.save(&ctx.path(paths::KG_DIR))?;
            fs::write(ctx.path(paths::KG_SUMMARY), describe(&kg))?;
            log::info!(
                "build-kg: {} entities, {} triples",
                kg.entity_count(),
                kg.triple_count(),
            );
            Ok(())
        },
    )
}

/// Trains structural embeddings on the graph and writes `transd.ckpt`.
pub fn run_train_transd(ctx: &StageCtx) -> Result<StageOutcome> {
    let options = TransdTrainOptions::from_config(&ctx.config.engine);
    let fingerprint = json!({
        "dim": options.dim,
        "epochs": options.epochs,
        "learning_rate": options.learning_rate,
        "margin": options.margin,
        "batch_size": options.batch_size,
    });
    let inputs = rel_inputs(
        ctx,
        &[paths::KG_ENTITIES, paths::KG_RELATIONS, paths::KG_TRIPLES],
    );
    run_cached(
        ctx,
        "train-transd",
        fingerprint,
        &inputs,
        &[paths::TRANSD_CKPT],
        || {
            let kg = KnowledgeGraph::load(&ctx.path(paths::KG_DIR))?;
            let result = train_transd::<Real>(&kg, &options)?;
            result.params.save(&ctx.path(paths::TRANSD_CKPT))?;
            if let (Some(first), Some(last)) =
                (result.epoch_losses.first(), result.epoch_losses.last())
            {
                log::info!(
                    "train-transd: margin loss {:.4} -> {:.4} over {} epochs",
                    first,
                    last,
                    result.epoch_losses.len(),
                );
            }
            Ok(())
        },
    )
}

/// Trains the propagation/scoring model on top of the frozen structural
/// embeddings and writes `kgep.ckpt`.
pub fn run_train_kgep(ctx: &StageCtx) -> Result<StageOutcome> {
    let engine = &ctx.config.engine;
    let fingerprint = json!({
        "propagation_layers": engine.propagation_layers,
        "learning_rate": engine.learning_rate,
        "epochs": engine.epochs,
        "negatives_per_positive": engine.negatives_per_positive,
        "l2_lambda": engine.l2_lambda,
        "neighbor_cap": ctx.config.propagation.neighbor_cap,
    });
    let inputs = rel_inputs(
        ctx,
        &[
            paths::DATASET_RATINGS,
            paths::KG_ENTITIES,
            paths::KG_RELATIONS,
            paths::KG_TRIPLES,
            paths::TRANSD_CKPT,
        ],
    );
    run_cached(
        ctx,
        "train-kgep",
        fingerprint,
        &inputs,
        &[paths::KGEP_CKPT],
        || {
            let data = dataset::load_dataset(
                &ctx.path(paths::DATASET_APPS),
                &ctx.path(paths::DATASET_RATINGS),
            )?;
            let matrix = RatingMatrix::build(&data.ratings)?;
            let split = split_interactions(&matrix, engine.rng_seed)?;
            let kg = KnowledgeGraph::load(&ctx.path(paths::KG_DIR))?;
            let transd = TransDParams::load(&ctx.path(paths::TRANSD_CKPT))?;
            let outcome = train_kgep(
                &kg,
                &transd,
                &matrix,
                &split,
                engine,
                ctx.config.propagation.neighbor_cap,
            )?;
            outcome.checkpoint.save(&ctx.path(paths::KGEP_CKPT))?;
            if let (Some(first), Some(last)) =
                (outcome.validation_map.first(), outcome.validation_map.last())
            {
                log::info!(
                    "train-kgep: validation MAP@10 {:.4} -> {:.4} over {} epochs",
                    first,
                    last,
                    outcome.validation_map.len(),
                );
            }
            Ok(())
        },
    )
}

/// Ranks the configured models on the held-out test interactions and
/// writes `report.tsv`.
pub fn run_evaluate(ctx: &StageCtx) -> Result<StageOutcome> {
    let engine = &ctx.config.engine;
    let section = &ctx.config.evaluate;
    let wants_kgep = section.models.iter().any(|m| m == "kgep");
    let fingerprint = json!({
        "models": section.models,
        "ks": section.ks,
        "usercf_neighbors": section.usercf_neighbors,
    });
    let mut input_rels = vec![paths::DATASET_RATINGS];
    if wants_kgep {
        input_rels.extend([
            paths::KG_ENTITIES,
            paths::KG_RELATIONS,
            paths::KG_TRIPLES,
            paths::KGEP_CKPT,
        ]);
    }
    let inputs = rel_inputs(ctx, &input_rels);
    run_cached(ctx, "evaluate", fingerprint, &inputs, &[paths::REPORT], || {
        let data = dataset::load_dataset(
            &ctx.path(paths::DATASET_APPS),
            &ctx.path(paths::DATASET_RATINGS),
        )?;
        let matrix = RatingMatrix::build(&data.ratings)?;
        let split = split_interactions(&matrix, engine.rng_seed)?;
        let train = split.train_matrix(&matrix);

        let loaded = if wants_kgep {
            let kg = KnowledgeGraph::load(&ctx.path(paths::KG_DIR))?;
            let checkpoint = Checkpoint::load(&ctx.path(paths::KGEP_CKPT))?;
            Some((kg, checkpoint))
        } else {
            None
        };

        let mut models: Vec<Box<dyn TopKRecommender>> = Vec::new();
        for name in &section.models {
            match name.as_str() {
                "kgep" => {
                    let (kg, checkpoint) = loaded.as_ref().expect("loaded above");
                    models.push(Box::new(KgepRecommender::new(kg, checkpoint, &matrix)?));
                }
                "usercf" => models.push(Box::new(UserCfRecommender::fit(
                    &train,
                    user_similarity_matrix::<Real>(&train),
                    section.usercf_neighbors,
                ))),
                "popularity" => models.push(Box::new(PopularityRecommender::fit(&train))),
                other => anyhow::bail!("unknown model `{other}`"),
            }
        }
        let refs: Vec<&dyn TopKRecommender> = models.iter().map(|m| m.as_ref()).collect();
        let report = evaluate(&refs, &matrix, &split, &section.ks)?;
        let mut file = fs::File::create(ctx.path(paths::REPORT))?;
        report.write_tsv(&mut file)?;
        for row in &report.rows {
            log::info!(
                "evaluate: {}@{}: precision {:.4} recall {:.4} map {:.4}",
                row.model,
                row.k,
                row.precision,
                row.recall,
                row.map,
            );
        }
        Ok(())
    })
}

/// Scores every candidate app for one user with the trained model and
/// writes a `rank / app_id / score` table. A query, not a cached stage.
pub fn run_recommend(
    ctx: &StageCtx,
    user_id: &str,
    k: usize,
    exclude_train: bool,
    out: Option<&Path>,
) -> Result<String> {
    let data = dataset::load_dataset(
        &ctx.path(paths::DATASET_APPS),
        &ctx.path(paths::DATASET_RATINGS),
    )?;
    let matrix = RatingMatrix::build(&data.ratings)?;
    let split = split_interactions(&matrix, ctx.config.engine.rng_seed)?;
    let train = split.train_matrix(&matrix);
    let kg = KnowledgeGraph::load(&ctx.path(paths::KG_DIR))?;
    let checkpoint = Checkpoint::load(&ctx.path(paths::KGEP_CKPT))?;
    let ranked = recommend(&kg, &checkpoint, &train, user_id, k, exclude_train)?;

    let mut text = String::from("rank\tapp_id\tscore\n");
    for (i, (app_id, score)) in ranked.iter().enumerate() {
        text.push_str(&format!("{}\t{}\t{:.6}\n", i + 1, app_id, score));
    }
    if let Some(path) = out {
        fs::write(path, &text).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(text)
}

/// Where the pipeline's raw data comes from.
#[derive(Debug, Clone)]
pub enum PipelineSource {
    /// Generate a synthetic dataset into `raw/` first.
    Synthetic,
    /// Ingest the given CSV files directly.
    Files { apps: PathBuf, ratings: PathBuf },
}

/// Runs every stage in order against one work directory.
pub fn run_pipeline(ctx: &StageCtx, source: &PipelineSource) -> Result<()> {
    let (apps_src, ratings_src) = match source {
        PipelineSource::Synthetic => {
            run_generate(ctx)?;
            (ctx.path(paths::RAW_APPS), ctx.path(paths::RAW_RATINGS))
        }
        PipelineSource::Files { apps, ratings } => (apps.clone(), ratings.clone()),
    };
    run_ingest(ctx, &apps_src, &ratings_src)?;
    run_build_topics(ctx)?;
    run_build_kg(ctx)?;
    run_train_transd(ctx)?;
    run_train_kgep(ctx)?;
    run_evaluate(ctx)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(dir: &Path) -> StageCtx {
        StageCtx::new(dir.to_path_buf(), PipelineConfig::default(), false)
    }

    #[test]
    fn cached_stage_skips_until_forced_or_changed() {
        let dir = tempfile::tempdir().unwrap();
        let ctx = ctx(dir.path());
        let input = dir.path().join("in.txt");
        fs::write(&input, "v1").unwrap();
        let inputs = vec![("in.txt".to_string(), input.clone())];

        let run = |ctx: &StageCtx| {
            run_cached(ctx, "demo", json!({"knob": 1}), &inputs, &["out.txt"], || {
                fs::write(ctx.path("out.txt"), "produced").unwrap();
                Ok(())
            })
        };
        assert_eq!(run(&ctx).unwrap(), StageOutcome::Ran);
        assert_eq!(run(&ctx).unwrap(), StageOutcome::Skipped);

        // A changed input re-runs the stage.
        fs::write(&input, "v2").unwrap();
        assert_eq!(run(&ctx).unwrap(), StageOutcome::Ran);
        assert_eq!(run(&ctx).unwrap(), StageOutcome::Skipped);

        // A missing output re-runs the stage.
        fs::remove_file(ctx.path("out.txt")).unwrap();
        assert_eq!(run(&ctx).unwrap(), StageOutcome::Ran);

        // Force re-runs regardless.
        let forced = StageCtx { force: true, ..ctx.clone() };
        assert_eq!(run(&forced).unwrap(), StageOutcome::Ran);

        // A changed fingerprint re-runs the stage.
        let changed = run_cached(&ctx, "demo", json!({"knob": 2}), &inputs, &["out.txt"], || {
            fs::write(ctx.path("out.txt"), "produced").unwrap();
            Ok(())
        });
        assert_eq!(changed.unwrap(), StageOutcome::Ran);
    }

    #[test]
    fn missing_input_names_the_producing_stage() {
        let dir = tempfile::tempdir().unwrap();
        let ctx = ctx(dir.path());
        let err = run_build_topics(&ctx).unwrap_err();
        let text = format!("{err:#}");
        assert!(text.contains("build-topics"), "{text}");
        assert!(text.contains("ingest"), "{text}");
    }

    #[test]
    fn stage_failure_names_the_stage() {
        let dir = tempfile::tempdir().unwrap();
        let ctx = ctx(dir.path());
        let err = run_cached(&ctx, "demo", json!({}), &[], &[], || {
            anyhow::bail!("boom")
        })
        .unwrap_err();
        assert!(format!("{err:#}").contains("stage demo failed"));
    }
}
