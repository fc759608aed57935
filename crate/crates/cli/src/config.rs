//! The single JSON pipeline configuration.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use kgep_core::eval::GeneratorConfig;
use kgep_core::EngineConfig;

/// Topic-model stage settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdaSection {
    /// Symmetric document-topic prior; `null` means 50 / topic_count.
    pub alpha: Option<f64>,
    /// Symmetric topic-word prior.
    pub beta: f64,
    /// Full Gibbs sweeps.
    pub iterations: usize,
    /// Corpus-wide minimum term frequency kept in the vocabulary.
    pub min_term_count: usize,
}

impl Default for LdaSection {
    fn default() -> Self {
        LdaSection {
            alpha: None,
            beta: 0.01,
            iterations: 200,
            min_term_count: 5,
        }
    }
}

impl LdaSection {
    pub fn alpha_for(&self, topic_count: usize) -> f64 {
        self.alpha.unwrap_or(50.0 / topic_count as f64)
    }
}

/// Evaluation stage settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Subset of {kgep, usercf, popularity}, report order.
    pub models: Vec<String>,
    /// Report cutoffs.
    pub ks: Vec<usize>,
    /// Top-N neighborhood cut for UserCF; `null` uses all users.
    pub usercf_neighbors: Option<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            models: vec![
                "kgep".to_string(),
                "usercf".to_string(),
                "popularity".to_string(),
            ],
            ks: kgep_core::eval::DEFAULT_KS.to_vec(),
            usercf_neighbors: None,
        }
    }
}

/// Graph-construction stage settings beyond [`EngineConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct KgSection {
    /// Threshold the raw Hellinger distance (≥ cts) instead of the
    /// similarity 1 − distance when linking content topics.
    pub ct_raw_distance: bool,
}

/// Propagation runtime settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationSection {
    /// Largest neighborhood aggregated per node; `null` is unbounded.
    pub neighbor_cap: Option<usize>,
}

/// Everything a full pipeline run needs, one section per stage group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub engine: EngineConfig,
    pub generator: GeneratorConfig,
    pub lda: LdaSection,
    pub kg: KgSection,
    pub propagation: PropagationSection,
    pub evaluate: EvalSection,
}

pub const KNOWN_MODELS: [&str; 3] = ["kgep", "usercf", "popularity"];

impl PipelineConfig {
    /// Reads and validates a JSON config file.
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config: PipelineConfig = serde_json::from_str(&text)
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        config
            .validate()
            .with_context(|| format!("invalid config {}", path.display()))?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.engine.validate()?;
        if let Some(alpha) = self.lda.alpha {
            anyhow::ensure!(
                alpha > 0.0 && alpha.is_finite(),
                "lda.alpha must be a positive finite number"
            );
        }
        anyhow::ensure!(
            self.lda.beta > 0.0 && self.lda.beta.is_finite(),
            "lda.beta must be a positive finite number"
        );
        anyhow::ensure!(self.lda.iterations > 0, "lda.iterations must be positive");
        anyhow::ensure!(
            self.lda.min_term_count > 0,
            "lda.min_term_count must be positive"
        );
        anyhow::ensure!(!self.evaluate.models.is_empty(), "evaluate.models is empty");
        for model in &self.evaluate.models {
            anyhow::ensure!(
                KNOWN_MODELS.contains(&model.as_str()),
                "unknown model `{model}` (expected one of {KNOWN_MODELS:?})"
            );
        }
        anyhow::ensure!(!self.evaluate.ks.is_empty(), "evaluate.ks is empty");
        anyhow::ensure!(
            self.evaluate.ks.iter().all(|&k| k > 0),
            "evaluate.ks entries must be positive"
        );
        Ok(())
    }
}
