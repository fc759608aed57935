//! Engine hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters shared across the pipeline stages.
///
/// Defaults follow the reference configuration the engine was tuned with;
/// every stage reads only the fields it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Number of content topics K.
    pub topic_count: usize,
    /// Content-topic similarity threshold, in (0, 1).
    pub cts: f64,
    /// User similarity threshold, in (0, 1).
    pub us: f64,
    /// Embedding dimension d.
    pub embed_dim: usize,
    /// Number of propagation layers (0 disables propagation refinement).
    pub propagation_layers: usize,
    /// Learning rate for both training stages.
    pub learning_rate: f64,
    /// Training epochs for both training stages.
    pub epochs: usize,
    /// Margin γ of the translation ranking loss.
    pub margin: f64,
    /// Negative samples per positive interaction.
    pub negatives_per_positive: usize,
    /// L2 regularization strength λ.
    pub l2_lambda: f64,
    /// Seed for every random choice the engine makes.
    pub rng_seed: u64,
    /// Cold-start filter: minimum rated apps per surviving user.
    pub min_user_interactions: usize,
    /// Cold-start filter: minimum distinct raters per surviving app.
    pub min_app_interactions: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            topic_count: 50,
            cts: 0.9,
            us: 0.98,
            embed_dim: 16,
            propagation_layers: 1,
            learning_rate: 0.02,
            epochs: 80,
            margin: 1.0,
            negatives_per_positive: 4,
            l2_lambda: 1e-5,
            rng_seed: 42,
            min_user_interactions: 10,
            min_app_interactions: 10,
        }
    }
}

impl EngineConfig {
    /// Checks every field against its admissible range.
    pub fn validate(&self) -> Result<()> {
        fn fail(msg: &str) -> Result<()> {
            Err(Error::InvalidConfig(msg.to_string()))
        }
        if self.topic_count == 0 {
            return fail("topic_count must be positive");
        }
        if !(self.cts > 0.0 && self.cts < 1.0) {
            return fail("cts must lie strictly between 0 and 1");
        }
        if !(self.us > 0.0 && self.us < 1.0) {
            return fail("us must lie strictly between 0 and 1");
        }
        if self.embed_dim == 0 {
            return fail("embed_dim must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be a positive finite number");
        }
        if self.epochs == 0 {
            return fail("epochs must be positive");
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return fail("margin must be a positive finite number");
        }
        if self.negatives_per_positive == 0 {
            return fail("negatives_per_positive must be positive");
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return fail("l2_lambda must be a non-negative finite number");
        }
        if self.min_user_interactions == 0 || self.min_app_interactions == 0 {
            return fail("cold-start thresholds must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        EngineConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_out_of_range_thresholds() {
        for bad in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            let cfg = EngineConfig {
                cts: bad,
                ..EngineConfig::default()
            };
            assert!(cfg.validate().is_err(), "cts={bad} accepted");
            let cfg = EngineConfig {
                us: bad,
                ..EngineConfig::default()
            };
            assert!(cfg.validate().is_err(), "us={bad} accepted");
        }
    }

    #[test]
    fn rejects_zero_dim_and_counts() {
        let cases: &[fn(&mut EngineConfig)] = &[
            |c| c.topic_count = 0,
            |c| c.embed_dim = 0,
            |c| c.epochs = 0,
            |c| c.negatives_per_positive = 0,
            |c| c.min_user_interactions = 0,
            |c| c.min_app_interactions = 0,
            |c| c.learning_rate = 0.0,
            |c| c.margin = -1.0,
            |c| c.l2_lambda = -1e-9,
        ];
        for mutate in cases {
            let mut cfg = EngineConfig::default();
            mutate(&mut cfg);
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn zero_propagation_layers_is_legal() {
        let cfg = EngineConfig {
            propagation_layers: 0,
            ..EngineConfig::default()
        };
        cfg.validate().unwrap();
    }

    #[test]
    fn json_round_trip() {
        let cfg = EngineConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: EngineConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
