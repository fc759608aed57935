//! Evaluation harness: interaction splitting, top-K metrics, baselines,
//! reports, and the synthetic dataset generator.

use std::collections::HashSet;
use std::hash::Hash;
use std::io::Write;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{AppRecord, RatingMatrix, RatingRecord, SizeSpec, RATING_GRADES};
use crate::error::{Error, Result};
use crate::vecmath::Matrix;

/// Per-user train/validation/test partition of interacted apps.
///
/// Partitions hold app indices into the matrix the split was made from,
/// sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionSplit {
    pub train: Vec<Vec<u32>>,
    pub validation: Vec<Vec<u32>>,
    pub test: Vec<Vec<u32>>,
    pub seed: u64,
}

impl InteractionSplit {
    /// Restriction of `matrix` to the training entries. This is the only
    /// way to obtain a [`TrainMatrix`], which is what the KG builder and
    /// model-training stages accept — test and validation interactions
    /// cannot reach them.
    pub fn train_matrix(&self, matrix: &RatingMatrix) -> TrainMatrix {
        TrainMatrix {
            inner: matrix.restricted(&self.train),
        }
    }

    /// Degenerate split placing every interaction in train; for fixtures
    /// and non-evaluation uses.
    pub fn all_train(matrix: &RatingMatrix) -> InteractionSplit {
        let train: Vec<Vec<u32>> = (0..matrix.users().len())
            .map(|u| matrix.row(u).iter().map(|&(a, _)| a).collect())
            .collect();
        let empty = vec![Vec::new(); matrix.users().len()];
        InteractionSplit {
            train,
            validation: empty.clone(),
            test: empty,
            seed: 0,
        }
    }
}

/// A rating matrix restricted to training interactions; see
/// [`InteractionSplit::train_matrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainMatrix {
    inner: RatingMatrix,
}

impl TrainMatrix {
    pub fn matrix(&self) -> &RatingMatrix {
        &self.inner
    }
}

/// Randomized per-user 70/10/20 split: n_train = round(0.7·n),
/// n_val = round(0.1·n), n_test = the remainder. Deterministic in `seed`.
pub fn split_interactions(matrix: &RatingMatrix, seed: u64) -> Result<InteractionSplit> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(matrix.users().len());
    let mut validation = Vec::with_capacity(matrix.users().len());
    let mut test = Vec::with_capacity(matrix.users().len());
    for (ui, user) in matrix.users().iter().enumerate() {
        let mut apps: Vec<u32> = matrix.row(ui).iter().map(|&(a, _)| a).collect();
        let n = apps.len();
        if n < 3 {
            return Err(Error::TooFewInteractions {
                user: user.clone(),
                count: n,
                min: 3,
            });
        }
        apps.shuffle(&mut rng);
        let n_train = (0.7 * n as f64).round() as usize;
        let n_val = (0.1 * n as f64).round() as usize;
        debug_assert!(n_train >= 1 && n_train + n_val <= n);

        let take = |count: usize, from: &mut std::vec::Drain<'_, u32>| {
            let mut part: Vec<u32> = from.by_ref().take(count).collect();
            part.sort_unstable();
            part
        };
        let mut drain = apps.drain(..);
        train.push(take(n_train, &mut drain));
        validation.push(take(n_val, &mut drain));
        test.push(take(usize::MAX, &mut drain));
    }
    Ok(InteractionSplit {
        train,
        validation,
        test,
        seed,
    })
}

fn check_ranked<T: Eq + Hash + Copy>(ranked: &[T], relevant: &HashSet<T>, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::ZeroCutoff);
    }
    if relevant.is_empty() {
        return Err(Error::EmptyRelevantSet);
    }
    let mut seen = HashSet::with_capacity(ranked.len());
    if !ranked.iter().all(|&item| seen.insert(item)) {
        return Err(Error::InvalidParameter(
            "ranked list contains duplicates".to_string(),
        ));
    }
    Ok(())
}

/// Precision@K and Recall@K of a ranked list against a relevant set.
pub fn precision_recall_at_k<T: Eq + Hash + Copy>(
    ranked: &[T],
    relevant: &HashSet<T>,
    k: usize,
) -> Result<(f64, f64)> {
    check_ranked(ranked, relevant, k)?;
    let hits = ranked
        .iter()
        .take(k)
        .filter(|item| relevant.contains(item))
        .count();
    Ok((
        hits as f64 / k as f64,
        hits as f64 / relevant.len() as f64,
    ))
}

/// Average precision at K with denominator min(K, |relevant|).
pub fn ap_at_k<T: Eq + Hash + Copy>(ranked: &[T], relevant: &HashSet<T>, k: usize) -> Result<f64> {
    check_ranked(ranked, relevant, k)?;
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, item) in ranked.iter().take(k).enumerate() {
        if relevant.contains(item) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / k.min(relevant.len()) as f64)
}

/// A fitted model the harness can rank with. `rank` returns app indices
/// (into the evaluation matrix's app list), best first, with `exclude`
/// filtered out, of length ≤ n.
pub trait TopKRecommender: Sync {
    fn name(&self) -> &str;
    fn rank(&self, user: usize, exclude: &HashSet<u32>, n: usize) -> Vec<u32>;
}

/// Sorts app indices by (score descending, index ascending), dropping
/// excluded ones; the shared ranking rule of every model here.
pub fn rank_by_score(scores: &[f64], exclude: &HashSet<u32>, n: usize) -> Vec<u32> {
    let mut order: Vec<u32> = (0..scores.len() as u32)
        .filter(|a| !exclude.contains(a))
        .collect();
    order.sort_by(|&a, &b| {
        scores[b as usize]
            .total_cmp(&scores[a as usize])
            .then(a.cmp(&b))
    });
    order.truncate(n);
    order
}

/// Training-interaction-count baseline.
pub struct PopularityRecommender {
    counts: Vec<f64>,
}

impl PopularityRecommender {
    pub fn fit(train: &TrainMatrix) -> PopularityRecommender {
        let m = train.matrix();
        let mut counts = vec![0.0; m.apps().len()];
        for u in 0..m.users().len() {
            for &(a, _) in m.row(u) {
                counts[a as usize] += 1.0;
            }
        }
        PopularityRecommender { counts }
    }
}

impl TopKRecommender for PopularityRecommender {
    fn name(&self) -> &str {
        "popularity"
    }

    fn rank(&self, _user: usize, exclude: &HashSet<u32>, n: usize) -> Vec<u32> {
        rank_by_score(&self.counts, exclude, n)
    }
}

/// Classic user-based collaborative filtering over the training Tanimoto
/// similarity matrix.
pub struct UserCfRecommender {
    sim: Matrix<f64>,
    rows: Vec<Vec<(u32, f64)>>,
    app_count: usize,
    /// Top-N neighborhood cut; `None` uses all users.
    neighbors: Option<usize>,
}

impl UserCfRecommender {
    pub fn fit(train: &TrainMatrix, sim: Matrix<f64>, neighbors: Option<usize>) -> UserCfRecommender {
        let m = train.matrix();
        UserCfRecommender {
            sim,
            rows: (0..m.users().len()).map(|u| m.row(u).to_vec()).collect(),
            app_count: m.apps().len(),
            neighbors,
        }
    }

    fn scores(&self, user: usize) -> Vec<f64> {
        let sim_row = self.sim.row(user);
        let mut neighbor_ids: Vec<usize> = (0..self.rows.len()).filter(|&j| j != user).collect();
        if let Some(cut) = self.neighbors {
            neighbor_ids.sort_by(|&a, &b| {
                sim_row[b].total_cmp(&sim_row[a]).then(a.cmp(&b))
            });
            neighbor_ids.truncate(cut);
        }
        let mut scores = vec![0.0; self.app_count];
        for j in neighbor_ids {
            let s = sim_row[j];
            if s == 0.0 {
                continue;
            }
            for &(a, grade) in &self.rows[j] {
                scores[a as usize] += s * grade;
            }
        }
        scores
    }
}

impl TopKRecommender for UserCfRecommender {
    fn name(&self) -> &str {
        "usercf"
    }

    fn rank(&self, user: usize, exclude: &HashSet<u32>, n: usize) -> Vec<u32> {
        rank_by_score(&self.scores(user), exclude, n)
    }
}

/// Spec-shaped convenience wrapper: top-K (app index, score) pairs for one
/// user under the popularity baseline, training positives excluded.
pub fn popularity_recommend(train: &TrainMatrix, user: usize, k: usize) -> Vec<(u32, f64)> {
    let model = PopularityRecommender::fit(train);
    let exclude: HashSet<u32> = train.matrix().row(user).iter().map(|&(a, _)| a).collect();
    rank_by_score(&model.counts, &exclude, k)
        .into_iter()
        .map(|a| (a, model.counts[a as usize]))
        .collect()
}

/// Same for UserCF given the user-user similarity matrix.
pub fn usercf_recommend(
    train: &TrainMatrix,
    sim: &Matrix<f64>,
    user: usize,
    k: usize,
) -> Vec<(u32, f64)> {
    let model = UserCfRecommender::fit(train, sim.clone(), None);
    let exclude: HashSet<u32> = train.matrix().row(user).iter().map(|&(a, _)| a).collect();
    let scores = model.scores(user);
    rank_by_score(&scores, &exclude, k)
        .into_iter()
        .map(|a| (a, scores[a as usize]))
        .collect()
}

/// One model × K row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
    pub map: f64,
}

/// The model × K comparison table.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<ReportRow>,
}

impl MetricReport {
    pub fn row(&self, model: &str, k: usize) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.model == model && r.k == k)
    }

    /// TSV with 6-decimal values.
    pub fn write_tsv(&self, out: &mut dyn Write) -> Result<()> {
        writeln!(out, "model\tK\tprecision\trecall\tmap")?;
        for r in &self.rows {
            writeln!(
                out,
                "{}\t{}\t{:.6}\t{:.6}\t{:.6}",
                r.model, r.k, r.precision, r.recall, r.map
            )?;
        }
        Ok(())
    }
}

/// Default report cutoffs.
pub const DEFAULT_KS: [usize; 4] = [10, 20, 30, 40];

/// Evaluates models on the test partitions: each user's candidates are all
/// matrix apps minus that user's training positives (validation items stay
/// in as distractors); users with empty test sets are skipped. Averages are
/// accumulated in user order, so results are independent of thread count.
pub fn evaluate(
    models: &[&dyn TopKRecommender],
    matrix: &RatingMatrix,
    split: &InteractionSplit,
    ks: &[usize],
) -> Result<MetricReport> {
    if ks.is_empty() || ks.iter().any(|&k| k == 0) {
        return Err(Error::ZeroCutoff);
    }
    let max_k = ks.iter().copied().max().expect("nonempty ks");
    let users = matrix.users().len();

    let mut report = MetricReport::default();
    for model in models {
        // (per-k (precision, recall, ap)) per evaluated user, user-ordered.
        let per_user: Vec<Option<Vec<(f64, f64, f64)>>> = (0..users)
            .into_par_iter()
            .map(|u| {
                let relevant: HashSet<u32> = split.test[u].iter().copied().collect();
                if relevant.is_empty() {
                    return Ok(None);
                }
                let exclude: HashSet<u32> = split.train[u].iter().copied().collect();
                let ranked = model.rank(u, &exclude, max_k);
                let mut per_k = Vec::with_capacity(ks.len());
                for &k in ks {
                    let (p, r) = precision_recall_at_k(&ranked, &relevant, k)?;
                    let ap = ap_at_k(&ranked, &relevant, k)?;
                    per_k.push((p, r, ap));
                }
                Ok(Some(per_k))
            })
            .collect::<Result<_>>()?;

        let evaluated: Vec<&Vec<(f64, f64, f64)>> = per_user.iter().flatten().collect();
        if evaluated.is_empty() {
            return Err(Error::InvalidParameter(
                "no user has a nonempty test set".to_string(),
            ));
        }
        let denom = evaluated.len() as f64;
        for (ki, &k) in ks.iter().enumerate() {
            let (mut p, mut r, mut ap) = (0.0, 0.0, 0.0);
            for per_k in &evaluated {
                p += per_k[ki].0;
                r += per_k[ki].1;
                ap += per_k[ki].2;
            }
            report.rows.push(ReportRow {
                model: model.name().to_string(),
                k,
                precision: p / denom,
                recall: r / denom,
                map: ap / denom,
            });
        }
    }
    Ok(report)
}

/// Shape of the synthetic clustered dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub clusters: usize,
    pub users_per_cluster: usize,
    pub apps_per_cluster: usize,
    /// Probability a user interacts with an app of their own cluster.
    pub p_in: f64,
    /// Probability for an app of another cluster; must be < p_in.
    pub p_out: f64,
    /// Distinct readme words per cluster.
    pub vocab_per_cluster: usize,
    /// Words per generated readme.
    pub readme_words: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            clusters: 2,
            users_per_cluster: 100,
            apps_per_cluster: 50,
            p_in: 0.3,
            p_out: 0.02,
            vocab_per_cluster: 30,
            readme_words: 60,
        }
    }
}

/// Generates a planted-cluster dataset: users favor apps of their own
/// cluster, cluster apps share a category, a provider pool, and a readme
/// vocabulary. Deterministic in `seed`.
pub fn generate_synthetic(
    config: &GeneratorConfig,
    seed: u64,
) -> Result<(Vec<AppRecord>, Vec<RatingRecord>)> {
    if config.clusters == 0 || config.users_per_cluster == 0 || config.apps_per_cluster == 0 {
        return Err(Error::InvalidParameter(
            "generator needs at least one cluster, user, and app".to_string(),
        ));
    }
    if config.vocab_per_cluster == 0 {
        return Err(Error::InvalidParameter(
            "vocab_per_cluster must be positive".to_string(),
        ));
    }
    if !(config.p_in > 0.0 && config.p_in <= 1.0) || !(0.0..1.0).contains(&config.p_out) {
        return Err(Error::InvalidParameter(
            "interaction probabilities must satisfy 0 ≤ p_out < p_in ≤ 1".to_string(),
        ));
    }
    if config.p_out >= config.p_in {
        return Err(Error::InvalidParameter(format!(
            "p_out {} must be strictly below p_in {}",
            config.p_out, config.p_in
        )));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    const ELEMENTS: [&str; 3] = ["Users Interact", "Digital Purchases", "Shares Location"];
    const RESTRICTIONS: [&str; 3] = ["Everyone", "Teen", "Mature"];

    let mut apps = Vec::with_capacity(config.clusters * config.apps_per_cluster);
    for c in 0..config.clusters {
        for i in 0..config.apps_per_cluster {
            let mut interactive_elements: Vec<String> = ELEMENTS
                .iter()
                .filter(|_| rng.random::<f64>() < 0.4)
                .map(|&e| e.to_string())
                .collect();
            interactive_elements.sort();
            let readme: Vec<String> = (0..config.readme_words)
                .map(|_| format!("w{c}x{}", rng.random_range(0..config.vocab_per_cluster)))
                .collect();
            let size = if rng.random::<f64>() < 0.1 {
                SizeSpec::Varies
            } else {
                SizeSpec::Bytes(rng.random_range((1 << 19)..(1u64 << 29)))
            };
            let year = 2018 + rng.random_range(0..4);
            let month = rng.random_range(1..=12);
            apps.push(AppRecord {
                app_id: format!("c{c}a{i:03}"),
                category: format!("category{c}"),
                provider: format!("provider{c}p{}", rng.random_range(0..5)),
                content_rating: RESTRICTIONS[rng.random_range(0..RESTRICTIONS.len())].to_string(),
                has_ads: rng.random::<f64>() < 0.5,
                is_free: rng.random::<f64>() < 0.7,
                interactive_elements,
                avg_rating: f64::from(rng.random_range(10..=50u32)) / 10.0,
                install_count: 10u64.pow(rng.random_range(2..8)) / rng.random_range(1..=9),
                updated_date: NaiveDate::from_ymd_opt(year, month, 15).expect("valid date"),
                size,
                readme_text: readme.join(" "),
            });
        }
    }

    let mut ratings = Vec::new();
    for c in 0..config.clusters {
        for i in 0..config.users_per_cluster {
            let user_id = format!("c{c}u{i:03}");
            for app in &apps {
                let same = app.app_id.starts_with(&format!("c{c}a"));
                let p = if same { config.p_in } else { config.p_out };
                if rng.random::<f64>() < p {
                    ratings.push(RatingRecord {
                        user_id: user_id.clone(),
                        app_id: app.app_id.clone(),
                        rating: RATING_GRADES[rng.random_range(0..RATING_GRADES.len())],
                    });
                }
            }
        }
    }
    Ok((apps, ratings))
}
