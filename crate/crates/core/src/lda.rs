//! Latent topic model fitted by collapsed Gibbs sampling.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::text::Corpus;
use crate::vecmath::Matrix;

/// Fitted topic model: topic-word distributions and per-document topic
/// proportions.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel<S> {
    /// K × V, row-stochastic.
    pub phi: Matrix<S>,
    /// D × K, row-stochastic; empty documents get the uniform row.
    pub theta: Matrix<S>,
}

impl<S: Scalar> TopicModel<S> {
    pub fn topic_count(&self) -> usize {
        self.phi.rows()
    }

    pub fn vocab_size(&self) -> usize {
        self.phi.cols()
    }

    pub fn doc_count(&self) -> usize {
        self.theta.rows()
    }

    /// Checks that every Φ row and θ row is a probability vector
    /// (entries ≥ 0, sum within 1e-9 of 1).
    pub fn validate(&self) -> Result<()> {
        let tol = S::lit(1e-9);
        for (name, m) in [("phi", &self.phi), ("theta", &self.theta)] {
            for i in 0..m.rows() {
                let row = m.row(i);
                if row.iter().any(|&x| x < S::zero()) {
                    return Err(Error::InvalidParameter(format!(
                        "{name} row {i} has a negative entry"
                    )));
                }
                let sum: S = row.iter().copied().sum();
                if (sum - S::one()).abs() > tol {
                    return Err(Error::InvalidParameter(format!(
                        "{name} row {i} sums to {sum}, not 1"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Writes `phi.tsv` (K × V, 12 significant digits), `theta.tsv`
    /// (D × K), and `vocab.txt` (one term per line) into `dir`.
    pub fn save(&self, dir: &Path, vocab: &[String]) -> Result<()> {
        if vocab.len() != self.vocab_size() {
            return Err(Error::LengthMismatch {
                left: vocab.len(),
                right: self.vocab_size(),
            });
        }
        for (file, m) in [("phi.tsv", &self.phi), ("theta.tsv", &self.theta)] {
            let mut out = BufWriter::new(std::fs::File::create(dir.join(file))?);
            for i in 0..m.rows() {
                for (j, x) in m.row(i).iter().enumerate() {
                    if j > 0 {
                        write!(out, "\t")?;
                    }
                    write!(out, "{:.11e}", x.to_f64_value())?;
                }
                writeln!(out)?;
            }
            out.flush()?;
        }
        let mut out = BufWriter::new(std::fs::File::create(dir.join("vocab.txt"))?);
        for term in vocab {
            writeln!(out, "{term}")?;
        }
        out.flush()?;
        Ok(())
    }

    /// Rebuilds a model and its vocabulary from the three files in `dir`.
    pub fn load(dir: &Path) -> Result<(TopicModel<S>, Vec<String>)> {
        let read_matrix = |file: &str| -> Result<Matrix<S>> {
            let path = dir.join(file);
            let mut rows: Vec<Vec<S>> = Vec::new();
            for (lineno, line) in BufReader::new(std::fs::File::open(&path)?).lines().enumerate() {
                let line = line?;
                let row: Vec<S> = line
                    .split('\t')
                    .map(|cell| {
                        cell.parse::<f64>()
                            .ok()
                            .filter(|x| x.is_finite() && *x >= 0.0)
                            .map(S::lit)
                            .ok_or_else(|| Error::MalformedFile {
                                file: path.display().to_string(),
                                message: format!(
                                    "line {}: `{cell}` is not a probability",
                                    lineno + 1
                                ),
                            })
                    })
                    .collect::<Result<_>>()?;
                rows.push(row);
            }
            Matrix::from_rows(&rows)
        };
        let phi = read_matrix("phi.tsv")?;
        let theta = read_matrix("theta.tsv")?;

        let path = dir.join("vocab.txt");
        let mut vocab = Vec::new();
        for line in BufReader::new(std::fs::File::open(&path)?).lines() {
            vocab.push(line?);
        }

        if theta.cols() != phi.rows() || vocab.len() != phi.cols() {
            return Err(Error::MalformedFile {
                file: dir.display().to_string(),
                message: format!(
                    "inconsistent shapes: phi {}×{}, theta {}×{}, vocab {}",
                    phi.rows(),
                    phi.cols(),
                    theta.rows(),
                    theta.cols(),
                    vocab.len()
                ),
            });
        }
        Ok((TopicModel { phi, theta }, vocab))
    }
}

/// Fits a K-topic model with `iterations` full Gibbs sweeps, reading Φ and θ
/// off the smoothed count tables afterwards. Deterministic in `seed`.
pub fn fit_lda<S: Scalar>(
    corpus: &Corpus,
    k_topics: usize,
    alpha: f64,
    beta: f64,
    iterations: usize,
    seed: u64,
) -> Result<TopicModel<S>> {
    if k_topics < 2 {
        return Err(Error::InvalidParameter(format!(
            "topic count must be at least 2, got {k_topics}"
        )));
    }
    if !(alpha > 0.0) || !(beta > 0.0) {
        return Err(Error::InvalidParameter(
            "alpha and beta must be positive".to_string(),
        ));
    }
    let v = corpus.vocab_size();
    if corpus.token_count() == 0 {
        return Err(Error::EmptyCorpus);
    }
    if k_topics > v {
        return Err(Error::TooManyTopics { k: k_topics, v });
    }

    let d = corpus.len();
    let k = k_topics;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    // Count tables: n_dk (doc × topic), n_kw (topic × word), n_k (topic).
    let mut n_dk = vec![0u32; d * k];
    let mut n_kw = vec![0u32; k * v];
    let mut n_k = vec![0u32; k];
    let mut assignments: Vec<Vec<u32>> = Vec::with_capacity(d);
    for (di, doc) in corpus.documents.iter().enumerate() {
        let mut z_doc = Vec::with_capacity(doc.len());
        for &w in doc {
            let z = rng.random_range(0..k);
            n_dk[di * k + z] += 1;
            n_kw[z * v + w as usize] += 1;
            n_k[z] += 1;
            z_doc.push(z as u32);
        }
        assignments.push(z_doc);
    }

    let v_beta = beta * v as f64;
    let mut probs = vec![0.0f64; k];
    for _sweep in 0..iterations {
        for (di, doc) in corpus.documents.iter().enumerate() {
            for (ti, &w) in doc.iter().enumerate() {
                let w = w as usize;
                let old = assignments[di][ti] as usize;
                n_dk[di * k + old] -= 1;
                n_kw[old * v + w] -= 1;
                n_k[old] -= 1;

                let mut total = 0.0;
                for (z, p) in probs.iter_mut().enumerate() {
                    *p = (f64::from(n_dk[di * k + z]) + alpha)
                        * (f64::from(n_kw[z * v + w]) + beta)
                        / (f64::from(n_k[z]) + v_beta);
                    total += *p;
                }
                let draw: f64 = rng.random::<f64>() * total;
                let mut acc = 0.0;
                let mut new = k - 1;
                for (z, &p) in probs.iter().enumerate() {
                    acc += p;
                    if draw < acc {
                        new = z;
                        break;
                    }
                }

                assignments[di][ti] = new as u32;
                n_dk[di * k + new] += 1;
                n_kw[new * v + w] += 1;
                n_k[new] += 1;
            }
        }
    }

    let mut phi = Matrix::zeros(k, v);
    for z in 0..k {
        let denom = f64::from(n_k[z]) + v_beta;
        let row = phi.row_mut(z);
        for (w, slot) in row.iter_mut().enumerate() {
            *slot = S::lit((f64::from(n_kw[z * v + w]) + beta) / denom);
        }
    }
    let k_alpha = alpha * k as f64;
    let mut theta = Matrix::zeros(d, k);
    for (di, doc) in corpus.documents.iter().enumerate() {
        let denom = doc.len() as f64 + k_alpha;
        let row = theta.row_mut(di);
        for (z, slot) in row.iter_mut().enumerate() {
            *slot = S::lit((f64::from(n_dk[di * k + z]) + alpha) / denom);
        }
    }

    let model = TopicModel { phi, theta };
    model.validate()?;
    Ok(model)
}

/// Argmax topic per document; ties broken by the smallest topic index.
pub fn assign_topics<S: Scalar>(model: &TopicModel<S>) -> Vec<usize> {
    (0..model.theta.rows())
        .map(|d| argmax(model.theta.row(d)))
        .collect()
}

fn argmax<S: Scalar>(row: &[S]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate().skip(1) {
        if x > row[best] {
            best = i;
        }
    }
    best
}
