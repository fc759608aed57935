//! TransD embeddings of the ARKG: every entity and relation carries a
//! meaning vector and a projection vector, heads and tails are projected
//! into the relation space through rank-one mapping matrices, and training
//! maximizes the margin between golden and corrupted triples.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::binio;
use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, RelationKind, Triple};
use crate::scalar::Scalar;
use crate::vecmath::{dot, normalize, Matrix};

const MAGIC: &[u8; 4] = b"TDEK";
const VERSION: u32 = 1;

/// Learned TransD tensors. Relation rows are indexed by the fixed relation
/// ids, entity rows by ARKG entity ids; all four tensors share one
/// dimension d (the m = n = d convention).
#[derive(Debug, Clone, PartialEq)]
pub struct TransDParams<S> {
    pub entity_vec: Matrix<S>,
    pub entity_proj: Matrix<S>,
    pub relation_vec: Matrix<S>,
    pub relation_proj: Matrix<S>,
}

impl<S: Scalar> TransDParams<S> {
    pub fn zeros(entity_count: usize, dim: usize) -> TransDParams<S> {
        TransDParams {
            entity_vec: Matrix::zeros(entity_count, dim),
            entity_proj: Matrix::zeros(entity_count, dim),
            relation_vec: Matrix::zeros(RelationKind::COUNT, dim),
            relation_proj: Matrix::zeros(RelationKind::COUNT, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.entity_vec.cols()
    }

    pub fn entity_count(&self) -> usize {
        self.entity_vec.rows()
    }

    /// h⊥ (or t⊥) of one entity under one relation.
    pub fn project_entity(&self, entity: u32, relation: RelationKind) -> Vec<S> {
        let e = self.entity_vec.row(entity as usize);
        let e_p = self.entity_proj.row(entity as usize);
        let r_p = self.relation_proj.row(relation.id() as usize);
        project_unchecked(e, e_p, r_p)
    }

    /// g(h, r, t) = −‖h⊥ + r − t⊥‖²; higher is more plausible, 0 is the cap.
    pub fn energy(&self, triple: Triple) -> S {
        let delta = self.delta(triple);
        -dot(&delta, &delta)
    }

    /// h⊥ + r − t⊥, the residual the energy squares.
    fn delta(&self, triple: Triple) -> Vec<S> {
        let r = self.relation_vec.row(triple.relation.id() as usize);
        let mut delta = self.project_entity(triple.head, triple.relation);
        let t_perp = self.project_entity(triple.tail, triple.relation);
        for i in 0..delta.len() {
            delta[i] = delta[i] + r[i] - t_perp[i];
        }
        delta
    }

    pub fn all_finite(&self) -> bool {
        [
            &self.entity_vec,
            &self.entity_proj,
            &self.relation_vec,
            &self.relation_proj,
        ]
        .iter()
        .all(|m| m.data().iter().all(|x| x.is_finite()))
    }

    /// Binary checkpoint: magic, version, |E|, |R|, d, then the four
    /// tensors row-major as little-endian f64.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        binio::write_u32(&mut w, VERSION)?;
        binio::write_u64(&mut w, self.entity_count() as u64)?;
        binio::write_u64(&mut w, RelationKind::COUNT as u64)?;
        binio::write_u64(&mut w, self.dim() as u64)?;
        binio::write_matrix(&mut w, &self.entity_vec)?;
        binio::write_matrix(&mut w, &self.entity_proj)?;
        binio::write_matrix(&mut w, &self.relation_vec)?;
        binio::write_matrix(&mut w, &self.relation_proj)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TransDParams<S>> {
        let bad = |message: String| Error::BadCheckpoint {
            file: path.display().to_string(),
            message,
        };
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        std::io::Read::read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(bad(format!("bad magic {magic:?}, want {MAGIC:?}")));
        }
        let version = binio::read_u32(&mut r)?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let entities = binio::read_u64(&mut r)? as usize;
        let relations = binio::read_u64(&mut r)? as usize;
        if relations != RelationKind::COUNT {
            return Err(bad(format!(
                "checkpoint has {relations} relations, engine defines {}",
                RelationKind::COUNT
            )));
        }
        let dim = binio::read_u64(&mut r)? as usize;
        if dim == 0 || entities == 0 {
            return Err(bad("empty tensor dimensions".to_string()));
        }
        let params = TransDParams {
            entity_vec: binio::read_matrix(&mut r, entities, dim)?,
            entity_proj: binio::read_matrix(&mut r, entities, dim)?,
            relation_vec: binio::read_matrix(&mut r, relations, dim)?,
            relation_proj: binio::read_matrix(&mut r, relations, dim)?,
        };
        if !params.all_finite() {
            return Err(bad("non-finite tensor entry".to_string()));
        }
        Ok(params)
    }
}

/// M·e for M = r_p e_pᵀ + I, in vector form: e + r_p (e_p·e). The d×d
/// matrix is never formed.
pub fn project<S: Scalar>(entity_vec: &[S], entity_proj: &[S], relation_proj: &[S]) -> Result<Vec<S>> {
    if entity_vec.len() != entity_proj.len() || entity_vec.len() != relation_proj.len() {
        return Err(Error::DimensionMismatch {
            expected: entity_vec.len(),
            got: entity_proj.len().max(relation_proj.len()),
        });
    }
    Ok(project_unchecked(entity_vec, entity_proj, relation_proj))
}

fn project_unchecked<S: Scalar>(e: &[S], e_p: &[S], r_p: &[S]) -> Vec<S> {
    let scale = dot(e_p, e);
    e.iter().zip(r_p).map(|(&ei, &pi)| ei + pi * scale).collect()
}

/// Energy from raw vectors; see [`TransDParams::energy`] for the
/// row-indexed form.
pub fn energy<S: Scalar>(h: &[S], h_p: &[S], t: &[S], t_p: &[S], r: &[S], r_p: &[S]) -> Result<S> {
    let h_perp = project(h, h_p, r_p)?;
    let t_perp = project(t, t_p, r_p)?;
    if r.len() != h_perp.len() {
        return Err(Error::DimensionMismatch {
            expected: h_perp.len(),
            got: r.len(),
        });
    }
    let mut sq = S::zero();
    for i in 0..r.len() {
        let d = h_perp[i] + r[i] - t_perp[i];
        sq += d * d;
    }
    Ok(-sq)
}

/// Σ max(0, γ + g(corrupted) − g(golden)) over aligned pairs.
pub fn margin_loss<S: Scalar>(
    params: &TransDParams<S>,
    golden: &[Triple],
    corrupted: &[Triple],
    margin: S,
) -> Result<S> {
    if golden.len() != corrupted.len() {
        return Err(Error::LengthMismatch {
            left: golden.len(),
            right: corrupted.len(),
        });
    }
    Ok(golden
        .iter()
        .zip(corrupted)
        .map(|(&g, &c)| (margin + params.energy(c) - params.energy(g)).max(S::zero()))
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Tensor {
    EntityVec,
    EntityProj,
    RelationVec,
    RelationProj,
}

/// Sparse gradient accumulator keyed by (tensor, row); BTreeMap so the
/// application order is stable.
struct GradBatch<S> {
    dim: usize,
    rows: BTreeMap<(Tensor, u32), Vec<S>>,
}

impl<S: Scalar> GradBatch<S> {
    fn new(dim: usize) -> Self {
        GradBatch {
            dim,
            rows: BTreeMap::new(),
        }
    }

    fn add(&mut self, tensor: Tensor, row: u32, scale: S, vec: &[S]) {
        let acc = self
            .rows
            .entry((tensor, row))
            .or_insert_with(|| vec![S::zero(); self.dim]);
        for (a, &v) in acc.iter_mut().zip(vec) {
            *a += scale * v;
        }
    }

    fn apply(self, params: &mut TransDParams<S>, learning_rate: S) {
        for ((tensor, row), grad) in self.rows {
            let m = match tensor {
                Tensor::EntityVec => &mut params.entity_vec,
                Tensor::EntityProj => &mut params.entity_proj,
                Tensor::RelationVec => &mut params.relation_vec,
                Tensor::RelationProj => &mut params.relation_proj,
            };
            m.sub_scaled_row(row as usize, learning_rate, &grad);
        }
    }

    fn into_dense(self, entity_count: usize) -> TransDParams<S> {
        let mut out = TransDParams::zeros(entity_count, self.dim);
        for ((tensor, row), grad) in self.rows {
            let m = match tensor {
                Tensor::EntityVec => &mut out.entity_vec,
                Tensor::EntityProj => &mut out.entity_proj,
                Tensor::RelationVec => &mut out.relation_vec,
                Tensor::RelationProj => &mut out.relation_proj,
            };
            for (dst, &x) in m.row_mut(row as usize).iter_mut().zip(&grad) {
                *dst += x;
            }
        }
        out
    }
}

/// Loss of [`margin_loss`] together with its gradient, dense in parameter
/// shape; inactive hinges contribute nothing to either. Meant for external
/// optimizer integrations and gradient checking.
pub fn margin_loss_grads<S: Scalar>(
    params: &TransDParams<S>,
    golden: &[Triple],
    corrupted: &[Triple],
    margin: S,
) -> Result<(S, TransDParams<S>)> {
    if golden.len() != corrupted.len() {
        return Err(Error::LengthMismatch {
            left: golden.len(),
            right: corrupted.len(),
        });
    }
    let mut grads = GradBatch::new(params.dim());
    let mut loss = S::zero();
    for (&g, &c) in golden.iter().zip(corrupted) {
        let hinge = margin + params.energy(c) - params.energy(g);
        if hinge > S::zero() {
            loss += hinge;
            accumulate_energy_grad(params, c, S::one(), &mut grads);
            accumulate_energy_grad(params, g, -S::one(), &mut grads);
        }
    }
    Ok((loss, grads.into_dense(params.entity_count())))
}

/// ∂g/∂θ of one triple accumulated with `scale` (+1 for the corrupted
/// triple of an active hinge, −1 for the golden one).
fn accumulate_energy_grad<S: Scalar>(
    params: &TransDParams<S>,
    triple: Triple,
    scale: S,
    grads: &mut GradBatch<S>,
) {
    let d = params.dim();
    let h = params.entity_vec.row(triple.head as usize);
    let h_p = params.entity_proj.row(triple.head as usize);
    let t = params.entity_vec.row(triple.tail as usize);
    let t_p = params.entity_proj.row(triple.tail as usize);
    let rel = triple.relation.id();
    let r_p = params.relation_proj.row(rel as usize);
    let delta = params.delta(triple);

    let rp_delta = dot(r_p, &delta);
    let two = S::lit(2.0);

    // ∂g/∂h = −2(Δ + h_p(r_p·Δ));  ∂g/∂t = +2(Δ + t_p(r_p·Δ)).
    let mut g_h = vec![S::zero(); d];
    let mut g_t = vec![S::zero(); d];
    for i in 0..d {
        g_h[i] = -two * (delta[i] + h_p[i] * rp_delta);
        g_t[i] = two * (delta[i] + t_p[i] * rp_delta);
    }
    grads.add(Tensor::EntityVec, triple.head, scale, &g_h);
    grads.add(Tensor::EntityVec, triple.tail, scale, &g_t);

    // ∂g/∂h_p = −2(r_p·Δ)h;  ∂g/∂t_p = +2(r_p·Δ)t.
    let mut g_hp = vec![S::zero(); d];
    let mut g_tp = vec![S::zero(); d];
    for i in 0..d {
        g_hp[i] = -two * rp_delta * h[i];
        g_tp[i] = two * rp_delta * t[i];
    }
    grads.add(Tensor::EntityProj, triple.head, scale, &g_hp);
    grads.add(Tensor::EntityProj, triple.tail, scale, &g_tp);

    // ∂g/∂r = −2Δ;  ∂g/∂r_p = −2((h_p·h) − (t_p·t))Δ.
    let s = dot(h_p, h) - dot(t_p, t);
    let mut g_r = vec![S::zero(); d];
    let mut g_rp = vec![S::zero(); d];
    for i in 0..d {
        g_r[i] = -two * delta[i];
        g_rp[i] = -two * s * delta[i];
    }
    grads.add(Tensor::RelationVec, rel, scale, &g_r);
    grads.add(Tensor::RelationProj, rel, scale, &g_rp);
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransdTrainOptions {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub margin: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl TransdTrainOptions {
    pub fn from_config(config: &EngineConfig) -> TransdTrainOptions {
        TransdTrainOptions {
            dim: config.embed_dim,
            epochs: config.epochs,
            learning_rate: config.learning_rate,
            margin: config.margin,
            batch_size: 1024,
            seed: config.rng_seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter(
                "embedding dimension and batch size must be positive".to_string(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.margin >= 0.0) {
            return Err(Error::InvalidParameter(
                "learning rate must be positive and margin non-negative".to_string(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TransdTrainResult<S> {
    pub params: TransDParams<S>,
    /// Summed hinge loss per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Draws a corruption of `golden` that keeps the replaced slot's entity
/// kind, is not itself golden, and is not a self-loop. Returns None when
/// the graph admits no such triple.
fn corrupt(kg: &KnowledgeGraph, golden: Triple, rng: &mut ChaCha20Rng) -> Option<Triple> {
    let (head_kind, tail_kind) = golden.relation.signature();
    let replace_head = rng.random_range(0..2u8) == 0;
    let pool = kg.entities_of_kind(if replace_head { head_kind } else { tail_kind });
    let build = |candidate: u32| {
        if replace_head {
            Triple::new(candidate, golden.relation, golden.tail)
        } else {
            Triple::new(golden.head, golden.relation, candidate)
        }
    };
    let valid = |t: &Triple| *t != golden && t.head != t.tail && !kg.contains(t);

    for _ in 0..64 {
        let candidate = pool[rng.random_range(0..pool.len())];
        let t = build(candidate);
        if valid(&t) {
            return Some(t);
        }
    }
    // Rejection failed often enough that the pool is probably tiny or
    // saturated; fall back to a deterministic scan.
    pool.iter().map(|&c| build(c)).find(|t| valid(t))
}

/// Mini-batch SGD on the margin loss with kind-constrained corruption.
/// Each step applies the mean batch gradient, so the effective step size
/// does not grow with the batch. Deterministic in the seed.
pub fn train_transd<S: Scalar>(
    kg: &KnowledgeGraph,
    options: &TransdTrainOptions,
) -> Result<TransdTrainResult<S>> {
    options.validate()?;
    if kg.triple_count() == 0 {
        return Err(Error::InvalidParameter(
            "cannot train embeddings on an empty graph".to_string(),
        ));
    }
    let d = options.dim;
    let mut rng = ChaCha20Rng::seed_from_u64(options.seed);
    let bound = 6.0 / (d as f64).sqrt();
    let mut params = TransDParams::<S>::zeros(kg.entity_count(), d);
    for m in [
        &mut params.entity_vec,
        &mut params.entity_proj,
        &mut params.relation_vec,
        &mut params.relation_proj,
    ] {
        for x in m.data_mut() {
            *x = S::lit(rng.random_range(-bound..bound));
        }
    }
    for i in 0..params.entity_vec.rows() {
        normalize(params.entity_vec.row_mut(i));
    }

    let margin = S::lit(options.margin);
    let lr = S::lit(options.learning_rate);
    let mut order: Vec<usize> = (0..kg.triple_count()).collect();
    let mut epoch_losses = Vec::with_capacity(options.epochs);

    for epoch in 0..options.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(options.batch_size) {
            let mut grads = GradBatch::new(d);
            for &ti in chunk {
                let golden = kg.triples()[ti];
                let Some(corrupted) = corrupt(kg, golden, &mut rng) else {
                    continue;
                };
                let hinge = margin + params.energy(corrupted) - params.energy(golden);
                if hinge > S::zero() {
                    epoch_loss += hinge.to_f64_value();
                    accumulate_energy_grad(&params, corrupted, S::one(), &mut grads);
                    accumulate_energy_grad(&params, golden, -S::one(), &mut grads);
                }
            }
            grads.apply(&mut params, lr / S::lit(chunk.len() as f64));
        }
        for i in 0..params.entity_vec.rows() {
            normalize(params.entity_vec.row_mut(i));
        }
        if !epoch_loss.is_finite() || !params.all_finite() {
            return Err(Error::NonFinite {
                what: "margin loss",
                context: format!("epoch {epoch}"),
            });
        }
        log::info!("transd epoch {epoch}: hinge loss {epoch_loss:.6}");
        epoch_losses.push(epoch_loss);
    }
    Ok(TransdTrainResult {
        params,
        epoch_losses,
    })
}

/// Filtered tail-prediction hits@n over every triple: the true tail is
/// ranked by energy against every candidate tail the corruption protocol
/// could substitute — entities of the relation's tail kind, excluding the
/// head itself and candidates forming golden triples. Ties break toward
/// the lower entity id.
pub fn tail_hits_at<S: Scalar>(params: &TransDParams<S>, kg: &KnowledgeGraph, n: usize) -> f64 {
    if kg.triple_count() == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    for &triple in kg.triples() {
        let true_energy = params.energy(triple);
        let mut rank = 1usize;
        for &candidate in kg.entities_of_kind(triple.relation.signature().1) {
            if candidate == triple.tail || candidate == triple.head {
                continue;
            }
            let probe = Triple::new(triple.head, triple.relation, candidate);
            if kg.contains(&probe) {
                continue;
            }
            let e = params.energy(probe);
            if e > true_energy || (e == true_energy && candidate < triple.tail) {
                rank += 1;
            }
        }
        if rank <= n {
            hits += 1;
        }
    }
    hits as f64 / kg.triple_count() as f64
}
