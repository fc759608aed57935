//! User-personalized convolutional propagation over the ARKG.
//!
//! Each layer rebuilds every non-leaf entity from its tail neighborhood:
//! neighbors are weighted by a softmax over the query user's affinity to
//! their relations (an inner product with the relation weight vector),
//! aggregated, concatenated with the entity's own state, and passed
//! through a fully connected tanh layer. Entities without tail neighbors
//! keep their state. Layers update synchronously from the previous
//! layer's states, and the weight softmax depends only on the user's
//! layer-0 state, so it is shared across layers.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, RelationKind};
use crate::scalar::Scalar;
use crate::vecmath::{dot, softmax, Matrix};

/// One fully connected propagation layer: weight is d × 2d (the input is
/// the entity state concatenated with its aggregated neighborhood), bias
/// is d.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<S> {
    pub weight: Matrix<S>,
    pub bias: Vec<S>,
}

impl<S: Scalar> LayerParams<S> {
    pub fn zeros(dim: usize) -> LayerParams<S> {
        LayerParams {
            weight: Matrix::zeros(dim, 2 * dim),
            bias: vec![S::zero(); dim],
        }
    }
}

/// The stack of propagation layers; may be empty, in which case
/// propagation is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationParams<S> {
    pub dim: usize,
    pub layers: Vec<LayerParams<S>>,
}

impl<S: Scalar> PropagationParams<S> {
    pub fn identity(dim: usize) -> PropagationParams<S> {
        PropagationParams {
            dim,
            layers: Vec::new(),
        }
    }

    pub fn zeros(dim: usize, layer_count: usize) -> PropagationParams<S> {
        PropagationParams {
            dim,
            layers: (0..layer_count).map(|_| LayerParams::zeros(dim)).collect(),
        }
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn validate(&self) -> Result<()> {
        for layer in &self.layers {
            if layer.weight.rows() != self.dim
                || layer.weight.cols() != 2 * self.dim
                || layer.bias.len() != self.dim
            {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    got: layer.weight.rows(),
                });
            }
        }
        Ok(())
    }
}

/// Softmax weights of a tail neighborhood for one query user: the logit of
/// neighbor (r, t) is u₀·ρ(r). Two neighbors sharing a relation each carry
/// the relation's full exponential — the denominator runs over neighbors,
/// not distinct relations.
pub fn relation_weights<S: Scalar>(
    u_vec: &[S],
    rel_vecs: &Matrix<S>,
    neighborhood: &[(RelationKind, EntityId)],
) -> Result<Vec<S>> {
    if neighborhood.is_empty() {
        return Err(Error::EmptyNeighborhood);
    }
    let logits: Vec<S> = neighborhood
        .iter()
        .map(|&(r, _)| dot(u_vec, rel_vecs.row(r.id() as usize)))
        .collect();
    Ok(softmax(&logits))
}

/// Σ wᵢ·sᵢ over aligned weights and tail states.
pub fn aggregate<S: Scalar>(weights: &[S], tail_states: &[&[S]]) -> Result<Vec<S>> {
    if weights.len() != tail_states.len() {
        return Err(Error::LengthMismatch {
            left: weights.len(),
            right: tail_states.len(),
        });
    }
    if weights.is_empty() {
        return Err(Error::EmptyNeighborhood);
    }
    let dim = tail_states[0].len();
    let mut out = vec![S::zero(); dim];
    for (&w, s) in weights.iter().zip(tail_states) {
        for i in 0..dim {
            out[i] += w * s[i];
        }
    }
    Ok(out)
}

/// Per-node forward cache: the (possibly capped) neighborhood actually
/// used and its softmax weights. Both are user-specific but layer-
/// independent.
#[derive(Debug, Clone)]
struct NodeUpdate<S> {
    neighbors: Vec<(RelationKind, EntityId)>,
    weights: Vec<S>,
}

/// Everything the backward pass needs from a forward run.
#[derive(Debug, Clone)]
pub struct PropagationTrace<S> {
    user: EntityId,
    /// layer_states[k][v] = v's state at depth k, for every v needed at
    /// that depth; index 0 holds the trainable base rows.
    layer_states: Vec<BTreeMap<EntityId, Vec<S>>>,
    /// Forward caches of the nodes updated (non-leaves); keyed once since
    /// weights are layer-independent.
    updates: BTreeMap<EntityId, NodeUpdate<S>>,
}

impl<S: Scalar> PropagationTrace<S> {
    /// Final-layer state of a target.
    pub fn output(&self, v: EntityId) -> &[S] {
        &self.layer_states[self.layer_states.len() - 1][&v]
    }

    pub fn user(&self) -> EntityId {
        self.user
    }
}

/// Gradients flowing out of a propagation backward pass, keyed sparsely.
#[derive(Debug, Clone)]
pub struct PropagationGrads<S> {
    /// ∂L/∂(layer-0 state row); includes the query user's row, which also
    /// collects the softmax-logit paths.
    pub base_states: BTreeMap<EntityId, Vec<S>>,
    /// ∂L/∂(relation weight vector), keyed by relation id.
    pub relations: BTreeMap<u32, Vec<S>>,
    /// ∂L/∂(W, b) per layer, dense.
    pub layers: Vec<(Matrix<S>, Vec<S>)>,
}

fn add_into<S: Scalar>(map: &mut BTreeMap<u32, Vec<S>>, key: u32, dim: usize, scale: S, vec: &[S]) {
    let acc = map.entry(key).or_insert_with(|| vec![S::zero(); dim]);
    for (a, &v) in acc.iter_mut().zip(vec) {
        *a += scale * v;
    }
}

/// Runs the forward pass for `targets`, computing states only inside the
/// targets' receptive field: need(K) = targets, need(k−1) = need(k) ∪
/// tails(need(k)). Equal to whole-graph propagation by construction —
/// states outside the field cannot influence the targets.
pub fn forward_trace<S: Scalar>(
    kg: &KnowledgeGraph,
    base_states: &Matrix<S>,
    rel_vecs: &Matrix<S>,
    params: &PropagationParams<S>,
    user: EntityId,
    targets: &[EntityId],
    neighbor_cap: Option<usize>,
) -> Result<PropagationTrace<S>> {
    params.validate()?;
    let entities = kg.entity_count() as u32;
    if user >= entities {
        return Err(Error::UnknownEntity(user));
    }
    for &t in targets {
        if t >= entities {
            return Err(Error::UnknownEntity(t));
        }
    }
    if base_states.rows() != entities as usize || base_states.cols() != params.dim {
        return Err(Error::DimensionMismatch {
            expected: entities as usize,
            got: base_states.rows(),
        });
    }

    let capped = |v: EntityId| -> &[(RelationKind, EntityId)] {
        let n = kg.neighbors(v);
        match neighbor_cap {
            Some(cap) if n.len() > cap => &n[..cap],
            _ => n,
        }
    };

    // Receptive field, outermost layer first.
    let layer_count = params.layer_count();
    let mut needs: Vec<BTreeSet<EntityId>> = Vec::with_capacity(layer_count + 1);
    needs.push(targets.iter().copied().collect());
    for _ in 0..layer_count {
        let prev = needs.last().expect("nonempty");
        let mut wider = prev.clone();
        for &v in prev {
            for &(_, t) in capped(v) {
                wider.insert(t);
            }
        }
        needs.push(wider);
    }
    needs.reverse(); // needs[k] = set required at depth k

    let u_vec = base_states.row(user as usize).to_vec();
    let mut updates: BTreeMap<EntityId, NodeUpdate<S>> = BTreeMap::new();
    let mut layer_states: Vec<BTreeMap<EntityId, Vec<S>>> = Vec::with_capacity(layer_count + 1);
    layer_states.push(
        needs[0]
            .iter()
            .map(|&v| (v, base_states.row(v as usize).to_vec()))
            .collect(),
    );

    for (k, layer) in params.layers.iter().enumerate() {
        let prev = &layer_states[k];
        let mut next: BTreeMap<EntityId, Vec<S>> = BTreeMap::new();
        for &v in &needs[k + 1] {
            let neighborhood = capped(v);
            if neighborhood.is_empty() {
                next.insert(v, prev[&v].clone());
                continue;
            }
            let update = updates.entry(v).or_insert_with(|| {
                let weights = relation_weights(&u_vec, rel_vecs, neighborhood)
                    .expect("nonempty neighborhood");
                NodeUpdate {
                    neighbors: neighborhood.to_vec(),
                    weights,
                }
            });
            let tail_states: Vec<&[S]> = update
                .neighbors
                .iter()
                .map(|&(_, t)| prev[&t].as_slice())
                .collect();
            let agg = aggregate(&update.weights, &tail_states)?;
            let own = &prev[&v];
            let mut out = vec![S::zero(); params.dim];
            for i in 0..params.dim {
                let w_row = layer.weight.row(i);
                let mut z = layer.bias[i];
                for j in 0..params.dim {
                    z += w_row[j] * own[j] + w_row[params.dim + j] * agg[j];
                }
                out[i] = z.tanh();
            }
            next.insert(v, out);
        }
        layer_states.push(next);
    }

    Ok(PropagationTrace {
        user,
        layer_states,
        updates,
    })
}

/// Final-layer representations of the requested targets.
pub fn propagate<S: Scalar>(
    kg: &KnowledgeGraph,
    base_states: &Matrix<S>,
    rel_vecs: &Matrix<S>,
    params: &PropagationParams<S>,
    user: EntityId,
    targets: &[EntityId],
    neighbor_cap: Option<usize>,
) -> Result<BTreeMap<EntityId, Vec<S>>> {
    let trace = forward_trace(kg, base_states, rel_vecs, params, user, targets, neighbor_cap)?;
    Ok(targets
        .iter()
        .map(|&t| (t, trace.output(t).to_vec()))
        .collect())
}

/// Reverse-mode pass: seeds are ∂L/∂(final state) per target; returns
/// gradients on the base state rows, relation weight vectors, and the
/// layer parameters.
pub fn backpropagate<S: Scalar>(
    trace: &PropagationTrace<S>,
    params: &PropagationParams<S>,
    rel_vecs: &Matrix<S>,
    base_states: &Matrix<S>,
    seeds: &BTreeMap<EntityId, Vec<S>>,
) -> PropagationGrads<S> {
    let dim = params.dim;
    let u_vec = base_states.row(trace.user as usize);
    let mut layer_grads: Vec<(Matrix<S>, Vec<S>)> = params
        .layers
        .iter()
        .map(|_| (Matrix::zeros(dim, 2 * dim), vec![S::zero(); dim]))
        .collect();
    let mut rel_grads: BTreeMap<u32, Vec<S>> = BTreeMap::new();
    let mut user_logit_grad = vec![S::zero(); dim];

    let mut adjoint: BTreeMap<EntityId, Vec<S>> = seeds.clone();
    for k in (0..params.layer_count()).rev() {
        let layer = &params.layers[k];
        let prev_states = &trace.layer_states[k];
        let post_states = &trace.layer_states[k + 1];
        let mut prev_adjoint: BTreeMap<EntityId, Vec<S>> = BTreeMap::new();
        for (&v, bar) in &adjoint {
            let Some(update) = trace.updates.get(&v) else {
                // Leaf: state passes through unchanged.
                add_into(&mut prev_adjoint, v, dim, S::one(), bar);
                continue;
            };
            let y = &post_states[&v];
            let own = &prev_states[&v];
            // z̄ = ȳ ⊙ (1 − y²) through tanh.
            let mut z_bar = vec![S::zero(); dim];
            for i in 0..dim {
                z_bar[i] = bar[i] * (S::one() - y[i] * y[i]);
            }
            let (w_grad, b_grad) = &mut layer_grads[k];
            let mut agg = vec![S::zero(); dim];
            {
                let tail_states: Vec<&[S]> = update
                    .neighbors
                    .iter()
                    .map(|&(_, t)| prev_states[&t].as_slice())
                    .collect();
                for (&w, s) in update.weights.iter().zip(&tail_states) {
                    for i in 0..dim {
                        agg[i] += w * s[i];
                    }
                }
            }
            let mut own_bar = vec![S::zero(); dim];
            let mut agg_bar = vec![S::zero(); dim];
            for i in 0..dim {
                b_grad[i] += z_bar[i];
                let w_row = layer.weight.row(i);
                let g_row = w_grad.row_mut(i);
                for j in 0..dim {
                    g_row[j] += z_bar[i] * own[j];
                    g_row[dim + j] += z_bar[i] * agg[j];
                    own_bar[j] += w_row[j] * z_bar[i];
                    agg_bar[j] += w_row[dim + j] * z_bar[i];
                }
            }
            add_into(&mut prev_adjoint, v, dim, S::one(), &own_bar);

            // Through the weighted sum: tails get wᵢ·agḡ, weights get
            // agḡ·sᵢ, then back through the shared softmax to the logits.
            let mut w_bars = vec![S::zero(); update.neighbors.len()];
            for (i, &(_, t)) in update.neighbors.iter().enumerate() {
                let s = prev_states[&t].as_slice();
                add_into(&mut prev_adjoint, t, dim, update.weights[i], &agg_bar);
                w_bars[i] = dot(&agg_bar, s);
            }
            let mix: S = update
                .weights
                .iter()
                .zip(&w_bars)
                .map(|(&w, &wb)| w * wb)
                .sum();
            for (i, &(r, _)) in update.neighbors.iter().enumerate() {
                let pi_bar = update.weights[i] * (w_bars[i] - mix);
                if pi_bar == S::zero() {
                    continue;
                }
                // π = u₀·ρ(r).
                add_into(&mut rel_grads, r.id(), dim, pi_bar, u_vec);
                let rho = rel_vecs.row(r.id() as usize);
                for j in 0..dim {
                    user_logit_grad[j] += pi_bar * rho[j];
                }
            }
        }
        adjoint = prev_adjoint;
    }

    let mut base_grads = adjoint;
    let user_acc = base_grads
        .entry(trace.user)
        .or_insert_with(|| vec![S::zero(); dim]);
    for (a, &g) in user_acc.iter_mut().zip(&user_logit_grad) {
        *a += g;
    }
    PropagationGrads {
        base_states: base_grads,
        relations: rel_grads,
        layers: layer_grads,
    }
}
