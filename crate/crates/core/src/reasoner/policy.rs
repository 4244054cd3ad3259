//! Interpreter policy: a two-layer graph convolution scoring the relations
//! available at the current entity.
//!
//! Input features are `x_e = ẽ ⊕ onehot(layer(e))`. The first layer
//! aggregates the mean of `x` over `e` and its undirected neighbours and
//! applies `relu(· W1)`; the second layer maps to one score per relation
//! type via `W2`. Scores of the available relations go through a softmax,
//! are clipped to `[ε, 1 − ε]` and renormalised.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng as _;

use super::{ReasonerError, DEFAULT_CLIP};
use crate::codec::EmbeddingTable;
use crate::kg::{EntityId, KnowledgeGraph, LayerAssignment, RelationId};
use crate::rng::seeded;

/// Distribution over the actions available at one state. `actions` is
/// ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDist {
    pub actions: Vec<RelationId>,
    pub probs: Vec<f64>,
}

impl ActionDist {
    pub fn prob(&self, r: RelationId) -> f64 {
        self.actions
            .binary_search(&r)
            .map(|i| self.probs[i])
            .unwrap_or(0.0)
    }

    /// Highest-probability action, lowest id on ties.
    pub fn greedy(&self) -> RelationId {
        let mut best = 0;
        for i in 1..self.probs.len() {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        self.actions[best]
    }

    pub fn sample(&self, rng: &mut crate::rng::Rng) -> RelationId {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (a, p) in self.actions.iter().zip(&self.probs) {
            acc += p;
            if u < acc {
                return *a;
            }
        }
        *self.actions.last().expect("non-empty distribution")
    }

    pub fn entropy(&self) -> f64 {
        self.probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|p| -p * p.ln())
            .sum()
    }
}

/// Anything that maps a state entity to an action distribution.
pub trait ActionPolicy {
    fn distribution(&self, e: EntityId) -> Result<ActionDist, ReasonerError>;
}

/// Precomputed per-entity inputs for the GCN: aggregated features and the
/// available actions.
#[derive(Debug, Clone)]
pub struct PolicyInputs {
    aggregated: Array2<f64>,
    available: Vec<Vec<RelationId>>,
    num_relations: usize,
}

impl PolicyInputs {
    /// `layers` supplies the one-hot layer block; `layer_mask` removes
    /// actions that can reach a strictly more abstract layer.
    pub fn new(kg: &KnowledgeGraph, table: &EmbeddingTable, layers: &LayerAssignment, layer_mask: bool) -> Self {
        let n = kg.num_entities();
        let d = table.dim();
        let l = layers.num_layers();
        let width = d + l;
        let mut raw = Array2::<f64>::zeros((n, width));
        for e in kg.entities() {
            let mut row = raw.row_mut(e.index());
            for (i, x) in table.entity(e).iter().enumerate() {
                row[i] = *x;
            }
            row[d + layers.layer(e) as usize - 1] = 1.0;
        }
        let mut aggregated = Array2::<f64>::zeros((n, width));
        for e in kg.entities() {
            let ns = kg.undirected_neighbors(e);
            let mut acc = raw.row(e.index()).to_owned();
            for nb in &ns {
                acc += &raw.row(nb.index());
            }
            acc /= (ns.len() + 1) as f64;
            aggregated.row_mut(e.index()).assign(&acc);
        }
        let available = kg
            .entities()
            .map(|e| {
                let mut rs = kg.out_relations(e);
                if layer_mask {
                    let here = layers.layer(e);
                    rs.retain(|&r| kg.tails(e, r).all(|t| layers.layer(t) >= here));
                }
                rs
            })
            .collect();
        PolicyInputs {
            aggregated,
            available,
            num_relations: kg.num_relations(),
        }
    }

    pub fn feature_width(&self) -> usize {
        self.aggregated.ncols()
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    pub fn num_entities(&self) -> usize {
        self.aggregated.nrows()
    }

    pub fn available(&self, e: EntityId) -> &[RelationId] {
        &self.available[e.index()]
    }

    pub fn aggregated(&self, e: EntityId) -> ArrayView1<'_, f64> {
        self.aggregated.row(e.index())
    }
}

/// GCN weights. `w1` is `features × hidden`, `w2` is `hidden × relations`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNetwork {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
    pub clip: f64,
}

/// Gradient with the same shapes as [`PolicyNetwork`].
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGrad {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
}

impl PolicyGrad {
    pub fn zeros_like(net: &PolicyNetwork) -> Self {
        PolicyGrad {
            w1: Array2::zeros(net.w1.raw_dim()),
            w2: Array2::zeros(net.w2.raw_dim()),
        }
    }

    pub fn norm(&self) -> f64 {
        (self.w1.iter().chain(self.w2.iter()).map(|x| x * x).sum::<f64>()).sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        self.w1 *= s;
        self.w2 *= s;
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.w1.iter().chain(self.w2.iter()).copied().collect()
    }
}

struct Forward {
    z: Array1<f64>,
    h: Array1<f64>,
    actions: Vec<RelationId>,
    q: Vec<f64>,
    clipped: Vec<f64>,
    total: f64,
}

impl PolicyNetwork {
    /// Glorot-uniform initialisation.
    pub fn new(features: usize, hidden: usize, relations: usize, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let mut init = |rows: usize, cols: usize| {
            let b = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.random_range(-b..=b))
        };
        let w1 = init(features, hidden);
        let w2 = init(hidden, relations);
        PolicyNetwork {
            w1,
            w2,
            clip: DEFAULT_CLIP,
        }
    }

    pub fn zeros(features: usize, hidden: usize, relations: usize) -> Self {
        PolicyNetwork {
            w1: Array2::zeros((features, hidden)),
            w2: Array2::zeros((hidden, relations)),
            clip: DEFAULT_CLIP,
        }
    }

    pub fn for_inputs(inputs: &PolicyInputs, hidden: usize, seed: u64) -> Self {
        Self::new(inputs.feature_width(), hidden, inputs.num_relations(), seed)
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.w2.len()
    }

    /// `w1` then `w2`, row-major.
    pub fn to_flat(&self) -> Vec<f64> {
        self.w1.iter().chain(self.w2.iter()).copied().collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<(), ReasonerError> {
        if flat.len() != self.num_params() {
            return Err(ReasonerError::Shape(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let (a, b) = flat.split_at(self.w1.len());
        self.w1.iter_mut().zip(a).for_each(|(w, x)| *w = *x);
        self.w2.iter_mut().zip(b).for_each(|(w, x)| *w = *x);
        Ok(())
    }

    pub fn apply(&mut self, grad: &PolicyGrad, step: f64) {
        self.w1.scaled_add(step, &grad.w1);
        self.w2.scaled_add(step, &grad.w2);
    }

    fn forward_cache(&self, inputs: &PolicyInputs, e: EntityId) -> Result<Forward, ReasonerError> {
        let actions = inputs.available(e).to_vec();
        if actions.is_empty() {
            return Err(ReasonerError::DeadEnd(e));
        }
        let z = inputs.aggregated(e).dot(&self.w1);
        let h = z.mapv(|v| v.max(0.0));
        let scores: Vec<f64> = actions.iter().map(|r| h.dot(&self.w2.column(r.index()))).collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let q: Vec<f64> = exps.iter().map(|x| x / sum).collect();
        let clipped: Vec<f64> = q.iter().map(|&p| p.clamp(self.clip, 1.0 - self.clip)).collect();
        let total = clipped.iter().sum();
        Ok(Forward {
            z,
            h,
            actions,
            q,
            clipped,
            total,
        })
    }

    pub fn forward(&self, inputs: &PolicyInputs, e: EntityId) -> Result<ActionDist, ReasonerError> {
        let f = self.forward_cache(inputs, e)?;
        if f.actions.len() == 1 {
            return Ok(ActionDist {
                actions: f.actions,
                probs: vec![1.0],
            });
        }
        Ok(ActionDist {
            probs: f.clipped.iter().map(|c| c / f.total).collect(),
            actions: f.actions,
        })
    }

    /// Backpropagates `dscore[i]` (one entry per available action) into
    /// `grad`, scaled by `scale`.
    fn backprop_scores(&self, inputs: &PolicyInputs, e: EntityId, f: &Forward, dscore: &[f64], scale: f64, grad: &mut PolicyGrad) {
        let mut dh = Array1::<f64>::zeros(f.h.len());
        for (i, r) in f.actions.iter().enumerate() {
            let g = scale * dscore[i];
            if g == 0.0 {
                continue;
            }
            grad.w2.column_mut(r.index()).scaled_add(g, &f.h);
            dh.scaled_add(g, &self.w2.column(r.index()));
        }
        let dz: Array1<f64> = dh
            .iter()
            .zip(f.z.iter())
            .map(|(d, z)| if *z > 0.0 { *d } else { 0.0 })
            .collect();
        let x = inputs.aggregated(e);
        for (i, xi) in x.iter().enumerate() {
            if *xi != 0.0 {
                grad.w1.row_mut(i).scaled_add(*xi, &dz);
            }
        }
    }

    /// Adds `scale · ∇ log π(action | e)` to `grad`, differentiating through
    /// the clip (zero slope where a probability is clipped).
    pub fn accumulate_log_prob_grad(
        &self,
        inputs: &PolicyInputs,
        e: EntityId,
        action: RelationId,
        scale: f64,
        grad: &mut PolicyGrad,
    ) -> Result<(), ReasonerError> {
        let f = self.forward_cache(inputs, e)?;
        if f.actions.len() == 1 {
            return Ok(());
        }
        let a = f
            .actions
            .binary_search(&action)
            .map_err(|_| ReasonerError::Config(format!("{action} unavailable at {e}")))?;
        let inside = |i: usize| f.q[i] > self.clip && f.q[i] < 1.0 - self.clip;
        // d log p_a / d q_i
        let dq: Vec<f64> = (0..f.q.len())
            .map(|i| {
                let mut v = 0.0;
                if inside(i) {
                    if i == a {
                        v += 1.0 / f.clipped[a];
                    }
                    v -= 1.0 / f.total;
                }
                v
            })
            .collect();
        let dot: f64 = dq.iter().zip(&f.q).map(|(d, q)| d * q).sum();
        let dscore: Vec<f64> = (0..f.q.len()).map(|j| f.q[j] * (dq[j] - dot)).collect();
        self.backprop_scores(inputs, e, &f, &dscore, scale, grad);
        Ok(())
    }

    /// Adds `scale · ∇ H(softmax)` at state `e` (entropy of the unclipped
    /// softmax).
    pub fn accumulate_entropy_grad(
        &self,
        inputs: &PolicyInputs,
        e: EntityId,
        scale: f64,
        grad: &mut PolicyGrad,
    ) -> Result<(), ReasonerError> {
        let f = self.forward_cache(inputs, e)?;
        if f.actions.len() == 1 {
            return Ok(());
        }
        let h: f64 = f.q.iter().filter(|&&q| q > 0.0).map(|q| -q * q.ln()).sum();
        let dscore: Vec<f64> = f
            .q
            .iter()
            .map(|&q| if q > 0.0 { -q * (q.ln() + h) } else { 0.0 })
            .collect();
        self.backprop_scores(inputs, e, &f, &dscore, scale, grad);
        Ok(())
    }

    pub fn log_prob(&self, inputs: &PolicyInputs, e: EntityId, action: RelationId) -> Result<f64, ReasonerError> {
        Ok(self.forward(inputs, e)?.prob(action).ln())
    }

    pub fn bind<'a>(&'a self, inputs: &'a PolicyInputs) -> BoundPolicy<'a> {
        BoundPolicy { net: self, inputs }
    }
}

/// A network paired with its inputs.
#[derive(Debug, Clone, Copy)]
pub struct BoundPolicy<'a> {
    pub net: &'a PolicyNetwork,
    pub inputs: &'a PolicyInputs,
}

impl ActionPolicy for BoundPolicy<'_> {
    fn distribution(&self, e: EntityId) -> Result<ActionDist, ReasonerError> {
        self.net.forward(self.inputs, e)
    }
}

/// Explicit per-entity distributions, e.g. an expert replayed from path
/// counts or a hand-written deterministic policy.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TabularPolicy {
    pub table: BTreeMap<EntityId, ActionDist>,
}

impl TabularPolicy {
    pub fn deterministic(choices: impl IntoIterator<Item = (EntityId, RelationId)>) -> Self {
        TabularPolicy {
            table: choices
                .into_iter()
                .map(|(e, r)| {
                    (
                        e,
                        ActionDist {
                            actions: vec![r],
                            probs: vec![1.0],
                        },
                    )
                })
                .collect(),
        }
    }

    /// Empirical action frequencies per entity over the path steps.
    pub fn from_paths<'a>(paths: impl IntoIterator<Item = &'a crate::kg::ReasoningPath>) -> Self {
        let mut counts: BTreeMap<EntityId, BTreeMap<RelationId, usize>> = BTreeMap::new();
        for p in paths {
            let mut cur = p.origin;
            for &(r, e) in &p.steps {
                *counts.entry(cur).or_default().entry(r).or_default() += 1;
                cur = e;
            }
        }
        let table = counts
            .into_iter()
            .map(|(e, rs)| {
                let total: usize = rs.values().sum();
                let (actions, probs) = rs
                    .into_iter()
                    .map(|(r, c)| (r, c as f64 / total as f64))
                    .unzip();
                (e, ActionDist { actions, probs })
            })
            .collect();
        TabularPolicy { table }
    }
}

impl ActionPolicy for TabularPolicy {
    fn distribution(&self, e: EntityId) -> Result<ActionDist, ReasonerError> {
        self.table.get(&e).cloned().ok_or(ReasonerError::DeadEnd(e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::Triple;

    fn star4() -> (KnowledgeGraph, EmbeddingTable, LayerAssignment) {
        let kg = KnowledgeGraph::from_triples(
            5,
            4,
            [
                Triple::new(0, 0, 1),
                Triple::new(0, 1, 2),
                Triple::new(0, 2, 3),
                Triple::new(0, 3, 4),
                Triple::new(1, 0, 2),
            ],
        )
        .unwrap();
        let table = EmbeddingTable::random(5, 4, 6, 3);
        let layers = crate::kg::layer_by_degree(&kg, &[2]).unwrap();
        (kg, table, layers)
    }

    #[test]
    fn single_action_has_probability_one() {
        let (kg, table, layers) = star4();
        let inputs = PolicyInputs::new(&kg, &table, &layers, false);
        let net = PolicyNetwork::for_inputs(&inputs, 8, 1);
        let d = net.forward(&inputs, EntityId(1)).unwrap();
        assert_eq!(d.probs, vec![1.0]);
    }

    #[test]
    fn zero_network_is_uniform() {
        let (kg, table, layers) = star4();
        let inputs = PolicyInputs::new(&kg, &table, &layers, false);
        let net = PolicyNetwork::zeros(inputs.feature_width(), 8, 4);
        let d = net.forward(&inputs, EntityId(0)).unwrap();
        assert_eq!(d.probs, vec![0.25; 4]);
        assert_eq!(d.greedy(), RelationId(0));
    }

    #[test]
    fn dead_end_is_an_error() {
        let (kg, table, layers) = star4();
        let inputs = PolicyInputs::new(&kg, &table, &layers, false);
        let net = PolicyNetwork::for_inputs(&inputs, 8, 1);
        assert_eq!(net.forward(&inputs, EntityId(4)), Err(ReasonerError::DeadEnd(EntityId(4))));
    }

    #[test]
    fn probabilities_sum_to_one_and_respect_clip() {
        let (kg, table, layers) = star4();
        let inputs = PolicyInputs::new(&kg, &table, &layers, false);
        for seed in 0..20 {
            let mut net = PolicyNetwork::for_inputs(&inputs, 8, seed);
            net.w2 *= 40.0; // push towards saturation
            let d = net.forward(&inputs, EntityId(0)).unwrap();
            let s: f64 = d.probs.iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
            let lo = net.clip / (1.0 + 3.0 * net.clip);
            assert!(d.probs.iter().all(|&p| p >= lo * 0.999));
        }
    }

    #[test]
    fn flat_round_trip() {
        let (kg, table, layers) = star4();
        let inputs = PolicyInputs::new(&kg, &table, &layers, false);
        let a = PolicyNetwork::for_inputs(&inputs, 5, 2);
        let mut b = PolicyNetwork::zeros(inputs.feature_width(), 5, 4);
        b.set_flat(&a.to_flat()).unwrap();
        assert_eq!(a, b);
        assert!(b.set_flat(&[1.0]).is_err());
    }

    #[test]
    fn layer_mask_drops_upward_actions() {
        // 1 -> 0 leads to the hub (higher layer)
        let kg = KnowledgeGraph::from_triples(
            4,
            2,
            [Triple::new(0, 0, 1), Triple::new(0, 0, 2), Triple::new(0, 0, 3), Triple::new(1, 1, 0), Triple::new(1, 0, 2)],
        )
        .unwrap();
        let table = EmbeddingTable::random(4, 2, 3, 0);
        let layers = crate::kg::layer_by_degree(&kg, &[3]).unwrap();
        assert_eq!(layers.layer(EntityId(0)), 1);
        let masked = PolicyInputs::new(&kg, &table, &layers, true);
        let open = PolicyInputs::new(&kg, &table, &layers, false);
        assert_eq!(open.available(EntityId(1)), &[RelationId(0), RelationId(1)]);
        assert_eq!(masked.available(EntityId(1)), &[RelationId(0)]);
    }

    #[test]
    fn replayed_expert_policy() {
        let paths = vec![
            crate::kg::ReasoningPath {
                origin: EntityId(0),
                steps: vec![(RelationId(1), EntityId(1))],
            },
            crate::kg::ReasoningPath {
                origin: EntityId(0),
                steps: vec![(RelationId(2), EntityId(2))],
            },
            crate::kg::ReasoningPath {
                origin: EntityId(0),
                steps: vec![(RelationId(1), EntityId(1))],
            },
        ];
        let p = TabularPolicy::from_paths(&paths);
        let d = p.distribution(EntityId(0)).unwrap();
        assert_eq!(d.actions, vec![RelationId(1), RelationId(2)]);
        assert!((d.probs[0] - 2.0 / 3.0).abs() < 1e-15);
    }
}
