//! Two-layer GCN node classifier trained with FedAvg across partition
//! shards.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{entity_weights, fedavg, FederationConfig, FederationError, FederationRun};
use crate::kg::{dropped_edges, EntityId, KnowledgeGraph, Partition};
use crate::rng::{derive_seed, seeded};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    /// L2 penalty on the first layer.
    pub weight_decay: f64,
    pub train_per_class: usize,
    pub validation: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            hidden: 16,
            learning_rate: 20.0,
            weight_decay: 5e-4,
            train_per_class: 20,
            validation: 500,
        }
    }
}

/// Global training and validation node ids.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSplit {
    pub train: Vec<EntityId>,
    pub validation: Vec<EntityId>,
}

/// `per_class` random training nodes of every label, then `validation`
/// random nodes from the rest.
pub fn split_labels(kg: &KnowledgeGraph, per_class: usize, validation: usize, seed: u64) -> Result<LabelSplit, FederationError> {
    let labels = kg
        .labels()
        .ok_or_else(|| FederationError::Config("classification needs entity labels".into()))?;
    let mut order: Vec<EntityId> = kg.entities().collect();
    order.shuffle(&mut seeded(derive_seed(seed, 0x5917)));
    let mut taken = vec![0usize; kg.num_labels()];
    let mut train = Vec::new();
    let mut rest = Vec::new();
    for e in order {
        let l = labels[e.index()] as usize;
        if taken[l] < per_class {
            taken[l] += 1;
            train.push(e);
        } else {
            rest.push(e);
        }
    }
    rest.truncate(validation);
    train.sort_unstable();
    rest.sort_unstable();
    Ok(LabelSplit { train, validation: rest })
}

/// `D^{-1/2}(A + I)D^{-1/2}` over undirected neighbours, as sparse rows.
struct Graph {
    adj: Vec<Vec<(usize, f64)>>,
    features: Vec<Vec<(usize, f64)>>,
    width: usize,
}

impl Graph {
    fn new(kg: &KnowledgeGraph) -> Result<Self, FederationError> {
        let f = kg
            .features()
            .ok_or_else(|| FederationError::Config("classification needs node features".into()))?;
        let neighbours: Vec<Vec<EntityId>> = kg.entities().map(|e| kg.undirected_neighbors(e)).collect();
        let deg: Vec<f64> = neighbours.iter().map(|n| n.len() as f64 + 1.0).collect();
        let adj = neighbours
            .iter()
            .enumerate()
            .map(|(i, ns)| {
                let mut row = vec![(i, 1.0 / deg[i])];
                row.extend(ns.iter().map(|n| (n.index(), 1.0 / (deg[i] * deg[n.index()]).sqrt())));
                row
            })
            .collect();
        let features = kg
            .entities()
            .map(|e| {
                let row = f.row(e);
                let sum: f64 = row.iter().map(|(_, x)| x).sum();
                let scale = if sum > 0.0 { 1.0 / sum } else { 0.0 };
                row.iter().map(|&(c, x)| (c as usize, x * scale)).collect()
            })
            .collect();
        Ok(Graph {
            adj,
            features,
            width: f.width(),
        })
    }

    fn propagate(&self, m: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(m.raw_dim());
        for (i, row) in self.adj.iter().enumerate() {
            let mut o = out.row_mut(i);
            for &(j, w) in row {
                o.scaled_add(w, &m.row(j));
            }
        }
        out
    }

    fn features_times(&self, w: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.features.len(), w.ncols()));
        for (i, row) in self.features.iter().enumerate() {
            let mut o = out.row_mut(i);
            for &(c, x) in row {
                o.scaled_add(x, &w.row(c));
            }
        }
        out
    }

    /// `Xᵀ m`.
    fn features_t_times(&self, m: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.width, m.ncols()));
        for (i, row) in self.features.iter().enumerate() {
            for &(c, x) in row {
                out.row_mut(c).scaled_add(x, &m.row(i));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gcn {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
}

struct Pass {
    z1: Array2<f64>,
    h1: Array2<f64>,
    probs: Array2<f64>,
}

impl Gcn {
    /// Glorot-uniform initialisation.
    pub fn new(features: usize, hidden: usize, classes: usize, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let mut init = |rows: usize, cols: usize| {
            let b = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.random_range(-b..=b))
        };
        let w1 = init(features, hidden);
        let w2 = init(hidden, classes);
        Gcn { w1, w2 }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.w1.iter().chain(self.w2.iter()).copied().collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let (a, b) = flat.split_at(self.w1.len());
        self.w1.iter_mut().zip(a).for_each(|(w, x)| *w = *x);
        self.w2.iter_mut().zip(b).for_each(|(w, x)| *w = *x);
    }

    fn forward(&self, g: &Graph) -> Pass {
        let z1 = g.propagate(&g.features_times(&self.w1));
        let h1 = z1.mapv(|v| v.max(0.0));
        let mut probs = g.propagate(&h1.dot(&self.w2));
        for mut row in probs.axis_iter_mut(Axis(0)) {
            let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            row.mapv_inplace(|v| (v - max).exp());
            let s = row.sum();
            row /= s;
        }
        Pass { z1, h1, probs }
    }

    /// Mean cross-entropy over `train` plus the weight penalty, with the
    /// gradient in [`Gcn::to_flat`] order.
    fn loss_and_grad(&self, g: &Graph, labels: &[u32], train: &[usize], weight_decay: f64) -> (f64, Vec<f64>) {
        let pass = self.forward(g);
        let mut dz2 = Array2::zeros(pass.probs.raw_dim());
        let mut loss = 0.5 * weight_decay * self.w1.iter().map(|w| w * w).sum::<f64>();
        let m = train.len().max(1) as f64;
        for &i in train {
            let y = labels[i] as usize;
            loss -= pass.probs[[i, y]].max(1e-300).ln() / m;
            let mut row = dz2.row_mut(i);
            row.assign(&pass.probs.row(i));
            row[y] -= 1.0;
            row /= m;
        }
        let dhw = g.propagate(&dz2);
        let dw2 = pass.h1.t().dot(&dhw);
        let mut dz1 = dhw.dot(&self.w2.t());
        dz1.zip_mut_with(&pass.z1, |d, &z| {
            if z <= 0.0 {
                *d = 0.0
            }
        });
        let mut dw1 = g.features_t_times(&g.propagate(&dz1));
        dw1.scaled_add(weight_decay, &self.w1);
        (loss, dw1.iter().chain(dw2.iter()).copied().collect())
    }

    fn accuracy(&self, g: &Graph, labels: &[u32], nodes: &[usize]) -> f64 {
        if nodes.is_empty() {
            return f64::NAN;
        }
        let probs = self.forward(g).probs;
        let right = nodes
            .iter()
            .filter(|&&i| {
                let row = probs.row(i);
                let best = (0..row.len()).fold(0, |b, c| if row[c] > row[b] { c } else { b });
                best == labels[i] as usize
            })
            .count();
        right as f64 / nodes.len() as f64
    }
}

struct Server {
    graph: Graph,
    labels: Vec<u32>,
    train: Vec<usize>,
    validation: Vec<usize>,
    model: Gcn,
}

/// FedAvg over per-shard GCNs. Each round every server takes `E` full-batch
/// gradient steps on the labelled nodes it owns, then the coordinator averages
/// with `γ_k = n_k/Σn_k` and scores the average on the whole graph's
/// validation nodes.
pub fn run_federated_classification(
    kg: &KnowledgeGraph,
    partition: &Partition,
    split: &LabelSplit,
    config: &ClassifierConfig,
    fed: &FederationConfig,
) -> Result<FederationRun, FederationError> {
    fed.validate()?;
    let labels = kg
        .labels()
        .ok_or_else(|| FederationError::Config("classification needs entity labels".into()))?
        .to_vec();
    let global = Graph::new(kg)?;
    let init = Gcn::new(global.width, config.hidden, kg.num_labels(), derive_seed(fed.seed, 0xC1A5));
    let ids = |set: &[EntityId], map: &dyn Fn(EntityId) -> Option<EntityId>| -> Vec<usize> {
        set.iter().filter_map(|&e| map(e)).map(|e| e.index()).collect()
    };
    let mut servers = partition
        .shards
        .iter()
        .map(|s| {
            Ok(Server {
                graph: Graph::new(&s.graph)?,
                labels: s.entities.iter().map(|e| labels[e.index()]).collect(),
                train: ids(&split.train, &|e| s.local(e)),
                validation: ids(&split.validation, &|e| s.local(e)),
                model: init.clone(),
            })
        })
        .collect::<Result<Vec<_>, FederationError>>()?;
    let gamma = entity_weights(&partition.shards.iter().map(|s| s.entities.len()).collect::<Vec<_>>());
    let global_val = ids(&split.validation, &|e| Some(e));
    let mut run = FederationRun::new();
    run.dropped_edges = dropped_edges(kg, partition).len();
    let mut current = init;
    for _ in 0..fed.rounds {
        let mut losses = Vec::with_capacity(servers.len());
        let mut accs = Vec::with_capacity(servers.len());
        for s in servers.iter_mut() {
            let mut loss = f64::NAN;
            for _ in 0..fed.local_steps {
                let (l, g) = s.model.loss_and_grad(&s.graph, &s.labels, &s.train, config.weight_decay);
                let mut w = s.model.to_flat();
                w.iter_mut().zip(&g).for_each(|(w, d)| *w -= config.learning_rate * d);
                s.model.set_flat(&w);
                loss = l;
            }
            losses.push(loss);
            accs.push(s.model.accuracy(&s.graph, &s.labels, &s.validation));
        }
        let models: Vec<Vec<f64>> = servers.iter().map(|s| s.model.to_flat()).collect();
        let avg = fedavg(&models, &gamma)?;
        for s in servers.iter_mut() {
            s.model.set_flat(&avg);
        }
        current.set_flat(&avg);
        run.global_accuracy.push(current.accuracy(&global, &labels, &global_val));
        run.global_loss.push(losses.iter().zip(&gamma).map(|(l, g)| l * g).sum());
        run.local_loss.push(losses);
        run.local_accuracy.push(accs);
        run.snapshots.push(avg);
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{parse_planetoid, partition, PartitionSpec};
    use crate::synth::{planetoid_like, PlanetoidSpec};

    fn small() -> KnowledgeGraph {
        let spec = PlanetoidSpec {
            nodes: 300,
            classes: 3,
            features: 90,
            edges: 600,
            ..PlanetoidSpec::cora(4)
        };
        let t = planetoid_like(&spec);
        parse_planetoid(&t.content, &t.cites).unwrap().graph
    }

    #[test]
    fn split_sizes() {
        let kg = small();
        let s = split_labels(&kg, 5, 100, 1).unwrap();
        assert_eq!(s.train.len(), 15);
        assert_eq!(s.validation.len(), 100);
        assert!(s.train.iter().all(|e| !s.validation.contains(e)));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let kg = small();
        let g = Graph::new(&kg).unwrap();
        let labels = kg.labels().unwrap().to_vec();
        let train: Vec<usize> = (0..40).collect();
        let mut net = Gcn::new(g.width, 4, 3, 2);
        let (_, grad) = net.loss_and_grad(&g, &labels, &train, 1e-2);
        let base = net.to_flat();
        let h = 1e-6;
        for i in (0..base.len()).step_by(17) {
            let mut p = base.clone();
            p[i] += h;
            net.set_flat(&p);
            let up = net.loss_and_grad(&g, &labels, &train, 1e-2).0;
            p[i] -= 2.0 * h;
            net.set_flat(&p);
            let down = net.loss_and_grad(&g, &labels, &train, 1e-2).0;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - grad[i]).abs() <= 1e-6 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn single_server_learns() {
        let kg = small();
        let split = split_labels(&kg, 10, 100, 3).unwrap();
        let part = partition(&kg, &PartitionSpec::new(1, 1.0, 0)).unwrap();
        let fed = FederationConfig { local_steps: 1, rounds: 100, seed: 1, shared_seed: false };
        let run = run_federated_classification(&kg, &part, &split, &ClassifierConfig::default(), &fed).unwrap();
        assert!(*run.global_accuracy.last().unwrap() > 0.6, "{:?}", run.global_accuracy.last());
        assert_eq!(run.dropped_edges, 0);
    }

    #[test]
    fn missing_labels_are_an_error() {
        let kg = KnowledgeGraph::from_triples(3, 1, vec![crate::kg::Triple::new(0, 0, 1)]).unwrap();
        assert!(split_labels(&kg, 1, 1, 0).is_err());
    }
}
