//! Logistic scorer for relations that cross server boundaries, trained on
//! the edges the partition dropped.

use rand::Rng as _;

use super::{entity_weights, fedavg, FederationConfig, FederationError};
use crate::codec::EmbeddingTable;
use crate::kg::{dropped_edges, EntityId, KnowledgeGraph, Partition};
use crate::rng::{derive_seed, seeded};

#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    pub learning_rate: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig { learning_rate: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkPolicy {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Set when there was nothing to learn from; the policy scores every
    /// pair 0.
    pub trivial: bool,
    /// Area under the ROC curve on the training pairs.
    pub auc: Option<f64>,
}

/// `ẽ_u ⊙ ẽ_v ⊕ |ẽ_u − ẽ_v|`, symmetric in the pair.
fn pair_features(table: &EmbeddingTable, u: EntityId, v: EntityId) -> Vec<f64> {
    let (a, b) = (table.entity(u), table.entity(v));
    a.iter()
        .zip(b)
        .map(|(x, y)| x * y)
        .chain(a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .collect()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl LinkPolicy {
    pub fn score(&self, table: &EmbeddingTable, u: EntityId, v: EntityId) -> f64 {
        if self.trivial {
            return 0.0;
        }
        let x = pair_features(table, u, v);
        sigmoid(self.bias + x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>())
    }
}

/// Mann-Whitney estimate of `P(positive > negative)`, ties counted half.
pub fn auc(positive: &[f64], negative: &[f64]) -> Option<f64> {
    if positive.is_empty() || negative.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for p in positive {
        for n in negative {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    Some(wins / (positive.len() * negative.len()) as f64)
}

struct Sample {
    x: Vec<f64>,
    y: f64,
}

/// One logistic model shared by all servers. Server `k` trains on the
/// dropped edges with an endpoint it owns and an equal number of sampled
/// cross-server non-edges, takes `E` full-batch gradient steps per round,
/// and the coordinator averages with entity-count weights. Servers without
/// samples keep the broadcast model.
pub fn train_cross_server_policy(
    kg: &KnowledgeGraph,
    partition: &Partition,
    table: &EmbeddingTable,
    config: &LinkConfig,
    fed: &FederationConfig,
) -> Result<LinkPolicy, FederationError> {
    fed.validate()?;
    let width = 2 * table.dim();
    let dropped = dropped_edges(kg, partition);
    if dropped.is_empty() {
        return Ok(LinkPolicy {
            weights: vec![0.0; width],
            bias: 0.0,
            trivial: true,
            auc: None,
        });
    }
    let linked = |u: EntityId, v: EntityId| {
        kg.outgoing(u).iter().any(|&(_, t)| t == v) || kg.outgoing(v).iter().any(|&(_, t)| t == u)
    };
    let k = partition.num_servers();
    let mut data: Vec<Vec<Sample>> = (0..k).map(|_| Vec::new()).collect();
    for (s, set) in data.iter_mut().enumerate() {
        let own = |e: EntityId| partition.owner[e.index()] == Some(s as u32);
        let pos: Vec<_> = dropped.iter().filter(|t| own(t.head) || own(t.tail)).collect();
        let mine = &partition.shards[s].entities;
        let others: Vec<EntityId> = kg
            .entities()
            .filter(|e| partition.owner[e.index()].is_some_and(|o| o != s as u32))
            .collect();
        for t in &pos {
            set.push(Sample {
                x: pair_features(table, t.head, t.tail),
                y: 1.0,
            });
        }
        if mine.is_empty() || others.is_empty() {
            continue;
        }
        let mut rng = seeded(derive_seed(fed.seed, s as u64));
        let mut found = 0;
        for _ in 0..pos.len() * 100 {
            if found == pos.len() {
                break;
            }
            let u = mine[rng.random_range(0..mine.len())];
            let v = others[rng.random_range(0..others.len())];
            if !linked(u, v) {
                set.push(Sample {
                    x: pair_features(table, u, v),
                    y: 0.0,
                });
                found += 1;
            }
        }
    }
    let gamma = entity_weights(&partition.shards.iter().map(|s| s.entities.len()).collect::<Vec<_>>());
    // weights then bias
    let mut global = vec![0.0; width + 1];
    for _ in 0..fed.rounds {
        let mut models = Vec::with_capacity(k);
        for set in &data {
            let mut w = global.clone();
            if !set.is_empty() {
                for _ in 0..fed.local_steps {
                    let mut g = vec![0.0; width + 1];
                    for s in set {
                        let z = w[width] + s.x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
                        let err = sigmoid(z) - s.y;
                        g.iter_mut().zip(&s.x).for_each(|(g, x)| *g += err * x);
                        g[width] += err;
                    }
                    let scale = config.learning_rate / set.len() as f64;
                    w.iter_mut().zip(&g).for_each(|(w, g)| *w -= scale * g);
                }
            }
            models.push(w);
        }
        global = fedavg(&models, &gamma)?;
    }
    let mut policy = LinkPolicy {
        bias: global[width],
        weights: global[..width].to_vec(),
        trivial: false,
        auc: None,
    };
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for s in data.iter().flatten() {
        let p = sigmoid(policy.bias + s.x.iter().zip(&policy.weights).map(|(a, b)| a * b).sum::<f64>());
        if s.y > 0.5 {
            pos.push(p)
        } else {
            neg.push(p)
        }
    }
    policy.auc = auc(&pos, &neg);
    Ok(policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{Shard, Triple};

    fn two_servers(kg: &KnowledgeGraph) -> Partition {
        let owner: Vec<Option<u32>> = (0..8).map(|e| Some(u32::from(e >= 4))).collect();
        let shards = (0..2u32)
            .map(|s| {
                let entities: Vec<EntityId> = (0..8).filter(|&e| (e >= 4) == (s == 1)).map(EntityId).collect();
                Shard {
                    server: s as usize,
                    graph: kg.induced_subgraph(&entities),
                    entities,
                    subject: None,
                }
            })
            .collect();
        Partition {
            owner,
            shards,
            unassigned: vec![],
        }
    }

    #[test]
    fn auc_hand_cases() {
        assert_eq!(auc(&[0.9, 0.8], &[0.1, 0.2]), Some(1.0));
        assert_eq!(auc(&[0.5], &[0.5]), Some(0.5));
        assert_eq!(auc(&[0.1], &[0.2, 0.0]), Some(0.5));
        assert_eq!(auc(&[], &[0.1]), None);
    }

    #[test]
    fn separable_toy_reaches_high_auc() {
        // cross edges join i and i + 4, which share an embedding
        let mut triples: Vec<Triple> = (0..4).map(|i| Triple::new(i, 0, i + 4)).collect();
        triples.push(Triple::new(0, 1, 1));
        triples.push(Triple::new(4, 1, 5));
        let kg = KnowledgeGraph::from_triples(8, 2, triples).unwrap();
        let mut table = EmbeddingTable::zeros(8, 2, 4);
        for i in 0..4u32 {
            let mut v = vec![0.0; 4];
            v[i as usize] = 1.0;
            table.entity_mut(EntityId(i)).copy_from_slice(&v);
            table.entity_mut(EntityId(i + 4)).copy_from_slice(&v);
        }
        let part = two_servers(&kg);
        let fed = FederationConfig { local_steps: 5, rounds: 40, seed: 3, shared_seed: false };
        let policy = train_cross_server_policy(&kg, &part, &table, &LinkConfig::default(), &fed).unwrap();
        assert!(!policy.trivial);
        assert!(policy.auc.unwrap() >= 0.9, "{:?}", policy.auc);
        let (a, b) = (EntityId(1), EntityId(6));
        assert_eq!(policy.score(&table, a, b), policy.score(&table, b, a));
    }

    #[test]
    fn no_dropped_edges_gives_trivial_policy() {
        let kg = KnowledgeGraph::from_triples(8, 1, vec![Triple::new(0, 0, 1), Triple::new(4, 0, 5)]).unwrap();
        let table = EmbeddingTable::random(8, 1, 3, 1);
        let policy =
            train_cross_server_policy(&kg, &two_servers(&kg), &table, &LinkConfig::default(), &FederationConfig::default())
                .unwrap();
        assert!(policy.trivial);
        assert_eq!(policy.auc, None);
        assert_eq!(policy.score(&table, EntityId(0), EntityId(7)), 0.0);
    }
}
