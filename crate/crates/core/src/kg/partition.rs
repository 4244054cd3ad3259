use std::io::{self, Write};

use rand::seq::SliceRandom;

use super::{EntityId, KgError, KnowledgeGraph, Triple};
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSpec {
    /// Number of servers `K`.
    pub servers: usize,
    /// Fraction of each server's share drawn uniformly across all subjects
    /// (1 = iid, 0 = single subject per server).
    pub iid_fraction: f64,
    pub seed: u64,
}

impl PartitionSpec {
    pub fn new(servers: usize, iid_fraction: f64, seed: u64) -> Self {
        PartitionSpec {
            servers,
            iid_fraction,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), KgError> {
        if self.servers < 1 {
            return Err(KgError::Config("server count must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.iid_fraction) {
            return Err(KgError::Config(format!(
                "iid fraction must lie in [0, 1], got {}",
                self.iid_fraction
            )));
        }
        Ok(())
    }
}

/// One server's knowledge base.
#[derive(Debug, Clone)]
pub struct Shard {
    pub server: usize,
    /// Global ids of the owned entities, ascending. Local id `i` of
    /// `graph` corresponds to `entities[i]`.
    pub entities: Vec<EntityId>,
    pub graph: KnowledgeGraph,
    /// Subject the exclusive part was drawn from, if any.
    pub subject: Option<u32>,
}

impl Shard {
    pub fn global(&self, local: EntityId) -> EntityId {
        self.entities[local.index()]
    }

    pub fn local(&self, global: EntityId) -> Option<EntityId> {
        self.entities
            .binary_search(&global)
            .ok()
            .map(|i| EntityId(i as u32))
    }
}

#[derive(Debug, Clone)]
pub struct Partition {
    /// Index list: owning server per global entity. Entities that no server
    /// could take (subject pools too small when `p < 1`) map to `None`.
    pub owner: Vec<Option<u32>>,
    pub shards: Vec<Shard>,
    pub unassigned: Vec<EntityId>,
}

impl Partition {
    pub fn num_servers(&self) -> usize {
        self.shards.len()
    }

    pub fn local_triple_count(&self) -> usize {
        self.shards.iter().map(|s| s.graph.num_triples()).sum()
    }

    /// `n_k / Σ n_k` over owned entity counts.
    pub fn weights(&self) -> Vec<f64> {
        let total: usize = self.shards.iter().map(|s| s.entities.len()).sum();
        self.shards
            .iter()
            .map(|s| s.entities.len() as f64 / total.max(1) as f64)
            .collect()
    }
}

/// Splits `kg` across `spec.servers` servers.
///
/// Server `k` targets an equal share `n_k` of the entities. Subjects are
/// ranked by size (ties by id) and server `k` is assigned the `k`-th one;
/// it first draws `round((1-p)·n_k)` entities of that subject, then every
/// server draws its remaining `n_k - round((1-p)·n_k)` entities uniformly
/// without replacement from the unowned pool. A server whose subject runs
/// dry simply ends up smaller, so with `p < 1` some entities may stay
/// unassigned. `K = 1` keeps the whole graph on one server.
pub fn partition(kg: &KnowledgeGraph, spec: &PartitionSpec) -> Result<Partition, KgError> {
    spec.validate()?;
    let n = kg.num_entities();
    let k = spec.servers;
    let mut owner: Vec<Option<u32>> = vec![None; n];
    let mut subjects = vec![None; k];
    if k == 1 {
        owner.iter_mut().for_each(|o| *o = Some(0));
    } else {
        let mut rng = seeded(spec.seed);
        let shares: Vec<usize> = (0..k).map(|i| n / k + usize::from(i < n % k)).collect();
        let exclusive: Vec<usize> = shares
            .iter()
            .map(|&s| ((1.0 - spec.iid_fraction) * s as f64).round() as usize)
            .collect();
        if spec.iid_fraction < 1.0 {
            let labels = kg
                .labels()
                .ok_or_else(|| KgError::Config("partition with p < 1 needs entity labels".into()))?;
            let mut counts = vec![0usize; kg.num_labels()];
            for &l in labels {
                counts[l as usize] += 1;
            }
            let mut order: Vec<u32> = (0..counts.len() as u32).filter(|&l| counts[l as usize] > 0).collect();
            if order.len() < k {
                return Err(KgError::Config(format!(
                    "{k} servers but only {} subjects",
                    order.len()
                )));
            }
            order.sort_by_key(|&l| (std::cmp::Reverse(counts[l as usize]), l));
            for server in 0..k {
                let subject = order[server];
                subjects[server] = Some(subject);
                let mut pool: Vec<EntityId> = kg.entities().filter(|e| labels[e.index()] == subject).collect();
                pool.shuffle(&mut rng);
                for e in pool.into_iter().take(exclusive[server]) {
                    owner[e.index()] = Some(server as u32);
                }
            }
        }
        let mut pool: Vec<EntityId> = kg.entities().filter(|e| owner[e.index()].is_none()).collect();
        pool.shuffle(&mut rng);
        let mut pool = pool.into_iter();
        for server in 0..k {
            for e in pool.by_ref().take(shares[server] - exclusive[server]) {
                owner[e.index()] = Some(server as u32);
            }
        }
    }
    let mut members = vec![Vec::new(); k];
    let mut unassigned = Vec::new();
    for e in kg.entities() {
        match owner[e.index()] {
            Some(s) => members[s as usize].push(e),
            None => unassigned.push(e),
        }
    }
    let shards = members
        .into_iter()
        .enumerate()
        .map(|(server, entities)| Shard {
            server,
            graph: kg.induced_subgraph(&entities),
            entities,
            subject: subjects[server],
        })
        .collect();
    Ok(Partition {
        owner,
        shards,
        unassigned,
    })
}

/// Triples whose endpoints are not owned by the same server.
pub fn dropped_edges(kg: &KnowledgeGraph, partition: &Partition) -> Vec<Triple> {
    kg.triples()
        .iter()
        .filter(|t| {
            let (a, b) = (partition.owner[t.head.index()], partition.owner[t.tail.index()]);
            a.is_none() || a != b
        })
        .copied()
        .collect()
}

/// `entity_id,server_id,subject_label` for every owned entity.
pub fn write_partition_csv<W: Write>(kg: &KnowledgeGraph, partition: &Partition, mut out: W) -> io::Result<()> {
    writeln!(out, "entity_id,server_id,subject_label")?;
    for e in kg.entities() {
        if let Some(s) = partition.owner[e.index()] {
            let label = kg
                .label(e)
                .map(|l| kg.label_names()[l as usize].as_str())
                .unwrap_or("");
            writeln!(out, "{},{},{}", e.0, s, label)?;
        }
    }
    Ok(())
}
