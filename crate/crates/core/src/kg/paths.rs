use std::collections::HashMap;

use rand::Rng as _;

use super::{EntityId, KgError, KnowledgeGraph, LayerAssignment, RelationId, Triple};
use crate::rng::seeded;

/// Alternating entity/relation sequence `e0, r1, e1, …, rJ, eJ`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ReasoningPath {
    pub origin: EntityId,
    pub steps: Vec<(RelationId, EntityId)>,
}

impl ReasoningPath {
    pub fn new(origin: EntityId) -> Self {
        ReasoningPath {
            origin,
            steps: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn tail(&self) -> EntityId {
        self.steps.last().map_or(self.origin, |&(_, e)| e)
    }

    /// Entities in path order, origin first.
    pub fn entities(&self) -> Vec<EntityId> {
        std::iter::once(self.origin)
            .chain(self.steps.iter().map(|&(_, e)| e))
            .collect()
    }

    pub fn relations(&self) -> Vec<RelationId> {
        self.steps.iter().map(|&(r, _)| r).collect()
    }

    /// `(e_t, r_{t+1}, e_{t+1})` for every step.
    pub fn triples(&self) -> impl Iterator<Item = Triple> + '_ {
        let mut prev = self.origin;
        self.steps.iter().map(move |&(r, e)| {
            let t = Triple {
                head: prev,
                relation: r,
                tail: e,
            };
            prev = e;
            t
        })
    }

    pub fn is_valid_in(&self, kg: &KnowledgeGraph) -> bool {
        self.origin.index() < kg.num_entities() && self.triples().all(|t| kg.contains(&t))
    }
}

/// Entities and relations read directly off a message.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExplicitSemantics {
    pub entities: Vec<EntityId>,
    pub relations: Vec<RelationId>,
}

impl ExplicitSemantics {
    pub fn from_entities(entities: Vec<EntityId>) -> Self {
        ExplicitSemantics {
            entities,
            relations: Vec::new(),
        }
    }

    pub fn validate(&self, kg: &KnowledgeGraph) -> Result<(), KgError> {
        if self.entities.is_empty() {
            return Err(KgError::Config("explicit semantics need at least one entity".into()));
        }
        if let Some(e) = self.entities.iter().find(|e| e.index() >= kg.num_entities()) {
            return Err(KgError::UnknownId(e.to_string()));
        }
        if let Some(r) = self.relations.iter().find(|r| r.index() >= kg.num_relations()) {
            return Err(KgError::UnknownId(r.to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpertPathSet {
    pub paths: Vec<ReasoningPath>,
    pub max_len: usize,
}

impl ExpertPathSet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn origins(&self) -> Vec<EntityId> {
        self.paths.iter().map(|p| p.origin).collect()
    }
}

type Parents = HashMap<EntityId, Option<(EntityId, RelationId)>>;

fn expand(
    kg: &KnowledgeGraph,
    frontier: &[EntityId],
    parents: &mut Parents,
    forward: bool,
) -> Vec<EntityId> {
    let mut next = Vec::new();
    for &u in frontier {
        let adj = if forward { kg.outgoing(u) } else { kg.incoming(u) };
        for &(r, v) in adj {
            if !parents.contains_key(&v) {
                parents.insert(v, Some((u, r)));
                next.push(v);
            }
        }
    }
    next.sort_unstable();
    next
}

/// Shortest directed path from `source` to `target` by two-sided
/// breadth-first search. Frontiers are expanded level by level (the smaller
/// one first) in ascending id order; among meeting nodes the lowest id wins.
/// Returns `None` when unreachable, when `source == target`, or when the
/// distance exceeds `max_len`.
pub fn bidirectional_shortest_path(
    kg: &KnowledgeGraph,
    source: EntityId,
    target: EntityId,
    max_len: Option<usize>,
) -> Option<ReasoningPath> {
    if source == target {
        return None;
    }
    let limit = max_len.unwrap_or(usize::MAX);
    let mut fwd: Parents = HashMap::from([(source, None)]);
    let mut bwd: Parents = HashMap::from([(target, None)]);
    let mut f_front = vec![source];
    let mut b_front = vec![target];
    let (mut f_depth, mut b_depth) = (0usize, 0usize);
    loop {
        if f_front.is_empty() || b_front.is_empty() || f_depth + b_depth >= limit {
            return None;
        }
        let meet = if f_front.len() <= b_front.len() {
            f_front = expand(kg, &f_front, &mut fwd, true);
            f_depth += 1;
            f_front.iter().copied().find(|v| bwd.contains_key(v))
        } else {
            b_front = expand(kg, &b_front, &mut bwd, false);
            b_depth += 1;
            b_front.iter().copied().find(|v| fwd.contains_key(v))
        };
        if let Some(m) = meet {
            let mut head = Vec::new();
            let mut cur = m;
            while let Some(Some((prev, r))) = fwd.get(&cur) {
                head.push((*r, cur));
                cur = *prev;
            }
            head.reverse();
            let mut cur = m;
            while let Some(Some((next, r))) = bwd.get(&cur) {
                head.push((*r, *next));
                cur = *next;
            }
            return Some(ReasoningPath {
                origin: source,
                steps: head,
            });
        }
    }
}

/// Expert path sampler configuration.
#[derive(Debug, Clone)]
pub struct PathSampling<'a> {
    pub n_paths: usize,
    pub max_len: usize,
    pub seed: u64,
    /// When set, a path is kept only if no entity on it sits in a strictly
    /// higher (more abstract) layer than its origin.
    pub layer_restriction: Option<&'a LayerAssignment>,
    /// Attempts allowed per requested path.
    pub retries_per_path: usize,
}

impl<'a> PathSampling<'a> {
    pub fn new(n_paths: usize, max_len: usize, seed: u64) -> Self {
        PathSampling {
            n_paths,
            max_len,
            seed,
            layer_restriction: None,
            retries_per_path: 100,
        }
    }

    pub fn restrict_to_layers(mut self, layers: &'a LayerAssignment) -> Self {
        self.layer_restriction = Some(layers);
        self
    }

    pub fn sample(&self, kg: &KnowledgeGraph) -> Result<ExpertPathSet, KgError> {
        let n = kg.num_entities();
        if n < 2 || kg.is_empty() {
            return Err(KgError::EmptyGraph);
        }
        let mut rng = seeded(self.seed);
        let budget = self.retries_per_path.saturating_mul(self.n_paths).max(1);
        let mut paths = Vec::with_capacity(self.n_paths);
        let mut attempts = 0;
        while paths.len() < self.n_paths {
            if attempts >= budget {
                return Err(KgError::SamplingExhausted {
                    attempts,
                    found: paths.len(),
                    wanted: self.n_paths,
                });
            }
            attempts += 1;
            let s = EntityId(rng.random_range(0..n as u32));
            let mut t = EntityId(rng.random_range(0..n as u32 - 1));
            if t >= s {
                t.0 += 1;
            }
            let Some(path) = bidirectional_shortest_path(kg, s, t, Some(self.max_len)) else {
                continue;
            };
            if let Some(layers) = self.layer_restriction {
                let top = layers.layer(s);
                if path.entities().iter().any(|&e| layers.layer(e) < top) {
                    continue;
                }
            }
            paths.push(path);
        }
        Ok(ExpertPathSet {
            paths,
            max_len: self.max_len,
        })
    }
}

/// Shortest paths between uniformly sampled ordered entity pairs, at most
/// `max_len` steps each.
pub fn sample_expert_paths(
    kg: &KnowledgeGraph,
    n_paths: usize,
    max_len: usize,
    seed: u64,
) -> Result<ExpertPathSet, KgError> {
    PathSampling::new(n_paths, max_len, seed).sample(kg)
}
