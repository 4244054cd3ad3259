//! Knowledge graphs: storage, loading, degree layering, expert path sampling
//! and server partitioning.

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

mod layers;
mod load;
mod partition;
mod paths;
mod sample;

pub use layers::{layer_by_degree, layer_for_degree, LayerAssignment};
pub use load::{load_planetoid, load_triples, parse_planetoid, parse_triples, PlanetoidLoad};
pub use sample::{degree_capped, snowball_subgraph, uniform_subgraph};
pub use partition::{dropped_edges, partition, write_partition_csv, Partition, PartitionSpec, Shard};
pub use paths::{
    bidirectional_shortest_path, sample_expert_paths, ExpertPathSet, ExplicitSemantics, PathSampling,
    ReasoningPath,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct RelationId(pub u32);

impl EntityId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: u32, relation: u32, tail: u32) -> Self {
        Triple {
            head: EntityId(head),
            relation: RelationId(relation),
            tail: EntityId(tail),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum KgError {
    #[error("I/O error reading {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("graph is empty")]
    EmptyGraph,
    #[error("triple references unknown id: {0}")]
    UnknownId(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("inconsistent feature width: row {row} has {found}, expected {expected}")]
    FeatureWidth { row: usize, found: usize, expected: usize },
    #[error("path sampling exhausted after {attempts} attempts ({found} of {wanted} paths found)")]
    SamplingExhausted { attempts: usize, found: usize, wanted: usize },
}

/// Sparse per-entity feature rows (column index, value), sorted by column.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    width: usize,
    rows: Vec<Vec<(u32, f64)>>,
}

impl Features {
    pub fn new(width: usize, rows: Vec<Vec<(u32, f64)>>) -> Result<Self, KgError> {
        for (i, row) in rows.iter().enumerate() {
            if let Some(&(c, _)) = row.iter().find(|(c, _)| *c as usize >= width) {
                return Err(KgError::FeatureWidth {
                    row: i,
                    found: c as usize + 1,
                    expected: width,
                });
            }
        }
        let rows = rows
            .into_iter()
            .map(|mut r| {
                r.sort_by_key(|&(c, _)| c);
                r
            })
            .collect();
        Ok(Features { width, rows })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, e: EntityId) -> &[(u32, f64)] {
        &self.rows[e.index()]
    }

    pub fn dense_row(&self, e: EntityId) -> Vec<f64> {
        let mut v = vec![0.0; self.width];
        for &(c, x) in self.row(e) {
            v[c as usize] = x;
        }
        v
    }

    fn select(&self, keep: &[EntityId]) -> Features {
        Features {
            width: self.width,
            rows: keep.iter().map(|e| self.rows[e.index()].clone()).collect(),
        }
    }
}

/// Directed multi-relational graph with dense ids.
///
/// Immutable after construction. Outgoing and incoming adjacency lists are
/// sorted by `(relation, neighbour)`, which the samplers rely on for
/// deterministic tie-breaking.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entity_names: Vec<String>,
    relation_names: Vec<String>,
    entity_lookup: HashMap<String, EntityId>,
    relation_lookup: HashMap<String, RelationId>,
    labels: Option<Vec<u32>>,
    label_names: Vec<String>,
    features: Option<Features>,
    triples: Vec<Triple>,
    triple_set: HashSet<Triple>,
    outgoing: Vec<Vec<(RelationId, EntityId)>>,
    incoming: Vec<Vec<(RelationId, EntityId)>>,
}

/// Incremental construction by name. Ids are handed out in first-appearance
/// order and duplicate triples are ignored.
#[derive(Debug, Default, Clone)]
pub struct GraphBuilder {
    entity_names: Vec<String>,
    relation_names: Vec<String>,
    entity_lookup: HashMap<String, EntityId>,
    relation_lookup: HashMap<String, RelationId>,
    triples: Vec<Triple>,
    triple_set: HashSet<Triple>,
    labels: Vec<Option<u32>>,
    label_names: Vec<String>,
    label_lookup: HashMap<String, u32>,
    features: Option<Features>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entity(&mut self, name: &str) -> EntityId {
        if let Some(&id) = self.entity_lookup.get(name) {
            return id;
        }
        let id = EntityId(self.entity_names.len() as u32);
        self.entity_names.push(name.to_string());
        self.entity_lookup.insert(name.to_string(), id);
        self.labels.push(None);
        id
    }

    pub fn relation(&mut self, name: &str) -> RelationId {
        if let Some(&id) = self.relation_lookup.get(name) {
            return id;
        }
        let id = RelationId(self.relation_names.len() as u32);
        self.relation_names.push(name.to_string());
        self.relation_lookup.insert(name.to_string(), id);
        id
    }

    pub fn lookup_entity(&self, name: &str) -> Option<EntityId> {
        self.entity_lookup.get(name).copied()
    }

    /// Returns `false` when the triple was already present.
    pub fn add_triple(&mut self, head: EntityId, relation: RelationId, tail: EntityId) -> bool {
        let t = Triple { head, relation, tail };
        if self.triple_set.insert(t) {
            self.triples.push(t);
            true
        } else {
            false
        }
    }

    pub fn add_named(&mut self, head: &str, relation: &str, tail: &str) -> bool {
        let h = self.entity(head);
        let r = self.relation(relation);
        let t = self.entity(tail);
        self.add_triple(h, r, t)
    }

    pub fn set_label(&mut self, e: EntityId, label: &str) {
        let next = self.label_names.len() as u32;
        let id = *self.label_lookup.entry(label.to_string()).or_insert_with(|| {
            next
        });
        if id == next {
            self.label_names.push(label.to_string());
        }
        self.labels[e.index()] = Some(id);
    }

    pub fn set_features(&mut self, features: Features) {
        self.features = Some(features);
    }

    pub fn build(self) -> Result<KnowledgeGraph, KgError> {
        let n = self.entity_names.len();
        let labels = if self.labels.iter().any(Option::is_some) {
            let mut out = Vec::with_capacity(n);
            for (i, l) in self.labels.iter().enumerate() {
                match l {
                    Some(l) => out.push(*l),
                    None => {
                        return Err(KgError::Config(format!(
                            "entity {} has no label while others do",
                            self.entity_names[i]
                        )))
                    }
                }
            }
            Some(out)
        } else {
            None
        };
        if let Some(f) = &self.features {
            if f.rows.len() != n {
                return Err(KgError::Config(format!(
                    "{} feature rows for {} entities",
                    f.rows.len(),
                    n
                )));
            }
        }
        let mut g = KnowledgeGraph {
            entity_names: self.entity_names,
            relation_names: self.relation_names,
            entity_lookup: self.entity_lookup,
            relation_lookup: self.relation_lookup,
            labels,
            label_names: self.label_names,
            features: self.features,
            triples: self.triples,
            triple_set: self.triple_set,
            outgoing: Vec::new(),
            incoming: Vec::new(),
        };
        g.index();
        Ok(g)
    }
}

impl KnowledgeGraph {
    /// Graph over anonymous ids `0..n_entities` / `0..n_relations`.
    pub fn from_triples(
        n_entities: usize,
        n_relations: usize,
        triples: impl IntoIterator<Item = Triple>,
    ) -> Result<Self, KgError> {
        let mut b = GraphBuilder::new();
        for i in 0..n_entities {
            b.entity(&format!("e{i}"));
        }
        for r in 0..n_relations {
            b.relation(&format!("r{r}"));
        }
        for t in triples {
            if t.head.index() >= n_entities || t.tail.index() >= n_entities {
                return Err(KgError::UnknownId(format!("{t:?}")));
            }
            if t.relation.index() >= n_relations {
                return Err(KgError::UnknownId(format!("{t:?}")));
            }
            b.add_triple(t.head, t.relation, t.tail);
        }
        b.build()
    }

    fn index(&mut self) {
        let n = self.entity_names.len();
        self.outgoing = vec![Vec::new(); n];
        self.incoming = vec![Vec::new(); n];
        for t in &self.triples {
            self.outgoing[t.head.index()].push((t.relation, t.tail));
            self.incoming[t.tail.index()].push((t.relation, t.head));
        }
        for adj in self.outgoing.iter_mut().chain(self.incoming.iter_mut()) {
            adj.sort_unstable();
        }
    }

    pub fn num_entities(&self) -> usize {
        self.entity_names.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relation_names.len()
    }

    pub fn num_triples(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triple_set.contains(t)
    }

    pub fn entities(&self) -> impl Iterator<Item = EntityId> + '_ {
        (0..self.entity_names.len() as u32).map(EntityId)
    }

    pub fn entity_name(&self, e: EntityId) -> &str {
        &self.entity_names[e.index()]
    }

    pub fn relation_name(&self, r: RelationId) -> &str {
        &self.relation_names[r.index()]
    }

    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.entity_lookup.get(name).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relation_lookup.get(name).copied()
    }

    pub fn outgoing(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        &self.outgoing[e.index()]
    }

    pub fn incoming(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        &self.incoming[e.index()]
    }

    /// In-degree plus out-degree.
    pub fn degree(&self, e: EntityId) -> usize {
        self.outgoing[e.index()].len() + self.incoming[e.index()].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.entities().map(|e| self.degree(e)).collect()
    }

    /// Distinct relation types on outgoing edges, ascending.
    pub fn out_relations(&self, e: EntityId) -> Vec<RelationId> {
        let mut rs: Vec<RelationId> = self.outgoing(e).iter().map(|&(r, _)| r).collect();
        rs.dedup();
        rs
    }

    /// Tails reachable from `e` through `r`, ascending.
    pub fn tails(&self, e: EntityId, r: RelationId) -> impl Iterator<Item = EntityId> + '_ {
        self.outgoing(e)
            .iter()
            .filter(move |&&(rr, _)| rr == r)
            .map(|&(_, t)| t)
    }

    /// Distinct neighbours ignoring direction and relation type, ascending.
    pub fn undirected_neighbors(&self, e: EntityId) -> Vec<EntityId> {
        let mut ns: Vec<EntityId> = self
            .outgoing(e)
            .iter()
            .chain(self.incoming(e))
            .map(|&(_, n)| n)
            .filter(|&n| n != e)
            .collect();
        ns.sort_unstable();
        ns.dedup();
        ns
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn label(&self, e: EntityId) -> Option<u32> {
        self.labels.as_ref().map(|l| l[e.index()])
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn num_labels(&self) -> usize {
        self.label_names.len()
    }

    pub fn features(&self) -> Option<&Features> {
        self.features.as_ref()
    }

    /// Subgraph induced by `keep` (triples with both endpoints kept). Local
    /// ids follow the order of `keep`; the relation vocabulary is preserved
    /// in full so per-relation model shapes stay identical across subgraphs.
    pub fn induced_subgraph(&self, keep: &[EntityId]) -> KnowledgeGraph {
        let mut local = vec![u32::MAX; self.num_entities()];
        for (i, e) in keep.iter().enumerate() {
            local[e.index()] = i as u32;
        }
        let mut b = GraphBuilder::new();
        for e in keep {
            b.entity(self.entity_name(*e));
        }
        for r in &self.relation_names {
            b.relation(r);
        }
        for t in &self.triples {
            let (h, tl) = (local[t.head.index()], local[t.tail.index()]);
            if h != u32::MAX && tl != u32::MAX {
                b.add_triple(EntityId(h), t.relation, EntityId(tl));
            }
        }
        if let Some(labels) = &self.labels {
            b.label_names = self.label_names.clone();
            b.label_lookup = self
                .label_names
                .iter()
                .enumerate()
                .map(|(i, n)| (n.clone(), i as u32))
                .collect();
            for (i, e) in keep.iter().enumerate() {
                b.labels[i] = Some(labels[e.index()]);
            }
        }
        if let Some(f) = &self.features {
            b.features = Some(f.select(keep));
        }
        let mut g = b.build().expect("subgraph of a valid graph is valid");
        // keep the full label vocabulary even if some labels vanish locally
        if self.labels.is_some() {
            g.label_names = self.label_names.clone();
        }
        g
    }

    /// Dense adjacency matrix (row = head, column = tail, value = number of
    /// relation types linking them).
    pub fn adjacency_dense(&self) -> ndarray::Array2<f64> {
        let n = self.num_entities();
        let mut a = ndarray::Array2::zeros((n, n));
        for t in &self.triples {
            a[[t.head.index(), t.tail.index()]] += 1.0;
        }
        a
    }
}
