//! Translation-embedding semantic encoder.
//!
//! Entities and relations live in the same `d`-dimensional space and a true
//! triple `(h, r, t)` should satisfy `h + r ≈ t`. Training minimises the
//! margin loss
//!
//! ```text
//! Σ max{0, σ + ‖h + r − t‖² − ‖h' + r' − t'‖²}
//! ```
//!
//! over paired true / corrupted triples. The trained table is also the
//! channel constellation: a symbol is transmitted as its vector.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng as _;
use thiserror::Error;

use crate::channel::{Signal, Symbol, SymbolKind};
use crate::kg::{EntityId, ExplicitSemantics, KnowledgeGraph, ReasoningPath, RelationId, Triple};
use crate::rng::seeded;

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("{0} is not in the embedding table")]
    MissingId(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("knowledge graph has no triples")]
    EmptyGraph,
    #[error("invalid codec configuration: {0}")]
    Config(String),
    #[error("embedding csv line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("I/O: {0}")]
    Io(String),
}

/// Entity and relation vectors, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entities: Vec<f64>,
    relations: Vec<f64>,
}

impl EmbeddingTable {
    pub fn zeros(n_entities: usize, n_relations: usize, dim: usize) -> Self {
        EmbeddingTable {
            dim,
            entities: vec![0.0; n_entities * dim],
            relations: vec![0.0; n_relations * dim],
        }
    }

    /// Uniform in `[-6/√d, 6/√d]` per coordinate.
    pub fn random(n_entities: usize, n_relations: usize, dim: usize, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let bound = 6.0 / (dim as f64).sqrt();
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n * dim).map(|_| rng.random_range(-bound..=bound)).collect()
        };
        let entities = draw(n_entities);
        let relations = draw(n_relations);
        EmbeddingTable {
            dim,
            entities,
            relations,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len() / self.dim.max(1)
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len() / self.dim.max(1)
    }

    pub fn entity(&self, e: EntityId) -> &[f64] {
        &self.entities[e.index() * self.dim..(e.index() + 1) * self.dim]
    }

    pub fn relation(&self, r: RelationId) -> &[f64] {
        &self.relations[r.index() * self.dim..(r.index() + 1) * self.dim]
    }

    pub fn entity_mut(&mut self, e: EntityId) -> &mut [f64] {
        &mut self.entities[e.index() * self.dim..(e.index() + 1) * self.dim]
    }

    pub fn relation_mut(&mut self, r: RelationId) -> &mut [f64] {
        &mut self.relations[r.index() * self.dim..(r.index() + 1) * self.dim]
    }

    pub fn try_entity(&self, e: EntityId) -> Result<&[f64], CodecError> {
        if e.index() < self.num_entities() {
            Ok(self.entity(e))
        } else {
            Err(CodecError::MissingId(e.to_string()))
        }
    }

    pub fn try_relation(&self, r: RelationId) -> Result<&[f64], CodecError> {
        if r.index() < self.num_relations() {
            Ok(self.relation(r))
        } else {
            Err(CodecError::MissingId(r.to_string()))
        }
    }

    /// Flat entity matrix, `num_entities × dim`.
    pub fn entity_matrix(&self) -> &[f64] {
        &self.entities
    }

    pub fn normalize_entities(&mut self) {
        for row in self.entities.chunks_mut(self.dim) {
            let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 0.0 {
                row.iter_mut().for_each(|x| *x /= n);
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.entities.iter().chain(&self.relations).all(|x| x.is_finite())
    }

    /// Rows restricted to `keep` entities (relations kept in full).
    pub fn select_entities(&self, keep: &[EntityId]) -> EmbeddingTable {
        let mut entities = Vec::with_capacity(keep.len() * self.dim);
        for &e in keep {
            entities.extend_from_slice(self.entity(e));
        }
        EmbeddingTable {
            dim: self.dim,
            entities,
            relations: self.relations.clone(),
        }
    }

    /// `‖h + r − t‖²`.
    pub fn residual_sq(&self, t: &Triple) -> f64 {
        let (h, r, tl) = (self.entity(t.head), self.relation(t.relation), self.entity(t.tail));
        (0..self.dim).map(|i| (h[i] + r[i] - tl[i]).powi(2)).sum()
    }

    /// CSV rows `kind,id,c0,…,c{d-1}` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "kind,id")?;
        for i in 0..self.dim {
            write!(out, ",c{i}")?;
        }
        writeln!(out)?;
        for (kind, data) in [("entity", &self.entities), ("relation", &self.relations)] {
            for (i, row) in data.chunks(self.dim).enumerate() {
                write!(out, "{kind},{i}")?;
                for x in row {
                    write!(out, ",{x:.16e}")?;
                }
                writeln!(out)?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, CodecError> {
        let mut lines = input.lines().enumerate();
        let (_, header) = lines.next().ok_or(CodecError::Csv {
            line: 1,
            message: "missing header".into(),
        })?;
        let header = header.map_err(|e| CodecError::Io(e.to_string()))?;
        let dim = header.split(',').count().saturating_sub(2);
        if dim == 0 || !header.starts_with("kind,id") {
            return Err(CodecError::Csv {
                line: 1,
                message: "bad header".into(),
            });
        }
        let mut ents: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        let mut rels: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for (i, line) in lines {
            let line = line.map_err(|e| CodecError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |m: &str| CodecError::Csv {
                line: i + 1,
                message: m.to_string(),
            };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 2 {
                return Err(bad("wrong field count"));
            }
            let id: usize = fields[1].parse().map_err(|_| bad("bad id"))?;
            let vec = fields[2..]
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| bad("bad coordinate")))
                .collect::<Result<Vec<_>, _>>()?;
            let target = match fields[0] {
                "entity" => &mut ents,
                "relation" => &mut rels,
                _ => return Err(bad("kind must be entity or relation")),
            };
            if target.insert(id, vec).is_some() {
                return Err(bad("duplicate id"));
            }
        }
        let flatten = |m: BTreeMap<usize, Vec<f64>>| -> Result<Vec<f64>, CodecError> {
            if m.keys().enumerate().any(|(i, &k)| i != k) {
                return Err(CodecError::Csv {
                    line: 0,
                    message: "ids are not dense".into(),
                });
            }
            Ok(m.into_values().flatten().collect())
        };
        Ok(EmbeddingTable {
            dim,
            entities: flatten(ents)?,
            relations: flatten(rels)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodecConfig {
    pub dim: usize,
    /// Hinge margin σ.
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub negatives_per_positive: usize,
    pub seed: u64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            dim: 50,
            margin: 1.0,
            learning_rate: 0.01,
            epochs: 100,
            batch_size: 64,
            negatives_per_positive: 1,
            seed: 0,
        }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<(), CodecError> {
        if self.margin <= 0.0 || !self.margin.is_finite() {
            return Err(CodecError::Config(format!("margin must be positive, got {}", self.margin)));
        }
        if self.dim < 2 {
            return Err(CodecError::Config(format!("dim must be at least 2, got {}", self.dim)));
        }
        if self.batch_size == 0 || self.negatives_per_positive == 0 {
            return Err(CodecError::Config("batch size and negatives must be positive".into()));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(CodecError::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Positive triples paired index-by-index with corrupted ones.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleBatch {
    pub positives: Vec<Triple>,
    pub negatives: Vec<Triple>,
}

impl TripleBatch {
    pub fn pairs(&self) -> impl Iterator<Item = (&Triple, &Triple)> {
        self.positives.iter().zip(&self.negatives)
    }

    fn check(&self, table: &EmbeddingTable) -> Result<(), CodecError> {
        if self.positives.is_empty() {
            return Err(CodecError::EmptyBatch);
        }
        if self.positives.len() != self.negatives.len() {
            return Err(CodecError::Config("positives and negatives must pair up".into()));
        }
        for t in self.positives.iter().chain(&self.negatives) {
            table.try_entity(t.head)?;
            table.try_entity(t.tail)?;
            table.try_relation(t.relation)?;
        }
        Ok(())
    }
}

/// Summed hinge loss over the batch pairs.
pub fn margin_loss(batch: &TripleBatch, table: &EmbeddingTable, margin: f64) -> Result<f64, CodecError> {
    batch.check(table)?;
    Ok(batch
        .pairs()
        .map(|(p, n)| (margin + table.residual_sq(p) - table.residual_sq(n)).max(0.0))
        .sum())
}

/// Sparse gradient keyed by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradient {
    pub entities: BTreeMap<EntityId, Vec<f64>>,
    pub relations: BTreeMap<RelationId, Vec<f64>>,
}

impl Gradient {
    fn add(&mut self, dim: usize, t: &Triple, resid: &[f64], scale: f64) {
        let add = |v: &mut Vec<f64>, s: f64| {
            for i in 0..dim {
                v[i] += s * resid[i];
            }
        };
        add(self.entities.entry(t.head).or_insert_with(|| vec![0.0; dim]), scale);
        add(self.relations.entry(t.relation).or_insert_with(|| vec![0.0; dim]), scale);
        add(self.entities.entry(t.tail).or_insert_with(|| vec![0.0; dim]), -scale);
    }

    pub fn is_zero(&self) -> bool {
        self.entities.values().chain(self.relations.values()).all(|v| v.iter().all(|&x| x == 0.0))
    }

    pub fn entity(&self, e: EntityId) -> Option<&[f64]> {
        self.entities.get(&e).map(Vec::as_slice)
    }

    pub fn relation(&self, r: RelationId) -> Option<&[f64]> {
        self.relations.get(&r).map(Vec::as_slice)
    }
}

fn residual(table: &EmbeddingTable, t: &Triple) -> Vec<f64> {
    let (h, r, tl) = (table.entity(t.head), table.relation(t.relation), table.entity(t.tail));
    (0..table.dim()).map(|i| h[i] + r[i] - tl[i]).collect()
}

/// Subgradient of [`margin_loss`]; inactive hinges contribute nothing.
pub fn loss_gradient(batch: &TripleBatch, table: &EmbeddingTable, margin: f64) -> Result<Gradient, CodecError> {
    batch.check(table)?;
    let mut g = Gradient::default();
    for (p, n) in batch.pairs() {
        if margin + table.residual_sq(p) - table.residual_sq(n) <= 0.0 {
            continue;
        }
        g.add(table.dim(), p, &residual(table, p), 2.0);
        g.add(table.dim(), n, &residual(table, n), -2.0);
    }
    Ok(g)
}

/// Replaces head or tail (fair coin) with a uniform entity, retrying while
/// the corruption is a real triple.
pub fn corrupt(kg: &KnowledgeGraph, t: &Triple, rng: &mut crate::rng::Rng) -> Triple {
    let n = kg.num_entities() as u32;
    let mut c = *t;
    for _ in 0..64 {
        c = *t;
        let e = EntityId(rng.random_range(0..n));
        if rng.random::<bool>() {
            c.head = e;
        } else {
            c.tail = e;
        }
        if !kg.contains(&c) {
            return c;
        }
    }
    c
}

#[derive(Debug, Clone)]
pub struct TrainedEncoder {
    pub table: EmbeddingTable,
    /// Mean hinge loss per pair, one entry per epoch.
    pub loss_history: Vec<f64>,
}

/// Minibatch SGD on the margin loss, entity vectors renormalised to unit
/// length after every epoch.
pub fn train_encoder(kg: &KnowledgeGraph, config: &CodecConfig) -> Result<TrainedEncoder, CodecError> {
    config.validate()?;
    if kg.is_empty() {
        return Err(CodecError::EmptyGraph);
    }
    let mut table = EmbeddingTable::random(kg.num_entities(), kg.num_relations(), config.dim, config.seed);
    let mut rng = seeded(crate::rng::derive_seed(config.seed, 1));
    let mut order: Vec<Triple> = kg.triples().to_vec();
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut pairs = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let mut batch = TripleBatch {
                positives: Vec::with_capacity(chunk.len() * config.negatives_per_positive),
                negatives: Vec::with_capacity(chunk.len() * config.negatives_per_positive),
            };
            for t in chunk {
                for _ in 0..config.negatives_per_positive {
                    batch.positives.push(*t);
                    batch.negatives.push(corrupt(kg, t, &mut rng));
                }
            }
            total += margin_loss(&batch, &table, config.margin)?;
            pairs += batch.positives.len();
            let grad = loss_gradient(&batch, &table, config.margin)?;
            for (e, g) in &grad.entities {
                for (x, gi) in table.entity_mut(*e).iter_mut().zip(g) {
                    *x -= config.learning_rate * gi;
                }
            }
            for (r, g) in &grad.relations {
                for (x, gi) in table.relation_mut(*r).iter_mut().zip(g) {
                    *x -= config.learning_rate * gi;
                }
            }
        }
        table.normalize_entities();
        history.push(total / pairs as f64);
    }
    Ok(TrainedEncoder {
        table,
        loss_history: history,
    })
}

/// Something that can be laid out as a sequence of symbols.
pub trait Encode {
    fn symbols(&self) -> Vec<SymbolKind>;
}

impl Encode for ExplicitSemantics {
    /// Entities first, then relations, each in declaration order.
    fn symbols(&self) -> Vec<SymbolKind> {
        self.entities
            .iter()
            .map(|&e| SymbolKind::Entity(e))
            .chain(self.relations.iter().map(|&r| SymbolKind::Relation(r)))
            .collect()
    }
}

impl Encode for ReasoningPath {
    /// `e0, r1, e1, …` in path order.
    fn symbols(&self) -> Vec<SymbolKind> {
        let mut out = vec![SymbolKind::Entity(self.origin)];
        for &(r, e) in &self.steps {
            out.push(SymbolKind::Relation(r));
            out.push(SymbolKind::Entity(e));
        }
        out
    }
}

impl Encode for [EntityId] {
    fn symbols(&self) -> Vec<SymbolKind> {
        self.iter().map(|&e| SymbolKind::Entity(e)).collect()
    }
}

/// Concatenates the symbol vectors, `d` samples per symbol.
pub fn encode<M: Encode + ?Sized>(message: &M, table: &EmbeddingTable) -> Result<Signal, CodecError> {
    let kinds = message.symbols();
    let mut samples = Vec::with_capacity(kinds.len() * table.dim());
    let mut symbols = Vec::with_capacity(kinds.len());
    for kind in kinds {
        let v = match kind {
            SymbolKind::Entity(e) => table.try_entity(e)?,
            SymbolKind::Relation(r) => table.try_relation(r)?,
        };
        symbols.push(Symbol {
            kind,
            offset: samples.len(),
            len: v.len(),
        });
        samples.extend_from_slice(v);
    }
    Ok(Signal { samples, symbols })
}
