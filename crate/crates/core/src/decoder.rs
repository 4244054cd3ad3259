//! Symbol recovery at the receiver: nearest-codeword decoding, path
//! extension from a received head, reasoning-assisted recovery and symbol
//! error rates.

use std::io::{self, Write};

use thiserror::Error;

use crate::channel::{Signal, SymbolKind};
use crate::codec::EmbeddingTable;
use crate::kg::{EntityId, KnowledgeGraph, LayerAssignment, ReasoningPath, RelationId};
use crate::reasoner::{ActionPolicy, ReasonerError};

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error("channel gain estimate is zero")]
    ZeroGain,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty codebook")]
    EmptyCodebook,
    #[error("symbol {index} has {found} samples, codebook width is {expected}")]
    SymbolWidth { index: usize, found: usize, expected: usize },
    #[error("link refers to symbol {0}, which is not an entity symbol")]
    BadLink(usize),
    #[error("blend must lie in [0, 1], got {0}")]
    Blend(f64),
    #[error(transparent)]
    Reasoner(#[from] ReasonerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Hard,
    Soft,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderConfig {
    pub mode: DecodeMode,
    pub reasoning_assist: bool,
    /// Weight of the received-signal distance against translation
    /// consistency.
    pub alpha: f64,
    /// Use the true fading coefficient instead of a pilot estimate.
    pub known_g: bool,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            mode: DecodeMode::Hard,
            reasoning_assist: true,
            alpha: 0.5,
            known_g: true,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<(), DecodeError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(DecodeError::Blend(self.alpha));
        }
        Ok(())
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Candidate entities for one symbol.
#[derive(Debug, Clone, Copy)]
enum Candidates<'a> {
    All(usize),
    Subset(&'a [EntityId]),
}

impl Candidates<'_> {
    fn iter(&self) -> Box<dyn Iterator<Item = EntityId> + '_> {
        match self {
            Candidates::All(n) => Box::new((0..*n as u32).map(EntityId)),
            Candidates::Subset(s) => Box::new(s.iter().copied()),
        }
    }
}

/// Per-layer member lists used when the receiver knows each symbol's
/// abstraction layer and searches only that layer's constellation.
#[derive(Debug, Clone)]
pub struct LayerCodebooks<'a> {
    layers: &'a LayerAssignment,
    members: Vec<Vec<EntityId>>,
}

impl<'a> LayerCodebooks<'a> {
    pub fn new(layers: &'a LayerAssignment) -> Self {
        let members = (1..=layers.num_layers() as u8).map(|l| layers.members(l)).collect();
        LayerCodebooks { layers, members }
    }

    fn for_entity(&self, e: EntityId) -> &[EntityId] {
        &self.members[self.layers.layer(e) as usize - 1]
    }
}

fn entity_candidates<'a>(kind: SymbolKind, table: &EmbeddingTable, books: Option<&'a LayerCodebooks<'_>>) -> Candidates<'a> {
    match (kind, books) {
        (SymbolKind::Entity(e), Some(b)) => Candidates::Subset(b.for_entity(e)),
        _ => Candidates::All(table.num_entities()),
    }
}

/// Lowest-id argmin of `cost` over the candidates.
fn argmin(cands: Candidates<'_>, mut cost: impl FnMut(EntityId) -> f64) -> (EntityId, f64) {
    let mut best = (EntityId(u32::MAX), f64::INFINITY);
    for e in cands.iter() {
        let c = cost(e);
        if c < best.1 || (c == best.1 && e < best.0) {
            best = (e, c);
        }
    }
    best
}

fn equalised(signal: &Signal, i: usize, gain: f64) -> Vec<f64> {
    signal.symbol_samples(i).iter().map(|x| x / gain).collect()
}

fn check(signal: &Signal, table: &EmbeddingTable, gain: f64) -> Result<(), DecodeError> {
    if gain == 0.0 {
        return Err(DecodeError::ZeroGain);
    }
    if table.num_entities() == 0 {
        return Err(DecodeError::EmptyCodebook);
    }
    for (index, s) in signal.symbols.iter().enumerate() {
        if s.len != table.dim() {
            return Err(DecodeError::SymbolWidth {
                index,
                found: s.len,
                expected: table.dim(),
            });
        }
    }
    Ok(())
}

fn decode_relation(y: &[f64], table: &EmbeddingTable) -> RelationId {
    let mut best = (RelationId(0), f64::INFINITY);
    for r in 0..table.num_relations() as u32 {
        let c = sq_dist(y, table.relation(RelationId(r)));
        if c < best.1 {
            best = (RelationId(r), c);
        }
    }
    best.0
}

fn hard_inner(
    received: &Signal,
    table: &EmbeddingTable,
    gain: f64,
    books: Option<&LayerCodebooks<'_>>,
) -> Result<Vec<(SymbolKind, f64)>, DecodeError> {
    check(received, table, gain)?;
    Ok((0..received.symbols.len())
        .map(|i| {
            let y = equalised(received, i, gain);
            match received.symbols[i].kind {
                SymbolKind::Relation(_) => (SymbolKind::Relation(decode_relation(&y, table)), 0.0),
                kind => {
                    let (e, d) = argmin(entity_candidates(kind, table, books), |e| sq_dist(&y, table.entity(e)));
                    (SymbolKind::Entity(e), d)
                }
            }
        })
        .collect())
}

/// Nearest codeword per symbol after dividing by `gain`; ties go to the
/// lowest id. Relation symbols are decoded against the relation codebook.
pub fn hard_decode(received: &Signal, table: &EmbeddingTable, gain: f64) -> Result<Vec<SymbolKind>, DecodeError> {
    Ok(hard_inner(received, table, gain, None)?.into_iter().map(|x| x.0).collect())
}

/// As [`hard_decode`], searching only the constellation of each entity
/// symbol's own layer.
pub fn hard_decode_layered(
    received: &Signal,
    table: &EmbeddingTable,
    gain: f64,
    books: &LayerCodebooks<'_>,
) -> Result<Vec<SymbolKind>, DecodeError> {
    Ok(hard_inner(received, table, gain, Some(books))?.into_iter().map(|x| x.0).collect())
}

/// Relation candidates for the consistency term between two linked
/// symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelationHint {
    /// The relation is side information.
    Known(RelationId),
    /// Any relation the decoded neighbour has on the matching side in the
    /// graph.
    Incident,
    /// Every relation type.
    All,
}

/// `head --r--> tail` between two entity symbols of one message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Link {
    pub head: usize,
    pub tail: usize,
    pub hint: RelationHint,
}

/// Links between consecutive entity symbols of a path sent as entities
/// only. With `known_relations` the path's relations are side
/// information, otherwise neighbours' incident relations are scanned.
pub fn path_links(path: &ReasoningPath, known_relations: bool) -> Vec<Link> {
    path.steps
        .iter()
        .enumerate()
        .map(|(i, &(r, _))| Link {
            head: i,
            tail: i + 1,
            hint: if known_relations {
                RelationHint::Known(r)
            } else {
                RelationHint::Incident
            },
        })
        .collect()
}

/// Blend that weights each term by the inverse of its typical size: the
/// channel term grows like `dim·σ_n²`, the consistency term like the mean
/// training residual.
pub fn noise_matched_alpha(mean_residual: f64, dim: usize, noise_var: f64) -> f64 {
    let channel = dim as f64 * noise_var;
    if mean_residual + channel <= 0.0 {
        return 1.0;
    }
    mean_residual / (mean_residual + channel)
}

/// Context for [`recover_with_reasoning`].
#[derive(Debug, Clone, Copy)]
pub struct ReasoningContext<'a> {
    /// Needed for [`RelationHint::Incident`]; without it the hint widens to
    /// every relation.
    pub kg: Option<&'a KnowledgeGraph>,
    pub books: Option<&'a LayerCodebooks<'a>>,
    pub alpha: f64,
}

fn relation_options(hint: RelationHint, kg: Option<&KnowledgeGraph>, neighbour: EntityId, neighbour_is_head: bool, n_rel: usize) -> Vec<RelationId> {
    match (hint, kg) {
        (RelationHint::Known(r), _) => vec![r],
        (RelationHint::Incident, Some(kg)) => {
            let adj = if neighbour_is_head {
                kg.outgoing(neighbour)
            } else {
                kg.incoming(neighbour)
            };
            let mut rs: Vec<RelationId> = adj.iter().map(|&(r, _)| r).collect();
            rs.dedup();
            rs
        }
        _ => (0..n_rel as u32).map(RelationId).collect(),
    }
}

/// Decodes entity symbols in ascending nearest-codeword distance. Each
/// candidate `e` is scored `α‖y/g − ẽ‖² + (1 − α) min ‖ñ + r̃ − ẽ‖²` (or
/// `‖ẽ + r̃ − ñ‖²` when `e` is the head), the minimum running over linked
/// symbols already decoded and their candidate relations. A symbol with no
/// decoded neighbour falls back to the nearest codeword.
pub fn recover_with_reasoning(
    received: &Signal,
    table: &EmbeddingTable,
    gain: f64,
    links: &[Link],
    ctx: &ReasoningContext<'_>,
) -> Result<Vec<SymbolKind>, DecodeError> {
    if !(0.0..=1.0).contains(&ctx.alpha) {
        return Err(DecodeError::Blend(ctx.alpha));
    }
    let first = hard_inner(received, table, gain, ctx.books)?;
    let n = first.len();
    for l in links {
        for idx in [l.head, l.tail] {
            if idx >= n || !matches!(received.symbols[idx].kind, SymbolKind::Entity(_)) {
                return Err(DecodeError::BadLink(idx));
            }
        }
    }
    let mut out: Vec<SymbolKind> = first.iter().map(|x| x.0).collect();
    if ctx.alpha == 1.0 {
        return Ok(out);
    }
    let mut order: Vec<usize> = (0..n)
        .filter(|&i| matches!(received.symbols[i].kind, SymbolKind::Entity(_)))
        .collect();
    order.sort_by(|&a, &b| first[a].1.total_cmp(&first[b].1).then(a.cmp(&b)));
    let mut done = vec![false; n];
    for i in order {
        // ñ + r̃ for a head neighbour, ñ − r̃ for a tail neighbour
        let mut targets: Vec<Vec<f64>> = Vec::new();
        for l in links {
            let (other, neighbour_is_head) = if l.tail == i {
                (l.head, true)
            } else if l.head == i {
                (l.tail, false)
            } else {
                continue;
            };
            if !done[other] {
                continue;
            }
            let SymbolKind::Entity(nb) = out[other] else {
                continue;
            };
            let nv = table.entity(nb);
            for r in relation_options(l.hint, ctx.kg, nb, neighbour_is_head, table.num_relations()) {
                let rv = table.relation(r);
                let sign = if neighbour_is_head { 1.0 } else { -1.0 };
                targets.push(nv.iter().zip(rv).map(|(a, b)| a + sign * b).collect());
            }
        }
        if !targets.is_empty() {
            let y = equalised(received, i, gain);
            let cands = entity_candidates(received.symbols[i].kind, table, ctx.books);
            let (e, _) = argmin(cands, |e| {
                let v = table.entity(e);
                let cons = targets.iter().map(|t| sq_dist(t, v)).fold(f64::INFINITY, f64::min);
                ctx.alpha * sq_dist(&y, v) + (1.0 - ctx.alpha) * cons
            });
            out[i] = SymbolKind::Entity(e);
        }
        done[i] = true;
    }
    Ok(out)
}

/// Path extended from a received head by following a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftPath {
    /// `p̂ = ŵ + Σ r̃_j`.
    pub embedding: Vec<f64>,
    pub relations: Vec<RelationId>,
    /// Nearest entity to `p̂` before each step and after the last one.
    pub states: Vec<EntityId>,
    /// Stopped before `max_len` at an entity without actions.
    pub truncated: bool,
}

impl SoftPath {
    pub fn final_entity(&self) -> EntityId {
        *self.states.last().expect("at least the head state")
    }
}

fn nearest_entity(v: &[f64], table: &EmbeddingTable) -> EntityId {
    argmin(Candidates::All(table.num_entities()), |e| sq_dist(v, table.entity(e))).0
}

/// Extends `head` (already equalised) for up to `max_len` steps, taking the
/// policy's greedy action at the entity nearest to the running sum.
pub fn soft_decode_path(
    head: &[f64],
    policy: &dyn ActionPolicy,
    table: &EmbeddingTable,
    max_len: usize,
) -> Result<SoftPath, DecodeError> {
    if table.num_entities() == 0 {
        return Err(DecodeError::EmptyCodebook);
    }
    if head.len() != table.dim() {
        return Err(DecodeError::LengthMismatch(head.len(), table.dim()));
    }
    let mut p = head.to_vec();
    let mut relations = Vec::new();
    let mut states = vec![nearest_entity(&p, table)];
    let mut truncated = false;
    for _ in 0..max_len {
        let state = *states.last().expect("non-empty");
        let dist = match policy.distribution(state) {
            Ok(d) => d,
            Err(ReasonerError::DeadEnd(_)) => {
                truncated = true;
                break;
            }
            Err(e) => return Err(e.into()),
        };
        let r = dist.greedy();
        p.iter_mut().zip(table.relation(r)).for_each(|(a, b)| *a += b);
        relations.push(r);
        states.push(nearest_entity(&p, table));
    }
    Ok(SoftPath {
        embedding: p,
        relations,
        states,
        truncated,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub symbols: usize,
    pub errors: usize,
}

impl Tally {
    pub fn ser(&self) -> f64 {
        if self.symbols == 0 {
            f64::NAN
        } else {
            self.errors as f64 / self.symbols as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        1.0 - self.ser()
    }

    fn add(&mut self, other: Tally) {
        self.symbols += other.symbols;
        self.errors += other.errors;
    }
}

/// Entity symbol errors per abstraction layer (index 0 is layer 1).
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeReport {
    pub decoded: Vec<EntityId>,
    pub per_layer: Vec<Tally>,
    pub overall: Tally,
}

impl DecodeReport {
    pub fn empty(num_layers: usize) -> Self {
        DecodeReport {
            decoded: Vec::new(),
            per_layer: vec![Tally::default(); num_layers],
            overall: Tally::default(),
        }
    }

    pub fn ser(&self, layer: u8) -> f64 {
        self.per_layer[layer as usize - 1].ser()
    }

    pub fn merge(&mut self, other: &DecodeReport) {
        self.decoded.extend_from_slice(&other.decoded);
        for (a, b) in self.per_layer.iter_mut().zip(&other.per_layer) {
            a.add(*b);
        }
        self.overall.add(other.overall);
    }
}

/// Tallies errors by the layer of the true entity.
pub fn symbol_error_rate(decoded: &[EntityId], truth: &[EntityId], layers: &LayerAssignment) -> Result<DecodeReport, DecodeError> {
    if decoded.len() != truth.len() {
        return Err(DecodeError::LengthMismatch(decoded.len(), truth.len()));
    }
    let mut report = DecodeReport::empty(layers.num_layers());
    for (&d, &t) in decoded.iter().zip(truth) {
        let tally = Tally {
            symbols: 1,
            errors: usize::from(d != t),
        };
        report.per_layer[layers.layer(t) as usize - 1].add(tally);
        report.overall.add(tally);
    }
    report.decoded = decoded.to_vec();
    Ok(report)
}

/// Entity ids of the entity symbols, in order.
pub fn entity_symbols(symbols: &[SymbolKind]) -> Vec<EntityId> {
    symbols
        .iter()
        .filter_map(|s| match s {
            SymbolKind::Entity(e) => Some(*e),
            SymbolKind::Relation(_) => None,
        })
        .collect()
}

/// `snr_db,layer,symbols,errors,ser`, one row per layer and an `all` row
/// per SNR point.
pub fn write_ser_csv<W: Write>(rows: &[(f64, &DecodeReport)], mut out: W) -> io::Result<()> {
    writeln!(out, "snr_db,layer,symbols,errors,ser")?;
    for (snr, report) in rows {
        for (i, t) in report.per_layer.iter().enumerate() {
            writeln!(out, "{},{},{},{},{:.10}", snr, i + 1, t.symbols, t.errors, t.ser())?;
        }
        let t = report.overall;
        writeln!(out, "{},all,{},{},{:.10}", snr, t.symbols, t.errors, t.ser())?;
    }
    Ok(())
}
