//! Seeded synthetic graphs: small hand-shaped toys for tests and larger
//! generators standing in for the public benchmark files when those are not
//! on disk.

use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::Distribution as _;

use crate::kg::{EntityId, KnowledgeGraph, ReasoningPath, RelationId, Triple};
use crate::rng::{seeded, Rng};

/// Eight entities, three relations, bipartite between origins `0..4` and
/// partners `4..8`; every `(entity, relation)` has exactly one tail. The
/// expert takes `r0` from origin `i` to partner `4 + i` and returns with
/// `r1`.
pub fn imitation_toy() -> (KnowledgeGraph, Vec<ReasoningPath>) {
    let mut triples = Vec::new();
    for i in 0..4u32 {
        let mid = 4 + i;
        triples.push(Triple::new(i, 0, mid));
        triples.push(Triple::new(i, 1, 4 + (i + 1) % 4));
        triples.push(Triple::new(i, 2, 4 + (i + 2) % 4));
        triples.push(Triple::new(mid, 0, (i + 1) % 4));
        triples.push(Triple::new(mid, 1, i));
        triples.push(Triple::new(mid, 2, (i + 2) % 4));
    }
    let kg = KnowledgeGraph::from_triples(8, 3, triples).expect("toy triples are valid");
    let experts = (0..4u32)
        .map(|i| ReasoningPath {
            origin: EntityId(i),
            steps: vec![(RelationId(0), EntityId(4 + i)), (RelationId(1), EntityId(i))],
        })
        .collect();
    (kg, experts)
}

/// Shape of a typed, heavy-tailed knowledge graph.
///
/// Every entity has a type and a hidden position in `latent_dim` dimensions.
/// Each relation links one head type to one tail type and carries a hidden
/// translation. A triple picks a head by Zipf popularity, draws `candidates`
/// popular entities of the tail type and keeps the one nearest to the
/// translated head, so relations are translation-like and popular entities
/// collect most of the edges.
#[derive(Debug, Clone, PartialEq)]
pub struct FbLikeSpec {
    pub entities: usize,
    pub relations: usize,
    pub triples: usize,
    pub types: usize,
    pub latent_dim: usize,
    pub candidates: usize,
    pub zipf: f64,
    pub seed: u64,
}

impl Default for FbLikeSpec {
    /// FB15K-237 training split sizes.
    fn default() -> Self {
        FbLikeSpec {
            entities: 14_541,
            relations: 237,
            triples: 272_115,
            types: 12,
            latent_dim: 8,
            candidates: 32,
            zipf: 1.0,
            seed: 0,
        }
    }
}

/// Cumulative weights for inverse-CDF draws.
struct Cdf {
    items: Vec<u32>,
    cum: Vec<f64>,
}

impl Cdf {
    fn new(items: Vec<u32>, weight: impl Fn(u32) -> f64) -> Self {
        let mut acc = 0.0;
        let cum = items
            .iter()
            .map(|&i| {
                acc += weight(i);
                acc
            })
            .collect();
        Cdf { items, cum }
    }

    fn draw(&self, rng: &mut Rng) -> Option<u32> {
        let total = *self.cum.last()?;
        let u = rng.random::<f64>() * total;
        let i = self.cum.partition_point(|&c| c <= u).min(self.items.len() - 1);
        Some(self.items[i])
    }
}

/// Draws distinct triples until `spec.triples` are found or `20×` that many
/// draws are spent.
pub fn fb_like(spec: &FbLikeSpec) -> KnowledgeGraph {
    assert!(spec.entities >= 2 && spec.relations >= 1 && spec.types >= 1);
    assert!(spec.latent_dim >= 1 && spec.candidates >= 1);
    let mut rng = seeded(spec.seed);
    let n = spec.entities;
    let k = spec.latent_dim;
    let normal = rand_distr::Normal::new(0.0, 1.0 / (k as f64).sqrt()).expect("finite scale");
    let kind: Vec<usize> = (0..n).map(|_| rng.random_range(0..spec.types)).collect();
    let pos: Vec<f64> = (0..n * k).map(|_| normal.sample(&mut rng)).collect();
    let mut rank: Vec<u32> = (1..=n as u32).collect();
    rank.shuffle(&mut rng);
    let weight = |e: u32| (rank[e as usize] as f64).powf(-spec.zipf);
    let mut by_type = vec![Vec::new(); spec.types];
    for (e, &t) in kind.iter().enumerate() {
        by_type[t].push(e as u32);
    }
    let type_cdf: Vec<Cdf> = by_type.into_iter().map(|v| Cdf::new(v, weight)).collect();
    struct Rel {
        head: usize,
        tail: usize,
        shift: Vec<f64>,
    }
    let rels: Vec<Rel> = (0..spec.relations)
        .map(|_| Rel {
            head: rng.random_range(0..spec.types),
            tail: rng.random_range(0..spec.types),
            shift: (0..k).map(|_| normal.sample(&mut rng)).collect(),
        })
        .collect();
    let rel_cdf = Cdf::new((0..spec.relations as u32).collect(), |r| 1.0 / (r as f64 + 2.0));
    let mut b = crate::kg::GraphBuilder::new();
    for e in 0..n {
        b.entity(&format!("/m/{e:05x}"));
    }
    for r in 0..spec.relations {
        b.relation(&format!("/rel/{r}"));
    }
    let mut count = 0;
    let budget = spec.triples.saturating_mul(20);
    let mut target = vec![0.0; k];
    for _ in 0..budget {
        if count == spec.triples {
            break;
        }
        let r = rel_cdf.draw(&mut rng).expect("relations exist");
        let rel = &rels[r as usize];
        let Some(h) = type_cdf[rel.head].draw(&mut rng) else { continue };
        let hp = &pos[h as usize * k..(h as usize + 1) * k];
        target.iter_mut().zip(hp.iter().zip(&rel.shift)).for_each(|(t, (a, b))| *t = a + b);
        let mut best: Option<(f64, u32)> = None;
        for _ in 0..spec.candidates {
            let c = type_cdf[rel.tail].draw(&mut rng).expect("type is non-empty");
            let cp = &pos[c as usize * k..(c as usize + 1) * k];
            let d: f64 = target.iter().zip(cp).map(|(a, b)| (a - b) * (a - b)).sum();
            if c != h && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, c));
            }
        }
        let Some((_, t)) = best else { continue };
        if b.add_triple(EntityId(h), RelationId(r), EntityId(t)) {
            count += 1;
        }
    }
    b.build().expect("generated graph is consistent")
}

/// Writes `head<TAB>relation<TAB>tail` lines.
pub fn write_triples<W: Write>(kg: &KnowledgeGraph, mut out: W) -> io::Result<()> {
    for t in kg.triples() {
        writeln!(
            out,
            "{}\t{}\t{}",
            kg.entity_name(t.head),
            kg.relation_name(t.relation),
            kg.entity_name(t.tail)
        )?;
    }
    Ok(())
}

/// Shape of a citation graph with bag-of-words features.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanetoidSpec {
    pub nodes: usize,
    pub classes: usize,
    pub features: usize,
    pub edges: usize,
    /// Probability that a citation stays within the citing paper's class.
    pub homophily: f64,
    /// Words per paper.
    pub words: usize,
    /// Probability that a word comes from the paper's class vocabulary.
    pub topical: f64,
    pub seed: u64,
}

impl PlanetoidSpec {
    /// Cora sizes.
    pub fn cora(seed: u64) -> Self {
        PlanetoidSpec {
            nodes: 2708,
            classes: 7,
            features: 1433,
            edges: 5429,
            homophily: 0.81,
            words: 18,
            topical: 0.25,
            seed,
        }
    }

    /// Citeseer sizes.
    pub fn citeseer(seed: u64) -> Self {
        PlanetoidSpec {
            nodes: 3327,
            classes: 6,
            features: 3703,
            edges: 4732,
            homophily: 0.74,
            words: 32,
            topical: 0.2,
            seed,
        }
    }
}

/// Raw `.content` and `.cites` text for a synthetic citation graph.
pub struct PlanetoidText {
    pub content: String,
    pub cites: String,
}

pub fn planetoid_like(spec: &PlanetoidSpec) -> PlanetoidText {
    use std::fmt::Write as _;
    let mut rng = seeded(spec.seed);
    let labels: Vec<usize> = (0..spec.nodes).map(|_| rng.random_range(0..spec.classes)).collect();
    // each class owns a contiguous slice of the vocabulary
    let span = spec.features / spec.classes;
    let mut members = vec![Vec::new(); spec.classes];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    let mut content = String::new();
    for i in 0..spec.nodes {
        let mut words = vec![false; spec.features];
        for _ in 0..spec.words {
            let w = if rng.random::<f64>() < spec.topical {
                labels[i] * span + rng.random_range(0..span)
            } else {
                rng.random_range(0..spec.features)
            };
            words[w] = true;
        }
        write!(content, "p{i}").unwrap();
        for w in words {
            content.push_str(if w { "\t1" } else { "\t0" });
        }
        writeln!(content, "\tclass_{}", labels[i]).unwrap();
    }
    let mut seen = std::collections::HashSet::new();
    let mut cites = String::new();
    let mut attempts = 0;
    while seen.len() < spec.edges && attempts < spec.edges * 50 {
        attempts += 1;
        let citing = rng.random_range(0..spec.nodes);
        let pool = if rng.random::<f64>() < spec.homophily {
            &members[labels[citing]]
        } else {
            &members[rng.random_range(0..spec.classes)]
        };
        let cited = pool[rng.random_range(0..pool.len())];
        if cited != citing && seen.insert((cited.min(citing), cited.max(citing))) {
            writeln!(cites, "p{cited}\tp{citing}").unwrap();
        }
    }
    PlanetoidText { content, cites }
}
