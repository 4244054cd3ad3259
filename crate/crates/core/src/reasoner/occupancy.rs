//! Occupancy measures over `(entity, step, relation)` and the quantities
//! built from them.

use std::collections::BTreeMap;

use rand::Rng as _;

use super::imitation::{rollout, RolloutMode};
use super::policy::ActionPolicy;
use super::{ReasonerError, DEFAULT_CLIP};
use crate::codec::EmbeddingTable;
use crate::kg::{EntityId, KnowledgeGraph, ReasoningPath, RelationId};
use crate::rng::seeded;

/// Largest reachable `(entity, t)` state count the exact dynamic program
/// accepts.
pub const EXACT_STATE_LIMIT: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateAction {
    pub entity: EntityId,
    pub t: usize,
    pub relation: RelationId,
}

impl StateAction {
    pub fn new(entity: EntityId, t: usize, relation: RelationId) -> Self {
        StateAction { entity, t, relation }
    }
}

/// Probability mass of taking `relation` at state `(entity, t)`, averaged
/// over the initial distribution. Each full-length rollout contributes one
/// unit per step, so the masses of a horizon-`J` table sum to at most `J`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OccupancyTable {
    pub horizon: usize,
    pub mass: BTreeMap<StateAction, f64>,
}

impl OccupancyTable {
    pub fn new(horizon: usize) -> Self {
        OccupancyTable {
            horizon,
            mass: BTreeMap::new(),
        }
    }

    pub fn get(&self, key: &StateAction) -> f64 {
        self.mass.get(key).copied().unwrap_or(0.0)
    }

    pub fn add(&mut self, key: StateAction, m: f64) {
        *self.mass.entry(key).or_insert(0.0) += m;
    }

    pub fn total(&self) -> f64 {
        self.mass.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    /// Mass per step index.
    pub fn per_step(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.horizon];
        for (k, m) in &self.mass {
            if k.t < out.len() {
                out[k.t] += m;
            }
        }
        out
    }

    /// Summed mass of every state `(entity, t)`.
    pub fn state_mass(&self) -> BTreeMap<(EntityId, usize), f64> {
        let mut out = BTreeMap::new();
        for (k, m) in &self.mass {
            *out.entry((k.entity, k.t)).or_insert(0.0) += m;
        }
        out
    }

    fn from_paths<'a>(paths: impl IntoIterator<Item = &'a ReasoningPath>, horizon: usize) -> Result<Self, ReasonerError> {
        let mut table = OccupancyTable::new(horizon);
        let mut n = 0usize;
        for p in paths {
            n += 1;
            let mut cur = p.origin;
            for (t, &(r, e)) in p.steps.iter().enumerate().take(horizon) {
                table.add(StateAction::new(cur, t, r), 1.0);
                cur = e;
            }
        }
        if n == 0 {
            return Err(ReasonerError::Empty("path set"));
        }
        table.mass.values_mut().for_each(|m| *m /= n as f64);
        Ok(table)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OccupancyMode {
    Exact,
    MonteCarlo { rollouts: usize, seed: u64 },
}

/// Occupancy of `policy` started uniformly from `initial` (repeats count)
/// for `horizon` steps. Transitions pick a tail of the chosen relation
/// uniformly; dead ends truncate.
pub fn occupancy_measure(
    policy: &dyn ActionPolicy,
    kg: &KnowledgeGraph,
    initial: &[EntityId],
    horizon: usize,
    mode: OccupancyMode,
) -> Result<OccupancyTable, ReasonerError> {
    if initial.is_empty() {
        return Err(ReasonerError::Empty("initial entity set"));
    }
    match mode {
        OccupancyMode::Exact => exact(policy, kg, initial, horizon),
        OccupancyMode::MonteCarlo { rollouts, seed } => {
            if rollouts == 0 {
                return Err(ReasonerError::Config("monte-carlo occupancy needs at least one rollout".into()));
            }
            let mut rng = seeded(seed);
            let mut paths = Vec::with_capacity(rollouts);
            for _ in 0..rollouts {
                let origin = initial[rng.random_range(0..initial.len())];
                paths.push(rollout(policy, kg, origin, horizon, RolloutMode::Sample, &mut rng)?);
            }
            OccupancyTable::from_paths(&paths, horizon)
        }
    }
}

fn exact(
    policy: &dyn ActionPolicy,
    kg: &KnowledgeGraph,
    initial: &[EntityId],
    horizon: usize,
) -> Result<OccupancyTable, ReasonerError> {
    let mut table = OccupancyTable::new(horizon);
    let mut layer: BTreeMap<EntityId, f64> = BTreeMap::new();
    for &e in initial {
        *layer.entry(e).or_insert(0.0) += 1.0 / initial.len() as f64;
    }
    let mut states = layer.len();
    for t in 0..horizon {
        let mut next: BTreeMap<EntityId, f64> = BTreeMap::new();
        for (&e, &m) in &layer {
            let dist = match policy.distribution(e) {
                Ok(d) => d,
                Err(ReasonerError::DeadEnd(_)) => continue,
                Err(err) => return Err(err),
            };
            for (&r, &p) in dist.actions.iter().zip(&dist.probs) {
                if p == 0.0 {
                    continue;
                }
                table.add(StateAction::new(e, t, r), m * p);
                let tails: Vec<EntityId> = kg.tails(e, r).collect();
                if tails.is_empty() {
                    return Err(ReasonerError::Config(format!("{r} has no tail at {e}")));
                }
                let share = m * p / tails.len() as f64;
                for tail in tails {
                    *next.entry(tail).or_insert(0.0) += share;
                }
            }
        }
        if t + 1 < horizon {
            states += next.len();
        }
        if states > EXACT_STATE_LIMIT {
            return Err(ReasonerError::StateSpaceTooLarge {
                states,
                limit: EXACT_STATE_LIMIT,
            });
        }
        layer = next;
    }
    Ok(table)
}

/// Step frequencies of the expert paths divided by the number of paths.
pub fn expert_occupancy(paths: &[ReasoningPath], horizon: usize) -> Result<OccupancyTable, ReasonerError> {
    OccupancyTable::from_paths(paths, horizon)
}

/// Cross-entropy `Γ = Σ c_E · (−ln max(c_D, ε)) / Σ c_E` over the expert
/// support.
pub fn distance_statistic(expert: &OccupancyTable, generated: &OccupancyTable, clip: f64) -> Result<f64, ReasonerError> {
    let total = expert.total();
    if expert.is_empty() || total <= 0.0 {
        return Err(ReasonerError::Empty("expert occupancy"));
    }
    let s: f64 = expert
        .mass
        .iter()
        .map(|(k, &c)| c * -(generated.get(k).max(clip)).ln())
        .sum();
    Ok(s / total)
}

fn mean_residual(paths: &[ReasoningPath], table: &EmbeddingTable) -> Result<f64, ReasonerError> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for p in paths {
        for t in p.triples() {
            sum += table.residual_sq(&t);
            n += 1;
        }
    }
    if n == 0 {
        return Err(ReasonerError::Empty("path step set"));
    }
    Ok(sum / n as f64)
}

/// Mean translation residual over expert steps minus the same mean over
/// generated steps.
pub fn distance_energy(expert: &[ReasoningPath], generated: &[ReasoningPath], table: &EmbeddingTable) -> Result<f64, ReasonerError> {
    Ok(mean_residual(expert, table)? - mean_residual(generated, table)?)
}

/// `H = Σ c(s,a) · (−ln(c(s,a) / Σ_a' c(s,a')))`.
pub fn causal_entropy(occ: &OccupancyTable) -> f64 {
    let states = occ.state_mass();
    occ.mass
        .iter()
        .filter(|(_, &c)| c > 0.0)
        .map(|(k, &c)| c * -(c / states[&(k.entity, k.t)]).ln())
        .sum()
}

/// `F = −H(c_D) + λ Γ(c_E, c_D)`.
pub fn loss_f(generated: &OccupancyTable, expert: &OccupancyTable, lambda: f64) -> Result<f64, ReasonerError> {
    let gamma = if lambda == 0.0 {
        0.0
    } else {
        distance_statistic(expert, generated, DEFAULT_CLIP)?
    };
    Ok(-causal_entropy(generated) + lambda * gamma)
}

/// `½ Σ |a − b| / J` for tables over the same horizon.
pub fn total_variation(a: &OccupancyTable, b: &OccupancyTable) -> Result<f64, ReasonerError> {
    if a.horizon != b.horizon || a.horizon == 0 {
        return Err(ReasonerError::Shape(format!(
            "occupancy horizons {} and {}",
            a.horizon, b.horizon
        )));
    }
    let mut keys: Vec<&StateAction> = a.mass.keys().chain(b.mass.keys()).collect();
    keys.sort();
    keys.dedup();
    let s: f64 = keys.into_iter().map(|k| (a.get(k) - b.get(k)).abs()).sum();
    Ok(0.5 * s / a.horizon as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::Triple;
    use crate::reasoner::policy::{ActionDist, TabularPolicy};

    fn chain() -> KnowledgeGraph {
        KnowledgeGraph::from_triples(
            4,
            2,
            [Triple::new(0, 0, 1), Triple::new(1, 1, 2), Triple::new(2, 0, 3), Triple::new(0, 1, 3)],
        )
        .unwrap()
    }

    fn dist(pairs: &[(u32, f64)]) -> ActionDist {
        ActionDist {
            actions: pairs.iter().map(|p| RelationId(p.0)).collect(),
            probs: pairs.iter().map(|p| p.1).collect(),
        }
    }

    fn stochastic() -> (KnowledgeGraph, TabularPolicy) {
        let kg = KnowledgeGraph::from_triples(
            4,
            2,
            [
                Triple::new(0, 0, 1),
                Triple::new(0, 0, 2),
                Triple::new(0, 1, 3),
                Triple::new(1, 0, 2),
                Triple::new(1, 1, 0),
                Triple::new(2, 1, 3),
                Triple::new(3, 0, 0),
                Triple::new(3, 1, 1),
            ],
        )
        .unwrap();
        let mut p = TabularPolicy::default();
        p.table.insert(EntityId(0), dist(&[(0, 0.7), (1, 0.3)]));
        p.table.insert(EntityId(1), dist(&[(0, 0.4), (1, 0.6)]));
        p.table.insert(EntityId(2), dist(&[(1, 1.0)]));
        p.table.insert(EntityId(3), dist(&[(0, 0.5), (1, 0.5)]));
        (kg, p)
    }

    #[test]
    fn deterministic_chain_occupancy() {
        let kg = chain();
        let pol = TabularPolicy::deterministic([
            (EntityId(0), RelationId(0)),
            (EntityId(1), RelationId(1)),
            (EntityId(2), RelationId(0)),
        ]);
        let occ = occupancy_measure(&pol, &kg, &[EntityId(0)], 3, OccupancyMode::Exact).unwrap();
        let expected: BTreeMap<_, _> = [
            (StateAction::new(EntityId(0), 0, RelationId(0)), 1.0),
            (StateAction::new(EntityId(1), 1, RelationId(1)), 1.0),
            (StateAction::new(EntityId(2), 2, RelationId(0)), 1.0),
        ]
        .into();
        assert_eq!(occ.mass, expected);
        assert_eq!(causal_entropy(&occ), 0.0);
    }

    #[test]
    fn exact_masses_sum_to_horizon() {
        let (kg, p) = stochastic();
        for j in 1..6 {
            let occ = occupancy_measure(&p, &kg, &[EntityId(0), EntityId(3)], j, OccupancyMode::Exact).unwrap();
            assert!((occ.total() - j as f64).abs() < 1e-9);
            assert!(occ.per_step().iter().all(|m| (m - 1.0).abs() < 1e-9));
            assert!(occ.mass.values().all(|&m| (0.0..=1.0).contains(&m)));
        }
    }

    #[test]
    fn monte_carlo_matches_dp() {
        let (kg, p) = stochastic();
        let init = [EntityId(0), EntityId(1)];
        let exact = occupancy_measure(&p, &kg, &init, 4, OccupancyMode::Exact).unwrap();
        let mc = occupancy_measure(&p, &kg, &init, 4, OccupancyMode::MonteCarlo { rollouts: 100_000, seed: 3 }).unwrap();
        let tv = total_variation(&exact, &mc).unwrap();
        assert!(tv < 0.01, "tv {tv}");
    }

    #[test]
    fn replayed_expert_matches_counts() {
        let paths = vec![
            ReasoningPath {
                origin: EntityId(0),
                steps: vec![(RelationId(0), EntityId(1)), (RelationId(1), EntityId(2))],
            },
            ReasoningPath {
                origin: EntityId(0),
                steps: vec![(RelationId(1), EntityId(3))],
            },
        ];
        let occ = expert_occupancy(&paths, 2).unwrap();
        assert_eq!(occ.get(&StateAction::new(EntityId(0), 0, RelationId(0))), 0.5);
        assert_eq!(occ.get(&StateAction::new(EntityId(0), 0, RelationId(1))), 0.5);
        assert_eq!(occ.get(&StateAction::new(EntityId(1), 1, RelationId(1))), 0.5);
        assert_eq!(occ.mass.len(), 3);
    }

    #[test]
    fn oversized_exact_space_errors() {
        let n = 20_001u32;
        let kg = KnowledgeGraph::from_triples(n as usize, 1, (0..n).map(|i| Triple::new(i, 0, (i + 1) % n))).unwrap();
        let pol = TabularPolicy::deterministic((0..n).map(|i| (EntityId(i), RelationId(0))));
        let init: Vec<EntityId> = (0..n).map(EntityId).collect();
        let err = occupancy_measure(&pol, &kg, &init, 2, OccupancyMode::Exact).unwrap_err();
        assert!(matches!(err, ReasonerError::StateSpaceTooLarge { .. }));
    }

    fn single_step(pairs: &[(u32, f64)]) -> OccupancyTable {
        let mut t = OccupancyTable::new(1);
        for &(r, m) in pairs {
            t.add(StateAction::new(EntityId(0), 0, RelationId(r)), m);
        }
        t
    }

    #[test]
    fn distance_statistic_hand_values() {
        let det = single_step(&[(0, 1.0)]);
        assert_eq!(distance_statistic(&det, &det, DEFAULT_CLIP).unwrap(), 0.0);
        let half = single_step(&[(0, 0.5), (1, 0.5)]);
        assert!((distance_statistic(&half, &half, DEFAULT_CLIP).unwrap() - 2f64.ln()).abs() < 1e-15);
        let uni = single_step(&[(0, 0.25), (1, 0.25), (2, 0.25), (3, 0.25)]);
        assert!((distance_statistic(&half, &uni, DEFAULT_CLIP).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert!(distance_statistic(&OccupancyTable::new(1), &uni, DEFAULT_CLIP).is_err());
    }

    #[test]
    fn causal_entropy_hand_values() {
        let uni = single_step(&[(0, 0.25), (1, 0.25), (2, 0.25), (3, 0.25)]);
        assert!((causal_entropy(&uni) - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn loss_f_degenerate_cases() {
        let uni = single_step(&[(0, 0.5), (1, 0.5)]);
        let det = single_step(&[(0, 1.0)]);
        assert_eq!(loss_f(&uni, &det, 0.0).unwrap(), -causal_entropy(&uni));
        assert_eq!(loss_f(&det, &det, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn energy_distance_hand_values() {
        let mut table = EmbeddingTable::zeros(3, 1, 2);
        table.entity_mut(EntityId(1)).copy_from_slice(&[1.0, 0.0]);
        table.entity_mut(EntityId(2)).copy_from_slice(&[0.5, 0.2]);
        table.relation_mut(RelationId(0)).copy_from_slice(&[1.0, 0.0]);
        let consistent = vec![ReasoningPath {
            origin: EntityId(0),
            steps: vec![(RelationId(0), EntityId(1))],
        }];
        let off = vec![ReasoningPath {
            origin: EntityId(0),
            steps: vec![(RelationId(0), EntityId(2))],
        }];
        assert_eq!(distance_energy(&consistent, &consistent, &table).unwrap(), 0.0);
        // residual (1,0)-(0.5,0.2) = (0.5,-0.2): 0.25 + 0.04
        let d = distance_energy(&consistent, &off, &table).unwrap();
        assert!((d + 0.29).abs() < 1e-12);
        assert!(distance_energy(&[], &off, &table).is_err());
    }

    #[test]
    fn total_variation_requires_matching_horizon() {
        assert!(total_variation(&OccupancyTable::new(1), &OccupancyTable::new(2)).is_err());
        let a = single_step(&[(0, 1.0)]);
        let b = single_step(&[(1, 1.0)]);
        assert_eq!(total_variation(&a, &b).unwrap(), 1.0);
    }
}
