use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{EntityId, KnowledgeGraph};
use crate::rng::seeded;

/// Induced subgraph on at most `max_entities` entities gathered by
/// breadth-first search over undirected neighbours from random seeds.
/// Neighbour order is shuffled so the sample is not biased to low ids.
/// Returns the subgraph and the kept global ids in local order.
pub fn snowball_subgraph(kg: &KnowledgeGraph, max_entities: usize, seed: u64) -> (KnowledgeGraph, Vec<EntityId>) {
    let n = kg.num_entities();
    if max_entities >= n {
        let all: Vec<EntityId> = kg.entities().collect();
        return (kg.clone(), all);
    }
    let mut rng = seeded(seed);
    let mut taken = vec![false; n];
    let mut keep = Vec::with_capacity(max_entities);
    let mut queue = VecDeque::new();
    while keep.len() < max_entities {
        if queue.is_empty() {
            let start = loop {
                let e = rng.random_range(0..n);
                if !taken[e] {
                    break EntityId(e as u32);
                }
            };
            taken[start.index()] = true;
            queue.push_back(start);
        }
        let Some(u) = queue.pop_front() else { break };
        keep.push(u);
        let mut ns = kg.undirected_neighbors(u);
        ns.shuffle(&mut rng);
        for v in ns {
            if !taken[v.index()] && keep.len() + queue.len() < max_entities {
                taken[v.index()] = true;
                queue.push_back(v);
            }
        }
    }
    keep.sort_unstable();
    (kg.induced_subgraph(&keep), keep)
}

/// Induced subgraph on `count` entities drawn uniformly without
/// replacement, with entities left isolated by the cut removed.
pub fn uniform_subgraph(kg: &KnowledgeGraph, count: usize, seed: u64) -> (KnowledgeGraph, Vec<EntityId>) {
    let mut ids: Vec<EntityId> = kg.entities().collect();
    ids.shuffle(&mut seeded(seed));
    ids.truncate(count);
    ids.sort_unstable();
    let sub = kg.induced_subgraph(&ids);
    let keep: Vec<EntityId> = sub.entities().filter(|&e| sub.degree(e) > 0).map(|e| ids[e.index()]).collect();
    (kg.induced_subgraph(&keep), keep)
}

/// Entities whose degree lies in `1..=max_degree`, ascending.
pub fn degree_capped(kg: &KnowledgeGraph, max_degree: usize) -> Vec<EntityId> {
    kg.entities()
        .filter(|&e| (1..=max_degree).contains(&kg.degree(e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::Triple;

    #[test]
    fn uniform_sample_drops_isolated() {
        let kg = KnowledgeGraph::from_triples(6, 1, vec![Triple::new(0, 0, 1), Triple::new(2, 0, 3)]).unwrap();
        let (sub, keep) = uniform_subgraph(&kg, 6, 4);
        assert_eq!(keep, vec![EntityId(0), EntityId(1), EntityId(2), EntityId(3)]);
        assert_eq!(sub.num_triples(), 2);
        let (small, keep) = uniform_subgraph(&kg, 3, 4);
        assert!(keep.len() <= 3);
        assert!(small.entities().all(|e| small.degree(e) > 0));
    }

    fn ring(n: u32) -> KnowledgeGraph {
        KnowledgeGraph::from_triples(n as usize, 1, (0..n).map(|i| Triple::new(i, 0, (i + 1) % n))).unwrap()
    }

    #[test]
    fn snowball_size_and_determinism() {
        let g = ring(50);
        let (a, ka) = snowball_subgraph(&g, 10, 4);
        let (_, kb) = snowball_subgraph(&g, 10, 4);
        assert_eq!(ka, kb);
        assert_eq!(a.num_entities(), 10);
        // a contiguous arc of a ring keeps 9 edges
        assert_eq!(a.num_triples(), 9);
    }

    #[test]
    fn snowball_larger_than_graph_is_identity() {
        let g = ring(5);
        let (s, keep) = snowball_subgraph(&g, 100, 0);
        assert_eq!(s.num_triples(), 5);
        assert_eq!(keep.len(), 5);
    }

    #[test]
    fn degree_cap() {
        let g = KnowledgeGraph::from_triples(4, 1, [Triple::new(0, 0, 1), Triple::new(0, 0, 2)]).unwrap();
        assert_eq!(degree_capped(&g, 1), vec![EntityId(1), EntityId(2)]);
        assert_eq!(degree_capped(&g, 2).len(), 3);
    }
}
