//! Randomised invariants across the pipeline.

use irml_core::codec::EmbeddingTable;
use irml_core::decoder::symbol_error_rate;
use irml_core::federation::fedavg;
use irml_core::kg::{dropped_edges, layer_by_degree, layer_for_degree, partition, EntityId, GraphBuilder, KnowledgeGraph, LayerAssignment, PartitionSpec, Triple};
use irml_core::reasoner::{distance_statistic, OccupancyTable, PolicyInputs, PolicyNetwork, StateAction, DEFAULT_CLIP};
use irml_core::kg::RelationId;
use proptest::prelude::*;

fn labelled_graph(n: usize, labels: u32, edges: &[(usize, usize)]) -> KnowledgeGraph {
    let mut b = GraphBuilder::new();
    let r = b.relation("r");
    let ids: Vec<EntityId> = (0..n).map(|i| b.entity(&format!("e{i}"))).collect();
    for (i, &e) in ids.iter().enumerate() {
        b.set_label(e, &format!("l{}", i as u32 % labels));
    }
    for &(h, t) in edges {
        b.add_triple(ids[h % n], r, ids[t % n]);
    }
    b.build().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partition_conserves_entities_and_triples(
        n in 12usize..80,
        edges in prop::collection::vec((0usize..80, 0usize..80), 1..200),
        k in 1usize..4,
        p in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let kg = labelled_graph(n, 4, &edges);
        let part = partition(&kg, &PartitionSpec::new(k, p, seed)).unwrap();
        let owned: usize = part.shards.iter().map(|s| s.entities.len()).sum();
        prop_assert_eq!(owned + part.unassigned.len(), kg.num_entities());
        let dropped = dropped_edges(&kg, &part);
        let brute = kg
            .triples()
            .iter()
            .filter(|t| part.owner[t.head.index()] != part.owner[t.tail.index()] || part.owner[t.head.index()].is_none())
            .count();
        prop_assert_eq!(dropped.len(), brute);
        prop_assert_eq!(part.local_triple_count() + dropped.len(), kg.num_triples());
    }

    #[test]
    fn layering_depends_on_degree_only(
        n in 4usize..40,
        edges in prop::collection::vec((0usize..40, 0u32..3, 0usize..40), 1..120),
        shift in 1usize..40,
    ) {
        let triples: Vec<Triple> = edges.iter().map(|&(h, r, t)| Triple::new((h % n) as u32, r, (t % n) as u32)).collect();
        let kg = KnowledgeGraph::from_triples(n, 3, triples.clone()).unwrap();
        let perm = |e: u32| ((e as usize + shift) % n) as u32;
        let moved = KnowledgeGraph::from_triples(
            n,
            3,
            triples.iter().map(|t| Triple::new(perm(t.head.0), t.relation.0, perm(t.tail.0))),
        )
        .unwrap();
        let a = layer_by_degree(&kg, &[5, 2]).unwrap();
        let b = layer_by_degree(&moved, &[5, 2]).unwrap();
        for e in kg.entities() {
            prop_assert_eq!(a.layer(e), b.layer(EntityId(perm(e.0))));
            prop_assert_eq!(a.layer(e), layer_for_degree(kg.degree(e), &[5, 2]));
        }
    }

    #[test]
    fn layer_is_non_increasing_in_degree(d1 in 0usize..200, d2 in 0usize..200) {
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        prop_assert!(layer_for_degree(hi, &[50, 6]) <= layer_for_degree(lo, &[50, 6]));
    }

    #[test]
    fn fedavg_stays_in_the_coordinate_hull(
        models in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 5), 1..6),
        raw in prop::collection::vec(0.01f64..1.0, 6),
    ) {
        let w = &raw[..models.len()];
        let s: f64 = w.iter().sum();
        let gamma: Vec<f64> = w.iter().map(|x| x / s).collect();
        let gamma_sum: f64 = gamma.iter().sum();
        prop_assume!((gamma_sum - 1.0).abs() <= 1e-12);
        let avg = fedavg(&models, &gamma).unwrap();
        for i in 0..5 {
            let lo = models.iter().map(|m| m[i]).fold(f64::INFINITY, f64::min);
            let hi = models.iter().map(|m| m[i]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(avg[i] >= lo - 1e-9 && avg[i] <= hi + 1e-9);
        }
        let same = fedavg(&vec![models[0].clone(); models.len()], &gamma).unwrap();
        for (a, b) in same.iter().zip(&models[0]) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn ser_is_a_rate(
        pairs in prop::collection::vec((0u32..10, 0u32..10), 1..300),
        layer_of in prop::collection::vec(1u8..4, 10),
    ) {
        let layers = LayerAssignment::from_layers(vec![50, 6], layer_of);
        let decoded: Vec<EntityId> = pairs.iter().map(|p| EntityId(p.0)).collect();
        let truth: Vec<EntityId> = pairs.iter().map(|p| EntityId(p.1)).collect();
        let r = symbol_error_rate(&decoded, &truth, &layers).unwrap();
        prop_assert_eq!(r.overall.symbols, pairs.len());
        prop_assert!((0.0..=1.0).contains(&r.overall.ser()));
        let per: usize = r.per_layer.iter().map(|t| t.errors).sum();
        prop_assert_eq!(per, r.overall.errors);
    }

    #[test]
    fn cross_entropy_of_a_table_with_itself_is_its_entropy(
        raw in prop::collection::vec(0.0f64..1.0, 2..20),
    ) {
        let n = raw.len();
        let s: f64 = raw.iter().sum::<f64>() + 1e-9;
        let free = 1.0 - n as f64 * DEFAULT_CLIP;
        let p: Vec<f64> = raw.iter().map(|x| DEFAULT_CLIP + free * (x + 1e-9 / n as f64) / s).collect();
        let mut t = OccupancyTable::new(1);
        for (i, &m) in p.iter().enumerate() {
            t.add(StateAction::new(EntityId(0), 0, RelationId(i as u32)), m);
        }
        let shannon: f64 = p.iter().map(|x| -x * x.ln()).sum::<f64>() / p.iter().sum::<f64>();
        let gamma = distance_statistic(&t, &t, DEFAULT_CLIP).unwrap();
        prop_assert!((gamma - shannon).abs() < 1e-9);
    }

    #[test]
    fn policy_distributions_sum_to_one_and_respect_the_clip(
        seed in any::<u64>(),
        edges in prop::collection::vec((0u32..6, 0u32..4, 0u32..6), 6..30),
    ) {
        let kg = KnowledgeGraph::from_triples(6, 4, edges.iter().map(|&(h, r, t)| Triple::new(h, r, t))).unwrap();
        let table = EmbeddingTable::random(6, 4, 4, seed);
        let layers = LayerAssignment::single(6);
        let inputs = PolicyInputs::new(&kg, &table, &layers, false);
        let net = PolicyNetwork::for_inputs(&inputs, 8, seed);
        for e in kg.entities().filter(|&e| !inputs.available(e).is_empty()) {
            let d = net.forward(&inputs, e).unwrap();
            let total: f64 = inputs.available(e).iter().map(|&r| d.prob(r)).sum();
            prop_assert!((total - 1.0).abs() <= 1e-9);
            if inputs.available(e).len() > 1 {
                for &r in inputs.available(e) {
                    // Clipped to [ε, 1 − ε] before renormalising.
                    prop_assert!(d.prob(r) >= DEFAULT_CLIP / (1.0 + DEFAULT_CLIP) - 1e-12);
                }
            }
        }
    }
}
