//! Analytic gradients against central finite differences.

use irml_core::codec::{loss_gradient, margin_loss, EmbeddingTable, TripleBatch};
use irml_core::kg::{EntityId, KnowledgeGraph, LayerAssignment, ReasoningPath, RelationId, Triple};
use irml_core::reasoner::{path_features, EvaluatorNetwork, PolicyGrad, PolicyInputs, PolicyNetwork};
use irml_core::rng::seeded;
use ndarray::Array1;
use rand::Rng;

const H: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic.iter().zip(numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = scale(analytic).max(scale(numeric));
    if denom == 0.0 {
        0.0
    } else {
        diff / denom
    }
}

fn random_graph(rng: &mut irml_core::rng::Rng, n: u32, r: u32, m: usize) -> KnowledgeGraph {
    let mut triples = Vec::new();
    while triples.len() < m {
        let (h, t) = (rng.random_range(0..n), rng.random_range(0..n));
        if h != t {
            triples.push(Triple::new(h, rng.random_range(0..r), t));
        }
    }
    KnowledgeGraph::from_triples(n as usize, r as usize, triples).unwrap()
}

#[test]
fn margin_loss_gradient() {
    let mut checked = 0;
    for seed in 0..40u64 {
        let mut rng = seeded(seed);
        let dim = rng.random_range(2..6);
        let table = EmbeddingTable::random(6, 3, dim, seed);
        let mut batch = TripleBatch { positives: vec![], negatives: vec![] };
        for _ in 0..4 {
            let p = Triple::new(rng.random_range(0..6), rng.random_range(0..3), rng.random_range(0..6));
            let mut n = p;
            while n == p {
                n.tail = EntityId(rng.random_range(0..6));
            }
            batch.positives.push(p);
            batch.negatives.push(n);
        }
        let margin = 1.0 + rng.random::<f64>();
        // skip instances that sit on a hinge kink
        let near_kink = batch
            .pairs()
            .any(|(p, n)| (margin + table.residual_sq(p) - table.residual_sq(n)).abs() < 1e-3);
        if near_kink {
            continue;
        }
        let g = loss_gradient(&batch, &table, margin).unwrap();
        let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
        for e in 0..6u32 {
            for i in 0..dim {
                let mut up = table.clone();
                up.entity_mut(EntityId(e))[i] += H;
                let mut down = table.clone();
                down.entity_mut(EntityId(e))[i] -= H;
                numeric.push((margin_loss(&batch, &up, margin).unwrap() - margin_loss(&batch, &down, margin).unwrap()) / (2.0 * H));
                analytic.push(g.entity(EntityId(e)).map_or(0.0, |v| v[i]));
            }
        }
        for r in 0..3u32 {
            for i in 0..dim {
                let mut up = table.clone();
                up.relation_mut(RelationId(r))[i] += H;
                let mut down = table.clone();
                down.relation_mut(RelationId(r))[i] -= H;
                numeric.push((margin_loss(&batch, &up, margin).unwrap() - margin_loss(&batch, &down, margin).unwrap()) / (2.0 * H));
                analytic.push(g.relation(RelationId(r)).map_or(0.0, |v| v[i]));
            }
        }
        let err = rel_error(&analytic, &numeric);
        assert!(err < TOL, "seed {seed}: relative error {err}");
        checked += 1;
    }
    assert!(checked >= 20, "only {checked} instances away from kinks");
}

#[test]
fn policy_log_prob_and_entropy_gradients() {
    for seed in 0..20u64 {
        let mut rng = seeded(100 + seed);
        let kg = random_graph(&mut rng, 7, 4, 18);
        let table = EmbeddingTable::random(7, 4, 3, seed);
        let layers = LayerAssignment::single(7);
        let inputs = PolicyInputs::new(&kg, &table, &layers, false);
        let net = PolicyNetwork::for_inputs(&inputs, 4, seed);
        let e = kg.entities().find(|&e| inputs.available(e).len() >= 2).expect("a branching entity");
        let acts = inputs.available(e);
        let a = acts[rng.random_range(0..acts.len())];
        let mut g = PolicyGrad::zeros_like(&net);
        net.accumulate_log_prob_grad(&inputs, e, a, 1.0, &mut g).unwrap();
        let mut ge = PolicyGrad::zeros_like(&net);
        net.accumulate_entropy_grad(&inputs, e, 1.0, &mut ge).unwrap();
        let flat = net.to_flat();
        let (mut fd_lp, mut fd_h) = (Vec::new(), Vec::new());
        for i in 0..flat.len() {
            let eval = |delta: f64| {
                let mut p = flat.clone();
                p[i] += delta;
                let mut n = net.clone();
                n.set_flat(&p).unwrap();
                (n.log_prob(&inputs, e, a).unwrap(), n.forward(&inputs, e).unwrap().entropy())
            };
            let (up, down) = (eval(H), eval(-H));
            fd_lp.push((up.0 - down.0) / (2.0 * H));
            fd_h.push((up.1 - down.1) / (2.0 * H));
        }
        let e1 = rel_error(&g.to_flat(), &fd_lp);
        assert!(e1 < TOL, "seed {seed}: log-prob relative error {e1}");
        // the entropy gradient targets the unclipped softmax; away from the
        // clip the two coincide
        let probs = net.forward(&inputs, e).unwrap().probs;
        if probs.iter().all(|&p| p > 2e-3) {
            let e2 = rel_error(&ge.to_flat(), &fd_h);
            assert!(e2 < TOL, "seed {seed}: entropy relative error {e2}");
        }
    }
}

#[test]
fn evaluator_gradient() {
    for seed in 0..20u64 {
        let mut rng = seeded(200 + seed);
        let table = EmbeddingTable::random(5, 3, 3, seed);
        let path = |rng: &mut irml_core::rng::Rng| {
            let mut p = ReasoningPath::new(EntityId(rng.random_range(0..5)));
            for _ in 0..rng.random_range(1..3) {
                p.steps.push((RelationId(rng.random_range(0..3)), EntityId(rng.random_range(0..5))));
            }
            p
        };
        let exp: Vec<Array1<f64>> = (0..6).map(|_| path_features(&path(&mut rng), &table, 2)).collect();
        let gen: Vec<Array1<f64>> = (0..6).map(|_| path_features(&path(&mut rng), &table, 2)).collect();
        let net = EvaluatorNetwork::new(9, 5, seed);
        let (_, g) = net.objective_and_grad(&exp, &gen);
        let flat = net.to_flat();
        let fd: Vec<f64> = (0..flat.len())
            .map(|i| {
                let obj = |delta: f64| {
                    let mut p = flat.clone();
                    p[i] += delta;
                    let mut n = net.clone();
                    n.set_flat(&p);
                    n.objective_and_grad(&exp, &gen).0
                };
                (obj(H) - obj(-H)) / (2.0 * H)
            })
            .collect();
        let err = rel_error(&g.to_flat(), &fd);
        assert!(err < TOL, "seed {seed}: relative error {err}");
    }
}
