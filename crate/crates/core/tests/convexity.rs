//! Strong convexity of the imitation objective over clipped occupancy
//! tables.

use irml_core::kg::{EntityId, RelationId};
use irml_core::reasoner::{causal_entropy, loss_f, OccupancyTable, StateAction, DEFAULT_CLIP};
use irml_core::rng::seeded;
use rand::Rng as _;

const HORIZON: usize = 2;
const STATES: u32 = 3;
const ACTIONS: u32 = 4;
/// ξ²/M for the default clip.
const MODULUS: f64 = 1e-6;

fn keys() -> Vec<StateAction> {
    let mut out = Vec::new();
    for t in 0..HORIZON {
        for e in 0..STATES {
            for r in 0..ACTIONS {
                out.push(StateAction::new(EntityId(e), t, RelationId(r)));
            }
        }
    }
    out
}

/// Unit mass per step, every entry at least the clip.
fn random_occupancy(rng: &mut irml_core::rng::Rng) -> Vec<f64> {
    let per_step = (STATES * ACTIONS) as usize;
    let mut out = Vec::new();
    for _ in 0..HORIZON {
        let u: Vec<f64> = (0..per_step).map(|_| rng.random::<f64>()).collect();
        let s: f64 = u.iter().sum();
        let free = 1.0 - per_step as f64 * DEFAULT_CLIP;
        out.extend(u.iter().map(|x| DEFAULT_CLIP + free * x / s));
    }
    out
}

fn table(values: &[f64]) -> OccupancyTable {
    let mut t = OccupancyTable::new(HORIZON);
    for (k, &v) in keys().into_iter().zip(values) {
        t.add(k, v);
    }
    t
}

#[test]
fn midpoint_strong_convexity() {
    let mut rng = seeded(2024);
    let expert = table(&random_occupancy(&mut rng));
    let f = |c: &[f64]| loss_f(&table(c), &expert, 1.0).unwrap();
    for pair in 0..100 {
        let a = random_occupancy(&mut rng);
        let b = random_occupancy(&mut rng);
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let dist2: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
        let rhs = 0.5 * f(&a) + 0.5 * f(&b) - MODULUS / 8.0 * dist2;
        assert!(f(&mid) <= rhs, "pair {pair}: {} > {rhs}", f(&mid));
    }
}

#[test]
fn entropy_hessian_diagonal_is_bounded_below() {
    let mut rng = seeded(7);
    let h = 1e-4;
    for draw in 0..20 {
        let c = random_occupancy(&mut rng);
        let neg_h = |v: &[f64]| -causal_entropy(&table(v));
        for i in 0..c.len() {
            let mut up = c.clone();
            let mut down = c.clone();
            up[i] += h;
            down[i] -= h;
            let second = (neg_h(&up) - 2.0 * neg_h(&c) + neg_h(&down)) / (h * h);
            assert!(second >= MODULUS, "draw {draw}, entry {i}: {second}");
        }
    }
}
