//! Path evaluator: one ReLU hidden layer and a sigmoid output giving the
//! probability that a path came from the expert.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng as _;

use crate::codec::EmbeddingTable;
use crate::kg::ReasoningPath;
use crate::rng::seeded;

/// `ẽ_0 ⊕ r̃_1 ⊕ … ⊕ r̃_J`, zero-padded for shorter paths. Steps beyond
/// `max_len` are ignored.
pub fn path_features(path: &ReasoningPath, table: &EmbeddingTable, max_len: usize) -> Array1<f64> {
    let d = table.dim();
    let mut x = Array1::zeros(d * (max_len + 1));
    x.slice_mut(ndarray::s![..d])
        .iter_mut()
        .zip(table.entity(path.origin))
        .for_each(|(a, b)| *a = *b);
    for (j, &(r, _)) in path.steps.iter().take(max_len).enumerate() {
        let off = d * (j + 1);
        x.slice_mut(ndarray::s![off..off + d])
            .iter_mut()
            .zip(table.relation(r))
            .for_each(|(a, b)| *a = *b);
    }
    x
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatorNetwork {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array1<f64>,
    pub b2: f64,
}

/// Gradient with the shapes of [`EvaluatorNetwork`].
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatorGrad {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array1<f64>,
    pub b2: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(z)` without overflow.
fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

impl EvaluatorNetwork {
    pub fn new(inputs: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let b = (6.0 / (inputs + hidden) as f64).sqrt();
        let w1 = Array2::from_shape_fn((inputs, hidden), |_| rng.random_range(-b..=b));
        let b2w = (6.0 / (hidden + 1) as f64).sqrt();
        let w2 = Array1::from_shape_fn(hidden, |_| rng.random_range(-b2w..=b2w));
        EvaluatorNetwork {
            w1,
            b1: Array1::zeros(hidden),
            w2,
            b2: 0.0,
        }
    }

    pub fn inputs(&self) -> usize {
        self.w1.nrows()
    }

    fn logit_cache(&self, x: ArrayView1<f64>) -> (Array1<f64>, Array1<f64>, f64) {
        let z = x.dot(&self.w1) + &self.b1;
        let h = z.mapv(|v| v.max(0.0));
        let s = h.dot(&self.w2) + self.b2;
        (z, h, s)
    }

    /// Probability that `x` is an expert path.
    pub fn forward(&self, x: ArrayView1<f64>) -> f64 {
        sigmoid(self.logit_cache(x).2)
    }

    /// Fraction classified correctly at threshold ½.
    pub fn accuracy(&self, expert: &[Array1<f64>], generated: &[Array1<f64>]) -> f64 {
        let right = expert.iter().filter(|x| self.forward(x.view()) > 0.5).count()
            + generated.iter().filter(|x| self.forward(x.view()) < 0.5).count();
        right as f64 / (expert.len() + generated.len()).max(1) as f64
    }

    /// Mean of `ln D(expert)` plus mean of `ln(1 − D(generated))`, with its
    /// gradient.
    pub fn objective_and_grad(&self, expert: &[Array1<f64>], generated: &[Array1<f64>]) -> (f64, EvaluatorGrad) {
        let mut g = EvaluatorGrad {
            w1: Array2::zeros(self.w1.raw_dim()),
            b1: Array1::zeros(self.b1.len()),
            w2: Array1::zeros(self.w2.len()),
            b2: 0.0,
        };
        let mut obj = 0.0;
        for (set, positive) in [(expert, true), (generated, false)] {
            if set.is_empty() {
                continue;
            }
            let scale = 1.0 / set.len() as f64;
            for x in set {
                let (z, h, s) = self.logit_cache(x.view());
                // d/ds ln σ(s) = 1 − σ(s); d/ds ln(1 − σ(s)) = −σ(s)
                let (val, ds) = if positive {
                    (log_sigmoid(s), 1.0 - sigmoid(s))
                } else {
                    (log_sigmoid(-s), -sigmoid(s))
                };
                obj += scale * val;
                let ds = scale * ds;
                g.b2 += ds;
                g.w2.scaled_add(ds, &h);
                let dz: Array1<f64> = z
                    .iter()
                    .zip(self.w2.iter())
                    .map(|(z, w)| if *z > 0.0 { ds * w } else { 0.0 })
                    .collect();
                g.b1 += &dz;
                for (i, xi) in x.iter().enumerate() {
                    if *xi != 0.0 {
                        g.w1.row_mut(i).scaled_add(*xi, &dz);
                    }
                }
            }
        }
        (obj, g)
    }

    pub fn ascend(&mut self, g: &EvaluatorGrad, lr: f64) {
        self.w1.scaled_add(lr, &g.w1);
        self.b1.scaled_add(lr, &g.b1);
        self.w2.scaled_add(lr, &g.w2);
        self.b2 += lr * g.b2;
    }

    /// `w1`, `b1`, `w2`, `b2` flattened.
    pub fn to_flat(&self) -> Vec<f64> {
        self.w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .copied()
            .chain(std::iter::once(self.b2))
            .collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        self.w1.iter_mut().for_each(|w| *w = it.next().expect("flat length"));
        self.b1.iter_mut().for_each(|w| *w = it.next().expect("flat length"));
        self.w2.iter_mut().for_each(|w| *w = it.next().expect("flat length"));
        self.b2 = it.next().expect("flat length");
    }
}

impl EvaluatorGrad {
    pub fn to_flat(&self) -> Vec<f64> {
        self.w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .copied()
            .chain(std::iter::once(self.b2))
            .collect()
    }
}

/// Full-batch gradient ascent on the discriminator objective.
pub fn train_evaluator(
    expert: &[Array1<f64>],
    generated: &[Array1<f64>],
    mut net: EvaluatorNetwork,
    steps: usize,
    lr: f64,
) -> EvaluatorNetwork {
    for _ in 0..steps {
        let (_, g) = net.objective_and_grad(expert, generated);
        net.ascend(&g, lr);
    }
    net
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{EntityId, RelationId};
    use rand_distr::{Distribution, Normal};

    #[test]
    fn features_are_padded() {
        let mut t = EmbeddingTable::zeros(2, 2, 2);
        t.entity_mut(EntityId(1)).copy_from_slice(&[1.0, 2.0]);
        t.relation_mut(RelationId(1)).copy_from_slice(&[3.0, 4.0]);
        let p = ReasoningPath {
            origin: EntityId(1),
            steps: vec![(RelationId(1), EntityId(0))],
        };
        let x = path_features(&p, &t, 3);
        assert_eq!(x.to_vec(), vec![1.0, 2.0, 3.0, 4.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn output_in_open_unit_interval() {
        let net = EvaluatorNetwork::new(3, 4, 1);
        for v in [-1e3, -1.0, 0.0, 5.0] {
            let x = Array1::from(vec![v, -v, 0.5]);
            let p = net.forward(x.view());
            assert!(p >= 0.0 && p <= 1.0);
        }
        assert!(log_sigmoid(-800.0).is_finite());
    }

    fn gaussian_set(mean: f64, n: usize, seed: u64) -> Vec<Array1<f64>> {
        let mut rng = seeded(seed);
        let d = Normal::new(mean, 0.2).unwrap();
        (0..n).map(|_| Array1::from(vec![d.sample(&mut rng)])).collect()
    }

    #[test]
    fn separable_set_is_learned() {
        let exp = gaussian_set(1.0, 200, 1);
        let gen = gaussian_set(-1.0, 200, 2);
        let net = train_evaluator(&exp, &gen, EvaluatorNetwork::new(1, 8, 3), 500, 0.5);
        assert!(net.accuracy(&exp, &gen) >= 0.99);
    }

    #[test]
    fn identical_distributions_stay_near_chance() {
        for seed in 0..5 {
            let exp = gaussian_set(0.3, 400, 10 + seed);
            let gen = gaussian_set(0.3, 400, 20 + seed);
            let net = train_evaluator(&exp, &gen, EvaluatorNetwork::new(1, 4, seed), 300, 0.1);
            let acc = net.accuracy(&gaussian_set(0.3, 1000, 30 + seed), &gaussian_set(0.3, 1000, 40 + seed));
            assert!((0.4..=0.6).contains(&acc), "seed {seed}: {acc}");
        }
    }

    #[test]
    fn zero_steps_is_identity() {
        let net = EvaluatorNetwork::new(2, 3, 9);
        let exp = gaussian_set(1.0, 3, 1);
        let gen = gaussian_set(0.0, 3, 1);
        let exp2: Vec<_> = exp.iter().map(|x| Array1::from(vec![x[0], 0.0])).collect();
        let gen2: Vec<_> = gen.iter().map(|x| Array1::from(vec![x[0], 1.0])).collect();
        assert_eq!(train_evaluator(&exp2, &gen2, net.clone(), 0, 0.3), net);
    }

    #[test]
    fn flat_round_trip() {
        let a = EvaluatorNetwork::new(3, 2, 4);
        let mut b = EvaluatorNetwork::new(3, 2, 5);
        b.set_flat(&a.to_flat());
        assert_eq!(a, b);
    }
}
