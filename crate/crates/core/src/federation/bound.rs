//! Heterogeneity, adjacency divergence and the local-SGD convergence
//! bound, plus a strongly convex quadratic suite where the bound's
//! assumptions hold exactly.

use std::io::{self, Write};

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::{fedavg, FederationError};
use crate::rng::{derive_seed, seeded};

/// `F* − Σ γ_k F_k*`.
pub fn heterogeneity_rho(f_star: f64, f_k_star: &[f64], gamma: &[f64]) -> f64 {
    f_star - f_k_star.iter().zip(gamma).map(|(f, g)| f * g).sum::<f64>()
}

fn gram_chain(a: &Array2<f64>, x: &Array2<f64>) -> Array2<f64> {
    // Xᵀ Aᵀ Aᵀ A A X
    let ax = a.dot(&a.dot(x));
    ax.t().dot(&ax)
}

/// `‖K X_kᵀA_kᵀA_kᵀA_kA_kX_k − XᵀAᵀAᵀAAX‖²_F`.
pub fn divergence_d(
    a_k: &Array2<f64>,
    x_k: &Array2<f64>,
    a: &Array2<f64>,
    x: &Array2<f64>,
    k: usize,
) -> Result<f64, FederationError> {
    let square = |m: &Array2<f64>| m.nrows() == m.ncols();
    if !square(a_k) || !square(a) || a_k.ncols() != x_k.nrows() || a.ncols() != x.nrows() {
        return Err(FederationError::Config("adjacency and feature shapes do not conform".into()));
    }
    if x_k.ncols() != x.ncols() {
        return Err(FederationError::Shape(x_k.ncols(), x.ncols()));
    }
    let diff = gram_chain(a_k, x_k) * k as f64 - gram_chain(a, x);
    Ok(diff.iter().map(|v| v * v).sum())
}

/// Constants of the convergence bound.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundParams {
    pub mu: f64,
    pub l: f64,
    /// Bound on the expected squared stochastic-gradient norm.
    pub sigma_l2: f64,
    pub l_p: f64,
    pub rho: f64,
    pub n: f64,
    pub divergence: f64,
    /// `‖w₁ − w*‖`.
    pub w_dist: f64,
    /// Local steps between aggregations.
    pub local_steps: usize,
}

impl BoundParams {
    pub fn kappa(&self) -> f64 {
        self.l / self.mu
    }

    /// `max{8κ, E}`.
    pub fn zeta(&self) -> f64 {
        (8.0 * self.kappa()).max(self.local_steps as f64)
    }

    pub fn omega(&self) -> f64 {
        let e1 = self.local_steps as f64 - 1.0;
        4.0 * (1.0 + 2.0 * e1 * e1) * self.sigma_l2
            + 4.0 * self.l * self.rho
            + self.mu * self.mu * self.zeta() / 4.0 * self.w_dist * self.w_dist
    }

    pub fn validate(&self) -> Result<(), FederationError> {
        if !(self.mu > 0.0) {
            return Err(FederationError::Config("μ must be positive".into()));
        }
        if self.l < self.mu {
            return Err(FederationError::Config(format!("L = {} is below μ = {}", self.l, self.mu)));
        }
        if self.local_steps == 0 {
            return Err(FederationError::Config("local steps must be positive".into()));
        }
        let fields = [self.sigma_l2, self.l_p, self.rho, self.divergence, self.w_dist];
        if fields.iter().any(|v| !(*v >= 0.0)) || (self.divergence > 0.0 && !(self.n > 0.0)) {
            return Err(FederationError::Config("bound constants must be non-negative".into()));
        }
        Ok(())
    }
}

/// `(2κ/(ζ+T−1))·(Ω/μ + 2L_p𝒟/(μN))`.
pub fn theorem3_bound(params: &BoundParams, t: usize) -> Result<f64, FederationError> {
    params.validate()?;
    let p = params;
    let lead = 2.0 * p.kappa() / (p.zeta() + t as f64 - 1.0);
    let gap = if p.divergence == 0.0 {
        0.0
    } else {
        2.0 * p.l_p * p.divergence / (p.mu * p.n)
    };
    Ok(lead * (p.omega() / p.mu + gap))
}

/// `η_t = 2/(μ(ζ+t))`.
pub fn learning_rate(mu: f64, zeta: f64, t: usize) -> f64 {
    2.0 / (mu * (zeta + t as f64))
}

/// `K` separable quadratics `F_k(w) = ½ Σ_i h_ki (w_i − c_ki)²` with
/// gradients observed under Gaussian noise.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSuite {
    pub curvature: Vec<Vec<f64>>,
    pub centre: Vec<Vec<f64>>,
    pub gamma: Vec<f64>,
    pub noise_std: f64,
}

/// Random suite with curvatures in `[mu, l]` (both ends attained), centres
/// drawn `N(0, spread²)` and weights from random entity counts.
pub fn quadratic_suite(
    servers: usize,
    dim: usize,
    mu: f64,
    l: f64,
    spread: f64,
    noise_std: f64,
    seed: u64,
) -> QuadraticSuite {
    assert!(servers >= 1 && dim >= 1 && mu > 0.0 && l >= mu);
    let mut rng = seeded(seed);
    let normal = Normal::new(0.0, spread).expect("finite spread");
    let mut curvature: Vec<Vec<f64>> = (0..servers)
        .map(|_| (0..dim).map(|_| rng.random_range(mu..=l)).collect())
        .collect();
    curvature[0][0] = mu;
    curvature[servers - 1][dim - 1] = l;
    let centre = (0..servers)
        .map(|_| (0..dim).map(|_| normal.sample(&mut rng)).collect())
        .collect();
    let counts: Vec<usize> = (0..servers).map(|_| rng.random_range(50..150)).collect();
    QuadraticSuite {
        curvature,
        centre,
        gamma: super::entity_weights(&counts),
        noise_std,
    }
}

impl QuadraticSuite {
    pub fn servers(&self) -> usize {
        self.curvature.len()
    }

    pub fn dim(&self) -> usize {
        self.curvature[0].len()
    }

    pub fn mu(&self) -> f64 {
        self.curvature.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn l(&self) -> f64 {
        self.curvature.iter().flatten().copied().fold(0.0, f64::max)
    }

    pub fn local(&self, k: usize, w: &[f64]) -> f64 {
        let (h, c) = (&self.curvature[k], &self.centre[k]);
        0.5 * w.iter().zip(h).zip(c).map(|((w, h), c)| h * (w - c) * (w - c)).sum::<f64>()
    }

    pub fn global(&self, w: &[f64]) -> f64 {
        (0..self.servers()).map(|k| self.gamma[k] * self.local(k, w)).sum()
    }

    /// Closed-form minimiser of the weighted sum.
    pub fn optimum(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                let (mut num, mut den) = (0.0, 0.0);
                for k in 0..self.servers() {
                    num += self.gamma[k] * self.curvature[k][i] * self.centre[k][i];
                    den += self.gamma[k] * self.curvature[k][i];
                }
                num / den
            })
            .collect()
    }

    /// Every local optimum is zero, so `ρ = F*`.
    pub fn rho(&self) -> f64 {
        let zeros = vec![0.0; self.servers()];
        heterogeneity_rho(self.global(&self.optimum()), &zeros, &self.gamma)
    }
}

/// One logged point of a quadratic run.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    pub t: usize,
    pub observed_gap: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticRun {
    pub rows: Vec<BoundRow>,
    pub params: BoundParams,
    /// Whether `η_t ≤ 1/(4L)` held at every step.
    pub step_sizes_ok: bool,
}

/// Local SGD with `η_t = 2/(μ(ζ+t))` from `w = 0`, averaging every
/// `local_steps`. `σ_L²` is the largest squared true-gradient norm seen at
/// any local iterate plus the noise variance `d·s²`.
pub fn run_quadratic(
    suite: &QuadraticSuite,
    local_steps: usize,
    rounds: usize,
    seed: u64,
) -> Result<QuadraticRun, FederationError> {
    if local_steps == 0 || rounds == 0 {
        return Err(FederationError::Config("local steps and rounds must be positive".into()));
    }
    let (mu, l) = (suite.mu(), suite.l());
    let zeta = (8.0 * l / mu).max(local_steps as f64);
    let k = suite.servers();
    let d = suite.dim();
    let noise = Normal::new(0.0, suite.noise_std).map_err(|e| FederationError::Config(e.to_string()))?;
    let mut rngs: Vec<_> = (0..k).map(|s| seeded(derive_seed(seed, s as u64))).collect();
    let mut models = vec![vec![0.0; d]; k];
    let w_star = suite.optimum();
    let f_star = suite.global(&w_star);
    let mut max_grad2: f64 = 0.0;
    let mut gaps = Vec::with_capacity(rounds);
    let mut step_sizes_ok = true;
    let mut t = 0;
    for _ in 0..rounds {
        for _ in 0..local_steps {
            let eta = learning_rate(mu, zeta, t);
            step_sizes_ok &= eta <= 1.0 / (4.0 * l) + 1e-15;
            for (s, w) in models.iter_mut().enumerate() {
                let mut g2 = 0.0;
                for i in 0..d {
                    let g = suite.curvature[s][i] * (w[i] - suite.centre[s][i]);
                    g2 += g * g;
                    w[i] -= eta * (g + noise.sample(&mut rngs[s]));
                }
                max_grad2 = max_grad2.max(g2);
            }
            t += 1;
        }
        let avg = fedavg(&models, &suite.gamma)?;
        gaps.push((t, suite.global(&avg) - f_star));
        models.iter_mut().for_each(|m| m.clone_from(&avg));
    }
    let w_dist = w_star.iter().map(|w| w * w).sum::<f64>().sqrt();
    let params = BoundParams {
        mu,
        l,
        sigma_l2: max_grad2 + d as f64 * suite.noise_std * suite.noise_std,
        l_p: 0.0,
        rho: suite.rho(),
        n: 1.0,
        divergence: 0.0,
        w_dist,
        local_steps,
    };
    let rows = gaps
        .into_iter()
        .map(|(t, gap)| {
            Ok(BoundRow {
                t,
                observed_gap: gap,
                bound: theorem3_bound(&params, t)?,
            })
        })
        .collect::<Result<_, FederationError>>()?;
    Ok(QuadraticRun {
        rows,
        params,
        step_sizes_ok,
    })
}

/// `T,observed_gap,bound`.
pub fn write_bound_csv<W: Write>(rows: &[BoundRow], mut out: W) -> io::Result<()> {
    writeln!(out, "T,observed_gap,bound")?;
    for r in rows {
        writeln!(out, "{},{:.10e},{:.10e}", r.t, r.observed_gap, r.bound)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn params() -> BoundParams {
        BoundParams {
            mu: 0.5,
            l: 2.0,
            sigma_l2: 3.0,
            l_p: 0.0,
            rho: 0.0,
            n: 1.0,
            divergence: 0.0,
            w_dist: 0.0,
            local_steps: 1,
        }
    }

    #[test]
    fn plug_in_value_for_one_local_step() {
        let p = params();
        let (kappa, zeta) = (4.0, 32.0);
        for t in [1, 10, 100] {
            let expect = 2.0 * kappa / (zeta + t as f64 - 1.0) * (4.0 * 3.0 / 0.5);
            assert!((theorem3_bound(&p, t).unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn bound_decreases_in_t() {
        let p = BoundParams { rho: 0.3, w_dist: 1.5, local_steps: 5, ..params() };
        let b: Vec<f64> = (1..200).map(|t| theorem3_bound(&p, t).unwrap()).collect();
        assert!(b.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn zero_mu_is_an_error() {
        assert!(theorem3_bound(&BoundParams { mu: 0.0, ..params() }, 1).is_err());
        assert!(theorem3_bound(&BoundParams { l: 0.1, ..params() }, 1).is_err());
    }

    #[test]
    fn step_size_stays_below_quarter_inverse_l() {
        for (mu, l, e) in [(1.0f64, 1.0f64, 1usize), (0.1, 5.0, 20), (0.5, 0.6, 50)] {
            let zeta: f64 = (8.0 * l / mu).max(e as f64);
            assert!((0..10_000).all(|t| learning_rate(mu, zeta, t) <= 1.0 / (4.0 * l) + 1e-15));
        }
    }

    #[test]
    fn divergence_hand_case() {
        let a = array![[1.0, 1.0], [0.0, 1.0]];
        let i = Array2::eye(2);
        // 2I − [[1, 2], [2, 5]]
        assert!((divergence_d(&i, &i, &a, &i, 2).unwrap() - 18.0).abs() < 1e-12);
        assert_eq!(divergence_d(&a, &i, &a, &i, 1).unwrap(), 0.0);
        let z = Array2::zeros((2, 3));
        assert_eq!(divergence_d(&a, &z, &i, &z, 4).unwrap(), 0.0);
        assert!(divergence_d(&a, &Array2::zeros((3, 3)), &a, &i, 1).is_err());
    }

    #[test]
    fn rho_closed_form_for_two_quadratics() {
        // F_1 = ½(w−1)², F_2 = ½(w+1)², equal weights: w* = 0, F* = ½
        let s = QuadraticSuite {
            curvature: vec![vec![1.0], vec![1.0]],
            centre: vec![vec![1.0], vec![-1.0]],
            gamma: vec![0.5, 0.5],
            noise_std: 0.0,
        };
        assert!((s.rho() - 0.5).abs() < 1e-15);
        assert_eq!(heterogeneity_rho(2.0, &[2.0, 2.0], &[0.5, 0.5]), 0.0);
    }

    #[test]
    fn rho_non_negative_on_random_suites() {
        for seed in 0..50 {
            let s = quadratic_suite(4, 3, 0.2, 3.0, 2.0, 0.1, seed);
            assert!(s.rho() >= 0.0);
        }
    }

    #[test]
    fn bound_envelopes_the_quadratic_runs() {
        for seed in 0..5 {
            let suite = quadratic_suite(4, 5, 0.5, 2.0, 1.0, 0.3, seed);
            let run = run_quadratic(&suite, 5, 60, seed).unwrap();
            assert!(run.step_sizes_ok);
            for r in &run.rows {
                assert!(r.observed_gap <= r.bound, "seed {seed} T {}: {} > {}", r.t, r.observed_gap, r.bound);
            }
        }
    }

    #[test]
    fn bound_csv_header() {
        let mut buf = Vec::new();
        write_bound_csv(&[BoundRow { t: 5, observed_gap: 0.1, bound: 2.0 }], &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("T,observed_gap,bound\n5,"));
    }
}
