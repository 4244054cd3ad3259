//! Multi-server training: FedAvg over interpreter policies and GCN
//! classifiers, cross-server link scoring, and the convergence bound
//! machinery for the quadratic test suite.

mod bound;
mod gcn;
mod link;

use std::io::{self, Write};

use thiserror::Error;

use crate::codec::EmbeddingTable;
use crate::kg::{KgError, KnowledgeGraph, LayerAssignment, ReasoningPath};
use crate::reasoner::{HistoryRow, ImitationConfig, InterpreterTrainer, ReasonerError};
use crate::rng::derive_seed;

pub use bound::{
    divergence_d, heterogeneity_rho, learning_rate, quadratic_suite, run_quadratic, theorem3_bound, write_bound_csv,
    BoundParams, BoundRow, QuadraticRun, QuadraticSuite,
};
pub use gcn::{run_federated_classification, split_labels, ClassifierConfig, Gcn, LabelSplit};
pub use link::{auc, train_cross_server_policy, LinkConfig, LinkPolicy};

#[derive(Debug, Error, PartialEq)]
pub enum FederationError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parameter shapes differ: {0} vs {1}")]
    Shape(usize, usize),
    #[error(transparent)]
    Reasoner(#[from] ReasonerError),
    #[error(transparent)]
    Kg(#[from] KgError),
}

/// `Σ_k γ_k w_k`, accumulated in server order starting from `γ_0 w_0`.
pub fn fedavg(models: &[Vec<f64>], gamma: &[f64]) -> Result<Vec<f64>, FederationError> {
    if models.is_empty() || models.len() != gamma.len() {
        return Err(FederationError::Config(format!(
            "{} models with {} weights",
            models.len(),
            gamma.len()
        )));
    }
    let sum: f64 = gamma.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(FederationError::Config(format!("weights sum to {sum}")));
    }
    let n = models[0].len();
    if let Some(m) = models.iter().find(|m| m.len() != n) {
        return Err(FederationError::Shape(n, m.len()));
    }
    let mut out: Vec<f64> = models[0].iter().map(|w| gamma[0] * w).collect();
    for (m, g) in models.iter().zip(gamma).skip(1) {
        out.iter_mut().zip(m).for_each(|(o, w)| *o += g * w);
    }
    Ok(out)
}

/// `n_k / Σ n_k`.
pub fn entity_weights(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / total.max(1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederationConfig {
    /// Local steps `E` between aggregations.
    pub local_steps: usize,
    /// Aggregation rounds; total local steps `T = E · rounds`.
    pub rounds: usize,
    pub seed: u64,
    /// Every server uses `seed` itself instead of a derived per-server seed.
    pub shared_seed: bool,
}

impl Default for FederationConfig {
    fn default() -> Self {
        FederationConfig {
            local_steps: 5,
            rounds: 100,
            seed: 0,
            shared_seed: false,
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<(), FederationError> {
        if self.local_steps == 0 || self.rounds == 0 {
            return Err(FederationError::Config("local steps and rounds must be positive".into()));
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        self.local_steps * self.rounds
    }

    /// Server 0 keeps the base seed so a one-server run matches an
    /// unfederated one.
    pub fn server_seed(&self, server: usize) -> u64 {
        if self.shared_seed || server == 0 {
            self.seed
        } else {
            derive_seed(self.seed, server as u64)
        }
    }
}

/// Everything one server trains on.
#[derive(Debug, Clone, Copy)]
pub struct ServerData<'a> {
    pub kg: &'a KnowledgeGraph,
    pub table: &'a EmbeddingTable,
    pub layers: &'a LayerAssignment,
    pub experts: &'a [ReasoningPath],
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederationRun {
    /// Aggregated parameters after each round.
    pub snapshots: Vec<Vec<f64>>,
    /// `[round][server]` local loss at the end of the round.
    pub local_loss: Vec<Vec<f64>>,
    /// `γ`-weighted local loss per round.
    pub global_loss: Vec<f64>,
    /// `[round][server]` validation accuracy where the run has one.
    pub local_accuracy: Vec<Vec<f64>>,
    pub global_accuracy: Vec<f64>,
    pub dropped_edges: usize,
}

impl FederationRun {
    fn new() -> Self {
        FederationRun {
            snapshots: Vec::new(),
            local_loss: Vec::new(),
            global_loss: Vec::new(),
            local_accuracy: Vec::new(),
            global_accuracy: Vec::new(),
            dropped_edges: 0,
        }
    }
}

/// Output of [`run_federated_reasoning`].
#[derive(Debug, Clone)]
pub struct ReasoningRun {
    pub run: FederationRun,
    /// Per-server training logs.
    pub histories: Vec<Vec<HistoryRow>>,
}

/// Trains one interpreter per server and averages the policy weights every
/// `E` local updates. The initial policy of server 0 is broadcast before
/// the first update; evaluators and optimiser state stay local. Local loss
/// is the last Distance-I of the round.
pub fn run_federated_reasoning(
    servers: &[ServerData<'_>],
    imitation: &ImitationConfig,
    config: &FederationConfig,
) -> Result<ReasoningRun, FederationError> {
    config.validate()?;
    if servers.is_empty() {
        return Err(FederationError::Config("no servers".into()));
    }
    for (k, s) in servers.iter().enumerate() {
        if s.kg.num_triples() == 0 {
            return Err(FederationError::Config(format!("server {k} has an empty knowledge base")));
        }
        if s.experts.is_empty() {
            return Err(FederationError::Config(format!("server {k} has no expert paths")));
        }
    }
    let gamma = entity_weights(&servers.iter().map(|s| s.kg.num_entities()).collect::<Vec<_>>());
    let mut trainers = servers
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let cfg = ImitationConfig {
                seed: config.server_seed(k),
                ..imitation.clone()
            };
            InterpreterTrainer::new(s.kg, s.table, s.layers, s.experts, &cfg)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let start = trainers[0].policy.to_flat();
    for t in trainers.iter_mut().skip(1) {
        if t.policy.num_params() != start.len() {
            return Err(FederationError::Shape(start.len(), t.policy.num_params()));
        }
        t.policy.set_flat(&start)?;
    }
    let mut run = FederationRun::new();
    for _ in 0..config.rounds {
        let mut losses = Vec::with_capacity(trainers.len());
        for t in trainers.iter_mut() {
            let mut last = f64::NAN;
            for _ in 0..config.local_steps {
                last = t.step()?.distance_i;
            }
            losses.push(last);
        }
        let models: Vec<Vec<f64>> = trainers.iter().map(|t| t.policy.to_flat()).collect();
        let avg = fedavg(&models, &gamma)?;
        for t in trainers.iter_mut() {
            t.policy.set_flat(&avg)?;
        }
        run.global_loss.push(losses.iter().zip(&gamma).map(|(l, g)| l * g).sum());
        run.local_loss.push(losses);
        run.snapshots.push(avg);
    }
    let histories = trainers.into_iter().map(|t| t.into_parts().1).collect();
    Ok(ReasoningRun { run, histories })
}

/// `round,server_id,local_loss,val_accuracy`; accuracy is empty when the
/// run has none.
pub fn write_trace_csv<W: Write>(run: &FederationRun, mut out: W) -> io::Result<()> {
    writeln!(out, "round,server_id,local_loss,val_accuracy")?;
    for (round, losses) in run.local_loss.iter().enumerate() {
        for (k, loss) in losses.iter().enumerate() {
            match run.local_accuracy.get(round).and_then(|a| a.get(k)) {
                Some(acc) => writeln!(out, "{},{},{:.10},{:.10}", round + 1, k, loss, acc)?,
                None => writeln!(out, "{},{},{:.10},", round + 1, k, loss)?,
            }
        }
    }
    Ok(())
}

/// `round,aggregated_val_accuracy`.
pub fn write_aggregate_csv<W: Write>(run: &FederationRun, mut out: W) -> io::Result<()> {
    writeln!(out, "round,aggregated_val_accuracy")?;
    for (round, acc) in run.global_accuracy.iter().enumerate() {
        writeln!(out, "{},{:.10}", round + 1, acc)?;
    }
    Ok(())
}
