//! Semantic reasoning as a Markov decision process over the knowledge
//! graph: state `(current entity, step)`, action = relation to follow.
//!
//! * [`policy`]: two-layer GCN interpreter policy and its analytic
//!   gradients.
//! * [`evaluator`]: path discriminator.
//! * [`occupancy`]: occupancy measures, causal entropy and the two
//!   semantic distances.
//! * [`imitation`]: rollouts and the adversarial imitation trainer.

use thiserror::Error;

use crate::kg::EntityId;

pub mod evaluator;
pub mod imitation;
pub mod occupancy;
pub mod policy;

pub use evaluator::{path_features, train_evaluator, EvaluatorGrad, EvaluatorNetwork};
pub use imitation::{
    rollout, train_interpreter, write_history_csv, HistoryRow, ImitationConfig, InterpreterTrainer, RolloutMode,
};
pub use occupancy::{
    causal_entropy, distance_energy, distance_statistic, expert_occupancy, loss_f, occupancy_measure,
    total_variation, OccupancyMode, OccupancyTable, StateAction,
};
pub use policy::{ActionDist, ActionPolicy, BoundPolicy, PolicyGrad, PolicyInputs, PolicyNetwork, TabularPolicy};

/// Probability clip applied to every policy output.
pub const DEFAULT_CLIP: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum ReasonerError {
    #[error("entity {0} has no available actions")]
    DeadEnd(EntityId),
    #[error("exact occupancy over {states} states exceeds the limit of {limit}; use monte-carlo mode")]
    StateSpaceTooLarge { states: usize, limit: usize },
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("median rollout length {median} is below 2; the graph is dominated by dead ends")]
    DeadEndDominated { median: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}
