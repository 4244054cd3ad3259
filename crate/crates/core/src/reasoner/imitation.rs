//! Rollouts and the adversarial imitation loop that trains the interpreter
//! policy against a path evaluator.

use std::io::{self, Write};

use ndarray::Array1;
use rand::Rng as _;

use super::evaluator::{path_features, EvaluatorNetwork};
use super::occupancy::{distance_energy, distance_statistic, expert_occupancy, OccupancyTable};
use super::policy::{ActionPolicy, PolicyGrad, PolicyInputs, PolicyNetwork};
use super::{ReasonerError, DEFAULT_CLIP};
use crate::codec::EmbeddingTable;
use crate::kg::{EntityId, KnowledgeGraph, LayerAssignment, ReasoningPath};
use crate::optim::Adam;
use crate::rng::{seeded, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RolloutMode {
    /// Draw the relation from the policy and the tail uniformly.
    Sample,
    /// Most probable relation (lowest id on ties), lowest tail id.
    Greedy,
}

/// Follows `policy` from `origin` for up to `horizon` steps, stopping early
/// at a dead end. Greedy mode never touches `rng`.
pub fn rollout(
    policy: &dyn ActionPolicy,
    kg: &KnowledgeGraph,
    origin: EntityId,
    horizon: usize,
    mode: RolloutMode,
    rng: &mut Rng,
) -> Result<ReasoningPath, ReasonerError> {
    let mut path = ReasoningPath::new(origin);
    let mut cur = origin;
    for _ in 0..horizon {
        let dist = match policy.distribution(cur) {
            Ok(d) => d,
            Err(ReasonerError::DeadEnd(_)) => break,
            Err(e) => return Err(e),
        };
        let r = match mode {
            RolloutMode::Greedy => dist.greedy(),
            RolloutMode::Sample => dist.sample(rng),
        };
        let tails: Vec<EntityId> = kg.tails(cur, r).collect();
        let next = match (mode, tails.len()) {
            (_, 0) => return Err(ReasonerError::Config(format!("{r} has no tail at {cur}"))),
            (RolloutMode::Greedy, _) | (_, 1) => tails[0],
            (RolloutMode::Sample, n) => tails[rng.random_range(0..n)],
        };
        path.steps.push((r, next));
        cur = next;
    }
    Ok(path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImitationConfig {
    /// Weight of the causal-entropy bonus.
    pub lambda: f64,
    pub max_len: usize,
    pub rollouts_per_update: usize,
    pub policy_lr: f64,
    pub evaluator_lr: f64,
    pub evaluator_steps: usize,
    pub updates: usize,
    pub hidden: usize,
    pub evaluator_hidden: usize,
    /// Global-norm cap applied to each policy gradient.
    pub grad_clip: f64,
    pub clip: f64,
    pub layer_mask: bool,
    pub seed: u64,
}

impl Default for ImitationConfig {
    fn default() -> Self {
        ImitationConfig {
            lambda: 1e-2,
            max_len: 3,
            rollouts_per_update: 32,
            policy_lr: 0.02,
            evaluator_lr: 0.05,
            evaluator_steps: 2,
            updates: 500,
            hidden: 16,
            evaluator_hidden: 16,
            grad_clip: 5.0,
            clip: DEFAULT_CLIP,
            layer_mask: false,
            seed: 0,
        }
    }
}

impl ImitationConfig {
    pub fn validate(&self) -> Result<(), ReasonerError> {
        let bad = |m: &str| Err(ReasonerError::Config(m.into()));
        if !(self.lambda >= 0.0) {
            return bad("lambda must be non-negative");
        }
        if self.max_len == 0 || self.rollouts_per_update == 0 || self.hidden == 0 || self.evaluator_hidden == 0 {
            return bad("path length, rollout count and hidden widths must be positive");
        }
        if !(self.policy_lr > 0.0 && self.evaluator_lr > 0.0 && self.grad_clip > 0.0) {
            return bad("learning rates and gradient cap must be positive");
        }
        if !(self.clip > 0.0 && self.clip < 0.5) {
            return bad("probability clip must lie in (0, 0.5)");
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub update: usize,
    pub distance_i: f64,
    pub distance_ii: f64,
    pub evaluator_acc: f64,
    pub policy_entropy: f64,
}

pub fn write_history_csv<W: Write>(rows: &[HistoryRow], mut out: W) -> io::Result<()> {
    writeln!(out, "update,distance_I,distance_II,evaluator_acc,policy_entropy")?;
    for r in rows {
        writeln!(
            out,
            "{},{:.10},{:.10},{:.10},{:.10}",
            r.update, r.distance_i, r.distance_ii, r.evaluator_acc, r.policy_entropy
        )?;
    }
    Ok(())
}

/// Interpreter/evaluator pair trained one update at a time.
#[derive(Debug, Clone)]
pub struct InterpreterTrainer<'a> {
    kg: &'a KnowledgeGraph,
    table: &'a EmbeddingTable,
    pub inputs: PolicyInputs,
    pub policy: PolicyNetwork,
    pub evaluator: EvaluatorNetwork,
    experts: Vec<ReasoningPath>,
    expert_feats: Vec<Array1<f64>>,
    expert_occ: OccupancyTable,
    config: ImitationConfig,
    rng: Rng,
    adam: Adam,
    update: usize,
    pub history: Vec<HistoryRow>,
}

impl<'a> InterpreterTrainer<'a> {
    pub fn new(
        kg: &'a KnowledgeGraph,
        table: &'a EmbeddingTable,
        layers: &LayerAssignment,
        experts: &[ReasoningPath],
        config: &ImitationConfig,
    ) -> Result<Self, ReasonerError> {
        config.validate()?;
        if experts.is_empty() {
            return Err(ReasonerError::Empty("expert path set"));
        }
        let inputs = PolicyInputs::new(kg, table, layers, config.layer_mask);
        let mut policy = PolicyNetwork::for_inputs(&inputs, config.hidden, crate::rng::derive_seed(config.seed, 1));
        policy.clip = config.clip;
        let evaluator = EvaluatorNetwork::new(
            table.dim() * (config.max_len + 1),
            config.evaluator_hidden,
            crate::rng::derive_seed(config.seed, 2),
        );
        let expert_feats = experts.iter().map(|p| path_features(p, table, config.max_len)).collect();
        Ok(InterpreterTrainer {
            kg,
            table,
            adam: Adam::new(policy.num_params()),
            inputs,
            policy,
            evaluator,
            experts: experts.to_vec(),
            expert_feats,
            expert_occ: expert_occupancy(experts, config.max_len)?,
            config: config.clone(),
            rng: seeded(crate::rng::derive_seed(config.seed, 3)),
            update: 0,
            history: Vec::new(),
        })
    }

    pub fn config(&self) -> &ImitationConfig {
        &self.config
    }

    pub fn updates_done(&self) -> usize {
        self.update
    }

    pub fn expert_occupancy(&self) -> &OccupancyTable {
        &self.expert_occ
    }

    pub fn expert_origins(&self) -> Vec<EntityId> {
        self.experts.iter().map(|p| p.origin).collect()
    }

    /// Runs one evaluator and one policy update and logs a history row.
    pub fn step(&mut self) -> Result<&HistoryRow, ReasonerError> {
        let cfg = &self.config;
        let n = cfg.rollouts_per_update;
        let picks: Vec<usize> = (0..n).map(|_| self.rng.random_range(0..self.experts.len())).collect();
        let bound = self.policy.bind(&self.inputs);
        let mut generated = Vec::with_capacity(n);
        for &i in &picks {
            let origin = self.experts[i].origin;
            generated.push(rollout(&bound, self.kg, origin, cfg.max_len, RolloutMode::Sample, &mut self.rng)?);
        }
        if self.update == 0 && cfg.max_len >= 2 {
            let mut lens: Vec<usize> = generated.iter().map(|p| p.len()).collect();
            lens.sort_unstable();
            let median = lens[lens.len() / 2];
            if median < 2 {
                return Err(ReasonerError::DeadEndDominated { median });
            }
        }

        let exp_batch: Vec<Array1<f64>> = picks.iter().map(|&i| self.expert_feats[i].clone()).collect();
        let gen_feats: Vec<Array1<f64>> = generated
            .iter()
            .map(|p| path_features(p, self.table, cfg.max_len))
            .collect();
        for _ in 0..cfg.evaluator_steps {
            let (_, g) = self.evaluator.objective_and_grad(&exp_batch, &gen_feats);
            self.evaluator.ascend(&g, cfg.evaluator_lr);
        }

        let rewards: Vec<f64> = gen_feats
            .iter()
            .map(|x| -(1.0 - self.evaluator.forward(x.view())).max(1e-12).ln())
            .collect();
        let baseline = rewards.iter().sum::<f64>() / n as f64;
        let mut grad = PolicyGrad::zeros_like(&self.policy);
        let mut entropy_sum = 0.0;
        let mut visits = 0usize;
        for (path, reward) in generated.iter().zip(&rewards) {
            let adv = (reward - baseline) / n as f64;
            let mut cur = path.origin;
            for &(r, e) in &path.steps {
                self.policy.accumulate_log_prob_grad(&self.inputs, cur, r, adv, &mut grad)?;
                if cfg.lambda > 0.0 {
                    self.policy
                        .accumulate_entropy_grad(&self.inputs, cur, cfg.lambda / n as f64, &mut grad)?;
                }
                entropy_sum += self.policy.forward(&self.inputs, cur)?.entropy();
                visits += 1;
                cur = e;
            }
        }
        let norm = grad.norm();
        if norm > cfg.grad_clip {
            grad.scale(cfg.grad_clip / norm);
        }
        let dir = self.adam.direction(&grad.to_flat());
        let mut params = self.policy.to_flat();
        params.iter_mut().zip(&dir).for_each(|(w, d)| *w += cfg.policy_lr * d);
        self.policy.set_flat(&params)?;

        let gen_occ = expert_occupancy(&generated, cfg.max_len)?;
        let has_steps = generated.iter().any(|p| !p.is_empty());
        let row = HistoryRow {
            update: self.update,
            distance_i: distance_statistic(&self.expert_occ, &gen_occ, cfg.clip)?,
            distance_ii: if has_steps {
                distance_energy(&self.experts, &generated, self.table)?
            } else {
                f64::NAN
            },
            evaluator_acc: self.evaluator.accuracy(&exp_batch, &gen_feats),
            policy_entropy: if visits > 0 { entropy_sum / visits as f64 } else { 0.0 },
        };
        self.update += 1;
        self.history.push(row);
        Ok(self.history.last().expect("row just pushed"))
    }

    pub fn into_parts(self) -> (PolicyNetwork, Vec<HistoryRow>) {
        (self.policy, self.history)
    }
}

/// Trains an interpreter policy for `config.updates` updates.
pub fn train_interpreter(
    kg: &KnowledgeGraph,
    table: &EmbeddingTable,
    layers: &LayerAssignment,
    experts: &[ReasoningPath],
    config: &ImitationConfig,
) -> Result<(PolicyNetwork, Vec<HistoryRow>), ReasonerError> {
    let mut trainer = InterpreterTrainer::new(kg, table, layers, experts, config)?;
    for _ in 0..config.updates {
        trainer.step()?;
    }
    Ok(trainer.into_parts())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{RelationId, Triple};
    use crate::reasoner::policy::TabularPolicy;

    fn chain() -> KnowledgeGraph {
        KnowledgeGraph::from_triples(4, 2, [Triple::new(0, 0, 1), Triple::new(1, 1, 2), Triple::new(2, 0, 3)]).unwrap()
    }

    #[test]
    fn chain_rollout_follows_chain() {
        let kg = chain();
        let pol = TabularPolicy::deterministic([
            (EntityId(0), RelationId(0)),
            (EntityId(1), RelationId(1)),
            (EntityId(2), RelationId(0)),
        ]);
        let mut rng = seeded(0);
        for mode in [RolloutMode::Greedy, RolloutMode::Sample] {
            let p = rollout(&pol, &kg, EntityId(0), 5, mode, &mut rng).unwrap();
            assert_eq!(p.entities(), vec![EntityId(0), EntityId(1), EntityId(2), EntityId(3)]);
        }
    }

    #[test]
    fn sampled_first_action_frequencies() {
        let kg = KnowledgeGraph::from_triples(
            4,
            3,
            [Triple::new(0, 0, 1), Triple::new(0, 1, 2), Triple::new(0, 2, 3)],
        )
        .unwrap();
        let table = EmbeddingTable::random(4, 3, 4, 7);
        let layers = LayerAssignment::single(4);
        let inputs = PolicyInputs::new(&kg, &table, &layers, false);
        let net = PolicyNetwork::for_inputs(&inputs, 6, 5);
        let dist = net.forward(&inputs, EntityId(0)).unwrap();
        let bound = net.bind(&inputs);
        let mut rng = seeded(1);
        let n = 10_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            let p = rollout(&bound, &kg, EntityId(0), 1, RolloutMode::Sample, &mut rng).unwrap();
            counts[p.steps[0].0.index()] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            let p = dist.probs[i];
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((c as f64 - n as f64 * p).abs() <= 3.0 * sd, "action {i}: {c} vs {p}");
        }
    }

    #[test]
    fn greedy_rollout_is_repeatable() {
        let kg = chain();
        let table = EmbeddingTable::random(4, 2, 3, 1);
        let layers = LayerAssignment::single(4);
        let inputs = PolicyInputs::new(&kg, &table, &layers, false);
        let net = PolicyNetwork::for_inputs(&inputs, 4, 2);
        let a = rollout(&net.bind(&inputs), &kg, EntityId(0), 3, RolloutMode::Greedy, &mut seeded(1)).unwrap();
        let b = rollout(&net.bind(&inputs), &kg, EntityId(0), 3, RolloutMode::Greedy, &mut seeded(99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dead_end_graph_is_diagnosed() {
        // a star of one-step paths: every rollout stops after a single step
        let kg = KnowledgeGraph::from_triples(5, 1, (1..5).map(|i| Triple::new(0, 0, i))).unwrap();
        let table = EmbeddingTable::random(5, 1, 3, 1);
        let experts = vec![ReasoningPath {
            origin: EntityId(0),
            steps: vec![(RelationId(0), EntityId(1))],
        }];
        let cfg = ImitationConfig {
            max_len: 3,
            updates: 1,
            ..ImitationConfig::default()
        };
        let err = train_interpreter(&kg, &table, &LayerAssignment::single(5), &experts, &cfg).unwrap_err();
        assert_eq!(err, ReasonerError::DeadEndDominated { median: 1 });
    }

    #[test]
    fn config_validation() {
        assert!(ImitationConfig::default().validate().is_ok());
        assert!(ImitationConfig {
            lambda: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(ImitationConfig {
            rollouts_per_update: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn history_csv_header() {
        let mut buf = Vec::new();
        write_history_csv(
            &[HistoryRow {
                update: 0,
                distance_i: 1.0,
                distance_ii: -0.5,
                evaluator_acc: 0.5,
                policy_entropy: 0.25,
            }],
            &mut buf,
        )
        .unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("update,distance_I,distance_II,evaluator_acc,policy_entropy\n0,1.0000000000,"));
    }
}
