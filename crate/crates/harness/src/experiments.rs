//! The experiment pipelines. Each returns its CSVs in memory; nothing here
//! touches the output directory.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use irml_core::channel::{transmit, ChannelModel};
use irml_core::codec::{encode, train_encoder, CodecConfig, EmbeddingTable};
use irml_core::decoder::{
    entity_symbols, hard_decode, noise_matched_alpha, path_links, recover_with_reasoning, symbol_error_rate,
    write_ser_csv, DecodeReport, LayerCodebooks, ReasoningContext,
};
use irml_core::federation::{
    quadratic_suite, run_federated_classification, run_quadratic, split_labels, write_aggregate_csv,
    write_bound_csv, write_trace_csv, ClassifierConfig, FederationConfig,
};
use irml_core::kg::{
    degree_capped, layer_by_degree, layer_for_degree, partition, sample_expert_paths, uniform_subgraph, EntityId,
    ExpertPathSet, LayerAssignment, PartitionSpec,
};
use irml_core::reasoner::{
    expert_occupancy, occupancy_measure, rollout, total_variation, train_interpreter, write_history_csv,
    ImitationConfig, OccupancyMode, PolicyInputs, RolloutMode,
};
use irml_core::rng::{derive_seed, seeded};
use irml_core::synth::imitation_toy;
use irml_core::KnowledgeGraph;

use crate::config::{Alpha, ExperimentConfig, ExperimentId, ToyFeatures};
use crate::{data, runtime, ChartSpec, HarnessError, Output};

/// Runs the pipeline named in `config`.
pub fn compute(config: &ExperimentConfig) -> Result<Output, HarnessError> {
    match config.experiment {
        ExperimentId::SerVsSnr => ser_vs_snr(config),
        ExperimentId::AccVsDegree => acc_vs_degree(config),
        ExperimentId::LayeringAblation => layering_ablation(config),
        ExperimentId::ImitationToy => imitation(config),
        ExperimentId::FedNoniid => fed_noniid(config),
        ExperimentId::FedServers => fed_servers(config),
        ExperimentId::BoundCheck => bound_check(config),
        ExperimentId::Constellation => constellation(config),
    }
}

/// Degree bands of the layering ablation, one entry per layer count.
pub const ABLATION_BANDS: [&[usize]; 5] = [&[], &[60], &[60, 30], &[80, 60, 30], &[80, 60, 30, 15]];

fn chart(title: &str, x: &str, y: &[&str], group: Option<&str>) -> ChartSpec {
    ChartSpec {
        title: title.into(),
        x: x.into(),
        y: y.iter().map(|s| s.to_string()).collect(),
        group: group.map(String::from),
    }
}

fn codec_config(c: &ExperimentConfig, seed: u64) -> CodecConfig {
    CodecConfig {
        dim: c.dim,
        margin: c.margin,
        learning_rate: c.learning_rate,
        epochs: c.epochs,
        batch_size: c.batch_size,
        negatives_per_positive: c.negatives,
        seed,
    }
}

fn train_table(kg: &KnowledgeGraph, c: &ExperimentConfig, seed: u64) -> Result<EmbeddingTable, HarnessError> {
    Ok(train_encoder(kg, &codec_config(c, seed)).map_err(runtime)?.table)
}

fn mean_residual(kg: &KnowledgeGraph, table: &EmbeddingTable) -> f64 {
    kg.triples().iter().map(|t| table.residual_sq(t)).sum::<f64>() / kg.num_triples().max(1) as f64
}

fn blend(c: &ExperimentConfig, rbar: f64, dim: usize, noise_var: f64) -> f64 {
    match c.alpha {
        Alpha::Auto => noise_matched_alpha(rbar, dim, noise_var),
        Alpha::Fixed(a) => a,
    }
}

/// Noise seed for message `i` at grid point `point`.
fn noise_seed(seed: u64, point: usize, i: usize) -> u64 {
    derive_seed(derive_seed(seed, 0xC4A7 + point as u64), i as u64)
}

fn keep_connected(kg: &KnowledgeGraph, keep: &[EntityId]) -> (KnowledgeGraph, Vec<EntityId>) {
    let sub = kg.induced_subgraph(keep);
    let live: Vec<EntityId> = sub.entities().filter(|&e| sub.degree(e) > 0).collect();
    let original: Vec<EntityId> = live.iter().map(|e| keep[e.index()]).collect();
    (sub.induced_subgraph(&live), original)
}

/// One transmitted path: decoded entities from every decoder in `decoders`.
struct Trial<'a> {
    kg: &'a KnowledgeGraph,
    table: &'a EmbeddingTable,
    rbar: f64,
}

impl Trial<'_> {
    fn recover(
        &self,
        c: &ExperimentConfig,
        paths: &ExpertPathSet,
        seed: u64,
        point: usize,
        snr: f64,
        books: Option<&LayerCodebooks<'_>>,
    ) -> Result<Vec<(Vec<EntityId>, Vec<EntityId>, Vec<EntityId>)>, HarnessError> {
        paths
            .paths
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let truth = p.entities();
                let signal = encode(truth.as_slice(), self.table).map_err(runtime)?;
                let model = ChannelModel {
                    second_hop_snr_db: c.second_hop_snr_db,
                    ..ChannelModel::awgn(snr, noise_seed(seed, point, i))
                };
                let rx = transmit(&signal, &model).map_err(runtime)?;
                let hard = entity_symbols(&hard_decode(&rx.signal, self.table, rx.gain).map_err(runtime)?);
                let ctx = ReasoningContext {
                    kg: Some(self.kg),
                    books,
                    alpha: blend(c, self.rbar, self.table.dim(), rx.noise_var),
                };
                let links = path_links(p, true);
                let reasoned = recover_with_reasoning(&rx.signal, self.table, rx.gain, &links, &ctx).map_err(runtime)?;
                Ok((truth, hard, entity_symbols(&reasoned)))
            })
            .collect()
    }
}

fn ser_vs_snr(c: &ExperimentConfig) -> Result<Output, HarnessError> {
    let (full, inputs) = data::relational_graph(c)?;
    let levels = c.layer_thresholds.len() + 1;
    let mut hard: Vec<DecodeReport> = vec![DecodeReport::empty(levels); c.snr_db.len()];
    let mut reasoned = hard.clone();
    let mut sizes = String::from("seed,entities,triples,layer,layer_entities\n");
    for &seed in &c.seeds {
        let kg = if c.full {
            full.clone()
        } else {
            uniform_subgraph(&full, c.subgraph_entities, seed).0
        };
        let layers = layer_by_degree(&kg, &c.layer_thresholds).map_err(runtime)?;
        for (l, n) in layers.counts().iter().enumerate() {
            let _ = writeln!(sizes, "{seed},{},{},{},{n}", kg.num_entities(), kg.num_triples(), l + 1);
        }
        let table = train_table(&kg, c, seed)?;
        let paths = sample_expert_paths(&kg, c.paths, c.path_len, derive_seed(seed, 0xA7)).map_err(runtime)?;
        let books = LayerCodebooks::new(&layers);
        let trial = Trial {
            kg: &kg,
            table: &table,
            rbar: mean_residual(&kg, &table),
        };
        let per_point: Vec<(DecodeReport, DecodeReport)> = c
            .snr_db
            .par_iter()
            .enumerate()
            .map(|(point, &snr)| {
                let mut h = DecodeReport::empty(levels);
                let mut r = DecodeReport::empty(levels);
                for (truth, hd, rd) in trial.recover(c, &paths, seed, point, snr, Some(&books))? {
                    h.merge(&symbol_error_rate(&hd, &truth, &layers).map_err(runtime)?);
                    r.merge(&symbol_error_rate(&rd, &truth, &layers).map_err(runtime)?);
                }
                Ok((h, r))
            })
            .collect::<Result<_, HarnessError>>()?;
        for (point, (h, r)) in per_point.iter().enumerate() {
            hard[point].merge(h);
            reasoned[point].merge(r);
        }
    }
    let write = |reports: &[DecodeReport]| -> Result<String, HarnessError> {
        let rows: Vec<(f64, &DecodeReport)> = c.snr_db.iter().copied().zip(reports).collect();
        let mut buf = Vec::new();
        write_ser_csv(&rows, &mut buf).map_err(runtime)?;
        String::from_utf8(buf).map_err(runtime)
    };
    Ok(Output {
        csvs: vec![
            ("ser_hard.csv".into(), write(&hard)?),
            ("ser_reasoning.csv".into(), write(&reasoned)?),
            ("layer_sizes.csv".into(), sizes),
        ],
        charts: vec![
            (
                "ser_hard.svg".into(),
                "ser_hard.csv".into(),
                chart("SER, nearest codeword", "snr_db", &["ser"], Some("layer")),
            ),
            (
                "ser_reasoning.svg".into(),
                "ser_reasoning.csv".into(),
                chart("SER, layered reasoning recovery", "snr_db", &["ser"], Some("layer")),
            ),
        ],
        inputs,
    })
}

/// Entities of degree at most `degree_cap` with their degree in the full
/// graph.
struct Capped {
    kg: KnowledgeGraph,
    degree: Vec<usize>,
}

fn capped_graph(c: &ExperimentConfig) -> Result<(Capped, Vec<std::path::PathBuf>), HarnessError> {
    let (full, inputs) = data::relational_graph(c)?;
    let (kg, original) = keep_connected(&full, &degree_capped(&full, c.degree_cap));
    let all = full.degrees();
    let degree = original.iter().map(|e| all[e.index()]).collect();
    Ok((Capped { kg, degree }, inputs))
}

fn acc_vs_degree(c: &ExperimentConfig) -> Result<Output, HarnessError> {
    let (capped, inputs) = capped_graph(c)?;
    let width = 20usize;
    let buckets = c.degree_cap.div_ceil(width).max(1);
    // [point][bucket] = (symbols, correct)
    let mut tally = vec![vec![(0usize, 0usize); buckets]; c.snr_db.len()];
    for &seed in &c.seeds {
        let kg = &capped.kg;
        let table = train_table(kg, c, seed)?;
        let paths = sample_expert_paths(kg, c.paths, c.path_len, derive_seed(seed, 0xA7)).map_err(runtime)?;
        let trial = Trial {
            kg,
            table: &table,
            rbar: mean_residual(kg, &table),
        };
        let per_point: Vec<Vec<(usize, usize)>> = c
            .snr_db
            .par_iter()
            .enumerate()
            .map(|(point, &snr)| {
                let mut t = vec![(0usize, 0usize); buckets];
                for (truth, _, rd) in trial.recover(c, &paths, seed, point, snr, None)? {
                    for (d, e) in rd.iter().zip(&truth) {
                        let b = ((capped.degree[e.index()].max(1) - 1) / width).min(buckets - 1);
                        t[b].0 += 1;
                        t[b].1 += usize::from(d == e);
                    }
                }
                Ok(t)
            })
            .collect::<Result<_, HarnessError>>()?;
        for (acc, t) in tally.iter_mut().zip(per_point) {
            for (a, b) in acc.iter_mut().zip(t) {
                a.0 += b.0;
                a.1 += b.1;
            }
        }
    }
    let mut csv = String::from("snr_db,degree_lo,degree_hi,symbols,correct,accuracy\n");
    for (point, &snr) in c.snr_db.iter().enumerate() {
        for (b, &(n, ok)) in tally[point].iter().enumerate() {
            let acc = if n == 0 { f64::NAN } else { ok as f64 / n as f64 };
            let _ = writeln!(csv, "{snr},{},{},{n},{ok},{acc:.10}", b * width + 1, (b + 1) * width);
        }
    }
    Ok(Output {
        csvs: vec![("acc_vs_degree.csv".into(), csv)],
        charts: vec![(
            "acc_vs_degree.svg".into(),
            "acc_vs_degree.csv".into(),
            chart("Recovery accuracy by entity degree", "degree_hi", &["accuracy"], Some("snr_db")),
        )],
        inputs,
    })
}

fn layering_ablation(c: &ExperimentConfig) -> Result<Output, HarnessError> {
    let (capped, inputs) = capped_graph(c)?;
    let assignments: Vec<LayerAssignment> = ABLATION_BANDS
        .iter()
        .map(|bands| {
            let layer_of = capped.degree.iter().map(|&d| layer_for_degree(d, bands)).collect();
            LayerAssignment::from_layers(bands.to_vec(), layer_of)
        })
        .collect();
    let books: Vec<LayerCodebooks<'_>> = assignments.iter().map(LayerCodebooks::new).collect();
    // [point][layer count] = (symbols, correct)
    let mut tally = vec![vec![(0usize, 0usize); ABLATION_BANDS.len()]; c.snr_db.len()];
    for &seed in &c.seeds {
        let kg = &capped.kg;
        let table = train_table(kg, c, seed)?;
        let paths = sample_expert_paths(kg, c.paths, c.path_len, derive_seed(seed, 0xA7)).map_err(runtime)?;
        let trial = Trial {
            kg,
            table: &table,
            rbar: mean_residual(kg, &table),
        };
        for (point, &snr) in c.snr_db.iter().enumerate() {
            let counts: Vec<(usize, usize)> = books
                .par_iter()
                .map(|book| {
                    let mut n = 0;
                    let mut ok = 0;
                    for (truth, _, rd) in trial.recover(c, &paths, seed, point, snr, Some(book))? {
                        n += truth.len();
                        ok += rd.iter().zip(&truth).filter(|(a, b)| a == b).count();
                    }
                    Ok((n, ok))
                })
                .collect::<Result<_, HarnessError>>()?;
            for (a, b) in tally[point].iter_mut().zip(counts) {
                a.0 += b.0;
                a.1 += b.1;
            }
        }
    }
    let mut csv = String::from("snr_db,layers,thresholds,symbols,correct,accuracy\n");
    for (point, &snr) in c.snr_db.iter().enumerate() {
        for (l, &(n, ok)) in tally[point].iter().enumerate() {
            let th: Vec<String> = ABLATION_BANDS[l].iter().map(|t| t.to_string()).collect();
            let _ = writeln!(csv, "{snr},{},{},{n},{ok},{:.10}", l + 1, th.join("/"), ok as f64 / n.max(1) as f64);
        }
    }
    Ok(Output {
        csvs: vec![("layering_ablation.csv".into(), csv)],
        charts: vec![(
            "layering_ablation.svg".into(),
            "layering_ablation.csv".into(),
            chart("Recovery accuracy by layer count", "layers", &["accuracy"], Some("snr_db")),
        )],
        inputs,
    })
}

fn imitation(c: &ExperimentConfig) -> Result<Output, HarnessError> {
    let (kg, experts) = imitation_toy();
    let layers = LayerAssignment::single(kg.num_entities());
    let origins: Vec<EntityId> = experts.iter().map(|p| p.origin).collect();
    let horizon = c.path_len;
    let target = expert_occupancy(&experts, horizon).map_err(runtime)?;
    let mut summary = String::from("seed,total_variation,greedy_replay,final_distance_I\n");
    let mut csvs = Vec::new();
    let mut charts = Vec::new();
    for &seed in &c.seeds {
        let table = match c.toy_features {
            ToyFeatures::Random => EmbeddingTable::random(kg.num_entities(), kg.num_relations(), c.dim, derive_seed(seed, 0x70)),
            ToyFeatures::Codec => train_table(&kg, c, seed)?,
        };
        let cfg = ImitationConfig {
            lambda: c.lambda,
            max_len: horizon,
            policy_lr: c.policy_lr,
            updates: c.updates,
            seed,
            ..ImitationConfig::default()
        };
        let (net, history) = train_interpreter(&kg, &table, &layers, &experts, &cfg).map_err(runtime)?;
        let inputs = PolicyInputs::new(&kg, &table, &layers, false);
        let policy = net.bind(&inputs);
        let occ = occupancy_measure(&policy, &kg, &origins, horizon, OccupancyMode::Exact).map_err(runtime)?;
        let tv = total_variation(&occ, &target).map_err(runtime)?;
        let mut replayed = 0usize;
        for p in &experts {
            let path = rollout(&policy, &kg, p.origin, horizon, RolloutMode::Greedy, &mut seeded(seed)).map_err(runtime)?;
            replayed += usize::from(path == *p);
        }
        let last = history.last().map(|r| r.distance_i).unwrap_or(f64::NAN);
        let _ = writeln!(
            summary,
            "{seed},{tv:.10},{:.10},{last:.10}",
            replayed as f64 / experts.len() as f64
        );
        let mut buf = Vec::new();
        write_history_csv(&history, &mut buf).map_err(runtime)?;
        let name = format!("imitation_history_seed{seed}.csv");
        charts.push((
            format!("imitation_history_seed{seed}.svg"),
            name.clone(),
            chart("Imitation training", "update", &["distance_I", "evaluator_acc"], None),
        ));
        csvs.push((name, String::from_utf8(buf).map_err(runtime)?));
    }
    csvs.insert(0, ("imitation_summary.csv".into(), summary));
    Ok(Output {
        csvs,
        charts,
        inputs: Vec::new(),
    })
}

fn classifier(c: &ExperimentConfig) -> ClassifierConfig {
    ClassifierConfig {
        hidden: c.gcn_hidden,
        learning_rate: c.gcn_lr,
        ..ClassifierConfig::default()
    }
}

fn fed_noniid(c: &ExperimentConfig) -> Result<Output, HarnessError> {
    let (kg, inputs) = data::citation_graph(c)?;
    let mut summary = String::from("seed,servers,noniid_p,final_accuracy,dropped_edges\n");
    let mut csvs = Vec::new();
    let mut charts = Vec::new();
    for &seed in &c.seeds {
        let split = split_labels(&kg, 20, 500, seed).map_err(runtime)?;
        for &k in &c.servers {
            let jobs: Vec<f64> = c.noniid_p.clone();
            let runs: Vec<_> = jobs
                .par_iter()
                .map(|&p| {
                    let part = partition(&kg, &PartitionSpec::new(k, p, seed)).map_err(runtime)?;
                    let fed = FederationConfig {
                        local_steps: c.local_steps,
                        rounds: c.rounds,
                        seed,
                        shared_seed: false,
                    };
                    run_federated_classification(&kg, &part, &split, &classifier(c), &fed).map_err(runtime)
                })
                .collect::<Result<_, HarnessError>>()?;
            let mut curves = String::from("round,noniid_p,aggregated_val_accuracy\n");
            for (&p, run) in jobs.iter().zip(&runs) {
                let _ = writeln!(
                    summary,
                    "{seed},{k},{p},{:.10},{}",
                    run.global_accuracy.last().copied().unwrap_or(f64::NAN),
                    run.dropped_edges
                );
                for (r, acc) in run.global_accuracy.iter().enumerate() {
                    let _ = writeln!(curves, "{},{p},{acc:.10}", r + 1);
                }
                let tag = format!("K{k}_p{p}_seed{seed}");
                let mut trace = Vec::new();
                write_trace_csv(run, &mut trace).map_err(runtime)?;
                csvs.push((format!("trace_{tag}.csv"), String::from_utf8(trace).map_err(runtime)?));
                let mut agg = Vec::new();
                write_aggregate_csv(run, &mut agg).map_err(runtime)?;
                csvs.push((format!("aggregate_{tag}.csv"), String::from_utf8(agg).map_err(runtime)?));
            }
            let name = format!("curves_K{k}_seed{seed}.csv");
            charts.push((
                format!("curves_K{k}_seed{seed}.svg"),
                name.clone(),
                chart("Aggregated validation accuracy", "round", &["aggregated_val_accuracy"], Some("noniid_p")),
            ));
            csvs.push((name, curves));
        }
    }
    csvs.insert(0, ("fed_noniid_summary.csv".into(), summary));
    Ok(Output { csvs, charts, inputs })
}

fn fed_servers(c: &ExperimentConfig) -> Result<Output, HarnessError> {
    let (kg, inputs) = data::citation_graph(c)?;
    let mut csv = String::from("seed,noniid_p,servers,final_accuracy\n");
    let mut sums = vec![vec![0.0; c.servers.len()]; c.noniid_p.len()];
    for &seed in &c.seeds {
        let split = split_labels(&kg, 20, 500, seed).map_err(runtime)?;
        let jobs: Vec<(usize, usize)> = (0..c.noniid_p.len())
            .flat_map(|pi| (0..c.servers.len()).map(move |ki| (pi, ki)))
            .collect();
        let accs: Vec<f64> = jobs
            .par_iter()
            .map(|&(pi, ki)| {
                let part = partition(&kg, &PartitionSpec::new(c.servers[ki], c.noniid_p[pi], seed)).map_err(runtime)?;
                let fed = FederationConfig {
                    local_steps: c.local_steps,
                    rounds: c.rounds,
                    seed,
                    shared_seed: false,
                };
                let run = run_federated_classification(&kg, &part, &split, &classifier(c), &fed).map_err(runtime)?;
                Ok(run.global_accuracy.last().copied().unwrap_or(f64::NAN))
            })
            .collect::<Result<_, HarnessError>>()?;
        for (&(pi, ki), acc) in jobs.iter().zip(accs) {
            let _ = writeln!(csv, "{seed},{},{},{acc:.10}", c.noniid_p[pi], c.servers[ki]);
            sums[pi][ki] += acc;
        }
    }
    let mut mean = String::from("noniid_p,servers,mean_accuracy\n");
    for (pi, p) in c.noniid_p.iter().enumerate() {
        for (ki, k) in c.servers.iter().enumerate() {
            let _ = writeln!(mean, "{p},{k},{:.10}", sums[pi][ki] / c.seeds.len() as f64);
        }
    }
    Ok(Output {
        csvs: vec![("fed_servers.csv".into(), csv), ("fed_servers_mean.csv".into(), mean)],
        charts: vec![(
            "fed_servers.svg".into(),
            "fed_servers_mean.csv".into(),
            chart("Accuracy by server count", "servers", &["mean_accuracy"], Some("noniid_p")),
        )],
        inputs,
    })
}

fn bound_check(c: &ExperimentConfig) -> Result<Output, HarnessError> {
    let mut summary = String::from("seed,logged_points,violations,step_sizes_ok\n");
    let mut csvs = Vec::new();
    let mut charts = Vec::new();
    for &seed in &c.seeds {
        let suite = quadratic_suite(c.servers[0], c.bound_dim, c.mu, c.smoothness, c.spread, c.noise_std, seed);
        let run = run_quadratic(&suite, c.local_steps, c.rounds, seed).map_err(runtime)?;
        let violations = run.rows.iter().filter(|r| r.observed_gap > r.bound).count();
        let _ = writeln!(summary, "{seed},{},{violations},{}", run.rows.len(), run.step_sizes_ok);
        let mut buf = Vec::new();
        write_bound_csv(&run.rows, &mut buf).map_err(runtime)?;
        let name = format!("bound_seed{seed}.csv");
        charts.push((
            format!("bound_seed{seed}.svg"),
            name.clone(),
            chart("Optimality gap and bound", "T", &["observed_gap", "bound"], None),
        ));
        csvs.push((name, String::from_utf8(buf).map_err(runtime)?));
    }
    csvs.insert(0, ("bound_summary.csv".into(), summary));
    Ok(Output {
        csvs,
        charts,
        inputs: Vec::new(),
    })
}

fn constellation(c: &ExperimentConfig) -> Result<Output, HarnessError> {
    let (full, inputs) = data::relational_graph(c)?;
    let mut points = String::from("seed,entity,layer,x,y\n");
    let mut summary = String::from("seed,layer,points,mean_pairwise_distance\n");
    for &seed in &c.seeds {
        let kg = if c.full {
            full.clone()
        } else {
            uniform_subgraph(&full, c.subgraph_entities, seed).0
        };
        let layers = layer_by_degree(&kg, &c.layer_thresholds).map_err(runtime)?;
        let table = train_table(&kg, c, seed)?;
        // Spread the message as evenly as the layers allow.
        let levels = layers.num_layers();
        let mut rng = seeded(derive_seed(seed, 0x17));
        let mut message = Vec::new();
        for l in 0..levels {
            let mut members = layers.members(l as u8 + 1);
            members.shuffle(&mut rng);
            let want = c.message_entities / levels + usize::from(l < c.message_entities % levels);
            message.extend(members.into_iter().take(want));
        }
        let signal = encode(message.as_slice(), &table).map_err(runtime)?;
        if signal.samples.len() != message.len() * table.dim() {
            return Err(HarnessError::Runtime("encoded length mismatch".into()));
        }
        for (i, e) in message.iter().enumerate() {
            let s = signal.symbol_samples(i);
            let y = s.get(1).copied().unwrap_or(0.0);
            let _ = writeln!(points, "{seed},{},{},{:.10},{y:.10}", e.0, layers.layer(*e), s[0]);
        }
        for l in 1..=levels as u8 {
            let vecs: Vec<&[f64]> = message.iter().filter(|e| layers.layer(**e) == l).map(|e| table.entity(*e)).collect();
            let mut sum = 0.0;
            let mut pairs = 0usize;
            for a in 0..vecs.len() {
                for b in a + 1..vecs.len() {
                    sum += vecs[a].iter().zip(vecs[b]).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                    pairs += 1;
                }
            }
            let mean = if pairs == 0 { f64::NAN } else { sum / pairs as f64 };
            let _ = writeln!(summary, "{seed},{l},{},{mean:.10}", vecs.len());
        }
    }
    Ok(Output {
        csvs: vec![("constellation.csv".into(), points), ("constellation_summary.csv".into(), summary)],
        charts: Vec::new(),
        inputs,
    })
}
