//! WebAssembly bindings for the static page in `www/`.
//!
//! A [`Lab`] holds a small synthetic relational graph with a trained
//! codebook. From the page one can scatter transmitted symbols at a chosen
//! SNR, compare hard decoding with reasoning-assisted recovery, and train
//! the imitation learner on the eight-entity toy.

use wasm_bindgen::prelude::*;

use irml_core::channel::{transmit, ChannelModel};
use irml_core::codec::{encode, train_encoder, CodecConfig, EmbeddingTable};
use irml_core::decoder::{
    entity_symbols, hard_decode, noise_matched_alpha, path_links, recover_with_reasoning, symbol_error_rate,
    DecodeReport, LayerCodebooks, ReasoningContext,
};
use irml_core::kg::{layer_by_degree, sample_expert_paths, EntityId, LayerAssignment};
use irml_core::reasoner::{
    expert_occupancy, occupancy_measure, total_variation, train_interpreter, ImitationConfig, OccupancyMode,
    PolicyInputs,
};
use irml_core::rng::derive_seed;
use irml_core::synth::{fb_like, imitation_toy, FbLikeSpec};
use irml_core::KnowledgeGraph;

const THRESHOLDS: [usize; 2] = [50, 6];

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Lab {
    kg: KnowledgeGraph,
    layers: LayerAssignment,
    table: EmbeddingTable,
    residual: f64,
    seed: u64,
}

#[wasm_bindgen]
impl Lab {
    /// Builds a graph of `entities` entities and trains a `dim`-dimensional
    /// codebook on it.
    #[wasm_bindgen(constructor)]
    pub fn new(entities: usize, dim: usize, epochs: usize, seed: u32) -> Result<Lab, JsError> {
        let seed = u64::from(seed);
        let kg = fb_like(&FbLikeSpec {
            entities: entities.max(20),
            relations: 20,
            triples: entities.max(20) * 8,
            types: 4,
            seed,
            ..FbLikeSpec::default()
        });
        let layers = layer_by_degree(&kg, &THRESHOLDS).map_err(js)?;
        let cfg = CodecConfig {
            dim: dim.max(2),
            epochs: epochs.max(1),
            batch_size: 64,
            seed,
            ..CodecConfig::default()
        };
        let table = train_encoder(&kg, &cfg).map_err(js)?.table;
        let residual = kg.triples().iter().map(|t| table.residual_sq(t)).sum::<f64>() / kg.num_triples() as f64;
        Ok(Lab {
            kg,
            layers,
            table,
            residual,
            seed,
        })
    }

    #[wasm_bindgen(getter)]
    pub fn entities(&self) -> usize {
        self.kg.num_entities()
    }

    #[wasm_bindgen(getter)]
    pub fn triples(&self) -> usize {
        self.kg.num_triples()
    }

    /// Entities per layer, highest layer first.
    #[wasm_bindgen(js_name = layerSizes)]
    pub fn layer_sizes(&self) -> Vec<usize> {
        self.layers.counts()
    }

    /// Sends every entity once at `snr_db` and returns five numbers per
    /// entity: codeword x, y, layer, received x, y. Only the first two
    /// coordinates are reported.
    pub fn constellation(&self, snr_db: f64) -> Result<Vec<f64>, JsError> {
        let ids: Vec<EntityId> = self.kg.entities().collect();
        let signal = encode(ids.as_slice(), &self.table).map_err(js)?;
        let rx = transmit(&signal, &ChannelModel::awgn(snr_db, derive_seed(self.seed, 1))).map_err(js)?;
        let mut out = Vec::with_capacity(ids.len() * 5);
        for (i, &e) in ids.iter().enumerate() {
            let c = self.table.entity(e);
            let y = rx.signal.symbol_samples(i);
            out.extend([c[0], c[1], f64::from(self.layers.layer(e)), y[0] / rx.gain, y[1] / rx.gain]);
        }
        Ok(out)
    }

    /// Symbol error rates over `paths` sampled paths at `snr_db`:
    /// `[hard overall, reasoning overall, hard per layer.., reasoning per layer..]`.
    pub fn ser(&self, snr_db: f64, paths: usize) -> Result<Vec<f64>, JsError> {
        let (hard, reasoned) = ser_reports(self, snr_db, paths)?;
        let mut out = vec![hard.overall.ser(), reasoned.overall.ser()];
        out.extend(hard.per_layer.iter().map(|t| t.ser()));
        out.extend(reasoned.per_layer.iter().map(|t| t.ser()));
        Ok(out)
    }
}

fn ser_reports(lab: &Lab, snr_db: f64, paths: usize) -> Result<(DecodeReport, DecodeReport), JsError> {
    let levels = lab.layers.num_layers();
    let books = LayerCodebooks::new(&lab.layers);
    let sampled = sample_expert_paths(&lab.kg, paths.max(1), 3, derive_seed(lab.seed, 2)).map_err(js)?;
    let mut hard = DecodeReport::empty(levels);
    let mut reasoned = DecodeReport::empty(levels);
    for (i, p) in sampled.paths.iter().enumerate() {
        let truth = p.entities();
        let signal = encode(truth.as_slice(), &lab.table).map_err(js)?;
        let model = ChannelModel::awgn(snr_db, derive_seed(derive_seed(lab.seed, 3), i as u64));
        let rx = transmit(&signal, &model).map_err(js)?;
        let h = entity_symbols(&hard_decode(&rx.signal, &lab.table, rx.gain).map_err(js)?);
        let ctx = ReasoningContext {
            kg: Some(&lab.kg),
            books: Some(&books),
            alpha: noise_matched_alpha(lab.residual, lab.table.dim(), rx.noise_var),
        };
        let r = recover_with_reasoning(&rx.signal, &lab.table, rx.gain, &path_links(p, true), &ctx).map_err(js)?;
        hard.merge(&symbol_error_rate(&h, &truth, &lab.layers).map_err(js)?);
        reasoned.merge(&symbol_error_rate(&entity_symbols(&r), &truth, &lab.layers).map_err(js)?);
    }
    Ok((hard, reasoned))
}

/// Trains the interpreter on the eight-entity toy for `updates` updates.
/// Returns the Distance-I history followed by the total variation between
/// the learned and expert occupancy.
#[wasm_bindgen]
pub fn imitation(updates: usize, lambda: f64, seed: u32) -> Result<Vec<f64>, JsError> {
    let seed = u64::from(seed);
    let (kg, experts) = imitation_toy();
    let layers = LayerAssignment::single(kg.num_entities());
    let table = EmbeddingTable::random(kg.num_entities(), kg.num_relations(), 8, derive_seed(seed, 4));
    let cfg = ImitationConfig {
        updates: updates.max(1),
        lambda,
        max_len: 2,
        seed,
        ..ImitationConfig::default()
    };
    let (net, history) = train_interpreter(&kg, &table, &layers, &experts, &cfg).map_err(js)?;
    let inputs = PolicyInputs::new(&kg, &table, &layers, false);
    let policy = net.bind(&inputs);
    let origins: Vec<EntityId> = experts.iter().map(|p| p.origin).collect();
    let occ = occupancy_measure(&policy, &kg, &origins, 2, OccupancyMode::Exact).map_err(js)?;
    let tv = total_variation(&occ, &expert_occupancy(&experts, 2).map_err(js)?).map_err(js)?;
    let mut out: Vec<f64> = history.iter().map(|r| r.distance_i).collect();
    out.push(tv);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lab() -> Lab {
        Lab::new(150, 2, 10, 4).unwrap_or_else(|_| panic!("lab builds"))
    }

    #[test]
    fn constellation_reports_five_numbers_per_entity() {
        let lab = lab();
        let pts = lab.constellation(8.0).unwrap_or_default();
        assert_eq!(pts.len(), 5 * lab.entities());
        assert!(pts.chunks(5).all(|p| (1.0..=3.0).contains(&p[2])));
        assert_eq!(lab.layer_sizes().iter().sum::<usize>(), lab.entities());
    }

    #[test]
    fn ser_vector_shape_and_noise_trend() {
        let lab = lab();
        let low = lab.ser(-4.0, 60).unwrap_or_default();
        let high = lab.ser(20.0, 60).unwrap_or_default();
        assert_eq!(low.len(), 2 + 2 * 3);
        assert!(high[0] <= low[0]);
    }

    #[test]
    fn imitation_returns_history_and_tv() {
        let out = imitation(30, 0.01, 1).unwrap_or_default();
        assert_eq!(out.len(), 31);
        let tv = out[30];
        assert!((0.0..=1.0).contains(&tv));
    }
}
