use super::{EntityId, KgError, KnowledgeGraph};

/// Degree-based abstraction layers. Layer 1 is the most abstract
/// (highest degree); layer `L = thresholds.len() + 1` is the most concrete.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerAssignment {
    thresholds: Vec<usize>,
    layer_of: Vec<u8>,
}

impl LayerAssignment {
    /// Every entity in one layer.
    pub fn single(n_entities: usize) -> Self {
        LayerAssignment {
            thresholds: Vec::new(),
            layer_of: vec![1; n_entities],
        }
    }

    pub fn from_layers(thresholds: Vec<usize>, layer_of: Vec<u8>) -> Self {
        LayerAssignment { thresholds, layer_of }
    }

    pub fn thresholds(&self) -> &[usize] {
        &self.thresholds
    }

    pub fn num_layers(&self) -> usize {
        self.thresholds.len() + 1
    }

    /// 1-based layer index.
    pub fn layer(&self, e: EntityId) -> u8 {
        self.layer_of[e.index()]
    }

    pub fn layers(&self) -> &[u8] {
        &self.layer_of
    }

    pub fn members(&self, layer: u8) -> Vec<EntityId> {
        self.layer_of
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == layer)
            .map(|(i, _)| EntityId(i as u32))
            .collect()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_layers()];
        for &l in &self.layer_of {
            c[l as usize - 1] += 1;
        }
        c
    }

    /// Layers restricted to `keep` (same order), e.g. for a server shard.
    pub fn select(&self, keep: &[EntityId]) -> LayerAssignment {
        LayerAssignment {
            thresholds: self.thresholds.clone(),
            layer_of: keep.iter().map(|&e| self.layer(e)).collect(),
        }
    }
}

/// Layer for a degree under strictly descending `thresholds`:
/// layer 1 holds `degree > t[0]`, layer `i` (`2 ≤ i ≤ m`) holds
/// `degree ≥ t[i-1]`, and layer `m + 1` takes the rest. With `[50, 6]` that
/// gives high `> 50`, mid `6..=50`, low `< 6`.
pub fn layer_for_degree(degree: usize, thresholds: &[usize]) -> u8 {
    for (i, &t) in thresholds.iter().enumerate() {
        let hit = if i == 0 { degree > t } else { degree >= t };
        if hit {
            return (i + 1) as u8;
        }
    }
    (thresholds.len() + 1) as u8
}

pub fn layer_by_degree(kg: &KnowledgeGraph, thresholds: &[usize]) -> Result<LayerAssignment, KgError> {
    if thresholds.iter().any(|&t| t == 0) {
        return Err(KgError::Config("layer thresholds must be positive".into()));
    }
    if thresholds.windows(2).any(|w| w[0] <= w[1]) {
        return Err(KgError::Config(format!(
            "layer thresholds must be strictly descending, got {thresholds:?}"
        )));
    }
    if thresholds.len() >= u8::MAX as usize {
        return Err(KgError::Config("too many layers".into()));
    }
    let layer_of = kg
        .entities()
        .map(|e| layer_for_degree(kg.degree(e), thresholds))
        .collect();
    Ok(LayerAssignment {
        thresholds: thresholds.to_vec(),
        layer_of,
    })
}
