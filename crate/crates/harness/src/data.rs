//! Dataset loading with seeded synthetic stand-ins when no path is given.

use std::path::PathBuf;

use irml_core::kg::{load_planetoid, load_triples, parse_planetoid, KgError};
use irml_core::synth::{fb_like, planetoid_like, FbLikeSpec, PlanetoidSpec};
use irml_core::KnowledgeGraph;

use crate::config::{ExperimentConfig, Planetoid};
use crate::HarnessError;

fn data_error(e: KgError) -> HarnessError {
    HarnessError::Data(e.to_string())
}

fn require(path: &PathBuf) -> Result<(), HarnessError> {
    if path.exists() {
        Ok(())
    } else {
        Err(HarnessError::Data(format!("missing dataset file {}", path.display())))
    }
}

/// The relational graph and the files it was read from.
pub fn relational_graph(c: &ExperimentConfig) -> Result<(KnowledgeGraph, Vec<PathBuf>), HarnessError> {
    match &c.fb_triples {
        Some(path) => {
            require(path)?;
            Ok((load_triples(path).map_err(data_error)?, vec![path.clone()]))
        }
        None => Ok((
            fb_like(&FbLikeSpec {
                seed: c.data_seed,
                ..FbLikeSpec::default()
            }),
            Vec::new(),
        )),
    }
}

/// The labelled citation graph named by `dataset`.
pub fn citation_graph(c: &ExperimentConfig) -> Result<(KnowledgeGraph, Vec<PathBuf>), HarnessError> {
    match &c.planetoid_dir {
        Some(dir) => {
            let content = dir.join(format!("{}.content", c.dataset.name()));
            let cites = dir.join(format!("{}.cites", c.dataset.name()));
            require(&content)?;
            require(&cites)?;
            let load = load_planetoid(&content, &cites).map_err(data_error)?;
            Ok((load.graph, vec![content, cites]))
        }
        None => {
            let spec = match c.dataset {
                Planetoid::Cora => PlanetoidSpec::cora(c.data_seed),
                Planetoid::Citeseer => PlanetoidSpec::citeseer(c.data_seed),
            };
            let text = planetoid_like(&spec);
            let load = parse_planetoid(&text.content, &text.cites).map_err(data_error)?;
            Ok((load.graph, Vec::new()))
        }
    }
}
