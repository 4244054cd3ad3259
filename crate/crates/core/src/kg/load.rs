use std::fs;
use std::path::Path;

use super::{Features, GraphBuilder, KgError, KnowledgeGraph};

fn read(path: &Path) -> Result<String, KgError> {
    fs::read_to_string(path).map_err(|e| KgError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Reads a `head<TAB>relation<TAB>tail` file (FB15K-237 layout).
pub fn load_triples(path: impl AsRef<Path>) -> Result<KnowledgeGraph, KgError> {
    parse_triples(&read(path.as_ref())?)
}

/// Parses triple lines. Blank lines are skipped; duplicates are dropped.
pub fn parse_triples(text: &str) -> Result<KnowledgeGraph, KgError> {
    let mut b = GraphBuilder::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(KgError::Parse {
                line: i + 1,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        if fields.iter().any(|f| f.is_empty()) {
            return Err(KgError::Parse {
                line: i + 1,
                message: "empty field".into(),
            });
        }
        b.add_named(fields[0], fields[1], fields[2]);
    }
    let g = b.build()?;
    if g.is_empty() {
        return Err(KgError::EmptyGraph);
    }
    Ok(g)
}

/// Result of reading a Planetoid citation dataset.
#[derive(Debug)]
pub struct PlanetoidLoad {
    pub graph: KnowledgeGraph,
    /// Citation rows that referenced a paper missing from `.content`.
    pub skipped_citations: usize,
}

/// Reads the raw Planetoid pair: `.content` rows `id f_1 … f_n label` and
/// `.cites` rows `cited citing`. Each citation becomes the triple
/// `(citing, cites, cited)`.
pub fn load_planetoid(
    content_path: impl AsRef<Path>,
    cites_path: impl AsRef<Path>,
) -> Result<PlanetoidLoad, KgError> {
    parse_planetoid(&read(content_path.as_ref())?, &read(cites_path.as_ref())?)
}

pub fn parse_planetoid(content: &str, cites: &str) -> Result<PlanetoidLoad, KgError> {
    let mut b = GraphBuilder::new();
    let mut rows = Vec::new();
    let mut width = None;
    for (i, line) in content.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() < 2 {
            return Err(KgError::Parse {
                line: i + 1,
                message: "content row needs an id and a label".into(),
            });
        }
        let w = fields.len() - 2;
        match width {
            None => width = Some(w),
            Some(expected) if expected != w => {
                return Err(KgError::FeatureWidth {
                    row: i + 1,
                    found: w,
                    expected,
                })
            }
            _ => {}
        }
        if b.lookup_entity(fields[0]).is_some() {
            return Err(KgError::Parse {
                line: i + 1,
                message: format!("duplicate paper id {}", fields[0]),
            });
        }
        let e = b.entity(fields[0]);
        b.set_label(e, fields[fields.len() - 1]);
        let mut row = Vec::new();
        for (c, f) in fields[1..fields.len() - 1].iter().enumerate() {
            let x: f64 = f.parse().map_err(|_| KgError::Parse {
                line: i + 1,
                message: format!("bad feature value {f:?}"),
            })?;
            if x != 0.0 {
                row.push((c as u32, x));
            }
        }
        rows.push(row);
    }
    let width = width.ok_or(KgError::EmptyGraph)?;
    b.set_features(Features::new(width, rows)?);
    let cites_rel = b.relation("cites");
    let mut skipped = 0;
    for (i, line) in cites.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 2 {
            return Err(KgError::Parse {
                line: i + 1,
                message: format!("expected 2 fields, found {}", fields.len()),
            });
        }
        match (b.lookup_entity(fields[1]), b.lookup_entity(fields[0])) {
            (Some(citing), Some(cited)) => {
                b.add_triple(citing, cites_rel, cited);
            }
            _ => skipped += 1,
        }
    }
    Ok(PlanetoidLoad {
        graph: b.build()?,
        skipped_citations: skipped,
    })
}
