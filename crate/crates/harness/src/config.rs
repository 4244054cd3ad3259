//! Flat `key = value` experiment configuration.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentId {
    SerVsSnr,
    AccVsDegree,
    LayeringAblation,
    ImitationToy,
    FedNoniid,
    FedServers,
    BoundCheck,
    Constellation,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 8] = [
        ExperimentId::SerVsSnr,
        ExperimentId::AccVsDegree,
        ExperimentId::LayeringAblation,
        ExperimentId::ImitationToy,
        ExperimentId::FedNoniid,
        ExperimentId::FedServers,
        ExperimentId::BoundCheck,
        ExperimentId::Constellation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::SerVsSnr => "ser_vs_snr",
            ExperimentId::AccVsDegree => "acc_vs_degree",
            ExperimentId::LayeringAblation => "layering_ablation",
            ExperimentId::ImitationToy => "imitation_toy",
            ExperimentId::FedNoniid => "fed_noniid",
            ExperimentId::FedServers => "fed_servers",
            ExperimentId::BoundCheck => "bound_check",
            ExperimentId::Constellation => "constellation",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExperimentId::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = ExperimentId::ALL.iter().map(|e| e.name()).collect();
                format!("unknown experiment {s:?}; expected one of {}", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Planetoid {
    Cora,
    Citeseer,
}

impl Planetoid {
    pub fn name(self) -> &'static str {
        match self {
            Planetoid::Cora => "cora",
            Planetoid::Citeseer => "citeseer",
        }
    }
}

/// Reasoning-recovery blend weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Alpha {
    /// `R̄ / (R̄ + d σ²)` from the trained table and the noise level.
    Auto,
    Fixed(f64),
}

/// Entity features fed to the interpreter on the imitation toy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyFeatures {
    /// Seeded uniform vectors, independent of the graph.
    Random,
    /// The codec trained on the toy graph.
    Codec,
}

/// A problem with one key. `line` is 0 for command-line overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub key: String,
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}: {}", self.key, self.message)
        } else {
            write!(f, "line {}: {}: {}", self.line, self.key, self.message)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    pub strict: bool,

    /// Tab-separated `head relation tail` file; a seeded synthetic graph is
    /// generated when absent.
    pub fb_triples: Option<PathBuf>,
    /// Directory holding `<dataset>.content` and `<dataset>.cites`.
    pub planetoid_dir: Option<PathBuf>,
    pub dataset: Planetoid,
    pub data_seed: u64,
    pub full: bool,
    pub subgraph_entities: usize,
    pub degree_cap: usize,

    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub margin: f64,
    pub batch_size: usize,
    pub negatives: usize,

    pub snr_db: Vec<f64>,
    pub layer_thresholds: Vec<usize>,
    pub alpha: Alpha,
    /// Destination→server hop; `None` is noiseless.
    pub second_hop_snr_db: Option<f64>,
    pub paths: usize,
    pub path_len: usize,
    pub message_entities: usize,

    pub updates: usize,
    pub lambda: f64,
    pub policy_lr: f64,
    pub toy_features: ToyFeatures,

    pub servers: Vec<usize>,
    pub noniid_p: Vec<f64>,
    pub local_steps: usize,
    pub rounds: usize,
    pub gcn_hidden: usize,
    pub gcn_lr: f64,

    pub mu: f64,
    pub smoothness: f64,
    pub bound_dim: usize,
    pub spread: f64,
    pub noise_std: f64,
}

impl ExperimentConfig {
    pub fn defaults(experiment: ExperimentId) -> Self {
        use ExperimentId::*;
        let mut c = ExperimentConfig {
            experiment,
            seeds: vec![0],
            out: None,
            strict: true,
            fb_triples: None,
            planetoid_dir: None,
            dataset: Planetoid::Cora,
            data_seed: 0,
            full: false,
            subgraph_entities: 2000,
            degree_cap: 100,
            dim: 16,
            epochs: 100,
            learning_rate: 0.01,
            margin: 1.0,
            batch_size: 64,
            negatives: 1,
            snr_db: vec![0.0, 2.0, 4.0, 6.0, 8.0],
            layer_thresholds: vec![50, 6],
            alpha: Alpha::Auto,
            second_hop_snr_db: None,
            paths: 2000,
            path_len: 3,
            message_entities: 17,
            updates: 500,
            lambda: 1e-2,
            policy_lr: 0.02,
            toy_features: ToyFeatures::Random,
            servers: vec![3],
            noniid_p: vec![0.0, 0.5, 1.0],
            local_steps: 1,
            rounds: 200,
            gcn_hidden: 16,
            gcn_lr: 20.0,
            mu: 0.5,
            smoothness: 2.0,
            bound_dim: 5,
            spread: 1.0,
            noise_std: 0.1,
        };
        match experiment {
            AccVsDegree => c.snr_db = vec![2.0, 8.0],
            LayeringAblation => c.snr_db = vec![2.0],
            Constellation => c.dim = 2,
            FedServers => {
                c.servers = vec![2, 3, 4, 5, 6];
                c.noniid_p = vec![0.0, 1.0];
            }
            BoundCheck => {
                c.servers = vec![4];
                c.local_steps = 5;
                c.rounds = 60;
            }
            ImitationToy => c.path_len = 2,
            _ => {}
        }
        c
    }

    /// Parses `text` on top of the experiment defaults. Unknown keys are
    /// errors in strict mode and are returned as warnings otherwise; a
    /// `strict = false` line anywhere in the file selects lenient mode.
    pub fn parse(experiment: ExperimentId, text: &str) -> Result<(Self, Vec<ConfigIssue>), Vec<ConfigIssue>> {
        let mut c = Self::defaults(experiment);
        let mut errors = Vec::new();
        let mut warnings = Vec::new();
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => entries.push((k.trim().to_string(), v.trim().to_string(), i + 1)),
                None => errors.push(ConfigIssue {
                    key: line.to_string(),
                    line: i + 1,
                    message: "expected `key = value`".into(),
                }),
            }
        }
        if let Some((_, v, line)) = entries.iter().find(|(k, _, _)| k == "strict") {
            match parse_bool(v) {
                Ok(b) => c.strict = b,
                Err(m) => errors.push(ConfigIssue {
                    key: "strict".into(),
                    line: *line,
                    message: m,
                }),
            }
        }
        for (key, value, line) in entries.iter().filter(|(k, _, _)| k != "strict") {
            match c.set(key, value) {
                Ok(()) => {}
                Err(SetError::Unknown) => {
                    let issue = ConfigIssue {
                        key: key.clone(),
                        line: *line,
                        message: "unknown key".into(),
                    };
                    if c.strict {
                        errors.push(issue);
                    } else {
                        warnings.push(issue);
                    }
                }
                Err(SetError::Bad(message)) => errors.push(ConfigIssue {
                    key: key.clone(),
                    line: *line,
                    message,
                }),
            }
        }
        if let Err(mut e) = c.validate() {
            errors.append(&mut e);
        }
        if errors.is_empty() {
            Ok((c, warnings))
        } else {
            Err(errors)
        }
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), SetError> {
        let v = value;
        match key {
            "seeds" | "seed" => self.seeds = parse_list(v)?,
            "out" => self.out = optional_path(v),
            "strict" => self.strict = parse_bool(v)?,
            "fb_triples" => self.fb_triples = optional_path(v),
            "planetoid_dir" => self.planetoid_dir = optional_path(v),
            "dataset" => {
                self.dataset = match v {
                    "cora" => Planetoid::Cora,
                    "citeseer" => Planetoid::Citeseer,
                    _ => return Err(SetError::Bad(format!("expected cora or citeseer, got {v:?}"))),
                }
            }
            "data_seed" => self.data_seed = parse_one(v)?,
            "full" => self.full = parse_bool(v)?,
            "subgraph_entities" => self.subgraph_entities = parse_one(v)?,
            "degree_cap" => self.degree_cap = parse_one(v)?,
            "dim" => self.dim = parse_one(v)?,
            "epochs" => self.epochs = parse_one(v)?,
            "learning_rate" => self.learning_rate = parse_one(v)?,
            "margin" => self.margin = parse_one(v)?,
            "batch_size" => self.batch_size = parse_one(v)?,
            "negatives" => self.negatives = parse_one(v)?,
            "snr_db" => self.snr_db = parse_list(v)?,
            "layer_thresholds" => self.layer_thresholds = parse_list(v)?,
            "alpha" => {
                self.alpha = if v == "auto" {
                    Alpha::Auto
                } else {
                    Alpha::Fixed(parse_one(v)?)
                }
            }
            "paths" => self.paths = parse_one(v)?,
            "path_len" => self.path_len = parse_one(v)?,
            "message_entities" => self.message_entities = parse_one(v)?,
            "updates" => self.updates = parse_one(v)?,
            "lambda" => self.lambda = parse_one(v)?,
            "policy_lr" => self.policy_lr = parse_one(v)?,
            "second_hop_snr_db" => {
                self.second_hop_snr_db = if v.is_empty() { None } else { Some(parse_one(v)?) }
            }
            "toy_features" => {
                self.toy_features = match v {
                    "random" => ToyFeatures::Random,
                    "codec" => ToyFeatures::Codec,
                    _ => return Err(SetError::Bad(format!("expected random or codec, got {v:?}"))),
                }
            }
            "servers" => self.servers = parse_list(v)?,
            "noniid_p" => self.noniid_p = parse_list(v)?,
            "local_steps" => self.local_steps = parse_one(v)?,
            "rounds" => self.rounds = parse_one(v)?,
            "gcn_hidden" => self.gcn_hidden = parse_one(v)?,
            "gcn_lr" => self.gcn_lr = parse_one(v)?,
            "mu" => self.mu = parse_one(v)?,
            "smoothness" => self.smoothness = parse_one(v)?,
            "bound_dim" => self.bound_dim = parse_one(v)?,
            "spread" => self.spread = parse_one(v)?,
            "noise_std" => self.noise_std = parse_one(v)?,
            _ => return Err(SetError::Unknown),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), Vec<ConfigIssue>> {
        let mut errs = Vec::new();
        let mut check = |ok: bool, key: &str, message: &str| {
            if !ok {
                errs.push(ConfigIssue {
                    key: key.into(),
                    line: 0,
                    message: message.into(),
                });
            }
        };
        check(!self.seeds.is_empty(), "seeds", "at least one seed is required");
        check(self.dim >= 2, "dim", "must be at least 2");
        check(self.epochs > 0, "epochs", "must be positive");
        check(self.batch_size > 0, "batch_size", "must be positive");
        check(self.negatives > 0, "negatives", "must be positive");
        check(self.learning_rate > 0.0, "learning_rate", "must be positive");
        check(self.margin > 0.0, "margin", "must be positive");
        check(self.subgraph_entities > 0, "subgraph_entities", "must be positive");
        check(
            self.snr_db.iter().all(|s| s.is_finite()),
            "snr_db",
            "values must be finite",
        );
        check(
            self.layer_thresholds.windows(2).all(|w| w[0] > w[1]) && self.layer_thresholds.iter().all(|&t| t > 0),
            "layer_thresholds",
            "must be positive and strictly descending",
        );
        check(
            self.second_hop_snr_db.is_none_or(|s| !s.is_nan() && s != f64::NEG_INFINITY),
            "second_hop_snr_db",
            "must be finite, inf or empty",
        );
        if let Alpha::Fixed(a) = self.alpha {
            check((0.0..=1.0).contains(&a), "alpha", "must be `auto` or lie in [0, 1]");
        }
        check(self.paths > 0 && self.path_len > 0, "paths", "path count and length must be positive");
        check(self.updates > 0, "updates", "must be positive");
        check(!self.servers.is_empty() && self.servers.iter().all(|&k| k > 0), "servers", "must be positive");
        check(
            !self.noniid_p.is_empty() && self.noniid_p.iter().all(|p| (0.0..=1.0).contains(p)),
            "noniid_p",
            "values must lie in [0, 1]",
        );
        check(self.local_steps > 0, "local_steps", "must be positive");
        check(self.rounds > 0, "rounds", "must be positive");
        check(self.mu > 0.0 && self.smoothness >= self.mu, "mu", "need 0 < mu <= smoothness");
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    /// Every key in a fixed order; the manifest hash is taken over this.
    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let alpha = match self.alpha {
            Alpha::Auto => "auto".to_string(),
            Alpha::Fixed(a) => a.to_string(),
        };
        let rows: Vec<(&str, String)> = vec![
            ("experiment", self.experiment.to_string()),
            ("seeds", join(&self.seeds)),
            ("out", path(&self.out)),
            ("strict", self.strict.to_string()),
            ("fb_triples", path(&self.fb_triples)),
            ("planetoid_dir", path(&self.planetoid_dir)),
            ("dataset", self.dataset.name().into()),
            ("data_seed", self.data_seed.to_string()),
            ("full", self.full.to_string()),
            ("subgraph_entities", self.subgraph_entities.to_string()),
            ("degree_cap", self.degree_cap.to_string()),
            ("dim", self.dim.to_string()),
            ("epochs", self.epochs.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("margin", self.margin.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("negatives", self.negatives.to_string()),
            ("snr_db", join(&self.snr_db)),
            ("layer_thresholds", join(&self.layer_thresholds)),
            ("alpha", alpha),
            ("second_hop_snr_db", self.second_hop_snr_db.map(|s| s.to_string()).unwrap_or_default()),
            ("paths", self.paths.to_string()),
            ("path_len", self.path_len.to_string()),
            ("message_entities", self.message_entities.to_string()),
            ("updates", self.updates.to_string()),
            ("lambda", self.lambda.to_string()),
            ("policy_lr", self.policy_lr.to_string()),
            (
                "toy_features",
                match self.toy_features {
                    ToyFeatures::Random => "random",
                    ToyFeatures::Codec => "codec",
                }
                .into(),
            ),
            ("servers", join(&self.servers)),
            ("noniid_p", join(&self.noniid_p)),
            ("local_steps", self.local_steps.to_string()),
            ("rounds", self.rounds.to_string()),
            ("gcn_hidden", self.gcn_hidden.to_string()),
            ("gcn_lr", self.gcn_lr.to_string()),
            ("mu", self.mu.to_string()),
            ("smoothness", self.smoothness.to_string()),
            ("bound_dim", self.bound_dim.to_string()),
            ("spread", self.spread.to_string()),
            ("noise_std", self.noise_std.to_string()),
        ];
        rows.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SetError {
    Unknown,
    Bad(String),
}

impl From<String> for SetError {
    fn from(s: String) -> Self {
        SetError::Bad(s)
    }
}

fn optional_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got {v:?}")),
    }
}

fn parse_one<T: FromStr>(v: &str) -> Result<T, String> {
    v.parse::<T>()
        .map_err(|_| format!("cannot parse {v:?} as {}", std::any::type_name::<T>()))
}

fn parse_list<T: FromStr>(v: &str) -> Result<Vec<T>, String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse_one)
        .collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let (c, w) = ExperimentConfig::parse(ExperimentId::FedServers, "").unwrap();
        assert_eq!(c, ExperimentConfig::defaults(ExperimentId::FedServers));
        assert!(w.is_empty());
    }

    #[test]
    fn bad_value_names_the_key() {
        let errs = ExperimentConfig::parse(ExperimentId::SerVsSnr, "\nsnr_db = banana\n").unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].key, "snr_db");
        assert_eq!(errs[0].line, 2);
    }

    #[test]
    fn single_key_changes_only_that_field() {
        let (c, _) = ExperimentConfig::parse(ExperimentId::FedNoniid, "servers=4").unwrap();
        let mut expected = ExperimentConfig::defaults(ExperimentId::FedNoniid);
        expected.servers = vec![4];
        assert_eq!(c, expected);
    }

    #[test]
    fn unknown_key_strict_and_lenient() {
        let errs = ExperimentConfig::parse(ExperimentId::BoundCheck, "colour = red").unwrap_err();
        assert_eq!(errs[0].key, "colour");
        let (_, warnings) = ExperimentConfig::parse(ExperimentId::BoundCheck, "colour = red\nstrict = false").unwrap();
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn comments_and_lists() {
        let text = "# grid\nsnr_db = 1, 3 # two points\nalpha = 0.25\n";
        let (c, _) = ExperimentConfig::parse(ExperimentId::SerVsSnr, text).unwrap();
        assert_eq!(c.snr_db, vec![1.0, 3.0]);
        assert_eq!(c.alpha, Alpha::Fixed(0.25));
        assert_eq!(c.second_hop_snr_db, None);
        let (c, _) = ExperimentConfig::parse(ExperimentId::SerVsSnr, "second_hop_snr_db = 9
").unwrap();
        assert_eq!(c.second_hop_snr_db, Some(9.0));
    }

    #[test]
    fn text_form_round_trips() {
        let mut c = ExperimentConfig::defaults(ExperimentId::Constellation);
        c.seeds = vec![3, 4];
        c.alpha = Alpha::Fixed(0.5);
        c.toy_features = ToyFeatures::Codec;
        c.second_hop_snr_db = Some(12.5);
        let body: String = c.to_text().lines().filter(|l| !l.starts_with("experiment")).map(|l| format!("{l}\n")).collect();
        let (back, _) = ExperimentConfig::parse(ExperimentId::Constellation, &body).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn validation_catches_ranges() {
        let errs = ExperimentConfig::parse(ExperimentId::FedNoniid, "noniid_p = 1.5\nseeds =").unwrap_err();
        let keys: Vec<&str> = errs.iter().map(|e| e.key.as_str()).collect();
        assert!(keys.contains(&"noniid_p") && keys.contains(&"seeds"));
    }
}
