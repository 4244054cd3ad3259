//! Physical channel: `received = g · sent + noise`, real-valued per sample.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::kg::{EntityId, RelationId};
use crate::rng::seeded;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("signal power must be positive, got {0}")]
    NonPositivePower(f64),
    #[error("pilot needs at least 8 samples, got {0}")]
    PilotTooShort(usize),
    #[error("pilot has zero power")]
    ZeroPilot,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty signal")]
    Empty,
    #[error("invalid channel configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolKind {
    Entity(EntityId),
    Relation(RelationId),
}

/// A symbol's slice of the sample vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Symbol {
    pub kind: SymbolKind,
    pub offset: usize,
    pub len: usize,
}

/// Real samples plus the symbol boundaries that tile them.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub samples: Vec<f64>,
    pub symbols: Vec<Symbol>,
}

impl Signal {
    pub fn new(samples: Vec<f64>, symbols: Vec<Symbol>) -> Self {
        let s = Signal { samples, symbols };
        debug_assert!(s.boundaries_tile());
        s
    }

    /// Mean square sample.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|x| x * x).sum::<f64>() / self.samples.len() as f64
    }

    pub fn symbol_samples(&self, i: usize) -> &[f64] {
        let s = &self.symbols[i];
        &self.samples[s.offset..s.offset + s.len]
    }

    pub fn boundaries_tile(&self) -> bool {
        let mut next = 0;
        for s in &self.symbols {
            if s.offset != next {
                return false;
            }
            next += s.len;
        }
        next == self.samples.len()
    }

    pub fn scaled(&self, a: f64) -> Signal {
        Signal {
            samples: self.samples.iter().map(|x| a * x).collect(),
            symbols: self.symbols.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fading {
    /// `g = 1`.
    Unit,
    Fixed(f64),
    /// `g` drawn once per message as the magnitude of a unit-power complex
    /// Gaussian, so `E[g²] = 1`.
    Rayleigh,
}

impl std::str::FromStr for Fading {
    type Err = ChannelError;

    /// `unit`, `rayleigh` or `fixed:<g>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "unit" => Ok(Fading::Unit),
            "rayleigh" => Ok(Fading::Rayleigh),
            other => {
                let g = other
                    .strip_prefix("fixed:")
                    .and_then(|g| g.parse::<f64>().ok())
                    .ok_or_else(|| ChannelError::Config(format!("unknown fading {other:?}")))?;
                Ok(Fading::Fixed(g))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    pub fading: Fading,
    /// `f64::INFINITY` means noiseless.
    pub snr_db: f64,
    pub seed: u64,
    /// SNR of a destination→server hop, referenced to the faded signal
    /// power. `None` keeps that hop noiseless.
    pub second_hop_snr_db: Option<f64>,
}

impl ChannelModel {
    pub fn awgn(snr_db: f64, seed: u64) -> Self {
        ChannelModel {
            fading: Fading::Unit,
            snr_db,
            seed,
            second_hop_snr_db: None,
        }
    }

    pub fn noiseless() -> Self {
        Self::awgn(f64::INFINITY, 0)
    }

    pub fn with_fading(mut self, fading: Fading) -> Self {
        self.fading = fading;
        self
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(ChannelError::Config(format!("snr_db must be finite or +inf, got {}", self.snr_db)));
        }
        if let Some(s) = self.second_hop_snr_db {
            if s.is_nan() || s == f64::NEG_INFINITY {
                return Err(ChannelError::Config(format!("second_hop_snr_db must be finite or +inf, got {s}")));
            }
        }
        if let Fading::Fixed(g) = self.fading {
            if g == 0.0 || !g.is_finite() {
                return Err(ChannelError::Config(format!("fixed fading must be finite and nonzero, got {g}")));
            }
        }
        Ok(())
    }
}

/// Per-sample noise variance `P / 10^(snr/10)`; zero at `+inf` dB.
pub fn snr_to_noise_var(snr_db: f64, signal_power: f64) -> Result<f64, ChannelError> {
    if signal_power <= 0.0 || signal_power.is_nan() {
        return Err(ChannelError::NonPositivePower(signal_power));
    }
    if snr_db == f64::INFINITY {
        return Ok(0.0);
    }
    Ok(signal_power / 10f64.powf(snr_db / 10.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Received {
    pub signal: Signal,
    /// Fading actually applied.
    pub gain: f64,
    pub noise_var: f64,
}

fn draw_gain(fading: Fading, rng: &mut crate::rng::Rng) -> f64 {
    match fading {
        Fading::Unit => 1.0,
        Fading::Fixed(g) => g,
        Fading::Rayleigh => {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            ((re * re + im * im) / 2.0).sqrt()
        }
    }
}

/// Transmits with noise variance referenced to the message's own power.
pub fn transmit(signal: &Signal, model: &ChannelModel) -> Result<Received, ChannelError> {
    model.validate()?;
    if signal.samples.is_empty() {
        return Err(ChannelError::Empty);
    }
    let power = signal.power();
    let noise_var = if model.snr_db == f64::INFINITY || power == 0.0 {
        0.0
    } else {
        snr_to_noise_var(model.snr_db, power)?
    };
    transmit_with_noise_var(signal, model, noise_var)
}

/// Same draw sequence as [`transmit`] but with an explicit first-hop noise
/// variance, so the noise realisation for a seed does not depend on the
/// signal. A second hop draws its noise after the first and adds its
/// variance to `noise_var`.
pub fn transmit_with_noise_var(
    signal: &Signal,
    model: &ChannelModel,
    noise_var: f64,
) -> Result<Received, ChannelError> {
    model.validate()?;
    let mut rng = seeded(model.seed);
    let gain = draw_gain(model.fading, &mut rng);
    let sd = noise_var.sqrt();
    let mut samples: Vec<f64> = signal
        .samples
        .iter()
        .map(|&x| {
            let z: f64 = StandardNormal.sample(&mut rng);
            gain * x + sd * z
        })
        .collect();
    let mut total = noise_var;
    if let Some(s) = model.second_hop_snr_db {
        let faded = gain * gain * signal.power();
        if s != f64::INFINITY && faded > 0.0 {
            let var2 = snr_to_noise_var(s, faded)?;
            let sd2 = var2.sqrt();
            for y in samples.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *y += sd2 * z;
            }
            total += var2;
        }
    }
    Ok(Received {
        signal: Signal {
            samples,
            symbols: signal.symbols.clone(),
        },
        gain,
        noise_var: total,
    })
}

/// Least-squares fading estimate and residual noise power from a pilot.
pub fn estimate_channel(sent: &[f64], received: &[f64]) -> Result<(f64, f64), ChannelError> {
    if sent.len() != received.len() {
        return Err(ChannelError::LengthMismatch(sent.len(), received.len()));
    }
    if sent.len() < 8 {
        return Err(ChannelError::PilotTooShort(sent.len()));
    }
    let ss: f64 = sent.iter().map(|x| x * x).sum();
    if ss == 0.0 {
        return Err(ChannelError::ZeroPilot);
    }
    let sr: f64 = sent.iter().zip(received).map(|(s, r)| s * r).sum();
    let g = sr / ss;
    let resid = sent
        .iter()
        .zip(received)
        .map(|(s, r)| (r - g * s).powi(2))
        .sum::<f64>()
        / sent.len() as f64;
    Ok((g, resid))
}

/// Random `±1` pilot of length `n`.
pub fn pilot(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed);
    (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
}
