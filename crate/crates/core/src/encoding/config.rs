//! Model and training hyper-parameters as a flat `key = value` file.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateActivation {
    Gelu,
    Sigmoid,
}

impl FromStr for GateActivation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gelu" => Ok(GateActivation::Gelu),
            "sigmoid" => Ok(GateActivation::Sigmoid),
            other => Err(format!("expected gelu or sigmoid, got {other:?}")),
        }
    }
}

impl std::fmt::Display for GateActivation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GateActivation::Gelu => "gelu",
            GateActivation::Sigmoid => "sigmoid",
        })
    }
}

/// Where training anchors are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnchorRange {
    /// `[t_s − M_h, t_e + M_p]` around the annotated event.
    Event,
    /// Anywhere in the video.
    Video,
}

impl FromStr for AnchorRange {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "event" => Ok(AnchorRange::Event),
            "video" => Ok(AnchorRange::Video),
            other => Err(format!("expected event or video, got {other:?}")),
        }
    }
}

impl std::fmt::Display for AnchorRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AnchorRange::Event => "event",
            AnchorRange::Video => "video",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Embedding width.
    pub d: usize,
    /// Present window length.
    pub m_p: usize,
    /// Historical (and future) window length.
    pub m_h: usize,
    /// Compressed memory length.
    pub n: usize,
    /// Compressor layers.
    pub k: usize,
    /// Decoder layers.
    pub l_dec: usize,
    pub heads: usize,
    /// Hard-sample re-weighting exponent.
    pub gamma: f64,
    pub alpha_s: f64,
    pub alpha_m: f64,
    pub alpha_e: f64,
    /// Distillation trade-off.
    pub lambda: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub warmup_fraction: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Training windows drawn per annotation per epoch.
    pub samples_per_annotation: usize,
    pub anchor_range: AnchorRange,
    pub frame_dim: usize,
    pub word_dim: usize,
    pub positional_encoding: bool,
    pub gate_activation: GateActivation,
    pub disable_lfc_language: bool,
    pub disable_lfc_vision: bool,
    pub disable_lfc: bool,
    pub disable_prophet: bool,
    pub seed: u64,
    pub workers: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    /// Small configuration for tests and synthetic experiments.
    pub fn desk() -> Self {
        ModelConfig {
            d: 64,
            m_p: 8,
            m_h: 32,
            n: 8,
            k: 2,
            l_dec: 2,
            heads: 4,
            gamma: 3.0,
            alpha_s: 0.25,
            alpha_m: 0.21,
            alpha_e: 0.25,
            lambda: 0.3,
            lr: 2e-3,
            weight_decay: 5e-4,
            warmup_fraction: 0.1,
            epochs: 15,
            batch_size: 16,
            samples_per_annotation: 4,
            anchor_range: AnchorRange::Event,
            frame_dim: 32,
            word_dim: 32,
            positional_encoding: true,
            gate_activation: GateActivation::Gelu,
            disable_lfc_language: false,
            disable_lfc_vision: false,
            disable_lfc: false,
            disable_prophet: false,
            seed: 0,
            workers: 1,
        }
    }

    /// ActivityNet / TACoS scale with 1024-wide features.
    pub fn activitynet() -> Self {
        ModelConfig {
            d: 1024,
            m_p: 16,
            m_h: 64,
            n: 16,
            heads: 8,
            batch_size: 512,
            frame_dim: 4096,
            word_dim: 768,
            ..Self::desk()
        }
    }

    /// MAD scale with 512-wide features.
    pub fn mad() -> Self {
        ModelConfig {
            d: 512,
            m_p: 16,
            m_h: 32,
            n: 16,
            heads: 8,
            batch_size: 512,
            frame_dim: 512,
            word_dim: 512,
            ..Self::desk()
        }
    }

    /// Dimensions used for streaming throughput comparisons.
    pub fn large() -> Self {
        ModelConfig {
            d: 512,
            m_p: 32,
            m_h: 512,
            n: 16,
            k: 2,
            l_dec: 2,
            heads: 8,
            frame_dim: 512,
            word_dim: 512,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: String| {
            Err(Error::Config {
                key: key.into(),
                reason,
            })
        };
        if self.d < 2 {
            return bad("d", format!("must be at least 2, got {}", self.d));
        }
        if self.m_p == 0 || self.m_p >= self.m_h {
            return bad("m_p", format!("need 0 < m_p < m_h, got {} vs {}", self.m_p, self.m_h));
        }
        if self.n == 0 || self.n >= self.m_h {
            return bad("n", format!("need 1 <= n < m_h, got {} vs {}", self.n, self.m_h));
        }
        if self.k == 0 {
            return bad("k", "need at least one compressor layer".into());
        }
        if self.l_dec == 0 {
            return bad("l_dec", "need at least one decoder layer".into());
        }
        if self.heads == 0 || self.d % self.heads != 0 {
            return bad("heads", format!("{} heads do not divide d = {}", self.heads, self.d));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda", format!("must lie in [0, 1], got {}", self.lambda));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma", format!("must be finite and >= 0, got {}", self.gamma));
        }
        for (key, a) in [
            ("alpha_s", self.alpha_s),
            ("alpha_m", self.alpha_m),
            ("alpha_e", self.alpha_e),
        ] {
            if !(a > 0.0 && a.is_finite()) {
                return bad(key, format!("must be finite and > 0, got {a}"));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", format!("must be finite and > 0, got {}", self.lr));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay", format!("must be >= 0, got {}", self.weight_decay));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad(
                "warmup_fraction",
                format!("must lie in [0, 1), got {}", self.warmup_fraction),
            );
        }
        for (key, v) in [
            ("batch_size", self.batch_size),
            ("samples_per_annotation", self.samples_per_annotation),
            ("frame_dim", self.frame_dim),
            ("word_dim", self.word_dim),
            ("workers", self.workers),
        ] {
            if v == 0 {
                return bad(key, "must be positive".into());
            }
        }
        if self.disable_lfc_language && self.disable_lfc_vision {
            return bad(
                "disable_lfc_vision",
                "cannot disable both compressor branches; use disable_lfc".into(),
            );
        }
        Ok(())
    }

    /// Every key in serialisation order.
    pub const KEYS: &'static [&'static str] = &[
        "d",
        "m_p",
        "m_h",
        "n",
        "k",
        "l_dec",
        "heads",
        "gamma",
        "alpha_s",
        "alpha_m",
        "alpha_e",
        "lambda",
        "lr",
        "weight_decay",
        "warmup_fraction",
        "epochs",
        "batch_size",
        "samples_per_annotation",
        "anchor_range",
        "frame_dim",
        "word_dim",
        "positional_encoding",
        "gate_activation",
        "disable_lfc_language",
        "disable_lfc_vision",
        "disable_lfc",
        "disable_prophet",
        "seed",
        "workers",
    ];

    /// Assigns one key from its textual value without validating invariants.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e: T::Err| Error::Config {
                key: key.into(),
                reason: format!("cannot parse {value:?}: {e}"),
            })
        }
        match key {
            "d" => self.d = parse(key, value)?,
            "m_p" => self.m_p = parse(key, value)?,
            "m_h" => self.m_h = parse(key, value)?,
            "n" => self.n = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "l_dec" => self.l_dec = parse(key, value)?,
            "heads" => self.heads = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "alpha_s" => self.alpha_s = parse(key, value)?,
            "alpha_m" => self.alpha_m = parse(key, value)?,
            "alpha_e" => self.alpha_e = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "warmup_fraction" => self.warmup_fraction = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "samples_per_annotation" => self.samples_per_annotation = parse(key, value)?,
            "anchor_range" => self.anchor_range = parse(key, value)?,
            "frame_dim" => self.frame_dim = parse(key, value)?,
            "word_dim" => self.word_dim = parse(key, value)?,
            "positional_encoding" => self.positional_encoding = parse(key, value)?,
            "gate_activation" => self.gate_activation = parse(key, value)?,
            "disable_lfc_language" => self.disable_lfc_language = parse(key, value)?,
            "disable_lfc_vision" => self.disable_lfc_vision = parse(key, value)?,
            "disable_lfc" => self.disable_lfc = parse(key, value)?,
            "disable_prophet" => self.disable_prophet = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            other => {
                return Err(Error::Config {
                    key: other.into(),
                    reason: "unknown key".into(),
                })
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "d" => self.d.to_string(),
            "m_p" => self.m_p.to_string(),
            "m_h" => self.m_h.to_string(),
            "n" => self.n.to_string(),
            "k" => self.k.to_string(),
            "l_dec" => self.l_dec.to_string(),
            "heads" => self.heads.to_string(),
            "gamma" => self.gamma.to_string(),
            "alpha_s" => self.alpha_s.to_string(),
            "alpha_m" => self.alpha_m.to_string(),
            "alpha_e" => self.alpha_e.to_string(),
            "lambda" => self.lambda.to_string(),
            "lr" => self.lr.to_string(),
            "weight_decay" => self.weight_decay.to_string(),
            "warmup_fraction" => self.warmup_fraction.to_string(),
            "epochs" => self.epochs.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "samples_per_annotation" => self.samples_per_annotation.to_string(),
            "anchor_range" => self.anchor_range.to_string(),
            "frame_dim" => self.frame_dim.to_string(),
            "word_dim" => self.word_dim.to_string(),
            "positional_encoding" => self.positional_encoding.to_string(),
            "gate_activation" => self.gate_activation.to_string(),
            "disable_lfc_language" => self.disable_lfc_language.to_string(),
            "disable_lfc_vision" => self.disable_lfc_vision.to_string(),
            "disable_lfc" => self.disable_lfc.to_string(),
            "disable_prophet" => self.disable_prophet.to_string(),
            "seed" => self.seed.to_string(),
            "workers" => self.workers.to_string(),
            _ => return None,
        })
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                key: format!("line {}", no + 1),
                reason: format!("expected key = value, got {raw:?}"),
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Parses a complete file over the desk defaults and validates it.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::desk();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in Self::KEYS {
            let value = self.get(key).expect("every listed key is readable");
            writeln!(out, "{key} = {value}").expect("writing to a String");
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Window span `M_h + M_p`.
    pub fn span(&self) -> usize {
        self.m_h + self.m_p
    }
}
