//! Flat `key = value` training configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is optional
//! (missing keys keep their defaults) but unknown or repeated keys are errors.
//! [`TrainConfig::to_text`] writes every key in [`KEYS`] order, and floats use
//! Rust's shortest round-trip formatting, so `parse(to_text(c)) == c`.

use std::ops::RangeInclusive;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::objective::{LossWeights, DEFAULT_TEMPERATURE};
use crate::pooling::PoolScore;
use crate::refinement::{PoolingKind, ProjectionKind, RefinerConfig};

pub const BATCH_RANGE: RangeInclusive<usize> = 4..=128;
pub const EPOCH_RANGE: RangeInclusive<usize> = 1..=10_000;
pub const DEFAULT_LEARNING_RATE: f64 = 3e-3;
pub const DEFAULT_PATIENCE: usize = 10;

/// Every recognized key with a one-line description, in file order.
pub const KEYS: [(&str, &str); 22] = [
    ("learning_rate", "Adam step size, >= 0"),
    ("batch_size", "pairs per step, 4..=128"),
    ("max_epochs", "upper bound on epochs, 1..=10000"),
    ("early_stop_patience", "epochs without validation improvement before stopping, >= 1"),
    ("w_directional", "weight of the cosine term"),
    ("w_l1", "weight of the L1 term"),
    ("w_contrastive", "weight of the contrastive term; the three weights sum to 1"),
    ("temperature", "contrastive temperature (initial value when learned), > 0"),
    ("learnable_temperature", "true | false"),
    ("replace_prob", "probability of pooling with q_pool while training, 0..=1"),
    ("seed", "initialization, shuffling and dropout seed"),
    ("encoder_seed", "seed of the frozen toy encoders"),
    ("d_model", "encoder output width"),
    ("d_shared", "shared retrieval space width"),
    ("heads", "attention heads; must divide d_model"),
    ("depth", "transformer blocks per modality"),
    ("ffn_mult", "FFN hidden width as a multiple of d_model"),
    ("dropout", "dropout rate, 0..1"),
    ("pre_norm", "layer-normalize sublayer inputs: true | false"),
    ("projection", "transformer | linear"),
    ("pooling", "attention | mean"),
    ("pool_score", "scaled_dot | bilinear"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    /// Raw `(directional, l1, contrastive)`, kept as written so files round-trip.
    pub loss_weights: [f64; 3],
    pub temperature: f64,
    pub seed: u64,
    pub encoder_seed: u64,
    pub refiner: RefinerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: DEFAULT_LEARNING_RATE,
            batch_size: 16,
            max_epochs: 200,
            early_stop_patience: DEFAULT_PATIENCE,
            loss_weights: LossWeights::default().as_array(),
            temperature: DEFAULT_TEMPERATURE,
            seed: 0,
            encoder_seed: 0,
            refiner: RefinerConfig::default(),
        }
    }
}

fn projection_name(p: ProjectionKind) -> &'static str {
    match p {
        ProjectionKind::Transformer => "transformer",
        ProjectionKind::Linear => "linear",
    }
}

fn pooling_name(p: PoolingKind) -> &'static str {
    match p {
        PoolingKind::Attention => "attention",
        PoolingKind::Mean => "mean",
    }
}

fn score_name(s: PoolScore) -> &'static str {
    match s {
        PoolScore::ScaledDot => "scaled_dot",
        PoolScore::Bilinear => "bilinear",
    }
}

pub fn parse_projection(s: &str) -> Result<ProjectionKind> {
    match s {
        "transformer" => Ok(ProjectionKind::Transformer),
        "linear" => Ok(ProjectionKind::Linear),
        _ => Err(Error::config(format!("unknown projection {s:?} (transformer | linear)"))),
    }
}

pub fn parse_pooling(s: &str) -> Result<PoolingKind> {
    match s {
        "attention" => Ok(PoolingKind::Attention),
        "mean" => Ok(PoolingKind::Mean),
        _ => Err(Error::config(format!("unknown pooling {s:?} (attention | mean)"))),
    }
}

fn parse_score(s: &str) -> Result<PoolScore> {
    match s {
        "scaled_dot" => Ok(PoolScore::ScaledDot),
        "bilinear" => Ok(PoolScore::Bilinear),
        _ => Err(Error::config(format!("unknown pool_score {s:?} (scaled_dot | bilinear)"))),
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(Error::config(format!("{key}: expected a finite number, got {v:?}"))),
    }
}

fn parse_int<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(format!("{key}: expected a nonnegative integer, got {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

impl TrainConfig {
    pub fn loss_weights(&self) -> Result<LossWeights> {
        let [d, l, c] = self.loss_weights;
        LossWeights::new(d, l, c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("learning_rate must be >= 0, got {}", self.learning_rate)));
        }
        if !BATCH_RANGE.contains(&self.batch_size) {
            return Err(Error::config(format!("batch_size {} outside {BATCH_RANGE:?}", self.batch_size)));
        }
        if !EPOCH_RANGE.contains(&self.max_epochs) {
            return Err(Error::config(format!("max_epochs {} outside {EPOCH_RANGE:?}", self.max_epochs)));
        }
        if self.early_stop_patience == 0 {
            return Err(Error::config("early_stop_patience must be at least 1"));
        }
        self.loss_weights()?;
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::config(format!("temperature must be positive, got {}", self.temperature)));
        }
        self.refiner.validate()
    }

    /// Value of `key` as written to a config file.
    pub fn get(&self, key: &str) -> Result<String> {
        let r = &self.refiner;
        Ok(match key {
            "learning_rate" => self.learning_rate.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "max_epochs" => self.max_epochs.to_string(),
            "early_stop_patience" => self.early_stop_patience.to_string(),
            "w_directional" => self.loss_weights[0].to_string(),
            "w_l1" => self.loss_weights[1].to_string(),
            "w_contrastive" => self.loss_weights[2].to_string(),
            "temperature" => self.temperature.to_string(),
            "learnable_temperature" => r.learnable_temperature.to_string(),
            "replace_prob" => r.replace_prob.to_string(),
            "seed" => self.seed.to_string(),
            "encoder_seed" => self.encoder_seed.to_string(),
            "d_model" => r.d_model.to_string(),
            "d_shared" => r.d_shared.to_string(),
            "heads" => r.heads.to_string(),
            "depth" => r.depth.to_string(),
            "ffn_mult" => r.ffn_mult.to_string(),
            "dropout" => r.dropout.to_string(),
            "pre_norm" => r.pre_norm.to_string(),
            "projection" => projection_name(r.projection).into(),
            "pooling" => pooling_name(r.pooling).into(),
            "pool_score" => score_name(r.pool_score).into(),
            _ => return Err(Error::config(format!("unknown config key {key:?}"))),
        })
    }

    /// Sets one key without cross-field validation.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let r = &mut self.refiner;
        match key {
            "learning_rate" => self.learning_rate = parse_f64(key, v)?,
            "batch_size" => self.batch_size = parse_int(key, v)?,
            "max_epochs" => self.max_epochs = parse_int(key, v)?,
            "early_stop_patience" => self.early_stop_patience = parse_int(key, v)?,
            "w_directional" => self.loss_weights[0] = parse_f64(key, v)?,
            "w_l1" => self.loss_weights[1] = parse_f64(key, v)?,
            "w_contrastive" => self.loss_weights[2] = parse_f64(key, v)?,
            "temperature" => self.temperature = parse_f64(key, v)?,
            "learnable_temperature" => r.learnable_temperature = parse_bool(key, v)?,
            "replace_prob" => r.replace_prob = parse_f64(key, v)?,
            "seed" => self.seed = parse_int(key, v)?,
            "encoder_seed" => self.encoder_seed = parse_int(key, v)?,
            "d_model" => r.d_model = parse_int(key, v)?,
            "d_shared" => r.d_shared = parse_int(key, v)?,
            "heads" => r.heads = parse_int(key, v)?,
            "depth" => r.depth = parse_int(key, v)?,
            "ffn_mult" => r.ffn_mult = parse_int(key, v)?,
            "dropout" => r.dropout = parse_f64(key, v)?,
            "pre_norm" => r.pre_norm = parse_bool(key, v)?,
            "projection" => r.projection = parse_projection(v)?,
            "pooling" => r.pooling = parse_pooling(v)?,
            "pool_score" => r.pool_score = parse_score(v)?,
            _ => return Err(Error::config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key = value, got {line:?}", n + 1)))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::config(format!("line {}: key {key:?} given twice", n + 1)));
            }
            config
                .set(key, value.trim())
                .map_err(|e| Error::config(format!("line {}: {e}", n + 1)))?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (key, _) in KEYS {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&self.get(key).expect("every listed key is known"));
            out.push('\n');
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_text())?)
    }

    /// SHA-256 of [`to_text`](Self::to_text).
    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.to_text().as_bytes()).into()
    }
}
