//! One-axis grid ablations.
//!
//! Every grid point trains from the same base config and seed, then scores
//! the test split in both directions. A failing point is reported in its row
//! and the grid carries on.

use std::fmt::Write as _;
use std::str::FromStr;

use super::config::{parse_pooling, parse_projection, TrainConfig};
use super::dataset::{Dataset, Split};
use super::train::{evaluate, train, Evaluation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationAxis {
    LossWeights,
    BatchSize,
    ProjectionType,
    LossType,
    Pooling,
}

impl FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.replace('_', "-").as_str() {
            "loss-weights" => Self::LossWeights,
            "batch-size" => Self::BatchSize,
            "projection-type" => Self::ProjectionType,
            "loss-type" => Self::LossType,
            "pooling" => Self::Pooling,
            _ => {
                return Err(Error::config(format!(
                    "unknown ablation axis {s:?} (loss-weights | batch-size | projection-type | loss-type | pooling)"
                )))
            }
        })
    }
}

impl AblationAxis {
    pub fn name(&self) -> &'static str {
        match self {
            Self::LossWeights => "loss-weights",
            Self::BatchSize => "batch-size",
            Self::ProjectionType => "projection-type",
            Self::LossType => "loss-type",
            Self::Pooling => "pooling",
        }
    }

    /// Grid used when none is given.
    pub fn default_grid(&self) -> Vec<String> {
        let v: &[&str] = match self {
            Self::LossWeights => &["0:0:1", "0.1:0.2:0.7", "0.2:0.3:0.5", "0.2:0.1:0.7", "0.3:0.3:0.4", "0.4:0.4:0.2"],
            Self::BatchSize => &["4", "8", "16", "32", "64"],
            Self::ProjectionType => &["linear", "transformer"],
            Self::LossType => &["contrastive", "hybrid"],
            Self::Pooling => &["attention", "mean"],
        };
        v.iter().map(|s| s.to_string()).collect()
    }

    /// `base` with this axis set to `value`.
    ///
    /// Loss weights are written `directional:l1:contrastive`. Loss types are
    /// `hybrid` (the base weights), `contrastive`, `directional` and `l1`.
    pub fn apply(&self, base: &TrainConfig, value: &str) -> Result<TrainConfig> {
        let mut c = base.clone();
        match self {
            Self::LossWeights => {
                let parts: Vec<&str> = value.split(':').collect();
                if parts.len() != 3 {
                    return Err(Error::config(format!("loss weights {value:?}: expected d:l:c")));
                }
                for (k, p) in ["w_directional", "w_l1", "w_contrastive"].iter().zip(parts) {
                    c.set(k, p.trim())?;
                }
            }
            Self::BatchSize => c.set("batch_size", value)?,
            Self::ProjectionType => c.refiner.projection = parse_projection(value)?,
            Self::LossType => {
                c.loss_weights = match value {
                    "hybrid" => base.loss_weights,
                    "contrastive" => [0.0, 0.0, 1.0],
                    "directional" => [1.0, 0.0, 0.0],
                    "l1" => [0.0, 1.0, 0.0],
                    _ => return Err(Error::config(format!("unknown loss type {value:?}"))),
                }
            }
            Self::Pooling => c.refiner.pooling = parse_pooling(value)?,
        }
        c.validate()?;
        Ok(c)
    }
}

/// Splits a comma-separated grid, e.g. `4,8,16` or `0:0:1,0.3:0.3:0.4`.
pub fn parse_grid(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|v| !v.is_empty()).map(String::from).collect()
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub axis: AblationAxis,
    pub value: String,
    /// Test-split evaluation and best epoch, or the error message.
    pub outcome: std::result::Result<(Evaluation, usize), String>,
}

pub const ABLATION_HEADER: &str = "axis,value,a2t_R@1,a2t_R@5,a2t_R@10,a2t_mAP@10,t2a_R@1,t2a_R@5,t2a_R@10,t2a_mAP@10,best_epoch,status";

fn run_point(axis: AblationAxis, base: &TrainConfig, data: &Dataset, value: &str) -> Result<(Evaluation, usize)> {
    let config = axis.apply(base, value)?;
    let outcome = train(config, data)?;
    let eval = evaluate(&outcome.best.params, data, Split::Test, None)?;
    Ok((eval, outcome.best.best_epoch))
}

pub fn ablate(base: &TrainConfig, data: &Dataset, axis: AblationAxis, grid: &[String]) -> Vec<AblationRow> {
    grid.iter()
        .map(|value| {
            let outcome = run_point(axis, base, data, value).map_err(|e| e.to_string());
            if let Err(e) = &outcome {
                log::warn!("ablation {}={value} failed: {e}", axis.name());
            }
            AblationRow {
                axis,
                value: value.clone(),
                outcome,
            }
        })
        .collect()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from(ABLATION_HEADER);
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{}", r.axis.name(), csv_field(&r.value));
        match &r.outcome {
            Ok((e, best_epoch)) => {
                for v in e.a2t.values().iter().chain(&e.t2a.values()) {
                    let _ = write!(out, ",{v:.4}");
                }
                let _ = writeln!(out, ",{best_epoch},ok");
            }
            Err(msg) => {
                let _ = writeln!(out, ",,,,,,,,,,{}", csv_field(&format!("error: {msg}")));
            }
        }
    }
    out
}
