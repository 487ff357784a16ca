use std::path::Path;

use atr_core::audio::{NoiseSource, SnrSpec, ToyEncoder};
use atr_core::trainer::{Dataset, SyntheticDatasetSpec, TrainConfig};
use atr_core::{Error, Result};

use crate::{NoiseArgs, NoiseKind};

/// `synthetic:<spec>` or a manifest path, encoded with the config's toy encoders.
pub fn load_data(data: &str, config: &TrainConfig) -> Result<Dataset> {
    let d_model = config.refiner.d_model;
    match data.strip_prefix("synthetic:") {
        Some(spec) => {
            let spec: SyntheticDatasetSpec = spec.parse()?;
            let encoder = ToyEncoder::new(config.encoder_seed, d_model)?;
            log::info!("generating {} synthetic clips", spec.len());
            spec.generate(&encoder, d_model)
        }
        None => {
            let path = Path::new(data);
            if !path.exists() {
                return Err(Error::data(format!("manifest {} not found", path.display())));
            }
            Dataset::from_manifest(path, config.encoder_seed, d_model)
        }
    }
}

pub fn load_config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        Some(p) if !p.exists() => Err(Error::data(format!("config {} not found", p.display()))),
        Some(p) => TrainConfig::load(p),
        None => Ok(TrainConfig::default()),
    }
}

pub fn snr_spec(args: &NoiseArgs) -> Option<SnrSpec> {
    args.snr.map(|snr_db| SnrSpec {
        snr_db,
        source: match args.noise {
            NoiseKind::White => NoiseSource::White,
            NoiseKind::Pink => NoiseSource::Pink,
        },
        seed: args.noise_seed,
    })
}

/// Parses `query,ap` or `direction,query,ap` rows; a header line is skipped.
pub fn read_per_query(path: &Path, direction: &str) -> Result<Vec<(u64, f64)>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let (dir, q, ap) = match cells[..] {
            [q, ap] => (None, q, ap),
            [d, q, ap] => (Some(d), q, ap),
            _ => return Err(Error::data(format!("{}:{}: expected 2 or 3 fields", path.display(), n + 1))),
        };
        let (Ok(q), Ok(ap)) = (q.parse::<u64>(), ap.parse::<f64>()) else {
            if n == 0 {
                continue;
            }
            return Err(Error::data(format!("{}:{}: bad row {line:?}", path.display(), n + 1)));
        };
        if dir.map_or(true, |d| d == direction) {
            out.push((q, ap));
        }
    }
    Ok(out)
}
