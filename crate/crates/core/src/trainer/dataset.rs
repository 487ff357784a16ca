use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::container::read_embeddings;
use super::synthetic::SyntheticDatasetSpec;
use crate::audio::{chunk, encode_chunks, encode_clip, mix_noise, read_wav, remove_silence, PreprocessConfig, SnrSpec, ToyEncoder};
use crate::error::{Error, Result};
use crate::numerics::Tensor2D;
use crate::retrieval::{RelevanceMap, ToyTextEncoder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            _ => Err(Error::data(format!("unknown split {s:?} (train | val | test)"))),
        }
    }
}

/// Bits of a caption or chunk id below the owning clip id.
pub const SUB_ID_BITS: u32 = 20;

/// Id of caption `j` of item `item`: `(item << 20) | j`.
pub fn caption_id(item: u64, j: usize) -> Result<u64> {
    if item >> (64 - SUB_ID_BITS) != 0 || j >= 1 << SUB_ID_BITS {
        return Err(Error::data(format!("id {item} or caption index {j} too large to pack")));
    }
    Ok(item << SUB_ID_BITS | j as u64)
}

/// Where a clip's waveform can be found again (needed to re-encode with noise).
#[derive(Debug, Clone, PartialEq)]
pub enum AudioRef {
    Synthetic(usize),
    Wav(PathBuf),
    /// Precomputed chunk rows in an embedding container, keyed by clip id.
    Stored { path: PathBuf, clip: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Caption {
    pub id: u64,
    pub text: Option<String>,
    /// Token rows, tokens × d_model.
    pub seq: Tensor2D,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub id: u64,
    /// Items sharing a group are mutually relevant (the class, for synthetic data).
    pub group: u64,
    pub split: Split,
    /// Encoded chunks, chunks × d_model.
    pub audio: Tensor2D,
    pub captions: Vec<Caption>,
    pub source: AudioRef,
}

/// Encoded audio/caption pairs. Encodings are computed once at load time and
/// reused by every epoch and evaluation.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub items: Vec<Item>,
    pub encoder: ToyEncoder,
    pub preprocess: PreprocessConfig,
    pub synthetic: Option<SyntheticDatasetSpec>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> Vec<&Item> {
        self.items.iter().filter(|i| i.split == split).collect()
    }

    /// Training pairs `(item index, caption index)` in dataset order.
    pub fn train_pairs(&self) -> Vec<(usize, usize)> {
        self.items
            .iter()
            .enumerate()
            .filter(|(_, it)| it.split == Split::Train)
            .flat_map(|(i, it)| (0..it.captions.len()).map(move |j| (i, j)))
            .collect()
    }

    /// Startup checks: nonempty training split and sequence widths of `d_model`.
    pub fn check(&self, d_model: usize) -> Result<()> {
        if self.train_pairs().is_empty() {
            return Err(Error::data("dataset has no training pairs"));
        }
        for it in &self.items {
            if it.audio.rows() == 0 || it.audio.cols() != d_model {
                return Err(Error::data(format!(
                    "item {} audio is {:?}, expected n×{d_model}",
                    it.id,
                    it.audio.shape()
                )));
            }
            if it.captions.is_empty() {
                return Err(Error::data(format!("item {} has no captions", it.id)));
            }
            if let Some(c) = it.captions.iter().find(|c| c.seq.rows() == 0 || c.seq.cols() != d_model) {
                return Err(Error::data(format!("caption {} is {:?}, expected n×{d_model}", c.id, c.seq.shape())));
            }
        }
        Ok(())
    }

    /// Audio-to-text relevance within `split`; invert it for text-to-audio.
    pub fn relevance(&self, split: Split) -> RelevanceMap {
        let items = self.split(split);
        let mut by_group: HashMap<u64, Vec<u64>> = HashMap::new();
        for it in &items {
            by_group.entry(it.group).or_default().extend(it.captions.iter().map(|c| c.id));
        }
        let mut rel = RelevanceMap::new();
        for it in &items {
            for &c in &by_group[&it.group] {
                rel.insert(it.id, c);
            }
        }
        rel
    }

    /// Re-encodes `item` with noise mixed in after silence removal.
    pub fn noisy_audio(&self, item: &Item, spec: &SnrSpec) -> Result<Tensor2D> {
        let wave = match &item.source {
            AudioRef::Synthetic(index) => self
                .synthetic
                .as_ref()
                .ok_or_else(|| Error::usage("synthetic item without its generator spec"))?
                .render_clip(*index)?,
            AudioRef::Wav(path) => read_wav(path)?,
            AudioRef::Stored { .. } => {
                return Err(Error::usage(format!(
                    "item {} has only precomputed encodings; noise needs the waveform",
                    item.id
                )))
            }
        };
        let trimmed = remove_silence(&wave, &self.preprocess.silence)?;
        let per_clip = SnrSpec {
            seed: spec.seed.wrapping_add(item.id),
            ..spec.clone()
        };
        let noise = per_clip.source.render(trimmed.len(), trimmed.sample_rate(), per_clip.seed)?;
        let mixed = mix_noise(&trimmed, &noise, &per_clip)?;
        encode_chunks(&chunk(&mixed, self.preprocess.chunk_len_s)?, &self.encoder)
    }

    /// Loads a JSON-lines manifest, resolving and encoding every record up front.
    ///
    /// Each line is `{"id": 7, "audio": "clips/a.wav", "captions": ["..."], "split": "train"}`.
    /// `audio` is a WAV path relative to the manifest, or `aemb:<container>#<clip id>`
    /// to use precomputed chunk rows. `split` defaults to `train`.
    pub fn from_manifest(path: &Path, encoder_seed: u64, d_model: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let encoder = ToyEncoder::new(encoder_seed, d_model)?;
        let text_encoder = ToyTextEncoder::new(encoder_seed, d_model);
        let preprocess = PreprocessConfig::default();
        let mut stores: HashMap<PathBuf, (Vec<u64>, Tensor2D)> = HashMap::new();
        let mut seen = HashSet::new();
        let mut items = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let at = |e: Error| Error::data(format!("{}:{}: {e}", path.display(), n + 1));
            let rec: ManifestRecord =
                serde_json::from_str(line).map_err(|e| at(Error::data(e.to_string())))?;
            if !seen.insert(rec.id) {
                return Err(at(Error::data(format!("duplicate id {}", rec.id))));
            }
            if rec.captions.is_empty() {
                return Err(at(Error::data("record has no captions")));
            }
            let split: Split = rec.split.as_deref().unwrap_or("train").parse().map_err(at)?;
            let source = parse_audio_ref(&rec.audio, base).map_err(at)?;
            let audio = match &source {
                AudioRef::Wav(p) => {
                    if !p.exists() {
                        return Err(at(Error::data(format!("audio file {} not found", p.display()))));
                    }
                    encode_clip(&read_wav(p).map_err(at)?, &encoder, &preprocess).map_err(at)?
                }
                AudioRef::Stored { path: p, clip } => {
                    if !stores.contains_key(p) {
                        stores.insert(p.clone(), read_embeddings(p).map_err(at)?);
                    }
                    let (ids, rows) = &stores[p];
                    stored_chunks(ids, rows, *clip).map_err(at)?
                }
                AudioRef::Synthetic(_) => unreachable!("manifests never reference synthetic clips"),
            };
            let captions = rec
                .captions
                .iter()
                .enumerate()
                .map(|(j, t)| {
                    Ok(Caption {
                        id: caption_id(rec.id, j)?,
                        text: Some(t.clone()),
                        seq: text_encoder.sequence(t)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
                .map_err(at)?;
            items.push(Item {
                id: rec.id,
                group: rec.id,
                split,
                audio,
                captions,
                source,
            });
        }
        let ds = Self {
            items,
            encoder,
            preprocess,
            synthetic: None,
        };
        ds.check(d_model)?;
        Ok(ds)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestRecord {
    id: u64,
    audio: String,
    captions: Vec<String>,
    #[serde(default)]
    split: Option<String>,
}

fn parse_audio_ref(s: &str, base: &Path) -> Result<AudioRef> {
    if let Some(rest) = s.strip_prefix("aemb:") {
        let (file, clip) = rest
            .rsplit_once('#')
            .ok_or_else(|| Error::data(format!("expected aemb:<file>#<clip id>, got {s:?}")))?;
        let clip = clip
            .parse()
            .map_err(|_| Error::data(format!("bad clip id in {s:?}")))?;
        return Ok(AudioRef::Stored { path: base.join(file), clip });
    }
    Ok(AudioRef::Wav(base.join(s)))
}

/// Rows whose id is `(clip << 20) | chunk`, in chunk order.
pub fn stored_chunks(ids: &[u64], rows: &Tensor2D, clip: u64) -> Result<Tensor2D> {
    let mut found: Vec<(u64, usize)> = ids
        .iter()
        .enumerate()
        .filter(|(_, id)| *id >> SUB_ID_BITS == clip)
        .map(|(r, id)| (id & ((1 << SUB_ID_BITS) - 1), r))
        .collect();
    if found.is_empty() {
        return Err(Error::data(format!("no stored chunks for clip {clip}")));
    }
    found.sort_unstable();
    let picked: Vec<&[f64]> = found.iter().map(|&(_, r)| rows.row(r)).collect();
    Tensor2D::from_rows(&picked)
}
