use std::fmt::Write as _;

use rand::seq::SliceRandom;

use super::adam::{adam_step, AdamState};
use super::config::TrainConfig;
use super::container::Checkpoint;
use super::dataset::{Dataset, Split};
use crate::audio::SnrSpec;
use crate::error::{Error, Result};
use crate::numerics::{stream_rng, Stream, Tape, Tensor2D};
use crate::objective::{hybrid_on_tape, BatchLossReport, LossWeights, Temperature};
use crate::refinement::{Modality, RefinerParams};
use crate::retrieval::{EmbeddingIndex, IndexModality, MetricReport};

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: u64,
    pub loss: BatchLossReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub val_a2t_map: f64,
    pub val_t2a_map: f64,
    /// Mean of the two directions; the early-stopping criterion.
    pub val_map: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn steps_csv(&self) -> String {
        let mut out = String::from("epoch,step,batch,total,directional,l1,contrastive\n");
        for s in &self.steps {
            let l = &s.loss;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                s.epoch, s.step, l.batch_size, l.total, l.directional, l.l1, l.contrastive
            );
        }
        out
    }

    pub fn epochs_csv(&self) -> String {
        let mut out = String::from("epoch,mean_loss,val_a2t_mAP@10,val_t2a_mAP@10,val_mAP@10,improved\n");
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                e.epoch, e.mean_loss, e.val_a2t_map, e.val_t2a_map, e.val_map, e.improved
            );
        }
        out
    }
}

/// Inference-path embeddings of one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedded {
    pub audio: EmbeddingIndex,
    pub text: EmbeddingIndex,
    /// Audio pooling weights per item id (empty with mean pooling).
    pub attention: Vec<(u64, Vec<f64>)>,
}

/// Embeds every item of `split` with `embed_single`, optionally re-encoding audio with noise.
pub fn embed_split(params: &RefinerParams, data: &Dataset, split: Split, noise: Option<&SnrSpec>) -> Result<Embedded> {
    let items = data.split(split);
    if items.is_empty() {
        return Err(Error::data(format!("split {split:?} is empty")));
    }
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let (mut audio_ids, mut audio_rows, mut attention) = (Vec::new(), Vec::new(), Vec::new());
    let (mut text_ids, mut text_rows) = (Vec::new(), Vec::new());
    for it in items {
        let seq = match noise {
            Some(spec) => data.noisy_audio(it, spec)?,
            None => it.audio.clone(),
        };
        let x = tape.constant(seq);
        let (v, alpha) = vars.embed_single(&mut tape, x, Modality::Audio)?;
        audio_ids.push(it.id);
        audio_rows.push(tape.value(v).data().to_vec());
        if let Some(a) = alpha {
            attention.push((it.id, tape.value(a).data().to_vec()));
        }
        for c in &it.captions {
            let x = tape.constant(c.seq.clone());
            let (v, _) = vars.embed_single(&mut tape, x, Modality::Text)?;
            text_ids.push(c.id);
            text_rows.push(tape.value(v).data().to_vec());
        }
    }
    Ok(Embedded {
        audio: EmbeddingIndex::new(audio_ids, Tensor2D::from_rows(&audio_rows)?, IndexModality::Audio)?,
        text: EmbeddingIndex::new(text_ids, Tensor2D::from_rows(&text_rows)?, IndexModality::Text)?,
        attention,
    })
}

/// Both retrieval directions over one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub a2t: MetricReport,
    pub t2a: MetricReport,
    pub attention: Vec<(u64, Vec<f64>)>,
}

impl Evaluation {
    pub fn mean_map(&self) -> f64 {
        0.5 * (self.a2t.map_at_10 + self.t2a.map_at_10)
    }
}

pub fn evaluate(params: &RefinerParams, data: &Dataset, split: Split, noise: Option<&SnrSpec>) -> Result<Evaluation> {
    let e = embed_split(params, data, split, noise)?;
    let rel = data.relevance(split);
    Ok(Evaluation {
        a2t: MetricReport::evaluate(&e.audio, &e.text, &rel)?,
        t2a: MetricReport::evaluate(&e.text, &e.audio, &rel.inverted())?,
        attention: e.attention,
    })
}

/// Epoch-level training driver with early stopping.
#[derive(Debug, Clone)]
pub struct Trainer<'a> {
    data: &'a Dataset,
    weights: LossWeights,
    state: Checkpoint,
    best: Checkpoint,
    validation: Split,
    pub log: TrainLog,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// State at the epoch with the highest validation mAP@10.
    pub best: Checkpoint,
    /// State after the final epoch.
    pub last: Checkpoint,
    pub log: TrainLog,
    pub stopped_early: bool,
}

impl<'a> Trainer<'a> {
    pub fn new(config: TrainConfig, data: &'a Dataset) -> Result<Self> {
        config.validate()?;
        let params = RefinerParams::init(&config.refiner, config.seed, config.temperature)?;
        let adam = AdamState::new(params.tensors().into_iter().map(|(_, t)| t));
        Self::resume(
            Checkpoint {
                config,
                params,
                adam,
                epoch: 0,
                best_metric: f64::NEG_INFINITY,
                best_epoch: 0,
                epochs_since_best: 0,
            },
            data,
        )
    }

    /// Continues from `state`. Until validation improves again, the best
    /// checkpoint is `state` itself.
    pub fn resume(state: Checkpoint, data: &'a Dataset) -> Result<Self> {
        state.config.validate()?;
        data.check(state.config.refiner.d_model)?;
        let validation = if data.split(Split::Validation).is_empty() {
            log::warn!("no validation split; early stopping monitors the training split");
            Split::Train
        } else {
            Split::Validation
        };
        Ok(Self {
            data,
            weights: state.config.loss_weights()?,
            best: state.clone(),
            state,
            validation,
            log: TrainLog::default(),
        })
    }

    pub fn state(&self) -> &Checkpoint {
        &self.state
    }

    pub fn best(&self) -> &Checkpoint {
        &self.best
    }

    pub fn finished(&self) -> bool {
        let c = &self.state.config;
        self.state.epoch >= c.max_epochs || self.stopped_early()
    }

    fn stopped_early(&self) -> bool {
        self.state.epochs_since_best >= self.state.config.early_stop_patience
    }

    fn step(&mut self, batch: &[(usize, usize)]) -> Result<BatchLossReport> {
        let config = &self.state.config;
        let mut tape = Tape::new();
        let vars = self.state.params.bind(&mut tape);
        let mut rng = stream_rng(config.seed, Stream::TrainStep, self.state.adam.step);
        let (mut audio, mut text) = (Vec::with_capacity(batch.len()), Vec::with_capacity(batch.len()));
        for &(i, j) in batch {
            let item = &self.data.items[i];
            let a = tape.constant(item.audio.clone());
            let t = tape.constant(item.captions[j].seq.clone());
            let out = vars.refine_pair(&mut tape, a, t, &mut rng)?;
            audio.push(out.audio);
            text.push(out.text);
        }
        let a = tape.concat_rows(&audio)?;
        let t = tape.concat_rows(&text)?;
        let temperature = match vars.log_temperature {
            Some(v) => Temperature::LearnedLog(v),
            None => Temperature::Fixed(config.temperature),
        };
        let loss = hybrid_on_tape(&mut tape, a, t, &self.weights, temperature)?;
        let report = loss.report(&tape);
        if !report.total.is_finite() {
            return Err(Error::Numeric(format!(
                "loss is {} at step {}",
                report.total, self.state.adam.step
            )));
        }
        tape.backward(loss.total)?;
        let lr = config.learning_rate;
        self.state.params.collect_grads(&tape, &vars);
        let result = adam_step(&mut self.state.params.tensors_mut(), &mut self.state.adam, lr);
        self.state.params.zero_grads();
        result?;
        Ok(report)
    }

    /// One pass over the shuffled training pairs followed by validation.
    pub fn run_epoch(&mut self) -> Result<&EpochRecord> {
        let epoch = self.state.epoch;
        let config = self.state.config.clone();
        let mut pairs = self.data.train_pairs();
        pairs.shuffle(&mut stream_rng(config.seed, Stream::Shuffle, epoch as u64));
        let mut total = 0.0;
        let batches = pairs.chunks(config.batch_size).count();
        for batch in pairs.chunks(config.batch_size) {
            let report = self.step(batch)?;
            total += report.total;
            self.log.steps.push(StepRecord {
                epoch: epoch + 1,
                step: self.state.adam.step,
                loss: report,
            });
        }
        let eval = evaluate(&self.state.params, self.data, self.validation, None)?;
        let val_map = eval.mean_map();
        self.state.epoch += 1;
        let improved = val_map > self.state.best_metric;
        if improved {
            self.state.best_metric = val_map;
            self.state.best_epoch = self.state.epoch;
            self.state.epochs_since_best = 0;
            self.best = self.state.clone();
        } else {
            self.state.epochs_since_best += 1;
        }
        log::info!(
            "epoch {} loss {:.5} val mAP@10 {:.4}{}",
            self.state.epoch,
            total / batches as f64,
            val_map,
            if improved { " *" } else { "" }
        );
        self.log.epochs.push(EpochRecord {
            epoch: self.state.epoch,
            mean_loss: total / batches as f64,
            val_a2t_map: eval.a2t.map_at_10,
            val_t2a_map: eval.t2a.map_at_10,
            val_map,
            improved,
        });
        Ok(self.log.epochs.last().expect("just pushed"))
    }

    pub fn run(mut self) -> Result<TrainOutcome> {
        while !self.finished() {
            self.run_epoch()?;
        }
        Ok(TrainOutcome {
            stopped_early: self.stopped_early(),
            best: self.best,
            last: self.state,
            log: self.log,
        })
    }
}

/// Trains from scratch until `max_epochs` or early stopping.
pub fn train(config: TrainConfig, data: &Dataset) -> Result<TrainOutcome> {
    Trainer::new(config, data)?.run()
}
