//! Mini-batch training with Adam, gradient-norm clipping and
//! best-validation model selection.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::data::{Corpus, Sample};
use crate::encoders::Dropout;
use crate::error::{Error, Result};
use crate::eval::{evaluate, Recall, DEFAULT_SIGMAS};
use crate::graph::Graph;
use crate::losses::{total_loss, LossBreakdown, DEFAULT_ALPHA, DEFAULT_BETA};
use crate::model::{Model, ModelConfig, Variant};
use crate::params::ParamStore;
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: Variant,
    pub alpha: f64,
    pub beta: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub hidden: usize,
    pub attn: usize,
    pub reg_hidden: usize,
    pub word_dim: usize,
    pub dropout: f64,
    pub clips: usize,
    pub seed: u64,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub grad_clip: f64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::FullAw,
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 50,
            hidden: 64,
            attn: 64,
            reg_hidden: 64,
            word_dim: 50,
            dropout: 0.5,
            clips: 32,
            seed: 0,
            grad_clip: 5.0,
            precision: Precision::F32,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha.is_finite() && self.beta.is_finite()) {
            return bad(format!(
                "alpha and beta must be finite and >= 0, got {} and {}",
                self.alpha, self.beta
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.grad_clip.is_nan() || self.grad_clip < 0.0 {
            return bad(format!("grad_clip must be >= 0, got {}", self.grad_clip));
        }
        for (name, v) in [
            ("hidden", self.hidden),
            ("attn", self.attn),
            ("reg_hidden", self.reg_hidden),
            ("word_dim", self.word_dim),
            ("clips", self.clips),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        Ok(())
    }

    /// Calibration weight after the variant's rule.
    pub fn effective_beta(&self) -> f64 {
        if self.variant.forces_zero_beta() {
            0.0
        } else {
            self.beta
        }
    }

    pub fn model_config(&self, feature_dim: usize, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            variant: self.variant,
            hidden: self.hidden,
            attn: self.attn,
            reg_hidden: self.reg_hidden,
            word_dim: self.word_dim,
            clips: self.clips,
            feature_dim,
            vocab_size,
        }
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam<T: Real> {
    pub learning_rate: f64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    step: i32,
}

impl<T: Real> Adam<T> {
    pub fn new(store: &ParamStore<T>, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            m: store.zeros_like(),
            v: store.zeros_like(),
            step: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[Tensor<T>]) {
        self.step += 1;
        let (b1, b2) = (T::of(ADAM_BETA1), T::of(ADAM_BETA2));
        let (one, eps) = (T::one(), T::of(ADAM_EPS));
        let c1 = one - b1.powi(self.step);
        let c2 = one - b2.powi(self.step);
        let lr = T::of(self.learning_rate);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let i = id.index();
            let g = grads[i].data();
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            let p = store.get_mut(id).data_mut();
            for j in 0..p.len() {
                m[j] = b1 * m[j] + (one - b1) * g[j];
                v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                p[j] = p[j] - lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

/// Scales `grads` so their joint L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_gradients<T: Real>(grads: &mut [Tensor<T>], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.squared_norm().f64()).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = T::of(max_norm / norm);
        for g in grads.iter_mut() {
            g.scale_assign(s);
        }
    }
    norm
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub miou: f64,
    pub recall_at: Vec<Recall>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Means of the batch-mean losses over the epoch.
    pub loss: LossBreakdown,
    pub val: Option<ValidationSummary>,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation mIoU, or from the
    /// last epoch when there is no validation split.
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
}

/// Running batch state for one optimizer step.
pub struct BatchLoss {
    pub l_reg: f64,
    pub l_cal: f64,
}

/// Accumulates the batch-mean gradient of the weighted loss into `grads`.
pub fn batch_gradients<T: Real>(
    model: &Model<T>,
    batch: &[&Sample],
    alpha: f64,
    beta: f64,
    dropout: Option<(f64, &mut ChaCha8Rng)>,
    grads: &mut [Tensor<T>],
) -> Result<BatchLoss> {
    let inv = T::of(1.0 / batch.len() as f64);
    let (mut l_reg, mut l_cal) = (0.0, 0.0);
    let (rate, mut rng) = match dropout {
        Some((r, rng)) => (r, Some(rng)),
        None => (0.0, None),
    };
    for s in batch {
        let mut g = Graph::new();
        let features = s.features.cast::<T>();
        let fwd = match rng.as_deref_mut() {
            Some(rng) => {
                let mut d = Dropout { rate, rng };
                model.forward(&mut g, &features, &s.tokens, Some(&mut d))?
            }
            None => model.forward(&mut g, &features, &s.tokens, None)?,
        };
        let losses = model.loss(&mut g, &fwd, s.gt(), alpha, beta)?;
        l_reg += losses.reg.map_or(0.0, |r| g.value(r).data()[0].f64());
        l_cal += g.value(losses.cal).data()[0].f64();
        let scaled = g.scale(losses.total, inv);
        g.backward_into(scaled, &model.store, grads)?;
    }
    let n = batch.len() as f64;
    Ok(BatchLoss {
        l_reg: l_reg / n,
        l_cal: l_cal / n,
    })
}

pub fn validate_model<T: Real>(model: &Model<T>, samples: &[Sample]) -> Result<ValidationSummary> {
    let mut preds = Vec::with_capacity(samples.len());
    for s in samples {
        preds.push(model.predict(s)?.span);
    }
    let gts: Vec<_> = samples.iter().map(Sample::gt).collect();
    let r = evaluate(&preds, &gts, &DEFAULT_SIGMAS)?;
    Ok(ValidationSummary {
        miou: r.miou,
        recall_at: r.recall_at,
    })
}

pub fn train(corpus: &Corpus, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with_progress(corpus, config, |_| {})
}

/// Calls `progress` after every epoch.
pub fn train_with_progress(
    corpus: &Corpus,
    config: &TrainConfig,
    progress: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    match config.precision {
        Precision::F32 => train_generic::<f32>(corpus, config, progress),
        Precision::F64 => train_generic::<f64>(corpus, config, progress),
    }
}

/// A model with its optimizer and random streams, advanced one epoch at a
/// time. Does no wall-clock timing, so it also runs where clocks are absent.
pub struct Trainer<T: Real> {
    pub model: Model<T>,
    config: TrainConfig,
    adam: Adam<T>,
    shuffle_rng: ChaCha8Rng,
    dropout_rng: ChaCha8Rng,
    order: Vec<usize>,
    grads: Vec<Tensor<T>>,
    epoch: usize,
}

impl<T: Real> Trainer<T> {
    pub fn new(corpus: &Corpus, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        if corpus.train.is_empty() {
            return Err(Error::usage("training split is empty"));
        }
        let (feature_dim, clips) = corpus.dims().expect("nonempty train split");
        if clips != config.clips {
            return Err(Error::Config(format!(
                "config has clips = {} but the corpus has {clips} clips per video",
                config.clips
            )));
        }
        let model = Model::<T>::new(config.model_config(feature_dim, corpus.vocab.len()), config.seed)?;
        Ok(Trainer {
            adam: Adam::new(&model.store, config.learning_rate),
            grads: model.store.zeros_like(),
            model,
            config: config.clone(),
            shuffle_rng: ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1)),
            dropout_rng: ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2)),
            order: (0..corpus.train.len()).collect(),
            epoch: 0,
        })
    }

    /// Epochs completed so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// One pass over `corpus.train`; returns the mean batch losses.
    pub fn run_epoch(&mut self, corpus: &Corpus) -> Result<LossBreakdown> {
        if corpus.train.len() != self.order.len() {
            return Err(Error::usage("training split changed size between epochs"));
        }
        self.epoch += 1;
        let epoch = self.epoch;
        let (alpha, beta) = (self.config.alpha, self.config.effective_beta());
        self.order.shuffle(&mut self.shuffle_rng);
        let (mut sum_reg, mut sum_cal, mut batches) = (0.0, 0.0, 0usize);
        for (b, chunk) in self.order.chunks(self.config.batch_size).enumerate() {
            for g in self.grads.iter_mut() {
                g.data_mut().fill(T::zero());
            }
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &corpus.train[i]).collect();
            let dropout = (self.config.dropout > 0.0).then_some((self.config.dropout, &mut self.dropout_rng));
            let loss = batch_gradients(&self.model, &batch, alpha, beta, dropout, &mut self.grads)?;
            let total = total_loss(loss.l_reg, loss.l_cal, alpha, beta).total;
            if !total.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: b + 1,
                    detail: format!(
                        "loss is {total} (regression {}, calibration {})",
                        loss.l_reg, loss.l_cal
                    ),
                });
            }
            let norm = clip_gradients(&mut self.grads, self.config.grad_clip);
            if !norm.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: b + 1,
                    detail: format!("gradient norm is {norm}"),
                });
            }
            self.adam.step(&mut self.model.store, &self.grads);
            sum_reg += loss.l_reg;
            sum_cal += loss.l_cal;
            batches += 1;
        }
        let n = batches as f64;
        Ok(total_loss(sum_reg / n, sum_cal / n, alpha, beta))
    }
}

fn train_generic<T: Real>(
    corpus: &Corpus,
    config: &TrainConfig,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::<T>::new(corpus, config)?;
    let model_config = trainer.model.config.clone();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ParamStore<T>)> = None;

    for _ in 0..config.epochs {
        let started = Instant::now();
        let loss = trainer.run_epoch(corpus)?;
        let val = if corpus.val.is_empty() {
            None
        } else {
            Some(validate_model(&trainer.model, &corpus.val)?)
        };
        let record = EpochRecord {
            epoch: trainer.epoch(),
            loss,
            val,
            seconds: started.elapsed().as_secs_f64(),
        };
        let score = record.val.as_ref().map_or(f64::NEG_INFINITY, |v| v.miou);
        // Without validation the latest epoch wins.
        if best.as_ref().is_none_or(|(s, _, _)| score > *s || record.val.is_none()) {
            best = Some((score, record.epoch, trainer.model.store.clone()));
        }
        progress(&record);
        history.push(record);
    }

    let (epoch, store) = match best {
        Some((_, e, s)) => (e, s),
        None => (0, trainer.model.store.clone()),
    };
    let checkpoint = Checkpoint {
        train_config: config.clone(),
        model_config,
        epoch,
        history: history
            .iter()
            .map(|r| EpochRecord {
                seconds: 0.0,
                ..r.clone()
            })
            .collect(),
        params: store.cast(),
    };
    Ok(TrainOutcome { checkpoint, history })
}
