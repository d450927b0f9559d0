//! Browser front end: generate a small synthetic corpus, train a model on it
//! one epoch per call, and localize test sentences with the attention shown.

use ablr::data::{generate_corpus, Corpus, SynthConfig};
use ablr::error::{Error, Result};
use ablr::eval::iou;
use ablr::model::Variant;
use ablr::trainer::{validate_model, TrainConfig, Trainer};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Sizes small enough for an epoch to take well under a second in a browser.
pub fn demo_configs(seed: u64, variant: Variant) -> (SynthConfig, TrainConfig) {
    let synth = SynthConfig {
        clips: 16,
        feature_dim: 8,
        train: 240,
        val: 40,
        test: 40,
        seed,
        ..SynthConfig::default()
    };
    let train = TrainConfig {
        variant,
        hidden: 16,
        attn: 16,
        reg_hidden: 16,
        word_dim: 12,
        batch_size: 16,
        dropout: 0.1,
        clips: synth.clips,
        seed,
        ..TrainConfig::default()
    };
    (synth, train)
}

pub struct Session {
    corpus: Corpus,
    trainer: Trainer<f32>,
}

impl Session {
    pub fn new(seed: u64, variant: &str) -> Result<Self> {
        let variant: Variant = variant.parse()?;
        let (synth, train) = demo_configs(seed, variant);
        let (corpus, _) = generate_corpus(&synth)?;
        let trainer = Trainer::new(&corpus, &train)?;
        Ok(Session { corpus, trainer })
    }

    /// Counts and the vocabulary, for the page header.
    pub fn summary(&self) -> Value {
        let c = &self.corpus;
        json!({
            "train": c.train.len(),
            "val": c.val.len(),
            "test": c.test.len(),
            "clips": c.dims().map(|d| d.1),
            "vocab": c.vocab.len(),
            "variant": self.trainer.model.config.variant.name(),
        })
    }

    pub fn train_epoch(&mut self) -> Result<Value> {
        let loss = self.trainer.run_epoch(&self.corpus)?;
        let val = validate_model(&self.trainer.model, &self.corpus.val)?;
        let r05 = val.recall_at.iter().find(|r| r.sigma == 0.5).map(|r| r.recall);
        Ok(json!({
            "epoch": self.trainer.epoch(),
            "l_reg": loss.l_reg,
            "l_cal": loss.l_cal,
            "total": loss.total,
            "val_miou": val.miou,
            "val_r05": r05,
        }))
    }

    /// Prediction for test sample `index`, with per-clip attention and the
    /// clip features as rows of a heat map.
    pub fn localize(&self, index: usize) -> Result<Value> {
        let s = self
            .corpus
            .test
            .get(index)
            .ok_or_else(|| Error::Usage(format!("test index {index} outside 0..{}", self.corpus.test.len())))?;
        let p = self.trainer.model.predict(s)?;
        let gt = s.gt();
        let f = &s.features;
        let features: Vec<Vec<f64>> = (0..f.rows())
            .map(|r| (0..f.cols()).map(|c| f.get(r, c)).collect())
            .collect();
        Ok(json!({
            "sentence": self.corpus.vocab.decode(&s.tokens),
            "gt": [gt.start, gt.end],
            "pred": [p.span.start, p.span.end],
            "iou": iou(p.span, gt),
            "attention": p.attention.video_attention,
            "features": features,
        }))
    }
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    inner: Session,
}

#[wasm_bindgen]
impl Demo {
    /// Generates the corpus and an untrained model.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, variant: &str) -> std::result::Result<Demo, JsError> {
        Ok(Demo {
            inner: Session::new(u64::from(seed), variant).map_err(js)?,
        })
    }

    pub fn summary(&self) -> String {
        self.inner.summary().to_string()
    }

    /// One training epoch; JSON with losses and validation scores.
    pub fn train_epoch(&mut self) -> std::result::Result<String, JsError> {
        Ok(self.inner.train_epoch().map_err(js)?.to_string())
    }

    pub fn localize(&self, index: u32) -> std::result::Result<String, JsError> {
        Ok(self.inner.localize(index as usize).map_err(js)?.to_string())
    }
}

/// Valid variant names for the page's selector.
#[wasm_bindgen]
pub fn variants() -> String {
    Value::from(Variant::ALL.iter().map(|v| v.name()).collect::<Vec<_>>()).to_string()
}
