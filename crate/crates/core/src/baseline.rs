//! Sliding-window "scan and localize" baseline: every candidate window is
//! re-encoded on its own and matched against the sentence.

use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::encoders::{embed_tokens, encode, encode_sentence};
use crate::error::{Error, Result};
use crate::graph::{Axis, Graph};
use crate::heads::TemporalSpan;
use crate::init::Initializer;
use crate::model::{Model, VideoEncoder};
use crate::tensor::{matmul, Real, Tensor};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    /// Window lengths in clips.
    pub window_lengths: Vec<usize>,
    /// Step between window starts, in clips.
    pub stride: usize,
}

impl ScanConfig {
    pub fn validate(&self, clips: usize) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::Config("scan stride must be at least 1".into()));
        }
        if self.window_lengths.is_empty() {
            return Err(Error::Config("scan needs at least one window length".into()));
        }
        if let Some(l) = self.window_lengths.iter().find(|&&l| l == 0 || l > clips) {
            return Err(Error::Config(format!("window length {l} outside 1..={clips}")));
        }
        Ok(())
    }
}

/// Half-open clip index range `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipWindow {
    pub start: usize,
    pub end: usize,
}

impl ClipWindow {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn span(&self, clips: usize) -> TemporalSpan {
        TemporalSpan::from_clips(self.start, self.end, clips)
    }
}

/// Windows grouped by length in config order, then by start.
pub fn enumerate_windows(clips: usize, config: &ScanConfig) -> Result<Vec<ClipWindow>> {
    config.validate(clips)?;
    let mut out = Vec::new();
    for &len in &config.window_lengths {
        let mut start = 0;
        while start + len <= clips {
            out.push(ClipWindow {
                start,
                end: start + len,
            });
            start += config.stride;
        }
    }
    Ok(out)
}

/// Scores every window of one query.
pub trait WindowScorer {
    fn scores(&self, sample: &Sample, windows: &[ClipWindow]) -> Result<Vec<f64>>;
}

/// Re-encodes each window with the model's video encoder, mean-pools it and
/// compares linear projections of both modalities by inner product.
pub struct LearnedScorer<'a, T: Real> {
    pub model: &'a Model<T>,
    /// `[h x h]`
    pub video_proj: Tensor<T>,
    /// `[h x h]`
    pub sentence_proj: Tensor<T>,
}

impl<'a, T: Real> LearnedScorer<'a, T> {
    /// Projections drawn from `seed`.
    pub fn new(model: &'a Model<T>, seed: u64) -> Self {
        let h = model.config.hidden;
        let mut init = Initializer::new(seed);
        LearnedScorer {
            model,
            video_proj: init.weight(h, h),
            sentence_proj: init.weight(h, h),
        }
    }

    fn pooled_window(&self, features: &Tensor<T>, w: ClipWindow) -> Result<Tensor<T>> {
        let m = self.model;
        let mut g = Graph::new();
        let x = g.input(features.clone());
        let x = g.slice(x, Axis::Cols, w.start, w.len())?;
        let enc = match m.layout.video {
            VideoEncoder::BiLstm(p) => encode(&mut g, &m.store, &p, x, None)?.features,
            VideoEncoder::Linear { w, b } => {
                let wn = g.param(&m.store, w);
                let bn = g.param(&m.store, b);
                let y = g.matmul(wn, x)?;
                let y = g.add(y, bn)?;
                g.relu(y)
            }
        };
        let pooled = g.mean(enc, Axis::Cols);
        matmul(&self.video_proj, g.value(pooled))
    }
}

impl<T: Real> WindowScorer for LearnedScorer<'_, T> {
    fn scores(&self, sample: &Sample, windows: &[ClipWindow]) -> Result<Vec<f64>> {
        let m = self.model;
        let features = sample.features.cast::<T>();
        let mut g = Graph::new();
        let words = embed_tokens(&mut g, &m.store, m.layout.embed, &sample.tokens)?;
        let sent = encode_sentence(&mut g, &m.store, &m.layout.sentence, words, None)?;
        let pooled = g.mean(sent.features, Axis::Cols);
        let s = matmul(&self.sentence_proj, g.value(pooled))?;
        windows
            .iter()
            .map(|&w| {
                let v = self.pooled_window(&features, w)?;
                Ok(v.data().iter().zip(s.data()).map(|(a, b)| (*a * *b).f64()).sum())
            })
            .collect()
    }
}

/// Cosine between a window's mean raw feature and a known concept
/// embedding. Validates the scan harness independently of any learning.
pub struct OracleScorer {
    pub embedding: Vec<f64>,
}

impl WindowScorer for OracleScorer {
    fn scores(&self, sample: &Sample, windows: &[ClipWindow]) -> Result<Vec<f64>> {
        let f = &sample.features;
        if self.embedding.len() != f.rows() {
            return Err(Error::shape(
                "oracle scorer",
                format!("embedding of length {}", f.rows()),
                self.embedding.len(),
            ));
        }
        Ok(windows
            .iter()
            .map(|w| {
                let mean: Vec<f64> = (0..f.rows())
                    .map(|r| (w.start..w.end).map(|c| f.get(r, c)).sum::<f64>() / w.len() as f64)
                    .collect();
                let dot: f64 = mean.iter().zip(&self.embedding).map(|(a, b)| a * b).sum();
                let n = mean.iter().map(|x| x * x).sum::<f64>().sqrt()
                    * self.embedding.iter().map(|x| x * x).sum::<f64>().sqrt();
                dot / n.max(1e-12)
            })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanResult {
    pub span: TemporalSpan,
    pub window: ClipWindow,
    pub scores: Vec<f64>,
}

/// Highest-scoring window; ties go to the earliest in enumeration order.
pub fn scan_localize(sample: &Sample, scorer: &dyn WindowScorer, config: &ScanConfig) -> Result<ScanResult> {
    let windows = enumerate_windows(sample.clips(), config)?;
    scan_windows(sample, scorer, &windows)
}

pub fn scan_windows(sample: &Sample, scorer: &dyn WindowScorer, windows: &[ClipWindow]) -> Result<ScanResult> {
    if windows.is_empty() {
        return Err(Error::usage("scan has no candidate windows"));
    }
    let scores = scorer.scores(sample, windows)?;
    let best = scores
        .iter()
        .enumerate()
        .fold(0, |b, (i, &s)| if s > scores[b] { i } else { b });
    let window = windows[best];
    Ok(ScanResult {
        span: window.span(sample.clips()),
        window,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_corpus, SynthConfig};
    use crate::model::{ModelConfig, Variant};

    fn cfg(lengths: &[usize], stride: usize) -> ScanConfig {
        ScanConfig {
            window_lengths: lengths.to_vec(),
            stride,
        }
    }

    #[test]
    fn window_counts() {
        let w = enumerate_windows(8, &cfg(&[4], 2)).unwrap();
        let spans: Vec<_> = w.iter().map(|w| (w.start, w.end)).collect();
        assert_eq!(spans, [(0, 4), (2, 6), (4, 8)]);
        assert_eq!(enumerate_windows(4, &cfg(&[4], 1)).unwrap().len(), 1);
        assert_eq!(enumerate_windows(256, &cfg(&[16, 32, 64], 8)).unwrap().len(), 85);
        assert!(enumerate_windows(8, &cfg(&[9], 1)).is_err());
        assert!(enumerate_windows(8, &cfg(&[2], 0)).is_err());
        assert!(enumerate_windows(8, &cfg(&[0], 1)).is_err());
    }

    #[test]
    fn closed_form_window_count() {
        for m in [8usize, 31, 64, 256] {
            for stride in 1..6 {
                for len in [1usize, 3, 8] {
                    let n = enumerate_windows(m, &cfg(&[len], stride)).unwrap().len();
                    assert_eq!(n, (m - len) / stride + 1);
                }
            }
        }
    }

    struct Fixed(Vec<f64>);
    impl WindowScorer for Fixed {
        fn scores(&self, _: &Sample, w: &[ClipWindow]) -> Result<Vec<f64>> {
            Ok(self.0[..w.len()].to_vec())
        }
    }

    fn sample(clips: usize, dim: usize) -> Sample {
        let (c, _) = generate_corpus(&SynthConfig {
            clips,
            feature_dim: dim,
            train: 1,
            val: 0,
            test: 0,
            ..SynthConfig::default()
        })
        .unwrap();
        c.train[0].clone()
    }

    #[test]
    fn argmax_contract() {
        let s = sample(8, 4);
        let r = scan_localize(&s, &Fixed(vec![-5.0]), &cfg(&[8], 1)).unwrap();
        assert_eq!((r.span.start, r.span.end), (0.0, 1.0));
        let r = scan_localize(&s, &Fixed(vec![0.1, 0.9, 0.3]), &cfg(&[4], 2)).unwrap();
        assert_eq!(r.window, ClipWindow { start: 2, end: 6 });
        assert_eq!((r.span.start, r.span.end), (0.25, 0.75));
    }

    #[test]
    fn learned_scorer_runs_and_is_clip_aligned() {
        let s = sample(8, 4);
        let model = Model::<f32>::new(
            ModelConfig {
                variant: Variant::FullAw,
                hidden: 5,
                attn: 4,
                reg_hidden: 3,
                word_dim: 3,
                clips: 8,
                feature_dim: 4,
                vocab_size: 40,
            },
            1,
        )
        .unwrap();
        let scorer = LearnedScorer::new(&model, 2);
        let r = scan_localize(&s, &scorer, &cfg(&[2, 4], 1)).unwrap();
        assert_eq!(r.scores.len(), 7 + 5);
        assert!(r.scores.iter().all(|x| x.is_finite()));
        assert_eq!(r.span, r.window.span(8));
    }

    #[test]
    fn oracle_scorer_prefers_the_planted_window() {
        let mut s = sample(8, 3);
        s.features = Tensor::zeros(3, 8);
        for c in 0..8 {
            let planted = (2..5).contains(&c);
            s.features.set(usize::from(planted), c, 1.0);
        }
        let r = scan_localize(
            &s,
            &OracleScorer {
                embedding: vec![0.0, 1.0, 0.0],
            },
            &cfg(&[3], 1),
        )
        .unwrap();
        assert_eq!(r.window, ClipWindow { start: 2, end: 5 });
    }
}
