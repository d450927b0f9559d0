//! The full localization network and its ablation variants.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::coattention::{
    co_attention, single_step_attention, AttentionParams, CoAttentionNodes, CoAttentionOutput, CoAttentionParams,
};
use crate::data::Sample;
use crate::encoders::{embed_tokens, encode, encode_sentence, BiEncoderParams, Dropout, EncodedSequence};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::heads::{
    localize_by_attention_postprocess, regress_af, regress_aw, sanitize_span, trim_to_clips, AfHeadParams,
    AwHeadParams, TemporalSpan,
};
use crate::init::Initializer;
use crate::losses::{calibration_loss_node, clip_mask, regression_loss_node, total_loss_node};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{Real, Tensor};

/// Attention threshold used by the post-processing variant.
pub const POSTPROCESS_FRACTION: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "full-aw")]
    FullAw,
    #[serde(rename = "full-af")]
    FullAf,
    #[serde(rename = "reg-aw")]
    RegAw,
    #[serde(rename = "reg-af")]
    RegAf,
    #[serde(rename = "c3d-aw")]
    C3dAw,
    #[serde(rename = "c3d-af")]
    C3dAf,
    #[serde(rename = "stv-aw")]
    StvAw,
    #[serde(rename = "stv-af")]
    StvAf,
    #[serde(rename = "ablp")]
    Ablp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadKind {
    AttentionWeight,
    AttendedFeature,
}

impl Variant {
    pub const ALL: [Variant; 9] = [
        Variant::FullAw,
        Variant::FullAf,
        Variant::RegAw,
        Variant::RegAf,
        Variant::C3dAw,
        Variant::C3dAf,
        Variant::StvAw,
        Variant::StvAf,
        Variant::Ablp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::FullAw => "full-aw",
            Variant::FullAf => "full-af",
            Variant::RegAw => "reg-aw",
            Variant::RegAf => "reg-af",
            Variant::C3dAw => "c3d-aw",
            Variant::C3dAf => "c3d-af",
            Variant::StvAw => "stv-aw",
            Variant::StvAf => "stv-af",
            Variant::Ablp => "ablp",
        }
    }

    /// `None` for the post-processing variant, which has no regressor.
    pub fn head(self) -> Option<HeadKind> {
        match self {
            Variant::FullAw | Variant::RegAw | Variant::C3dAw | Variant::StvAw => Some(HeadKind::AttentionWeight),
            Variant::FullAf | Variant::RegAf | Variant::C3dAf | Variant::StvAf => Some(HeadKind::AttendedFeature),
            Variant::Ablp => None,
        }
    }

    /// Clip features go through a linear projection instead of a Bi-LSTM.
    pub fn linear_video(self) -> bool {
        matches!(self, Variant::C3dAw | Variant::C3dAf)
    }

    /// The sentence is one mean vector and the video is attended once.
    pub fn single_sentence_vector(self) -> bool {
        matches!(self, Variant::StvAw | Variant::StvAf)
    }

    /// Regression-only training.
    pub fn forces_zero_beta(self) -> bool {
        matches!(self, Variant::RegAw | Variant::RegAf)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
            Error::usage(format!("unknown variant `{s}`; valid variants: {}", names.join(", ")))
        })
    }
}

/// Architecture: everything needed to rebuild the parameter layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Encoder width `h`.
    pub hidden: usize,
    /// Attention width `k`.
    pub attn: usize,
    /// Regressor hidden width `d_r`.
    pub reg_hidden: usize,
    /// Word embedding width `d_w`.
    pub word_dim: usize,
    /// Clips per video `M`.
    pub clips: usize,
    /// Clip feature width `d_v`.
    pub feature_dim: usize,
    pub vocab_size: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("hidden", self.hidden),
            ("attn", self.attn),
            ("reg_hidden", self.reg_hidden),
            ("word_dim", self.word_dim),
            ("clips", self.clips),
            ("feature_dim", self.feature_dim),
            ("vocab_size", self.vocab_size),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VideoEncoder {
    BiLstm(BiEncoderParams),
    /// `relu(W·x + b)` per clip, `W: [h x d_v]`.
    Linear {
        w: ParamId,
        b: ParamId,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttentionLayout {
    Co(CoAttentionParams),
    Single(AttentionParams),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadLayout {
    Aw(AwHeadParams),
    Af(AfHeadParams),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    /// `[d_w x V]`
    pub embed: ParamId,
    pub video: VideoEncoder,
    pub sentence: BiEncoderParams,
    pub attention: AttentionLayout,
    pub head: Option<HeadLayout>,
}

#[derive(Clone, Debug)]
pub struct Model<T: Real> {
    pub config: ModelConfig,
    pub store: ParamStore<T>,
    pub layout: Layout,
}

#[derive(Clone, Copy, Debug)]
pub struct ForwardNodes {
    pub video: EncodedSequence,
    pub sentence: EncodedSequence,
    pub attention: CoAttentionNodes,
    /// Raw `[2 x 1]` coordinates, absent without a regressor.
    pub raw: Option<NodeId>,
}

#[derive(Clone, Copy, Debug)]
pub struct LossNodes {
    pub reg: Option<NodeId>,
    pub cal: NodeId,
    pub total: NodeId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub span: TemporalSpan,
    pub raw: Option<(f64, f64)>,
    pub attention: CoAttentionOutput,
}

impl<T: Real> Model<T> {
    /// Xavier-uniform weights, zero biases except forget gates at one and the
    /// final regression bias at [`crate::heads::OUTPUT_BIAS_INIT`].
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let mut init = Initializer::new(seed);
        let mut store = ParamStore::new();
        let embed = store.add("embed", init.weight(c.word_dim, c.vocab_size))?;
        let video = if c.variant.linear_video() {
            VideoEncoder::Linear {
                w: store.add("video_proj.w", init.weight(c.hidden, c.feature_dim))?,
                b: store.add("video_proj.b", Tensor::zeros(c.hidden, 1))?,
            }
        } else {
            VideoEncoder::BiLstm(BiEncoderParams::register(
                &mut store,
                "video",
                c.feature_dim,
                c.hidden,
                &mut init,
            )?)
        };
        let sentence = BiEncoderParams::register(&mut store, "sentence", c.word_dim, c.hidden, &mut init)?;
        let attention = if c.variant.single_sentence_vector() {
            AttentionLayout::Single(AttentionParams::register(
                &mut store,
                "attn.single",
                c.hidden,
                c.attn,
                &mut init,
            )?)
        } else {
            AttentionLayout::Co(CoAttentionParams::register(
                &mut store, "attn", c.hidden, c.attn, &mut init,
            )?)
        };
        let head = match c.variant.head() {
            Some(HeadKind::AttentionWeight) => Some(HeadLayout::Aw(AwHeadParams::register(
                &mut store,
                "head.aw",
                c.clips,
                c.reg_hidden,
                &mut init,
            )?)),
            Some(HeadKind::AttendedFeature) => Some(HeadLayout::Af(AfHeadParams::register(
                &mut store,
                "head.af",
                c.hidden,
                c.reg_hidden,
                &mut init,
            )?)),
            None => None,
        };
        Ok(Model {
            config,
            store,
            layout: Layout {
                embed,
                video,
                sentence,
                attention,
                head,
            },
        })
    }

    /// Same layout and values at another precision.
    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            store: self.store.cast(),
            layout: self.layout,
        }
    }

    pub fn forward(
        &self,
        g: &mut Graph<T>,
        features: &Tensor<T>,
        tokens: &[u32],
        mut dropout: Option<&mut Dropout<'_>>,
    ) -> Result<ForwardNodes> {
        let c = &self.config;
        if features.shape() != [c.feature_dim, c.clips] {
            return Err(Error::shape(
                "video features",
                format!("[{}x{}]", c.feature_dim, c.clips),
                format!("[{}x{}]", features.rows(), features.cols()),
            ));
        }
        let x = g.input(features.clone());
        let video = match self.layout.video {
            VideoEncoder::BiLstm(p) => encode(g, &self.store, &p, x, dropout.as_deref_mut())?,
            VideoEncoder::Linear { w, b } => {
                let wn = g.param(&self.store, w);
                let bn = g.param(&self.store, b);
                let y = g.matmul(wn, x)?;
                let y = g.add(y, bn)?;
                let mut y = g.relu(y);
                if let Some(d) = dropout.as_deref_mut() {
                    y = d.apply(g, y)?;
                }
                EncodedSequence {
                    features: y,
                    len: c.clips,
                }
            }
        };
        let words = embed_tokens(g, &self.store, self.layout.embed, tokens)?;
        let sentence = encode_sentence(g, &self.store, &self.layout.sentence, words, dropout)?;
        let attention = match &self.layout.attention {
            AttentionLayout::Co(p) => co_attention(g, &self.store, p, &video, &sentence)?,
            AttentionLayout::Single(p) => single_step_attention(g, &self.store, p, &video, &sentence)?,
        };
        let raw = match &self.layout.head {
            Some(HeadLayout::Aw(p)) => Some(regress_aw(g, &self.store, p, attention.final_attention())?),
            Some(HeadLayout::Af(p)) => Some(regress_af(
                g,
                &self.store,
                p,
                attention.video_feature(),
                attention.sentence_feature,
            )?),
            None => None,
        };
        Ok(ForwardNodes {
            video,
            sentence,
            attention,
            raw,
        })
    }

    /// Weighted loss for one sample. Calibration is always recorded; its
    /// weight decides whether it reaches the gradient.
    pub fn loss(
        &self,
        g: &mut Graph<T>,
        fwd: &ForwardNodes,
        gt: TemporalSpan,
        alpha: f64,
        beta: f64,
    ) -> Result<LossNodes> {
        let mask = clip_mask(gt, self.config.clips);
        let cal = calibration_loss_node(g, fwd.attention.final_attention(), &mask)?;
        match fwd.raw {
            Some(raw) => {
                let reg = regression_loss_node(g, raw, gt)?;
                let total = total_loss_node(g, reg, cal, alpha, beta)?;
                Ok(LossNodes {
                    reg: Some(reg),
                    cal,
                    total,
                })
            }
            None => Ok(LossNodes {
                reg: None,
                cal,
                total: g.scale(cal, T::of(beta)),
            }),
        }
    }

    /// Inference with dropout off: one pass through each encoder, then the
    /// head (or attention thresholding) and clip alignment.
    pub fn predict(&self, sample: &Sample) -> Result<Prediction> {
        let mut g = Graph::new();
        let features = sample.features.cast::<T>();
        let fwd = self.forward(&mut g, &features, &sample.tokens, None)?;
        let attention = CoAttentionOutput::read(&g, &fwd.attention);
        let m = self.config.clips;
        let (span, raw) = match fwd.raw {
            Some(raw) => {
                let v = g.value(raw).to_f64_vec();
                let raw = (v[0], v[1]);
                (trim_to_clips(sanitize_span(raw, m), m), Some(raw))
            }
            None => (
                trim_to_clips(
                    localize_by_attention_postprocess(&attention.video_attention, POSTPROCESS_FRACTION),
                    m,
                ),
                None,
            ),
        };
        Ok(Prediction { span, raw, attention })
    }
}

/// Expected number of scalar parameters for a configuration.
pub fn parameter_count(c: &ModelConfig) -> usize {
    let bi = |d_in: usize, h: usize| 2 * (4 * h * (d_in + h) + 4 * h) + h * 2 * h + h;
    let attention = |h: usize, k: usize| 2 * k * h + 2 * k;
    let mut n = c.word_dim * c.vocab_size + bi(c.word_dim, c.hidden);
    n += if c.variant.linear_video() {
        c.hidden * c.feature_dim + c.hidden
    } else {
        bi(c.feature_dim, c.hidden)
    };
    n += if c.variant.single_sentence_vector() {
        attention(c.hidden, c.attn)
    } else {
        3 * attention(c.hidden, c.attn)
    };
    let tail = c.reg_hidden + 2 * c.reg_hidden + 2;
    n += match c.variant.head() {
        Some(HeadKind::AttentionWeight) => c.reg_hidden * c.clips + tail,
        Some(HeadKind::AttendedFeature) => 2 * c.hidden * c.hidden + c.hidden + c.reg_hidden * c.hidden + tail,
        None => 0,
    };
    n
}
