//! Coordinate regression heads and span post-processing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Axis, Graph, NodeId};
use crate::init::Initializer;
use crate::params::{ParamId, ParamStore};
use crate::tensor::{Real, Tensor};

/// Initial value of the final regression bias. Centered outputs keep both
/// output ReLUs active at the start of training; at zero one coordinate can
/// start, and stay, clipped for every input.
pub const OUTPUT_BIAS_INIT: f64 = 0.5;

/// Normalized `(start, end)` with `0 <= start < end <= 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalSpan {
    pub start: f64,
    pub end: f64,
}

impl TemporalSpan {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && 0.0 <= start && start < end && end <= 1.0) {
            return Err(Error::validation(
                "TemporalSpan",
                format!("need 0 <= start < end <= 1, got ({start}, {end})"),
            ));
        }
        Ok(TemporalSpan { start, end })
    }

    pub fn full() -> Self {
        TemporalSpan { start: 0.0, end: 1.0 }
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.start + self.end)
    }

    /// Span covering clips `first..last_exclusive` of `clips`.
    pub fn from_clips(first: usize, last_exclusive: usize, clips: usize) -> Self {
        TemporalSpan {
            start: first as f64 / clips as f64,
            end: last_exclusive as f64 / clips as f64,
        }
    }
}

/// Two fully connected layers on top of the video attention weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AwHeadParams {
    /// `[d_r x M]`
    pub w1: ParamId,
    pub b1: ParamId,
    /// `[2 x d_r]`
    pub w2: ParamId,
    pub b2: ParamId,
    pub clips: usize,
}

impl AwHeadParams {
    pub fn register<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        clips: usize,
        hidden: usize,
        init: &mut Initializer,
    ) -> Result<Self> {
        Ok(AwHeadParams {
            w1: store.add(format!("{prefix}.w1"), init.weight(hidden, clips))?,
            b1: store.add(format!("{prefix}.b1"), Tensor::zeros(hidden, 1))?,
            w2: store.add(format!("{prefix}.w2"), init.weight(2, hidden))?,
            b2: store.add(format!("{prefix}.b2"), Tensor::filled(2, 1, T::of(OUTPUT_BIAS_INIT)))?,
            clips,
        })
    }

    pub fn scalar_count(clips: usize, hidden: usize) -> usize {
        hidden * clips + hidden + 2 * hidden + 2
    }
}

/// Fusion of attended video and sentence features, then two layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AfHeadParams {
    /// `[h x 2h]`
    pub w_f: ParamId,
    pub b_f: ParamId,
    /// `[d_r x h]`
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub feature: usize,
}

impl AfHeadParams {
    pub fn register<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        feature: usize,
        hidden: usize,
        init: &mut Initializer,
    ) -> Result<Self> {
        Ok(AfHeadParams {
            w_f: store.add(format!("{prefix}.w_f"), init.weight(feature, 2 * feature))?,
            b_f: store.add(format!("{prefix}.b_f"), Tensor::zeros(feature, 1))?,
            w1: store.add(format!("{prefix}.w1"), init.weight(hidden, feature))?,
            b1: store.add(format!("{prefix}.b1"), Tensor::zeros(hidden, 1))?,
            w2: store.add(format!("{prefix}.w2"), init.weight(2, hidden))?,
            b2: store.add(format!("{prefix}.b2"), Tensor::filled(2, 1, T::of(OUTPUT_BIAS_INIT)))?,
            feature,
        })
    }

    pub fn scalar_count(feature: usize, hidden: usize) -> usize {
        feature * 2 * feature + feature + hidden * feature + hidden + 2 * hidden + 2
    }
}

fn dense_relu<T: Real>(g: &mut Graph<T>, store: &ParamStore<T>, w: ParamId, b: ParamId, x: NodeId) -> Result<NodeId> {
    let wn = g.param(store, w);
    let bn = g.param(store, b);
    let y = g.matmul(wn, x)?;
    let y = g.add(y, bn)?;
    Ok(g.relu(y))
}

/// Raw `[2 x 1]` coordinates from the video attention `a_v: [M x 1]`.
pub fn regress_aw<T: Real>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    p: &AwHeadParams,
    attention: NodeId,
) -> Result<NodeId> {
    let s = g.shape(attention);
    if s != [p.clips, 1] {
        return Err(Error::shape(
            "attention-weight head input",
            format!("[{}x1]", p.clips),
            format!("[{}x{}]", s[0], s[1]),
        ));
    }
    let hidden = dense_relu(g, store, p.w1, p.b1, attention)?;
    dense_relu(g, store, p.w2, p.b2, hidden)
}

/// Raw `[2 x 1]` coordinates from attended video and sentence features.
pub fn regress_af<T: Real>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    p: &AfHeadParams,
    video: NodeId,
    sentence: NodeId,
) -> Result<NodeId> {
    for (what, n) in [("video", video), ("sentence", sentence)] {
        let s = g.shape(n);
        if s != [p.feature, 1] {
            return Err(Error::shape(
                format!("attended-feature head {what} input"),
                format!("[{}x1]", p.feature),
                format!("[{}x{}]", s[0], s[1]),
            ));
        }
    }
    let both = g.concat(&[video, sentence], Axis::Rows)?;
    let fused = dense_relu(g, store, p.w_f, p.b_f, both)?;
    let hidden = dense_relu(g, store, p.w1, p.b1, fused)?;
    dense_relu(g, store, p.w2, p.b2, hidden)
}

/// Turns raw nonnegative head output into a valid span at least one clip
/// long.
pub fn sanitize_span(raw: (f64, f64), clips: usize) -> TemporalSpan {
    let step = 1.0 / clips.max(1) as f64;
    let clamp = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    let mut start = clamp(raw.0);
    let mut end = clamp(raw.1);
    if end <= start {
        end = (start + step).min(1.0);
        if end <= start {
            start = (end - step).max(0.0);
        }
    }
    TemporalSpan { start, end }
}

/// Expands a span outward to whole clips.
pub fn trim_to_clips(span: TemporalSpan, clips: usize) -> TemporalSpan {
    let (first, last) = clip_range(span, clips);
    TemporalSpan::from_clips(first, last, clips)
}

/// Clip indices `first..last` covered after trimming, never empty.
pub fn clip_range(span: TemporalSpan, clips: usize) -> (usize, usize) {
    let m = clips as f64;
    // Slack keeps boundaries that are multiples of 1/M in floating point
    // from rounding a whole clip outward.
    let slack = 1e-9;
    let first = ((span.start * m + slack).floor().max(0.0) as usize).min(clips - 1);
    let last = ((span.end * m - slack).ceil().max(0.0) as usize).min(clips);
    (first, last.max(first + 1))
}

/// Attention thresholding: keep clips with weight `>= fraction · max`, and
/// return the contiguous kept run around the argmax.
pub fn localize_by_attention_postprocess(attention: &[f64], threshold_fraction: f64) -> TemporalSpan {
    let m = attention.len();
    let (arg, max) =
        attention.iter().copied().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |best, (i, v)| if v > best.1 { (i, v) } else { best },
        );
    let cut = threshold_fraction * max;
    let keep = |i: usize| attention[i] >= cut;
    let mut first = arg;
    while first > 0 && keep(first - 1) {
        first -= 1;
    }
    let mut last = arg + 1;
    while last < m && keep(last) {
        last += 1;
    }
    TemporalSpan::from_clips(first, last, m)
}
