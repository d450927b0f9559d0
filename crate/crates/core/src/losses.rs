//! Coordinate regression loss, attention calibration loss and their
//! weighted sum, as plain functions and as graph nodes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::heads::TemporalSpan;
use crate::math::smooth_l1;
use crate::tensor::{Real, Tensor};

/// Attention entries are floored here before taking the log.
pub const LOG_FLOOR: f64 = 1e-12;

pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_BETA: f64 = 5.0;

/// Which clips lie inside a ground-truth window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClipMask {
    bits: Vec<bool>,
}

impl ClipMask {
    pub fn from_bits(bits: Vec<bool>) -> Result<Self> {
        if !bits.iter().any(|&b| b) {
            return Err(Error::usage("clip mask has no set bit"));
        }
        Ok(ClipMask { bits })
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// `m_j / Σm` per clip.
    pub fn normalized(&self) -> Vec<f64> {
        let n = self.count() as f64;
        self.bits.iter().map(|&b| if b { 1.0 / n } else { 0.0 }).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_reg: f64,
    pub l_cal: f64,
    pub total: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Clip `j` (0-based) is in the mask when its midpoint `(j + 0.5)/M` lies in
/// the span. A span too short to hold any midpoint gets the single clip that
/// contains its own midpoint.
pub fn clip_mask(gt: TemporalSpan, clips: usize) -> ClipMask {
    let m = clips as f64;
    let mut bits: Vec<bool> = (0..clips)
        .map(|j| {
            let mid = (j as f64 + 0.5) / m;
            gt.start <= mid && mid <= gt.end
        })
        .collect();
    if !bits.iter().any(|&b| b) {
        // A midpoint exactly on a boundary belongs to the earlier clip.
        let k = ((gt.midpoint() * m).ceil() as usize).clamp(1, clips);
        bits[k - 1] = true;
    }
    ClipMask { bits }
}

/// Summed smooth L1 over both coordinates of every pair.
pub fn regression_loss(pred: &[(f64, f64)], gt: &[TemporalSpan]) -> Result<f64> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::usage(format!(
            "regression loss needs equal nonempty batches, got {} predictions and {} targets",
            pred.len(),
            gt.len()
        )));
    }
    Ok(pred
        .iter()
        .zip(gt)
        .map(|(p, t)| smooth_l1(t.start - p.0) + smooth_l1(t.end - p.1))
        .sum())
}

/// Summed per-sample mean negative log attention over masked clips.
pub fn calibration_loss(attentions: &[Vec<f64>], masks: &[ClipMask]) -> Result<f64> {
    if attentions.len() != masks.len() || attentions.is_empty() {
        return Err(Error::usage(format!(
            "calibration loss needs equal nonempty batches, got {} attentions and {} masks",
            attentions.len(),
            masks.len()
        )));
    }
    let mut total = 0.0;
    for (i, (a, m)) in attentions.iter().zip(masks).enumerate() {
        if a.len() != m.len() {
            return Err(Error::usage(format!(
                "sample {i}: attention has {} clips, mask has {}",
                a.len(),
                m.len()
            )));
        }
        let n = m.count();
        if n == 0 {
            return Err(Error::usage(format!("sample {i}: clip mask has no set bit")));
        }
        let s: f64 = a
            .iter()
            .zip(m.bits())
            .filter(|(_, &b)| b)
            .map(|(&x, _)| x.max(LOG_FLOOR).ln())
            .sum();
        total += -s / n as f64;
    }
    Ok(total)
}

pub fn total_loss(l_reg: f64, l_cal: f64, alpha: f64, beta: f64) -> LossBreakdown {
    LossBreakdown {
        l_reg,
        l_cal,
        total: alpha * l_reg + beta * l_cal,
        alpha,
        beta,
    }
}

/// Smooth L1 between a raw `[2 x 1]` prediction node and a target span.
pub fn regression_loss_node<T: Real>(g: &mut Graph<T>, pred: NodeId, gt: TemporalSpan) -> Result<NodeId> {
    let target = g.input(Tensor::column(vec![T::of(gt.start), T::of(gt.end)]));
    let diff = g.sub(target, pred)?;
    let r = g.smooth_l1(diff);
    Ok(g.sum(r))
}

/// Calibration term for one `[M x 1]` attention node.
pub fn calibration_loss_node<T: Real>(g: &mut Graph<T>, attention: NodeId, mask: &ClipMask) -> Result<NodeId> {
    let weights: Vec<T> = mask.normalized().into_iter().map(T::of).collect();
    let weights = g.input(Tensor::column(weights));
    let logs = g.log(attention, T::of(LOG_FLOOR));
    let picked = g.mul(logs, weights)?;
    let s = g.sum(picked);
    Ok(g.scale(s, -T::one()))
}

/// `α·reg + β·cal` in the graph.
pub fn total_loss_node<T: Real>(g: &mut Graph<T>, reg: NodeId, cal: NodeId, alpha: f64, beta: f64) -> Result<NodeId> {
    let r = g.scale(reg, T::of(alpha));
    let c = g.scale(cal, T::of(beta));
    g.add(r, c)
}
