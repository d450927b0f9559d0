//! Temporal IoU, R@1 recall at IoU thresholds, mIoU, and report output.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baseline::{enumerate_windows, scan_windows, ScanConfig, WindowScorer};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::heads::TemporalSpan;
use crate::losses::clip_mask;
use crate::model::Model;
use crate::tensor::Real;

pub const DEFAULT_SIGMAS: [f64; 3] = [0.1, 0.3, 0.5];

pub fn iou(a: TemporalSpan, b: TemporalSpan) -> f64 {
    let inter = (a.end.min(b.end) - a.start.max(b.start)).max(0.0);
    let union = a.length() + b.length() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub pred: TemporalSpan,
    pub gt: TemporalSpan,
    pub iou: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recall {
    pub sigma: f64,
    pub recall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub recall_at: Vec<Recall>,
    pub miou: f64,
    pub count: usize,
    pub records: Vec<EvalRecord>,
}

impl EvalReport {
    pub fn recall(&self, sigma: f64) -> Option<f64> {
        self.recall_at.iter().find(|r| r.sigma == sigma).map(|r| r.recall)
    }

    /// One line of JSON without the per-sample records.
    pub fn summary_json(&self) -> String {
        serde_json::json!({
            "count": self.count,
            "miou": self.miou,
            "recall_at": self.recall_at,
        })
        .to_string()
    }

    pub fn table_header(&self) -> String {
        let sigmas: Vec<f64> = self.recall_at.iter().map(|r| r.sigma).collect();
        let mut s = format!("{:<10}", "method");
        for c in metric_columns(&sigmas) {
            s.push_str(&format!(" {c:>13}"));
        }
        s
    }

    pub fn table_row(&self, label: &str) -> String {
        let mut s = format!("{label:<10}");
        for r in &self.recall_at {
            s.push_str(&format!(" {:>13.4}", r.recall));
        }
        s.push_str(&format!(" {:>13.4}", self.miou));
        s
    }
}

/// Column names: one recall column per threshold, then mIoU.
pub fn metric_columns(sigmas: &[f64]) -> Vec<String> {
    let mut cols: Vec<String> = sigmas.iter().map(|s| format!("R@1, IoU@{s}")).collect();
    cols.push("mIoU".into());
    cols
}

/// Recall uses the strict `iou > σ`.
pub fn evaluate(preds: &[TemporalSpan], gts: &[TemporalSpan], sigmas: &[f64]) -> Result<EvalReport> {
    if preds.len() != gts.len() || preds.is_empty() {
        return Err(Error::usage(format!(
            "evaluation needs equal nonempty lists, got {} predictions and {} targets",
            preds.len(),
            gts.len()
        )));
    }
    let records: Vec<EvalRecord> = preds
        .iter()
        .zip(gts)
        .map(|(&p, &g)| EvalRecord {
            pred: p,
            gt: g,
            iou: iou(p, g),
        })
        .collect();
    let n = records.len() as f64;
    let recall_at = sigmas
        .iter()
        .map(|&sigma| Recall {
            sigma,
            recall: records.iter().filter(|r| r.iou > sigma).count() as f64 / n,
        })
        .collect();
    let miou = records.iter().map(|r| r.iou).sum::<f64>() / n;
    Ok(EvalReport {
        recall_at,
        miou,
        count: records.len(),
        records,
    })
}

/// Mean final video attention mass on ground-truth clips next to the mean
/// ground-truth fractional length, which is what uniform attention would give.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionMass {
    pub inside: f64,
    pub window_fraction: f64,
}

impl AttentionMass {
    pub fn excess(&self) -> f64 {
        self.inside - self.window_fraction
    }
}

pub fn attention_mass(attentions: &[Vec<f64>], gts: &[TemporalSpan]) -> Result<AttentionMass> {
    if attentions.len() != gts.len() || gts.is_empty() {
        return Err(Error::usage(format!(
            "attention mass needs equal nonempty lists, got {} attentions and {} targets",
            attentions.len(),
            gts.len()
        )));
    }
    let n = gts.len() as f64;
    let inside = attentions
        .iter()
        .zip(gts)
        .map(|(a, &g)| {
            let mask = clip_mask(g, a.len());
            a.iter()
                .zip(mask.bits())
                .filter(|(_, &b)| b)
                .map(|(w, _)| w)
                .sum::<f64>()
        })
        .sum::<f64>()
        / n;
    let window_fraction = gts.iter().map(|g| g.length()).sum::<f64>() / n;
    Ok(AttentionMass {
        inside,
        window_fraction,
    })
}

/// Per-sentence wall-clock statistics for one method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodTiming {
    pub method: String,
    pub mean_seconds: f64,
    pub median_seconds: f64,
}

impl MethodTiming {
    pub fn from_samples(method: impl Into<String>, seconds: &[f64]) -> Self {
        let mut sorted = seconds.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n == 0 {
            0.0
        } else if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        MethodTiming {
            method: method.into(),
            mean_seconds: seconds.iter().sum::<f64>() / n.max(1) as f64,
            median_seconds: median,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub ablr: MethodTiming,
    pub baseline: MethodTiming,
    pub windows: usize,
    pub queries: usize,
    pub warmup: usize,
    /// Baseline mean time over ABLR mean time.
    pub speedup: f64,
}

impl TimingReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain data")
    }

    pub fn table(&self) -> String {
        let mut s = format!("{:<10} {:>14} {:>14}\n", "method", "mean s/query", "median s/query");
        for m in [&self.ablr, &self.baseline] {
            s.push_str(&format!(
                "{:<10} {:>14.6} {:>14.6}\n",
                m.method, m.mean_seconds, m.median_seconds
            ));
        }
        s.push_str(&format!(
            "windows {}  queries {}  speedup {:.2}x\n",
            self.windows, self.queries, self.speedup
        ));
        s
    }
}

pub const MIN_QUERIES: usize = 100;
pub const MIN_WARMUP: usize = 5;

/// Wall-clock time per sentence for end-to-end model inference and for
/// the scan baseline on the same queries, on the calling thread only.
/// The first `warmup` samples are run untimed; the next `queries` are timed.
pub fn benchmark<T: Real>(
    model: &Model<T>,
    scorer: &dyn WindowScorer,
    samples: &[Sample],
    scan: &ScanConfig,
    queries: usize,
    warmup: usize,
) -> Result<TimingReport> {
    let mut reports = benchmark_configs(model, scorer, samples, std::slice::from_ref(scan), queries, warmup)?;
    Ok(reports.remove(0))
}

/// [`benchmark`] for several scan configs at once, one report per config.
/// Each query runs every config back to back, so a change in host speed
/// during the run affects all configs alike.
pub fn benchmark_configs<T: Real>(
    model: &Model<T>,
    scorer: &dyn WindowScorer,
    samples: &[Sample],
    scans: &[ScanConfig],
    queries: usize,
    warmup: usize,
) -> Result<Vec<TimingReport>> {
    if queries < MIN_QUERIES || warmup < MIN_WARMUP {
        return Err(Error::usage(format!(
            "benchmark needs at least {MIN_QUERIES} queries and {MIN_WARMUP} warmup runs, got {queries} and {warmup}"
        )));
    }
    if samples.len() < warmup + queries {
        return Err(Error::usage(format!(
            "benchmark needs {} samples ({warmup} warmup + {queries} timed), got {}",
            warmup + queries,
            samples.len()
        )));
    }
    if scans.is_empty() {
        return Err(Error::usage("benchmark needs at least one scan config"));
    }
    let clips = samples[0].clips();
    let windows = scans
        .iter()
        .map(|c| enumerate_windows(clips, c))
        .collect::<Result<Vec<_>>>()?;
    for s in &samples[..warmup] {
        for w in &windows {
            model.predict(s)?;
            scan_windows(s, scorer, w)?;
        }
    }
    let mut ablr = vec![Vec::with_capacity(queries); scans.len()];
    let mut base = vec![Vec::with_capacity(queries); scans.len()];
    for s in &samples[warmup..warmup + queries] {
        for (i, w) in windows.iter().enumerate() {
            let t = Instant::now();
            std::hint::black_box(model.predict(s)?);
            ablr[i].push(t.elapsed().as_secs_f64());
            let t = Instant::now();
            std::hint::black_box(scan_windows(s, scorer, w)?);
            base[i].push(t.elapsed().as_secs_f64());
        }
    }
    Ok(windows
        .iter()
        .zip(ablr.iter().zip(&base))
        .map(|(w, (a, b))| {
            let ablr = MethodTiming::from_samples("ablr", a);
            let baseline = MethodTiming::from_samples("scan", b);
            let speedup = baseline.mean_seconds / ablr.mean_seconds.max(f64::MIN_POSITIVE);
            TimingReport {
                ablr,
                baseline,
                windows: w.len(),
                queries,
                warmup,
                speedup,
            }
        })
        .collect())
}
