//! Central finite-difference verification of [`Graph::backward`].

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub entries_checked: usize,
    pub max_rel_error: f64,
    /// Entries skipped because the numeric derivative changes with the step
    /// size, which is what a kink (e.g. ReLU at 0) near the entry looks like.
    pub flagged_kinks: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub epsilon: f64,
    pub tolerance: f64,
    pub params: Vec<ParamCheck>,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn flagged(&self) -> usize {
        self.params.iter().map(|p| p.flagged_kinks).sum()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    pub tolerance: f64,
    /// Parameters with more entries than this are checked on a
    /// deterministic stride subsample of this many entries (minimum 100).
    pub max_entries_per_param: usize,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            epsilon: 1e-3,
            tolerance: 1e-5,
            max_entries_per_param: usize::MAX,
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn eval<F>(build: &F, store: &ParamStore<f64>) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let out = build(&mut g, store)?;
    let v = g.value(out);
    if v.shape() != [1, 1] {
        return Err(Error::usage(format!(
            "gradient check needs a scalar output, got {:?}",
            v.shape()
        )));
    }
    Ok(v.data()[0])
}

struct Stencil {
    /// Five-point central estimate,
    /// `(8(f(x+e) - f(x-e)) - (f(x+2e) - f(x-2e))) / 12e`. Differences come
    /// first so an unchanged `f` gives exactly zero.
    derivative: f64,
    /// Slope jump `(f(x+e) - 2f(x) + f(x-e)) / e`: shrinks with `e` for a
    /// smooth function, stays put across a kink.
    jump: f64,
}

fn central_difference<F>(
    build: &F,
    work: &mut ParamStore<f64>,
    id: crate::params::ParamId,
    entry: usize,
    eps: f64,
    f0: f64,
) -> Result<Stencil>
where
    F: Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<NodeId>,
{
    let orig = work.get(id).data()[entry];
    let mut at = |delta: f64| -> Result<f64> {
        work.get_mut(id).data_mut()[entry] = orig + delta;
        eval(build, work)
    };
    let (p2, p1, m1, m2) = (at(2.0 * eps)?, at(eps)?, at(-eps)?, at(-2.0 * eps)?);
    work.get_mut(id).data_mut()[entry] = orig;
    Ok(Stencil {
        derivative: (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * eps),
        jump: (p1 - 2.0 * f0 + m1) / eps,
    })
}

/// Ridders' extrapolation of central differences from step `h0` down by a
/// factor 1.4 per stage; returns the estimate with the smallest error
/// estimate. Large early steps keep rounding noise in `f` from swamping
/// entries whose gradient is many orders below the loss.
fn ridders<F>(build: &F, work: &mut ParamStore<f64>, id: crate::params::ParamId, entry: usize, h0: f64) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<NodeId>,
{
    const STAGES: usize = 10;
    const SHRINK: f64 = 1.4;
    const SAFE: f64 = 2.0;
    let orig = work.get(id).data()[entry];
    let mut central = |h: f64| -> Result<f64> {
        work.get_mut(id).data_mut()[entry] = orig + h;
        let p = eval(build, work)?;
        work.get_mut(id).data_mut()[entry] = orig - h;
        let m = eval(build, work)?;
        work.get_mut(id).data_mut()[entry] = orig;
        Ok((p - m) / (2.0 * h))
    };
    let mut table = vec![vec![0.0; STAGES]; STAGES];
    let mut h = h0;
    table[0][0] = central(h)?;
    let (mut best, mut err) = (table[0][0], f64::INFINITY);
    for i in 1..STAGES {
        h /= SHRINK;
        table[0][i] = central(h)?;
        let mut fac = SHRINK * SHRINK;
        for j in 1..=i {
            table[j][i] = (table[j - 1][i] * fac - table[j - 1][i - 1]) / (fac - 1.0);
            fac *= SHRINK * SHRINK;
            let e = (table[j][i] - table[j - 1][i])
                .abs()
                .max((table[j][i] - table[j - 1][i - 1]).abs());
            if e <= err {
                err = e;
                best = table[j][i];
            }
        }
        if (table[i][i] - table[i - 1][i - 1]).abs() >= SAFE * err {
            break;
        }
    }
    Ok(best)
}

/// Initial Ridders step as a multiple of the base epsilon.
const RIDDERS_START: f64 = 100.0;
const REFINE_FRACTION: f64 = 0.1;

fn sample_indices(len: usize, cap: usize) -> Vec<usize> {
    let cap = cap.max(100);
    if len <= cap {
        return (0..len).collect();
    }
    // Evenly spread, always including the first and last entry.
    (0..cap).map(|i| i * (len - 1) / (cap - 1)).collect()
}

/// Compares the analytic gradient of the scalar built by `build` against
/// central differences for every parameter entry (or a subsample).
pub fn gradient_check<F>(store: &ParamStore<f64>, build: F, opts: GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let out = build(&mut g, store)?;
    if g.shape(out) != [1, 1] {
        return Err(Error::usage(format!(
            "gradient check needs a scalar output, got {:?}",
            g.shape(out)
        )));
    }
    let f0 = g.value(out).data()[0];
    let analytic: Vec<Tensor<f64>> = g.backward(out, store)?;
    let eps = opts.epsilon;

    let mut work = store.clone();
    let mut params = Vec::with_capacity(store.len());
    for (id, name, value) in store.iter() {
        let mut max_rel: f64 = 0.0;
        let mut flagged = 0;
        let idx = sample_indices(value.len(), opts.max_entries_per_param);
        for &e in &idx {
            let a = analytic[id.index()].data()[e];
            let coarse = central_difference(&build, &mut work, id, e, eps, f0)?;
            let mut rel = relative_error(a, coarse.derivative);
            // Entries near the tolerance are refined so the reported error
            // reflects the best estimate rather than the first one.
            if rel > REFINE_FRACTION * opts.tolerance {
                let fine = central_difference(&build, &mut work, id, e, eps / 4.0, f0)?;
                rel = rel.min(relative_error(a, fine.derivative));
                if rel > REFINE_FRACTION * opts.tolerance {
                    rel = rel.min(relative_error(
                        a,
                        ridders(&build, &mut work, id, e, RIDDERS_START * eps)?,
                    ));
                }
                // A kink near the entry makes the estimate depend on the
                // step; a wrong analytic gradient does not.
                let step_dependent = relative_error(coarse.derivative, fine.derivative) > opts.tolerance;
                let slope_jump =
                    fine.jump.abs() > 0.5 * coarse.jump.abs() && coarse.jump.abs() > opts.tolerance * a.abs().max(1e-8);
                if rel > opts.tolerance && (step_dependent || slope_jump) {
                    flagged += 1;
                    continue;
                }
            }
            max_rel = max_rel.max(rel);
        }
        params.push(ParamCheck {
            name: name.to_string(),
            entries_checked: idx.len(),
            max_rel_error: max_rel,
            flagged_kinks: flagged,
        });
    }
    let passed = params.iter().all(|p| p.max_rel_error < opts.tolerance);
    Ok(GradCheckReport {
        epsilon: eps,
        tolerance: opts.tolerance,
        params,
        passed,
    })
}
