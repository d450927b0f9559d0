//! Additive attention and the three-step video → sentence → video
//! co-attention built from it.

use crate::encoders::EncodedSequence;
use crate::error::{Error, Result};
use crate::graph::{Axis, Graph, NodeId};
use crate::init::Initializer;
use crate::params::{ParamId, ParamStore};
use crate::tensor::{Real, Tensor};

/// `H = tanh(U_z·Z + (U_g·g + b_a)·1ᵀ)`, `a = softmax(u_aᵀ·H)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionParams {
    /// `[k x h]`
    pub u_z: ParamId,
    /// `[k x h]`
    pub u_g: ParamId,
    /// `[k x 1]`
    pub b_a: ParamId,
    /// Stored as a `[1 x k]` row so the score is a plain product.
    pub u_a: ParamId,
    pub hidden: usize,
    pub attn: usize,
}

impl AttentionParams {
    pub fn register<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        hidden: usize,
        attn: usize,
        init: &mut Initializer,
    ) -> Result<Self> {
        Ok(AttentionParams {
            u_z: store.add(format!("{prefix}.u_z"), init.weight(attn, hidden))?,
            u_g: store.add(format!("{prefix}.u_g"), init.weight(attn, hidden))?,
            b_a: store.add(format!("{prefix}.b_a"), Tensor::zeros(attn, 1))?,
            u_a: store.add(format!("{prefix}.u_a"), init.xavier(1, attn, attn, 1))?,
            hidden,
            attn,
        })
    }

    pub fn scalar_count(hidden: usize, attn: usize) -> usize {
        2 * attn * hidden + 2 * attn
    }
}

/// One parameter set per step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CoAttentionParams {
    pub video_first: AttentionParams,
    pub sentence: AttentionParams,
    pub video_final: AttentionParams,
}

impl CoAttentionParams {
    pub fn register<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        hidden: usize,
        attn: usize,
        init: &mut Initializer,
    ) -> Result<Self> {
        Ok(CoAttentionParams {
            video_first: AttentionParams::register(store, &format!("{prefix}.step1"), hidden, attn, init)?,
            sentence: AttentionParams::register(store, &format!("{prefix}.step2"), hidden, attn, init)?,
            video_final: AttentionParams::register(store, &format!("{prefix}.step3"), hidden, attn, init)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Attended {
    /// `[L x 1]` simplex vector.
    pub weights: NodeId,
    /// `[h x 1]`
    pub feature: NodeId,
}

pub fn attend<T: Real>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    params: &AttentionParams,
    z: &EncodedSequence,
    guide: NodeId,
) -> Result<Attended> {
    let [h, len] = g.shape(z.features);
    if g.shape(guide) != [params.hidden, 1] {
        return Err(Error::shape(
            "attend guidance",
            format!("[{}x1]", params.hidden),
            format!("{:?}", g.shape(guide)),
        ));
    }
    if h != params.hidden {
        return Err(Error::shape(
            "attend sequence",
            format!("[{}xL]", params.hidden),
            format!("[{h}x{len}]"),
        ));
    }
    let u_z = g.param(store, params.u_z);
    let u_g = g.param(store, params.u_g);
    let b_a = g.param(store, params.b_a);
    let u_a = g.param(store, params.u_a);
    let zp = g.matmul(u_z, z.features)?;
    let gp = g.matmul(u_g, guide)?;
    let gp = g.add(gp, b_a)?;
    let pre = g.add(zp, gp)?;
    let hid = g.tanh(pre);
    let scores = g.matmul(u_a, hid)?;
    let scores = g.reshape(scores, len, 1)?;
    let weights = g.softmax(scores);
    let feature = g.weighted_sum(z.features, weights)?;
    Ok(Attended { weights, feature })
}

/// Graph nodes of the three-step trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CoAttentionNodes {
    pub video_first: Attended,
    /// `None` for the single-sentence-vector variant, which skips steps 2-3.
    pub sentence: Option<Attended>,
    pub video_final: Attended,
    /// Sentence summary fed to the heads: the attended sentence feature, or
    /// the mean sentence column when the sentence is not attended.
    pub sentence_feature: NodeId,
}

impl CoAttentionNodes {
    pub fn final_attention(&self) -> NodeId {
        self.video_final.weights
    }

    pub fn video_feature(&self) -> NodeId {
        self.video_final.feature
    }
}

pub fn co_attention<T: Real>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    params: &CoAttentionParams,
    video: &EncodedSequence,
    sentence: &EncodedSequence,
) -> Result<CoAttentionNodes> {
    let guide = g.mean(sentence.features, Axis::Cols);
    let first = attend(g, store, &params.video_first, video, guide)?;
    let sent = attend(g, store, &params.sentence, sentence, first.feature)?;
    let last = attend(g, store, &params.video_final, video, sent.feature)?;
    Ok(CoAttentionNodes {
        video_first: first,
        sentence: Some(sent),
        video_final: last,
        sentence_feature: sent.feature,
    })
}

/// Single video attention guided by the mean sentence vector.
pub fn single_step_attention<T: Real>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    params: &AttentionParams,
    video: &EncodedSequence,
    sentence: &EncodedSequence,
) -> Result<CoAttentionNodes> {
    let guide = g.mean(sentence.features, Axis::Cols);
    let only = attend(g, store, params, video, guide)?;
    Ok(CoAttentionNodes {
        video_first: only,
        sentence: None,
        video_final: only,
        sentence_feature: guide,
    })
}

/// Plain-value snapshot of a co-attention trace.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CoAttentionOutput {
    pub video_attention_first: Vec<f64>,
    pub video_feature_first: Vec<f64>,
    pub sentence_attention: Option<Vec<f64>>,
    pub sentence_feature: Vec<f64>,
    pub video_attention: Vec<f64>,
    pub video_feature: Vec<f64>,
}

impl CoAttentionOutput {
    pub fn read<T: Real>(g: &Graph<T>, nodes: &CoAttentionNodes) -> Self {
        let v = |n: NodeId| g.value(n).to_f64_vec();
        CoAttentionOutput {
            video_attention_first: v(nodes.video_first.weights),
            video_feature_first: v(nodes.video_first.feature),
            sentence_attention: nodes.sentence.map(|s| v(s.weights)),
            sentence_feature: v(nodes.sentence_feature),
            video_attention: v(nodes.video_final.weights),
            video_feature: v(nodes.video_final.feature),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type Mat = Vec<Vec<f64>>;

    fn to_mat(t: &Tensor<f64>) -> Mat {
        (0..t.rows())
            .map(|r| (0..t.cols()).map(|c| t.get(r, c)).collect())
            .collect()
    }

    /// Direct evaluation of the attention formula with nested loops.
    fn naive_attend(store: &ParamStore<f64>, p: &AttentionParams, z: &Mat, g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (uz, ug) = (to_mat(store.get(p.u_z)), to_mat(store.get(p.u_g)));
        let ba = store.get(p.b_a).data();
        let ua = store.get(p.u_a).data();
        let (h, len) = (z.len(), z[0].len());
        let mut scores = vec![0.0; len];
        for (j, s) in scores.iter_mut().enumerate() {
            for r in 0..p.attn {
                let mut pre = ba[r];
                for i in 0..h {
                    pre += uz[r][i] * z[i][j] + ug[r][i] * g[i];
                }
                *s += ua[r] * pre.tanh();
            }
        }
        let total: f64 = scores.iter().map(|s| s.exp()).sum();
        let w: Vec<f64> = scores.iter().map(|s| s.exp() / total).collect();
        let att = (0..h).map(|i| (0..len).map(|j| w[j] * z[i][j]).sum()).collect();
        (w, att)
    }

    fn randomize(store: &mut ParamStore<f64>, rng: &mut ChaCha8Rng) {
        for id in store.ids().collect::<Vec<_>>() {
            for v in store.get_mut(id).data_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
        }
    }

    fn rand_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor<f64> {
        Tensor::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn seq(g: &mut Graph<f64>, t: &Tensor<f64>) -> EncodedSequence {
        EncodedSequence {
            features: g.input(t.clone()),
            len: t.cols(),
        }
    }

    #[test]
    fn guidance_only_scores_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let p = AttentionParams::register(&mut store, "a", 3, 2, &mut Initializer::new(1)).unwrap();
        randomize(&mut store, &mut rng);
        store.get_mut(p.u_z).data_mut().fill(0.0);
        let zt = rand_tensor(&mut rng, 3, 4);
        let mut g = Graph::new();
        let z = seq(&mut g, &zt);
        let guide = g.input(rand_tensor(&mut rng, 3, 1));
        let a = attend(&mut g, &store, &p, &z, guide).unwrap();
        assert!(g.value(a.weights).data().iter().all(|&w| (w - 0.25).abs() < 1e-15));
        for r in 0..3 {
            let m = (0..4).map(|c| zt.get(r, c)).sum::<f64>() / 4.0;
            assert!((g.value(a.feature).data()[r] - m).abs() < 1e-12);
        }
    }

    #[test]
    fn singleton_sequence() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let p = AttentionParams::register(&mut store, "a", 3, 2, &mut Initializer::new(2)).unwrap();
        let zt = rand_tensor(&mut rng, 3, 1);
        let mut g = Graph::new();
        let z = seq(&mut g, &zt);
        let guide = g.input(rand_tensor(&mut rng, 3, 1));
        let a = attend(&mut g, &store, &p, &z, guide).unwrap();
        assert_eq!(g.value(a.weights).data(), &[1.0]);
        assert_eq!(g.value(a.feature).data(), zt.data());
    }

    #[test]
    fn attend_matches_naive_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let p = AttentionParams::register(&mut store, "a", 3, 2, &mut Initializer::new(3)).unwrap();
        randomize(&mut store, &mut rng);
        let zt = rand_tensor(&mut rng, 3, 4);
        let gt = rand_tensor(&mut rng, 3, 1);
        let mut g = Graph::new();
        let z = seq(&mut g, &zt);
        let guide = g.input(gt.clone());
        let a = attend(&mut g, &store, &p, &z, guide).unwrap();
        let (w, att) = naive_attend(&store, &p, &to_mat(&zt), gt.data());
        for (x, y) in g.value(a.weights).data().iter().zip(&w) {
            assert!((x - y).abs() < 1e-10);
        }
        for (x, y) in g.value(a.feature).data().iter().zip(&att) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn guidance_dimension_mismatch() {
        let mut store = ParamStore::new();
        let p = AttentionParams::register(&mut store, "a", 3, 2, &mut Initializer::new(3)).unwrap();
        let mut g = Graph::<f64>::new();
        let z = seq(&mut g, &Tensor::zeros(3, 2));
        let guide = g.input(Tensor::zeros(4, 1));
        assert!(matches!(
            attend(&mut g, &store, &p, &z, guide),
            Err(Error::Shape { .. })
        ));
    }

    fn co_setup(seed: u64) -> (ParamStore<f64>, CoAttentionParams, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let p = CoAttentionParams::register(&mut store, "co", 3, 2, &mut Initializer::new(seed)).unwrap();
        randomize(&mut store, &mut rng);
        (store, p, rng)
    }

    #[test]
    fn singleton_sentence() {
        let (store, p, mut rng) = co_setup(4);
        let (vt, st) = (rand_tensor(&mut rng, 3, 5), rand_tensor(&mut rng, 3, 1));
        let mut g = Graph::new();
        let v = seq(&mut g, &vt);
        let s = seq(&mut g, &st);
        let out = co_attention(&mut g, &store, &p, &v, &s).unwrap();
        let snap = CoAttentionOutput::read(&g, &out);
        assert_eq!(snap.sentence_attention.unwrap(), vec![1.0]);
    }

    #[test]
    fn zero_parameters_give_uniform_attention() {
        let (mut store, p, mut rng) = co_setup(5);
        for id in store.ids().collect::<Vec<_>>() {
            store.get_mut(id).data_mut().fill(0.0);
        }
        let (vt, st) = (rand_tensor(&mut rng, 3, 4), rand_tensor(&mut rng, 3, 3));
        let mut g = Graph::new();
        let v = seq(&mut g, &vt);
        let s = seq(&mut g, &st);
        let nodes = co_attention(&mut g, &store, &p, &v, &s).unwrap();
        let snap = CoAttentionOutput::read(&g, &nodes);
        assert!(snap.video_attention.iter().all(|&w| (w - 0.25).abs() < 1e-15));
        assert!(snap
            .sentence_attention
            .unwrap()
            .iter()
            .all(|&w| (w - 1.0 / 3.0).abs() < 1e-15));
        for r in 0..3 {
            let m = (0..4).map(|c| vt.get(r, c)).sum::<f64>() / 4.0;
            assert!((snap.video_feature[r] - m).abs() < 1e-12);
        }
    }

    #[test]
    fn composed_trace_matches_naive_formula() {
        let (store, p, mut rng) = co_setup(6);
        let (vt, st) = (rand_tensor(&mut rng, 3, 4), rand_tensor(&mut rng, 3, 3));
        let mut g = Graph::new();
        let v = seq(&mut g, &vt);
        let s = seq(&mut g, &st);
        let nodes = co_attention(&mut g, &store, &p, &v, &s).unwrap();
        let snap = CoAttentionOutput::read(&g, &nodes);

        let (vm, sm) = (to_mat(&vt), to_mat(&st));
        let mean: Vec<f64> = sm.iter().map(|row| row.iter().sum::<f64>() / 3.0).collect();
        let (a1, v1) = naive_attend(&store, &p.video_first, &vm, &mean);
        let (a2, s2) = naive_attend(&store, &p.sentence, &sm, &v1);
        let (a3, v3) = naive_attend(&store, &p.video_final, &vm, &s2);
        let close = |x: &[f64], y: &[f64]| x.iter().zip(y).all(|(a, b)| (a - b).abs() < 1e-10);
        assert!(close(&snap.video_attention_first, &a1));
        assert!(close(&snap.video_feature_first, &v1));
        assert!(close(snap.sentence_attention.as_deref().unwrap(), &a2));
        assert!(close(&snap.sentence_feature, &s2));
        assert!(close(&snap.video_attention, &a3));
        assert!(close(&snap.video_feature, &v3));
    }

    #[test]
    fn final_attention_depends_on_sentence_content() {
        let (store, p, mut rng) = co_setup(7);
        let vt = rand_tensor(&mut rng, 3, 6);
        let st = rand_tensor(&mut rng, 3, 3);
        let run = |s_t: &Tensor<f64>| {
            let mut g = Graph::new();
            let v = seq(&mut g, &vt);
            let s = seq(&mut g, s_t);
            let nodes = co_attention(&mut g, &store, &p, &v, &s).unwrap();
            CoAttentionOutput::read(&g, &nodes)
        };
        // Attention carries no position, so reordering raw columns is a no-op
        // here; word order reaches it only through the sentence encoder.
        let mut changed = st.clone();
        changed.set(0, 1, st.get(0, 1) + 0.8);
        let (a, c) = (run(&st), run(&changed));
        let diff: f64 = a
            .video_attention
            .iter()
            .zip(&c.video_attention)
            .map(|(x, y)| (x - y).abs())
            .sum();
        assert!(diff > 1e-6);
    }

    #[test]
    fn co_attention_gradients_pass_finite_differences() {
        use crate::gradcheck::{gradient_check, GradCheckOptions};
        let (store, p, mut rng) = co_setup(8);
        let (vt, st) = (rand_tensor(&mut rng, 3, 4), rand_tensor(&mut rng, 3, 3));
        let target = rand_tensor(&mut rng, 1, 3);
        let report = gradient_check(
            &store,
            |g, s| {
                let v = seq(g, &vt);
                let sq = seq(g, &st);
                let out = co_attention(g, s, &p, &v, &sq)?;
                let t = g.input(target.clone());
                let y = g.matmul(t, out.video_feature())?;
                let lg = g.log(out.final_attention(), 1e-12);
                let l = g.sum(lg);
                let both = g.add(y, l)?;
                Ok(g.sum(both))
            },
            GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
    }
}
