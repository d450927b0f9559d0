//! Bidirectional LSTM encoders for clip features and word embeddings.
//!
//! Each direction is a standard LSTM (input, forget and output gates plus a
//! tanh candidate) started from zero state. Column `j` of the encoded
//! sequence is `relu(W · (h_fwd[j] ‖ h_bwd[j]) + b)`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Axis, Graph, NodeId};
use crate::init::Initializer;
use crate::params::{ParamId, ParamStore};
use crate::tensor::{Real, Tensor};

/// Gate blocks are stacked row-wise in the order input, forget, output,
/// candidate; `w` is `[4h x (d_in + h)]` with input columns first.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmParams {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

pub const GATE_INPUT: usize = 0;
pub const GATE_FORGET: usize = 1;
pub const GATE_OUTPUT: usize = 2;
pub const GATE_CANDIDATE: usize = 3;

impl LstmParams {
    pub fn register<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input: usize,
        hidden: usize,
        init: &mut Initializer,
    ) -> Result<Self> {
        let cols = input + hidden;
        let mut w = Tensor::zeros(4 * hidden, cols);
        for gate in 0..4 {
            let block: Tensor<T> = init.xavier(hidden, cols, cols, hidden);
            let off = gate * hidden * cols;
            w.data_mut()[off..off + hidden * cols].copy_from_slice(block.data());
        }
        let mut b = Tensor::zeros(4 * hidden, 1);
        for r in GATE_FORGET * hidden..(GATE_FORGET + 1) * hidden {
            b.data_mut()[r] = T::one();
        }
        Ok(LstmParams {
            w: store.add(format!("{prefix}.w"), w)?,
            b: store.add(format!("{prefix}.b"), b)?,
            input,
            hidden,
        })
    }

    pub fn scalar_count(input: usize, hidden: usize) -> usize {
        4 * hidden * (input + hidden) + 4 * hidden
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BiEncoderParams {
    pub forward: LstmParams,
    pub backward: LstmParams,
    /// `[h x 2h]`
    pub proj_w: ParamId,
    /// `[h x 1]`
    pub proj_b: ParamId,
}

impl BiEncoderParams {
    pub fn register<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input: usize,
        hidden: usize,
        init: &mut Initializer,
    ) -> Result<Self> {
        let forward = LstmParams::register(store, &format!("{prefix}.fwd"), input, hidden, init)?;
        let backward = LstmParams::register(store, &format!("{prefix}.bwd"), input, hidden, init)?;
        let proj_w = store.add(format!("{prefix}.proj_w"), init.weight(hidden, 2 * hidden))?;
        let proj_b = store.add(format!("{prefix}.proj_b"), Tensor::zeros(hidden, 1))?;
        Ok(BiEncoderParams {
            forward,
            backward,
            proj_w,
            proj_b,
        })
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden
    }

    pub fn input(&self) -> usize {
        self.forward.input
    }

    pub fn scalar_count(input: usize, hidden: usize) -> usize {
        2 * LstmParams::scalar_count(input, hidden) + hidden * 2 * hidden + hidden
    }
}

/// `[h x L]` node whose columns are timesteps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncodedSequence {
    pub features: NodeId,
    pub len: usize,
}

/// Inverted dropout applied to encoder outputs during training.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut ChaCha8Rng,
}

impl Dropout<'_> {
    pub fn apply<T: Real>(&mut self, g: &mut Graph<T>, x: NodeId) -> Result<NodeId> {
        if self.rate <= 0.0 {
            return Ok(x);
        }
        if self.rate >= 1.0 {
            return Err(Error::usage(format!("dropout rate must be < 1, got {}", self.rate)));
        }
        let [r, c] = g.shape(x);
        let keep = T::of(1.0 / (1.0 - self.rate));
        let data = (0..r * c)
            .map(|_| {
                if self.rng.random::<f64>() < self.rate {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let mask = g.input(Tensor::from_vec(r, c, data)?);
        g.mul(x, mask)
    }
}

/// Bound views of an LSTM's weights inside one graph.
struct BoundLstm {
    w_x: NodeId,
    w_h: NodeId,
    b: NodeId,
    hidden: usize,
}

fn bind<T: Real>(g: &mut Graph<T>, store: &ParamStore<T>, p: &LstmParams) -> Result<BoundLstm> {
    let ws = store.get(p.w).shape();
    if ws != [4 * p.hidden, p.input + p.hidden] {
        return Err(Error::shape(
            format!("lstm weight `{}`", store.name(p.w)),
            format!("[{}x{}]", 4 * p.hidden, p.input + p.hidden),
            format!("[{}x{}]", ws[0], ws[1]),
        ));
    }
    let w = g.param(store, p.w);
    Ok(BoundLstm {
        w_x: g.slice(w, Axis::Cols, 0, p.input)?,
        w_h: g.slice(w, Axis::Cols, p.input, p.hidden)?,
        b: g.param(store, p.b),
        hidden: p.hidden,
    })
}

/// One cell update from the input pre-activation `gx = W_x·x + b`.
fn cell<T: Real>(
    g: &mut Graph<T>,
    lstm: &BoundLstm,
    gx: NodeId,
    prev: Option<(NodeId, NodeId)>,
) -> Result<(NodeId, NodeId)> {
    let h = lstm.hidden;
    let z = match prev {
        Some((h_prev, _)) => {
            let rec = g.matmul(lstm.w_h, h_prev)?;
            g.add(gx, rec)?
        }
        None => gx,
    };
    let zi = g.slice(z, Axis::Rows, GATE_INPUT * h, h)?;
    let zf = g.slice(z, Axis::Rows, GATE_FORGET * h, h)?;
    let zo = g.slice(z, Axis::Rows, GATE_OUTPUT * h, h)?;
    let zg = g.slice(z, Axis::Rows, GATE_CANDIDATE * h, h)?;
    let i = g.sigmoid(zi);
    let o = g.sigmoid(zo);
    let cand = g.tanh(zg);
    let ig = g.mul(i, cand)?;
    let c = match prev {
        Some((_, c_prev)) => {
            let f = g.sigmoid(zf);
            let keep = g.mul(f, c_prev)?;
            g.add(keep, ig)?
        }
        None => ig,
    };
    let tc = g.tanh(c);
    let h_new = g.mul(o, tc)?;
    Ok((h_new, c))
}

/// Single LSTM step; `prev = None` means zero hidden and cell state.
pub fn lstm_step<T: Real>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    params: &LstmParams,
    x: NodeId,
    prev: Option<(NodeId, NodeId)>,
) -> Result<(NodeId, NodeId)> {
    if g.shape(x) != [params.input, 1] {
        return Err(Error::shape(
            "lstm_step input",
            format!("[{}x1]", params.input),
            format!("{:?}", g.shape(x)),
        ));
    }
    if let Some((hp, cp)) = prev {
        for (what, n) in [("hidden", hp), ("cell", cp)] {
            if g.shape(n) != [params.hidden, 1] {
                return Err(Error::shape(
                    format!("lstm_step previous {what} state"),
                    format!("[{}x1]", params.hidden),
                    format!("{:?}", g.shape(n)),
                ));
            }
        }
    }
    let lstm = bind(g, store, params)?;
    let gx = g.matmul(lstm.w_x, x)?;
    let gx = g.add(gx, lstm.b)?;
    cell(g, &lstm, gx, prev)
}

/// Runs one direction over every column of `x` and returns the hidden state
/// for each timestep, indexed chronologically.
pub fn run_lstm<T: Real>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    params: &LstmParams,
    x: NodeId,
    reverse: bool,
) -> Result<Vec<NodeId>> {
    let [d, len] = g.shape(x);
    if d != params.input {
        return Err(Error::shape(
            "lstm input",
            format!("[{}xL]", params.input),
            format!("[{d}x{len}]"),
        ));
    }
    let lstm = bind(g, store, params)?;
    // Input projections for all timesteps in one product.
    let gx_all = g.matmul(lstm.w_x, x)?;
    let gx_all = g.add(gx_all, lstm.b)?;
    let mut states: Vec<Option<NodeId>> = vec![None; len];
    let mut prev = None;
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..len).rev())
    } else {
        Box::new(0..len)
    };
    for t in order {
        let gx = if len == 1 {
            gx_all
        } else {
            g.slice(gx_all, Axis::Cols, t, 1)?
        };
        let (h, c) = cell(g, &lstm, gx, prev)?;
        states[t] = Some(h);
        prev = Some((h, c));
    }
    Ok(states.into_iter().map(|s| s.expect("every step visited")).collect())
}

/// Bidirectional encoding of `x: [d_in x L]` into `[h x L]`.
pub fn encode<T: Real>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    params: &BiEncoderParams,
    x: NodeId,
    dropout: Option<&mut Dropout<'_>>,
) -> Result<EncodedSequence> {
    let len = g.shape(x)[1];
    let fwd = run_lstm(g, store, &params.forward, x, false)?;
    let bwd = run_lstm(g, store, &params.backward, x, true)?;
    let hf = g.concat(&fwd, Axis::Cols)?;
    let hb = g.concat(&bwd, Axis::Cols)?;
    let both = g.concat(&[hf, hb], Axis::Rows)?;
    let w = g.param(store, params.proj_w);
    let b = g.param(store, params.proj_b);
    let proj = g.matmul(w, both)?;
    let proj = g.add(proj, b)?;
    let mut out = g.relu(proj);
    if let Some(d) = dropout {
        out = d.apply(g, out)?;
    }
    Ok(EncodedSequence { features: out, len })
}

fn check_nonempty(what: &str, cols: usize) -> Result<()> {
    if cols == 0 {
        Err(Error::usage(format!("cannot encode an empty {what}")))
    } else {
        Ok(())
    }
}

/// Video encoding of clip features `[d_v x M]`.
pub fn encode_video<T: Real>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    params: &BiEncoderParams,
    clips: &Tensor<T>,
    dropout: Option<&mut Dropout<'_>>,
) -> Result<EncodedSequence> {
    check_nonempty("video", clips.cols())?;
    let x = g.input(clips.clone());
    encode(g, store, params, x, dropout)
}

/// Sentence encoding of already-embedded words `[d_w x N]`.
pub fn encode_sentence<T: Real>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    params: &BiEncoderParams,
    words: NodeId,
    dropout: Option<&mut Dropout<'_>>,
) -> Result<EncodedSequence> {
    check_nonempty("sentence", g.shape(words)[1])?;
    encode(g, store, params, words, dropout)
}

/// Looks up token ids in a `[d_w x V]` embedding table as a product with a
/// constant one-hot `[V x N]` matrix.
pub fn embed_tokens<T: Real>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    table: ParamId,
    tokens: &[u32],
) -> Result<NodeId> {
    check_nonempty("sentence", tokens.len())?;
    let vocab = store.get(table).cols();
    let mut onehot = Tensor::zeros(vocab, tokens.len());
    for (j, &t) in tokens.iter().enumerate() {
        let t = t as usize;
        if t >= vocab {
            return Err(Error::shape(
                "embed_tokens",
                format!("token id < {vocab}"),
                t.to_string(),
            ));
        }
        onehot.set(t, j, T::one());
    }
    let e = g.param(store, table);
    let oh = g.input(onehot);
    g.matmul(e, oh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    /// Scalar-loop LSTM reading raw parameter values.
    fn oracle_step(
        w: &[f64],
        b: &[f64],
        d: usize,
        h: usize,
        x: &[f64],
        hp: &[f64],
        cp: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let cols = d + h;
        let pre = |gate: usize, r: usize| -> f64 {
            let row = gate * h + r;
            let mut s = b[row];
            for k in 0..d {
                s += w[row * cols + k] * x[k];
            }
            for k in 0..h {
                s += w[row * cols + d + k] * hp[k];
            }
            s
        };
        let mut hn = vec![0.0; h];
        let mut cn = vec![0.0; h];
        for r in 0..h {
            let i = sig(pre(0, r));
            let f = sig(pre(1, r));
            let o = sig(pre(2, r));
            let gg = pre(3, r).tanh();
            cn[r] = f * cp[r] + i * gg;
            hn[r] = o * cn[r].tanh();
        }
        (hn, cn)
    }

    fn oracle_encode(store: &ParamStore<f64>, p: &BiEncoderParams, x: &Tensor<f64>) -> Vec<Vec<f64>> {
        let (d, h, len) = (p.input(), p.hidden(), x.cols());
        let run = |lp: &LstmParams, order: Vec<usize>| {
            let w = store.get(lp.w).data().to_vec();
            let b = store.get(lp.b).data().to_vec();
            let mut hs = vec![vec![0.0; h]; len];
            let (mut hp, mut cp) = (vec![0.0; h], vec![0.0; h]);
            for t in order {
                let (hn, cn) = oracle_step(&w, &b, d, h, &x.column_values(t), &hp, &cp);
                hs[t] = hn.clone();
                hp = hn;
                cp = cn;
            }
            hs
        };
        let hf = run(&p.forward, (0..len).collect());
        let hb = run(&p.backward, (0..len).rev().collect());
        let pw = store.get(p.proj_w);
        let pb = store.get(p.proj_b);
        (0..len)
            .map(|j| {
                (0..h)
                    .map(|r| {
                        let mut s = pb.data()[r];
                        for k in 0..h {
                            s += pw.get(r, k) * hf[j][k] + pw.get(r, h + k) * hb[j][k];
                        }
                        s.max(0.0)
                    })
                    .collect()
            })
            .collect()
    }

    fn randomize(store: &mut ParamStore<f64>, seed: u64, scale: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for id in store.ids().collect::<Vec<_>>() {
            for v in store.get_mut(id).data_mut() {
                *v = rng.random_range(-scale..scale);
            }
        }
    }

    fn random_clips(seed: u64, d: usize, m: usize) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(d, m, (0..d * m).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn setup(d: usize, h: usize, seed: u64) -> (ParamStore<f64>, BiEncoderParams) {
        let mut store = ParamStore::new();
        let p = BiEncoderParams::register(&mut store, "enc", d, h, &mut Initializer::new(seed)).unwrap();
        randomize(&mut store, seed + 100, 0.8);
        (store, p)
    }

    fn columns(g: &Graph<f64>, e: &EncodedSequence) -> Vec<Vec<f64>> {
        let v = g.value(e.features);
        (0..v.cols()).map(|c| v.column_values(c)).collect()
    }

    #[test]
    fn zero_weights_give_zero_state() {
        let mut store = ParamStore::<f64>::new();
        let p = LstmParams::register(&mut store, "l", 3, 2, &mut Initializer::new(0)).unwrap();
        for id in store.ids().collect::<Vec<_>>() {
            store.get_mut(id).data_mut().fill(0.0);
        }
        let mut g = Graph::new();
        let x = g.input(Tensor::column(vec![1.0, -2.0, 3.0]));
        let (h, c) = lstm_step(&mut g, &store, &p, x, None).unwrap();
        assert_eq!(g.value(h).data(), &[0.0, 0.0]);
        assert_eq!(g.value(c).data(), &[0.0, 0.0]);
    }

    #[test]
    fn saturated_forget_keeps_cell() {
        let mut store = ParamStore::<f64>::new();
        let p = LstmParams::register(&mut store, "l", 2, 3, &mut Initializer::new(1)).unwrap();
        let b = store.get_mut(p.b);
        for r in 0..3 {
            b.data_mut()[GATE_INPUT * 3 + r] = -60.0;
            b.data_mut()[GATE_FORGET * 3 + r] = 60.0;
        }
        let mut g = Graph::new();
        let x = g.input(Tensor::column(vec![0.3, -0.4]));
        let hp = g.input(Tensor::column(vec![0.1, 0.2, -0.3]));
        let cp = g.input(Tensor::column(vec![0.5, -1.5, 2.0]));
        let (_, c) = lstm_step(&mut g, &store, &p, x, Some((hp, cp))).unwrap();
        for (a, b) in g.value(c).data().iter().zip(&[0.5, -1.5, 2.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn step_matches_scalar_oracle() {
        let mut store = ParamStore::<f64>::new();
        let p = LstmParams::register(&mut store, "l", 4, 3, &mut Initializer::new(2)).unwrap();
        randomize(&mut store, 7, 0.5);
        let x = vec![0.2, -0.7, 0.4, 1.1];
        let hp = vec![0.3, -0.1, 0.6];
        let cp = vec![-0.4, 0.9, 0.05];
        let mut g = Graph::new();
        let xn = g.input(Tensor::column(x.clone()));
        let hn = g.input(Tensor::column(hp.clone()));
        let cn = g.input(Tensor::column(cp.clone()));
        let (h, c) = lstm_step(&mut g, &store, &p, xn, Some((hn, cn))).unwrap();
        let (oh, oc) = oracle_step(store.get(p.w).data(), store.get(p.b).data(), 4, 3, &x, &hp, &cp);
        for (a, b) in g
            .value(h)
            .data()
            .iter()
            .zip(&oh)
            .chain(g.value(c).data().iter().zip(&oc))
        {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn step_rejects_bad_shapes() {
        let mut store = ParamStore::<f64>::new();
        let p = LstmParams::register(&mut store, "l", 4, 3, &mut Initializer::new(2)).unwrap();
        let mut g = Graph::new();
        let x = g.input(Tensor::column(vec![0.0; 5]));
        assert!(matches!(
            lstm_step(&mut g, &store, &p, x, None),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn single_clip_video() {
        let (store, p) = setup(3, 2, 4);
        let x = random_clips(5, 3, 1);
        let mut g = Graph::new();
        let e = encode_video(&mut g, &store, &p, &x, None).unwrap();
        assert_eq!(e.len, 1);
        let want = oracle_encode(&store, &p, &x);
        for (a, b) in columns(&g, &e)[0].iter().zip(&want[0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn video_matches_unrolled_oracle() {
        let (store, p) = setup(5, 3, 8);
        let x = random_clips(9, 5, 4);
        let mut g = Graph::new();
        let e = encode_video(&mut g, &store, &p, &x, None).unwrap();
        let got = columns(&g, &e);
        let want = oracle_encode(&store, &p, &x);
        for (cg, cw) in got.iter().zip(&want) {
            for (a, b) in cg.iter().zip(cw) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn reversal_swaps_directions() {
        let (store, p) = setup(3, 3, 12);
        let x = random_clips(13, 3, 5);
        let mut rev = Tensor::zeros(3, 5);
        for c in 0..5 {
            for r in 0..3 {
                rev.set(r, c, x.get(r, 4 - c));
            }
        }
        // Swap direction parameters and the two halves of the projection.
        let mut swapped = store.clone();
        let f = (store.get(p.forward.w).clone(), store.get(p.forward.b).clone());
        let b = (store.get(p.backward.w).clone(), store.get(p.backward.b).clone());
        *swapped.get_mut(p.forward.w) = b.0;
        *swapped.get_mut(p.forward.b) = b.1;
        *swapped.get_mut(p.backward.w) = f.0;
        *swapped.get_mut(p.backward.b) = f.1;
        let pw = store.get(p.proj_w).clone();
        let sw = swapped.get_mut(p.proj_w);
        for r in 0..3 {
            for k in 0..3 {
                sw.set(r, k, pw.get(r, 3 + k));
                sw.set(r, 3 + k, pw.get(r, k));
            }
        }
        let mut g1 = Graph::new();
        let e1 = encode_video(&mut g1, &store, &p, &x, None).unwrap();
        let mut g2 = Graph::new();
        let e2 = encode_video(&mut g2, &swapped, &p, &rev, None).unwrap();
        let (a, b) = (columns(&g1, &e1), columns(&g2, &e2));
        for j in 0..5 {
            for (u, v) in a[j].iter().zip(&b[4 - j]) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_inputs_are_usage_errors() {
        let mut g = Graph::new();
        assert!(Tensor::<f64>::from_vec(3, 0, vec![]).is_err());
        let mut es = ParamStore::<f64>::new();
        let table = es.add("emb", Tensor::zeros(4, 6)).unwrap();
        assert!(matches!(embed_tokens(&mut g, &es, table, &[]), Err(Error::Usage(_))));
    }

    fn sentence_setup(seed: u64) -> (ParamStore<f64>, ParamId, BiEncoderParams) {
        let mut store = ParamStore::new();
        let mut init = Initializer::new(seed);
        let table = store.add("emb", init.weight(4, 7)).unwrap();
        let p = BiEncoderParams::register(&mut store, "sent", 4, 3, &mut init).unwrap();
        randomize(&mut store, seed + 1, 0.9);
        (store, table, p)
    }

    #[test]
    fn single_token_sentence() {
        let (store, table, p) = sentence_setup(21);
        let mut g = Graph::new();
        let w = embed_tokens(&mut g, &store, table, &[3]).unwrap();
        let e = encode_sentence(&mut g, &store, &p, w, None).unwrap();
        assert_eq!(g.shape(e.features), [3, 1]);
    }

    #[test]
    fn repeated_token_is_not_constant() {
        let (store, table, p) = sentence_setup(25);
        let mut g = Graph::new();
        let w = embed_tokens(&mut g, &store, table, &[2, 2, 2, 2, 2]).unwrap();
        let e = encode_sentence(&mut g, &store, &p, w, None).unwrap();
        let cols = columns(&g, &e);
        let spread: f64 = (1..4)
            .map(|j| {
                cols[j]
                    .iter()
                    .zip(&cols[j + 1])
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>()
            })
            .sum();
        assert!(spread > 1e-6, "interior columns identical: {cols:?}");
    }

    #[test]
    fn sentence_matches_unrolled_oracle() {
        let (store, table, p) = sentence_setup(23);
        let tokens = [1u32, 4, 0, 6, 4];
        let mut g = Graph::new();
        let w = embed_tokens(&mut g, &store, table, &tokens).unwrap();
        let e = encode_sentence(&mut g, &store, &p, w, None).unwrap();
        let emb = store.get(table);
        let mut words = Tensor::zeros(4, 5);
        for (j, &t) in tokens.iter().enumerate() {
            for r in 0..4 {
                words.set(r, j, emb.get(r, t as usize));
            }
        }
        let want = oracle_encode(&store, &p, &words);
        for (cg, cw) in columns(&g, &e).iter().zip(&want) {
            for (a, b) in cg.iter().zip(cw) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn context_flows_both_ways() {
        let (store, p) = setup(4, 4, 30);
        let x = random_clips(31, 4, 7);
        let mut y = x.clone();
        y.set(0, 3, x.get(0, 3) + 0.5);
        let mut g1 = Graph::new();
        let e1 = encode_video(&mut g1, &store, &p, &x, None).unwrap();
        let mut g2 = Graph::new();
        let e2 = encode_video(&mut g2, &store, &p, &y, None).unwrap();
        let (a, b) = (columns(&g1, &e1), columns(&g2, &e2));
        let diff = |j: usize| a[j].iter().zip(&b[j]).map(|(u, v)| (u - v).abs()).sum::<f64>();
        assert!(diff(1) > 1e-9, "earlier column untouched");
        assert!(diff(5) > 1e-9, "later column untouched");
    }

    #[test]
    fn outputs_nonnegative_and_deterministic() {
        let (store, p) = setup(4, 5, 40);
        let x = random_clips(41, 4, 6);
        let run = || {
            let mut g = Graph::new();
            let e = encode_video(&mut g, &store, &p, &x, None).unwrap();
            g.value(e.features).clone()
        };
        let a = run();
        assert!(a.data().iter().all(|&v| v >= 0.0));
        assert_eq!(a, run());
    }

    #[test]
    fn dropout_scales_survivors() {
        let (store, p) = setup(4, 5, 50);
        let x = random_clips(51, 4, 6);
        let mut g = Graph::new();
        let clean = encode_video(&mut g, &store, &p, &x, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut d = Dropout {
            rate: 0.5,
            rng: &mut rng,
        };
        let mut g2 = Graph::new();
        let dropped = encode_video(&mut g2, &store, &p, &x, Some(&mut d)).unwrap();
        for (a, b) in g
            .value(clean.features)
            .data()
            .iter()
            .zip(g2.value(dropped.features).data())
        {
            assert!(*b == 0.0 || (b - 2.0 * a).abs() < 1e-12);
        }
    }

    #[test]
    fn encoder_gradients_pass_finite_differences() {
        use crate::gradcheck::{gradient_check, GradCheckOptions};
        let (store, p) = setup(3, 3, 60);
        let x = random_clips(61, 3, 4);
        let readout = Tensor::from_vec(1, 3, vec![0.7, -0.4, 1.1]).unwrap();
        let report = gradient_check(
            &store,
            |g, s| {
                let e = encode_video(g, s, &p, &x, None)?;
                let r = g.input(readout.clone());
                let y = g.matmul(r, e.features)?;
                let y = g.tanh(y);
                Ok(g.sum(y))
            },
            GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
    }
}
