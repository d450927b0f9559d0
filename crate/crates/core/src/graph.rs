//! Eager reverse-mode tape over a fixed operation set.
//!
//! Every op computes its value when it is recorded, so a graph is always
//! "forwarded" up to its last node. [`Graph::backward`] walks the tape in
//! reverse from a scalar node and returns one gradient per parameter in the
//! store, zero-filled for parameters the graph never touched.

use crate::error::{Error, Result};
use crate::math::{sigmoid, smooth_l1, smooth_l1_grad, softmax_into};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{axpy, dot, fmt_shape, gemm_nn, gemm_nt, gemm_tn, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

#[derive(Clone, Debug)]
enum Op<T> {
    Input,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    /// Second operand either matches the first, or is a column vector
    /// broadcast across the first operand's columns.
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, T),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    Softmax(NodeId),
    Concat(Vec<NodeId>, Axis),
    Mean(NodeId, Axis),
    WeightedSum(NodeId, NodeId),
    Slice {
        src: NodeId,
        axis: Axis,
        start: usize,
    },
    Log(NodeId, T),
    SmoothL1(NodeId),
    Sum(NodeId),
    Reshape(NodeId),
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Tanh(_) => "tanh",
            Op::Sigmoid(_) => "sigmoid",
            Op::Relu(_) => "relu",
            Op::Softmax(_) => "softmax",
            Op::Concat(..) => "concat",
            Op::Mean(..) => "mean",
            Op::WeightedSum(..) => "weighted_sum",
            Op::Slice { .. } => "slice",
            Op::Log(..) => "log",
            Op::SmoothL1(_) => "smooth_l1",
            Op::Sum(_) => "sum",
            Op::Reshape(_) => "reshape",
        }
    }
}

#[derive(Clone, Debug)]
struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
}

#[derive(Clone, Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> [usize; 2] {
        self.nodes[id.0].value.shape()
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, value });
        id
    }

    fn label(&self, op: &str) -> String {
        format!("node #{} ({op})", self.nodes.len())
    }

    /// Constant leaf; receives no gradient.
    pub fn input(&mut self, value: Tensor<T>) -> NodeId {
        self.push(Op::Input, value)
    }

    /// Leaf bound to a parameter; its gradient is reported by `backward`.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> NodeId {
        self.push(Op::Param(id), store.get(id).clone())
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(Error::shape(
                self.label("matmul"),
                format!("rhs with {} rows", av.cols()),
                format!("{} · {}", fmt_shape(av.shape()), fmt_shape(bv.shape())),
            ));
        }
        let (m, k, n) = (av.rows(), av.cols(), bv.cols());
        let mut out = Tensor::zeros(m, n);
        gemm_nn(av.data(), bv.data(), out.data_mut(), m, k, n);
        Ok(self.push(Op::MatMul(a, b), out))
    }

    fn check_binary(&self, op: &str, a: NodeId, b: NodeId, allow_broadcast: bool) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let ok = sa == sb || (allow_broadcast && sb == [sa[0], 1]);
        if ok {
            Ok(())
        } else {
            let expected = if allow_broadcast {
                format!("{} or [{}x1]", fmt_shape(sa), sa[0])
            } else {
                fmt_shape(sa)
            };
            Err(Error::shape(self.label(op), expected, fmt_shape(sb)))
        }
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_binary("add", a, b, true)?;
        let mut out = self.value(a).clone();
        let bv = self.value(b);
        if bv.shape() == out.shape() {
            out.add_assign(bv);
        } else {
            let cols = out.cols();
            for (r, row) in out.data_mut().chunks_exact_mut(cols).enumerate() {
                let bias = bv.data()[r];
                for x in row {
                    *x = *x + bias;
                }
            }
        }
        Ok(self.push(Op::Add(a, b), out))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_binary("sub", a, b, false)?;
        let bv = self.value(b);
        let mut out = self.value(a).clone();
        for (x, &y) in out.data_mut().iter_mut().zip(bv.data()) {
            *x = *x - y;
        }
        Ok(self.push(Op::Sub(a, b), out))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_binary("mul", a, b, false)?;
        let bv = self.value(b);
        let mut out = self.value(a).clone();
        for (x, &y) in out.data_mut().iter_mut().zip(bv.data()) {
            *x = *x * y;
        }
        Ok(self.push(Op::Mul(a, b), out))
    }

    pub fn scale(&mut self, a: NodeId, s: T) -> NodeId {
        let out = self.value(a).map(|x| x * s);
        self.push(Op::Scale(a, s), out)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).map(T::tanh);
        self.push(Op::Tanh(a), out)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), out)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let out = self
            .value(a)
            .map(|x| if x > T::zero() || x.is_nan() { x } else { T::zero() });
        self.push(Op::Relu(a), out)
    }

    /// Softmax over every entry of the operand, whatever its shape.
    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let mut out = Tensor::zeros(av.rows(), av.cols());
        softmax_into(av.data(), out.data_mut());
        self.push(Op::Softmax(a), out)
    }

    pub fn concat(&mut self, parts: &[NodeId], axis: Axis) -> Result<NodeId> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::usage(format!("{}: nothing to concatenate", self.label("concat"))))?;
        let s0 = self.shape(first);
        let out = match axis {
            Axis::Rows => {
                let mut rows = 0;
                let mut data = Vec::new();
                for &p in parts {
                    let v = self.value(p);
                    if v.cols() != s0[1] {
                        return Err(Error::shape(
                            self.label("concat"),
                            format!("{} columns", s0[1]),
                            fmt_shape(v.shape()),
                        ));
                    }
                    rows += v.rows();
                    data.extend_from_slice(v.data());
                }
                Tensor::from_vec(rows, s0[1], data)?
            }
            Axis::Cols => {
                let mut cols = 0;
                for &p in parts {
                    let v = self.value(p);
                    if v.rows() != s0[0] {
                        return Err(Error::shape(
                            self.label("concat"),
                            format!("{} rows", s0[0]),
                            fmt_shape(v.shape()),
                        ));
                    }
                    cols += v.cols();
                }
                let mut out = Tensor::zeros(s0[0], cols);
                let mut offset = 0;
                for &p in parts {
                    let v = &self.nodes[p.0].value;
                    let vc = v.cols();
                    for r in 0..s0[0] {
                        out.data_mut()[r * cols + offset..r * cols + offset + vc]
                            .copy_from_slice(&v.data()[r * vc..(r + 1) * vc]);
                    }
                    offset += vc;
                }
                out
            }
        };
        Ok(self.push(Op::Concat(parts.to_vec(), axis), out))
    }

    /// Mean over `axis`: `Cols` averages the columns into one `[rows x 1]`
    /// column, `Rows` averages the rows into one `[1 x cols]` row.
    pub fn mean(&mut self, a: NodeId, axis: Axis) -> NodeId {
        let av = self.value(a);
        let (r, c) = (av.rows(), av.cols());
        let out = match axis {
            Axis::Cols => {
                let inv = T::one() / T::of(c as f64);
                Tensor::column(
                    av.data()
                        .chunks_exact(c)
                        .map(|row| row.iter().copied().sum::<T>() * inv)
                        .collect(),
                )
            }
            Axis::Rows => {
                let inv = T::one() / T::of(r as f64);
                let mut out = Tensor::zeros(1, c);
                for row in av.data().chunks_exact(c) {
                    axpy(inv, row, out.data_mut());
                }
                out
            }
        };
        self.push(Op::Mean(a, axis), out)
    }

    /// `Σ_j w_j · z[:, j]` for `z: [h x L]` and any `w` holding `L` entries.
    pub fn weighted_sum(&mut self, z: NodeId, w: NodeId) -> Result<NodeId> {
        let (zv, wv) = (self.value(z), self.value(w));
        if wv.len() != zv.cols() {
            return Err(Error::shape(
                self.label("weighted_sum"),
                format!("{} weights", zv.cols()),
                fmt_shape(wv.shape()),
            ));
        }
        let mut out = Tensor::zeros(zv.rows(), 1);
        gemm_nn(zv.data(), wv.data(), out.data_mut(), zv.rows(), zv.cols(), 1);
        Ok(self.push(Op::WeightedSum(z, w), out))
    }

    pub fn slice(&mut self, a: NodeId, axis: Axis, start: usize, len: usize) -> Result<NodeId> {
        let av = self.value(a);
        let extent = match axis {
            Axis::Rows => av.rows(),
            Axis::Cols => av.cols(),
        };
        if len == 0 || start + len > extent {
            return Err(Error::shape(
                self.label("slice"),
                format!("range within 0..{extent} along {axis:?}"),
                format!("{start}..{}", start + len),
            ));
        }
        let c = av.cols();
        let out = match axis {
            Axis::Rows => Tensor::from_vec(len, c, av.data()[start * c..(start + len) * c].to_vec())?,
            Axis::Cols => {
                let mut data = Vec::with_capacity(av.rows() * len);
                for row in av.data().chunks_exact(c) {
                    data.extend_from_slice(&row[start..start + len]);
                }
                Tensor::from_vec(av.rows(), len, data)?
            }
        };
        Ok(self.push(Op::Slice { src: a, axis, start }, out))
    }

    /// `ln(max(x, floor))`.
    pub fn log(&mut self, a: NodeId, floor: T) -> NodeId {
        let out = self.value(a).map(|x| x.max(floor).ln());
        self.push(Op::Log(a, floor), out)
    }

    pub fn smooth_l1(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).map(smooth_l1);
        self.push(Op::SmoothL1(a), out)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).sum();
        self.push(Op::Sum(a), Tensor::scalar(s))
    }

    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        let out = self
            .value(a)
            .clone()
            .reshaped(rows, cols)
            .map_err(|_| Error::shape(self.label("reshape"), fmt_shape([rows, cols]), fmt_shape(self.shape(a))))?;
        Ok(self.push(Op::Reshape(a), out))
    }

    /// Gradient of the scalar `output` with respect to every node.
    fn node_gradients(&self, output: NodeId) -> Result<Vec<Option<Tensor<T>>>> {
        if output.0 >= self.nodes.len() {
            return Err(Error::usage(format!(
                "backward from node #{} but the graph has only {} recorded nodes",
                output.0,
                self.nodes.len()
            )));
        }
        if self.shape(output) != [1, 1] {
            return Err(Error::usage(format!(
                "backward needs a scalar output, node #{} is {}",
                output.0,
                fmt_shape(self.shape(output))
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Tensor::scalar(T::one()));

        for i in (0..=output.0).rev() {
            let Some(gout) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Param(_) => {
                    grads[i] = Some(gout);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                    if self.needs_grad(*a) {
                        let ga = accum(&mut grads, *a, m, k);
                        gemm_nt(gout.data(), bv.data(), ga.data_mut(), m, n, k);
                    }
                    if self.needs_grad(*b) {
                        let gb = accum(&mut grads, *b, k, n);
                        gemm_tn(av.data(), gout.data(), gb.data_mut(), m, k, n);
                    }
                }
                Op::Add(a, b) => {
                    let sb = self.shape(*b);
                    if self.needs_grad(*b) {
                        if sb == gout.shape() {
                            accum(&mut grads, *b, sb[0], sb[1]).add_assign(&gout);
                        } else {
                            let cols = gout.cols();
                            let gb = accum(&mut grads, *b, sb[0], 1);
                            for (r, row) in gout.data().chunks_exact(cols).enumerate() {
                                gb.data_mut()[r] = gb.data()[r] + row.iter().copied().sum::<T>();
                            }
                        }
                    }
                    self.pass_through(&mut grads, *a, gout);
                    continue;
                }
                Op::Sub(a, b) => {
                    if self.needs_grad(*b) {
                        let g = accum(&mut grads, *b, gout.rows(), gout.cols());
                        axpy(-T::one(), gout.data(), g.data_mut());
                    }
                    self.pass_through(&mut grads, *a, gout);
                    continue;
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.needs_grad(*a) {
                        let g = accum(&mut grads, *a, av.rows(), av.cols());
                        for ((gi, &go), &y) in g.data_mut().iter_mut().zip(gout.data()).zip(bv.data()) {
                            *gi = *gi + go * y;
                        }
                    }
                    if self.needs_grad(*b) {
                        let g = accum(&mut grads, *b, bv.rows(), bv.cols());
                        for ((gi, &go), &x) in g.data_mut().iter_mut().zip(gout.data()).zip(av.data()) {
                            *gi = *gi + go * x;
                        }
                    }
                }
                Op::Scale(a, s) => {
                    let mut g = gout;
                    g.scale_assign(*s);
                    self.pass_through(&mut grads, *a, g);
                    continue;
                }
                Op::Tanh(a) => {
                    let mut g = gout;
                    for (gi, &y) in g.data_mut().iter_mut().zip(node.value.data()) {
                        *gi = *gi * (T::one() - y * y);
                    }
                    self.pass_through(&mut grads, *a, g);
                    continue;
                }
                Op::Sigmoid(a) => {
                    let mut g = gout;
                    for (gi, &y) in g.data_mut().iter_mut().zip(node.value.data()) {
                        *gi = *gi * y * (T::one() - y);
                    }
                    self.pass_through(&mut grads, *a, g);
                    continue;
                }
                Op::Relu(a) => {
                    let mut g = gout;
                    for (gi, &x) in g.data_mut().iter_mut().zip(self.value(*a).data()) {
                        if x <= T::zero() {
                            *gi = T::zero();
                        }
                    }
                    self.pass_through(&mut grads, *a, g);
                    continue;
                }
                Op::Softmax(a) => {
                    let y = node.value.data();
                    let inner = dot(gout.data(), y);
                    let mut g = gout;
                    for (gi, &yi) in g.data_mut().iter_mut().zip(y) {
                        *gi = yi * (*gi - inner);
                    }
                    self.pass_through(&mut grads, *a, g);
                    continue;
                }
                Op::Concat(parts, axis) => {
                    let mut offset = 0;
                    for &p in parts {
                        let sp = self.shape(p);
                        if self.needs_grad(p) {
                            let g = accum(&mut grads, p, sp[0], sp[1]);
                            match axis {
                                Axis::Rows => {
                                    let n = sp[0] * sp[1];
                                    axpy(T::one(), &gout.data()[offset..offset + n], g.data_mut());
                                }
                                Axis::Cols => {
                                    let total = gout.cols();
                                    for r in 0..sp[0] {
                                        axpy(
                                            T::one(),
                                            &gout.data()[r * total + offset..r * total + offset + sp[1]],
                                            &mut g.data_mut()[r * sp[1]..(r + 1) * sp[1]],
                                        );
                                    }
                                }
                            }
                        }
                        offset += match axis {
                            Axis::Rows => sp[0] * sp[1],
                            Axis::Cols => sp[1],
                        };
                    }
                }
                Op::Mean(a, axis) => {
                    if self.needs_grad(*a) {
                        let [r, c] = self.shape(*a);
                        let g = accum(&mut grads, *a, r, c);
                        match axis {
                            Axis::Cols => {
                                let inv = T::one() / T::of(c as f64);
                                for (row, &go) in g.data_mut().chunks_exact_mut(c).zip(gout.data()) {
                                    for x in row {
                                        *x = *x + go * inv;
                                    }
                                }
                            }
                            Axis::Rows => {
                                let inv = T::one() / T::of(r as f64);
                                for row in g.data_mut().chunks_exact_mut(c) {
                                    axpy(inv, gout.data(), row);
                                }
                            }
                        }
                    }
                }
                Op::WeightedSum(z, w) => {
                    let (zv, wv) = (self.value(*z), self.value(*w));
                    let (h, l) = (zv.rows(), zv.cols());
                    if self.needs_grad(*z) {
                        let g = accum(&mut grads, *z, h, l);
                        // outer product gout · wᵀ
                        for (row, &go) in g.data_mut().chunks_exact_mut(l).zip(gout.data()) {
                            axpy(go, wv.data(), row);
                        }
                    }
                    if self.needs_grad(*w) {
                        let sw = wv.shape();
                        let g = accum(&mut grads, *w, sw[0], sw[1]);
                        gemm_tn(zv.data(), gout.data(), g.data_mut(), h, l, 1);
                    }
                }
                Op::Slice { src, axis, start } => {
                    if self.needs_grad(*src) {
                        let [r, c] = self.shape(*src);
                        let g = accum(&mut grads, *src, r, c);
                        match axis {
                            Axis::Rows => {
                                let n = gout.len();
                                axpy(T::one(), gout.data(), &mut g.data_mut()[start * c..start * c + n]);
                            }
                            Axis::Cols => {
                                let len = gout.cols();
                                for (row, grow) in g.data_mut().chunks_exact_mut(c).zip(gout.data().chunks_exact(len)) {
                                    axpy(T::one(), grow, &mut row[*start..*start + len]);
                                }
                            }
                        }
                    }
                }
                Op::Log(a, floor) => {
                    let mut g = gout;
                    for (gi, &x) in g.data_mut().iter_mut().zip(self.value(*a).data()) {
                        *gi = if x > *floor { *gi / x } else { T::zero() };
                    }
                    self.pass_through(&mut grads, *a, g);
                    continue;
                }
                Op::SmoothL1(a) => {
                    let mut g = gout;
                    for (gi, &x) in g.data_mut().iter_mut().zip(self.value(*a).data()) {
                        *gi = *gi * smooth_l1_grad(x);
                    }
                    self.pass_through(&mut grads, *a, g);
                    continue;
                }
                Op::Sum(a) => {
                    if self.needs_grad(*a) {
                        let [r, c] = self.shape(*a);
                        let go = gout.data()[0];
                        for x in accum(&mut grads, *a, r, c).data_mut() {
                            *x = *x + go;
                        }
                    }
                }
                Op::Reshape(a) => {
                    let [r, c] = self.shape(*a);
                    let g = gout.reshaped(r, c)?;
                    self.pass_through(&mut grads, *a, g);
                    continue;
                }
            }
        }
        Ok(grads)
    }

    /// Inputs never need gradients; skipping them avoids wasted work on
    /// constant operands such as one-hot matrices and dropout masks.
    fn needs_grad(&self, id: NodeId) -> bool {
        !matches!(self.nodes[id.0].op, Op::Input)
    }

    fn pass_through(&self, grads: &mut [Option<Tensor<T>>], id: NodeId, g: Tensor<T>) {
        if !self.needs_grad(id) {
            return;
        }
        match &mut grads[id.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    /// Gradients of scalar `output` for every parameter of `store`, in store
    /// order. Parameters bound more than once accumulate.
    pub fn backward(&self, output: NodeId, store: &ParamStore<T>) -> Result<Vec<Tensor<T>>> {
        let mut out = store.zeros_like();
        self.backward_into(output, store, &mut out)?;
        Ok(out)
    }

    /// Like [`Graph::backward`] but adds into existing per-parameter buffers.
    pub fn backward_into(&self, output: NodeId, store: &ParamStore<T>, grads: &mut [Tensor<T>]) -> Result<()> {
        if grads.len() != store.len() {
            return Err(Error::usage(format!(
                "gradient buffer has {} slots for {} parameters",
                grads.len(),
                store.len()
            )));
        }
        let node_grads = self.node_gradients(output)?;
        for (node, g) in self.nodes.iter().zip(node_grads) {
            if let (Op::Param(pid), Some(g)) = (&node.op, g) {
                let slot = &mut grads[pid.index()];
                if slot.shape() != g.shape() {
                    return Err(Error::shape(
                        format!("parameter `{}`", store.name(*pid)),
                        fmt_shape(slot.shape()),
                        fmt_shape(g.shape()),
                    ));
                }
                slot.add_assign(&g);
            }
        }
        Ok(())
    }

    /// Gradient of scalar `output` with respect to an arbitrary recorded
    /// node (zero when the node does not influence the output).
    pub fn gradient_wrt(&self, output: NodeId, target: NodeId) -> Result<Tensor<T>> {
        let mut node_grads = self.node_gradients(output)?;
        let [r, c] = self.shape(target);
        Ok(node_grads
            .get_mut(target.0)
            .and_then(Option::take)
            .unwrap_or_else(|| Tensor::zeros(r, c)))
    }

    pub fn op_name(&self, id: NodeId) -> &'static str {
        self.nodes[id.0].op.name()
    }
}

fn accum<T: Real>(grads: &mut [Option<Tensor<T>>], id: NodeId, rows: usize, cols: usize) -> &mut Tensor<T> {
    grads[id.0].get_or_insert_with(|| Tensor::zeros(rows, cols))
}
