use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::kernels;
use super::{ParameterStore, Real, Tensor};
use crate::error::{contract_err, shape_err, Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Gradients keyed by parameter name.
pub type Gradients<T = f32> = BTreeMap<String, Tensor<T>>;

enum Op<T> {
    Leaf,
    Param,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Softplus(Var),
    SoftmaxRows(Var),
    NormalizeRows {
        x: Var,
        norms: Vec<f64>,
    },
    ConcatCols(Vec<Var>),
    ColSlice(Var, usize),
    MulCol(Var, Var),
    GatherRows(Var, Vec<u32>),
    ScatterMean {
        x: Var,
        segment: Vec<i32>,
        counts: Vec<u32>,
    },
    SegmentMax {
        x: Var,
        argmax: Vec<u32>,
    },
    Conv3x3 {
        x: Var,
        w: Var,
        height: usize,
        width: usize,
        cols: Vec<T>,
    },
    Sum(Var),
    /// Scalar loss with gradients precomputed during the forward pass.
    Fused {
        inputs: Vec<Var>,
        local: Vec<Tensor<T>>,
    },
}

struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
    requires_grad: bool,
}

/// A recorded computation. Build it by calling the op methods; every
/// intermediate value is kept for [`Graph::backward`].
pub struct Graph<T: Real = f32> {
    nodes: Vec<Node<T>>,
    params: BTreeMap<String, Var>,
    trainable: Vec<(String, Var)>,
    train_mode: bool,
    seed: u64,
}

fn check2d<T: Real>(t: &Tensor<T>) -> Result<()> {
    if t.shape().len() == 2 {
        Ok(())
    } else {
        Err(shape_err!("graph tensors must be 2-D, got {:?}", t.shape()))
    }
}

impl<T: Real> Graph<T> {
    /// An empty graph. Noise-consuming ops derive their draws from `seed`.
    pub fn new(train_mode: bool, seed: u64) -> Self {
        Self {
            nodes: Vec::new(),
            params: BTreeMap::new(),
            trainable: Vec::new(),
            train_mode,
            seed,
        }
    }

    pub fn train_mode(&self) -> bool {
        self.train_mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    /// Scalar value of a `1×1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0].as_f64()
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>, what: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(what));
        }
        let requires_grad = match &op {
            Op::Leaf | Op::Param => false,
            Op::MatMul(a, b) | Op::AddRow(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::MulCol(a, b) => {
                self.rg(*a) || self.rg(*b)
            }
            Op::Conv3x3 { x, w, .. } => self.rg(*x) || self.rg(*w),
            Op::Scale(a, _)
            | Op::Relu(a)
            | Op::Softplus(a)
            | Op::SoftmaxRows(a)
            | Op::ColSlice(a, _)
            | Op::GatherRows(a, _)
            | Op::Sum(a) => self.rg(*a),
            Op::NormalizeRows { x, .. } | Op::ScatterMean { x, .. } | Op::SegmentMax { x, .. } => self.rg(*x),
            Op::ConcatCols(vs) => vs.iter().any(|v| self.rg(*v)),
            Op::Fused { inputs, .. } => inputs.iter().any(|v| self.rg(*v)),
        };
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A constant input.
    pub fn constant(&mut self, t: Tensor<T>) -> Result<Var> {
        check2d(&t)?;
        self.push(Op::Leaf, t, "constant")
    }

    /// Constant from `f64` row-major data.
    pub fn constant_f64(&mut self, rows: usize, cols: usize, data: &[f64]) -> Result<Var> {
        let t = Tensor::matrix(rows, cols, data.iter().map(|&v| T::of(v)).collect())?;
        self.constant(t)
    }

    /// Binds a parameter from `store`. Frozen parameters behave as constants
    /// and never receive gradients. Binding the same name twice returns the
    /// same node.
    pub fn param(&mut self, store: &ParameterStore<T>, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let p = store.get(name).ok_or_else(|| Error::UnknownParameter(name.into()))?;
        check2d(&p.tensor)?;
        let v = self.push(Op::Param, p.tensor.clone(), "parameter")?;
        self.nodes[v.0].requires_grad = p.trainable;
        if p.trainable {
            self.trainable.push((name.into(), v));
        }
        self.params.insert(name.into(), v);
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = self.shape(a);
        let (k2, m) = self.shape(b);
        if k != k2 {
            return Err(shape_err!("matmul {}x{} · {}x{}", n, k, k2, m));
        }
        let out = kernels::matmul(self.value(a).data(), self.value(b).data(), n, k, m);
        self.push(Op::MatMul(a, b), Tensor::matrix(n, m, out)?, "matmul")
    }

    /// `x + b` with `b` a `1×m` row broadcast over rows.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (n, m) = self.shape(x);
        if self.shape(b) != (1, m) {
            return Err(shape_err!("bias {:?} for {}x{}", self.shape(b), n, m));
        }
        let bias = self.value(b).data().to_vec();
        let mut out = self.value(x).clone();
        for r in 0..n {
            for (o, &bv) in out.row_mut(r).iter_mut().zip(&bias) {
                *o = *o + bv;
            }
        }
        self.push(Op::AddRow(x, b), out, "add_row")
    }

    /// `x·w + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_row(y, b)
    }

    fn same_shape(&self, a: Var, b: Var, op: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err!("{}: {:?} vs {:?}", op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let mut out = self.value(a).clone();
        for (o, &y) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *o = f(*o, y);
        }
        out
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self.zip_map(a, b, |x, y| x + y);
        self.push(Op::Add(a, b), out, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let out = self.zip_map(a, b, |x, y| x - y);
        self.push(Op::Sub(a, b), out, "sub")
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = self.zip_map(a, b, |x, y| x * y);
        self.push(Op::Mul(a, b), out, "mul")
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let cc = T::of(c);
        let out = self.value(a).map(|v| v * cc);
        self.push(Op::Scale(a, c), out, "scale")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(Op::Relu(a), out, "relu")
    }

    /// `ln(1 + eˣ)`, evaluated stably.
    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|v| {
            let x = v.as_f64();
            T::of(x.max(0.0) + libm::log1p(libm::exp(-x.abs())))
        });
        self.push(Op::Softplus(a), out, "softplus")
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let mut out = self.value(a).clone();
        for r in 0..out.rows() {
            softmax_in_place(out.row_mut(r));
        }
        self.push(Op::SoftmaxRows(a), out, "softmax")
    }

    /// Scales each row to unit L2 norm (rows with norm below 1e-12 are
    /// divided by 1e-12 instead).
    pub fn normalize_rows(&mut self, x: Var) -> Result<Var> {
        let mut out = self.value(x).clone();
        let mut norms = Vec::with_capacity(out.rows());
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let n = libm::sqrt(row.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>()).max(1e-12);
            for v in row.iter_mut() {
                *v = T::of(v.as_f64() / n);
            }
            norms.push(n);
        }
        self.push(Op::NormalizeRows { x, norms }, out, "normalize_rows")
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let n = parts
            .first()
            .map(|&v| self.shape(v).0)
            .ok_or_else(|| contract_err!("concat of nothing"))?;
        if parts.iter().any(|&v| self.shape(v).0 != n) {
            return Err(shape_err!("concat: row counts differ"));
        }
        let total: usize = parts.iter().map(|&v| self.shape(v).1).sum();
        let mut data = Vec::with_capacity(n * total);
        for r in 0..n {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        self.push(
            Op::ConcatCols(parts.to_vec()),
            Tensor::matrix(n, total, data)?,
            "concat",
        )
    }

    /// Column `j` as an `n×1` matrix.
    pub fn col(&mut self, x: Var, j: usize) -> Result<Var> {
        let (n, m) = self.shape(x);
        if j >= m {
            return Err(shape_err!("column {} of {} columns", j, m));
        }
        let t = self.value(x);
        let data = (0..n).map(|r| t.get(r, j)).collect();
        self.push(Op::ColSlice(x, j), Tensor::matrix(n, 1, data)?, "col")
    }

    /// Scales row `r` of `x` by `s[r]` (`s` is `n×1`).
    pub fn mul_col(&mut self, x: Var, s: Var) -> Result<Var> {
        let (n, _) = self.shape(x);
        if self.shape(s) != (n, 1) {
            return Err(shape_err!("mul_col: {:?} for {} rows", self.shape(s), n));
        }
        let sv = self.value(s).data().to_vec();
        let mut out = self.value(x).clone();
        for (r, &k) in sv.iter().enumerate() {
            for v in out.row_mut(r) {
                *v = *v * k;
            }
        }
        self.push(Op::MulCol(x, s), out, "mul_col")
    }

    /// Row `i` of the output is row `index[i]` of `x`.
    pub fn gather_rows(&mut self, x: Var, index: Vec<u32>) -> Result<Var> {
        let (n, m) = self.shape(x);
        if let Some(&bad) = index.iter().find(|&&i| i as usize >= n) {
            return Err(shape_err!("gather index {} out of {} rows", bad, n));
        }
        let t = self.value(x);
        let mut data = Vec::with_capacity(index.len() * m);
        for &i in &index {
            data.extend_from_slice(t.row(i as usize));
        }
        let out = Tensor::matrix(index.len(), m, data)?;
        self.push(Op::GatherRows(x, index), out, "gather")
    }

    /// Mean of the rows sharing a segment id; rows with a negative id are
    /// skipped and empty segments produce zero rows.
    pub fn scatter_mean(&mut self, x: Var, segment: Vec<i32>, groups: usize) -> Result<Var> {
        let (n, m) = self.shape(x);
        if segment.len() != n {
            return Err(shape_err!("scatter_mean: {} ids for {} rows", segment.len(), n));
        }
        let mut acc = vec![0.0f64; groups * m];
        let mut counts = vec![0u32; groups];
        let t = self.value(x);
        for (r, &s) in segment.iter().enumerate() {
            if s < 0 {
                continue;
            }
            let s = s as usize;
            if s >= groups {
                return Err(shape_err!("segment {} out of {}", s, groups));
            }
            counts[s] += 1;
            for (a, &v) in acc[s * m..(s + 1) * m].iter_mut().zip(t.row(r)) {
                *a += v.as_f64();
            }
        }
        for (s, &c) in counts.iter().enumerate() {
            if c > 0 {
                for a in &mut acc[s * m..(s + 1) * m] {
                    *a /= f64::from(c);
                }
            }
        }
        let out = Tensor::matrix(groups, m, acc.into_iter().map(T::of).collect())?;
        self.push(Op::ScatterMean { x, segment, counts }, out, "scatter_mean")
    }

    /// Column-wise maximum over each member list (first maximum wins ties).
    pub fn segment_max(&mut self, x: Var, members: &[Vec<u32>]) -> Result<Var> {
        let (n, m) = self.shape(x);
        let t = self.value(x);
        let mut data = Vec::with_capacity(members.len() * m);
        let mut argmax = Vec::with_capacity(members.len() * m);
        for group in members {
            if group.is_empty() {
                return Err(contract_err!("segment_max over an empty group"));
            }
            if let Some(&bad) = group.iter().find(|&&i| i as usize >= n) {
                return Err(shape_err!("segment member {} out of {} rows", bad, n));
            }
            for c in 0..m {
                let mut best = group[0];
                let mut best_v = t.get(best as usize, c);
                for &i in &group[1..] {
                    let v = t.get(i as usize, c);
                    if v > best_v {
                        best = i;
                        best_v = v;
                    }
                }
                data.push(best_v);
                argmax.push(best);
            }
        }
        let out = Tensor::matrix(members.len(), m, data)?;
        self.push(Op::SegmentMax { x, argmax }, out, "segment_max")
    }

    /// 3×3 zero-padded convolution over an `height×width` grid whose cells are
    /// the rows of `x`. `w` is `(9·c_in) × c_out`, rows ordered `(dy, dx, c_in)`.
    pub fn conv3x3(&mut self, x: Var, w: Var, height: usize, width: usize) -> Result<Var> {
        let (n, cin) = self.shape(x);
        let (wr, cout) = self.shape(w);
        if n != height * width || wr != 9 * cin {
            return Err(shape_err!(
                "conv3x3: input {}x{} on {}x{} grid, weight {}x{}",
                n,
                cin,
                height,
                width,
                wr,
                cout
            ));
        }
        let cols = kernels::im2col3(self.value(x).data(), height, width, cin);
        let out = kernels::matmul(&cols, self.value(w).data(), n, 9 * cin, cout);
        let out = Tensor::matrix(n, cout, out)?;
        self.push(
            Op::Conv3x3 {
                x,
                w,
                height,
                width,
                cols,
            },
            out,
            "conv3x3",
        )
    }

    /// Sum of all elements as a `1×1` node.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).sum_f64();
        self.push(Op::Sum(a), Tensor::scalar(T::of(s)), "sum")
    }

    /// Weighted sum of `1×1` nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let mut acc: Option<Var> = None;
        for &(v, w) in terms {
            if self.shape(v) != (1, 1) {
                return Err(shape_err!("weighted_sum term is not scalar"));
            }
            let t = if w == 1.0 { v } else { self.scale(v, w)? };
            acc = Some(match acc {
                None => t,
                Some(a) => self.add(a, t)?,
            });
        }
        match acc {
            Some(a) => Ok(a),
            None => self.constant(Tensor::scalar(T::zero())),
        }
    }

    /// Registers a scalar whose gradient with respect to each input was
    /// computed alongside its value.
    pub(crate) fn fused_scalar(
        &mut self,
        inputs: Vec<Var>,
        value: f64,
        local: Vec<Tensor<T>>,
        what: &'static str,
    ) -> Result<Var> {
        debug_assert_eq!(inputs.len(), local.len());
        self.push(Op::Fused { inputs, local }, Tensor::scalar(T::of(value)), what)
    }

    /// Reverse-mode gradients of the scalar `loss` for every trainable
    /// parameter bound in this graph (zero when the loss does not depend on it).
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.shape(loss) != (1, 1) {
            return Err(shape_err!("loss must be 1x1, got {:?}", self.shape(loss)));
        }
        let mut grads: Vec<Option<Tensor<T>>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::scalar(T::one()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let mut out = Gradients::new();
        for (name, v) in &self.trainable {
            let g = match grads.get(v.0).and_then(|g| g.clone()) {
                Some(g) => g,
                None => Tensor::zeros(self.value(*v).shape()),
            };
            out.insert(name.clone(), g);
        }
        Ok(out)
    }

    fn propagate(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let mut acc = |v: Var, t: Tensor<T>| {
            if !self.rg(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(e) => e.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        let gd = g.data();
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let (n, k) = self.shape(*a);
                let m = self.shape(*b).1;
                if self.rg(*a) {
                    let da = kernels::matmul_nt(gd, self.value(*b).data(), n, m, k);
                    acc(*a, Tensor::matrix(n, k, da).unwrap());
                }
                if self.rg(*b) {
                    let db = kernels::matmul_tn(self.value(*a).data(), gd, n, k, m);
                    acc(*b, Tensor::matrix(k, m, db).unwrap());
                }
            }
            Op::AddRow(x, b) => {
                if self.rg(*b) {
                    let m = g.cols();
                    let mut s = vec![0.0f64; m];
                    for r in 0..g.rows() {
                        for (a, &v) in s.iter_mut().zip(g.row(r)) {
                            *a += v.as_f64();
                        }
                    }
                    acc(*b, Tensor::matrix(1, m, s.into_iter().map(T::of).collect()).unwrap());
                }
                acc(*x, g.clone());
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    acc(*a, self.elementwise(g, *b, |gv, bv| gv * bv));
                }
                if self.rg(*b) {
                    acc(*b, self.elementwise(g, *a, |gv, av| gv * av));
                }
            }
            Op::Scale(a, c) => {
                let c = T::of(*c);
                acc(*a, g.map(|v| v * c));
            }
            Op::Relu(a) => {
                acc(
                    *a,
                    self.elementwise(g, *a, |gv, x| if x > T::zero() { gv } else { T::zero() }),
                );
            }
            Op::Softplus(a) => {
                acc(
                    *a,
                    self.elementwise(g, *a, |gv, x| {
                        let s = 1.0 / (1.0 + libm::exp(-x.as_f64()));
                        T::of(gv.as_f64() * s)
                    }),
                );
            }
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let mut d = Tensor::zeros(y.shape());
                for r in 0..y.rows() {
                    let yr = y.row(r);
                    let gr = g.row(r);
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a.as_f64() * b.as_f64()).sum();
                    for ((o, &yv), &gv) in d.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *o = T::of(yv.as_f64() * (gv.as_f64() - dot));
                    }
                }
                acc(*a, d);
            }
            Op::NormalizeRows { x, norms } => {
                let y = &node.value;
                let mut d = Tensor::zeros(y.shape());
                for r in 0..y.rows() {
                    let yr = y.row(r);
                    let gr = g.row(r);
                    let n = norms[r];
                    // below the clamp the op is a plain scaling
                    let dot: f64 = if n > 1e-12 {
                        yr.iter().zip(gr).map(|(a, b)| a.as_f64() * b.as_f64()).sum()
                    } else {
                        0.0
                    };
                    for ((o, &yv), &gv) in d.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *o = T::of((gv.as_f64() - yv.as_f64() * dot) / n);
                    }
                }
                acc(*x, d);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let (n, m) = self.shape(p);
                    if self.rg(p) {
                        let mut d = Vec::with_capacity(n * m);
                        for r in 0..n {
                            d.extend_from_slice(&g.row(r)[off..off + m]);
                        }
                        acc(p, Tensor::matrix(n, m, d).unwrap());
                    }
                    off += m;
                }
            }
            Op::ColSlice(x, j) => {
                let (n, m) = self.shape(*x);
                let mut d = Tensor::zeros(&[n, m]);
                for r in 0..n {
                    d.data_mut()[r * m + j] = gd[r];
                }
                acc(*x, d);
            }
            Op::MulCol(x, s) => {
                let xv = self.value(*x);
                let sv = self.value(*s);
                if self.rg(*x) {
                    let mut d = g.clone();
                    for r in 0..d.rows() {
                        let k = sv.data()[r];
                        for v in d.row_mut(r) {
                            *v = *v * k;
                        }
                    }
                    acc(*x, d);
                }
                if self.rg(*s) {
                    let ds = (0..xv.rows())
                        .map(|r| {
                            let dot: f64 = xv
                                .row(r)
                                .iter()
                                .zip(g.row(r))
                                .map(|(a, b)| a.as_f64() * b.as_f64())
                                .sum();
                            T::of(dot)
                        })
                        .collect();
                    acc(*s, Tensor::matrix(xv.rows(), 1, ds).unwrap());
                }
            }
            Op::GatherRows(x, index) => {
                let (n, m) = self.shape(*x);
                let mut d = vec![0.0f64; n * m];
                for (i, &src) in index.iter().enumerate() {
                    let src = src as usize;
                    for (a, &v) in d[src * m..(src + 1) * m].iter_mut().zip(g.row(i)) {
                        *a += v.as_f64();
                    }
                }
                acc(*x, Tensor::matrix(n, m, d.into_iter().map(T::of).collect()).unwrap());
            }
            Op::ScatterMean { x, segment, counts } => {
                let (n, m) = self.shape(*x);
                let mut d = Tensor::zeros(&[n, m]);
                for (r, &s) in segment.iter().enumerate() {
                    if s < 0 {
                        continue;
                    }
                    let inv = 1.0 / f64::from(counts[s as usize]);
                    for (o, &gv) in d.row_mut(r).iter_mut().zip(g.row(s as usize)) {
                        *o = T::of(gv.as_f64() * inv);
                    }
                }
                acc(*x, d);
            }
            Op::SegmentMax { x, argmax } => {
                let (n, m) = self.shape(*x);
                let mut d = vec![0.0f64; n * m];
                for (k, &src) in argmax.iter().enumerate() {
                    let c = k % m;
                    d[src as usize * m + c] += gd[k].as_f64();
                }
                acc(*x, Tensor::matrix(n, m, d.into_iter().map(T::of).collect()).unwrap());
            }
            Op::Conv3x3 {
                x,
                w,
                height,
                width,
                cols,
            } => {
                let (n, cin) = self.shape(*x);
                let cout = self.shape(*w).1;
                if self.rg(*w) {
                    let dw = kernels::matmul_tn(cols, gd, n, 9 * cin, cout);
                    acc(*w, Tensor::matrix(9 * cin, cout, dw).unwrap());
                }
                if self.rg(*x) {
                    let dcols = kernels::matmul_nt(gd, self.value(*w).data(), n, cout, 9 * cin);
                    let dx = kernels::col2im3(&dcols, *height, *width, cin);
                    acc(*x, Tensor::matrix(n, cin, dx).unwrap());
                }
            }
            Op::Sum(a) => {
                let s = gd[0];
                acc(*a, Tensor::full(self.value(*a).shape(), s));
            }
            Op::Fused { inputs, local } => {
                let s = gd[0];
                for (&v, l) in inputs.iter().zip(local) {
                    acc(v, l.map(|x| x * s));
                }
            }
        }
    }

    fn elementwise(&self, g: &Tensor<T>, other: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let mut out = g.clone();
        for (o, &v) in out.data_mut().iter_mut().zip(self.value(other).data()) {
            *o = f(*o, v);
        }
        out
    }
}

/// Numerically stable in-place softmax with `f64` accumulation.
pub(crate) fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
    let mut sum = 0.0f64;
    let mut tmp: Vec<f64> = Vec::with_capacity(row.len());
    for v in row.iter() {
        let e = libm::exp(v.as_f64() - max);
        sum += e;
        tmp.push(e);
    }
    for (o, e) in row.iter_mut().zip(tmp) {
        *o = T::of(e / sum);
    }
}
