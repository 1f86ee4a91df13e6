//! Reverse-mode differentiation over dense tensors.
//!
//! Every op evaluates eagerly and appends a node holding its value and the
//! handles of its inputs. [`Tape::backward`] walks the nodes in reverse
//! recording order and accumulates gradients additively, so a tensor used
//! at several places (an embedding row at several sequence positions)
//! receives the sum of all contributions.

use super::error::TensorError;
use super::scalar::Scalar;
use super::tensor::{mm_nn, mm_nt, mm_tn, transpose, Tensor};

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Discriminant of a recorded op, used in diagnostics and fault injection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    Add,
    Sub,
    Mul,
    Scale,
    Offset,
    Sigmoid,
    Tanh,
    Relu,
    MatMul,
    Transpose,
    Concat,
    AddBias,
    Gather,
    SquaredL2,
    SumSquares,
    Sum,
    LogLoss,
    Attention,
}

impl OpKind {
    pub const ALL: [OpKind; 19] = [
        OpKind::Leaf,
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Scale,
        OpKind::Offset,
        OpKind::Sigmoid,
        OpKind::Tanh,
        OpKind::Relu,
        OpKind::MatMul,
        OpKind::Transpose,
        OpKind::Concat,
        OpKind::AddBias,
        OpKind::Gather,
        OpKind::SquaredL2,
        OpKind::SumSquares,
        OpKind::Sum,
        OpKind::LogLoss,
        OpKind::Attention,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Leaf => "leaf",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Scale => "scale",
            OpKind::Offset => "offset",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Tanh => "tanh",
            OpKind::Relu => "relu",
            OpKind::MatMul => "matmul",
            OpKind::Transpose => "transpose",
            OpKind::Concat => "concat",
            OpKind::AddBias => "add_bias",
            OpKind::Gather => "gather",
            OpKind::SquaredL2 => "squared_l2",
            OpKind::SumSquares => "sum_squares",
            OpKind::Sum => "sum",
            OpKind::LogLoss => "logloss",
            OpKind::Attention => "attention",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

/// Unary and binary elementwise kinds accepted by [`Tape::elementwise`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Elementwise<S> {
    Sigmoid,
    Tanh,
    Relu,
    Add,
    Sub,
    Mul,
    Scale(S),
}

enum Op<S> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, S),
    Offset(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    MatMul {
        a: Var,
        b: Var,
        r: usize,
        k: usize,
        c: usize,
    },
    Transpose {
        a: Var,
        r: usize,
        c: usize,
    },
    Concat {
        a: Var,
        b: Var,
        outer: usize,
        a_block: usize,
        b_block: usize,
    },
    AddBias(Var, Var),
    Gather {
        table: Var,
        ids: Vec<usize>,
        skip_pad: bool,
    },
    SquaredL2(Var, Var),
    SumSquares(Var),
    Sum(Var),
    LogLoss {
        p: Var,
        labels: Vec<S>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        mask: Vec<bool>,
        len: usize,
        probs: Vec<S>,
    },
}

impl<S> Op<S> {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::Scale(..) => OpKind::Scale,
            Op::Offset(..) => OpKind::Offset,
            Op::Sigmoid(..) => OpKind::Sigmoid,
            Op::Tanh(..) => OpKind::Tanh,
            Op::Relu(..) => OpKind::Relu,
            Op::MatMul { .. } => OpKind::MatMul,
            Op::Transpose { .. } => OpKind::Transpose,
            Op::Concat { .. } => OpKind::Concat,
            Op::AddBias(..) => OpKind::AddBias,
            Op::Gather { .. } => OpKind::Gather,
            Op::SquaredL2(..) => OpKind::SquaredL2,
            Op::SumSquares(..) => OpKind::SumSquares,
            Op::Sum(..) => OpKind::Sum,
            Op::LogLoss { .. } => OpKind::LogLoss,
            Op::Attention { .. } => OpKind::Attention,
        }
    }
}

struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
}

/// Probability clamp applied inside [`Tape::logloss`] before taking logs.
pub const LOGLOSS_CLAMP: f64 = 1e-12;

/// Computation tape. Confined to one thread; independent tapes may run on
/// independent workers.
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
    fault: Option<OpKind>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            fault: None,
        }
    }

    /// Corrupts the backward rule of one op kind. Used by the self-test
    /// harness to prove the gradient checks catch a broken rule.
    #[doc(hidden)]
    pub fn inject_fault(&mut self, kind: OpKind) {
        self.fault = Some(kind);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> Result<&Node<S>, TensorError> {
        self.nodes.get(v.0).ok_or(TensorError::UnknownVar(v.0))
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn kind(&self, v: Var) -> OpKind {
        self.nodes[v.0].op.kind()
    }

    /// Records an input tensor (parameter or constant).
    pub fn leaf(&mut self, value: Tensor<S>) -> Var {
        self.push(value, Op::Leaf)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), TensorError> {
        let (sa, sb) = (self.node(a)?.value.shape(), self.node(b)?.value.shape());
        if sa != sb {
            return Err(TensorError::ShapeMismatch {
                op,
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        Ok(())
    }

    fn map_unary(&mut self, a: Var, f: impl Fn(S) -> S, op: Op<S>) -> Result<Var, TensorError> {
        let x = &self.node(a)?.value;
        let data = x.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(value, op))
    }

    fn map_binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(S, S) -> S,
        op: Op<S>,
    ) -> Result<Var, TensorError> {
        self.same_shape(name, a, b)?;
        let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(value, op))
    }

    pub fn elementwise(
        &mut self,
        kind: Elementwise<S>,
        a: Var,
        b: Option<Var>,
    ) -> Result<Var, TensorError> {
        let need_b = |b: Option<Var>| {
            b.ok_or(TensorError::ShapeMismatch {
                op: "elementwise",
                left: vec![],
                right: vec![],
            })
        };
        match kind {
            Elementwise::Sigmoid => self.sigmoid(a),
            Elementwise::Tanh => self.tanh(a),
            Elementwise::Relu => self.relu(a),
            Elementwise::Scale(c) => self.scale(a, c),
            Elementwise::Add => self.add(a, need_b(b)?),
            Elementwise::Sub => self.sub(a, need_b(b)?),
            Elementwise::Mul => self.mul(a, need_b(b)?),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.map_binary("add", a, b, |p, q| p + q, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.map_binary("sub", a, b, |p, q| p - q, Op::Sub(a, b))
    }

    /// Hadamard product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.map_binary("mul", a, b, |p, q| p * q, Op::Mul(a, b))
    }

    /// Scalar-times-tensor.
    pub fn scale(&mut self, a: Var, c: S) -> Result<Var, TensorError> {
        self.map_unary(a, |x| x * c, Op::Scale(a, c))
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Result<Var, TensorError> {
        self.map_unary(a, |x| S::one() - x, Op::Offset(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, TensorError> {
        self.map_unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, TensorError> {
        self.map_unary(a, S::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, TensorError> {
        self.map_unary(a, |x| x.max(S::zero()), Op::Relu(a))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (x, y) = (&self.node(a)?.value, &self.node(b)?.value);
        let ((r, k), (k2, c)) = (x.dims2()?, y.dims2()?);
        if x.shape().len() != 2 || y.shape().len() != 2 || k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: x.shape().to_vec(),
                right: y.shape().to_vec(),
            });
        }
        let value = Tensor::matrix(r, c, mm_nn(x.data(), y.data(), r, k, c))?;
        Ok(self.push(value, Op::MatMul { a, b, r, k, c }))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, TensorError> {
        let x = &self.node(a)?.value;
        let (r, c) = x.dims2()?;
        let value = Tensor::matrix(c, r, transpose(x.data(), r, c))?;
        Ok(self.push(value, Op::Transpose { a, r, c }))
    }

    /// Concatenation along `axis`; all other extents must agree.
    pub fn concat(&mut self, a: Var, b: Var, axis: usize) -> Result<Var, TensorError> {
        let (x, y) = (&self.node(a)?.value, &self.node(b)?.value);
        let (sa, sb) = (x.shape(), y.shape());
        let mismatch = || TensorError::ShapeMismatch {
            op: "concat",
            left: sa.to_vec(),
            right: sb.to_vec(),
        };
        if sa.len() != sb.len() || axis >= sa.len() {
            return Err(mismatch());
        }
        if (0..sa.len()).any(|d| d != axis && sa[d] != sb[d]) {
            return Err(mismatch());
        }
        let outer: usize = sa[..axis].iter().product();
        let inner: usize = sa[axis + 1..].iter().product();
        let (a_block, b_block) = (sa[axis] * inner, sb[axis] * inner);
        let mut data = Vec::with_capacity(x.len() + y.len());
        for o in 0..outer {
            data.extend_from_slice(&x.data()[o * a_block..(o + 1) * a_block]);
            data.extend_from_slice(&y.data()[o * b_block..(o + 1) * b_block]);
        }
        let mut shape = sa.to_vec();
        shape[axis] += sb[axis];
        let value = Tensor::new(shape, data)?;
        Ok(self.push(
            value,
            Op::Concat {
                a,
                b,
                outer,
                a_block,
                b_block,
            },
        ))
    }

    /// Adds a length-`c` bias to every row of an `r×c` matrix.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var, TensorError> {
        let (x, bv) = (&self.node(a)?.value, &self.node(bias)?.value);
        let (_, c) = x.dims2()?;
        if bv.len() != c {
            return Err(TensorError::ShapeMismatch {
                op: "add_bias",
                left: x.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        }
        let data = x
            .data()
            .chunks(c)
            .flat_map(|row| row.iter().zip(bv.data()).map(|(&p, &q)| p + q))
            .collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(value, Op::AddBias(a, bias)))
    }

    /// Row gather from a `n×d` table. With `skip_pad`, id 0 yields a zero row
    /// and never receives gradient.
    pub fn gather(&mut self, table: Var, ids: &[usize], skip_pad: bool) -> Result<Var, TensorError> {
        let t = &self.node(table)?.value;
        let (n, d) = t.dims2()?;
        if ids.is_empty() {
            return Err(TensorError::InvalidShape(vec![0, d]));
        }
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= n {
                return Err(TensorError::IndexOutOfRange {
                    op: "gather",
                    index: id,
                    bound: n,
                });
            }
            if skip_pad && id == 0 {
                data.extend(std::iter::repeat(S::zero()).take(d));
            } else {
                data.extend_from_slice(t.row(id));
            }
        }
        let value = Tensor::matrix(ids.len(), d, data)?;
        Ok(self.push(
            value,
            Op::Gather {
                table,
                ids: ids.to_vec(),
                skip_pad,
            },
        ))
    }

    /// `Σ (a - b)²` as a scalar.
    pub fn squared_l2(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("squared_l2", a, b)?;
        let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let s = x
            .data()
            .iter()
            .zip(y.data())
            .map(|(&p, &q)| (p - q) * (p - q))
            .sum();
        Ok(self.push(Tensor::scalar(s), Op::SquaredL2(a, b)))
    }

    pub fn sum_squares(&mut self, a: Var) -> Result<Var, TensorError> {
        let s = self.node(a)?.value.sum_squares();
        Ok(self.push(Tensor::scalar(s), Op::SumSquares(a)))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, TensorError> {
        let s = self.node(a)?.value.data().iter().copied().sum();
        Ok(self.push(Tensor::scalar(s), Op::Sum(a)))
    }

    /// Mean binary cross-entropy of probabilities `p` against 0/1 labels,
    /// with `p` clamped to `[LOGLOSS_CLAMP, 1 - LOGLOSS_CLAMP]`.
    pub fn logloss(&mut self, p: Var, labels: &[S]) -> Result<Var, TensorError> {
        let x = &self.node(p)?.value;
        if x.len() != labels.len() {
            return Err(TensorError::ShapeMismatch {
                op: "logloss",
                left: x.shape().to_vec(),
                right: vec![labels.len()],
            });
        }
        if let Some(bad) = labels.iter().find(|&&y| y != S::zero() && y != S::one()) {
            return Err(TensorError::InvalidLabel(bad.to_string()));
        }
        let eps = S::lit(LOGLOSS_CLAMP);
        let n = S::from_usize(labels.len()).expect("batch size");
        let total: S = x
            .data()
            .iter()
            .zip(labels)
            .map(|(&pi, &y)| {
                let pc = pi.max(eps).min(S::one() - eps);
                y * pc.ln() + (S::one() - y) * (S::one() - pc).ln()
            })
            .sum();
        Ok(self.push(
            Tensor::scalar(-total / n),
            Op::LogLoss {
                p,
                labels: labels.to_vec(),
            },
        ))
    }

    /// Scaled dot-product attention of one query per sequence over that
    /// sequence's keys.
    ///
    /// `q` is `b×d`; `k` and `v` are `(b·len)×d` with sequence `s` occupying
    /// rows `s·len..(s+1)·len`. Keys whose `mask` entry is false are excluded;
    /// a sequence with no valid key attends to nothing and yields zeros.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, mask: &[bool]) -> Result<Var, TensorError> {
        let (qv, kv, vv) = (&self.node(q)?.value, &self.node(k)?.value, &self.node(v)?.value);
        let (b, d) = qv.dims2()?;
        let (kr, kd) = kv.dims2()?;
        if kv.shape() != vv.shape() || kd != d || kr != mask.len() || kr % b != 0 {
            return Err(TensorError::ShapeMismatch {
                op: "attention",
                left: qv.shape().to_vec(),
                right: kv.shape().to_vec(),
            });
        }
        let len = kr / b;
        let (probs, out) = attention_forward(qv.data(), kv.data(), vv.data(), mask, b, len, d);
        let value = Tensor::matrix(b, d, out)?;
        Ok(self.push(
            value,
            Op::Attention {
                q,
                k,
                v,
                mask: mask.to_vec(),
                len,
                probs,
            },
        ))
    }

    /// Propagates `d loss / d node` for every node the loss depends on.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>, TensorError> {
        let root = self.node(loss)?;
        if !root.value.is_scalar() {
            return Err(TensorError::NotScalar(root.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<S>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![S::one()]);
        for idx in (0..=loss.0).rev() {
            let Some(mut g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if self.fault == Some(node.op.kind()) {
                for x in g.iter_mut() {
                    *x = *x * S::lit(1.5) + S::lit(1e-3);
                }
            }
            self.backward_node(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backward_node(&self, node: &Node<S>, g: &[S], grads: &mut [Option<Vec<S>>]) {
        let val = |v: Var| self.nodes[v.0].value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                accumulate(grads, *a, g.len(), |buf| add_into(buf, g));
                accumulate(grads, *b, g.len(), |buf| add_into(buf, g));
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.len(), |buf| add_into(buf, g));
                accumulate(grads, *b, g.len(), |buf| {
                    buf.iter_mut().zip(g).for_each(|(o, &x)| *o -= x)
                });
            }
            Op::Mul(a, b) => {
                let (x, y) = (val(*a), val(*b));
                accumulate(grads, *a, g.len(), |buf| {
                    for i in 0..buf.len() {
                        buf[i] += g[i] * y[i];
                    }
                });
                accumulate(grads, *b, g.len(), |buf| {
                    for i in 0..buf.len() {
                        buf[i] += g[i] * x[i];
                    }
                });
            }
            Op::Scale(a, c) => {
                accumulate(grads, *a, g.len(), |buf| {
                    buf.iter_mut().zip(g).for_each(|(o, &x)| *o += x * *c)
                });
            }
            Op::Offset(a) => {
                accumulate(grads, *a, g.len(), |buf| {
                    buf.iter_mut().zip(g).for_each(|(o, &x)| *o -= x)
                });
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                accumulate(grads, *a, g.len(), |buf| {
                    for i in 0..buf.len() {
                        buf[i] += g[i] * y[i] * (S::one() - y[i]);
                    }
                });
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                accumulate(grads, *a, g.len(), |buf| {
                    for i in 0..buf.len() {
                        buf[i] += g[i] * (S::one() - y[i] * y[i]);
                    }
                });
            }
            Op::Relu(a) => {
                let x = val(*a);
                accumulate(grads, *a, g.len(), |buf| {
                    for i in 0..buf.len() {
                        if x[i] > S::zero() {
                            buf[i] += g[i];
                        }
                    }
                });
            }
            Op::MatMul { a, b, r, k, c } => {
                let (x, y) = (val(*a), val(*b));
                let da = mm_nt(g, y, *r, *c, *k);
                accumulate(grads, *a, r * k, |buf| add_into(buf, &da));
                let db = mm_tn(x, g, *r, *k, *c);
                accumulate(grads, *b, k * c, |buf| add_into(buf, &db));
            }
            Op::Transpose { a, r, c } => {
                let back = transpose(g, *c, *r);
                accumulate(grads, *a, r * c, |buf| add_into(buf, &back));
            }
            Op::Concat {
                a,
                b,
                outer,
                a_block,
                b_block,
            } => {
                let stride = a_block + b_block;
                accumulate(grads, *a, outer * a_block, |buf| {
                    for o in 0..*outer {
                        add_into(
                            &mut buf[o * a_block..(o + 1) * a_block],
                            &g[o * stride..o * stride + a_block],
                        );
                    }
                });
                accumulate(grads, *b, outer * b_block, |buf| {
                    for o in 0..*outer {
                        add_into(
                            &mut buf[o * b_block..(o + 1) * b_block],
                            &g[o * stride + a_block..(o + 1) * stride],
                        );
                    }
                });
            }
            Op::AddBias(a, bias) => {
                accumulate(grads, *a, g.len(), |buf| add_into(buf, g));
                let c = self.nodes[bias.0].value.len();
                accumulate(grads, *bias, c, |buf| {
                    for row in g.chunks(c) {
                        add_into(buf, row);
                    }
                });
            }
            Op::Gather {
                table,
                ids,
                skip_pad,
            } => {
                let tv = &self.nodes[table.0].value;
                let d = *tv.shape().last().unwrap_or(&1);
                accumulate(grads, *table, tv.len(), |buf| {
                    for (pos, &id) in ids.iter().enumerate() {
                        if *skip_pad && id == 0 {
                            continue;
                        }
                        add_into(&mut buf[id * d..(id + 1) * d], &g[pos * d..(pos + 1) * d]);
                    }
                });
            }
            Op::SquaredL2(a, b) => {
                let (x, y) = (val(*a), val(*b));
                let two = S::lit(2.0) * g[0];
                accumulate(grads, *a, x.len(), |buf| {
                    for i in 0..buf.len() {
                        buf[i] += two * (x[i] - y[i]);
                    }
                });
                accumulate(grads, *b, x.len(), |buf| {
                    for i in 0..buf.len() {
                        buf[i] -= two * (x[i] - y[i]);
                    }
                });
            }
            Op::SumSquares(a) => {
                let x = val(*a);
                let two = S::lit(2.0) * g[0];
                accumulate(grads, *a, x.len(), |buf| {
                    buf.iter_mut().zip(x).for_each(|(o, &xi)| *o += two * xi)
                });
            }
            Op::Sum(a) => {
                let n = self.nodes[a.0].value.len();
                accumulate(grads, *a, n, |buf| buf.iter_mut().for_each(|o| *o += g[0]));
            }
            Op::LogLoss { p, labels } => {
                let x = val(*p);
                let eps = S::lit(LOGLOSS_CLAMP);
                let n = S::from_usize(labels.len()).expect("batch size");
                accumulate(grads, *p, x.len(), |buf| {
                    for i in 0..buf.len() {
                        let (pi, y) = (x[i], labels[i]);
                        if pi > eps && pi < S::one() - eps {
                            buf[i] += -g[0] * (y / pi - (S::one() - y) / (S::one() - pi)) / n;
                        }
                    }
                });
            }
            Op::Attention {
                q,
                k,
                v,
                mask,
                len,
                probs,
            } => {
                let (qd, kd, vd) = (val(*q), val(*k), val(*v));
                let (b, d) = self.nodes[q.0].value.dims2().expect("checked in forward");
                let scale = S::one() / S::from_usize(d).expect("dim").sqrt();
                let mut dq = vec![S::zero(); qd.len()];
                let mut dk = vec![S::zero(); kd.len()];
                let mut dv = vec![S::zero(); vd.len()];
                for s in 0..b {
                    let gs = &g[s * d..(s + 1) * d];
                    let rows = s * len..(s + 1) * len;
                    // dP_t = g · v_t ; dS_t = P_t (dP_t - Σ P dP)
                    let dp: Vec<S> = rows
                        .clone()
                        .map(|r| dot(gs, &vd[r * d..(r + 1) * d]))
                        .collect();
                    let inner: S = rows.clone().zip(&dp).map(|(r, &x)| probs[r] * x).sum();
                    for (t, r) in rows.enumerate() {
                        if !mask[r] {
                            continue;
                        }
                        let pr = probs[r];
                        for j in 0..d {
                            dv[r * d + j] += pr * gs[j];
                        }
                        let ds = pr * (dp[t] - inner) * scale;
                        for j in 0..d {
                            dq[s * d + j] += ds * kd[r * d + j];
                            dk[r * d + j] += ds * qd[s * d + j];
                        }
                    }
                }
                accumulate(grads, *q, dq.len(), |buf| add_into(buf, &dq));
                accumulate(grads, *k, dk.len(), |buf| add_into(buf, &dk));
                accumulate(grads, *v, dv.len(), |buf| add_into(buf, &dv));
            }
        }
    }
}

fn accumulate<S: Scalar>(
    grads: &mut [Option<Vec<S>>],
    v: Var,
    len: usize,
    f: impl FnOnce(&mut [S]),
) {
    let slot = grads[v.0].get_or_insert_with(|| vec![S::zero(); len]);
    f(slot);
}

fn add_into<S: Scalar>(buf: &mut [S], g: &[S]) {
    buf.iter_mut().zip(g).for_each(|(o, &x)| *o += x);
}

fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// Returns per-key attention weights and the `b×d` attended values.
fn attention_forward<S: Scalar>(
    q: &[S],
    k: &[S],
    v: &[S],
    mask: &[bool],
    b: usize,
    len: usize,
    d: usize,
) -> (Vec<S>, Vec<S>) {
    let scale = S::one() / S::from_usize(d).expect("dim").sqrt();
    let mut probs = vec![S::zero(); b * len];
    let mut out = vec![S::zero(); b * d];
    for s in 0..b {
        let qs = &q[s * d..(s + 1) * d];
        let rows = s * len..(s + 1) * len;
        let mut max = S::neg_infinity();
        for r in rows.clone() {
            if mask[r] {
                probs[r] = dot(qs, &k[r * d..(r + 1) * d]) * scale;
                max = max.max(probs[r]);
            }
        }
        if max == S::neg_infinity() {
            continue;
        }
        let mut total = S::zero();
        for r in rows.clone() {
            if mask[r] {
                probs[r] = (probs[r] - max).exp();
                total += probs[r];
            }
        }
        for r in rows {
            if mask[r] {
                probs[r] /= total;
                let pr = probs[r];
                for j in 0..d {
                    out[s * d + j] += pr * v[r * d + j];
                }
            }
        }
    }
    (probs, out)
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients<S> {
    grads: Vec<Option<Vec<S>>>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient of the loss w.r.t. `v`, or `None` when `v` does not
    /// influence the loss.
    pub fn get(&self, v: Var) -> Option<&[S]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Like [`Gradients::get`] but yields zeros for unreachable vars.
    pub fn get_or_zeros(&self, v: Var, len: usize) -> Vec<S> {
        self.get(v).map_or_else(|| vec![S::zero(); len], <[S]>::to_vec)
    }
}
