//! Graph builders for the encoders, affine transforms and prediction
//! towers, plus tape-free entry points for single sequences.

use crate::numeric::{Scalar, Tape, Tensor, TensorError, Var};

/// Gate matrices of a bias-free GRU, each `D×2D`, acting on `[E_t, H_{t-1}]`.
#[derive(Clone, Copy, Debug)]
pub struct GruVars {
    pub w_z: Var,
    pub w_r: Var,
    pub w_h: Var,
}

/// Runs the GRU over per-step inputs (`B×D` each) from a zero state and
/// returns the last hidden state (`B×D`).
///
/// ```text
/// Z = σ(W_z [E_t, H])      R = σ(W_r [E_t, H])
/// H̃ = tanh(W_h [E_t, R⊙H])  H = (1 − Z)⊙H + Z⊙H̃
/// ```
pub fn gru_graph<S: Scalar>(tape: &mut Tape<S>, steps: &[Var], w: GruVars) -> Result<Var, TensorError> {
    let first = steps.first().ok_or(TensorError::InvalidShape(vec![0]))?;
    let (b, d) = tape.value(*first).dims2()?;
    for m in [w.w_z, w.w_r, w.w_h] {
        if tape.value(m).shape() != [d, 2 * d] {
            return Err(TensorError::ShapeMismatch {
                op: "gru weights",
                left: vec![d, 2 * d],
                right: tape.value(m).shape().to_vec(),
            });
        }
    }
    let wz_t = tape.transpose(w.w_z)?;
    let wr_t = tape.transpose(w.w_r)?;
    let wh_t = tape.transpose(w.w_h)?;
    let mut h = tape.leaf(Tensor::zeros(vec![b, d])?);
    for &e in steps {
        let x = tape.concat(e, h, 1)?;
        let z_pre = tape.matmul(x, wz_t)?;
        let z = tape.sigmoid(z_pre)?;
        let r_pre = tape.matmul(x, wr_t)?;
        let r = tape.sigmoid(r_pre)?;
        let rh = tape.mul(r, h)?;
        let x2 = tape.concat(e, rh, 1)?;
        let cand_pre = tape.matmul(x2, wh_t)?;
        let cand = tape.tanh(cand_pre)?;
        let keep = tape.one_minus(z)?;
        let old = tape.mul(keep, h)?;
        let new = tape.mul(z, cand)?;
        h = tape.add(old, new)?;
    }
    Ok(h)
}

/// Weights of the single-block, single-head self-attention encoder.
#[derive(Clone, Copy, Debug)]
pub struct AttentionVars {
    /// `(T+1)×D` learned positions; row 0 is the pad row.
    pub positions: Var,
    pub w_q: Var,
    pub w_k: Var,
    pub w_v: Var,
    pub w_1: Var,
    pub b_1: Var,
    pub w_2: Var,
    pub b_2: Var,
}

/// Self-attention readout at the last position.
///
/// `x` holds `B` sequences of length `T` stacked as `(B·T)×D` embedding rows
/// (pads are zero rows and `mask` is false there). Positions are added to
/// real rows only; the last position attends causally over every real row
/// of its sequence, then a residual and a residual feed-forward block follow.
pub fn attention_graph<S: Scalar>(
    tape: &mut Tape<S>,
    x: Var,
    mask: &[bool],
    len: usize,
    w: AttentionVars,
) -> Result<Var, TensorError> {
    let (rows, _) = tape.value(x).dims2()?;
    if len == 0 || rows % len != 0 || mask.len() != rows {
        return Err(TensorError::ShapeMismatch {
            op: "attention encoder",
            left: vec![rows],
            right: vec![mask.len(), len],
        });
    }
    let b = rows / len;
    let pos_ids: Vec<usize> = (0..rows)
        .map(|r| if mask[r] { r % len + 1 } else { 0 })
        .collect();
    let pos = tape.gather(w.positions, &pos_ids, true)?;
    let xp = tape.add(x, pos)?;
    let last: Vec<usize> = (0..b).map(|s| s * len + len - 1).collect();
    let x_last = tape.gather(xp, &last, false)?;
    let q = tape.matmul(x_last, w.w_q)?;
    let k = tape.matmul(xp, w.w_k)?;
    let v = tape.matmul(xp, w.w_v)?;
    let att = tape.attention(q, k, v, mask)?;
    let a = tape.add(x_last, att)?;
    let f1 = tape.matmul(a, w.w_1)?;
    let f1 = tape.add_bias(f1, w.b_1)?;
    let f1 = tape.relu(f1)?;
    let f2 = tape.matmul(f1, w.w_2)?;
    let f2 = tape.add_bias(f2, w.b_2)?;
    tape.add(a, f2)
}

/// `x·W + b` for `x: B×D`, `W: D×D`, `b: D`.
#[derive(Clone, Copy, Debug)]
pub struct AffineVars {
    pub w: Var,
    pub b: Var,
}

pub fn affine_graph<S: Scalar>(tape: &mut Tape<S>, x: Var, w: AffineVars) -> Result<Var, TensorError> {
    let y = tape.matmul(x, w.w)?;
    tape.add_bias(y, w.b)
}

/// Three dense layers with rectifier hidden activations and a sigmoid
/// output; returns `B×1` probabilities.
pub fn tower_graph<S: Scalar>(tape: &mut Tape<S>, input: Var, layers: &[AffineVars; 3]) -> Result<Var, TensorError> {
    let mut h = input;
    for (i, layer) in layers.iter().enumerate() {
        h = affine_graph(tape, h, *layer)?;
        if i < 2 {
            h = tape.relu(h)?;
        }
    }
    tape.sigmoid(h)
}

/// Concrete GRU weights for [`gru_encode`].
#[derive(Clone, Debug, PartialEq)]
pub struct GruWeights<S> {
    pub w_z: Tensor<S>,
    pub w_r: Tensor<S>,
    pub w_h: Tensor<S>,
}

/// Encodes one `T×D` sequence with a GRU from `H_0 = 0`; returns `H_T`.
pub fn gru_encode<S: Scalar>(e: &Tensor<S>, w: &GruWeights<S>) -> Result<Tensor<S>, TensorError> {
    let (t, d) = e.dims2()?;
    let mut tape = Tape::new();
    let steps: Vec<Var> = (0..t)
        .map(|i| Tensor::matrix(1, d, e.row(i).to_vec()).map(|row| tape.leaf(row)))
        .collect::<Result<_, _>>()?;
    let vars = GruVars {
        w_z: tape.leaf(w.w_z.clone()),
        w_r: tape.leaf(w.w_r.clone()),
        w_h: tape.leaf(w.w_h.clone()),
    };
    let h = gru_graph(&mut tape, &steps, vars)?;
    Tensor::vector(tape.value(h).data().to_vec())
}

/// Concrete attention-encoder weights for [`attention_encode`].
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionWeights<S> {
    pub positions: Tensor<S>,
    pub w_q: Tensor<S>,
    pub w_k: Tensor<S>,
    pub w_v: Tensor<S>,
    pub w_1: Tensor<S>,
    pub b_1: Tensor<S>,
    pub w_2: Tensor<S>,
    pub b_2: Tensor<S>,
}

/// Encodes one `T×D` sequence; `mask[t]` is false at pad positions.
pub fn attention_encode<S: Scalar>(
    e: &Tensor<S>,
    mask: &[bool],
    w: &AttentionWeights<S>,
) -> Result<Tensor<S>, TensorError> {
    let (t, _) = e.dims2()?;
    let mut tape = Tape::new();
    let x = tape.leaf(e.clone());
    let leaf = |tape: &mut Tape<S>, t: &Tensor<S>| tape.leaf(t.clone());
    let vars = AttentionVars {
        positions: leaf(&mut tape, &w.positions),
        w_q: leaf(&mut tape, &w.w_q),
        w_k: leaf(&mut tape, &w.w_k),
        w_v: leaf(&mut tape, &w.w_v),
        w_1: leaf(&mut tape, &w.w_1),
        b_1: leaf(&mut tape, &w.b_1),
        w_2: leaf(&mut tape, &w.w_2),
        b_2: leaf(&mut tape, &w.b_2),
    };
    let h = attention_graph(&mut tape, x, mask, t, vars)?;
    Tensor::vector(tape.value(h).data().to_vec())
}

/// `h·W + b` for one vector `h`.
pub fn transform<S: Scalar>(h: &Tensor<S>, w: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>, TensorError> {
    let mut tape = Tape::new();
    let (_, d) = h.dims2()?;
    let x = tape.leaf(Tensor::matrix(1, d, h.data().to_vec())?);
    let vars = AffineVars {
        w: tape.leaf(w.clone()),
        b: tape.leaf(b.clone()),
    };
    let y = affine_graph(&mut tape, x, vars)?;
    Tensor::vector(tape.value(y).data().to_vec())
}
