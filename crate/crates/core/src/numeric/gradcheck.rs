//! Central finite-difference gradient checks.
//!
//! The numeric side only ever evaluates forward values, so it stays
//! independent of the backward rules it is checking.

use super::error::TensorError;
use super::params::ParamStore;
use super::rng::SeededRng;
use super::tape::{OpKind, Tape, Var};
use super::tensor::Tensor;

/// Denominator floor for [`relative_error`]; gradients smaller than this are
/// compared in absolute terms.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, REL_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Tensor name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
}

impl GradCheckReport {
    fn new() -> Self {
        Self {
            checked: 0,
            max_rel_error: 0.0,
            worst: None,
        }
    }

    fn record(&mut self, name: &str, idx: usize, analytic: f64, numeric: f64) {
        self.checked += 1;
        let err = relative_error(analytic, numeric);
        if err > self.max_rel_error || self.worst.is_none() {
            self.max_rel_error = err.max(self.max_rel_error);
            self.worst = Some((name.to_string(), idx));
        }
    }
}

/// Checks the gradient slots of `store` against central differences of
/// `loss`, perturbing every entry of every parameter by `±h`.
pub fn check_store<F>(store: &mut ParamStore<f64>, h: f64, mut loss: F) -> GradCheckReport
where
    F: FnMut(&ParamStore<f64>) -> f64,
{
    let mut report = GradCheckReport::new();
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let n = store.value(id).len();
        for i in 0..n {
            let orig = store.value(id).data()[i];
            store.get_mut(id).value.data_mut()[i] = orig + h;
            let up = loss(store);
            store.get_mut(id).value.data_mut()[i] = orig - h;
            let down = loss(store);
            store.get_mut(id).value.data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let p = store.get(id);
            report.record(&p.name, i, p.grad[i], numeric);
        }
    }
    report
}

/// Checks an op graph built by `build` over leaf inputs. The graph must
/// reduce to a scalar.
pub fn check_graph<F>(
    inputs: &[Tensor<f64>],
    h: f64,
    fault: Option<OpKind>,
    build: F,
) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, TensorError>,
{
    let eval = |ins: &[Tensor<f64>]| -> Result<(Tape<f64>, Vec<Var>, Var), TensorError> {
        let mut tape = Tape::new();
        if let Some(kind) = fault {
            tape.inject_fault(kind);
        }
        let vars: Vec<Var> = ins.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = build(&mut tape, &vars)?;
        Ok((tape, vars, out))
    };
    let (tape, vars, out) = eval(inputs)?;
    let grads = tape.backward(out)?;
    let mut report = GradCheckReport::new();
    let mut work = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.get_or_zeros(*var, inputs[k].len());
        for i in 0..inputs[k].len() {
            let orig = work[k].data()[i];
            work[k].data_mut()[i] = orig + h;
            let (t, _, o) = eval(&work)?;
            let up = t.value(o).data()[0];
            work[k].data_mut()[i] = orig - h;
            let (t, _, o) = eval(&work)?;
            let down = t.value(o).data()[0];
            work[k].data_mut()[i] = orig;
            report.record(&format!("input{k}"), i, analytic[i], (up - down) / (2.0 * h));
        }
    }
    Ok(report)
}

/// Builds a scalar-valued graph over leaf inputs.
pub type GraphBuilder = fn(&mut Tape<f64>, &[Var]) -> Result<Var, TensorError>;

/// One per-op finite-difference case: the op under test applied to random
/// inputs and reduced to a scalar.
#[derive(Clone)]
pub struct OpCase {
    pub kind: OpKind,
    pub inputs: Vec<Tensor<f64>>,
    pub build: GraphBuilder,
}

impl OpCase {
    pub fn check(&self, h: f64, fault: Option<OpKind>) -> Result<GradCheckReport, TensorError> {
        check_graph(&self.inputs, h, fault, self.build)
    }
}

/// `Σ out ⊙ W` with a fixed pseudo-random `W`, so every output entry
/// carries a distinct upstream gradient.
fn weighted_sum(tape: &mut Tape<f64>, out: Var) -> Result<Var, TensorError> {
    let shape = tape.value(out).shape().to_vec();
    let mut rng = SeededRng::new(0x5eed);
    let w: Vec<f64> = (0..shape.iter().product()).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let w = tape.leaf(Tensor::new(shape, w)?);
    let prod = tape.mul(out, w)?;
    tape.sum(prod)
}

fn random(rng: &mut SeededRng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(lo, hi)).collect()).expect("valid shape")
}

/// Entries in `±[0.2, 1]`, away from the ReLU kink.
fn off_zero(rng: &mut SeededRng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.uniform(0.2, 1.0);
            if rng.unit() < 0.5 {
                -m
            } else {
                m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("valid shape")
}

/// One case per differentiable op kind.
pub fn op_cases(seed: u64) -> Vec<OpCase> {
    let mut rng = SeededRng::derive(seed, "op-cases", 0);
    let r = &mut rng;
    let case = |kind, inputs, build: GraphBuilder| OpCase { kind, inputs, build };
    vec![
        case(OpKind::Add, vec![random(r, &[2, 3], -1.0, 1.0), random(r, &[2, 3], -1.0, 1.0)], |t, v| {
            let o = t.add(v[0], v[1])?;
            weighted_sum(t, o)
        }),
        case(OpKind::Sub, vec![random(r, &[2, 3], -1.0, 1.0), random(r, &[2, 3], -1.0, 1.0)], |t, v| {
            let o = t.sub(v[0], v[1])?;
            weighted_sum(t, o)
        }),
        case(OpKind::Mul, vec![random(r, &[2, 3], -1.0, 1.0), random(r, &[2, 3], -1.0, 1.0)], |t, v| {
            let o = t.mul(v[0], v[1])?;
            t.sum(o)
        }),
        case(OpKind::Scale, vec![random(r, &[3, 2], -1.0, 1.0)], |t, v| {
            let o = t.scale(v[0], -1.7)?;
            weighted_sum(t, o)
        }),
        case(OpKind::Offset, vec![random(r, &[3, 2], -1.0, 1.0)], |t, v| {
            let o = t.one_minus(v[0])?;
            weighted_sum(t, o)
        }),
        case(OpKind::Sigmoid, vec![random(r, &[2, 4], -3.0, 3.0)], |t, v| {
            let o = t.sigmoid(v[0])?;
            weighted_sum(t, o)
        }),
        case(OpKind::Tanh, vec![random(r, &[2, 4], -2.0, 2.0)], |t, v| {
            let o = t.tanh(v[0])?;
            weighted_sum(t, o)
        }),
        case(OpKind::Relu, vec![off_zero(r, &[2, 4])], |t, v| {
            let o = t.relu(v[0])?;
            weighted_sum(t, o)
        }),
        case(OpKind::MatMul, vec![random(r, &[3, 4], -1.0, 1.0), random(r, &[4, 2], -1.0, 1.0)], |t, v| {
            let o = t.matmul(v[0], v[1])?;
            weighted_sum(t, o)
        }),
        case(OpKind::Transpose, vec![random(r, &[3, 2], -1.0, 1.0)], |t, v| {
            let o = t.transpose(v[0])?;
            weighted_sum(t, o)
        }),
        case(OpKind::Concat, vec![random(r, &[2, 3], -1.0, 1.0), random(r, &[2, 2], -1.0, 1.0)], |t, v| {
            let o = t.concat(v[0], v[1], 1)?;
            weighted_sum(t, o)
        }),
        case(OpKind::AddBias, vec![random(r, &[3, 2], -1.0, 1.0), random(r, &[2], -1.0, 1.0)], |t, v| {
            let o = t.add_bias(v[0], v[1])?;
            weighted_sum(t, o)
        }),
        case(OpKind::Gather, vec![random(r, &[4, 3], -1.0, 1.0)], |t, v| {
            let o = t.gather(v[0], &[2, 0, 3, 2, 1], true)?;
            weighted_sum(t, o)
        }),
        case(OpKind::SquaredL2, vec![random(r, &[2, 3], -1.0, 1.0), random(r, &[2, 3], -1.0, 1.0)], |t, v| {
            t.squared_l2(v[0], v[1])
        }),
        case(OpKind::SumSquares, vec![random(r, &[2, 3], -1.0, 1.0)], |t, v| t.sum_squares(v[0])),
        case(OpKind::Sum, vec![random(r, &[2, 3], -1.0, 1.0)], |t, v| t.sum(v[0])),
        case(OpKind::LogLoss, vec![random(r, &[4], 0.1, 0.9)], |t, v| t.logloss(v[0], &[1.0, 0.0, 0.0, 1.0])),
        case(
            OpKind::Attention,
            vec![random(r, &[2, 3], -1.0, 1.0), random(r, &[6, 3], -1.0, 1.0), random(r, &[6, 3], -1.0, 1.0)],
            |t, v| {
                let o = t.attention(v[0], v[1], v[2], &[false, true, true, true, false, true])?;
                weighted_sum(t, o)
            },
        ),
    ]
}
