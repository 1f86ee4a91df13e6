use super::error::TensorError;
use super::scalar::Scalar;
use super::tape::{Gradients, Tape, Var};
use super::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named learnable tensor with its gradient slot.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<S> {
    pub name: String,
    pub value: Tensor<S>,
    pub grad: Vec<S>,
}

/// Ordered collection of learnable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<S> {
    params: Vec<Parameter<S>>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<S>) -> ParamId {
        let grad = vec![S::zero(); value.len()];
        self.params.push(Parameter {
            name: name.into(),
            value,
            grad,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<S>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<S>> {
        self.params.iter_mut()
    }

    pub fn get(&self, id: ParamId) -> &Parameter<S> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<S> {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<S> {
        &self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &[S] {
        &self.params[id.0].grad
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = S::zero());
        }
    }

    /// Records every parameter on `tape` as a leaf.
    pub fn bind(&self, tape: &mut Tape<S>) -> Binding {
        Binding(self.params.iter().map(|p| tape.leaf(p.value.clone())).collect())
    }

    /// Adds the gradients of bound leaves into the gradient slots.
    pub fn accumulate(&mut self, binding: &Binding, grads: &Gradients<S>) {
        for (p, &var) in self.params.iter_mut().zip(&binding.0) {
            if let Some(g) = grads.get(var) {
                p.grad.iter_mut().zip(g).for_each(|(o, &x)| *o += x);
            }
        }
    }

    /// Overwrites values from another store with identical layout.
    pub fn copy_values_from(&mut self, other: &ParamStore<S>) -> Result<(), TensorError> {
        for (p, q) in self.params.iter_mut().zip(&other.params) {
            if p.value.shape() != q.value.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "copy_values_from",
                    left: p.value.shape().to_vec(),
                    right: q.value.shape().to_vec(),
                });
            }
            p.value = q.value.clone();
        }
        Ok(())
    }
}

/// Parameter-to-tape mapping produced by [`ParamStore::bind`].
#[derive(Clone, Debug)]
pub struct Binding(Vec<Var>);

impl Binding {
    pub fn var(&self, id: ParamId) -> Var {
        self.0[id.0]
    }
}
