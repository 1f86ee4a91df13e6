use super::error::TensorError;
use super::params::ParamStore;
use super::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<(), TensorError> {
        let bad = |what: &str| Err(TensorError::InvalidHyperparameter(what.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        Ok(())
    }
}

/// First/second moment buffers and step counter for a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<S> {
    pub config: AdamConfig,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
    t: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(config: AdamConfig, store: &ParamStore<S>) -> Result<Self, TensorError> {
        config.validate()?;
        let zeros = || {
            store
                .iter()
                .map(|p| vec![S::zero(); p.value.len()])
                .collect::<Vec<_>>()
        };
        Ok(Self {
            config,
            m: zeros(),
            v: zeros(),
            t: 0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update from the store's gradient slots.
    ///
    /// All gradients are validated before any parameter moves, so a
    /// non-finite gradient leaves both the store and the state untouched.
    pub fn step(&mut self, store: &mut ParamStore<S>) -> Result<(), TensorError> {
        if store.len() != self.m.len() {
            return Err(TensorError::StateMismatch(format!(
                "{} parameters vs {} moment buffers",
                store.len(),
                self.m.len()
            )));
        }
        for (p, m) in store.iter().zip(&self.m) {
            if p.grad.len() != m.len() || p.value.len() != m.len() {
                return Err(TensorError::StateMismatch(p.name.clone()));
            }
            if p.grad.iter().any(|g| !g.is_finite()) {
                return Err(TensorError::NonFiniteGradient(p.name.clone()));
            }
        }
        self.t += 1;
        let c = self.config;
        let (b1, b2) = (S::lit(c.beta1), S::lit(c.beta2));
        let t = i32::try_from(self.t).unwrap_or(i32::MAX);
        let corr1 = S::one() - b1.powi(t);
        let corr2 = S::one() - b2.powi(t);
        let (lr, eps) = (S::lit(c.lr), S::lit(c.epsilon));
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let values = p.value.data_mut();
            for i in 0..values.len() {
                let g = p.grad[i];
                m[i] = b1 * m[i] + (S::one() - b1) * g;
                v[i] = b2 * v[i] + (S::one() - b2) * g * g;
                let m_hat = m[i] / corr1;
                let v_hat = v[i] / corr2;
                values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Free-function form: one Adam step on `store` using its gradient slots.
pub fn adam_step<S: Scalar>(store: &mut ParamStore<S>, state: &mut AdamState<S>) -> Result<(), TensorError> {
    state.step(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Tensor;

    fn single(value: f64, grad: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::vector(vec![value]).unwrap());
        s.get_mut(id).grad[0] = grad;
        s
    }

    #[test]
    fn zero_gradient_leaves_params_and_counts_step() {
        let mut s = single(0.25, 0.0);
        let mut st = AdamState::new(AdamConfig::default(), &s).unwrap();
        st.step(&mut s).unwrap();
        assert_eq!(s.iter().next().unwrap().value.data()[0], 0.25);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_lr_over_one_plus_eps() {
        let mut s = single(0.0, 1.0);
        let mut st = AdamState::new(AdamConfig::default(), &s).unwrap();
        st.step(&mut s).unwrap();
        let expected = -0.001 / (1.0 + 1e-8);
        let got = s.iter().next().unwrap().value.data()[0];
        assert!((got - expected).abs() < 1e-15, "{got}");
        assert!((got + 0.00099999999).abs() < 1e-15);
    }

    #[test]
    fn first_step_is_scale_free() {
        for g in [1e-3, 1.0, 1e3] {
            let mut s = single(0.0, g);
            let mut st = AdamState::new(AdamConfig::default(), &s).unwrap();
            st.step(&mut s).unwrap();
            let delta = s.iter().next().unwrap().value.data()[0].abs();
            assert!((delta - 1e-3).abs() < 1e-7, "grad {g}: {delta}");
        }
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut s = single(0.0, f64::NAN);
        let mut st = AdamState::new(AdamConfig::default(), &s).unwrap();
        assert_eq!(
            st.step(&mut s),
            Err(TensorError::NonFiniteGradient("w".into()))
        );
        assert_eq!(st.step_count(), 0);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let s = single(0.0, 0.0);
        let cfg = AdamConfig {
            lr: 0.0,
            ..AdamConfig::default()
        };
        assert!(AdamState::new(cfg, &s).is_err());
        let cfg = AdamConfig {
            beta1: 1.0,
            ..AdamConfig::default()
        };
        assert!(AdamState::new(cfg, &s).is_err());
    }
}
