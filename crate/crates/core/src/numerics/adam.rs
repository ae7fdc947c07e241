use indexmap::IndexMap;

use super::{NumericsError, ParamSet, Scalar};

/// Adam with classic (coupled) L2 weight decay: the decay term is added to
/// the gradient before the moment updates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    step_count: u64,
    first: IndexMap<String, Vec<f64>>,
    second: IndexMap<String, Vec<f64>>,
}

impl AdamState {
    pub fn new(learning_rate: f64) -> Self {
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-4,
            step_count: 0,
            first: IndexMap::new(),
            second: IndexMap::new(),
        }
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update using the gradients accumulated in `params`.
    pub fn step<T: Scalar>(&mut self, params: &mut ParamSet<T>) -> Result<(), NumericsError> {
        if params.is_empty() || !params.has_grads() {
            return Err(NumericsError::State("adam step without accumulated gradients".into()));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        for index in 0..params.len() {
            let (name, value, grad) = params.value_and_grad_mut(index);
            let n = value.len();
            let m = self.first.entry(name.to_string()).or_insert_with(|| vec![0.0; n]);
            let v = self.second.entry(name.to_string()).or_insert_with(|| vec![0.0; n]);
            if m.len() != n {
                return Err(NumericsError::State(format!("moment shape changed for {name}")));
            }
            for (i, w) in value.data_mut().iter_mut().enumerate() {
                let wf = w.as_f64();
                let g = grad.data()[i].as_f64() + self.weight_decay * wf;
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                *w = T::of(wf - self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon));
            }
        }
        Ok(())
    }
}
