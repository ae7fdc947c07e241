use indexmap::IndexMap;
use rand::Rng;

use super::{NumericsError, Scalar, Tensor};

/// Gradients produced by one backward pass, keyed by parameter name.
pub type Gradients<T> = IndexMap<String, Tensor<T>>;

/// Named trainable tensors with same-shaped gradient accumulators.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T = f32> {
    values: IndexMap<String, Tensor<T>>,
    grads: IndexMap<String, Tensor<T>>,
    has_grads: bool,
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        ParamSet { values: IndexMap::new(), grads: IndexMap::new(), has_grads: false }
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<(), NumericsError> {
        let name = name.into();
        if self.values.contains_key(&name) {
            return Err(NumericsError::Parameter(format!("duplicate parameter name {name}")));
        }
        self.grads.insert(name.clone(), Tensor::zeros(value.shape()));
        self.values.insert(name, value);
        Ok(())
    }

    /// Glorot-uniform weights: `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
    pub fn insert_glorot<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Result<(), NumericsError> {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| T::of(rng.gen_range(-a..a))).collect();
        self.insert(name, Tensor::new(shape.to_vec(), data)?)
    }

    pub fn insert_zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> Result<(), NumericsError> {
        self.insert(name, Tensor::zeros(shape))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.values.get(name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor<T>, NumericsError> {
        self.values.get(name).ok_or_else(|| NumericsError::Parameter(format!("missing parameter {name}")))
    }

    /// Replaces a parameter's value; the shape must not change.
    pub fn set(&mut self, name: &str, value: Tensor<T>) -> Result<(), NumericsError> {
        let slot = self.values.get_mut(name).ok_or_else(|| NumericsError::Parameter(format!("missing parameter {name}")))?;
        if slot.shape() != value.shape() {
            return Err(NumericsError::shape("set", format!("{name}: {:?} vs {:?}", slot.shape(), value.shape())));
        }
        *slot = value;
        Ok(())
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor<T>> {
        self.grads.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_elements(&self) -> usize {
        self.values.values().map(Tensor::len).sum()
    }

    pub fn has_grads(&self) -> bool {
        self.has_grads
    }

    pub fn zero_grads(&mut self) {
        for g in self.grads.values_mut() {
            g.data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
        self.has_grads = false;
    }

    /// `grad[name] += scale * grads[name]` for every name present in `grads`.
    /// Parameters absent from `grads` keep their accumulated value.
    pub fn accumulate(&mut self, grads: &Gradients<T>, scale: T) -> Result<(), NumericsError> {
        for (name, g) in grads {
            let acc = self.grads.get_mut(name).ok_or_else(|| NumericsError::Parameter(format!("gradient for unknown parameter {name}")))?;
            if acc.shape() != g.shape() {
                return Err(NumericsError::shape("accumulate", format!("{name}: {:?} vs {:?}", acc.shape(), g.shape())));
            }
            for (a, &v) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += scale * v;
            }
        }
        self.has_grads = true;
        Ok(())
    }

    pub(crate) fn value_and_grad_mut(&mut self, index: usize) -> (&str, &mut Tensor<T>, &Tensor<T>) {
        let (name, value) = self.values.get_index_mut(index).expect("index in range");
        let grad = &self.grads[index];
        (name.as_str(), value, grad)
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            values: self.values.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
            grads: self.grads.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
            has_grads: self.has_grads,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut p = ParamSet::<f32>::new();
        p.insert_zeros("w", &[2]).unwrap();
        assert!(p.insert_zeros("w", &[3]).is_err());
        assert_eq!(p.grad("w").unwrap().shape(), &[2]);
    }

    #[test]
    fn accumulate_checks_shape() {
        let mut p = ParamSet::<f64>::new();
        p.insert_zeros("w", &[2]).unwrap();
        let mut g = Gradients::new();
        g.insert("w".to_string(), Tensor::vector(vec![1.0, 2.0]).unwrap());
        p.accumulate(&g, 0.5).unwrap();
        p.accumulate(&g, 0.5).unwrap();
        assert_eq!(p.grad("w").unwrap().data(), &[1.0, 2.0]);
        g.insert("w".to_string(), Tensor::vector(vec![1.0]).unwrap());
        assert!(p.accumulate(&g, 1.0).is_err());
    }
}
