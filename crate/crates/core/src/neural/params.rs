use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A named, shaped array of parameters stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn xavier<R: Rng + ?Sized>(
        name: impl Into<String>,
        fan_out: usize,
        fan_in: usize,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_out * fan_in)
            .map(|_| T::lit(rng.random_range(-limit..=limit)))
            .collect();
        Self {
            name: name.into(),
            shape: vec![fan_out, fan_in],
            data,
        }
    }
}

/// Ordered collection of tensors; gradients use the same type and layout.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterSet<T> {
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> ParameterSet<T> {
    pub fn new(tensors: Vec<Tensor<T>>) -> Self {
        Self { tensors }
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensor(&self, i: usize) -> &Tensor<T> {
        &self.tensors[i]
    }

    pub fn data(&self, i: usize) -> &[T] {
        &self.tensors[i].data
    }

    pub fn data_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.tensors[i].data
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.name.clone(), &t.shape))
                .collect(),
        }
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.shape == b.shape)
    }

    fn check_layout(&self, other: &Self) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch("parameter sets differ in layout".into()))
        }
    }

    pub fn flat(&self) -> Vec<T> {
        self.tensors.iter().flat_map(|t| t.data.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} parameters",
                values.len(),
                self.param_count()
            )));
        }
        let mut rest = values;
        for t in &mut self.tensors {
            let (head, tail) = rest.split_at(t.data.len());
            t.data.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    /// Read-write access to the `index`-th scalar of the flat view.
    pub fn flat_mut(&mut self, mut index: usize) -> Option<&mut T> {
        for t in &mut self.tensors {
            if index < t.data.len() {
                return t.data.get_mut(index);
            }
            index -= t.data.len();
        }
        None
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Self, scale: T) -> Result<()> {
        self.check_layout(other)?;
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += scale * *y;
            }
        }
        Ok(())
    }

    pub fn fill_zero(&mut self) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|x| *x = T::zero());
        }
    }

    /// Plain SGD: `theta -= lr * grad`.
    pub fn sgd_step(&mut self, grads: &Self, lr: T) -> Result<()> {
        self.add_scaled(grads, -lr)
    }

    pub fn copy_from(&mut self, other: &Self) -> Result<()> {
        self.check_layout(other)?;
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.data.copy_from_slice(&b.data);
        }
        Ok(())
    }

    pub fn max_abs(&self) -> T {
        self.tensors
            .iter()
            .flat_map(|t| t.data.iter())
            .fold(T::zero(), |m, x| m.max(x.abs()))
    }
}

/// Elementwise mean of parameter sets sharing one layout.
pub fn average_parameters<T: Scalar>(sets: &[&ParameterSet<T>]) -> Result<ParameterSet<T>> {
    let first = sets
        .first()
        .ok_or_else(|| Error::InvalidParameter("nothing to average".into()))?;
    let mut acc = first.zeros_like();
    for s in sets {
        acc.add_scaled(s, T::one())?;
    }
    let n = T::lit(sets.len() as f64);
    for t in &mut acc.tensors {
        t.data.iter_mut().for_each(|x| *x /= n);
    }
    Ok(acc)
}
