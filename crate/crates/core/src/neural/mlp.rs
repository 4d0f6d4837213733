use rand::Rng;

use super::params::{ParameterSet, Tensor};
use super::{affine, matvec_t_acc, outer_acc};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Fully connected network: ReLU on hidden layers, linear output.
///
/// Parameters are stored as `[W0, b0, W1, b1, ...]` with `Wi` of shape
/// `sizes[i + 1] x sizes[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    sizes: Vec<usize>,
    pub params: ParameterSet<T>,
}

/// Layer inputs recorded by `forward`; `inputs[i]` feeds layer `i`.
#[derive(Debug, Clone)]
pub struct MlpCache<T> {
    inputs: Vec<Vec<T>>,
}

impl<T: Scalar> Mlp<T> {
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        Self::check_sizes(sizes)?;
        let mut tensors = Vec::new();
        for (i, pair) in sizes.windows(2).enumerate() {
            tensors.push(Tensor::xavier(format!("w{i}"), pair[1], pair[0], rng));
            tensors.push(Tensor::zeros(format!("b{i}"), &[pair[1]]));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params: ParameterSet::new(tensors),
        })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        Self::check_sizes(sizes)?;
        let mut tensors = Vec::new();
        for (i, pair) in sizes.windows(2).enumerate() {
            tensors.push(Tensor::zeros(format!("w{i}"), &[pair[1], pair[0]]));
            tensors.push(Tensor::zeros(format!("b{i}"), &[pair[1]]));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params: ParameterSet::new(tensors),
        })
    }

    fn check_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidParameter(format!("bad layer sizes {sizes:?}")));
        }
        Ok(())
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().unwrap_or(&0)
    }

    fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn forward(&self, x: &[T]) -> Result<(Vec<T>, MlpCache<T>)> {
        if x.len() != self.input_size() {
            return Err(Error::ShapeMismatch(format!(
                "input of length {} for a network expecting {}",
                x.len(),
                self.input_size()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers());
        let mut h = x.to_vec();
        for layer in 0..self.layers() {
            let mut y = affine(self.params.data(2 * layer), self.params.data(2 * layer + 1), &h);
            if layer + 1 < self.layers() {
                y.iter_mut().for_each(|v| *v = v.max(T::zero()));
            }
            inputs.push(std::mem::replace(&mut h, y));
        }
        Ok((h, MlpCache { inputs }))
    }

    pub fn predict(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.forward(x)?.0)
    }

    /// Adds the parameter gradient of `upstream . output` to `grads`.
    pub fn backward_into(
        &self,
        cache: &MlpCache<T>,
        upstream: &[T],
        grads: &mut ParameterSet<T>,
    ) -> Result<()> {
        if cache.inputs.len() != self.layers() || upstream.len() != self.output_size() {
            return Err(Error::ShapeMismatch("cache or upstream gradient does not match".into()));
        }
        if !grads.same_layout(&self.params) {
            return Err(Error::ShapeMismatch("gradient buffer layout".into()));
        }
        let mut delta = upstream.to_vec();
        for layer in (0..self.layers()).rev() {
            let input = &cache.inputs[layer];
            outer_acc(&delta, input, grads.data_mut(2 * layer));
            for (g, d) in grads.data_mut(2 * layer + 1).iter_mut().zip(&delta) {
                *g += *d;
            }
            if layer == 0 {
                break;
            }
            let mut prev = vec![T::zero(); input.len()];
            matvec_t_acc(self.params.data(2 * layer), &delta, &mut prev);
            // input to this layer is the ReLU output of the previous one
            for (p, a) in prev.iter_mut().zip(input) {
                if *a <= T::zero() {
                    *p = T::zero();
                }
            }
            delta = prev;
        }
        Ok(())
    }

    pub fn backward(&self, cache: &MlpCache<T>, upstream: &[T]) -> Result<ParameterSet<T>> {
        let mut grads = self.params.zeros_like();
        self.backward_into(cache, upstream, &mut grads)?;
        Ok(grads)
    }
}
