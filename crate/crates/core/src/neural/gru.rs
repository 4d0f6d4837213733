use rand::Rng;

use super::params::{ParameterSet, Tensor};
use super::{affine, matvec_acc, matvec_t_acc, outer_acc, sigmoid};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const WZ: usize = 0;
const UZ: usize = 1;
const BZ: usize = 2;
const WR: usize = 3;
const UR: usize = 4;
const BR: usize = 5;
const WN: usize = 6;
const UN: usize = 7;
const BN: usize = 8;
const WO: usize = 9;
const BO: usize = 10;

/// GRU run over a window, followed by a dense layer producing class logits
/// from the last hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct GruClassifier<T> {
    input: usize,
    hidden: usize,
    classes: usize,
    pub params: ParameterSet<T>,
}

#[derive(Debug, Clone)]
struct Step<T> {
    x: Vec<T>,
    h_prev: Vec<T>,
    z: Vec<T>,
    r: Vec<T>,
    n: Vec<T>,
}

/// Per-step activations of one forward pass.
#[derive(Debug, Clone)]
pub struct GruCache<T> {
    steps: Vec<Step<T>>,
    last: Vec<T>,
}

impl<T: Scalar> GruClassifier<T> {
    fn layout(input: usize, hidden: usize, classes: usize) -> [(&'static str, Vec<usize>); 11] {
        [
            ("w_z", vec![hidden, input]),
            ("u_z", vec![hidden, hidden]),
            ("b_z", vec![hidden]),
            ("w_r", vec![hidden, input]),
            ("u_r", vec![hidden, hidden]),
            ("b_r", vec![hidden]),
            ("w_n", vec![hidden, input]),
            ("u_n", vec![hidden, hidden]),
            ("b_n", vec![hidden]),
            ("w_o", vec![classes, hidden]),
            ("b_o", vec![classes]),
        ]
    }

    fn check(input: usize, hidden: usize, classes: usize) -> Result<()> {
        if input == 0 || hidden == 0 || classes == 0 {
            return Err(Error::InvalidParameter("GRU sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn zeros(input: usize, hidden: usize, classes: usize) -> Result<Self> {
        Self::check(input, hidden, classes)?;
        let tensors = Self::layout(input, hidden, classes)
            .into_iter()
            .map(|(name, shape)| Tensor::zeros(name, &shape))
            .collect();
        Ok(Self {
            input,
            hidden,
            classes,
            params: ParameterSet::new(tensors),
        })
    }

    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, classes: usize, rng: &mut R) -> Result<Self> {
        Self::check(input, hidden, classes)?;
        let tensors = Self::layout(input, hidden, classes)
            .into_iter()
            .map(|(name, shape)| match shape[..] {
                [rows, cols] => Tensor::xavier(name, rows, cols, rng),
                _ => Tensor::zeros(name, &shape),
            })
            .collect();
        Ok(Self {
            input,
            hidden,
            classes,
            params: ParameterSet::new(tensors),
        })
    }

    pub fn input_size(&self) -> usize {
        self.input
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn forward(&self, sequence: &[Vec<T>]) -> Result<(Vec<T>, GruCache<T>)> {
        if sequence.is_empty() {
            return Err(Error::ShapeMismatch("empty input sequence".into()));
        }
        let p = &self.params;
        let mut h = vec![T::zero(); self.hidden];
        let mut steps = Vec::with_capacity(sequence.len());
        for x in sequence {
            if x.len() != self.input {
                return Err(Error::ShapeMismatch(format!(
                    "step input of length {} for GRU input {}",
                    x.len(),
                    self.input
                )));
            }
            let mut z = affine(p.data(WZ), p.data(BZ), x);
            matvec_acc(p.data(UZ), &h, &mut z);
            z.iter_mut().for_each(|v| *v = sigmoid(*v));
            let mut r = affine(p.data(WR), p.data(BR), x);
            matvec_acc(p.data(UR), &h, &mut r);
            r.iter_mut().for_each(|v| *v = sigmoid(*v));
            let rh: Vec<T> = r.iter().zip(&h).map(|(a, b)| *a * *b).collect();
            let mut n = affine(p.data(WN), p.data(BN), x);
            matvec_acc(p.data(UN), &rh, &mut n);
            n.iter_mut().for_each(|v| *v = v.tanh());
            let next: Vec<T> = (0..self.hidden)
                .map(|i| (T::one() - z[i]) * n[i] + z[i] * h[i])
                .collect();
            steps.push(Step {
                x: x.clone(),
                h_prev: std::mem::replace(&mut h, next),
                z,
                r,
                n,
            });
        }
        let logits = affine(p.data(WO), p.data(BO), &h);
        Ok((logits, GruCache { steps, last: h }))
    }

    /// Adds the gradient of `upstream . logits` (backpropagated through the
    /// whole window) to `grads`.
    pub fn backward_into(&self, cache: &GruCache<T>, upstream: &[T], grads: &mut ParameterSet<T>) -> Result<()> {
        if upstream.len() != self.classes || cache.last.len() != self.hidden {
            return Err(Error::ShapeMismatch("cache or upstream gradient does not match".into()));
        }
        if !grads.same_layout(&self.params) {
            return Err(Error::ShapeMismatch("gradient buffer layout".into()));
        }
        let p = &self.params;
        let hs = self.hidden;
        outer_acc(upstream, &cache.last, grads.data_mut(WO));
        for (g, u) in grads.data_mut(BO).iter_mut().zip(upstream) {
            *g += *u;
        }
        let mut dh = vec![T::zero(); hs];
        matvec_t_acc(p.data(WO), upstream, &mut dh);

        for step in cache.steps.iter().rev() {
            let mut dh_prev: Vec<T> = dh.iter().zip(&step.z).map(|(d, z)| *d * *z).collect();
            let mut da_n = vec![T::zero(); hs];
            let mut da_z = vec![T::zero(); hs];
            for i in 0..hs {
                let dn = dh[i] * (T::one() - step.z[i]);
                da_n[i] = dn * (T::one() - step.n[i] * step.n[i]);
                let dz = dh[i] * (step.h_prev[i] - step.n[i]);
                da_z[i] = dz * step.z[i] * (T::one() - step.z[i]);
            }
            let rh: Vec<T> = step.r.iter().zip(&step.h_prev).map(|(a, b)| *a * *b).collect();
            outer_acc(&da_n, &step.x, grads.data_mut(WN));
            outer_acc(&da_n, &rh, grads.data_mut(UN));
            add_into(grads.data_mut(BN), &da_n);
            let mut drh = vec![T::zero(); hs];
            matvec_t_acc(p.data(UN), &da_n, &mut drh);
            let mut da_r = vec![T::zero(); hs];
            for i in 0..hs {
                dh_prev[i] += drh[i] * step.r[i];
                let dr = drh[i] * step.h_prev[i];
                da_r[i] = dr * step.r[i] * (T::one() - step.r[i]);
            }
            outer_acc(&da_r, &step.x, grads.data_mut(WR));
            outer_acc(&da_r, &step.h_prev, grads.data_mut(UR));
            add_into(grads.data_mut(BR), &da_r);
            matvec_t_acc(p.data(UR), &da_r, &mut dh_prev);
            outer_acc(&da_z, &step.x, grads.data_mut(WZ));
            outer_acc(&da_z, &step.h_prev, grads.data_mut(UZ));
            add_into(grads.data_mut(BZ), &da_z);
            matvec_t_acc(p.data(UZ), &da_z, &mut dh_prev);
            dh = dh_prev;
        }
        Ok(())
    }

    pub fn backward(&self, cache: &GruCache<T>, upstream: &[T]) -> Result<ParameterSet<T>> {
        let mut grads = self.params.zeros_like();
        self.backward_into(cache, upstream, &mut grads)?;
        Ok(grads)
    }
}

fn add_into<T: Scalar>(acc: &mut [T], v: &[T]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += *b;
    }
}
