//! Small dense networks with hand-written backward passes.

mod checkpoint;
mod gradcheck;
mod gru;
mod loss;
mod mlp;
mod params;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use gradcheck::{finite_difference_check, GradCheck};
pub use gru::{GruCache, GruClassifier};
pub use loss::{argmax, cross_entropy, log_softmax, mse, softmax};
pub use mlp::{Mlp, MlpCache};
pub use params::{average_parameters, ParameterSet, Tensor};

use crate::scalar::Scalar;

/// `y = W x + b` with `W` row-major `rows x cols`.
pub(crate) fn affine<T: Scalar>(w: &[T], b: &[T], x: &[T]) -> Vec<T> {
    let cols = x.len();
    b.iter()
        .zip(w.chunks_exact(cols))
        .map(|(bias, row)| *bias + dot(row, x))
        .collect()
}

/// `y += W x`.
pub(crate) fn matvec_acc<T: Scalar>(w: &[T], x: &[T], y: &mut [T]) {
    let cols = x.len();
    for (out, row) in y.iter_mut().zip(w.chunks_exact(cols)) {
        *out += dot(row, x);
    }
}

/// `dx += W^T dy`.
pub(crate) fn matvec_t_acc<T: Scalar>(w: &[T], dy: &[T], dx: &mut [T]) {
    let cols = dx.len();
    for (g, row) in dy.iter().zip(w.chunks_exact(cols)) {
        if *g == T::zero() {
            continue;
        }
        for (d, wv) in dx.iter_mut().zip(row) {
            *d += *g * *wv;
        }
    }
}

/// `dW += dy x^T`.
pub(crate) fn outer_acc<T: Scalar>(dy: &[T], x: &[T], dw: &mut [T]) {
    let cols = x.len();
    for (g, row) in dy.iter().zip(dw.chunks_exact_mut(cols)) {
        if *g == T::zero() {
            continue;
        }
        for (d, xv) in row.iter_mut().zip(x) {
            *d += *g * *xv;
        }
    }
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}
