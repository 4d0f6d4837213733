use crate::scalar::Scalar;

pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|l| (*l - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = logits.iter().map(|l| (*l - max).exp()).sum::<T>().ln() + max;
    logits.iter().map(|l| *l - lse).collect()
}

/// Cross-entropy `-log p(target)` and its gradient w.r.t. the logits.
pub fn cross_entropy<T: Scalar>(logits: &[T], target: usize) -> (T, Vec<T>) {
    let logp = log_softmax(logits);
    let mut grad: Vec<T> = logp.iter().map(|l| l.exp()).collect();
    grad[target] -= T::one();
    (-logp[target], grad)
}

/// Mean squared error and its gradient w.r.t. `prediction`.
pub fn mse<T: Scalar>(prediction: &[T], target: &[T]) -> (T, Vec<T>) {
    let n = T::lit(prediction.len() as f64);
    let mut loss = T::zero();
    let grad = prediction
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = *p - *t;
            loss += d * d;
            T::lit(2.0) * d / n
        })
        .collect();
    (loss / n, grad)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_cross_entropy() {
        let (loss, grad) = cross_entropy(&[0.0f64; 8], 3);
        assert!((loss - 8f64.ln()).abs() < 1e-12);
        assert!((grad[3] + 0.875).abs() < 1e-12);
    }

    #[test]
    fn certain_prediction_has_zero_gradient() {
        let (loss, grad) = cross_entropy(&[800.0f64, 0.0, 0.0], 0);
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.5f64, 0.5, 0.1]), 0);
        assert_eq!(argmax(&[0.1f64, 0.7, 0.7]), 1);
    }

    #[test]
    fn mse_values() {
        let (l, g) = mse(&[1.0f64, 3.0], &[0.0, 3.0]);
        assert_eq!(l, 0.5);
        assert_eq!(g, vec![1.0, 0.0]);
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one(logits in proptest::collection::vec(-50f64..50.0, 1..16)) {
            let s: f64 = softmax(&logits).iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-12);
        }
    }
}
