use super::params::ParameterSet;
use crate::scalar::Scalar;

/// Outcome of comparing an analytic gradient to central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub checked: usize,
}

/// Compares `analytic` against `(f(theta + eps) - f(theta - eps)) / 2 eps` for
/// every parameter. The relative error uses `max(|a|, |n|, floor)` as the
/// denominator so entries whose gradient is numerically zero do not blow up.
pub fn finite_difference_check<T: Scalar, F>(
    params: &ParameterSet<T>,
    analytic: &ParameterSet<T>,
    eps: f64,
    floor: f64,
    mut loss: F,
) -> GradCheck
where
    F: FnMut(&ParameterSet<T>) -> f64,
{
    let analytic = analytic.flat();
    let mut probe = params.clone();
    let mut worst = (0.0f64, 0usize);
    for (i, a) in analytic.iter().enumerate() {
        let original = *probe.flat_mut(i).expect("index in range");
        *probe.flat_mut(i).expect("index in range") = original + T::lit(eps);
        let up = loss(&probe);
        *probe.flat_mut(i).expect("index in range") = original - T::lit(eps);
        let down = loss(&probe);
        *probe.flat_mut(i).expect("index in range") = original;
        let numeric = (up - down) / (2.0 * eps);
        let a = a.to_f64_lossy();
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        if err > worst.0 {
            worst = (err, i);
        }
    }
    GradCheck {
        max_relative_error: worst.0,
        worst_index: worst.1,
        checked: analytic.len(),
    }
}
