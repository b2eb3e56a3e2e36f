//! Central finite-difference gradients, used to check the analytic backward
//! rules. Only forward evaluations are involved.

use crate::{Real, Tensor};

/// `∂f/∂x` by central differences with step `h` at every coordinate.
pub fn numeric_gradient<S: Real>(x: &Tensor<S>, h: S, mut f: impl FnMut(&Tensor<S>) -> S) -> Tensor<S> {
    let mut probe = x.clone();
    let two_h = h + h;
    let grad = (0..x.numel())
        .map(|i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + h;
            let up = f(&probe);
            probe.data_mut()[i] = orig - h;
            let down = f(&probe);
            probe.data_mut()[i] = orig;
            (up - down) / two_h
        })
        .collect();
    Tensor::new(x.shape(), grad).expect("same shape as input")
}

/// Largest elementwise `|a - n| / max(|a|, |n|, floor)`; the floor keeps
/// coordinates whose true gradient is ~0 from dominating.
pub fn max_relative_error<S: Real>(analytic: &Tensor<S>, numeric: &Tensor<S>, floor: f64) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| {
            let (a, n) = (a.as_f64(), n.as_f64());
            (a - n).abs() / a.abs().max(n.abs()).max(floor)
        })
        .fold(0.0, f64::max)
}
