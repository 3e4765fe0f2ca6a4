//! Scalar nonlinearities shared by the tape ops and the entropy coder, so that
//! training-time and coding-time parameter evaluation agree bit-for-bit.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn softsign(x: f64) -> f64 {
    x / (1.0 + x.abs())
}

/// Derivative of softsign; the two-sided limit 1 is used at 0.
pub fn softsign_grad(x: f64) -> f64 {
    let d = 1.0 + x.abs();
    1.0 / (d * d)
}

/// Standard normal CDF via `erfc`, accurate in both tails.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Round half away from zero.
pub fn round_half_away(x: f64) -> f64 {
    x.round()
}
