//! Log-space standard normal CDF.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// `log Phi(z)`, accurate in both tails.
pub fn log_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z > 0.0 {
        // Phi(z) = 1 - Q(z) with Q small.
        (-0.5 * libm::erfc(z * FRAC_1_SQRT_2)).ln_1p()
    } else if z > -30.0 {
        (0.5 * libm::erfc(-z * FRAC_1_SQRT_2)).ln()
    } else {
        // Mills-ratio expansion; truncation error below 1e-10 here.
        let z2 = z * z;
        let series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
        -0.5 * z2 - (-z).ln() - 0.5 * (2.0 * PI).ln() + series.ln()
    }
}

/// `log(Phi(b) - Phi(a))` for `a <= b`.
pub fn log_cdf_diff(a: f64, b: f64) -> f64 {
    if !(a < b) {
        return f64::NEG_INFINITY;
    }
    if a >= 0.0 {
        // Both in the upper tail: Q(a) - Q(b).
        log_sub_exp(log_cdf(-a), log_cdf(-b))
    } else if b <= 0.0 {
        log_sub_exp(log_cdf(b), log_cdf(a))
    } else {
        // Straddles zero: 1 - Phi(a) - Q(b), both terms at most 1/2.
        (-(log_cdf(a).exp() + log_cdf(-b).exp())).ln_1p()
    }
}

/// `log(exp(x) - exp(y))` for `x >= y`.
pub fn log_sub_exp(x: f64, y: f64) -> f64 {
    if y == f64::NEG_INFINITY {
        return x;
    }
    if !(x > y) {
        return f64::NEG_INFINITY;
    }
    x + (-(y - x).exp()).ln_1p()
}

/// `log(sum(exp(xs)))`, `-inf` for an empty or all-`-inf` input.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    max + xs.into_iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
