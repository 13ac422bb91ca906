//! Special functions and small numerical helpers shared by the tests and the
//! sampler.

use statrs::function::{erf, gamma};

pub use statrs::function::gamma::ln_gamma;

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Lower tail `P(X <= x)` of a chi-square variable with `dof` degrees of freedom.
pub fn chi_square_cdf(x: f64, dof: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    gamma::gamma_lr(dof / 2.0, x / 2.0)
}

/// Upper tail `P(X > x)` of a chi-square variable with `dof` degrees of freedom.
pub fn chi_square_sf(x: f64, dof: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma::gamma_ur(dof / 2.0, x / 2.0)
}

/// Survival function of the limiting Kolmogorov distribution, `P(K > x)`.
///
/// Uses the alternating series for large arguments and the Jacobi theta form
/// for small ones, where the alternating series converges slowly.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.18 {
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let w = pi2 / (8.0 * x * x);
        let mut sum = 0.0;
        for j in 1..=12 {
            let odd = (2 * j - 1) as f64;
            sum += (-odd * odd * w).exp();
        }
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / x * sum;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        let mut sign = 1.0;
        for j in 1..=100 {
            let jf = j as f64;
            let term = (-2.0 * jf * jf * x * x).exp();
            sum += sign * term;
            if term < 1e-18 {
                break;
            }
            sign = -sign;
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

/// `log(sum(exp(xs)))` with max-shift; an empty or all `-inf` input gives `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Linear-interpolation sample quantile of already sorted data (`q` in `[0, 1]`).
pub(crate) fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}
