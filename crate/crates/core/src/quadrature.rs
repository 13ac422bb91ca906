//! Adaptive Gauss–Kronrod (7, 15) quadrature.
//!
//! Intervals are bisected greedily, largest error estimate first, until the
//! summed estimate falls under `max(abs_tol, rel_tol * |I|)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerances and work limit for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            abs_tol: 0.0,
            rel_tol: 1e-12,
            max_intervals: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error: f64,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (i, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += w * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    Segment {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Integrates `f` over the finite interval `[a, b]`.
///
/// The integrand is never evaluated at the endpoints, so integrable endpoint
/// singularities are tolerated (at the cost of more subdivisions).
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, cfg: QuadConfig) -> Result<QuadResult> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Numerical(format!(
            "quadrature bounds must be finite, got [{a}, {b}]"
        )));
    }
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            abs_error: 0.0,
            intervals: 0,
        });
    }
    let first = kronrod(&f, a, b);
    if !first.value.is_finite() {
        return Err(Error::Numerical(format!("non-finite integrand on [{a}, {b}]")));
    }
    let mut heap = BinaryHeap::new();
    let mut total = first.value;
    let mut error = first.error;
    heap.push(first);
    while error > cfg.abs_tol.max(cfg.rel_tol * total.abs()) {
        if heap.len() >= cfg.max_intervals {
            return Err(Error::Numerical(format!(
                "quadrature on [{a}, {b}] did not converge: estimate {total:e}, error {error:e} after {} intervals",
                heap.len()
            )));
        }
        let worst = heap.pop().expect("heap is never empty here");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval cannot be split further in floating point.
            heap.push(Segment { error: 0.0, ..worst });
            error = heap.iter().map(|s| s.error).sum();
            if error == 0.0 {
                break;
            }
            continue;
        }
        let left = kronrod(&f, worst.a, mid);
        let right = kronrod(&f, mid, worst.b);
        total += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        if !total.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite integrand near [{}, {}]",
                worst.a, worst.b
            )));
        }
        heap.push(left);
        heap.push(right);
    }
    // Re-sum to shed the drift of the running updates.
    let value = heap.iter().map(|s| s.value).sum();
    let abs_error = heap.iter().map(|s| s.error).sum();
    Ok(QuadResult {
        value,
        abs_error,
        intervals: heap.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        let r = integrate(|x| x.powi(5) - 3.0 * x * x, -1.0, 2.0, QuadConfig::default()).unwrap();
        let exact = (64.0 - 1.0) / 6.0 - (8.0 + 1.0);
        assert!((r.value - exact).abs() < 1e-13);
    }

    #[test]
    fn endpoint_singularity_converges() {
        let r = integrate(
            |x: f64| x.powf(-0.5),
            0.0,
            1.0,
            QuadConfig {
                rel_tol: 1e-10,
                ..QuadConfig::default()
            },
        )
        .unwrap();
        assert!((r.value - 2.0).abs() < 1e-8, "{r:?}");
    }

    #[test]
    fn oscillatory_integrand() {
        let cfg = QuadConfig {
            abs_tol: 1e-13,
            ..QuadConfig::default()
        };
        let r = integrate(|x: f64| (20.0 * x).sin(), 0.0, std::f64::consts::PI, cfg).unwrap();
        assert!(r.value.abs() < 1e-12);
    }

    #[test]
    fn empty_interval_and_bad_bounds() {
        assert_eq!(integrate(|x| x, 1.0, 1.0, QuadConfig::default()).unwrap().value, 0.0);
        assert!(integrate(|x| x, 0.0, f64::INFINITY, QuadConfig::default()).is_err());
    }

    #[test]
    fn non_convergence_is_reported() {
        let cfg = QuadConfig {
            abs_tol: 0.0,
            rel_tol: 1e-15,
            max_intervals: 3,
        };
        let err = integrate(|x: f64| (1.0 / x).sin(), 1e-6, 1.0, cfg).unwrap_err();
        assert!(err.is_numerical());
    }
}
