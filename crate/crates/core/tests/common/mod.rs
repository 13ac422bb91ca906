#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rjpoisson::{ExceedanceSeries, StepRate};
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub const NO2_HORIZON: f64 = 6206.0;
pub const NO2_CHANGEPOINT: f64 = 2490.0;
pub const NO2_HEIGHTS: [f64; 2] = [0.1032, 0.0357];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn no2_rate() -> StepRate {
    StepRate::new(vec![NO2_CHANGEPOINT], NO2_HEIGHTS.to_vec(), NO2_HORIZON).unwrap()
}

/// `P(K > x)` for the Kolmogorov distribution by its alternating series.
pub fn kolmogorov_tail(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let mut s = 0.0;
    for j in 1..=200 {
        let jf = j as f64;
        let term = 2.0 * (-2.0 * jf * jf * x * x).exp();
        s += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    s.clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov–Smirnov distance and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = na * nb / (na + nb);
    let root = ne.sqrt();
    (d, kolmogorov_tail((root + 0.12 + 0.11 / root) * d))
}

/// Pearson chi-square goodness of fit of integer observations against
/// `expected_p`, pooling the tail so every cell expects at least five counts.
/// Returns `(statistic, dof, p_value)`.
pub fn chi_square_gof(counts: &[u64], expected_p: &[f64]) -> (f64, usize, f64) {
    let n: u64 = counts.iter().sum();
    let n = n as f64;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    for (c, p) in counts.iter().zip(expected_p) {
        obs += *c as f64;
        exp += p * n;
        if exp >= 5.0 {
            cells.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    if exp > 0.0 || obs > 0.0 {
        let last = cells.last_mut().unwrap();
        last.0 += obs;
        last.1 += exp;
    }
    let stat: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = cells.len() - 1;
    let p = 1.0 - ChiSquared::new(dof as f64).unwrap().cdf(stat);
    (stat, dof, p)
}

/// Poisson(`mu`) weights on `0..=k_max`, renormalised.
pub fn truncated_poisson(mu: f64, k_max: usize) -> Vec<f64> {
    let mut w = vec![1.0];
    for k in 1..=k_max {
        let prev = w[k - 1];
        w.push(prev * mu / k as f64);
    }
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

/// `n` sorted uniform times on `(0, horizon)`.
pub fn uniform_events(n: usize, horizon: f64, rng: &mut ChaCha8Rng) -> ExceedanceSeries {
    use rand::RngExt;
    let times = (0..n).map(|_| horizon * (1.0 - rng.random::<f64>())).collect();
    series(times, horizon)
}

/// Events of a process with rate `alpha e^{−beta t}` on `[0, horizon]`
/// holding `expected` events on average, by inversion of `Λ`.
pub fn loglinear_events(beta: f64, horizon: f64, expected: f64, rng: &mut ChaCha8Rng) -> ExceedanceSeries {
    use rand::RngExt;
    use rand_distr::{Distribution, Poisson};
    let n = Poisson::new(expected).unwrap().sample(rng) as usize;
    let total = -(-beta * horizon).exp_m1();
    let times = (0..n)
        .map(|_| {
            let v: f64 = rng.random();
            -(-(v * total)).ln_1p() / beta
        })
        .collect();
    series(times, horizon)
}

/// Sorts `times` and drops exact duplicates.
pub fn series(mut times: Vec<f64>, horizon: f64) -> ExceedanceSeries {
    times.sort_by(f64::total_cmp);
    times.dedup();
    ExceedanceSeries::new(times, horizon).unwrap()
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
