//! Classical tests of the homogeneous model M₀ and Bayes factors between M₀,
//! the log-linear model M₁ and the one-change-point model M₂.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_model::ExceedanceSeries;
use crate::quadrature::{integrate, QuadConfig};
use crate::special::{kolmogorov_sf, ln_gamma, log_sum_exp, normal_cdf};

/// Which statistic a [`TestResult`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Uniform,
    MilitaryHandbook,
    KolmogorovSmirnov,
    ChangePoint,
    Runs,
}

impl fmt::Display for TestMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestMethod::Uniform => "U",
            TestMethod::MilitaryHandbook => "MHB chi-square",
            TestMethod::KolmogorovSmirnov => "Kolmogorov-Smirnov",
            TestMethod::ChangePoint => "change-point",
            TestMethod::Runs => "runs",
        })
    }
}

/// A statistic with both tail probabilities.
///
/// `p_two_sided = min(1, 2 min(p_lower, p_upper))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_lower: f64,
    pub p_upper: f64,
    pub p_two_sided: f64,
    pub n: usize,
    pub method: TestMethod,
}

impl TestResult {
    pub fn from_tails(statistic: f64, p_lower: f64, p_upper: f64, n: usize, method: TestMethod) -> Self {
        let p_lower = p_lower.clamp(0.0, 1.0);
        let p_upper = p_upper.clamp(0.0, 1.0);
        Self {
            statistic,
            p_lower,
            p_upper,
            p_two_sided: (2.0 * p_lower.min(p_upper)).min(1.0),
            n,
            method,
        }
    }

    /// Tails of a standard normal statistic.
    pub fn from_normal(z: f64, n: usize, method: TestMethod) -> Self {
        Self::from_tails(z, normal_cdf(z), normal_cdf(-z), n, method)
    }
}

fn require_events(events: &ExceedanceSeries, min: usize, what: &str) -> Result<()> {
    if events.len() < min {
        return Err(Error::InsufficientData(format!(
            "{what} needs at least {min} events, got {}",
            events.len()
        )));
    }
    Ok(())
}

/// `S_n = Σ t_i / T`.
pub fn scaled_sum(events: &ExceedanceSeries) -> f64 {
    let t = events.horizon();
    events.times().iter().map(|&x| x / t).sum()
}

/// `U_n = (S_n − n/2) / √(n/12)`, asymptotically standard normal under M₀.
pub fn u_test(events: &ExceedanceSeries) -> Result<TestResult> {
    require_events(events, 1, "the U test")?;
    let n = events.len() as f64;
    let z = (scaled_sum(events) - n / 2.0) / (n / 12.0).sqrt();
    Ok(TestResult::from_normal(z, events.len(), TestMethod::Uniform))
}

/// `−2 Σ log(t_i / T)`, chi-square with `2n` degrees of freedom under M₀.
pub fn mhb_test(events: &ExceedanceSeries) -> Result<TestResult> {
    require_events(events, 1, "the MHB test")?;
    let t = events.horizon();
    if let Some(&bad) = events.times().iter().find(|&&x| x <= 0.0) {
        return Err(Error::Domain(format!("event time {bad} must be positive")));
    }
    let stat = -2.0 * events.times().iter().map(|&x| (x / t).ln()).sum::<f64>();
    let dof = 2.0 * events.len() as f64;
    Ok(TestResult::from_tails(
        stat,
        crate::special::chi_square_cdf(stat, dof),
        crate::special::chi_square_sf(stat, dof),
        events.len(),
        TestMethod::MilitaryHandbook,
    ))
}

/// One-sample Kolmogorov–Smirnov distance of sorted values in `[0, 1]` from
/// the uniform law.
pub fn ks_statistic(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &u)| {
            let i = i as f64;
            (u - i / n).abs().max((u - (i + 1.0) / n).abs())
        })
        .fold(0.0, f64::max)
}

/// Kolmogorov–Smirnov test of uniformity; `p_upper` is the asymptotic
/// Kolmogorov tail at `(√n + 0.12 + 0.11/√n)·D_n`.
pub fn ks_test(rescaled: &[f64]) -> Result<TestResult> {
    if rescaled.is_empty() {
        return Err(Error::InsufficientData("the KS test needs at least one value".into()));
    }
    if let Some(i) = rescaled.windows(2).position(|w| !(w[0] <= w[1])) {
        return Err(Error::Precondition(format!(
            "KS input is not sorted at position {}",
            i + 1
        )));
    }
    if rescaled[0] < 0.0 || rescaled[rescaled.len() - 1] > 1.0 {
        return Err(Error::Precondition("KS input must lie in [0, 1]".into()));
    }
    let d = ks_statistic(rescaled);
    let root = (rescaled.len() as f64).sqrt();
    let p_upper = kolmogorov_sf((root + 0.12 + 0.11 / root) * d);
    Ok(TestResult::from_tails(
        d,
        1.0 - p_upper,
        p_upper,
        rescaled.len(),
        TestMethod::KolmogorovSmirnov,
    ))
}

/// `g(i, u) = i √((1−u)/u) − (n−i) √(u/(1−u))`.
pub fn changepoint_g(i: usize, n: usize, u: f64) -> f64 {
    i as f64 * ((1.0 - u) / u).sqrt() - (n - i) as f64 * (u / (1.0 - u)).sqrt()
}

/// `ln(0.99 / 0.01)`.
pub const CHANGEPOINT_XI: f64 = 4.595_119_850_134_59;

fn changepoint_tail_raw(z: f64) -> f64 {
    let xi = CHANGEPOINT_XI;
    (2.0 / PI).sqrt() * (-z * z / 2.0).exp() * (xi * z - xi / z + 1.0 / z)
}

/// Largest `z` at which the raw tail approximation equals 1; the
/// approximation is decreasing above it.
fn changepoint_tail_onset() -> f64 {
    let (mut lo, mut hi) = (1.5, 6.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if changepoint_tail_raw(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Asymptotic upper tail `P(Δ_n > z)` of the change-point statistic.
///
/// The approximation holds for large `z`; below the point where it last
/// crosses 1 the tail is reported as 1.
pub fn changepoint_tail(z: f64) -> f64 {
    if z <= changepoint_tail_onset() {
        return 1.0;
    }
    changepoint_tail_raw(z).clamp(0.0, 1.0)
}

/// `Δ_n`: the largest `|g|` over events with `u_i ∈ [0.01, 0.99]`, scaled by `n^{−1/2}`.
pub fn changepoint_test(events: &ExceedanceSeries) -> Result<TestResult> {
    let n = events.len();
    let mut best: Option<f64> = None;
    for (idx, u) in events.unit_times().into_iter().enumerate() {
        if !(0.01..=0.99).contains(&u) {
            continue;
        }
        let i = idx + 1;
        let m = changepoint_g(i - 1, n, u).abs().max(changepoint_g(i, n, u).abs());
        best = Some(best.map_or(m, |b: f64| b.max(m)));
    }
    let max = best.ok_or_else(|| Error::InsufficientData("no rescaled event time lies in [0.01, 0.99]".into()))?;
    let stat = max / (n as f64).sqrt();
    let p_upper = changepoint_tail(stat);
    Ok(TestResult::from_tails(
        stat,
        1.0 - p_upper,
        p_upper,
        n,
        TestMethod::ChangePoint,
    ))
}

/// `1/x − 1/(eˣ − 1)`: the conditional mean of `t/T` under a rate `∝ e^{−xt/T}`.
/// Decreasing from 1 to 0, equal to ½ at 0.
pub fn loglinear_mean(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        0.5 - x / 12.0 + x * x * x / 720.0
    } else {
        1.0 / x - 1.0 / x.exp_m1()
    }
}

/// Solves `loglinear_mean(x) = target` for `target ∈ (0, 1)`.
fn solve_loglinear_mean(target: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Domain(format!("mean rescaled time {target} is outside (0, 1)")));
    }
    if target == 0.5 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
    while loglinear_mean(lo) <= target {
        lo *= 2.0;
        if lo < -1e12 {
            return Err(Error::Numerical(format!("root for mean {target} not bracketed")));
        }
    }
    while loglinear_mean(hi) >= target {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Numerical(format!("root for mean {target} not bracketed")));
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if loglinear_mean(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Maximum-likelihood slope `β̂` of the rate `α e^{−βt}` given the events.
pub fn loglinear_mle(events: &ExceedanceSeries) -> Result<f64> {
    require_events(events, 2, "the log-linear fit")?;
    let target = scaled_sum(events) / events.len() as f64;
    Ok(solve_loglinear_mean(target)? / events.horizon())
}

/// `t'_i = (1 − e^{−βt_i}) / (1 − e^{−βT})`; `β = 0` gives `t_i / T`.
pub fn loglinear_rescale(events: &ExceedanceSeries, beta: f64) -> Vec<f64> {
    let t_end = events.horizon();
    events
        .times()
        .iter()
        .map(|&t| {
            if beta == 0.0 {
                t / t_end
            } else if beta > 0.0 {
                (-beta * t).exp_m1() / (-beta * t_end).exp_m1()
            } else {
                let a = -beta;
                (a * (t - t_end)).exp() * (-a * t).exp_m1() / (-a * t_end).exp_m1()
            }
        })
        .map(|u| u.clamp(0.0, 1.0))
        .collect()
}

/// Strength of evidence for the null model of a Bayes factor, ordered from weakest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evidence {
    Negative,
    BarelyWorthMentioning,
    Positive,
    Strong,
    VeryStrong,
}

impl fmt::Display for Evidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Evidence::Negative => "Negative",
            Evidence::BarelyWorthMentioning => "Barely worth mentioning",
            Evidence::Positive => "Positive",
            Evidence::Strong => "Strong",
            Evidence::VeryStrong => "Very strong",
        })
    }
}

/// Bucket of `2 log B`; each boundary belongs to the bucket above it.
/// `NaN` maps to [`Evidence::Negative`].
pub fn calibrate(two_log_b: f64) -> Evidence {
    if !(two_log_b >= 0.0) {
        Evidence::Negative
    } else if two_log_b < 2.0 {
        Evidence::BarelyWorthMentioning
    } else if two_log_b < 5.0 {
        Evidence::Positive
    } else if two_log_b < 10.0 {
        Evidence::Strong
    } else {
        Evidence::VeryStrong
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesFactorResult {
    pub log_b: f64,
    pub b: f64,
    pub two_log_b: f64,
    pub evidence: Evidence,
    /// Estimated absolute error of `log_b` from the quadrature.
    pub quadrature_error: f64,
}

impl BayesFactorResult {
    pub fn from_log(log_b: f64, quadrature_error: f64) -> Self {
        Self {
            log_b,
            b: log_b.exp(),
            two_log_b: 2.0 * log_b,
            evidence: calibrate(2.0 * log_b),
            quadrature_error,
        }
    }
}

fn bf_quad_config() -> QuadConfig {
    QuadConfig {
        abs_tol: 0.0,
        rel_tol: 1e-11,
        max_intervals: 4000,
    }
}

/// `ln(y / (1 − e^{−y}))`, continuous at 0.
fn log_y_over_one_minus_exp(y: f64) -> f64 {
    if y < 1e-5 {
        y / 2.0 - y * y / 24.0
    } else {
        y.ln() - (-(-y).exp_m1()).ln()
    }
}

/// Bayes factor of M₀ against the log-linear model M₁.
pub fn bayes_factor_01(events: &ExceedanceSeries) -> Result<BayesFactorResult> {
    bayes_factor_01_with(events, bf_quad_config())
}

pub fn bayes_factor_01_with(events: &ExceedanceSeries, cfg: QuadConfig) -> Result<BayesFactorResult> {
    require_events(events, 2, "B01")?;
    let (log_integral, rel_err) = log_b01_integral(events.len(), scaled_sum(events), cfg)?;
    let log_b = (0.6449 * (events.len() - 1) as f64).ln() - log_integral;
    Ok(BayesFactorResult::from_log(log_b, rel_err))
}

/// `ln ∫₀^∞ e^{−S y} (y / (1 − e^{−y}))^{n−1} dy` and its relative error.
///
/// The log-integrand is concave; it is integrated after shifting by its peak
/// over `[0, mode]` and `[mode, cutoff]`, with the cutoff 100 nats below the peak.
pub fn log_b01_integral(n: usize, s: f64, cfg: QuadConfig) -> Result<(f64, f64)> {
    if !(s > 0.0) || n < 2 {
        return Err(Error::Domain(format!(
            "B01 integral needs S > 0 and n >= 2, got S = {s}, n = {n}"
        )));
    }
    let m = (n - 1) as f64;
    let log_f = |y: f64| -s * y + m * log_y_over_one_minus_exp(y);
    let target = s / m;
    let mode = if target >= 0.5 {
        0.0
    } else {
        solve_loglinear_mean(target)?
    };
    let peak = log_f(mode);
    let mut width = mode.max(1.0);
    while log_f(mode + width) > peak - 100.0 {
        width *= 2.0;
        if !width.is_finite() || width > 1e300 {
            return Err(Error::Numerical("B01 integrand does not decay".into()));
        }
    }
    let g = |y: f64| (log_f(y) - peak).exp();
    let left = integrate(g, 0.0, mode, cfg)?;
    let right = integrate(g, mode, mode + width, cfg)?;
    let total = left.value + right.value;
    if !(total > 0.0) {
        return Err(Error::Numerical(format!("B01 integral evaluated to {total}")));
    }
    Ok((peak + total.ln(), (left.abs_error + right.abs_error) / total))
}

/// Bayes factor of M₀ against the one-change-point model M₂.
pub fn bayes_factor_02(events: &ExceedanceSeries) -> Result<BayesFactorResult> {
    bayes_factor_02_with(events, bf_quad_config())
}

pub fn bayes_factor_02_with(events: &ExceedanceSeries, cfg: QuadConfig) -> Result<BayesFactorResult> {
    require_events(events, 1, "B02")?;
    let n = events.len();
    let u = events.unit_times();
    let mut terms = Vec::with_capacity(n + 1);
    let mut abs_errors = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let lo = if i == 0 { 0.0 } else { u[i - 1] };
        let hi = if i == n { 1.0 } else { u[i] };
        let Some((log_j, rel_err)) = log_b02_segment(i, n, lo, hi, cfg)? else {
            continue;
        };
        let log_term = log_j + ln_gamma(i as f64 + 0.5) + ln_gamma((n - i) as f64 + 0.5);
        terms.push(log_term);
        abs_errors.push((log_term, rel_err));
    }
    let log_denominator = log_sum_exp(&terms);
    if !log_denominator.is_finite() {
        return Err(Error::Numerical(format!("B02 denominator is {log_denominator}")));
    }
    let rel_err: f64 = abs_errors
        .iter()
        .map(|&(lt, re)| re * (lt - log_denominator).exp())
        .sum();
    let log_numerator = (4.0 * PI.sqrt()).ln() + ln_gamma(n as f64 + 0.5);
    Ok(BayesFactorResult::from_log(log_numerator - log_denominator, rel_err))
}

/// `ln J_i` with `J_i = ∫_lo^hi x^{−(i+½)} (1−x)^{−(n−i+½)} dx` and its
/// relative error, or `None` for an empty interval.
///
/// With `x = sin²θ` the integrand becomes `2 sin^{−2i}θ cos^{−2(n−i)}θ`, whose
/// logarithm is convex, so the maximum sits at an endpoint.
pub fn log_b02_segment(i: usize, n: usize, lo: f64, hi: f64, cfg: QuadConfig) -> Result<Option<(f64, f64)>> {
    if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
        return Err(Error::Domain(format!("B02 interval [{lo}, {hi}] is not inside [0, 1]")));
    }
    if lo == hi {
        return Ok(None);
    }
    if (lo == 0.0 && i > 0) || (hi == 1.0 && i < n) {
        return Err(Error::Numerical(format!(
            "B02 integral J_{i} diverges: an event lies at a boundary of the observation window"
        )));
    }
    let a = lo.sqrt().asin();
    let b = hi.sqrt().asin();
    let p = 2.0 * i as f64;
    let q = 2.0 * (n - i) as f64;
    let log_f = |th: f64| {
        let mut v = std::f64::consts::LN_2;
        if p > 0.0 {
            v -= p * th.sin().ln();
        }
        if q > 0.0 {
            v -= q * th.cos().ln();
        }
        v
    };
    let peak = log_f(a).max(log_f(b));
    let r = integrate(|th| (log_f(th) - peak).exp(), a, b, cfg)
        .map_err(|e| Error::Numerical(format!("B02 integral J_{i}: {e}")))?;
    if !(r.value > 0.0) {
        return Err(Error::Numerical(format!("B02 integral J_{i} evaluated to {}", r.value)));
    }
    Ok(Some((peak + r.value.ln(), r.abs_error / r.value)))
}

/// `B₁₂ = B₀₂ / B₀₁`.
pub fn bayes_factor_12(events: &ExceedanceSeries) -> Result<BayesFactorResult> {
    let b01 = bayes_factor_01(events)?;
    let b02 = bayes_factor_02(events)?;
    Ok(bayes_factor_12_from(&b01, &b02))
}

pub fn bayes_factor_12_from(b01: &BayesFactorResult, b02: &BayesFactorResult) -> BayesFactorResult {
    BayesFactorResult::from_log(b02.log_b - b01.log_b, b01.quadrature_error + b02.quadrature_error)
}

/// Tests and Bayes factors for the events between two consecutive change-points.
///
/// Event times are relative to the segment start. A statistic that cannot be
/// computed is `None` with the reason listed in `errors`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub index: usize,
    pub start: f64,
    pub end: f64,
    pub n: usize,
    pub u_test: Option<TestResult>,
    pub mhb_test: Option<TestResult>,
    pub ks_test: Option<TestResult>,
    pub changepoint_test: Option<TestResult>,
    pub loglinear_beta: Option<f64>,
    /// KS test of the events rescaled by the fitted log-linear rate.
    pub ks_loglinear: Option<TestResult>,
    pub b01: Option<BayesFactorResult>,
    pub b02: Option<BayesFactorResult>,
    pub b12: Option<BayesFactorResult>,
    pub errors: Vec<String>,
}

fn keep<T>(errors: &mut Vec<String>, label: &str, r: Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            errors.push(format!("{label}: {e}"));
            None
        }
    }
}

/// Every test and Bayes factor on one series.
pub fn analyse_segment(events: &ExceedanceSeries, index: usize, start: f64) -> SegmentReport {
    let mut errors = Vec::new();
    let u_test = keep(&mut errors, "U", u_test(events));
    let mhb = keep(&mut errors, "MHB", mhb_test(events));
    let ks = keep(&mut errors, "KS", ks_test(&events.unit_times()));
    let cp = keep(&mut errors, "change-point", changepoint_test(events));
    let beta = keep(&mut errors, "log-linear fit", loglinear_mle(events));
    let ks_loglinear = beta.and_then(|b| keep(&mut errors, "log-linear KS", ks_test(&loglinear_rescale(events, b))));
    let b01 = keep(&mut errors, "B01", bayes_factor_01(events));
    let b02 = keep(&mut errors, "B02", bayes_factor_02(events));
    let b12 = match (&b01, &b02) {
        (Some(x), Some(y)) => Some(bayes_factor_12_from(x, y)),
        _ => None,
    };
    SegmentReport {
        index,
        start,
        end: start + events.horizon(),
        n: events.len(),
        u_test,
        mhb_test: mhb,
        ks_test: ks,
        changepoint_test: cp,
        loglinear_beta: beta,
        ks_loglinear,
        b01,
        b02,
        b12,
        errors,
    }
}

/// One [`SegmentReport`] per interval between consecutive change-points.
pub fn segment_report(events: &ExceedanceSeries, changepoints: &[f64]) -> Result<Vec<SegmentReport>> {
    let mut edges = Vec::with_capacity(changepoints.len() + 2);
    edges.push(0.0);
    edges.extend_from_slice(changepoints);
    edges.push(events.horizon());
    edges
        .windows(2)
        .enumerate()
        .map(|(j, w)| {
            let seg = events.segment(w[0], w[1])?;
            Ok(analyse_segment(&seg, j, w[0]))
        })
        .collect()
}
