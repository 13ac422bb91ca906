//! Point-process types, the Poisson-process likelihood, simulators and the
//! time-rescaling transform.
//!
//! Events are modelled as a non-homogeneous Poisson process on `[0, T]` with
//! a piecewise-constant ("step") rate
//!
//! ```text
//! λ(t) = Σ_j h_j · 1{ s_j ≤ t < s_{j+1} },   0 = s_0 < s_1 < … < s_k < s_{k+1} = T
//! ```
//!
//! An event that falls exactly on a change-point belongs to the interval that
//! starts there.

use std::io::{self, Write};

use rand::{Rng, RngExt};
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strictly increasing event times on `(0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceSeries {
    times: Vec<f64>,
    horizon: f64,
}

impl ExceedanceSeries {
    pub fn new(times: Vec<f64>, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid(
                "exceedance series",
                format!("horizon must be finite and positive, got {horizon}"),
            ));
        }
        for (i, &t) in times.iter().enumerate() {
            if !(t > 0.0 && t <= horizon) {
                return Err(Error::invalid(
                    "exceedance series",
                    format!("event {i} at {t} lies outside (0, {horizon}]"),
                ));
            }
            if i > 0 && times[i - 1] >= t {
                return Err(Error::invalid(
                    "exceedance series",
                    format!("event times not strictly increasing at index {i}"),
                ));
            }
        }
        Ok(Self { times, horizon })
    }

    pub fn empty(horizon: f64) -> Result<Self> {
        Self::new(Vec::new(), horizon)
    }

    /// Sorts raw simulated times and drops exact duplicates.
    pub(crate) fn from_raw(mut times: Vec<f64>, horizon: f64) -> Self {
        times.sort_by(f64::total_cmp);
        let before = times.len();
        times.dedup();
        if times.len() != before {
            log::warn!(
                "discarded {} duplicate event time(s) from a simulated series",
                before - times.len()
            );
        }
        debug_assert!(times.iter().all(|&t| t > 0.0 && t <= horizon));
        Self { times, horizon }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of events strictly before `t`.
    pub fn count_before(&self, t: f64) -> usize {
        self.times.partition_point(|&x| x < t)
    }

    /// Number of events in `[a, b)`, or in `[a, T]` when `b` is the horizon.
    pub fn count_in(&self, a: f64, b: f64) -> usize {
        let hi = if b >= self.horizon {
            self.times.len()
        } else {
            self.count_before(b)
        };
        hi - self.count_before(a)
    }

    /// `S_n / n`-style scaled times `t_i / T`.
    pub fn unit_times(&self) -> Vec<f64> {
        self.times.iter().map(|&t| t / self.horizon).collect()
    }

    /// Events in `[a, b)` (or `[a, T]` for the final segment) shifted to start at
    /// zero, with horizon `b - a`.
    ///
    /// Fails when an event coincides with `a`, since the shifted series would
    /// contain a time of zero.
    pub fn segment(&self, a: f64, b: f64) -> Result<Self> {
        if !(0.0 <= a && a < b && b <= self.horizon) {
            return Err(Error::Domain(format!(
                "segment [{a}, {b}) is not inside [0, {}]",
                self.horizon
            )));
        }
        let lo = self.count_before(a);
        let hi = if b >= self.horizon {
            self.times.len()
        } else {
            self.count_before(b)
        };
        let shifted = self.times[lo..hi].iter().map(|&t| t - a).collect();
        Self::new(shifted, b - a)
    }

    /// Writes the two-column text table: a `# horizon=` metadata line, the
    /// `t,` header and one event per row.
    pub fn write_table<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# horizon={}", self.horizon)?;
        writeln!(out, "t,")?;
        for t in &self.times {
            writeln!(out, "{t},")?;
        }
        Ok(())
    }

    pub fn to_table_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_table(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("table output is ASCII")
    }

    /// Parses the format produced by [`ExceedanceSeries::write_table`]. Other
    /// `#` comment lines are ignored and the trailing comma is optional.
    pub fn parse_table(text: &str) -> Result<Self> {
        let mut horizon = None;
        let mut times = Vec::new();
        let mut seen_header = false;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(value) = comment.trim().strip_prefix("horizon=") {
                    let h: f64 = value
                        .trim()
                        .parse()
                        .map_err(|_| Error::parse(line_no, format!("bad horizon '{value}'")))?;
                    horizon = Some(h);
                }
                continue;
            }
            if !seen_header {
                if line.trim_end_matches(',') != "t" {
                    return Err(Error::parse(line_no, "expected header 't,'"));
                }
                seen_header = true;
                continue;
            }
            let field = line.split(',').next().unwrap_or("").trim();
            let t: f64 = field
                .parse()
                .map_err(|_| Error::parse(line_no, format!("bad event time '{field}'")))?;
            times.push(t);
        }
        let horizon = horizon.ok_or_else(|| Error::parse(1, "missing '# horizon=<T>' line"))?;
        Self::new(times, horizon)
    }
}

/// Piecewise-constant rate: change-points `s_1..s_k` and heights `h_0..h_k` on `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRate {
    pub(crate) changepoints: Vec<f64>,
    pub(crate) heights: Vec<f64>,
    pub(crate) horizon: f64,
}

impl StepRate {
    pub fn new(changepoints: Vec<f64>, heights: Vec<f64>, horizon: f64) -> Result<Self> {
        let rate = Self {
            changepoints,
            heights,
            horizon,
        };
        rate.validate()?;
        Ok(rate)
    }

    pub fn constant(height: f64, horizon: f64) -> Result<Self> {
        Self::new(Vec::new(), vec![height], horizon)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::invalid("step rate", reason));
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.heights.len() != self.changepoints.len() + 1 {
            return bad(format!(
                "{} change-points need {} heights, got {}",
                self.changepoints.len(),
                self.changepoints.len() + 1,
                self.heights.len()
            ));
        }
        let mut prev = 0.0;
        for (i, &s) in self.changepoints.iter().enumerate() {
            if !(s > prev && s < self.horizon) {
                return bad(format!("change-point {} at {s} breaks 0 < s_1 < … < s_k < T", i + 1));
            }
            prev = s;
        }
        if let Some((j, h)) = self
            .heights
            .iter()
            .enumerate()
            .find(|(_, &h)| !(h.is_finite() && h > 0.0))
        {
            return bad(format!("height h_{j} = {h} must be positive and finite"));
        }
        Ok(())
    }

    /// Number of change-points `k`.
    pub fn k(&self) -> usize {
        self.changepoints.len()
    }

    pub fn changepoints(&self) -> &[f64] {
        &self.changepoints
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Boundary `s_j` for `j` in `0..=k+1`, with `s_0 = 0` and `s_{k+1} = T`.
    pub fn edge(&self, j: usize) -> f64 {
        if j == 0 {
            0.0
        } else if j > self.changepoints.len() {
            self.horizon
        } else {
            self.changepoints[j - 1]
        }
    }

    /// Length of interval `j`, `s_{j+1} - s_j`.
    pub fn width(&self, j: usize) -> f64 {
        self.edge(j + 1) - self.edge(j)
    }

    /// Index `j` of the interval `[s_j, s_{j+1})` containing `t`.
    pub fn interval_of(&self, t: f64) -> usize {
        self.changepoints.partition_point(|&s| s <= t)
    }

    /// `λ(t)`; the final height applies at `t = T`.
    pub fn rate_at(&self, t: f64) -> f64 {
        self.heights[self.interval_of(t)]
    }

    /// Cumulative rate `Λ(t) = ∫_0^t λ(u) du`.
    pub fn cumulative(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::Domain(format!("t = {t} is outside [0, {}]", self.horizon)));
        }
        Ok(self.cumulative_unchecked(t))
    }

    pub(crate) fn cumulative_unchecked(&self, t: f64) -> f64 {
        let j = self.interval_of(t);
        let full: f64 = (0..j).map(|i| self.heights[i] * self.width(i)).sum();
        full + self.heights[j] * (t - self.edge(j))
    }

    /// `Λ(T)`, the expected number of events over the horizon.
    pub fn total_mass(&self) -> f64 {
        (0..self.heights.len()).map(|j| self.heights[j] * self.width(j)).sum()
    }

    /// Inverse of `Λ` on `[0, Λ(T)]`, solved exactly on each linear piece.
    pub fn inverse_cumulative(&self, y: f64) -> f64 {
        let mut acc = 0.0;
        let last = self.heights.len() - 1;
        for j in 0..=last {
            let mass = self.heights[j] * self.width(j);
            if y <= acc + mass || j == last {
                let t = self.edge(j) + (y - acc) / self.heights[j];
                return t.clamp(self.edge(j), self.edge(j + 1));
            }
            acc += mass;
        }
        unreachable!("loop returns on the last interval")
    }

    /// Number of events of `events` in each interval `[s_j, s_{j+1})`.
    pub fn interval_counts(&self, events: &ExceedanceSeries) -> Vec<usize> {
        let mut counts = Vec::with_capacity(self.heights.len());
        let mut prev = 0;
        for j in 1..=self.changepoints.len() {
            let idx = events.count_before(self.edge(j));
            counts.push(idx - prev);
            prev = idx;
        }
        counts.push(events.len() - prev);
        counts
    }

    /// Time-rescaled events `Λ(t_i) / Λ(T)`.
    pub fn rescale(&self, events: &ExceedanceSeries) -> Result<Vec<f64>> {
        time_rescale(events, |t| self.cumulative_unchecked(t.min(self.horizon)))
    }
}

/// Cumulative count `N(t)` evaluated on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountingPath {
    pub grid: Vec<f64>,
    pub counts: Vec<u64>,
}

impl CountingPath {
    /// `N(g)` = number of events at or before each grid point.
    pub fn from_events(events: &[f64], grid: &[f64]) -> Self {
        let counts = grid
            .iter()
            .map(|&g| events.partition_point(|&t| t <= g) as u64)
            .collect();
        Self {
            grid: grid.to_vec(),
            counts,
        }
    }

    pub fn final_count(&self) -> u64 {
        self.counts.last().copied().unwrap_or(0)
    }
}

/// `Λ(t)` for a step rate.
pub fn cumulative_rate(rate: &StepRate, t: f64) -> Result<f64> {
    rate.cumulative(t)
}

/// Poisson-process log-likelihood `Σ log λ(t_i) − Λ(T)`, computed per interval
/// as `Σ_j (n_j log h_j − h_j (s_{j+1} − s_j))`.
pub fn log_likelihood(rate: &StepRate, events: &ExceedanceSeries) -> Result<f64> {
    check_same_horizon(rate, events)?;
    let counts = rate.interval_counts(events);
    Ok(counts
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let h = rate.heights[j];
            n as f64 * h.ln() - h * rate.width(j)
        })
        .sum())
}

pub(crate) fn check_same_horizon(rate: &StepRate, events: &ExceedanceSeries) -> Result<()> {
    let (a, b) = (rate.horizon, events.horizon());
    if (a - b).abs() > 1e-9 * a.abs().max(b.abs()) {
        return Err(Error::Domain(format!(
            "rate horizon {a} differs from event horizon {b}"
        )));
    }
    Ok(())
}

/// Uniform draw on `(0, 1]`.
fn unit_open_below<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

fn poisson_draw<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let draw: f64 = Poisson::new(mean).expect("positive finite mean").sample(rng);
    draw as u64
}

/// Direct simulation: a Poisson count per constant-rate interval, then
/// uniform positions within it.
pub fn simulate_direct<R: Rng + ?Sized>(rate: &StepRate, rng: &mut R) -> ExceedanceSeries {
    let mut times = Vec::new();
    for j in 0..rate.heights.len() {
        let (lo, width) = (rate.edge(j), rate.width(j));
        let count = poisson_draw(rate.heights[j] * width, rng);
        times.extend((0..count).map(|_| lo + width * unit_open_below(rng)));
    }
    ExceedanceSeries::from_raw(times, rate.horizon)
}

/// Acceptance/rejection ("thinning") simulation of a Poisson process with an
/// arbitrary rate bounded by `lambda_star` on `[0, horizon]`.
pub fn simulate_thinning<R, F>(rate_fn: F, lambda_star: f64, horizon: f64, rng: &mut R) -> Result<ExceedanceSeries>
where
    R: Rng + ?Sized,
    F: Fn(f64) -> f64,
{
    if !(lambda_star.is_finite() && lambda_star > 0.0) {
        return Err(Error::Domain(format!(
            "dominating rate must be positive, got {lambda_star}"
        )));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
    }
    let gap = Exp::new(lambda_star).expect("positive rate");
    let mut times = Vec::new();
    let mut t = 0.0;
    loop {
        t += gap.sample(rng);
        if t > horizon {
            break;
        }
        let r = rate_fn(t);
        if r > lambda_star * (1.0 + 1e-12) {
            return Err(Error::ContractViolation {
                t,
                rate: r,
                bound: lambda_star,
            });
        }
        if rng.random::<f64>() * lambda_star < r {
            times.push(t);
        }
    }
    Ok(ExceedanceSeries::from_raw(times, horizon))
}

/// Exactly `n` events drawn i.i.d. with density `λ(t)/Λ(T)` and sorted, i.e.
/// the process conditioned on `N(T) = n`.
pub fn simulate_conditional<R: Rng + ?Sized>(rate: &StepRate, n: usize, rng: &mut R) -> ExceedanceSeries {
    let total = rate.total_mass();
    let times = (0..n)
        .map(|_| {
            let t = rate.inverse_cumulative(total * unit_open_below(rng));
            // Guard the (0, T] support against rounding at the left edge.
            if t > 0.0 {
                t
            } else {
                f64::MIN_POSITIVE
            }
        })
        .collect();
    let series = ExceedanceSeries::from_raw(times, rate.horizon);
    if series.len() != n {
        log::warn!("conditional simulation lost {} tied events", n - series.len());
    }
    series
}

/// Time-rescaling `t'_i = cum(t_i) / cum(T)` for a cumulative rate function `cum`.
pub fn time_rescale<F: Fn(f64) -> f64>(events: &ExceedanceSeries, cum: F) -> Result<Vec<f64>> {
    let total = cum(events.horizon());
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::DegenerateRate(total));
    }
    Ok(events
        .times()
        .iter()
        .map(|&t| (cum(t) / total).clamp(0.0, 1.0))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn no2_rate() -> StepRate {
        StepRate::new(vec![2490.0], vec![0.1032, 0.0357], 6206.0).unwrap()
    }

    /// Product form `e^{-Λ(T)} Π λ(t_i)` evaluated directly, then logged.
    fn brute_force_likelihood(rate: &StepRate, times: &[f64]) -> f64 {
        let mut product = (-rate.total_mass()).exp();
        for &t in times {
            let mut lambda = 0.0;
            for j in 0..rate.heights().len() {
                let lo = rate.edge(j);
                let hi = rate.edge(j + 1);
                let last = j + 1 == rate.heights().len();
                if t >= lo && (t < hi || (last && t <= hi)) {
                    lambda = rate.heights()[j];
                }
            }
            product *= lambda;
        }
        product.ln()
    }

    #[test]
    fn cumulative_rate_examples() {
        let flat = StepRate::constant(1.0, 10.0).unwrap();
        assert_eq!(cumulative_rate(&flat, 10.0).unwrap(), 10.0);
        assert_eq!(cumulative_rate(&flat, 0.0).unwrap(), 0.0);
        let rate = no2_rate();
        let expected = 0.1032 * 2490.0 + 0.0357 * 3716.0;
        assert!((cumulative_rate(&rate, 6206.0).unwrap() - expected).abs() < 1e-9);
        assert!((expected - 389.63).abs() < 0.01);
        assert_eq!(cumulative_rate(&rate, 0.0).unwrap(), 0.0);
        assert!(matches!(cumulative_rate(&rate, 6206.5), Err(Error::Domain(_))));
        assert!(matches!(cumulative_rate(&rate, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn log_likelihood_examples() {
        let r = StepRate::constant(1.0, 1.0).unwrap();
        let e = ExceedanceSeries::empty(1.0).unwrap();
        assert!((log_likelihood(&r, &e).unwrap() + 1.0).abs() < 1e-15);

        let r = StepRate::constant(2.0, 3.0).unwrap();
        let e = ExceedanceSeries::new(vec![1.0, 2.5], 3.0).unwrap();
        let ll = log_likelihood(&r, &e).unwrap();
        assert!((ll - (2.0 * 2f64.ln() - 6.0)).abs() < 1e-12);
        assert!((ll + 4.6137).abs() < 1e-4);
    }

    #[test]
    fn log_likelihood_matches_product_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let horizon = rng.random_range(1.0..5.0);
            let k = rng.random_range(0..4usize);
            let mut cps: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..0.95) * horizon).collect();
            cps.sort_by(f64::total_cmp);
            cps.dedup();
            let heights = (0..=cps.len()).map(|_| rng.random_range(0.2..3.0)).collect();
            let rate = StepRate::new(cps, heights, horizon).unwrap();
            let n = rng.random_range(0..8usize);
            let mut times: Vec<f64> = (0..n).map(|_| rng.random_range(0.001..1.0) * horizon).collect();
            times.sort_by(f64::total_cmp);
            times.dedup();
            let events = ExceedanceSeries::new(times.clone(), horizon).unwrap();
            let a = log_likelihood(&rate, &events).unwrap();
            let b = brute_force_likelihood(&rate, &times);
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn event_on_changepoint_belongs_to_right_interval() {
        let rate = StepRate::new(vec![1.0], vec![1.0, 3.0], 2.0).unwrap();
        let events = ExceedanceSeries::new(vec![1.0], 2.0).unwrap();
        assert_eq!(rate.interval_counts(&events), vec![0, 1]);
        let ll = log_likelihood(&rate, &events).unwrap();
        assert!((ll - (3f64.ln() - 4.0)).abs() < 1e-12);
    }

    #[test]
    fn horizon_mismatch_is_rejected() {
        let rate = StepRate::constant(1.0, 2.0).unwrap();
        let events = ExceedanceSeries::empty(3.0).unwrap();
        assert!(log_likelihood(&rate, &events).is_err());
    }

    #[test]
    fn step_rate_invariants() {
        assert!(StepRate::new(vec![], vec![], 1.0).is_err());
        assert!(StepRate::new(vec![0.5], vec![1.0], 1.0).is_err());
        assert!(StepRate::new(vec![0.5, 0.4], vec![1.0; 3], 1.0).is_err());
        assert!(StepRate::new(vec![1.0], vec![1.0; 2], 1.0).is_err());
        assert!(StepRate::new(vec![0.5], vec![1.0, 0.0], 1.0).is_err());
        assert!(StepRate::new(vec![0.5], vec![1.0, 2.0], 1.0).is_ok());
    }

    #[test]
    fn series_invariants() {
        assert!(ExceedanceSeries::new(vec![0.0], 1.0).is_err());
        assert!(ExceedanceSeries::new(vec![0.5, 0.5], 1.0).is_err());
        assert!(ExceedanceSeries::new(vec![1.5], 1.0).is_err());
        assert!(ExceedanceSeries::new(vec![1.0], 1.0).is_ok());
        assert!(ExceedanceSeries::new(vec![], 0.0).is_err());
    }

    #[test]
    fn inverse_cumulative_round_trips() {
        let rate = no2_rate();
        for &t in &[0.0, 1.0, 2489.9, 2490.0, 2490.1, 5000.0, 6206.0] {
            let y = rate.cumulative(t).unwrap();
            assert!((rate.inverse_cumulative(y) - t).abs() < 1e-9);
        }
    }

    #[test]
    fn rescale_examples() {
        let flat = StepRate::constant(0.3, 8.0).unwrap();
        let events = ExceedanceSeries::new(vec![1.0, 4.0, 8.0], 8.0).unwrap();
        let u = flat.rescale(&events).unwrap();
        for (a, b) in u.iter().zip([0.125, 0.5, 1.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        let rate = no2_rate();
        let events = ExceedanceSeries::new(vec![2490.0], 6206.0).unwrap();
        let u = rate.rescale(&events).unwrap();
        assert!((u[0] - 0.1032 * 2490.0 / rate.total_mass()).abs() < 1e-12);
        assert!(matches!(time_rescale(&events, |_| 0.0), Err(Error::DegenerateRate(_))));
    }

    #[test]
    fn tiny_rate_gives_empty_series() {
        let rate = StepRate::constant(1e-12, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(simulate_direct(&rate, &mut rng).is_empty());
    }

    #[test]
    fn direct_simulation_count_moments() {
        let rate = StepRate::constant(0.1, 6206.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let runs = 1000;
        let counts: Vec<f64> = (0..runs)
            .map(|_| simulate_direct(&rate, &mut rng).len() as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / runs as f64;
        let band = 3.0 * 620.6f64.sqrt() / (runs as f64).sqrt();
        assert!((mean - 620.6).abs() < band, "mean {mean}");
    }

    #[test]
    fn direct_simulation_interval_counts_are_poisson() {
        // Chi-square on the joint counts against Poisson means, pooled per interval.
        let rate = StepRate::new(vec![4.0], vec![2.0, 0.5], 10.0).unwrap();
        let means = [8.0, 3.0];
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let runs = 1000;
        let mut sums = [0.0f64; 2];
        let mut sq = [0.0f64; 2];
        let mut cross = 0.0;
        for _ in 0..runs {
            let e = simulate_direct(&rate, &mut rng);
            let c = rate.interval_counts(&e);
            for j in 0..2 {
                sums[j] += c[j] as f64;
                sq[j] += (c[j] as f64).powi(2);
            }
            cross += c[0] as f64 * c[1] as f64;
        }
        let n = runs as f64;
        let mut chi = 0.0;
        for j in 0..2 {
            let m = sums[j] / n;
            let var = sq[j] / n - m * m;
            // z-score of the sample mean, and variance near the mean.
            chi += (m - means[j]).powi(2) / (means[j] / n);
            assert!((var / means[j] - 1.0).abs() < 0.2, "variance ratio {}", var / means[j]);
        }
        assert!(crate::special::chi_square_sf(chi, 2.0) > 0.01, "chi {chi}");
        let cov = cross / n - (sums[0] / n) * (sums[1] / n);
        assert!(cov.abs() < 4.0 * (means[0] * means[1] / n).sqrt(), "cov {cov}");
    }

    #[test]
    fn thinning_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            simulate_thinning(|_| 1.0, 0.0, 1.0, &mut rng),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            simulate_thinning(|_| 5.0, 1.0, 10.0, &mut rng),
            Err(Error::ContractViolation { .. })
        ));
    }

    #[test]
    fn thinning_half_rate_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let runs = 1000;
        let total: usize = (0..runs)
            .map(|_| simulate_thinning(|_| 1.0, 2.0, 10.0, &mut rng).unwrap().len())
            .sum();
        let mean = total as f64 / runs as f64;
        assert!((mean - 10.0).abs() < 1.0, "mean {mean}");
    }

    #[test]
    fn conditional_simulation_exact_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rate = no2_rate();
        assert!(simulate_conditional(&rate, 0, &mut rng).is_empty());
        let e = simulate_conditional(&rate, 390, &mut rng);
        assert_eq!(e.len(), 390);
    }

    #[test]
    fn counting_path_counts() {
        let path = CountingPath::from_events(&[1.0, 2.0, 2.5], &[0.0, 1.0, 2.2, 3.0]);
        assert_eq!(path.counts, vec![0, 1, 2, 3]);
        assert_eq!(path.final_count(), 3);
    }

    #[test]
    fn table_round_trip_and_errors() {
        let e = ExceedanceSeries::new(vec![1.0, 2.5, 7.0], 7.0).unwrap();
        let text = e.to_table_string();
        assert!(text.starts_with("# horizon=7\nt,\n1,\n"));
        assert_eq!(ExceedanceSeries::parse_table(&text).unwrap(), e);
        let err = ExceedanceSeries::parse_table("# horizon=3\nt,\n1,\nabc,\n").unwrap_err();
        assert_eq!(
            err,
            Error::Parse {
                line: 4,
                reason: "bad event time 'abc'".into()
            }
        );
        assert!(ExceedanceSeries::parse_table("t,\n1,\n").is_err());
    }

    #[test]
    fn segment_extraction() {
        let e = ExceedanceSeries::new(vec![1.0, 3.0, 5.0, 10.0], 10.0).unwrap();
        let seg = e.segment(2.0, 10.0).unwrap();
        assert_eq!(seg.times(), &[1.0, 3.0, 8.0]);
        assert_eq!(seg.horizon(), 8.0);
        assert!(e.segment(3.0, 6.0).is_err());
        assert_eq!(e.count_in(0.0, 5.0), 2);
        assert_eq!(e.count_in(5.0, 10.0), 2);
    }
}
