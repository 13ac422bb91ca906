//! From a raw daily concentration series to declustered exceedance events.
//!
//! The stages are independent functions; the usual order is
//! [`impute_missing`] → [`fit_seasonal`] → [`deseasonalise`] →
//! [`threshold_exceedances`] → [`decluster`], with [`runs_test`] checking the
//! independence of the resulting above/below sequence.

use std::fmt;

use chrono::{Duration, NaiveDate};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_model::ExceedanceSeries;
use crate::model_select::{TestMethod, TestResult};

/// Angular frequency of the annual cycle, radians per day.
pub const ANNUAL_OMEGA: f64 = 2.0 * std::f64::consts::PI / 365.0;

/// Dated daily observations with an explicit missing mask.
///
/// Values at missing positions are stored as `NaN` and never read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySeries {
    start_date: NaiveDate,
    values: Vec<f64>,
    missing: Vec<bool>,
}

impl DailySeries {
    pub fn new(start_date: NaiveDate, values: Vec<f64>, missing: Vec<bool>) -> Result<Self> {
        if values.is_empty() || values.len() != missing.len() {
            return Err(Error::invalid(
                "daily series",
                format!(
                    "{} values with a mask of length {}; both must be equal and non-empty",
                    values.len(),
                    missing.len()
                ),
            ));
        }
        let mut values = values;
        for (i, (v, &m)) in values.iter_mut().zip(&missing).enumerate() {
            if m {
                *v = f64::NAN;
            } else if !(v.is_finite() && *v > 0.0) {
                return Err(Error::invalid(
                    "daily series",
                    format!("observed value at index {i} is {v}; values must be finite and positive"),
                ));
            }
        }
        Ok(Self {
            start_date,
            values,
            missing,
        })
    }

    /// Series without missing values.
    pub fn complete(start_date: NaiveDate, values: Vec<f64>) -> Result<Self> {
        let missing = vec![false; values.len()];
        Self::new(start_date, values, missing)
    }

    /// Parses a `date,value` CSV with ISO dates on consecutive days; an empty
    /// value field marks a missing observation.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .flexible(false)
            .from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| Error::parse(1, e.to_string()))?.clone();
        if headers.len() != 2 || &headers[0] != "date" || &headers[1] != "value" {
            return Err(Error::parse(1, "expected header 'date,value'"));
        }
        let mut start = None;
        let mut prev: Option<NaiveDate> = None;
        let mut values = Vec::new();
        let mut missing = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                Error::parse(line, e.to_string())
            })?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
                .map_err(|_| Error::parse(line, format!("unparseable date '{}'", &record[0])))?;
            if let Some(p) = prev {
                if date != p + Duration::days(1) {
                    return Err(Error::parse(
                        line,
                        format!("date {date} does not follow {p}; days must be consecutive"),
                    ));
                }
            } else {
                start = Some(date);
            }
            prev = Some(date);
            let field = &record[1];
            if field.is_empty() {
                values.push(f64::NAN);
                missing.push(true);
            } else {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::parse(line, format!("unparseable value '{field}'")))?;
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::parse(line, format!("value {v} must be finite and positive")));
                }
                values.push(v);
                missing.push(false);
            }
        }
        let start = start.ok_or_else(|| Error::parse(2, "no data rows"))?;
        Self::new(start, values, missing)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("date,value\n");
        for (i, (v, &m)) in self.values.iter().zip(&self.missing).enumerate() {
            let date = self.date_of_index(i);
            if m {
                out.push_str(&format!("{date},\n"));
            } else {
                out.push_str(&format!("{date},{v}\n"));
            }
        }
        out
    }

    pub fn start_date(&self) -> NaiveDate {
        self.start_date
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn missing(&self) -> &[bool] {
        &self.missing
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    pub fn missing_fraction(&self) -> f64 {
        self.missing_count() as f64 / self.len() as f64
    }

    pub fn is_complete(&self) -> bool {
        !self.missing.iter().any(|&m| m)
    }

    /// Calendar date of the 0-based index `i`.
    pub fn date_of_index(&self, i: usize) -> NaiveDate {
        self.start_date + Duration::days(i as i64)
    }

    fn require_complete(&self, op: &str) -> Result<()> {
        match self.missing.iter().position(|&m| m) {
            Some(i) => Err(Error::Precondition(format!(
                "{op} needs a complete series; index {i} is missing"
            ))),
            None => Ok(()),
        }
    }
}

/// Calendar date of a (possibly fractional) 1-based day index.
pub fn date_of_day(start_date: NaiveDate, day: f64) -> NaiveDate {
    start_date + Duration::days(day.round() as i64 - 1)
}

/// Replaces each missing value with a draw from the observed values within
/// `±half_window` days (windows are truncated at the series edges).
pub fn impute_missing<R: Rng + ?Sized>(series: &DailySeries, half_window: usize, rng: &mut R) -> Result<DailySeries> {
    let n = series.len();
    let mut values = series.values.clone();
    let mut pool = Vec::with_capacity(2 * half_window + 1);
    for i in (0..n).filter(|&i| series.missing[i]) {
        let lo = i.saturating_sub(half_window);
        let hi = (i + half_window).min(n - 1);
        pool.clear();
        pool.extend((lo..=hi).filter(|&j| !series.missing[j]).map(|j| series.values[j]));
        if pool.is_empty() {
            return Err(Error::ImputationFailure { index: i });
        }
        values[i] = pool[rng.random_range(0..pool.len())];
    }
    DailySeries::complete(series.start_date, values)
}

/// Coefficients of the log-scale trend `a cos ωt + b sin ωt + c − βt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeasonalFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub beta: f64,
    pub omega: f64,
}

impl Default for SeasonalFit {
    fn default() -> Self {
        Self {
            a: 0.0,
            b: 0.0,
            c: 0.0,
            beta: 0.0,
            omega: ANNUAL_OMEGA,
        }
    }
}

impl SeasonalFit {
    /// Fitted trend of `log X` at the 1-based day `t`.
    pub fn trend(&self, t: f64) -> f64 {
        self.a * (self.omega * t).cos() + self.b * (self.omega * t).sin() + self.c - self.beta * t
    }

    /// Flat `key=value` block, one coefficient per line.
    pub fn to_kv_string(&self) -> String {
        format!(
            "a={}\nb={}\nc={}\nbeta={}\nomega={}\n",
            self.a, self.b, self.c, self.beta, self.omega
        )
    }

    pub fn parse_kv(text: &str) -> Result<Self> {
        let mut fit = SeasonalFit::default();
        let mut seen = [false; 5];
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(idx + 1, "expected key=value"))?;
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::parse(idx + 1, format!("bad number '{value}'")))?;
            let slot = match key.trim() {
                "a" => {
                    fit.a = v;
                    0
                }
                "b" => {
                    fit.b = v;
                    1
                }
                "c" => {
                    fit.c = v;
                    2
                }
                "beta" => {
                    fit.beta = v;
                    3
                }
                "omega" => {
                    fit.omega = v;
                    4
                }
                other => return Err(Error::parse(idx + 1, format!("unknown key '{other}'"))),
            };
            seen[slot] = true;
        }
        if !seen.iter().all(|&s| s) {
            return Err(Error::parse(0, "seasonal fit needs a, b, c, beta and omega"));
        }
        Ok(fit)
    }
}

/// Least-squares seasonal fit with coefficient standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeasonalRegression {
    pub fit: SeasonalFit,
    /// Standard errors of `(a, b, c, beta)`; `beta`'s is zero when no trend is fitted.
    pub std_errors: [f64; 4],
    pub residual_variance: f64,
}

/// Ordinary least squares of `log X(t)` on `{cos ωt, sin ωt, 1}` and, with
/// `include_trend`, `−t`. Days are numbered from 1.
pub fn seasonal_regression(series: &DailySeries, include_trend: bool) -> Result<SeasonalRegression> {
    series.require_complete("seasonal fit")?;
    if let Some((i, v)) = series.values.iter().enumerate().find(|(_, &v)| v <= 0.0) {
        return Err(Error::Domain(format!(
            "value {v} at index {i} is not positive; cannot take logs"
        )));
    }
    let n = series.len();
    let p = if include_trend { 4 } else { 3 };
    if n <= p {
        return Err(Error::InsufficientData(format!(
            "{n} observations cannot identify {p} coefficients"
        )));
    }
    let omega = ANNUAL_OMEGA;
    let design = DMatrix::from_fn(n, p, |i, col| {
        let t = (i + 1) as f64;
        match col {
            0 => (omega * t).cos(),
            1 => (omega * t).sin(),
            2 => 1.0,
            _ => -t,
        }
    });
    let response = DVector::from_iterator(n, series.values.iter().map(|v| v.ln()));
    let qr = design.clone().qr();
    let r = qr.r();
    let qty = qr.q().transpose() * &response;
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Numerical("seasonal design matrix is rank deficient".into()))?;
    let residuals = &response - &design * &coef;
    let residual_variance = residuals.norm_squared() / (n - p) as f64;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::Numerical("seasonal design matrix is rank deficient".into()))?;
    // (XᵀX)⁻¹ = R⁻¹ R⁻ᵀ, so its diagonal is the row norms of R⁻¹.
    let mut std_errors = [0.0; 4];
    for (i, se) in std_errors.iter_mut().enumerate().take(p) {
        *se = (r_inv.row(i).norm_squared() * residual_variance).sqrt();
    }
    Ok(SeasonalRegression {
        fit: SeasonalFit {
            a: coef[0],
            b: coef[1],
            c: coef[2],
            beta: if include_trend { coef[3] } else { 0.0 },
            omega,
        },
        std_errors,
        residual_variance,
    })
}

/// Seasonal (and optionally log-linear) coefficients; see [`seasonal_regression`].
pub fn fit_seasonal(series: &DailySeries, include_trend: bool) -> Result<SeasonalFit> {
    seasonal_regression(series, include_trend).map(|r| r.fit)
}

/// `log X̃(t) = log X(t) + βt − a cos ωt − b sin ωt − c`, elementwise.
pub fn deseasonalise(series: &DailySeries, fit: &SeasonalFit) -> Result<DailySeries> {
    series.require_complete("deseasonalisation")?;
    let values = series
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| (v.ln() - fit.trend((i + 1) as f64)).exp())
        .collect();
    DailySeries::complete(series.start_date, values)
}

/// Sample autocorrelation at `lag`.
pub fn autocorrelation(values: &[f64], lag: usize) -> f64 {
    let n = values.len();
    if lag >= n {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let denom: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    if denom == 0.0 {
        return 0.0;
    }
    let num: f64 = (0..n - lag)
        .map(|i| (values[i] - mean) * (values[i + lag] - mean))
        .sum();
    num / denom
}

/// Day-by-day above (`true`) / below (`false`) threshold symbols.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinarySequence {
    symbols: Vec<bool>,
}

impl BinarySequence {
    pub fn new(symbols: Vec<bool>) -> Self {
        Self { symbols }
    }

    pub fn symbols(&self) -> &[bool] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Number of `above` symbols.
    pub fn n_plus(&self) -> usize {
        self.symbols.iter().filter(|&&s| s).count()
    }

    /// Number of maximal runs of equal symbols.
    pub fn runs(&self) -> usize {
        if self.symbols.is_empty() {
            return 0;
        }
        1 + self.symbols.windows(2).filter(|w| w[0] != w[1]).count()
    }

    /// 1-based positions of the `above` symbols.
    pub fn above_days(&self) -> Vec<f64> {
        self.symbols
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(i, _)| (i + 1) as f64)
            .collect()
    }

    /// Symbols for the 0-based index range `[lo, hi)`.
    pub fn slice(&self, lo: usize, hi: usize) -> Self {
        Self::new(self.symbols[lo..hi].to_vec())
    }
}

impl fmt::Display for BinarySequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &s in &self.symbols {
            f.write_str(if s { "+" } else { "-" })?;
        }
        Ok(())
    }
}

impl std::str::FromStr for BinarySequence {
    type Err = Error;

    /// Parses `+`/`-` strings; the Unicode minus sign is accepted too.
    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| match c {
                '+' => Ok(true),
                '-' | '−' => Ok(false),
                other => Err(Error::invalid(
                    "binary sequence",
                    format!("unexpected symbol '{other}'"),
                )),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholded {
    pub threshold: f64,
    pub events: ExceedanceSeries,
    pub binary: BinarySequence,
}

/// Empirical quantile by the order statistic at `ceil(q·n)` (1-based).
pub fn empirical_quantile(values: &[f64], q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("quantile level {q} is outside (0, 1)")));
    }
    if values.is_empty() {
        return Err(Error::InsufficientData("empty sample".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // The small offset keeps q·n that should be an integer from rounding up.
    let rank = ((q * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    Ok(sorted[rank - 1])
}

/// Threshold at the `quantile` order statistic; events are the 1-based days
/// strictly above it and the horizon is the series length.
pub fn threshold_exceedances(series: &DailySeries, quantile: f64) -> Result<Thresholded> {
    series.require_complete("thresholding")?;
    let threshold = empirical_quantile(&series.values, quantile)?;
    let binary = BinarySequence::new(series.values.iter().map(|&v| v > threshold).collect());
    let events = ExceedanceSeries::new(binary.above_days(), series.len() as f64)?;
    Ok(Thresholded {
        threshold,
        events,
        binary,
    })
}

/// One cluster of exceedances: 1-based first and last days and the chosen
/// representative day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub first: usize,
    pub last: usize,
    pub representative: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Declustered {
    /// One event per cluster, at the representative day.
    pub events: ExceedanceSeries,
    /// Day-aligned sequence keeping only the representatives as `above`.
    pub declustered: BinarySequence,
    /// The input with each cluster and its `m0` closing `below` symbols
    /// collapsed into one `above` token.
    pub relabelled: BinarySequence,
    pub clusters: Vec<Cluster>,
}

/// Replaces each cluster of exceedances with its maximum.
///
/// A cluster starts at an `above` symbol and stays open until `m0`
/// consecutive `below` symbols have been seen. The representative is the day
/// of the largest value in the cluster, the earliest on ties.
pub fn decluster(binary: &BinarySequence, values: &[f64], m0: usize) -> Result<Declustered> {
    if m0 == 0 {
        return Err(Error::Precondition("cluster gap m0 must be at least 1".into()));
    }
    if values.len() != binary.len() {
        return Err(Error::Precondition(format!(
            "{} values for {} symbols",
            values.len(),
            binary.len()
        )));
    }
    let symbols = binary.symbols();
    let mut clusters = Vec::new();
    let mut current: Option<(usize, usize, usize)> = None; // (first, last, best), 0-based
    let mut gap = 0;
    for (i, &above) in symbols.iter().enumerate() {
        if above {
            gap = 0;
            current = Some(match current {
                None => (i, i, i),
                Some((first, _, best)) => {
                    let best = if values[i] > values[best] { i } else { best };
                    (first, i, best)
                }
            });
        } else if let Some((first, last, best)) = current {
            gap += 1;
            if gap >= m0 {
                clusters.push(Cluster {
                    first: first + 1,
                    last: last + 1,
                    representative: best + 1,
                });
                current = None;
            }
        }
    }
    if let Some((first, last, best)) = current {
        clusters.push(Cluster {
            first: first + 1,
            last: last + 1,
            representative: best + 1,
        });
    }
    let mut kept = vec![false; symbols.len()];
    for c in &clusters {
        kept[c.representative - 1] = true;
    }
    let declustered = BinarySequence::new(kept);
    let relabelled = relabel(binary, m0);
    let events = ExceedanceSeries::new(
        clusters.iter().map(|c| c.representative as f64).collect(),
        binary.len().max(1) as f64,
    )?;
    Ok(Declustered {
        events,
        declustered,
        relabelled,
        clusters,
    })
}

/// Collapses each cluster, from its first `above` symbol through the `m0`
/// consecutive `below` symbols that close it, into a single `above` token.
///
/// On a declustered sequence every cluster is one `above` symbol, so this
/// merges each of them with the `m0` symbols that follow it. Under
/// independent input the output is again independent.
pub fn relabel(binary: &BinarySequence, m0: usize) -> BinarySequence {
    let symbols = binary.symbols();
    let mut out = Vec::with_capacity(symbols.len());
    let mut i = 0;
    while i < symbols.len() {
        if symbols[i] {
            out.push(true);
            i += 1;
            let mut gap = 0;
            while gap < m0 && i < symbols.len() {
                gap = if symbols[i] { 0 } else { gap + 1 };
                i += 1;
            }
        } else {
            out.push(false);
            i += 1;
        }
    }
    BinarySequence::new(out)
}

/// Wald–Wolfowitz runs test details.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunsTest {
    pub runs: usize,
    pub n_plus: usize,
    pub mean: f64,
    pub variance: f64,
    pub test: TestResult,
}

/// Normal approximation to the number of runs given the number of `above`
/// symbols; no continuity correction.
pub fn runs_test(binary: &BinarySequence) -> Result<RunsTest> {
    let n = binary.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "runs test needs at least 2 symbols, got {n}"
        )));
    }
    let n_plus = binary.n_plus();
    if n_plus == 0 || n_plus == n {
        return Err(Error::DegenerateSample(format!(
            "all {n} symbols are identical; runs test undefined"
        )));
    }
    let nf = n as f64;
    let mean = 1.0 + 2.0 * n_plus as f64 * (n - n_plus) as f64 / nf;
    let variance = (mean - 1.0) * (mean - 2.0) / (nf - 1.0);
    if variance <= 0.0 {
        return Err(Error::DegenerateSample(format!(
            "runs variance is zero for n = {n}, n+ = {n_plus}"
        )));
    }
    let runs = binary.runs();
    let z = (runs as f64 - mean) / variance.sqrt();
    Ok(RunsTest {
        runs,
        n_plus,
        mean,
        variance,
        test: TestResult::from_normal(z, n, TestMethod::Runs),
    })
}
