//! Summaries of a posterior sample of step rates: the distribution of the
//! number of change-points, kernel density estimates of locations and
//! heights, the posterior mean rate and a point estimate.

use std::collections::BTreeMap;
use std::io::{self, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_model::StepRate;
use crate::rjmcmc::ChainDiagnostics;
use crate::special::sorted_quantile;

/// Number of KDE grid points.
pub const KDE_GRID_POINTS: usize = 2048;
/// Default location bandwidth, days.
pub const DEFAULT_LOCATION_BANDWIDTH: f64 = 95.0;
/// Default height bandwidth, events per day.
pub const DEFAULT_HEIGHT_BANDWIDTH: f64 = 0.003;

/// Thinned post-burn-in states sharing one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorEnsemble {
    horizon: f64,
    samples: Vec<StepRate>,
    diagnostics: Option<ChainDiagnostics>,
}

impl PosteriorEnsemble {
    pub fn new(horizon: f64, samples: Vec<StepRate>) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid("posterior ensemble", format!("horizon {horizon}")));
        }
        if let Some(i) = samples
            .iter()
            .position(|s| (s.horizon() - horizon).abs() > 1e-9 * horizon)
        {
            return Err(Error::invalid(
                "posterior ensemble",
                format!("sample {i} has horizon {} instead of {horizon}", samples[i].horizon()),
            ));
        }
        Ok(Self {
            horizon,
            samples,
            diagnostics: None,
        })
    }

    pub fn with_diagnostics(mut self, diagnostics: ChainDiagnostics) -> Self {
        self.diagnostics = Some(diagnostics);
        self
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn samples(&self) -> &[StepRate] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn diagnostics(&self) -> Option<&ChainDiagnostics> {
        self.diagnostics.as_ref()
    }

    /// Concatenates ensembles from independent chains and sums their diagnostics.
    pub fn merge(parts: &[PosteriorEnsemble]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InsufficientData("no ensembles to merge".into()))?;
        let samples = parts.iter().flat_map(|p| p.samples.iter().cloned()).collect();
        let mut merged = Self::new(first.horizon, samples)?;
        let mut diag: Option<ChainDiagnostics> = None;
        for p in parts {
            if let Some(d) = &p.diagnostics {
                diag.get_or_insert_with(ChainDiagnostics::default).merge(d);
            }
        }
        merged.diagnostics = diag;
        Ok(merged)
    }

    /// Distinct `k` values present, ascending.
    pub fn k_values(&self) -> Vec<usize> {
        let mut ks: Vec<usize> = self.samples.iter().map(StepRate::k).collect();
        ks.sort_unstable();
        ks.dedup();
        ks
    }

    fn with_k(&self, k: usize) -> Result<Vec<&StepRate>> {
        let chosen: Vec<&StepRate> = self.samples.iter().filter(|s| s.k() == k).collect();
        if chosen.is_empty() {
            return Err(Error::MissingDimension {
                requested: k,
                available: self.k_values(),
            });
        }
        Ok(chosen)
    }

    /// Writes `# horizon=T` and one `k,s_1..s_k,h_0..h_k` row per sample.
    pub fn write_table<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# horizon={}", self.horizon)?;
        for s in &self.samples {
            let mut row = s.k().to_string();
            for v in s.changepoints().iter().chain(s.heights()) {
                row.push(',');
                row.push_str(&v.to_string());
            }
            writeln!(out, "{row}")?;
        }
        Ok(())
    }

    pub fn to_table_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_table(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("table output is ASCII")
    }

    pub fn parse_table(text: &str) -> Result<Self> {
        let mut horizon = None;
        let mut samples = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if let Some(v) = meta.trim().strip_prefix("horizon=") {
                    horizon = Some(
                        v.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::parse(line_no, format!("bad horizon '{v}'")))?,
                    );
                }
                continue;
            }
            let t = horizon.ok_or_else(|| Error::parse(line_no, "sample row before '# horizon=' line"))?;
            let mut fields = line.split(',').map(str::trim);
            let k: usize = fields
                .next()
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| Error::parse(line_no, "row must start with an integer k"))?;
            let values = fields
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| Error::parse(line_no, format!("bad number '{f}'")))
                })
                .collect::<Result<Vec<_>>>()?;
            if values.len() != 2 * k + 1 {
                return Err(Error::parse(
                    line_no,
                    format!("k = {k} needs {} values, found {}", 2 * k + 1, values.len()),
                ));
            }
            let rate = StepRate::new(values[..k].to_vec(), values[k..].to_vec(), t)
                .map_err(|e| Error::parse(line_no, e.to_string()))?;
            samples.push(rate);
        }
        let t = horizon.ok_or_else(|| Error::parse(0, "missing '# horizon=' line"))?;
        Self::new(t, samples)
    }
}

/// Kernel density estimate on a grid, with sample quartiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
    /// Grid point of largest density.
    pub mode: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

impl DensityEstimate {
    /// `grid,density` rows.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("grid,density\n");
        for (g, d) in self.grid.iter().zip(&self.density) {
            out.push_str(&format!("{g},{d}\n"));
        }
        out
    }

    /// Trapezoid integral of the density over the grid.
    pub fn mass(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Gaussian KDE of `values` on `points` equally spaced grid points over
/// `[lo, hi]`, rescaled to unit trapezoid mass.
pub fn kernel_density(values: &[f64], bandwidth: f64, lo: f64, hi: f64, points: usize) -> Result<DensityEstimate> {
    if values.is_empty() {
        return Err(Error::InsufficientData("density estimate of an empty sample".into()));
    }
    if !(bandwidth.is_finite() && bandwidth > 0.0) {
        return Err(Error::Configuration(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }
    if !(hi > lo) || points < 2 {
        return Err(Error::Domain(format!("KDE grid [{lo}, {hi}] with {points} points")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let step = (hi - lo) / (points - 1) as f64;
    let grid: Vec<f64> = (0..points).map(|i| lo + step * i as f64).collect();
    let reach = 8.0 * bandwidth;
    let inv = 1.0 / bandwidth;
    let mut density: Vec<f64> = grid
        .iter()
        .map(|&g| {
            let a = sorted.partition_point(|&v| v < g - reach);
            let b = sorted.partition_point(|&v| v <= g + reach);
            sorted[a..b]
                .iter()
                .map(|&v| {
                    let z = (g - v) * inv;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
        })
        .collect();
    let mass = trapezoid(&grid, &density);
    if !(mass > 0.0) {
        return Err(Error::Numerical(format!(
            "density estimate has no mass on [{lo}, {hi}] at bandwidth {bandwidth}"
        )));
    }
    density.iter_mut().for_each(|d| *d /= mass);
    let mut mode_idx = 0;
    for (i, &d) in density.iter().enumerate() {
        if d > density[mode_idx] {
            mode_idx = i;
        }
    }
    Ok(DensityEstimate {
        mode: grid[mode_idx],
        q25: sorted_quantile(&sorted, 0.25),
        median: sorted_quantile(&sorted, 0.5),
        q75: sorted_quantile(&sorted, 0.75),
        grid,
        density,
        bandwidth,
    })
}

/// Empirical probabilities of each `k`.
pub fn k_distribution(ens: &PosteriorEnsemble) -> Result<BTreeMap<usize, f64>> {
    if ens.is_empty() {
        return Err(Error::InsufficientData("empty posterior ensemble".into()));
    }
    let mut counts = BTreeMap::new();
    for s in ens.samples() {
        *counts.entry(s.k()).or_insert(0usize) += 1;
    }
    let n = ens.len() as f64;
    Ok(counts.into_iter().map(|(k, c)| (k, c as f64 / n)).collect())
}

/// Most frequent `k`; ties go to the smaller `k`.
pub fn k_mode(pmf: &BTreeMap<usize, f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (&k, &p) in pmf {
        if best.is_none_or(|(_, bp)| p > bp) {
            best = Some((k, p));
        }
    }
    best.map(|(k, _)| k)
}

/// Density of each change-point `s_1..s_k*` over `[0, T]` among samples with `k = k_star`.
pub fn location_summaries(ens: &PosteriorEnsemble, k_star: usize, bandwidth: f64) -> Result<Vec<DensityEstimate>> {
    let chosen = ens.with_k(k_star)?;
    (0..k_star)
        .map(|j| {
            let pool: Vec<f64> = chosen.iter().map(|s| s.changepoints()[j]).collect();
            kernel_density(&pool, bandwidth, 0.0, ens.horizon(), KDE_GRID_POINTS)
        })
        .collect()
}

/// Density of each height `h_0..h_k*` over `[0, 1.2 max]` among samples with `k = k_star`.
pub fn height_summaries(ens: &PosteriorEnsemble, k_star: usize, bandwidth: f64) -> Result<Vec<DensityEstimate>> {
    let chosen = ens.with_k(k_star)?;
    (0..=k_star)
        .map(|j| {
            let pool: Vec<f64> = chosen.iter().map(|s| s.heights()[j]).collect();
            let top = pool.iter().copied().fold(0.0, f64::max) * 1.2;
            kernel_density(&pool, bandwidth, 0.0, top, KDE_GRID_POINTS)
        })
        .collect()
}

/// Pointwise posterior mean of `λ(t)` over the grid.
pub fn mean_rate(ens: &PosteriorEnsemble, grid: &[f64]) -> Result<Vec<f64>> {
    mean_rate_subsampled(ens, grid, ens.len())
}

/// As [`mean_rate`], averaging at most `max_samples` evenly spaced samples.
pub fn mean_rate_subsampled(ens: &PosteriorEnsemble, grid: &[f64], max_samples: usize) -> Result<Vec<f64>> {
    if ens.is_empty() || max_samples == 0 {
        return Err(Error::InsufficientData("empty posterior ensemble".into()));
    }
    if let Some(&g) = grid.iter().find(|&&g| !(0.0..=ens.horizon()).contains(&g)) {
        return Err(Error::Domain(format!(
            "grid point {g} is outside [0, {}]",
            ens.horizon()
        )));
    }
    let n = ens.len();
    let used = max_samples.min(n);
    let mut acc = vec![0.0; grid.len()];
    for i in 0..used {
        let s = &ens.samples()[i * n / used];
        for (a, &g) in acc.iter_mut().zip(grid) {
            *a += s.rate_at(g);
        }
    }
    acc.iter_mut().for_each(|a| *a /= used as f64);
    Ok(acc)
}

/// Point estimate and the summaries it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEstimate {
    pub rate: StepRate,
    pub k_hat: usize,
    pub locations: Vec<DensityEstimate>,
    pub heights: Vec<DensityEstimate>,
    /// True when the location modes were unusable and medians were taken.
    pub location_fallback: bool,
}

/// Step rate built from the most probable `k` and the KDE modes of its
/// change-points and heights.
pub fn point_estimate(ens: &PosteriorEnsemble, loc_bw: f64, h_bw: f64) -> Result<StepRate> {
    point_estimate_detailed(ens, loc_bw, h_bw).map(|p| p.rate)
}

fn strictly_inside(points: &[f64], horizon: f64) -> bool {
    let mut prev = 0.0;
    for &p in points {
        if !(p > prev && p < horizon) {
            return false;
        }
        prev = p;
    }
    true
}

pub fn point_estimate_detailed(ens: &PosteriorEnsemble, loc_bw: f64, h_bw: f64) -> Result<PointEstimate> {
    let pmf = k_distribution(ens)?;
    let k_hat = k_mode(&pmf).expect("non-empty pmf");
    let locations = location_summaries(ens, k_hat, loc_bw)?;
    let heights = height_summaries(ens, k_hat, h_bw)?;
    let mut s: Vec<f64> = locations.iter().map(|d| d.mode).collect();
    let mut location_fallback = false;
    if !strictly_inside(&s, ens.horizon()) {
        location_fallback = true;
        s = locations.iter().map(|d| d.median).collect();
        if !strictly_inside(&s, ens.horizon()) {
            return Err(Error::Numerical(format!(
                "neither modes nor medians of the change-points are increasing inside (0, T): {s:?}"
            )));
        }
    }
    let h: Vec<f64> = heights
        .iter()
        .map(|d| if d.mode > 0.0 { d.mode } else { d.median })
        .collect();
    let rate = StepRate::new(s, h, ens.horizon())?;
    Ok(PointEstimate {
        rate,
        k_hat,
        locations,
        heights,
        location_fallback,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangepointSummary {
    pub index: usize,
    pub mode: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub mode_date: Option<NaiveDate>,
    pub q25_date: Option<NaiveDate>,
    pub q75_date: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightSummary {
    pub index: usize,
    pub mode: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

/// JSON-ready digest of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub horizon: f64,
    pub n_samples: usize,
    pub k_pmf: BTreeMap<usize, f64>,
    pub k_hat: usize,
    pub changepoints: Vec<ChangepointSummary>,
    pub heights: Vec<HeightSummary>,
    pub point_estimate: StepRate,
    pub location_fallback: bool,
    pub location_bandwidth: f64,
    pub height_bandwidth: f64,
    pub diagnostics: Option<ChainDiagnostics>,
}

/// Builds a [`PosteriorSummary`]; with `start_date`, change-point days are
/// also given as calendar dates (day 1 is `start_date`).
pub fn summarise(
    ens: &PosteriorEnsemble,
    loc_bw: f64,
    h_bw: f64,
    start_date: Option<NaiveDate>,
) -> Result<PosteriorSummary> {
    let pe = point_estimate_detailed(ens, loc_bw, h_bw)?;
    let date = |d: f64| start_date.map(|s| crate::preprocess::date_of_day(s, d));
    let changepoints = pe
        .locations
        .iter()
        .enumerate()
        .map(|(j, d)| ChangepointSummary {
            index: j + 1,
            mode: d.mode,
            q25: d.q25,
            median: d.median,
            q75: d.q75,
            mode_date: date(d.mode),
            q25_date: date(d.q25),
            q75_date: date(d.q75),
        })
        .collect();
    let heights = pe
        .heights
        .iter()
        .enumerate()
        .map(|(j, d)| HeightSummary {
            index: j,
            mode: d.mode,
            median: d.median,
            q25: d.q25,
            q75: d.q75,
        })
        .collect();
    Ok(PosteriorSummary {
        horizon: ens.horizon(),
        n_samples: ens.len(),
        k_pmf: k_distribution(ens)?,
        k_hat: pe.k_hat,
        changepoints,
        heights,
        point_estimate: pe.rate,
        location_fallback: pe.location_fallback,
        location_bandwidth: loc_bw,
        height_bandwidth: h_bw,
        diagnostics: ens.diagnostics().copied(),
    })
}
