//! Posterior-predictive replication of the counting process and the
//! iterative decluster-and-refit workflow.

use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_model::{simulate_conditional, simulate_direct, CountingPath, ExceedanceSeries, StepRate};
use crate::posterior::{
    k_distribution, point_estimate_detailed, PosteriorEnsemble, DEFAULT_HEIGHT_BANDWIDTH, DEFAULT_LOCATION_BANDWIDTH,
};
use crate::preprocess::{
    decluster, deseasonalise, impute_missing, relabel, runs_test, seasonal_regression, threshold_exceedances,
    BinarySequence, DailySeries, RunsTest, SeasonalFit,
};
use crate::rjmcmc::{run_chain, ChainConfig, PriorConfig};
use crate::special::sorted_quantile;

/// Replication settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplicationConfig {
    pub n_rep: usize,
    /// Fix each replicate's total count at the observed one.
    pub conditional: bool,
    /// Central probability of the envelope.
    pub level: f64,
    /// Reflect replicated and observed events, `t → T − t`, before counting.
    pub time_reversed: bool,
    pub grid_points: usize,
}

impl Default for ReplicationConfig {
    fn default() -> Self {
        Self {
            n_rep: 1000,
            conditional: false,
            level: 0.9,
            time_reversed: false,
            grid_points: 501,
        }
    }
}

/// Replicated counting paths on a common grid with their pointwise mean and
/// central envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationEnsemble {
    pub grid: Vec<f64>,
    pub paths: Vec<CountingPath>,
    pub conditional: bool,
    pub time_reversed: bool,
    pub level: f64,
    pub pointwise_mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ReplicationEnsemble {
    pub fn final_counts(&self) -> Vec<u64> {
        self.paths.iter().map(CountingPath::final_count).collect()
    }

    /// Fraction of grid points where `observed` lies inside the envelope.
    pub fn coverage(&self, observed: &CountingPath) -> Result<f64> {
        if observed.grid != self.grid {
            return Err(Error::Precondition("observed path uses a different grid".into()));
        }
        let inside = observed
            .counts
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .filter(|(&c, (&lo, &hi))| lo <= c as f64 && c as f64 <= hi)
            .count();
        Ok(inside as f64 / self.grid.len() as f64)
    }

    /// `grid,mean,lo,hi,observed` rows.
    pub fn to_csv_string(&self, observed: &CountingPath) -> Result<String> {
        if observed.grid != self.grid {
            return Err(Error::Precondition("observed path uses a different grid".into()));
        }
        let mut out = String::from("grid,mean,lo,hi,observed\n");
        for i in 0..self.grid.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.grid[i], self.pointwise_mean[i], self.lower[i], self.upper[i], observed.counts[i]
            ));
        }
        Ok(out)
    }
}

/// `points` equally spaced times on `[0, horizon]`.
pub fn uniform_grid(horizon: f64, points: usize) -> Vec<f64> {
    let points = points.max(2);
    (0..points).map(|i| horizon * i as f64 / (points - 1) as f64).collect()
}

fn reflect(times: &[f64], horizon: f64) -> Vec<f64> {
    times.iter().rev().map(|&t| horizon - t).collect()
}

/// Counting path of `events`, reflected in time when asked.
pub fn observed_path(events: &ExceedanceSeries, grid: &[f64], time_reversed: bool) -> CountingPath {
    if time_reversed {
        CountingPath::from_events(&reflect(events.times(), events.horizon()), grid)
    } else {
        CountingPath::from_events(events.times(), grid)
    }
}

/// Simulates `cfg.n_rep` datasets, each from a rate drawn uniformly from the
/// ensemble, and summarises their counting paths on `grid`. Conditional
/// replicates have exactly `n_obs` events.
pub fn replicate_predictive<R: Rng + ?Sized>(
    ens: &PosteriorEnsemble,
    cfg: &ReplicationConfig,
    n_obs: Option<usize>,
    grid: &[f64],
    rng: &mut R,
) -> Result<ReplicationEnsemble> {
    if ens.is_empty() {
        return Err(Error::InsufficientData("empty posterior ensemble".into()));
    }
    if cfg.n_rep == 0 {
        return Err(Error::Configuration("n_rep must be at least 1".into()));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(Error::Configuration(format!(
            "envelope level {} is outside (0, 1)",
            cfg.level
        )));
    }
    let n_cond = match (cfg.conditional, n_obs) {
        (true, None) => {
            return Err(Error::Configuration(
                "conditional replication needs the observed count".into(),
            ))
        }
        (true, Some(n)) => Some(n),
        (false, _) => None,
    };
    let horizon = ens.horizon();
    let mut paths = Vec::with_capacity(cfg.n_rep);
    for _ in 0..cfg.n_rep {
        let rate = &ens.samples()[rng.random_range(0..ens.len())];
        let sim = match n_cond {
            Some(n) => simulate_conditional(rate, n, rng),
            None => simulate_direct(rate, rng),
        };
        let times = if cfg.time_reversed {
            reflect(sim.times(), horizon)
        } else {
            sim.times().to_vec()
        };
        paths.push(CountingPath::from_events(&times, grid));
    }
    let alpha = (1.0 - cfg.level) / 2.0;
    let mut pointwise_mean = Vec::with_capacity(grid.len());
    let mut lower = Vec::with_capacity(grid.len());
    let mut upper = Vec::with_capacity(grid.len());
    let mut column = Vec::with_capacity(cfg.n_rep);
    for g in 0..grid.len() {
        column.clear();
        column.extend(paths.iter().map(|p| p.counts[g] as f64));
        pointwise_mean.push(column.iter().sum::<f64>() / cfg.n_rep as f64);
        column.sort_by(f64::total_cmp);
        lower.push(sorted_quantile(&column, alpha));
        upper.push(sorted_quantile(&column, 1.0 - alpha));
    }
    Ok(ReplicationEnsemble {
        grid: grid.to_vec(),
        paths,
        conditional: cfg.conditional,
        time_reversed: cfg.time_reversed,
        level: cfg.level,
        pointwise_mean,
        lower,
        upper,
    })
}

/// All settings of the preprocessing and decluster/refit workflow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub quantile: f64,
    pub m0: usize,
    pub half_window: usize,
    pub include_trend: bool,
    pub prior: PriorConfig,
    pub chain: ChainConfig,
    pub location_bandwidth: f64,
    pub height_bandwidth: f64,
    pub replication: ReplicationConfig,
    pub max_iterations: usize,
    /// Largest change-point shift, in days, still counted as stable.
    pub stability_days: f64,
    /// Per-segment runs-test level.
    pub runs_level: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            quantile: 0.9,
            m0: 1,
            half_window: 65,
            include_trend: false,
            prior: PriorConfig::default(),
            chain: ChainConfig::default(),
            location_bandwidth: DEFAULT_LOCATION_BANDWIDTH,
            height_bandwidth: DEFAULT_HEIGHT_BANDWIDTH,
            replication: ReplicationConfig {
                conditional: true,
                ..ReplicationConfig::default()
            },
            max_iterations: 5,
            stability_days: 30.0,
            runs_level: 0.05,
        }
    }
}

/// Output of the preprocessing stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessed {
    pub series: DailySeries,
    pub missing_fraction: f64,
    pub seasonal: SeasonalFit,
    pub seasonal_std_errors: [f64; 4],
    pub deseasonalised: DailySeries,
    pub threshold: f64,
    pub raw_events: ExceedanceSeries,
    pub raw_binary: BinarySequence,
    pub declustered_events: ExceedanceSeries,
    pub declustered_binary: BinarySequence,
    pub relabelled: BinarySequence,
    pub n_clusters: usize,
}

impl Preprocessed {
    /// Counts, threshold and whole-series runs tests; a runs test that
    /// cannot be computed is `None`.
    pub fn summary(&self) -> PreprocessSummary {
        PreprocessSummary {
            n_days: self.series.len(),
            missing_fraction: self.missing_fraction,
            seasonal: self.seasonal,
            seasonal_std_errors: self.seasonal_std_errors,
            threshold: self.threshold,
            n_exceedances: self.raw_events.len(),
            n_clusters: self.n_clusters,
            raw_runs: runs_test(&self.raw_binary).ok(),
            relabelled_runs: runs_test(&self.relabelled).ok(),
        }
    }
}

/// Impute, deseasonalise, threshold and decluster.
pub fn preprocess_series<R: Rng + ?Sized>(
    series: &DailySeries,
    cfg: &PipelineConfig,
    rng: &mut R,
) -> Result<Preprocessed> {
    let missing_fraction = series.missing_fraction();
    let imputed = impute_missing(series, cfg.half_window, rng)?;
    let reg = seasonal_regression(&imputed, cfg.include_trend)?;
    let flat = deseasonalise(&imputed, &reg.fit)?;
    let th = threshold_exceedances(&flat, cfg.quantile)?;
    let dc = decluster(&th.binary, flat.values(), cfg.m0)?;
    Ok(Preprocessed {
        series: imputed,
        missing_fraction,
        seasonal: reg.fit,
        seasonal_std_errors: reg.std_errors,
        deseasonalised: flat,
        threshold: th.threshold,
        raw_events: th.events,
        raw_binary: th.binary,
        n_clusters: dc.clusters.len(),
        declustered_events: dc.events,
        declustered_binary: dc.declustered,
        relabelled: dc.relabelled,
    })
}

/// 0-based day-index range `[lo, hi)` of the days `d` (1-based) with
/// `a ≤ d < b`, or `a ≤ d ≤ n` for the final segment.
pub fn segment_days(a: f64, b: f64, n_days: usize, last: bool) -> (usize, usize) {
    let lo = (a.ceil().max(1.0) as usize - 1).min(n_days);
    let hi = if last {
        n_days
    } else {
        ((b.ceil().max(1.0) as usize) - 1).min(n_days)
    };
    (lo, hi.max(lo))
}

/// Runs test on one inter-change-point segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRuns {
    pub index: usize,
    pub start: f64,
    pub end: f64,
    pub n_symbols: usize,
    pub result: Option<RunsTest>,
    /// The segment does not reject independence at the configured level.
    pub accepted: bool,
    pub note: Option<String>,
}

/// Runs tests per segment of `binary` between `changepoints`; with
/// `relabel_m0`, each segment is relabelled before testing.
pub fn segment_runs(
    binary: &BinarySequence,
    changepoints: &[f64],
    relabel_m0: Option<usize>,
    level: f64,
) -> Vec<SegmentRuns> {
    let n = binary.len();
    let mut edges = vec![0.0];
    edges.extend_from_slice(changepoints);
    edges.push(n as f64);
    let last = edges.len() - 2;
    edges
        .windows(2)
        .enumerate()
        .map(|(j, w)| {
            let (lo, hi) = segment_days(w[0], w[1], n, j == last);
            let mut seg = binary.slice(lo, hi);
            if let Some(m0) = relabel_m0 {
                seg = relabel(&seg, m0);
            }
            let (result, accepted, note) = match runs_test(&seg) {
                Ok(r) => {
                    let ok = r.test.p_two_sided >= level;
                    (Some(r), ok, None)
                }
                Err(e) => (None, true, Some(e.to_string())),
            };
            SegmentRuns {
                index: j,
                start: w[0],
                end: w[1],
                n_symbols: seg.len(),
                result,
                accepted,
                note,
            }
        })
        .collect()
}

/// Posterior point estimate from one MCMC run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitStage {
    pub n_events: usize,
    pub k_hat: usize,
    pub k_pmf: std::collections::BTreeMap<usize, f64>,
    pub estimate: StepRate,
    pub location_fallback: bool,
}

fn fit_stage<R: Rng + ?Sized>(
    events: &ExceedanceSeries,
    cfg: &PipelineConfig,
    rng: &mut R,
) -> Result<(FitStage, PosteriorEnsemble)> {
    let ens = run_chain(events, &cfg.prior, &cfg.chain, rng)?;
    let pe = point_estimate_detailed(&ens, cfg.location_bandwidth, cfg.height_bandwidth)?;
    Ok((
        FitStage {
            n_events: events.len(),
            k_hat: pe.k_hat,
            k_pmf: k_distribution(&ens)?,
            estimate: pe.rate,
            location_fallback: pe.location_fallback,
        },
        ens,
    ))
}

/// One pass of steps (iii)–(iv).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub changepoints_tested: Vec<f64>,
    pub declustered_runs: Vec<SegmentRuns>,
    pub all_accept: bool,
    pub fit: Option<FitStage>,
    /// Same `k̂` as the previous fit and every change-point within the
    /// stability tolerance of its previous value.
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSummary {
    pub n_days: usize,
    pub missing_fraction: f64,
    pub seasonal: SeasonalFit,
    pub seasonal_std_errors: [f64; 4],
    pub threshold: f64,
    pub n_exceedances: usize,
    pub n_clusters: usize,
    pub raw_runs: Option<RunsTest>,
    pub relabelled_runs: Option<RunsTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub n_rep: usize,
    pub conditional: bool,
    pub time_reversed: bool,
    pub level: f64,
    pub observed_final: u64,
    pub mean_final: f64,
    pub coverage: f64,
}

/// Endpoint mean and envelope coverage of `observed`.
pub fn summarise_replication(
    cfg: &ReplicationConfig,
    replication: &ReplicationEnsemble,
    observed: &CountingPath,
) -> Result<ReplicationSummary> {
    let finals = replication.final_counts();
    Ok(ReplicationSummary {
        n_rep: cfg.n_rep,
        conditional: cfg.conditional,
        time_reversed: cfg.time_reversed,
        level: cfg.level,
        observed_final: observed.final_count(),
        mean_final: finals.iter().sum::<u64>() as f64 / finals.len() as f64,
        coverage: replication.coverage(observed)?,
    })
}

/// Structured record of every stage of [`iterate_pipeline`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub preprocessing: PreprocessSummary,
    /// Step (i): fit to the raw exceedances.
    pub raw_fit: FitStage,
    /// Step (ii): runs tests on the raw sequence.
    pub raw_runs: Vec<SegmentRuns>,
    /// Steps (iii)–(v).
    pub iterations: Vec<IterationReport>,
    pub converged: bool,
    pub stop_reason: String,
    pub final_estimate: StepRate,
    /// Step (vi).
    pub replication: ReplicationSummary,
}

/// Everything [`iterate_pipeline`] produces.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: PipelineReport,
    pub preprocessed: Preprocessed,
    /// Events the final ensemble was fitted to.
    pub final_events: ExceedanceSeries,
    pub ensemble: PosteriorEnsemble,
    pub replication: ReplicationEnsemble,
    pub observed: CountingPath,
}

fn is_stable(prev: &StepRate, next: &StepRate, tol: f64) -> bool {
    prev.k() == next.k()
        && prev
            .changepoints()
            .iter()
            .zip(next.changepoints())
            .all(|(a, b)| (a - b).abs() < tol)
}

/// Preprocess once, then: (i) fit the raw exceedances; (ii) runs-test each
/// segment of the raw sequence; (iii) runs-test each segment of the raw
/// sequence after relabelling its clusters; (iv) if every segment accepts, refit on
/// the declustered events; (v) repeat (iii)–(iv) until the estimate is
/// stable or `max_iterations` passes; (vi) replicate the counting process
/// from the last posterior.
///
/// A rejection in (iii) or hitting the iteration cap ends the loop with
/// `converged = false`; it is not an error.
pub fn iterate_pipeline<R: Rng + ?Sized>(
    series: &DailySeries,
    cfg: &PipelineConfig,
    rng: &mut R,
) -> Result<PipelineOutput> {
    if cfg.max_iterations == 0 {
        return Err(Error::Configuration("max_iterations must be at least 1".into()));
    }
    let pre = preprocess_series(series, cfg, rng)?;
    let preprocessing = pre.summary();

    let (raw_fit, raw_ens) = fit_stage(&pre.raw_events, cfg, rng)?;
    let raw_runs = segment_runs(&pre.raw_binary, raw_fit.estimate.changepoints(), None, cfg.runs_level);

    let mut current = raw_fit.estimate.clone();
    let mut ensemble = raw_ens;
    let mut final_events = pre.raw_events.clone();
    let mut iterations = Vec::new();
    let mut converged = false;
    let mut stop_reason = format!("iteration cap of {} reached", cfg.max_iterations);
    for iteration in 1..=cfg.max_iterations {
        let tested = current.changepoints().to_vec();
        let runs = segment_runs(&pre.raw_binary, &tested, Some(cfg.m0), cfg.runs_level);
        let all_accept = runs.iter().all(|r| r.accepted);
        if !all_accept {
            iterations.push(IterationReport {
                iteration,
                changepoints_tested: tested,
                declustered_runs: runs,
                all_accept,
                fit: None,
                stable: false,
            });
            stop_reason = format!("runs test rejected independence of the declustered data in iteration {iteration}");
            break;
        }
        let (fit, ens) = fit_stage(&pre.declustered_events, cfg, rng)?;
        let stable = is_stable(&current, &fit.estimate, cfg.stability_days);
        current = fit.estimate.clone();
        ensemble = ens;
        final_events = pre.declustered_events.clone();
        iterations.push(IterationReport {
            iteration,
            changepoints_tested: tested,
            declustered_runs: runs,
            all_accept,
            fit: Some(fit),
            stable,
        });
        if stable {
            converged = true;
            stop_reason = format!("estimate stable after iteration {iteration}");
            break;
        }
    }

    let grid = uniform_grid(final_events.horizon(), cfg.replication.grid_points);
    let replication = replicate_predictive(&ensemble, &cfg.replication, Some(final_events.len()), &grid, rng)?;
    let observed = observed_path(&final_events, &grid, cfg.replication.time_reversed);
    let replication_summary = summarise_replication(&cfg.replication, &replication, &observed)?;
    Ok(PipelineOutput {
        report: PipelineReport {
            preprocessing,
            raw_fit,
            raw_runs,
            iterations,
            converged,
            stop_reason,
            final_estimate: current,
            replication: replication_summary,
        },
        preprocessed: pre,
        final_events,
        ensemble,
        replication,
        observed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn conditional_paths_end_at_observed_count() {
        let s = StepRate::new(vec![3.0], vec![1.0, 0.2], 10.0).unwrap();
        let ens = PosteriorEnsemble::new(10.0, vec![s]).unwrap();
        let cfg = ReplicationConfig {
            n_rep: 200,
            conditional: true,
            ..ReplicationConfig::default()
        };
        let grid = uniform_grid(10.0, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rep = replicate_predictive(&ens, &cfg, Some(5), &grid, &mut rng).unwrap();
        assert!(rep.final_counts().iter().all(|&c| c == 5));
        for w in rep.pointwise_mean.windows(2) {
            assert!(w[0] <= w[1]);
        }
        for i in 0..grid.len() {
            assert!(rep.lower[i] <= rep.upper[i]);
        }
        assert!(replicate_predictive(&ens, &cfg, None, &grid, &mut rng).is_err());
    }

    #[test]
    fn time_reversal_reflects_paths() {
        let s = StepRate::new(vec![2.0], vec![5.0, 0.01], 10.0).unwrap();
        let ens = PosteriorEnsemble::new(10.0, vec![s]).unwrap();
        let grid = uniform_grid(10.0, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = ReplicationConfig {
            n_rep: 100,
            time_reversed: true,
            ..ReplicationConfig::default()
        };
        let rep = replicate_predictive(&ens, &cfg, None, &grid, &mut rng).unwrap();
        // Reversed, the busy early interval arrives at the end.
        assert!(rep.pointwise_mean[7] < 1.0);
        assert!(rep.pointwise_mean[10] > 8.0);
    }

    #[test]
    fn segment_day_ranges() {
        assert_eq!(segment_days(0.0, 4.5, 10, false), (0, 4));
        assert_eq!(segment_days(4.5, 10.0, 10, true), (4, 10));
        assert_eq!(segment_days(4.0, 7.0, 10, false), (3, 6));
    }

    #[test]
    fn segment_runs_cover_every_day() {
        let b: BinarySequence = "+-+--++-+---+-+-".parse().unwrap();
        let segs = segment_runs(&b, &[5.5, 11.0], None, 0.05);
        assert_eq!(segs.iter().map(|s| s.n_symbols).sum::<usize>(), b.len());
    }

    #[test]
    fn stability_rule() {
        let a = StepRate::new(vec![100.0], vec![1.0, 2.0], 1000.0).unwrap();
        let b = StepRate::new(vec![125.0], vec![1.5, 2.0], 1000.0).unwrap();
        let c = StepRate::new(vec![131.0], vec![1.5, 2.0], 1000.0).unwrap();
        assert!(is_stable(&a, &b, 30.0));
        assert!(!is_stable(&a, &c, 30.0));
        assert!(!is_stable(&a, &StepRate::constant(1.0, 1000.0).unwrap(), 30.0));
    }
}
