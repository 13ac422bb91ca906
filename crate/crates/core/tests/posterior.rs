mod common;

use std::sync::OnceLock;

use common::*;
use proptest::prelude::*;
use rjpoisson::posterior::*;
use rjpoisson::rjmcmc::{run_chain, ChainConfig, PriorConfig};
use rjpoisson::*;

struct Recovery {
    events: ExceedanceSeries,
    ensemble: PosteriorEnsemble,
}

/// Ten default-length fits to data simulated from the one-change-point geometry.
fn recoveries() -> &'static [Recovery] {
    static RUNS: OnceLock<Vec<Recovery>> = OnceLock::new();
    RUNS.get_or_init(|| {
        (0..10)
            .map(|seed| {
                let mut r = rng(seed);
                let events = simulate_direct(&no2_rate(), &mut r);
                let ensemble = run_chain(&events, &PriorConfig::default(), &ChainConfig::default(), &mut r).unwrap();
                Recovery { events, ensemble }
            })
            .collect()
    })
}

#[test]
fn recovered_location_mode_lies_in_reported_band() {
    let inside = recoveries()
        .iter()
        .filter(|run| {
            let loc = location_summaries(&run.ensemble, 1, DEFAULT_LOCATION_BANDWIDTH).unwrap();
            (2425.0..=2589.0).contains(&loc[0].mode)
        })
        .count();
    assert!(inside >= 8, "{inside} of 10 inside");
}

#[test]
fn height_interquartile_coverage_is_calibrated() {
    // Each interquartile range is a 50% credible interval.
    let mut covered = 0;
    for run in recoveries() {
        let hs = height_summaries(&run.ensemble, 1, DEFAULT_HEIGHT_BANDWIDTH).unwrap();
        for (h, truth) in hs.iter().zip(NO2_HEIGHTS) {
            if h.q25 <= truth && truth <= h.q75 {
                covered += 1;
            }
        }
    }
    // Binomial(20, ½) central 99% band.
    assert!((4..=16).contains(&covered), "{covered} of 20 covered");
}

#[test]
fn height_densities_are_smooth() {
    for run in recoveries() {
        for h in height_summaries(&run.ensemble, 1, DEFAULT_HEIGHT_BANDWIDTH).unwrap() {
            let top = h.density.iter().cloned().fold(0.0, f64::max);
            let peaks = h
                .density
                .windows(3)
                .filter(|w| w[1] > w[0] && w[1] >= w[2] && w[1] > top / 2.0)
                .count();
            assert!(peaks <= 2, "{peaks} peaks above half maximum");
            assert!((h.mass() - 1.0).abs() < 1e-3);
        }
    }
}

#[test]
fn mean_rate_switches_plateau_near_changepoint() {
    let window = 3.0 * DEFAULT_LOCATION_BANDWIDTH;
    let mid = 0.5 * (NO2_HEIGHTS[0] + NO2_HEIGHTS[1]);
    let grid: Vec<f64> = (0..=620).map(|i| i as f64 * 10.0).chain([NO2_HORIZON]).collect();
    let mut sharp = 0;
    for run in recoveries() {
        let lam = mean_rate_subsampled(&run.ensemble, &grid, 5000).unwrap();
        let before = grid.iter().zip(&lam).filter(|(t, _)| **t < NO2_CHANGEPOINT - window);
        let after = grid.iter().zip(&lam).filter(|(t, _)| **t > NO2_CHANGEPOINT + window);
        if before.clone().all(|(_, l)| *l > mid) && after.clone().all(|(_, l)| *l < mid) {
            sharp += 1;
        }
    }
    assert!(sharp >= 9, "{sharp} of 10 switch inside the window");
}

#[test]
fn mean_rate_integral_equals_average_mass() {
    let run = &recoveries()[0];
    let grid: Vec<f64> = (0..=62060).map(|i| i as f64 * 0.1).collect();
    let lam = mean_rate(&run.ensemble, &grid).unwrap();
    let trapezoid: f64 = grid
        .windows(2)
        .zip(lam.windows(2))
        .map(|(g, l)| 0.5 * (l[0] + l[1]) * (g[1] - g[0]))
        .sum();
    let exact = run.ensemble.samples().iter().map(StepRate::total_mass).sum::<f64>() / run.ensemble.len() as f64;
    assert!((trapezoid - exact).abs() < 1e-3 * exact);
}

#[test]
fn point_estimate_is_a_valid_rate() {
    for run in recoveries() {
        let pe = point_estimate_detailed(&run.ensemble, DEFAULT_LOCATION_BANDWIDTH, DEFAULT_HEIGHT_BANDWIDTH).unwrap();
        pe.rate.validate().unwrap();
        assert_eq!(pe.rate.k(), pe.k_hat);
        assert_eq!(pe.rate.horizon(), run.events.horizon());
    }
}

#[test]
fn ensemble_table_round_trip() {
    let ens = &recoveries()[1].ensemble;
    let back = PosteriorEnsemble::parse_table(&ens.to_table_string()).unwrap();
    assert_eq!(back.samples(), ens.samples());
}

proptest! {
    #[test]
    fn kde_integrates_to_one(values in prop::collection::vec(10.0f64..90.0, 1..50), bw in 0.5f64..10.0) {
        let d = kernel_density(&values, bw, 0.0, 100.0, KDE_GRID_POINTS).unwrap();
        prop_assert!((d.mass() - 1.0).abs() < 1e-3);
        prop_assert!(d.q25 <= d.median && d.median <= d.q75);
    }

    #[test]
    fn k_distribution_sums_to_one(ks in prop::collection::vec(0usize..5, 1..40)) {
        let samples = ks
            .iter()
            .map(|&k| {
                let cps = (1..=k).map(|i| i as f64).collect();
                StepRate::new(cps, vec![1.0; k + 1], 10.0).unwrap()
            })
            .collect();
        let ens = PosteriorEnsemble::new(10.0, samples).unwrap();
        let pmf = k_distribution(&ens).unwrap();
        prop_assert!((pmf.values().sum::<f64>() - 1.0).abs() < 1e-12);
        let mode = k_mode(&pmf).unwrap();
        prop_assert!(pmf.values().all(|&p| p <= pmf[&mode]));
    }
}
