use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_model::ExceedanceSeries;
use crate::posterior::PosteriorEnsemble;

use super::moves::{ChainState, MoveKind, Sampler};
use super::prior::PriorConfig;

/// Updates between cache checks; caches are recomputed at each check to
/// stop rounding drift from accumulating.
const REFRESH_EVERY: u64 = 10_000;

/// Burn-in, run length, thinning and seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub burn_in: u64,
    pub n_updates: u64,
    pub thin: u64,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            burn_in: 20_000,
            n_updates: 500_000,
            thin: 40,
            seed: 1,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::Configuration("thin must be at least 1".into()));
        }
        if self.n_updates < self.thin {
            return Err(Error::Configuration(format!(
                "n_updates ({}) must be at least thin ({})",
                self.n_updates, self.thin
            )));
        }
        Ok(())
    }

    /// Number of retained samples, `⌊n_updates / thin⌋`.
    pub fn n_samples(&self) -> u64 {
        self.n_updates / self.thin
    }
}

/// Proposal and acceptance counts per move type, indexed by [`MoveKind::index`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub proposed: [u64; 4],
    pub accepted: [u64; 4],
    pub burn_in: u64,
    pub n_updates: u64,
    pub thin: u64,
    pub chains: u64,
}

impl ChainDiagnostics {
    pub fn acceptance_rate(&self, kind: MoveKind) -> f64 {
        let p = self.proposed[kind.index()];
        if p == 0 {
            0.0
        } else {
            self.accepted[kind.index()] as f64 / p as f64
        }
    }

    pub fn merge(&mut self, other: &ChainDiagnostics) {
        for i in 0..4 {
            self.proposed[i] += other.proposed[i];
            self.accepted[i] += other.accepted[i];
        }
        self.burn_in += other.burn_in;
        self.n_updates += other.n_updates;
        self.thin = self.thin.max(other.thin);
        self.chains += other.chains;
    }

    /// `key=value` lines: run settings, then per move `<name>.proposed`,
    /// `<name>.accepted` and `<name>.acceptance_rate`.
    pub fn to_kv_string(&self) -> String {
        let mut out = format!(
            "chains={}\nburn_in={}\nn_updates={}\nthin={}\n",
            self.chains, self.burn_in, self.n_updates, self.thin
        );
        for kind in MoveKind::ALL {
            let i = kind.index();
            out.push_str(&format!(
                "{0}.proposed={1}\n{0}.accepted={2}\n{0}.acceptance_rate={3}\n",
                kind.name(),
                self.proposed[i],
                self.accepted[i],
                self.acceptance_rate(kind)
            ));
        }
        out
    }

    pub fn parse_kv(text: &str) -> Result<Self> {
        let mut d = ChainDiagnostics::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(idx + 1, "expected key=value"))?;
            let key = key.trim();
            if key.ends_with(".acceptance_rate") {
                continue;
            }
            let v: u64 = value
                .trim()
                .parse()
                .map_err(|_| Error::parse(idx + 1, format!("bad count '{value}'")))?;
            match key {
                "chains" => d.chains = v,
                "burn_in" => d.burn_in = v,
                "n_updates" => d.n_updates = v,
                "thin" => d.thin = v,
                _ => {
                    let (name, field) = key
                        .split_once('.')
                        .ok_or_else(|| Error::parse(idx + 1, format!("unknown key '{key}'")))?;
                    let kind = MoveKind::ALL
                        .into_iter()
                        .find(|k| k.name() == name)
                        .ok_or_else(|| Error::parse(idx + 1, format!("unknown move '{name}'")))?;
                    match field {
                        "proposed" => d.proposed[kind.index()] = v,
                        "accepted" => d.accepted[kind.index()] = v,
                        _ => return Err(Error::parse(idx + 1, format!("unknown key '{key}'"))),
                    }
                }
            }
        }
        Ok(d)
    }
}

fn check_caches(sampler: &Sampler<'_>, state: &mut ChainState) -> Result<()> {
    let err = sampler.cache_error(state)?;
    let scale = 1.0 + state.log_likelihood().abs() + state.log_prior().abs();
    if err > 1e-9 * scale {
        return Err(Error::Numerical(format!(
            "cached log-density drifted by {err} from recomputation"
        )));
    }
    sampler.refresh(state)
}

/// Runs `state` forward, recording every `thin`-th state after `burn_in`.
pub fn run_sampler<R: Rng + ?Sized>(
    sampler: &Sampler<'_>,
    mut state: ChainState,
    cc: &ChainConfig,
    rng: &mut R,
) -> Result<(PosteriorEnsemble, ChainState)> {
    cc.validate()?;
    let mut diag = ChainDiagnostics {
        burn_in: cc.burn_in,
        n_updates: cc.n_updates,
        thin: cc.thin,
        chains: 1,
        ..ChainDiagnostics::default()
    };
    let mut samples = Vec::with_capacity(cc.n_samples() as usize);
    let total = cc.burn_in + cc.n_updates;
    for step in 1..=total {
        let (kind, accepted) = sampler.step(&mut state, rng)?;
        diag.proposed[kind.index()] += 1;
        diag.accepted[kind.index()] += accepted as u64;
        if step % REFRESH_EVERY == 0 {
            check_caches(sampler, &mut state)?;
        }
        if step > cc.burn_in && (step - cc.burn_in).is_multiple_of(cc.thin) {
            samples.push(state.rate().clone());
        }
    }
    let ensemble = PosteriorEnsemble::new(sampler.horizon(), samples)?.with_diagnostics(diag);
    Ok((ensemble, state))
}

/// Samples the posterior of a step rate given `events`, starting from the
/// constant rate `n / T`.
pub fn run_chain<R: Rng + ?Sized>(
    events: &ExceedanceSeries,
    prior: &PriorConfig,
    cc: &ChainConfig,
    rng: &mut R,
) -> Result<PosteriorEnsemble> {
    let sampler = Sampler::new(events, prior)?;
    let state = sampler.initial_state()?;
    run_sampler(&sampler, state, cc, rng).map(|(ens, _)| ens)
}

/// Independent chains seeded `seed, seed + 1, …`, each with its own burn-in,
/// run on separate threads and merged in seed order.
pub fn run_chains(
    events: &ExceedanceSeries,
    prior: &PriorConfig,
    cc: &ChainConfig,
    n_chains: usize,
) -> Result<PosteriorEnsemble> {
    if n_chains == 0 {
        return Err(Error::Configuration("at least one chain is required".into()));
    }
    let results: Vec<Result<PosteriorEnsemble>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..n_chains)
            .map(|i| {
                scope.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(cc.seed.wrapping_add(i as u64));
                    run_chain(events, prior, cc, &mut rng)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread panicked"))
            .collect()
    });
    let ensembles = results.into_iter().collect::<Result<Vec<_>>>()?;
    PosteriorEnsemble::merge(&ensembles)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(ChainConfig::default().validate().is_ok());
        assert_eq!(ChainConfig::default().n_samples(), 12_500);
        let bad = ChainConfig {
            thin: 0,
            ..ChainConfig::default()
        };
        assert!(bad.validate().is_err());
        let short = ChainConfig {
            n_updates: 10,
            thin: 40,
            ..ChainConfig::default()
        };
        assert!(matches!(short.validate(), Err(Error::Configuration(_))));
    }

    #[test]
    fn ensemble_size_is_floor_of_updates_over_thin() {
        let events = ExceedanceSeries::new(vec![1.0, 3.0, 4.0], 10.0).unwrap();
        let cc = ChainConfig {
            burn_in: 7,
            n_updates: 1003,
            thin: 10,
            seed: 2,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cc.seed);
        let ens = run_chain(&events, &PriorConfig::default(), &cc, &mut rng).unwrap();
        assert_eq!(ens.len(), 100);
        let d = ens.diagnostics().unwrap();
        assert_eq!(d.proposed.iter().sum::<u64>(), 1010);
    }

    #[test]
    fn empty_events_need_explicit_gamma() {
        let events = ExceedanceSeries::empty(10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cc = ChainConfig {
            burn_in: 0,
            n_updates: 10,
            thin: 1,
            seed: 1,
        };
        assert!(matches!(
            run_chain(&events, &PriorConfig::default(), &cc, &mut rng),
            Err(Error::Configuration(_))
        ));
        let with_gamma = PriorConfig {
            gamma: Some(5.0),
            ..PriorConfig::default()
        };
        assert_eq!(run_chain(&events, &with_gamma, &cc, &mut rng).unwrap().len(), 10);
    }

    #[test]
    fn diagnostics_kv_round_trip() {
        let d = ChainDiagnostics {
            proposed: [10, 20, 30, 40],
            accepted: [1, 2, 3, 4],
            burn_in: 5,
            n_updates: 100,
            thin: 2,
            chains: 1,
        };
        let text = d.to_kv_string();
        assert!(text.contains("birth.acceptance_rate=0.1"));
        assert_eq!(ChainDiagnostics::parse_kv(&text).unwrap(), d);
    }

    #[test]
    fn parallel_chains_merge() {
        let events = ExceedanceSeries::new(vec![1.0, 3.0, 4.0, 8.0], 10.0).unwrap();
        let cc = ChainConfig {
            burn_in: 100,
            n_updates: 400,
            thin: 4,
            seed: 11,
        };
        let ens = run_chains(&events, &PriorConfig::default(), &cc, 3).unwrap();
        assert_eq!(ens.len(), 300);
        assert_eq!(ens.diagnostics().unwrap().chains, 3);
        let again = run_chains(&events, &PriorConfig::default(), &cc, 3).unwrap();
        assert_eq!(ens, again);
    }
}
