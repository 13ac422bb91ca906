use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_model::StepRate;
use crate::special::ln_gamma;

/// Acceptance rule for the height move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeightRule {
    /// Metropolis–Hastings ratio including the `h'/h` factor of the
    /// log-uniform proposal; leaves the posterior invariant.
    #[default]
    Reversible,
    /// Likelihood ratio times `exp(−γ(h' − h))` only. Its stationary height
    /// law is the posterior divided by `∏ h_j`.
    AsPrinted,
}

/// User-facing prior and proposal settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// Mean of the Poisson prior on the number of change-points.
    pub mu: f64,
    pub k_max: usize,
    /// Rate of the exponential height prior; `None` means `T / n`.
    pub gamma: Option<f64>,
    /// Width of the uniform proposal for `log(h'/h)`, centred on zero.
    pub height_log_step: f64,
    pub height_rule: HeightRule,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            mu: 4.5,
            k_max: 20,
            gamma: None,
            height_log_step: 1.0,
            height_rule: HeightRule::Reversible,
        }
    }
}

impl PriorConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Configuration(m));
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return bad(format!("mu must be positive, got {}", self.mu));
        }
        if self.k_max < 1 {
            return bad("k_max must be at least 1".into());
        }
        if let Some(g) = self.gamma {
            if !(g.is_finite() && g > 0.0) {
                return bad(format!("gamma must be positive, got {g}"));
            }
        }
        if !(self.height_log_step.is_finite() && self.height_log_step > 0.0) {
            return bad(format!(
                "height_log_step must be positive, got {}",
                self.height_log_step
            ));
        }
        Ok(())
    }

    /// Fixes `γ` (defaulting to `T / n_events`) and precomputes the move and
    /// dimension tables.
    pub fn resolve(&self, horizon: f64, n_events: usize) -> Result<Prior> {
        self.validate()?;
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Configuration(format!("horizon must be positive, got {horizon}")));
        }
        let gamma = match self.gamma {
            Some(g) => g,
            None if n_events > 0 => horizon / n_events as f64,
            None => {
                return Err(Error::Configuration(
                    "gamma = T/N is undefined for an empty event series; set gamma explicitly".into(),
                ))
            }
        };
        let c = move_constant(self.mu, self.k_max);
        let moves = (0..=self.k_max).map(|k| moves_at(k, self.mu, self.k_max, c)).collect();
        let weights: Vec<f64> = (0..=self.k_max)
            .map(|k| k as f64 * self.mu.ln() - self.mu - ln_gamma(k as f64 + 1.0))
            .collect();
        let log_norm = crate::special::log_sum_exp(&weights);
        let log_pk = weights.iter().map(|w| w - log_norm).collect();
        Ok(Prior {
            mu: self.mu,
            k_max: self.k_max,
            gamma,
            height_log_step: self.height_log_step,
            height_rule: self.height_rule,
            horizon,
            move_constant: c,
            log_pk,
            moves,
        })
    }
}

/// Probabilities of the four move types at a given `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoveProbabilities {
    /// Height change, `η_k`.
    pub height: f64,
    /// Position change, `π_k`.
    pub position: f64,
    /// Birth, `b_k`.
    pub birth: f64,
    /// Death, `d_k`.
    pub death: f64,
}

/// `C = 0.9 / max_k (min(1, μ/(k+1)) + min(1, k/μ))` over `0 ≤ k ≤ k_max`.
pub fn move_constant(mu: f64, k_max: usize) -> f64 {
    let peak = (0..=k_max)
        .map(|k| (mu / (k as f64 + 1.0)).min(1.0) + (k as f64 / mu).min(1.0))
        .fold(0.0, f64::max);
    0.9 / peak
}

fn moves_at(k: usize, mu: f64, k_max: usize, c: f64) -> MoveProbabilities {
    let kf = k as f64;
    let birth = if k < k_max { c * (mu / (kf + 1.0)).min(1.0) } else { 0.0 };
    let death = if k > 0 { c * (kf / mu).min(1.0) } else { 0.0 };
    if k == 0 {
        MoveProbabilities {
            height: 1.0 - birth,
            position: 0.0,
            birth,
            death,
        }
    } else {
        let rest = (1.0 - birth - death) / 2.0;
        MoveProbabilities {
            height: rest,
            position: rest,
            birth,
            death,
        }
    }
}

/// Move probabilities at `k` for the given settings.
pub fn move_probabilities(k: usize, cfg: &PriorConfig) -> Result<MoveProbabilities> {
    cfg.validate()?;
    if k > cfg.k_max {
        return Err(Error::Domain(format!("k = {k} exceeds k_max = {}", cfg.k_max)));
    }
    Ok(moves_at(k, cfg.mu, cfg.k_max, move_constant(cfg.mu, cfg.k_max)))
}

/// Prior settings resolved against a horizon, with lookup tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    mu: f64,
    k_max: usize,
    gamma: f64,
    height_log_step: f64,
    height_rule: HeightRule,
    horizon: f64,
    move_constant: f64,
    log_pk: Vec<f64>,
    moves: Vec<MoveProbabilities>,
}

impl Prior {
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn height_log_step(&self) -> f64 {
        self.height_log_step
    }

    pub fn height_rule(&self) -> HeightRule {
        self.height_rule
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn move_constant(&self) -> f64 {
        self.move_constant
    }

    /// Move probabilities at `k`; `k ≤ k_max`.
    pub fn moves(&self, k: usize) -> MoveProbabilities {
        self.moves[k]
    }

    /// Truncated-Poisson `log p(k)`, `−∞` beyond `k_max`.
    pub fn log_k_prior(&self, k: usize) -> f64 {
        self.log_pk.get(k).copied().unwrap_or(f64::NEG_INFINITY)
    }

    /// Truncated-Poisson probabilities `p(0..=k_max)`.
    pub fn k_probabilities(&self) -> Vec<f64> {
        self.log_pk.iter().map(|l| l.exp()).collect()
    }

    /// Log-density of the change-point positions as even order statistics of
    /// `2k + 1` uniforms on `[0, T]`.
    pub fn log_position_density(&self, rate: &StepRate) -> f64 {
        let k = rate.k();
        let widths: f64 = (0..=k).map(|j| rate.width(j).ln()).sum();
        ln_gamma(2.0 * k as f64 + 2.0) - (2 * k + 1) as f64 * self.horizon.ln() + widths
    }

    /// `Σ_j (log γ − γ h_j)`.
    pub fn log_height_density(&self, rate: &StepRate) -> f64 {
        rate.heights().iter().map(|&h| self.gamma.ln() - self.gamma * h).sum()
    }
}

/// Joint log prior of a step rate; `−∞` when `k > k_max`.
pub fn log_prior(rate: &StepRate, prior: &Prior) -> Result<f64> {
    let (a, b) = (rate.horizon(), prior.horizon());
    if (a - b).abs() > 1e-9 * a.max(b) {
        return Err(Error::Domain(format!(
            "rate horizon {a} differs from prior horizon {b}"
        )));
    }
    if rate.k() > prior.k_max {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(prior.log_k_prior(rate.k()) + prior.log_position_density(rate) + prior.log_height_density(rate))
}
