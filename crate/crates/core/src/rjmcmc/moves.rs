use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_model::{check_same_horizon, log_likelihood, ExceedanceSeries, StepRate};

use super::prior::{log_prior, HeightRule, Prior, PriorConfig};

/// Proposed change-points closer than this to an existing boundary are rejected.
pub const MIN_SPACING: f64 = 1e-9;

/// One point of the chain with cached per-interval counts, log-likelihood
/// and log-prior.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    rate: StepRate,
    counts: Vec<usize>,
    log_likelihood: f64,
    log_prior: f64,
}

impl ChainState {
    pub fn rate(&self) -> &StepRate {
        &self.rate
    }

    pub fn into_rate(self) -> StepRate {
        self.rate
    }

    pub fn k(&self) -> usize {
        self.rate.k()
    }

    /// Events in each interval `[s_j, s_{j+1})`.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    pub fn log_prior(&self) -> f64 {
        self.log_prior
    }

    pub fn log_posterior(&self) -> f64 {
        self.log_likelihood + self.log_prior
    }
}

#[derive(Debug, Clone, Copy)]
enum Data<'a> {
    Events(&'a ExceedanceSeries),
    /// Likelihood held constant; the chain then targets the prior.
    Flat,
}

/// The posterior target: a resolved prior and an optional data term.
#[derive(Debug, Clone)]
pub struct Sampler<'a> {
    prior: Prior,
    data: Data<'a>,
}

/// Log-acceptance terms of a birth, or of the birth reversed by a death.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpTerms {
    pub log_likelihood_ratio: f64,
    pub log_prior_ratio: f64,
    pub log_proposal_ratio: f64,
    pub log_jacobian: f64,
}

impl JumpTerms {
    pub fn total(&self) -> f64 {
        self.log_likelihood_ratio + self.log_prior_ratio + self.log_proposal_ratio + self.log_jacobian
    }

    fn negated(self) -> Self {
        Self {
            log_likelihood_ratio: -self.log_likelihood_ratio,
            log_prior_ratio: -self.log_prior_ratio,
            log_proposal_ratio: -self.log_proposal_ratio,
            log_jacobian: -self.log_jacobian,
        }
    }
}

/// Splitting interval `j` at `s_star` into heights `left` and `right`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Birth {
    pub j: usize,
    pub s_star: f64,
    pub u: f64,
    pub left: f64,
    pub right: f64,
    pub terms: JumpTerms,
}

/// Removing change-point `s_i` (1-based `i`) and merging its neighbouring
/// heights into `merged`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Death {
    pub i: usize,
    pub merged: f64,
    pub terms: JumpTerms,
}

/// Which of the four moves a proposal belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    Height,
    Position,
    Birth,
    Death,
}

impl MoveKind {
    pub const ALL: [MoveKind; 4] = [MoveKind::Height, MoveKind::Position, MoveKind::Birth, MoveKind::Death];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            MoveKind::Height => "height",
            MoveKind::Position => "position",
            MoveKind::Birth => "birth",
            MoveKind::Death => "death",
        }
    }
}

/// A fully specified proposal and its capped log-acceptance `min(0, ·)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Proposal {
    Height {
        j: usize,
        height: f64,
        log_acceptance: f64,
    },
    Position {
        j: usize,
        position: f64,
        log_acceptance: f64,
    },
    Birth {
        birth: Birth,
        log_acceptance: f64,
    },
    Death {
        death: Death,
        log_acceptance: f64,
    },
    /// A degenerate draw that is rejected outright.
    Rejected {
        kind: MoveKind,
    },
}

impl Proposal {
    pub fn kind(&self) -> MoveKind {
        match self {
            Proposal::Height { .. } => MoveKind::Height,
            Proposal::Position { .. } => MoveKind::Position,
            Proposal::Birth { .. } => MoveKind::Birth,
            Proposal::Death { .. } => MoveKind::Death,
            Proposal::Rejected { kind } => *kind,
        }
    }

    pub fn log_acceptance(&self) -> f64 {
        match self {
            Proposal::Height { log_acceptance, .. }
            | Proposal::Position { log_acceptance, .. }
            | Proposal::Birth { log_acceptance, .. }
            | Proposal::Death { log_acceptance, .. } => *log_acceptance,
            Proposal::Rejected { .. } => f64::NEG_INFINITY,
        }
    }
}

fn cap(x: f64) -> f64 {
    if x.is_nan() {
        f64::NEG_INFINITY
    } else {
        x.min(0.0)
    }
}

impl<'a> Sampler<'a> {
    /// Posterior given `events`; `γ` defaults to `T / n`.
    pub fn new(events: &'a ExceedanceSeries, cfg: &PriorConfig) -> Result<Self> {
        Ok(Self {
            prior: cfg.resolve(events.horizon(), events.len())?,
            data: Data::Events(events),
        })
    }

    /// The prior alone on `[0, horizon]`; `cfg.gamma` must be set.
    pub fn prior_only(horizon: f64, cfg: &PriorConfig) -> Result<Sampler<'static>> {
        Ok(Sampler {
            prior: cfg.resolve(horizon, 0)?,
            data: Data::Flat,
        })
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    pub fn horizon(&self) -> f64 {
        self.prior.horizon()
    }

    pub fn events(&self) -> Option<&'a ExceedanceSeries> {
        match self.data {
            Data::Events(e) => Some(e),
            Data::Flat => None,
        }
    }

    fn count(&self, a: f64, b: f64) -> usize {
        match self.data {
            Data::Events(e) => e.count_in(a, b),
            Data::Flat => 0,
        }
    }

    fn flat(&self) -> bool {
        matches!(self.data, Data::Flat)
    }

    /// Builds a state with freshly computed caches.
    pub fn state(&self, rate: StepRate) -> Result<ChainState> {
        rate.validate()?;
        if rate.k() > self.prior.k_max() {
            return Err(Error::Domain(format!(
                "state has k = {} > k_max = {}",
                rate.k(),
                self.prior.k_max()
            )));
        }
        let log_prior = log_prior(&rate, &self.prior)?;
        let (counts, log_likelihood) = match self.data {
            Data::Events(e) => {
                check_same_horizon(&rate, e)?;
                (rate.interval_counts(e), log_likelihood(&rate, e)?)
            }
            Data::Flat => (vec![0; rate.k() + 1], 0.0),
        };
        Ok(ChainState {
            rate,
            counts,
            log_likelihood,
            log_prior,
        })
    }

    /// Constant-rate start at `n / T`, or at the prior mean `1/γ` without data.
    pub fn initial_state(&self) -> Result<ChainState> {
        let h = match self.data {
            Data::Events(e) if !e.is_empty() => e.len() as f64 / e.horizon(),
            _ => 1.0 / self.prior.gamma(),
        };
        self.state(StepRate::constant(h, self.horizon())?)
    }

    /// Largest difference between cached and recomputed log-likelihood and
    /// log-prior, after checking the counts.
    pub fn cache_error(&self, state: &ChainState) -> Result<f64> {
        let fresh = self.state(state.rate.clone())?;
        if fresh.counts != state.counts {
            return Err(Error::Numerical(format!(
                "cached interval counts {:?} differ from {:?}",
                state.counts, fresh.counts
            )));
        }
        Ok((fresh.log_likelihood - state.log_likelihood)
            .abs()
            .max((fresh.log_prior - state.log_prior).abs()))
    }

    /// Replaces the caches with recomputed values.
    pub fn refresh(&self, state: &mut ChainState) -> Result<()> {
        *state = self.state(std::mem::replace(
            &mut state.rate,
            StepRate::constant(1.0, self.horizon())?,
        ))?;
        Ok(())
    }

    fn height_likelihood_ratio(&self, state: &ChainState, j: usize, height: f64) -> f64 {
        if self.flat() {
            return 0.0;
        }
        let h = state.rate.heights()[j];
        let n = state.counts[j] as f64;
        let ll = if n > 0.0 { n * (height / h).ln() } else { 0.0 };
        ll - (height - h) * state.rate.width(j)
    }

    fn height_prior_ratio(&self, h: f64, height: f64) -> f64 {
        -self.prior.gamma() * (height - h)
    }

    /// Uncapped log acceptance ratio for setting `h_j` to `height`.
    pub fn height_log_ratio(&self, state: &ChainState, j: usize, height: f64) -> f64 {
        let h = state.rate.heights()[j];
        let base = self.height_likelihood_ratio(state, j, height) + self.height_prior_ratio(h, height);
        match self.prior.height_rule() {
            HeightRule::Reversible => base + (height / h).ln(),
            HeightRule::AsPrinted => base,
        }
    }

    /// Events in `[s_{j−1}, position)` if `s_j` moved to `position`.
    fn left_count_after_shift(&self, state: &ChainState, j: usize, position: f64) -> usize {
        if self.flat() {
            return 0;
        }
        self.count(state.rate.edge(j - 1), position)
    }

    fn position_likelihood_ratio(&self, state: &ChainState, j: usize, position: f64, n_left: usize) -> f64 {
        if self.flat() {
            return 0.0;
        }
        let r = &state.rate;
        let (hl, hr) = (r.heights()[j - 1], r.heights()[j]);
        let shift = n_left as f64 - state.counts[j - 1] as f64;
        let ll = if shift != 0.0 { shift * (hl / hr).ln() } else { 0.0 };
        ll - (hl - hr) * (position - r.edge(j))
    }

    fn position_prior_ratio(&self, state: &ChainState, j: usize, position: f64) -> f64 {
        let r = &state.rate;
        let (lo, s, hi) = (r.edge(j - 1), r.edge(j), r.edge(j + 1));
        if position - lo < MIN_SPACING || hi - position < MIN_SPACING {
            return f64::NEG_INFINITY;
        }
        ((hi - position) * (position - lo)).ln() - ((hi - s) * (s - lo)).ln()
    }

    /// Uncapped log acceptance ratio for moving `s_j` (1-based) to `position`.
    pub fn position_log_ratio(&self, state: &ChainState, j: usize, position: f64) -> Result<f64> {
        self.check_changepoint_index(state, j)?;
        let prior = self.position_prior_ratio(state, j, position);
        if prior == f64::NEG_INFINITY {
            return Ok(prior);
        }
        let n_left = self.left_count_after_shift(state, j, position);
        Ok(self.position_likelihood_ratio(state, j, position, n_left) + prior)
    }

    fn check_changepoint_index(&self, state: &ChainState, i: usize) -> Result<()> {
        if i == 0 || i > state.k() {
            return Err(Error::Precondition(format!(
                "change-point index {i} is outside 1..={}",
                state.k()
            )));
        }
        Ok(())
    }

    /// Log-acceptance terms for splitting interval `[lo, hi)` of height `h`
    /// at `s_star` into `left`, `right`, from a state with `k` change-points
    /// holding `n_left` and `n_right` events on either side.
    #[allow(clippy::too_many_arguments)]
    fn split_terms(
        &self,
        k: usize,
        lo: f64,
        s_star: f64,
        hi: f64,
        h: f64,
        left: f64,
        right: f64,
        n_left: usize,
        n_right: usize,
    ) -> JumpTerms {
        let p = &self.prior;
        let t = self.horizon();
        let kf = k as f64;
        let (a, b, width) = (s_star - lo, hi - s_star, hi - lo);
        let mut log_likelihood_ratio = if self.flat() {
            0.0
        } else {
            -(left * a + right * b - h * width)
        };
        if n_left > 0 {
            log_likelihood_ratio += n_left as f64 * (left / h).ln();
        }
        if n_right > 0 {
            log_likelihood_ratio += n_right as f64 * (right / h).ln();
        }
        let log_prior_ratio = p.mu().ln() - (kf + 1.0).ln() + (2.0 * (kf + 1.0) * (2.0 * kf + 3.0)).ln() - 2.0 * t.ln()
            + (a * b / width).ln()
            + p.gamma().ln()
            - p.gamma() * (left + right - h);
        let log_proposal_ratio = p.moves(k + 1).death.ln() + t.ln() - p.moves(k).birth.ln() - (kf + 1.0).ln();
        let log_jacobian = 2.0 * (left + right).ln() - h.ln();
        JumpTerms {
            log_likelihood_ratio,
            log_prior_ratio,
            log_proposal_ratio,
            log_jacobian,
        }
    }

    /// Birth at `s_star ∈ (0, T)` with split variable `u ∈ (0, 1)`. Returns
    /// `None` when `s_star` is within [`MIN_SPACING`] of a boundary.
    pub fn birth_terms(&self, state: &ChainState, s_star: f64, u: f64) -> Result<Option<Birth>> {
        let k = state.k();
        if k >= self.prior.k_max() {
            return Err(Error::Precondition(format!("birth at k = k_max = {k}")));
        }
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain(format!("split variable u = {u} is outside (0, 1)")));
        }
        let r = &state.rate;
        let j = r.interval_of(s_star);
        let (lo, hi) = (r.edge(j), r.edge(j + 1));
        if !(s_star - lo >= MIN_SPACING && hi - s_star >= MIN_SPACING) {
            return Ok(None);
        }
        let h = r.heights()[j];
        let width = hi - lo;
        let log_ratio = ((1.0 - u) / u).ln();
        let left = (h.ln() - (hi - s_star) / width * log_ratio).exp();
        let right = (h.ln() + (s_star - lo) / width * log_ratio).exp();
        let n_left = self.count(lo, s_star);
        let n_right = state.counts[j] - n_left;
        let terms = self.split_terms(k, lo, s_star, hi, h, left, right, n_left, n_right);
        Ok(Some(Birth {
            j,
            s_star,
            u,
            left,
            right,
            terms,
        }))
    }

    /// Death of change-point `s_i`, `1 ≤ i ≤ k`. The merged height is the
    /// width-weighted geometric mean of `h_{i−1}` and `h_i`.
    pub fn death_terms(&self, state: &ChainState, i: usize) -> Result<Death> {
        self.check_changepoint_index(state, i)?;
        let r = &state.rate;
        let (lo, s, hi) = (r.edge(i - 1), r.edge(i), r.edge(i + 1));
        let (left, right) = (r.heights()[i - 1], r.heights()[i]);
        let width = hi - lo;
        let merged = (((s - lo) * left.ln() + (hi - s) * right.ln()) / width).exp();
        let terms = self
            .split_terms(
                state.k() - 1,
                lo,
                s,
                hi,
                merged,
                left,
                right,
                state.counts[i - 1],
                state.counts[i],
            )
            .negated();
        Ok(Death { i, merged, terms })
    }

    pub fn propose_height<R: Rng + ?Sized>(&self, state: &ChainState, rng: &mut R) -> Proposal {
        let j = rng.random_range(0..=state.k());
        let step = self.prior.height_log_step() * (rng.random::<f64>() - 0.5);
        let height = state.rate.heights()[j] * step.exp();
        if !(height > 0.0 && height.is_finite()) {
            return Proposal::Rejected { kind: MoveKind::Height };
        }
        Proposal::Height {
            j,
            height,
            log_acceptance: cap(self.height_log_ratio(state, j, height)),
        }
    }

    pub fn propose_position<R: Rng + ?Sized>(&self, state: &ChainState, rng: &mut R) -> Result<Proposal> {
        if state.k() == 0 {
            return Err(Error::Precondition("position move needs k >= 1".into()));
        }
        let j = rng.random_range(1..=state.k());
        let (lo, hi) = (state.rate.edge(j - 1), state.rate.edge(j + 1));
        let position = lo + (hi - lo) * rng.random::<f64>();
        let ratio = self.position_log_ratio(state, j, position)?;
        if ratio == f64::NEG_INFINITY {
            return Ok(Proposal::Rejected {
                kind: MoveKind::Position,
            });
        }
        Ok(Proposal::Position {
            j,
            position,
            log_acceptance: cap(ratio),
        })
    }

    pub fn propose_birth<R: Rng + ?Sized>(&self, state: &ChainState, rng: &mut R) -> Result<Proposal> {
        let s_star = self.horizon() * rng.random::<f64>();
        let u = rng.random::<f64>();
        if u == 0.0 {
            return Ok(Proposal::Rejected { kind: MoveKind::Birth });
        }
        Ok(match self.birth_terms(state, s_star, u)? {
            Some(birth) => Proposal::Birth {
                log_acceptance: cap(birth.terms.total()),
                birth,
            },
            None => Proposal::Rejected { kind: MoveKind::Birth },
        })
    }

    pub fn propose_death<R: Rng + ?Sized>(&self, state: &ChainState, rng: &mut R) -> Result<Proposal> {
        if state.k() == 0 {
            return Err(Error::Precondition("death move needs k >= 1".into()));
        }
        let death = self.death_terms(state, rng.random_range(1..=state.k()))?;
        Ok(Proposal::Death {
            log_acceptance: cap(death.terms.total()),
            death,
        })
    }

    /// Draws a move type from the move probabilities at the current `k`,
    /// then a proposal of that type.
    pub fn propose<R: Rng + ?Sized>(&self, state: &ChainState, rng: &mut R) -> Result<Proposal> {
        let m = self.prior.moves(state.k());
        let v = rng.random::<f64>();
        if v < m.height {
            Ok(self.propose_height(state, rng))
        } else if v < m.height + m.position {
            self.propose_position(state, rng)
        } else if v < m.height + m.position + m.birth {
            self.propose_birth(state, rng)
        } else if m.death > 0.0 {
            self.propose_death(state, rng)
        } else {
            // Only reachable through rounding in the cumulative sums.
            Ok(self.propose_height(state, rng))
        }
    }

    /// Applies an accepted proposal and updates the caches incrementally.
    pub fn apply(&self, state: &mut ChainState, proposal: &Proposal) {
        match *proposal {
            Proposal::Height { j, height, .. } => {
                let h = state.rate.heights[j];
                state.log_likelihood += self.height_likelihood_ratio(state, j, height);
                state.log_prior += self.height_prior_ratio(h, height);
                state.rate.heights[j] = height;
            }
            Proposal::Position { j, position, .. } => {
                let n_left = self.left_count_after_shift(state, j, position);
                let total = state.counts[j - 1] + state.counts[j];
                state.log_likelihood += self.position_likelihood_ratio(state, j, position, n_left);
                state.log_prior += self.position_prior_ratio(state, j, position);
                state.counts[j - 1] = n_left;
                state.counts[j] = total - n_left;
                state.rate.changepoints[j - 1] = position;
            }
            Proposal::Birth { birth, .. } => {
                let j = birth.j;
                let n_left = self.count(state.rate.edge(j), birth.s_star);
                let n_right = state.counts[j] - n_left;
                state.log_likelihood += birth.terms.log_likelihood_ratio;
                state.log_prior += birth.terms.log_prior_ratio;
                state.rate.changepoints.insert(j, birth.s_star);
                state.rate.heights[j] = birth.left;
                state.rate.heights.insert(j + 1, birth.right);
                state.counts[j] = n_left;
                state.counts.insert(j + 1, n_right);
            }
            Proposal::Death { death, .. } => {
                let i = death.i;
                state.log_likelihood += death.terms.log_likelihood_ratio;
                state.log_prior += death.terms.log_prior_ratio;
                state.rate.changepoints.remove(i - 1);
                state.rate.heights[i - 1] = death.merged;
                state.rate.heights.remove(i);
                let merged = state.counts[i - 1] + state.counts.remove(i);
                state.counts[i - 1] = merged;
            }
            Proposal::Rejected { .. } => {}
        }
    }

    /// One Metropolis–Hastings update; returns the move type and whether it
    /// was accepted.
    pub fn step<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) -> Result<(MoveKind, bool)> {
        let proposal = self.propose(state, rng)?;
        let log_a = proposal.log_acceptance();
        let accepted = log_a == 0.0 || (log_a > f64::NEG_INFINITY && rng.random::<f64>().ln() < log_a);
        if accepted {
            self.apply(state, &proposal);
        }
        Ok((proposal.kind(), accepted))
    }
}

/// One update of `state` under the posterior defined by `events` and `cfg`.
pub fn chain_step<R: Rng + ?Sized>(
    state: &ChainState,
    events: &ExceedanceSeries,
    cfg: &PriorConfig,
    rng: &mut R,
) -> Result<ChainState> {
    let sampler = Sampler::new(events, cfg)?;
    let mut next = state.clone();
    sampler.step(&mut next, rng)?;
    Ok(next)
}
