//! Reinforcement learning with policy advice.
//!
//! The agent runs a sequence of trials with budgets `T_i = 2^i`. Each trial
//! starts with every advice policy active and a span guess `H = f(T_i)`. Within
//! a trial, episodes repeatedly pick the active policy with the largest
//! optimistic index
//!
//! ```text
//! B(pi) = mu_hat(pi) + (H + 1) sqrt(48 log(2t/delta) / n(pi)) + H K(pi) / n(pi)
//! ```
//!
//! and run it until its sample count doubles, the trial budget runs out, or the
//! rewards of the running episode become inconsistent with the committed
//! estimate, in which case the policy is dropped for the rest of the trial.
//! Statistics persist across trials. All estimates live in rewards affinely
//! mapped to `[0, 1]`; the returned reward trace is in original units.
//!
//! `v` counts the steps actually taken in the current episode, starting at 0,
//! so the sample-doubling cap reads `v < n` before every step and
//! `sum(n) - m + v = t` holds throughout.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{EndReason, Event};
use crate::mdp::{DeterministicPolicy, Environment, RewardScale};
use crate::rng::SimRng;

#[derive(Debug, Error, PartialEq)]
pub enum RlpaError {
    #[error("advice set is empty")]
    NoPolicies,
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("confidence delta must lie in (0, 1), got {0}")]
    Delta(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("policy {index} does not fit the environment: {reason}")]
    Policy { index: usize, reason: String },
}

/// Span guess as a function of the trial budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum SpanFunction {
    /// `max(1, ln t)`.
    Log,
    /// The same guess in every trial.
    Constant(f64),
}

impl SpanFunction {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Self::Log => t.ln().max(1.0),
            Self::Constant(h) => h,
        }
    }

    /// Smallest `t >= 1` with `f(t) >= h`; `+inf` if no such `t` exists.
    pub fn inverse(&self, h: f64) -> f64 {
        match *self {
            Self::Log if h <= 1.0 => 1.0,
            Self::Log => h.exp(),
            Self::Constant(c) if h <= c => 1.0,
            Self::Constant(_) => f64::INFINITY,
        }
    }
}

impl std::str::FromStr for SpanFunction {
    type Err = String;

    /// `log` or `const:<h>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "log" => Ok(Self::Log),
            _ => s
                .strip_prefix("const:")
                .and_then(|h| h.parse::<f64>().ok())
                .map(Self::Constant)
                .ok_or_else(|| format!("unknown span function {s:?} (expected `log` or `const:<h>`)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlpaConfig {
    pub delta: f64,
    pub span_function: SpanFunction,
    /// Known horizon, if any; the algorithm itself is anytime.
    pub horizon: Option<u64>,
    /// Lower clamp on the argument of every `log` in the confidence terms.
    pub log_floor: f64,
    /// The `48` under the square root.
    pub confidence_coefficient: f64,
    /// The `2` in `log(2t/delta)`.
    pub log_scale: f64,
}

impl Default for RlpaConfig {
    fn default() -> Self {
        Self {
            delta: 0.05,
            span_function: SpanFunction::Log,
            horizon: None,
            log_floor: std::f64::consts::E,
            confidence_coefficient: 48.0,
            log_scale: 2.0,
        }
    }
}

impl RlpaConfig {
    /// Horizon-aware setting with `delta = T^(-1/3)`.
    pub fn gap_dependent(horizon: u64) -> Self {
        Self {
            delta: (horizon as f64).powf(-1.0 / 3.0),
            horizon: Some(horizon),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), RlpaError> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(RlpaError::Delta(self.delta));
        }
        if !(self.log_floor >= 1.0) {
            return Err(RlpaError::Config(format!("log_floor must be at least 1, got {}", self.log_floor)));
        }
        if !(self.confidence_coefficient > 0.0 && self.log_scale > 0.0) {
            return Err(RlpaError::Config("confidence constants must be positive".into()));
        }
        if let SpanFunction::Constant(h) = self.span_function {
            if !(h >= 0.0 && h.is_finite()) {
                return Err(RlpaError::Config(format!("constant span guess must be finite and nonnegative, got {h}")));
            }
        }
        Ok(())
    }

    /// `log(max(2t/delta, log_floor))`.
    pub fn log_term(&self, t: u64) -> f64 {
        (self.log_scale * t as f64 / self.delta).max(self.log_floor).ln()
    }
}

/// Per-policy counters, all in normalized reward units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyStats {
    /// `n(pi)`: committed samples, starting from one pseudo-sample.
    pub samples: u64,
    /// `K(pi)`: episode count, starting at 1.
    pub episodes: u64,
    /// `mu_hat(pi) = R(pi) / n(pi)` as of the last commit.
    pub mean: f64,
    /// `R(pi)`: running reward total, including the current episode.
    pub reward_sum: f64,
    /// `v(pi)`: steps taken in the current episode.
    pub episode_steps: u64,
}

impl Default for PolicyStats {
    fn default() -> Self {
        Self { samples: 1, episodes: 1, mean: 0.0, reward_sum: 0.0, episode_steps: 0 }
    }
}

impl PolicyStats {
    /// Folds the current episode into the committed estimate.
    pub fn commit(&mut self) {
        self.samples += self.episode_steps;
        self.mean = self.reward_sum / self.samples as f64;
        self.episode_steps = 0;
    }

    fn running_mean(&self) -> f64 {
        self.reward_sum / (self.samples + self.episode_steps) as f64
    }
}

fn radius_at(samples: u64, episodes: u64, h_hat: f64, log_term: f64, coefficient: f64) -> f64 {
    let n = samples as f64;
    (h_hat + 1.0) * (coefficient * log_term / n).sqrt() + h_hat * episodes as f64 / n
}

/// `c(pi) = (H + 1) sqrt(48 log(2t/delta) / n) + H K / n`.
pub fn confidence_radius(stats: &PolicyStats, h_hat: f64, t: u64, config: &RlpaConfig) -> f64 {
    radius_at(stats.samples, stats.episodes, h_hat, config.log_term(t), config.confidence_coefficient)
}

/// `B(pi) = mu_hat(pi) + c(pi)`; no clamping to `[0, 1]`.
pub fn b_value(stats: &PolicyStats, radius: f64) -> f64 {
    stats.mean + radius
}

/// Active index with the largest B-value, lowest index on ties; `None` when no
/// policy is active (the trial is exhausted).
pub fn select_policy(active: &[usize], b_values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for &idx in active {
        if best.is_none_or(|b| b_values[idx] > b_values[b]) {
            best = Some(idx);
        }
    }
    best
}

/// Whether the running episode is still consistent with the committed estimate:
/// `mu_hat - R/(n+v) <= c_start + (H+1) sqrt(48 log(2t/delta)/(n+v)) + H K/(n+v)`.
fn consistent(stats: &PolicyStats, t: u64, h_hat: f64, c_start: f64, config: &RlpaConfig) -> bool {
    let total = stats.samples + stats.episode_steps;
    let drift = stats.mean - stats.running_mean();
    drift <= c_start + radius_at(total, stats.episodes, h_hat, config.log_term(t), config.confidence_coefficient)
}

fn end_reason(
    stats: &PolicyStats,
    trial_steps: u64,
    budget: u64,
    t: u64,
    h_hat: f64,
    c_start: f64,
    config: &RlpaConfig,
) -> Option<EndReason> {
    if trial_steps > budget {
        Some(EndReason::Budget)
    } else if stats.episode_steps >= stats.samples {
        Some(EndReason::Doubling)
    } else if !consistent(stats, t, h_hat, c_start, config) {
        Some(EndReason::Inconsistency)
    } else {
        None
    }
}

/// Loop condition of an episode: trial budget left, sample count not yet
/// doubled, and the running rewards consistent with the committed estimate.
pub fn episode_should_continue(
    stats: &PolicyStats,
    trial_steps: u64,
    budget: u64,
    t: u64,
    h_hat: f64,
    c_start: f64,
    config: &RlpaConfig,
) -> bool {
    end_reason(stats, trial_steps, budget, t, h_hat, c_start, config).is_none()
}

/// Elimination test after an episode (with `K` already incremented).
pub fn consistency_violated(stats: &PolicyStats, t: u64, h_hat: f64, c_start: f64, config: &RlpaConfig) -> bool {
    !consistent(stats, t, h_hat, c_start, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: u32,
    pub start_t: u64,
    pub budget: u64,
    pub span_guess: f64,
    pub steps: u64,
    /// Decision time spent inside this trial.
    pub decision_time: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub trial: u32,
    pub policy: usize,
    pub start_t: u64,
    pub length: u64,
    pub reason: EndReason,
    /// B-value of the selected policy at episode start.
    pub b_value: f64,
    pub radius: f64,
    /// Samples held by the policy at episode start.
    pub samples_at_start: u64,
    pub eliminated: bool,
}

#[derive(Debug, Clone)]
pub struct RlpaOutcome {
    /// Observed rewards in original units, one per step.
    pub rewards: Vec<f64>,
    pub stats: Vec<PolicyStats>,
    pub trials: Vec<TrialRecord>,
    pub episodes: Vec<EpisodeRecord>,
    /// Number of B-value evaluations.
    pub b_value_computations: u64,
    pub steps_per_policy: Vec<u64>,
    /// Time spent in selection and episode-continuation logic, excluding the environment.
    pub decision_time: Duration,
}

impl RlpaOutcome {
    pub fn events(&self) -> Vec<Event> {
        let mut out = Vec::with_capacity(self.trials.len() + 3 * self.episodes.len());
        let mut trials = self.trials.iter().peekable();
        for ep in &self.episodes {
            while let Some(trial) = trials.next_if(|tr| tr.index <= ep.trial) {
                out.push(Event::TrialStart {
                    trial: trial.index,
                    t: trial.start_t,
                    budget: trial.budget,
                    span_guess: trial.span_guess,
                });
            }
            out.push(Event::EpisodeStart {
                t: ep.start_t,
                policy: Some(ep.policy),
                b_value: Some(ep.b_value),
                model_set_size: None,
            });
            let end = ep.start_t + ep.length;
            out.push(Event::EpisodeEnd { t: end, length: ep.length, reason: ep.reason });
            if ep.eliminated {
                out.push(Event::Elimination { t: end, policy: ep.policy, trial: ep.trial });
            }
        }
        out
    }

    /// Steps each policy received during the last trial.
    pub fn final_trial_steps(&self) -> Vec<u64> {
        let mut steps = vec![0; self.stats.len()];
        if let Some(last) = self.trials.last() {
            for ep in self.episodes.iter().filter(|e| e.trial == last.index) {
                steps[ep.policy] += ep.length;
            }
        }
        steps
    }
}

/// Runs the policy-advice agent for `horizon` steps from the environment's
/// current state.
pub fn rlpa_run<E: Environment>(
    env: &mut E,
    rng: &mut SimRng,
    policies: &[DeterministicPolicy],
    config: &RlpaConfig,
    horizon: u64,
) -> Result<RlpaOutcome, RlpaError> {
    config.validate()?;
    if policies.is_empty() {
        return Err(RlpaError::NoPolicies);
    }
    if horizon == 0 {
        return Err(RlpaError::ZeroHorizon);
    }
    for (index, policy) in policies.iter().enumerate() {
        if policy.num_states() != env.num_states() {
            return Err(RlpaError::Policy {
                index,
                reason: format!("covers {} states, environment has {}", policy.num_states(), env.num_states()),
            });
        }
        if let Some(&a) = policy.actions().iter().find(|&&a| a >= env.num_actions()) {
            return Err(RlpaError::Policy { index, reason: format!("uses action {a} of {}", env.num_actions()) });
        }
    }

    let m = policies.len();
    let scale = RewardScale::new(env.reward_range());
    let mut stats = vec![PolicyStats::default(); m];
    let mut rewards = Vec::with_capacity(horizon as usize);
    let mut trials = Vec::new();
    let mut episodes = Vec::new();
    let mut steps_per_policy = vec![0u64; m];
    let mut b_value_computations = 0u64;
    let mut decision_time = Duration::ZERO;
    let mut radii = vec![0.0; m];
    let mut b_values = vec![f64::NEG_INFINITY; m];

    let mut t: u64 = 0;
    let mut trial: u32 = 0;
    while t < horizon {
        let budget = 1u64.checked_shl(trial).unwrap_or(u64::MAX);
        let h_hat = config.span_function.eval(budget as f64);
        let mut active: Vec<usize> = (0..m).collect();
        let mut trial_steps: u64 = 0;
        trials.push(TrialRecord {
            index: trial,
            start_t: t,
            budget,
            span_guess: h_hat,
            steps: 0,
            decision_time: Duration::ZERO,
        });
        let time_before_trial = decision_time;
        log::debug!("trial {trial}: t={t} budget={budget} span_guess={h_hat:.3}");

        while trial_steps <= budget && !active.is_empty() && t < horizon {
            let clock = Instant::now();
            for &idx in &active {
                radii[idx] = confidence_radius(&stats[idx], h_hat, t, config);
                b_values[idx] = b_value(&stats[idx], radii[idx]);
            }
            b_value_computations += active.len() as u64;
            let chosen = select_policy(&active, &b_values).expect("active set is nonempty");
            let c_start = radii[chosen];
            let samples_at_start = stats[chosen].samples;
            stats[chosen].episode_steps = 0;
            decision_time += clock.elapsed();

            let start_t = t;
            let reason = loop {
                let clock = Instant::now();
                let reason = end_reason(&stats[chosen], trial_steps, budget, t, h_hat, c_start, config);
                decision_time += clock.elapsed();
                if let Some(reason) = reason {
                    break reason;
                }
                if t >= horizon {
                    break EndReason::Horizon;
                }
                t += 1;
                trial_steps += 1;
                let action = policies[chosen].action(env.state());
                let reward = env.step(action, rng);
                rewards.push(reward);
                let s = &mut stats[chosen];
                s.episode_steps += 1;
                s.reward_sum += scale.normalize(reward);
            };

            let s = &mut stats[chosen];
            let length = s.episode_steps;
            s.episodes += 1;
            let eliminated = consistency_violated(s, t, h_hat, c_start, config);
            if eliminated {
                active.retain(|&idx| idx != chosen);
                log::debug!("t={t}: policy {chosen} eliminated from trial {trial}");
            }
            s.commit();
            steps_per_policy[chosen] += length;
            episodes.push(EpisodeRecord {
                trial,
                policy: chosen,
                start_t,
                length,
                reason,
                b_value: b_values[chosen],
                radius: c_start,
                samples_at_start,
                eliminated,
            });
            debug_assert_eq!(stats.iter().map(|s| s.samples).sum::<u64>() - m as u64, t);
        }
        let record = trials.last_mut().expect("trial pushed above");
        record.steps = trial_steps;
        record.decision_time = decision_time - time_before_trial;
        trial += 1;
    }

    Ok(RlpaOutcome { rewards, stats, trials, episodes, b_value_computations, steps_per_policy, decision_time })
}
