//! Optimistic model-based baselines.
//!
//! [`ucrl2_run`] keeps visit counts, builds L1 confidence balls around the
//! empirical transitions and intervals around the empirical rewards, and plays
//! the policy returned by extended value iteration until some state-action
//! pair doubles its count. [`ucwm_run`] replaces the optimistic planner by a
//! finite candidate model set: it plays the optimal policy of the highest-gain
//! model still consistent with every visited pair, and falls back to UCRL2
//! planning once every candidate has been ruled out.

use std::cmp::Ordering;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::chain::{evaluate_policy, ChainError};
use crate::diagnostics::{EndReason, Event};
use crate::envs::{optimal_policy, EnvError, ADVICE_ACCURACY};
use crate::mdp::{DeterministicPolicy, Environment, RewardScale, TabularMdp};
use crate::rng::SimRng;

pub const EVI_MAX_ITERATIONS: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("confidence delta must lie in (0, 1), got {0}")]
    Delta(f64),
    #[error("candidate model {index} has shape {states}x{actions}, environment is {env_states}x{env_actions}")]
    Shape { index: usize, states: usize, actions: usize, env_states: usize, env_actions: usize },
    #[error("candidate model set is empty")]
    NoModels,
    #[error("extended value iteration did not reach accuracy {accuracy} within {iterations} iterations")]
    NonConvergence { accuracy: f64, iterations: usize },
    #[error("candidate model {index}: {source}")]
    ModelPlan { index: usize, source: Box<dyn std::error::Error + Send + Sync> },
}

/// Visit, transition and reward statistics, rewards in normalized units.
#[derive(Debug, Clone)]
pub struct CountsModel {
    num_states: usize,
    num_actions: usize,
    delta: f64,
    visits: Vec<u64>,
    next_counts: Vec<Vec<(usize, u64)>>,
    reward_sums: Vec<f64>,
    total: u64,
}

impl CountsModel {
    pub fn new(num_states: usize, num_actions: usize, delta: f64) -> Self {
        let sa = num_states * num_actions;
        Self {
            num_states,
            num_actions,
            delta,
            visits: vec![0; sa],
            next_counts: vec![Vec::new(); sa],
            reward_sums: vec![0.0; sa],
            total: 0,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    fn index(&self, s: usize, a: usize) -> usize {
        s * self.num_actions + a
    }

    pub fn record(&mut self, s: usize, a: usize, reward: f64, next: usize) {
        let k = self.index(s, a);
        self.visits[k] += 1;
        self.reward_sums[k] += reward;
        self.total += 1;
        match self.next_counts[k].iter_mut().find(|(j, _)| *j == next) {
            Some((_, c)) => *c += 1,
            None => self.next_counts[k].push((next, 1)),
        }
    }

    pub fn visits(&self, s: usize, a: usize) -> u64 {
        self.visits[self.index(s, a)]
    }

    pub fn total_visits(&self) -> u64 {
        self.total
    }

    /// Empirical mean reward; 0 for unvisited pairs.
    pub fn empirical_reward(&self, s: usize, a: usize) -> f64 {
        let k = self.index(s, a);
        if self.visits[k] == 0 { 0.0 } else { self.reward_sums[k] / self.visits[k] as f64 }
    }

    /// Observed next states with empirical probabilities; empty for unvisited pairs.
    pub fn empirical_transition(&self, s: usize, a: usize) -> Vec<(usize, f64)> {
        let k = self.index(s, a);
        let n = self.visits[k] as f64;
        self.next_counts[k].iter().map(|&(j, c)| (j, c as f64 / n)).collect()
    }

    /// `sqrt(7 log(2 S A t / delta) / (2 max(1, N)))`.
    pub fn reward_radius(&self, s: usize, a: usize, t: u64) -> f64 {
        let sa = (self.num_states * self.num_actions) as f64;
        let n = self.visits(s, a).max(1) as f64;
        (7.0 * (2.0 * sa * t.max(1) as f64 / self.delta).ln() / (2.0 * n)).sqrt()
    }

    /// `sqrt(14 S log(2 A t / delta) / max(1, N))`.
    pub fn transition_radius(&self, s: usize, a: usize, t: u64) -> f64 {
        let n = self.visits(s, a).max(1) as f64;
        let arg = 2.0 * self.num_actions as f64 * t.max(1) as f64 / self.delta;
        (14.0 * self.num_states as f64 * arg.ln() / n).sqrt()
    }
}

/// Largest `sum_j p_j u_j` over distributions `p` with `||p - p_hat||_1 <= d`:
/// put up to `p_hat(best) + d/2` on the top state and keep the rest of `p_hat`,
/// filling from the highest-valued states down.
pub fn optimistic_expectation(p_hat: &[(usize, f64)], d: f64, u: &[f64], best: usize) -> f64 {
    let mut scratch = Vec::with_capacity(p_hat.len());
    optimistic_expectation_with(p_hat, d, u, best, &mut scratch)
}

fn optimistic_expectation_with(
    p_hat: &[(usize, f64)],
    d: f64,
    u: &[f64],
    best: usize,
    scratch: &mut Vec<(f64, f64)>,
) -> f64 {
    if p_hat.is_empty() || d >= 2.0 {
        return u[best];
    }
    let p_best_hat = p_hat.iter().find(|(j, _)| *j == best).map_or(0.0, |&(_, p)| p);
    let p_best = (p_best_hat + 0.5 * d).min(1.0);
    let mut value = p_best * u[best];
    let mut budget = 1.0 - p_best;
    scratch.clear();
    scratch.extend(p_hat.iter().filter(|(j, _)| *j != best).map(|&(j, p)| (u[j], p)));
    scratch.sort_by(|x, y| y.0.total_cmp(&x.0));
    for &(uj, pj) in scratch.iter() {
        if budget <= 0.0 {
            break;
        }
        let take = pj.min(budget);
        value += take * uj;
        budget -= take;
    }
    value
}

#[derive(Debug, Clone, PartialEq)]
pub struct EviSolution {
    pub policy: DeterministicPolicy,
    /// Optimistic gain estimate, normalized units.
    pub gain: f64,
    /// Final value vector, shifted so its minimum is 0.
    pub values: Vec<f64>,
    pub iterations: usize,
}

/// Extended value iteration over the plausible set at `t = max(1, total visits)`,
/// stopped once the span of successive differences drops below `accuracy`.
pub fn extended_value_iteration(counts: &CountsModel, accuracy: f64) -> Result<EviSolution, BaselineError> {
    evi(counts, counts.total_visits().max(1), accuracy, None)
}

fn evi(counts: &CountsModel, t: u64, accuracy: f64, warm: Option<&[f64]>) -> Result<EviSolution, BaselineError> {
    let (ns, na) = (counts.num_states, counts.num_actions);
    let mut r_opt = Vec::with_capacity(ns * na);
    let mut radius = Vec::with_capacity(ns * na);
    let mut support = Vec::with_capacity(ns * na);
    for s in 0..ns {
        for a in 0..na {
            if counts.visits(s, a) == 0 {
                r_opt.push(1.0);
                radius.push(f64::INFINITY);
            } else {
                r_opt.push((counts.empirical_reward(s, a) + counts.reward_radius(s, a, t)).min(1.0));
                radius.push(counts.transition_radius(s, a, t));
            }
            support.push(counts.empirical_transition(s, a));
        }
    }

    let mut u = warm.map_or_else(|| vec![0.0; ns], <[f64]>::to_vec);
    let mut next = vec![0.0; ns];
    let mut policy = vec![0usize; ns];
    let mut scratch = Vec::new();
    for iteration in 1..=EVI_MAX_ITERATIONS {
        let best = (0..ns).fold(0, |b, s| if u[s] > u[b] { s } else { b });
        for s in 0..ns {
            let mut best_value = f64::NEG_INFINITY;
            for a in 0..na {
                let k = s * na + a;
                let value = r_opt[k] + optimistic_expectation_with(&support[k], radius[k], &u, best, &mut scratch);
                if value > best_value {
                    best_value = value;
                    policy[s] = a;
                }
            }
            next[s] = best_value;
        }
        let (lo, hi) = next.iter().zip(&u).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (n, o)| {
            let d = n - o;
            (lo.min(d), hi.max(d))
        });
        let base = next.iter().copied().fold(f64::INFINITY, f64::min);
        for (dst, &src) in u.iter_mut().zip(&next) {
            *dst = src - base;
        }
        if hi - lo < accuracy {
            return Ok(EviSolution {
                policy: DeterministicPolicy::new(policy),
                gain: 0.5 * (hi + lo),
                values: u,
                iterations: iteration,
            });
        }
    }
    Err(BaselineError::NonConvergence { accuracy, iterations: EVI_MAX_ITERATIONS })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineEpisode {
    pub start_t: u64,
    pub length: u64,
    pub reason: EndReason,
    /// Candidate model whose optimal policy was played; `None` for optimistic planning.
    pub model: Option<usize>,
    /// Candidate models consistent at episode start (model elimination only).
    pub consistent_models: Option<Vec<usize>>,
    pub evi_iterations: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    /// Observed rewards in original units.
    pub rewards: Vec<f64>,
    pub episodes: Vec<BaselineEpisode>,
    pub counts: CountsModel,
    /// Time spent planning and checking episode-termination conditions.
    pub decision_time: Duration,
}

impl BaselineOutcome {
    pub fn events(&self) -> Vec<Event> {
        let mut out = Vec::with_capacity(2 * self.episodes.len());
        for ep in &self.episodes {
            out.push(Event::EpisodeStart {
                t: ep.start_t,
                policy: None,
                b_value: None,
                model_set_size: ep.consistent_models.as_ref().map(Vec::len),
            });
            out.push(Event::EpisodeEnd { t: ep.start_t + ep.length, length: ep.length, reason: ep.reason });
        }
        out
    }

    /// First episode start at which candidate `model` was no longer consistent.
    pub fn elimination_time(&self, model: usize) -> Option<u64> {
        self.episodes
            .iter()
            .find(|ep| ep.consistent_models.as_ref().is_some_and(|set| !set.contains(&model)))
            .map(|ep| ep.start_t)
    }
}

fn check_common(delta: f64, horizon: u64) -> Result<(), BaselineError> {
    if horizon == 0 {
        return Err(BaselineError::ZeroHorizon);
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(BaselineError::Delta(delta));
    }
    Ok(())
}

/// Plays `policy` from the environment's current state until the horizon, a
/// count doubling, or `stop` reports an inconsistency after a step.
#[allow(clippy::too_many_arguments)]
fn run_episode<E: Environment>(
    env: &mut E,
    rng: &mut SimRng,
    policy: &DeterministicPolicy,
    counts: &mut CountsModel,
    scale: &RewardScale,
    horizon: u64,
    t: &mut u64,
    rewards: &mut Vec<f64>,
    decision_time: &mut Duration,
    mut stop: impl FnMut(&CountsModel, usize, usize, u64) -> bool,
) -> (u64, EndReason) {
    let na = counts.num_actions;
    let mut in_episode = vec![0u64; counts.num_states * na];
    let mut length = 0;
    loop {
        if *t >= horizon {
            return (length, EndReason::Horizon);
        }
        let clock = Instant::now();
        let s = env.state();
        let a = policy.action(s);
        let k = s * na + a;
        let at_start = counts.visits[k] - in_episode[k];
        let doubled = in_episode[k] >= at_start.max(1);
        *decision_time += clock.elapsed();
        if doubled {
            return (length, EndReason::Doubling);
        }
        let reward = env.step(a, rng);
        rewards.push(reward);
        counts.record(s, a, scale.normalize(reward), env.state());
        in_episode[k] += 1;
        *t += 1;
        length += 1;
        let clock = Instant::now();
        let inconsistent = stop(counts, s, a, *t);
        *decision_time += clock.elapsed();
        if inconsistent {
            return (length, EndReason::Inconsistency);
        }
    }
}

/// UCRL2 for `horizon` steps from the environment's current state.
pub fn ucrl2_run<E: Environment>(
    env: &mut E,
    rng: &mut SimRng,
    delta: f64,
    horizon: u64,
) -> Result<BaselineOutcome, BaselineError> {
    check_common(delta, horizon)?;
    let scale = RewardScale::new(env.reward_range());
    let mut counts = CountsModel::new(env.num_states(), env.num_actions(), delta);
    let mut rewards = Vec::with_capacity(horizon as usize);
    let mut episodes = Vec::new();
    let mut decision_time = Duration::ZERO;
    let mut warm: Option<Vec<f64>> = None;
    let mut t = 0u64;
    while t < horizon {
        let clock = Instant::now();
        let t_k = t.max(1);
        let plan = evi(&counts, t_k, 1.0 / (t_k as f64).sqrt(), warm.as_deref())?;
        decision_time += clock.elapsed();
        let start_t = t;
        let (length, reason) = run_episode(
            env,
            rng,
            &plan.policy,
            &mut counts,
            &scale,
            horizon,
            &mut t,
            &mut rewards,
            &mut decision_time,
            |_, _, _, _| false,
        );
        episodes.push(BaselineEpisode {
            start_t,
            length,
            reason,
            model: None,
            consistent_models: None,
            evi_iterations: Some(plan.iterations),
        });
        warm = Some(plan.values);
    }
    Ok(BaselineOutcome { rewards, episodes, counts, decision_time })
}

/// A candidate model with its precomputed optimal policy and gain.
#[derive(Debug, Clone)]
pub struct ModelPlan {
    pub mdp: TabularMdp,
    pub policy: DeterministicPolicy,
    pub gain: f64,
}

pub fn prepare_models(models: &[TabularMdp]) -> Result<Vec<ModelPlan>, BaselineError> {
    models
        .iter()
        .enumerate()
        .map(|(index, mdp)| {
            let policy = optimal_policy(mdp, ADVICE_ACCURACY)
                .map_err(|e: EnvError| BaselineError::ModelPlan { index, source: Box::new(e) })?;
            let gain = evaluate_policy(mdp, &policy)
                .map_err(|e: ChainError| BaselineError::ModelPlan { index, source: Box::new(e) })?
                .max_gain();
            Ok(ModelPlan { mdp: mdp.clone(), policy, gain })
        })
        .collect()
}

/// Whether `model` lies in the confidence region of `(s, a)` at time `t`.
pub fn model_consistent_at(model: &TabularMdp, counts: &CountsModel, scale: &RewardScale, s: usize, a: usize, t: u64) -> bool {
    if counts.visits(s, a) == 0 {
        return true;
    }
    let reward_gap = (scale.normalize(model.mean_reward(s, a)) - counts.empirical_reward(s, a)).abs();
    if reward_gap > counts.reward_radius(s, a, t) {
        return false;
    }
    let row = &model.transitions[s][a];
    let k = counts.index(s, a);
    let n = counts.visits[k] as f64;
    // ||P - p_hat||_1 = sum_j P_j + sum_{j observed} (|P_j - p_hat_j| - P_j)
    let mut l1: f64 = row.iter().sum();
    for &(j, c) in &counts.next_counts[k] {
        l1 += (row[j] - c as f64 / n).abs() - row[j];
    }
    l1 <= counts.transition_radius(s, a, t)
}

/// Whether `model` lies in the confidence region of every visited pair.
pub fn model_consistent(model: &TabularMdp, counts: &CountsModel, scale: &RewardScale, t: u64) -> bool {
    (0..counts.num_states)
        .all(|s| (0..counts.num_actions).all(|a| model_consistent_at(model, counts, scale, s, a, t)))
}

/// UCWM for `horizon` steps from the environment's current state.
pub fn ucwm_run<E: Environment>(
    env: &mut E,
    rng: &mut SimRng,
    models: &[ModelPlan],
    delta: f64,
    horizon: u64,
) -> Result<BaselineOutcome, BaselineError> {
    check_common(delta, horizon)?;
    if models.is_empty() {
        return Err(BaselineError::NoModels);
    }
    for (index, plan) in models.iter().enumerate() {
        if plan.mdp.num_states != env.num_states() || plan.mdp.num_actions != env.num_actions() {
            return Err(BaselineError::Shape {
                index,
                states: plan.mdp.num_states,
                actions: plan.mdp.num_actions,
                env_states: env.num_states(),
                env_actions: env.num_actions(),
            });
        }
    }
    let scale = RewardScale::new(env.reward_range());
    let mut counts = CountsModel::new(env.num_states(), env.num_actions(), delta);
    let mut rewards = Vec::with_capacity(horizon as usize);
    let mut episodes = Vec::new();
    let mut decision_time = Duration::ZERO;
    let mut warm: Option<Vec<f64>> = None;
    let mut t = 0u64;
    while t < horizon {
        let clock = Instant::now();
        let t_k = t.max(1);
        let consistent: Vec<usize> =
            (0..models.len()).filter(|&i| model_consistent(&models[i].mdp, &counts, &scale, t_k)).collect();
        let chosen = consistent.iter().copied().reduce(|best, i| {
            match models[i].gain.partial_cmp(&models[best].gain) {
                Some(Ordering::Greater) => i,
                _ => best,
            }
        });
        let (policy, evi_iterations) = match chosen {
            Some(i) => (models[i].policy.clone(), None),
            None => {
                let plan = evi(&counts, t_k, 1.0 / (t_k as f64).sqrt(), warm.as_deref())?;
                warm = Some(plan.values);
                (plan.policy, Some(plan.iterations))
            }
        };
        decision_time += clock.elapsed();
        let start_t = t;
        let (length, reason) = run_episode(
            env,
            rng,
            &policy,
            &mut counts,
            &scale,
            horizon,
            &mut t,
            &mut rewards,
            &mut decision_time,
            |counts, s, a, now| chosen.is_some_and(|i| !model_consistent_at(&models[i].mdp, counts, &scale, s, a, now)),
        );
        if reason == EndReason::Inconsistency {
            log::debug!("t={t}: candidate model {chosen:?} left its confidence region");
        }
        episodes.push(BaselineEpisode {
            start_t,
            length,
            reason,
            model: chosen,
            consistent_models: Some(consistent),
            evi_iterations,
        });
    }
    Ok(BaselineOutcome { rewards, episodes, counts, decision_time })
}
