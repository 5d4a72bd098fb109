//! Tabular MDP representation, validation and the stochastic stepping engine.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SimRng;

/// Tolerance on transition-row and reward-probability sums.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("invalid MDP: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("policy covers {policy_states} states, MDP has {mdp_states}")]
    PolicyStates { policy_states: usize, mdp_states: usize },
    #[error("policy maps state {state} to action {action}, MDP has {num_actions} actions")]
    PolicyAction { state: usize, action: usize, num_actions: usize },
    #[error("state {state} out of range for {num_states} states")]
    StateOutOfRange { state: usize, num_states: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Finite reward distribution: `support[k]` is drawn with probability `probs[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardDist {
    pub support: Vec<f64>,
    pub probs: Vec<f64>,
}

impl RewardDist {
    pub fn point(value: f64) -> Self {
        Self {
            support: vec![value],
            probs: vec![1.0],
        }
    }

    /// Two-point distribution taking `hi` with probability `p_hi`, otherwise `lo`.
    pub fn bernoulli(lo: f64, hi: f64, p_hi: f64) -> Self {
        Self {
            support: vec![lo, hi],
            probs: vec![1.0 - p_hi, p_hi],
        }
    }

    pub fn mean(&self) -> f64 {
        self.support.iter().zip(&self.probs).map(|(v, p)| v * p).sum()
    }

    /// Draws one value using exactly one uniform from `rng`.
    pub fn sample(&self, rng: &mut SimRng) -> f64 {
        let u: f64 = rng.random();
        self.support[sample_index(&self.probs, u)]
    }
}

/// Inverse-CDF lookup over an unnormalized scan. Rounding that leaves `u` past
/// the final cumulative sum falls back to the last index with positive mass.
fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (j, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Finite MDP `<S, A, P, r>` with bounded stochastic rewards.
///
/// `transitions[s][a][s']` is `P(s' | s, a)`; `rewards[s][a]` is the reward
/// distribution of taking `a` in `s`. The JSON form of this struct is the MDP
/// file format read and written by the harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMdp {
    pub num_states: usize,
    pub num_actions: usize,
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub rewards: Vec<Vec<RewardDist>>,
    pub reward_range: (f64, f64),
}

impl TabularMdp {
    /// Builds an MDP and rejects it if any invariant is violated.
    pub fn new(
        transitions: Vec<Vec<Vec<f64>>>,
        rewards: Vec<Vec<RewardDist>>,
        reward_range: (f64, f64),
    ) -> Result<Self, MdpError> {
        let num_states = transitions.len();
        let num_actions = transitions.first().map_or(0, Vec::len);
        let mdp = Self {
            num_states,
            num_actions,
            transitions,
            rewards,
            reward_range,
        };
        mdp.validated()
    }

    pub fn validated(self) -> Result<Self, MdpError> {
        let violations = validate_mdp(&self);
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(MdpError::Invalid(violations))
        }
    }

    pub fn mean_reward(&self, state: usize, action: usize) -> f64 {
        self.rewards[state][action].mean()
    }

    pub fn reward_scale(&self) -> RewardScale {
        RewardScale::new(self.reward_range)
    }

    pub fn from_json_str(text: &str) -> Result<Self, MdpError> {
        let mdp: Self = serde_json::from_str(text)?;
        mdp.validated()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("MDP serialization is infallible")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MdpError> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MdpError> {
        fs::write(path, self.to_json_string())?;
        Ok(())
    }
}

/// One violated [`TabularMdp`] invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoStates,
    NoActions,
    Shape { what: &'static str, state: Option<usize>, action: Option<usize>, expected: usize, found: usize },
    NegativeProbability { state: usize, action: usize, next_state: usize, value: f64 },
    RowSum { state: usize, action: usize, sum: f64 },
    RewardShape { state: usize, action: usize },
    RewardProbability { state: usize, action: usize, sum: f64 },
    RewardOutOfRange { state: usize, action: usize, value: f64 },
    RewardRange { lo: f64, hi: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NoStates => write!(f, "num_states must be at least 1"),
            Self::NoActions => write!(f, "num_actions must be at least 1"),
            Self::Shape { what, state, action, expected, found } => {
                write!(f, "{what}")?;
                if let Some(s) = state {
                    write!(f, " at state {s}")?;
                }
                if let Some(a) = action {
                    write!(f, " action {a}")?;
                }
                write!(f, ": expected length {expected}, found {found}")
            }
            Self::NegativeProbability { state, action, next_state, value } => write!(
                f,
                "negative transition probability {value} at (s={state}, a={action}, s'={next_state})"
            ),
            Self::RowSum { state, action, sum } => {
                write!(f, "transition row (s={state}, a={action}) sums to {sum}")
            }
            Self::RewardShape { state, action } => write!(
                f,
                "reward distribution (s={state}, a={action}) needs equal-length nonempty support and probs"
            ),
            Self::RewardProbability { state, action, sum } => write!(
                f,
                "reward distribution (s={state}, a={action}) has invalid probabilities (sum {sum})"
            ),
            Self::RewardOutOfRange { state, action, value } => write!(
                f,
                "reward value {value} at (s={state}, a={action}) outside reward_range"
            ),
            Self::RewardRange { lo, hi } => write!(f, "reward_range [{lo}, {hi}] is not a finite interval"),
        }
    }
}

/// Reports every violated invariant; never aborts.
pub fn validate_mdp(mdp: &TabularMdp) -> Vec<Violation> {
    let mut out = Vec::new();
    let (s_n, a_n) = (mdp.num_states, mdp.num_actions);
    if s_n == 0 {
        out.push(Violation::NoStates);
    }
    if a_n == 0 {
        out.push(Violation::NoActions);
    }
    let (lo, hi) = mdp.reward_range;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        out.push(Violation::RewardRange { lo, hi });
    }
    if mdp.transitions.len() != s_n {
        out.push(Violation::Shape {
            what: "transitions",
            state: None,
            action: None,
            expected: s_n,
            found: mdp.transitions.len(),
        });
    }
    if mdp.rewards.len() != s_n {
        out.push(Violation::Shape {
            what: "rewards",
            state: None,
            action: None,
            expected: s_n,
            found: mdp.rewards.len(),
        });
    }

    for (s, row) in mdp.transitions.iter().enumerate() {
        if row.len() != a_n {
            out.push(Violation::Shape { what: "transitions", state: Some(s), action: None, expected: a_n, found: row.len() });
            continue;
        }
        for (a, probs) in row.iter().enumerate() {
            if probs.len() != s_n {
                out.push(Violation::Shape {
                    what: "transitions",
                    state: Some(s),
                    action: Some(a),
                    expected: s_n,
                    found: probs.len(),
                });
                continue;
            }
            for (next_state, &value) in probs.iter().enumerate() {
                if value < 0.0 || value.is_nan() {
                    out.push(Violation::NegativeProbability { state: s, action: a, next_state, value });
                }
            }
            let sum: f64 = probs.iter().sum();
            if !((sum - 1.0).abs() <= ROW_SUM_TOLERANCE) {
                out.push(Violation::RowSum { state: s, action: a, sum });
            }
        }
    }

    for (s, row) in mdp.rewards.iter().enumerate() {
        if row.len() != a_n {
            out.push(Violation::Shape { what: "rewards", state: Some(s), action: None, expected: a_n, found: row.len() });
            continue;
        }
        for (a, dist) in row.iter().enumerate() {
            if dist.support.is_empty() || dist.support.len() != dist.probs.len() {
                out.push(Violation::RewardShape { state: s, action: a });
                continue;
            }
            let sum: f64 = dist.probs.iter().sum();
            if dist.probs.iter().any(|p| *p < 0.0 || p.is_nan()) || !((sum - 1.0).abs() <= ROW_SUM_TOLERANCE) {
                out.push(Violation::RewardProbability { state: s, action: a, sum });
            }
            for &value in &dist.support {
                if !(value >= lo && value <= hi) {
                    out.push(Violation::RewardOutOfRange { state: s, action: a, value });
                }
            }
        }
    }
    out
}

/// Affine map of `[r_lo, r_hi]` onto `[0, 1]`, used by agents internally.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardScale {
    pub lo: f64,
    pub width: f64,
}

impl RewardScale {
    pub fn new((lo, hi): (f64, f64)) -> Self {
        let width = hi - lo;
        // degenerate range: every reward equals lo and maps to 0
        Self { lo, width: if width > 0.0 { width } else { 1.0 } }
    }

    pub fn normalize(&self, reward: f64) -> f64 {
        (reward - self.lo) / self.width
    }

    pub fn denormalize(&self, value: f64) -> f64 {
        value * self.width + self.lo
    }
}

/// Total map from states to actions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeterministicPolicy(Vec<usize>);

impl DeterministicPolicy {
    pub fn new(actions: Vec<usize>) -> Self {
        Self(actions)
    }

    pub fn constant(num_states: usize, action: usize) -> Self {
        Self(vec![action; num_states])
    }

    #[inline]
    pub fn action(&self, state: usize) -> usize {
        self.0[state]
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub fn num_states(&self) -> usize {
        self.0.len()
    }

    /// Checks that the policy is total over `mdp`'s states and uses valid actions.
    pub fn check_against(&self, mdp: &TabularMdp) -> Result<(), MdpError> {
        if self.0.len() != mdp.num_states {
            return Err(MdpError::PolicyStates { policy_states: self.0.len(), mdp_states: mdp.num_states });
        }
        match self.0.iter().enumerate().find(|(_, &a)| a >= mdp.num_actions) {
            Some((state, &action)) => Err(MdpError::PolicyAction { state, action, num_actions: mdp.num_actions }),
            None => Ok(()),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MdpError> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MdpError> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }
}

/// One transition of `mdp` from `(state, action)`.
///
/// Consumes exactly two uniforms from `rng` (next state, then reward) so runs are
/// seed-reproducible. Panics on out-of-range indices.
pub fn step(mdp: &TabularMdp, state: usize, action: usize, rng: &mut SimRng) -> (usize, f64) {
    assert!(state < mdp.num_states, "state {state} out of range");
    assert!(action < mdp.num_actions, "action {action} out of range");
    let u: f64 = rng.random();
    let next = sample_index(&mdp.transitions[state][action], u);
    let reward = mdp.rewards[state][action].sample(rng);
    (next, reward)
}

/// Stepping interface the learning agents run against.
pub trait Environment {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn reward_range(&self) -> (f64, f64);
    fn state(&self) -> usize;
    /// Takes `action` in the current state, moves, and returns the reward.
    fn step(&mut self, action: usize, rng: &mut SimRng) -> f64;
}

#[derive(Debug, Clone)]
struct SparseRow {
    next: Vec<usize>,
    probs: Vec<f64>,
}

/// A validated MDP plus its current state, with sparse transition rows.
///
/// Produces exactly the same draws and outcomes as [`step`].
#[derive(Debug, Clone)]
pub struct MdpEnv<'a> {
    mdp: &'a TabularMdp,
    rows: Vec<SparseRow>,
    state: usize,
}

impl<'a> MdpEnv<'a> {
    pub fn new(mdp: &'a TabularMdp, start: usize) -> Result<Self, MdpError> {
        let violations = validate_mdp(mdp);
        if !violations.is_empty() {
            return Err(MdpError::Invalid(violations));
        }
        if start >= mdp.num_states {
            return Err(MdpError::StateOutOfRange { state: start, num_states: mdp.num_states });
        }
        let rows = mdp
            .transitions
            .iter()
            .flatten()
            .map(|probs| {
                let (next, probs) = probs.iter().enumerate().filter(|(_, p)| **p > 0.0).unzip();
                SparseRow { next, probs }
            })
            .collect();
        Ok(Self { mdp, rows, state: start })
    }

    pub fn mdp(&self) -> &TabularMdp {
        self.mdp
    }

    pub fn reset(&mut self, state: usize) {
        assert!(state < self.mdp.num_states, "state {state} out of range");
        self.state = state;
    }
}

impl Environment for MdpEnv<'_> {
    fn num_states(&self) -> usize {
        self.mdp.num_states
    }

    fn num_actions(&self) -> usize {
        self.mdp.num_actions
    }

    fn reward_range(&self) -> (f64, f64) {
        self.mdp.reward_range
    }

    fn state(&self) -> usize {
        self.state
    }

    #[inline]
    fn step(&mut self, action: usize, rng: &mut SimRng) -> f64 {
        assert!(action < self.mdp.num_actions, "action {action} out of range");
        let row = &self.rows[self.state * self.mdp.num_actions + action];
        let u: f64 = rng.random();
        let next = row.next[sample_index(&row.probs, u)];
        let reward = self.mdp.rewards[self.state][action].sample(rng);
        self.state = next;
        reward
    }
}

/// State/action/reward record of a rollout; `states` has one more entry than the others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
}

pub fn run_policy(
    mdp: &TabularMdp,
    policy: &DeterministicPolicy,
    start: usize,
    steps: usize,
    rng: &mut SimRng,
) -> Result<Trajectory, MdpError> {
    policy.check_against(mdp)?;
    let mut env = MdpEnv::new(mdp, start)?;
    let mut traj = Trajectory {
        states: Vec::with_capacity(steps + 1),
        actions: Vec::with_capacity(steps),
        rewards: Vec::with_capacity(steps),
    };
    traj.states.push(start);
    for _ in 0..steps {
        let action = policy.action(env.state());
        let reward = env.step(action, rng);
        traj.actions.push(action);
        traj.rewards.push(reward);
        traj.states.push(env.state());
    }
    Ok(traj)
}
