//! Grid-world benchmark family, average-reward optimal policies, and small
//! hand-built chains used throughout the tests.
//!
//! Grid states are numbered row-major from the upper-left corner. Actions are
//! `0 = up`, `1 = down`, `2 = right`, `3 = left`. Probability mass of a move
//! that would leave the grid stays on the current cell.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::ChainError;
use crate::mdp::{DeterministicPolicy, MdpError, RewardDist, TabularMdp};

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const RIGHT: usize = 2;
pub const LEFT: usize = 3;
pub const NUM_GRID_ACTIONS: usize = 4;
pub const NUM_MODELS: u8 = 4;

/// Accuracy used when computing advice policies.
pub const ADVICE_ACCURACY: f64 = 1e-10;
const RVI_MAX_ITERATIONS: usize = 2_000_000;
/// Aperiodicity transform weight: `P' = tau P + (1 - tau) I`.
const RVI_TAU: f64 = 0.5;
const GREEDY_TIE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("model id must be in 1..=4, got {0}")]
    InvalidModel(u8),
    #[error("grid side must be at least 2, got {0}")]
    SideTooSmall(usize),
    #[error("{0} action probabilities do not sum to 1")]
    Probabilities(&'static str),
    #[error("relative value iteration did not reach span {accuracy:e} in {iterations} iterations (last span {span:e})")]
    NonConvergence { iterations: usize, accuracy: f64, span: f64 },
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// Parameters of one grid-world variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub side: usize,
    pub model_id: u8,
    pub good_success: f64,
    /// Mass on each non-intended direction of a good action.
    pub good_slip: f64,
    pub bad_stay: f64,
    /// Mass on each of the four directions of a bad action.
    pub bad_slip: f64,
    /// Upper-left, upper-right, lower-left, lower-right.
    pub corner_rewards: [f64; 4],
    pub default_reward: f64,
}

impl GridSpec {
    pub fn new(side: usize, model_id: u8) -> Self {
        Self {
            side,
            model_id,
            good_success: 0.85,
            good_slip: 0.05,
            bad_stay: 0.85,
            bad_slip: 0.0375,
            corner_rewards: [0.7, 0.8, 0.9, 0.99],
            default_reward: -1.0,
        }
    }

    pub fn with_corner_rewards(mut self, corner_rewards: [f64; 4]) -> Self {
        self.corner_rewards = corner_rewards;
        self
    }

    pub fn num_states(&self) -> usize {
        self.side * self.side
    }

    /// Good actions of each model: M1 {up, left}, M2 {up, down}, M3 {down, right}, M4 {right, left}.
    pub fn good_actions(model_id: u8) -> Result<[usize; 2], EnvError> {
        match model_id {
            1 => Ok([UP, LEFT]),
            2 => Ok([UP, DOWN]),
            3 => Ok([DOWN, RIGHT]),
            4 => Ok([RIGHT, LEFT]),
            other => Err(EnvError::InvalidModel(other)),
        }
    }

    pub fn corner_states(&self) -> [usize; 4] {
        let n = self.side;
        [0, n - 1, n * (n - 1), n * n - 1]
    }
}

pub fn grid_state(side: usize, row: usize, col: usize) -> usize {
    row * side + col
}

/// Cell reached by moving in `direction`, or `None` at a wall.
fn neighbor(side: usize, state: usize, direction: usize) -> Option<usize> {
    let (row, col) = (state / side, state % side);
    match direction {
        UP if row > 0 => Some(state - side),
        DOWN if row + 1 < side => Some(state + side),
        RIGHT if col + 1 < side => Some(state + 1),
        LEFT if col > 0 => Some(state - 1),
        _ => None,
    }
}

pub fn make_gridworld(spec: &GridSpec) -> Result<TabularMdp, EnvError> {
    if spec.side < 2 {
        return Err(EnvError::SideTooSmall(spec.side));
    }
    let good = GridSpec::good_actions(spec.model_id)?;
    if (spec.good_success + 3.0 * spec.good_slip - 1.0).abs() > 1e-12 {
        return Err(EnvError::Probabilities("good"));
    }
    if (spec.bad_stay + 4.0 * spec.bad_slip - 1.0).abs() > 1e-12 {
        return Err(EnvError::Probabilities("bad"));
    }

    let side = spec.side;
    let n = spec.num_states();
    let corners = spec.corner_states();
    let mut transitions = vec![vec![vec![0.0; n]; NUM_GRID_ACTIONS]; n];
    let mut rewards = Vec::with_capacity(n);
    for (s, rows) in transitions.iter_mut().enumerate() {
        for (action, row) in rows.iter_mut().enumerate() {
            let is_good = good.contains(&action);
            if !is_good {
                row[s] += spec.bad_stay;
            }
            for direction in 0..NUM_GRID_ACTIONS {
                let mass = match (is_good, direction == action) {
                    (true, true) => spec.good_success,
                    (true, false) => spec.good_slip,
                    (false, _) => spec.bad_slip,
                };
                row[neighbor(side, s, direction).unwrap_or(s)] += mass;
            }
        }
        let reward = corners
            .iter()
            .position(|&c| c == s)
            .map_or(spec.default_reward, |k| spec.corner_rewards[k]);
        rewards.push(vec![RewardDist::point(reward); NUM_GRID_ACTIONS]);
    }

    let all = spec.corner_rewards.iter().copied().chain([spec.default_reward]);
    let lo = all.clone().fold(f64::INFINITY, f64::min);
    let hi = all.fold(f64::NEG_INFINITY, f64::max);
    Ok(TabularMdp::new(transitions, rewards, (lo, hi))?)
}

/// Average-reward optimal policy by relative value iteration.
///
/// Runs on the aperiodic transform `0.5 P + 0.5 I` (same optimal policies and
/// gains) until the span of successive value differences falls below
/// `accuracy`, then acts greedily with ties going to the lowest action index.
pub fn optimal_policy(mdp: &TabularMdp, accuracy: f64) -> Result<DeterministicPolicy, EnvError> {
    Ok(relative_value_iteration(mdp, accuracy)?.0)
}

/// Optimal policy together with the gain estimate `(max + min) / 2` of the last
/// value difference.
pub fn relative_value_iteration(mdp: &TabularMdp, accuracy: f64) -> Result<(DeterministicPolicy, f64), EnvError> {
    let (n, m) = (mdp.num_states, mdp.num_actions);
    let rows: Vec<Vec<(usize, f64)>> = mdp
        .transitions
        .iter()
        .flatten()
        .map(|row| row.iter().copied().enumerate().filter(|(_, p)| *p > 0.0).collect())
        .collect();
    let mean: Vec<f64> = (0..n).flat_map(|s| (0..m).map(move |a| (s, a))).map(|(s, a)| mdp.mean_reward(s, a)).collect();
    let q = |h: &[f64], s: usize, a: usize| -> f64 {
        let idx = s * m + a;
        mean[idx] + RVI_TAU * rows[idx].iter().map(|&(j, p)| p * h[j]).sum::<f64>()
    };

    let mut h = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut span = f64::INFINITY;
    for _ in 0..RVI_MAX_ITERATIONS {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in 0..n {
            let best = (0..m).map(|a| q(&h, s, a)).fold(f64::NEG_INFINITY, f64::max);
            next[s] = best + (1.0 - RVI_TAU) * h[s];
            let diff = next[s] - h[s];
            lo = lo.min(diff);
            hi = hi.max(diff);
        }
        span = hi - lo;
        let offset = next[0];
        for s in 0..n {
            h[s] = next[s] - offset;
        }
        if span < accuracy {
            let policy = (0..n)
                .map(|s| {
                    let values: Vec<f64> = (0..m).map(|a| q(&h, s, a)).collect();
                    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    values.iter().position(|v| *v >= best - GREEDY_TIE_TOLERANCE).unwrap_or(0)
                })
                .collect();
            return Ok((DeterministicPolicy::new(policy), 0.5 * (hi + lo)));
        }
    }
    Err(EnvError::NonConvergence { iterations: RVI_MAX_ITERATIONS, accuracy, span })
}

/// The four grid variants at `side`, in model order.
pub fn model_set(side: usize) -> Result<Vec<TabularMdp>, EnvError> {
    (1..=NUM_MODELS).map(|k| make_gridworld(&GridSpec::new(side, k))).collect()
}

/// Optimal policy of each of M1..M4 at `side`, in order.
pub fn advice_set(side: usize) -> Result<Vec<DeterministicPolicy>, EnvError> {
    model_set(side)?
        .iter()
        .map(|mdp| optimal_policy(mdp, ADVICE_ACCURACY))
        .collect()
}

/// Two states, one action, rows `(0.5, 0.5)`, point rewards 0 and 1.
pub fn symmetric_two_state() -> TabularMdp {
    TabularMdp::new(
        vec![vec![vec![0.5, 0.5]], vec![vec![0.5, 0.5]]],
        vec![vec![RewardDist::point(0.0)], vec![RewardDist::point(1.0)]],
        (0.0, 1.0),
    )
    .expect("symmetric chain is valid")
}

/// One state with one action per reward distribution; policy "always `a`"
/// has gain equal to the mean of `arms[a]`.
pub fn single_state_arms(arms: Vec<RewardDist>, reward_range: (f64, f64)) -> Result<TabularMdp, MdpError> {
    let k = arms.len();
    TabularMdp::new(vec![vec![vec![1.0]; k]], vec![arms], reward_range)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::validate_mdp;

    #[test]
    fn grid_shape_and_corner_reward() {
        let mdp = make_gridworld(&GridSpec::new(4, 4)).unwrap();
        assert_eq!(mdp.num_states, 16);
        assert_eq!(mdp.num_actions, 4);
        assert_eq!(mdp.mean_reward(15, 0), 0.99);
        assert_eq!(mdp.mean_reward(0, 0), 0.7);
        assert_eq!(mdp.mean_reward(3, 0), 0.8);
        assert_eq!(mdp.mean_reward(12, 0), 0.9);
        assert_eq!(mdp.mean_reward(5, 2), -1.0);
        assert_eq!(mdp.reward_range, (-1.0, 0.99));
    }

    #[test]
    fn every_variant_is_valid() {
        for side in [2, 3, 4, 6] {
            for model in 1..=4 {
                let mdp = make_gridworld(&GridSpec::new(side, model)).unwrap();
                assert!(validate_mdp(&mdp).is_empty());
            }
        }
    }

    #[test]
    fn interior_good_up() {
        // M1 has up as a good action; cell (1,1) of a 4x4 grid is interior
        let mdp = make_gridworld(&GridSpec::new(4, 1)).unwrap();
        let s = grid_state(4, 1, 1);
        let row = &mdp.transitions[s][UP];
        let mut expected = vec![0.0; 16];
        expected[grid_state(4, 0, 1)] = 0.85;
        expected[grid_state(4, 2, 1)] = 0.05;
        expected[grid_state(4, 1, 0)] = 0.05;
        expected[grid_state(4, 1, 2)] = 0.05;
        assert_eq!(row, &expected);
    }

    #[test]
    fn bad_action_in_corner_keeps_blocked_mass() {
        // M4: up is bad; upper-left corner blocks up and left
        let mdp = make_gridworld(&GridSpec::new(4, 4)).unwrap();
        let row = &mdp.transitions[0][UP];
        assert!((row[0] - (0.85 + 2.0 * 0.0375)).abs() < 1e-15);
        assert_eq!(row[1], 0.0375);
        assert_eq!(row[4], 0.0375);
        assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(matches!(make_gridworld(&GridSpec::new(4, 5)), Err(EnvError::InvalidModel(5))));
        assert!(matches!(make_gridworld(&GridSpec::new(1, 1)), Err(EnvError::SideTooSmall(1))));
        let mut spec = GridSpec::new(3, 1);
        spec.good_slip = 0.1;
        assert!(matches!(make_gridworld(&spec), Err(EnvError::Probabilities("good"))));
    }

    #[test]
    fn single_state_argmax() {
        let mdp = single_state_arms(vec![RewardDist::point(0.2), RewardDist::point(0.8)], (0.0, 1.0)).unwrap();
        assert_eq!(optimal_policy(&mdp, 1e-10).unwrap().actions(), &[1]);
    }

    #[test]
    fn advice_set_shape() {
        let set = advice_set(4).unwrap();
        assert_eq!(set.len(), 4);
        assert!(set.iter().all(|p| p.num_states() == 16 && p.actions().iter().all(|&a| a < 4)));
    }
}
