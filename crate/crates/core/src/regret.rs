//! Regret against a reference gain.

use serde::{Deserialize, Serialize};

/// Rewards of one run together with the reference gain they are compared to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub mu_plus: f64,
    pub rewards: Vec<f64>,
}

impl RegretTrace {
    pub fn new(mu_plus: f64, rewards: Vec<f64>) -> Self {
        Self { mu_plus, rewards }
    }

    pub fn regret(&self) -> f64 {
        compute_regret(self.mu_plus, &self.rewards)
    }

    /// `t mu_plus - sum_{s<=t} r_s` for every prefix length `t = 1..=T`.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut total = 0.0;
        self.rewards
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                total += r;
                (i + 1) as f64 * self.mu_plus - total
            })
            .collect()
    }

    /// Regret at prefix length `t` (`0 <= t <= T`).
    pub fn regret_at(&self, t: usize) -> f64 {
        compute_regret(self.mu_plus, &self.rewards[..t])
    }
}

/// `Delta(T) = T mu_plus - sum_t r_t`.
pub fn compute_regret(mu_plus: f64, rewards: &[f64]) -> f64 {
    rewards.len() as f64 * mu_plus - rewards.iter().sum::<f64>()
}

/// Mean and standard error of `values`; the error is 0 for fewer than two values.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
