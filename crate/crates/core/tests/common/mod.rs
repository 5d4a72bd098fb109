#![allow(dead_code, clippy::needless_range_loop)]

use policy_advice::mdp::{DeterministicPolicy, Environment, MdpEnv, TabularMdp};
use policy_advice::rng::{stream_rng, Stream};

/// Dense Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        assert!(a[col][col].abs() > 1e-14, "singular system");
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                let (top, bottom) = a.split_at_mut(row);
                for (x, p) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                    *x -= f * p;
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x
}

pub fn policy_chain(mdp: &TabularMdp, policy: &[usize]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let p = (0..mdp.num_states).map(|s| mdp.transitions[s][policy[s]].clone()).collect();
    let r = (0..mdp.num_states).map(|s| mdp.mean_reward(s, policy[s])).collect();
    (p, r)
}

/// Gain and bias (with `h[0] = 0`) of a unichain chain from the Poisson system.
pub fn unichain_gain_bias(p: &[Vec<f64>], r: &[f64]) -> (f64, Vec<f64>) {
    let n = r.len();
    // unknowns: h[0..n], g
    let mut a = vec![vec![0.0; n + 1]; n + 1];
    let mut b = vec![0.0; n + 1];
    for s in 0..n {
        for j in 0..n {
            a[s][j] = -p[s][j];
        }
        a[s][s] += 1.0;
        a[s][n] = 1.0;
        b[s] = r[s];
    }
    a[n][0] = 1.0;
    let x = solve_dense(a, b);
    (x[n], x[..n].to_vec())
}

/// Howard policy iteration for unichain MDPs, starting from action 0 everywhere.
pub fn policy_iteration(mdp: &TabularMdp) -> (Vec<usize>, f64) {
    let mut policy = vec![0usize; mdp.num_states];
    for _ in 0..1000 {
        let (p, r) = policy_chain(mdp, &policy);
        let (g, h) = unichain_gain_bias(&p, &r);
        let mut changed = false;
        for s in 0..mdp.num_states {
            let q = |a: usize| mdp.mean_reward(s, a) + mdp.transitions[s][a].iter().zip(&h).map(|(p, h)| p * h).sum::<f64>();
            let current = q(policy[s]);
            let (best_a, best_q) = (0..mdp.num_actions).map(|a| (a, q(a))).fold((policy[s], current), |acc, x| {
                if x.1 > acc.1 + 1e-10 { x } else { acc }
            });
            if best_a != policy[s] && best_q > current + 1e-10 {
                policy[s] = best_a;
                changed = true;
            }
        }
        if !changed {
            return (policy, g);
        }
    }
    panic!("policy iteration did not converge");
}

/// Long-run reward mean with a batch-means standard error (100 batches).
pub fn rollout_mean(mdp: &TabularMdp, policy: &DeterministicPolicy, steps: usize, seed: u64) -> (f64, f64) {
    let batches = 100;
    let per = steps / batches;
    let mut env = MdpEnv::new(mdp, 0).unwrap();
    let mut rng = stream_rng(seed, Stream::Oracle);
    let mut means = Vec::with_capacity(batches);
    for _ in 0..batches {
        let mut total = 0.0;
        for _ in 0..per {
            let a = policy.action(env.state());
            total += env.step(a, &mut rng);
        }
        means.push(total / per as f64);
    }
    let mean = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}

/// Random MDP with dense positive rows (hence unichain under every policy).
pub fn random_dense_mdp(num_states: usize, num_actions: usize, seed: u64) -> TabularMdp {
    use policy_advice::mdp::RewardDist;
    use rand::Rng;
    let mut rng = stream_rng(seed, Stream::Oracle);
    let transitions = (0..num_states)
        .map(|_| {
            (0..num_actions)
                .map(|_| {
                    let raw: Vec<f64> = (0..num_states).map(|_| rng.random::<f64>() + 0.05).collect();
                    let total: f64 = raw.iter().sum();
                    let mut row: Vec<f64> = raw.iter().map(|x| x / total).collect();
                    let rest: f64 = row[1..].iter().sum();
                    row[0] = 1.0 - rest;
                    row
                })
                .collect()
        })
        .collect();
    let rewards = (0..num_states)
        .map(|_| (0..num_actions).map(|_| RewardDist::bernoulli(0.0, 1.0, rng.random())).collect())
        .collect();
    TabularMdp::new(transitions, rewards, (0.0, 1.0)).unwrap()
}
