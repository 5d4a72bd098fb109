mod common;

use policy_advice::chain::{
    bias_residual, classify_recurrence, evaluate_policy, gap_structure, induced_chain, solve_average_reward,
    stationary_distribution, stationary_residual,
};
use policy_advice::envs::{advice_set, make_gridworld, optimal_policy, GridSpec, ADVICE_ACCURACY};
use policy_advice::mdp::{step, DeterministicPolicy};
use policy_advice::rng::{stream_rng, Stream};
use proptest::prelude::*;

#[test]
fn grid_chain_rows_match_sampled_frequencies() {
    let mdp = make_gridworld(&GridSpec::new(4, 4)).unwrap();
    let policy = optimal_policy(&mdp, ADVICE_ACCURACY).unwrap();
    let chain = induced_chain(&mdp, &policy).unwrap();
    let n = 100_000;
    for s in [0, 5, 15] {
        assert!((chain.p[s].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut counts = [0usize; 16];
        let mut rng = stream_rng(s as u64, Stream::Oracle);
        for _ in 0..n {
            counts[step(&mdp, s, policy.action(s), &mut rng).0] += 1;
        }
        for (&p, &c) in chain.p[s].iter().zip(&counts) {
            let freq = c as f64 / n as f64;
            assert!((freq - p).abs() <= 4.0 * (p * (1.0 - p) / n as f64).sqrt() + 1e-12);
        }
    }
}

#[test]
fn grid_gain_matches_long_rollout() {
    let mdp = make_gridworld(&GridSpec::new(4, 4)).unwrap();
    let policy = optimal_policy(&mdp, ADVICE_ACCURACY).unwrap();
    let mu = evaluate_policy(&mdp, &policy).unwrap().gain().unwrap();
    let (mean, se) = common::rollout_mean(&mdp, &policy, 2_000_000, 3);
    assert!((mean - mu).abs() <= 3.0 * se, "rollout {mean} +- {se}, oracle {mu}");
}

#[test]
fn grid_solution_matches_independent_solver() {
    let mdp = make_gridworld(&GridSpec::new(5, 4)).unwrap();
    for policy in advice_set(5).unwrap() {
        let sol = evaluate_policy(&mdp, &policy).unwrap();
        let (p, r) = common::policy_chain(&mdp, policy.actions());
        let (g, h) = common::unichain_gain_bias(&p, &r);
        assert!((sol.gain().unwrap() - g).abs() < 1e-9);
        let shift = h.iter().copied().fold(f64::INFINITY, f64::min);
        for (a, b) in sol.bias.iter().zip(&h) {
            assert!((a - (b - shift)).abs() < 1e-8);
        }
        assert!(sol.residual <= 1e-9);
    }
}

#[test]
fn advice_set_gap_structure_on_true_model() {
    let mdp = make_gridworld(&GridSpec::new(4, 4)).unwrap();
    let gaps = gap_structure(&mdp, &advice_set(4).unwrap()).unwrap();
    assert_eq!(gaps.best_policy_index, 3);
    assert!(gaps.gamma_min > 0.0);
    assert!(gaps.solutions.iter().all(|s| s.mu.iter().all(|&m| m <= gaps.mu_plus + 1e-12)));
    assert!(gaps.solutions[3].is_unichain());
    assert_eq!(gaps.h_plus, gaps.solutions[3].span);
}

#[test]
fn two_constant_policies_gap() {
    use policy_advice::mdp::{RewardDist, TabularMdp};
    let row = vec![0.5, 0.5];
    let mdp = TabularMdp::new(
        vec![vec![row.clone(), row.clone()], vec![row.clone(), row]],
        vec![
            vec![RewardDist::point(0.5), RewardDist::point(0.3)],
            vec![RewardDist::point(0.5), RewardDist::point(0.3)],
        ],
        (0.0, 1.0),
    )
    .unwrap();
    let gaps = gap_structure(&mdp, &[DeterministicPolicy::constant(2, 0), DeterministicPolicy::constant(2, 1)]).unwrap();
    assert!((gaps.gamma_min - 0.2).abs() < 1e-12);
    assert_eq!(gaps.best_policy_index, 0);
}

fn random_chain(n: usize, seed: u64, sparsity: f64) -> Vec<Vec<f64>> {
    use rand::Rng;
    let mut rng = stream_rng(seed, Stream::Oracle);
    (0..n)
        .map(|i| {
            let mut row: Vec<f64> =
                (0..n).map(|_| if rng.random::<f64>() < sparsity { 0.0 } else { rng.random::<f64>() }).collect();
            row[(i + 1) % n] += 0.1;
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= total);
            row
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_chains_satisfy_residual_bounds(n in 1usize..12, seed in any::<u64>(), sparsity in 0.0f64..0.9) {
        let p = random_chain(n, seed, sparsity);
        let r: Vec<f64> = (0..n).map(|i| ((i * 7 + seed as usize % 5) % 11) as f64 / 10.0).collect();
        let sol = solve_average_reward(&p, &r).unwrap();
        prop_assert!(sol.residual <= 1e-9);
        prop_assert!(bias_residual(&p, &r, &sol.mu, &sol.bias) <= 1e-9);
        prop_assert!(sol.span >= 0.0);
        prop_assert_eq!(sol.bias.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
        let classes = classify_recurrence(&p).unwrap();
        for (class, rho) in classes.recurrent_classes.iter().zip(&sol.stationary) {
            prop_assert!(stationary_residual(&p, rho) <= 1e-10);
            prop_assert!((rho.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
            prop_assert!(rho.iter().all(|&x| x >= 0.0));
            let again = stationary_distribution(&p, class).unwrap();
            prop_assert_eq!(&again, rho);
        }
        if sol.is_unichain() {
            let g = sol.mu[0];
            prop_assert!(sol.mu.iter().all(|m| (m - g).abs() <= 1e-9));
        }
    }

    #[test]
    fn reward_shift_moves_gain_only(n in 1usize..10, seed in any::<u64>(), c in -5.0f64..5.0) {
        let p = random_chain(n, seed, 0.5);
        let r: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let shifted: Vec<f64> = r.iter().map(|x| x + c).collect();
        let a = solve_average_reward(&p, &r).unwrap();
        let b = solve_average_reward(&p, &shifted).unwrap();
        for (x, y) in a.mu.iter().zip(&b.mu) {
            prop_assert!((y - x - c).abs() <= 1e-9);
        }
        for (x, y) in a.bias.iter().zip(&b.bias) {
            prop_assert!((x - y).abs() <= 1e-8);
        }
    }

    #[test]
    fn gains_match_rollouts(n in 2usize..6, seed in 0u64..1000) {
        let mdp = common::random_dense_mdp(n, 2, seed);
        let policy = DeterministicPolicy::new((0..n).map(|s| (s + seed as usize) % 2).collect());
        let mu = evaluate_policy(&mdp, &policy).unwrap().gain().unwrap();
        let (mean, se) = common::rollout_mean(&mdp, &policy, 1_000_000, seed);
        prop_assert!((mean - mu).abs() <= 4.0 * se, "rollout {} +- {}, oracle {}", mean, se, mu);
    }
}
