mod common;

use policy_advice::baselines::{
    extended_value_iteration, prepare_models, ucrl2_run, ucwm_run, CountsModel, ModelPlan,
};
use policy_advice::chain::evaluate_policy;
use policy_advice::diagnostics::EndReason;
use policy_advice::envs::{make_gridworld, model_set, optimal_policy, single_state_arms, GridSpec, ADVICE_ACCURACY};
use policy_advice::mdp::{run_policy, step, DeterministicPolicy, MdpEnv, RewardDist, TabularMdp};
use policy_advice::rng::{stream_rng, Stream};
use proptest::prelude::*;

/// Counts built by sampling every (s, a) `per_pair` times from `mdp`.
fn sampled_counts(mdp: &TabularMdp, per_pair: usize, seed: u64) -> CountsModel {
    let scale = mdp.reward_scale();
    let mut counts = CountsModel::new(mdp.num_states, mdp.num_actions, 0.05);
    let mut rng = stream_rng(seed, Stream::Oracle);
    for s in 0..mdp.num_states {
        for a in 0..mdp.num_actions {
            for _ in 0..per_pair {
                let (next, r) = step(mdp, s, a, &mut rng);
                counts.record(s, a, scale.normalize(r), next);
            }
        }
    }
    counts
}

fn two_state_choice() -> TabularMdp {
    // action 0 pays more in both states
    let row = vec![0.5, 0.5];
    TabularMdp::new(
        vec![vec![row.clone(), vec![0.9, 0.1]], vec![row, vec![0.1, 0.9]]],
        vec![
            vec![RewardDist::bernoulli(0.0, 1.0, 0.8), RewardDist::bernoulli(0.0, 1.0, 0.5)],
            vec![RewardDist::bernoulli(0.0, 1.0, 0.6), RewardDist::bernoulli(0.0, 1.0, 0.3)],
        ],
        (0.0, 1.0),
    )
    .unwrap()
}

#[test]
fn evi_on_well_sampled_arms() {
    let mdp = single_state_arms(vec![RewardDist::point(0.2), RewardDist::point(0.8)], (0.0, 1.0)).unwrap();
    let counts = sampled_counts(&mdp, 500_000, 1);
    let sol = extended_value_iteration(&counts, 1e-6).unwrap();
    assert_eq!(sol.policy.actions(), &[1]);
    assert!((sol.gain - 0.8).abs() <= 0.05, "gain {}", sol.gain);
}

#[test]
fn evi_without_data_is_fully_optimistic() {
    let counts = CountsModel::new(5, 3, 0.05);
    let sol = extended_value_iteration(&counts, 1e-6).unwrap();
    assert!((sol.gain - 1.0).abs() <= 1e-6, "gain {}", sol.gain);
}

#[test]
fn evi_ties_pick_lowest_action() {
    let row = vec![0.5, 0.5];
    let mdp = TabularMdp::new(
        vec![vec![row.clone(), row.clone()], vec![row.clone(), row]],
        vec![
            vec![RewardDist::point(0.0), RewardDist::point(0.0)],
            vec![RewardDist::point(1.0), RewardDist::point(1.0)],
        ],
        (0.0, 1.0),
    )
    .unwrap();
    // identical counts for both actions
    let mut counts = CountsModel::new(2, 2, 0.05);
    let mut rng = stream_rng(2, Stream::Oracle);
    for s in 0..2 {
        for _ in 0..1000 {
            let (next, r) = step(&mdp, s, 0, &mut rng);
            counts.record(s, 0, r, next);
            counts.record(s, 1, r, next);
        }
    }
    let sol = extended_value_iteration(&counts, 1e-8).unwrap();
    assert_eq!(sol.policy.actions(), &[0, 0]);
}

#[test]
fn ucrl2_without_choices_is_a_rollout() {
    let mdp = single_state_arms(vec![RewardDist::bernoulli(0.0, 1.0, 0.3)], (0.0, 1.0)).unwrap();
    let mut env = MdpEnv::new(&mdp, 0).unwrap();
    let out = ucrl2_run(&mut env, &mut stream_rng(4, Stream::Environment), 0.05, 3000).unwrap();
    let rollout = run_policy(&mdp, &DeterministicPolicy::constant(1, 0), 0, 3000, &mut stream_rng(4, Stream::Environment))
        .unwrap();
    assert_eq!(out.rewards, rollout.rewards);
}

#[test]
fn ucrl2_learns_small_mdp() {
    let mdp = two_state_choice();
    let (_, best) = common::policy_iteration(&mdp);
    let horizon = 100_000;
    let regrets: Vec<f64> = (0..20)
        .map(|seed| {
            let mut env = MdpEnv::new(&mdp, 0).unwrap();
            let out = ucrl2_run(&mut env, &mut stream_rng(seed, Stream::Environment), 0.05, horizon).unwrap();
            best - out.rewards.iter().sum::<f64>() / horizon as f64
        })
        .collect();
    let mean = regrets.iter().sum::<f64>() / regrets.len() as f64;
    assert!(mean < 0.05, "mean per-step regret {mean}");
}

#[test]
fn ucrl2_optimism_over_true_gain() {
    for seed in 0..10 {
        let mdp = common::random_dense_mdp(4, 3, seed);
        let (_, best) = common::policy_iteration(&mdp);
        for per_pair in [10, 100, 1000] {
            let counts = sampled_counts(&mdp, per_pair, seed);
            let accuracy = 1e-6;
            let sol = extended_value_iteration(&counts, accuracy).unwrap();
            assert!(sol.gain >= best - accuracy, "seed {seed}: optimistic {} < true {best}", sol.gain);
        }
    }
}

#[test]
fn ucwm_with_true_model_plays_optimal_policy() {
    let mdp = make_gridworld(&GridSpec::new(4, 4)).unwrap();
    let plans = prepare_models(std::slice::from_ref(&mdp)).unwrap();
    let policy = optimal_policy(&mdp, ADVICE_ACCURACY).unwrap();
    let mut env = MdpEnv::new(&mdp, 5).unwrap();
    let out = ucwm_run(&mut env, &mut stream_rng(8, Stream::Environment), &plans, 0.05, 20_000).unwrap();
    let rollout = run_policy(&mdp, &policy, 5, 20_000, &mut stream_rng(8, Stream::Environment)).unwrap();
    assert_eq!(out.rewards, rollout.rewards);
    assert!(out.episodes.iter().all(|e| e.model == Some(0) && e.reason != EndReason::Inconsistency));
}

#[test]
fn far_model_is_dropped_quickly() {
    // the wrong model moves state 0's row by total variation 0.9 and promises more reward
    let truth = TabularMdp::new(
        vec![vec![vec![0.95, 0.05]], vec![vec![0.5, 0.5]]],
        vec![vec![RewardDist::point(0.2)], vec![RewardDist::point(0.8)]],
        (0.0, 1.0),
    )
    .unwrap();
    let mut wrong = truth.clone();
    wrong.transitions[0][0] = vec![0.05, 0.95];
    let plans: Vec<ModelPlan> = prepare_models(&[wrong, truth.clone()]).unwrap();
    assert!(plans[0].gain > plans[1].gain);
    let fast = (0..100u64)
        .filter(|&seed| {
            let mut env = MdpEnv::new(&truth, 0).unwrap();
            let out = ucwm_run(&mut env, &mut stream_rng(seed, Stream::Environment), &plans, 0.05, 2000).unwrap();
            // a mid-episode inconsistency also counts as the model being dropped
            let dropped = out.episodes.iter().find(|e| e.model == Some(0) && e.reason == EndReason::Inconsistency);
            let first = dropped.map(|e| e.start_t + e.length).into_iter().chain(out.elimination_time(0)).min();
            first.is_some_and(|t| t <= 1000)
        })
        .count();
    assert!(fast >= 95, "{fast} of 100 seeds dropped the wrong model by t=1000");
}

#[test]
fn true_grid_model_survives() {
    let models = model_set(4).unwrap();
    let plans = prepare_models(&models).unwrap();
    let truth = &models[3];
    let eliminated = (0..200u64)
        .filter(|&seed| {
            let mut env = MdpEnv::new(truth, (seed % 16) as usize).unwrap();
            let out = ucwm_run(&mut env, &mut stream_rng(seed, Stream::Environment), &plans, 0.05, 100_000).unwrap();
            out.elimination_time(3).is_some()
        })
        .count();
    assert!((eliminated as f64) < 0.05 * 200.0, "true model eliminated in {eliminated} of 200 runs");
}

#[test]
fn model_gains_come_from_their_own_models() {
    let models = model_set(4).unwrap();
    let plans = prepare_models(&models).unwrap();
    for plan in &plans {
        let gain = evaluate_policy(&plan.mdp, &plan.policy).unwrap().max_gain();
        assert_eq!(plan.gain, gain);
        let (_, oracle) = common::policy_iteration(&plan.mdp);
        assert!((plan.gain - oracle).abs() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn counts_track_every_step(ns in 1usize..5, na in 1usize..4, seed in any::<u64>(), horizon in 1u64..2000) {
        let mdp = common::random_dense_mdp(ns, na, seed);
        let mut env = MdpEnv::new(&mdp, 0).unwrap();
        let out = ucrl2_run(&mut env, &mut stream_rng(seed, Stream::Environment), 0.05, horizon).unwrap();
        prop_assert_eq!(out.counts.total_visits(), horizon);
        prop_assert_eq!(out.rewards.len() as u64, horizon);
        prop_assert_eq!(out.episodes.iter().map(|e| e.length).sum::<u64>(), horizon);
        for s in 0..ns {
            for a in 0..na {
                let row = out.counts.empirical_transition(s, a);
                if out.counts.visits(s, a) > 0 {
                    prop_assert!((row.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-12);
                } else {
                    prop_assert!(row.is_empty());
                }
            }
        }
        let mut env = MdpEnv::new(&mdp, 0).unwrap();
        let again = ucrl2_run(&mut env, &mut stream_rng(seed, Stream::Environment), 0.05, horizon).unwrap();
        prop_assert_eq!(out.rewards, again.rewards);
    }
}
