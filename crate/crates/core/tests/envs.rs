mod common;

use policy_advice::chain::{evaluate_policy, gap_structure};
use policy_advice::envs::{
    advice_set, make_gridworld, optimal_policy, relative_value_iteration, EnvError, GridSpec, ADVICE_ACCURACY,
};
use policy_advice::mdp::validate_mdp;

fn gain(mdp: &policy_advice::TabularMdp, policy: &policy_advice::DeterministicPolicy) -> f64 {
    evaluate_policy(mdp, policy).unwrap().gain().unwrap()
}

#[test]
fn value_iteration_agrees_with_policy_iteration() {
    for side in [2, 3, 4, 6] {
        for model in 1..=4 {
            let mdp = make_gridworld(&GridSpec::new(side, model)).unwrap();
            let policy = optimal_policy(&mdp, ADVICE_ACCURACY).unwrap();
            let (_, oracle_gain) = common::policy_iteration(&mdp);
            assert!((gain(&mdp, &policy) - oracle_gain).abs() < 1e-6, "side {side} model {model}");
        }
    }
}

#[test]
fn optimal_policy_dominates_advice() {
    let mdp = make_gridworld(&GridSpec::new(4, 4)).unwrap();
    let best = gain(&mdp, &optimal_policy(&mdp, ADVICE_ACCURACY).unwrap());
    for policy in advice_set(4).unwrap() {
        assert!(best >= gain(&mdp, &policy) - 1e-12);
    }
}

#[test]
fn advice_policies_are_optimal_on_their_models() {
    let advice = advice_set(4).unwrap();
    assert_eq!(advice.len(), 4);
    for (k, policy) in advice.iter().enumerate() {
        assert_eq!(policy.num_states(), 16);
        let mdp = make_gridworld(&GridSpec::new(4, k as u8 + 1)).unwrap();
        let (_, oracle_gain) = common::policy_iteration(&mdp);
        assert!((gain(&mdp, policy) - oracle_gain).abs() < 1e-6);
    }
    let m4 = make_gridworld(&GridSpec::new(4, 4)).unwrap();
    assert!(gain(&m4, &advice[3]) > gain(&m4, &advice[0]));
}

#[test]
fn reflected_models_have_equal_gains() {
    let corners = [0.9; 4];
    for side in [3, 4, 5] {
        let gains: Vec<f64> = (1..=4)
            .map(|m| {
                let mdp = make_gridworld(&GridSpec::new(side, m).with_corner_rewards(corners)).unwrap();
                relative_value_iteration(&mdp, 1e-12).map(|(p, _)| gain(&mdp, &p)).unwrap()
            })
            .collect();
        assert!((gains[0] - gains[2]).abs() < 1e-9, "{gains:?}");
        assert!((gains[1] - gains[3]).abs() < 1e-9, "{gains:?}");
    }
}

#[test]
fn best_advice_policy_is_unichain() {
    for side in [4, 6, 8] {
        let mdp = make_gridworld(&GridSpec::new(side, 4)).unwrap();
        let gaps = gap_structure(&mdp, &advice_set(side).unwrap()).unwrap();
        assert_eq!(gaps.best_policy_index, 3);
        assert!(gaps.solutions[3].is_unichain());
    }
}

#[test]
fn rows_are_conserved_everywhere() {
    for side in 2..=7 {
        for model in 1..=4 {
            let mdp = make_gridworld(&GridSpec::new(side, model)).unwrap();
            assert!(validate_mdp(&mdp).is_empty());
            for rows in &mdp.transitions {
                for row in rows {
                    assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                }
            }
        }
    }
}

#[test]
fn invalid_specs_are_rejected() {
    assert!(matches!(make_gridworld(&GridSpec::new(4, 0)), Err(EnvError::InvalidModel(0))));
    assert!(matches!(make_gridworld(&GridSpec::new(4, 5)), Err(EnvError::InvalidModel(5))));
    assert!(make_gridworld(&GridSpec::new(1, 4)).is_err());
}
