//! Average-reward reinforcement learning with policy advice on tabular MDPs.
//!
//! Modules, bottom-up:
//! - [`mdp`]: MDP representation, validation, sampling and rollouts.
//! - [`chain`]: exact gain/bias oracles for the Markov chain a policy induces.
//! - [`envs`]: grid-world families, advice sets and small test environments.
//! - [`rlpa`]: the policy-advice agent.
//! - [`baselines`]: UCRL2 and the model-elimination variant UCWM.
//! - [`harness`]: seeded multi-run experiments and result bundles.

// negated comparisons are used on purpose: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod chain;
pub mod diagnostics;
pub mod envs;
pub mod harness;
pub mod mdp;
pub mod regret;
pub mod rlpa;
pub mod rng;

pub use mdp::{DeterministicPolicy, Environment, MdpEnv, RewardDist, TabularMdp};
pub use rng::{derive_seed, stream_rng, SimRng, Stream};
