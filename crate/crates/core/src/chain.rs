//! Exact evaluation of the Markov reward process a policy induces: recurrence
//! structure, average reward, bias and span, and the gap structure of a policy
//! set.
//!
//! Unichain chains solve the joint `(n+1)`-unknown Poisson system
//! `mu + lambda(s) - sum_j P(s,j) lambda(j) = r(s)`, `lambda(ref) = 0` directly.
//! Multichain chains get a per-state gain from the stationary distribution of
//! each recurrent class and the absorption probabilities of transient states.
//! Bias vectors are always shifted so that `min_s lambda(s) = 0`.

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use serde::Serialize;
use thiserror::Error;

use crate::mdp::{DeterministicPolicy, MdpError, TabularMdp};

/// Transition probabilities at or below this are not edges of the support graph.
pub const SUPPORT_EPSILON: f64 = 1e-12;
/// Maximum accepted residual of the bias equation.
pub const BIAS_RESIDUAL_TOLERANCE: f64 = 1e-9;
/// Maximum accepted residual of `rho P = rho`.
pub const STATIONARY_RESIDUAL_TOLERANCE: f64 = 1e-10;
const STOCHASTIC_TOLERANCE: f64 = 1e-9;
const UNICHAIN_GAIN_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("matrix is not square: row {row} has {len} entries, expected {expected}")]
    NotSquare { row: usize, len: usize, expected: usize },
    #[error("row {row} is not a probability vector (sum {sum})")]
    NotStochastic { row: usize, sum: f64 },
    #[error("reward vector has {found} entries, chain has {expected} states")]
    RewardLength { expected: usize, found: usize },
    #[error("{what}: linear solve failed (residual {residual:e})")]
    NumericalFailure { what: &'static str, residual: f64 },
    #[error("no policy in the set induces a unichain process")]
    NoUnichainPolicy,
    #[error("policy {policy} reaches gain {gain} in state {state}, above the best unichain gain {mu_plus}")]
    BestPolicyNotDominant { policy: usize, state: usize, gain: f64, mu_plus: f64 },
    #[error("empty policy set")]
    EmptyPolicySet,
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// State-to-state kernel and mean reward vector of a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct InducedChain {
    pub p: Vec<Vec<f64>>,
    pub r: Vec<f64>,
}

impl InducedChain {
    pub fn num_states(&self) -> usize {
        self.r.len()
    }
}

/// `P_pi[i][j] = P(j | i, pi(i))`, `r_pi[i]` = mean reward of `(i, pi(i))`.
pub fn induced_chain(mdp: &TabularMdp, policy: &DeterministicPolicy) -> Result<InducedChain, MdpError> {
    policy.check_against(mdp)?;
    let p = (0..mdp.num_states)
        .map(|s| mdp.transitions[s][policy.action(s)].clone())
        .collect();
    let r = (0..mdp.num_states).map(|s| mdp.mean_reward(s, policy.action(s))).collect();
    Ok(InducedChain { p, r })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Classification {
    /// Closed communicating classes, each sorted, ordered by smallest member.
    pub recurrent_classes: Vec<Vec<usize>>,
    pub transient: Vec<usize>,
    pub unichain: bool,
}

fn check_stochastic(p: &[Vec<f64>]) -> Result<(), ChainError> {
    let n = p.len();
    for (row, probs) in p.iter().enumerate() {
        if probs.len() != n {
            return Err(ChainError::NotSquare { row, len: probs.len(), expected: n });
        }
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|x| !(*x >= 0.0)) || (sum - 1.0).abs() > STOCHASTIC_TOLERANCE {
            return Err(ChainError::NotStochastic { row, sum });
        }
    }
    Ok(())
}

/// Strongly connected components of the support graph; the closed ones are the
/// recurrent classes.
pub fn classify_recurrence(p: &[Vec<f64>]) -> Result<Classification, ChainError> {
    check_stochastic(p)?;
    let n = p.len();
    let mut graph = DiGraph::<(), ()>::with_capacity(n, n * 4);
    let nodes: Vec<NodeIndex> = (0..n).map(|_| graph.add_node(())).collect();
    for (i, row) in p.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            if x > SUPPORT_EPSILON {
                graph.add_edge(nodes[i], nodes[j], ());
            }
        }
    }

    let mut component = vec![usize::MAX; n];
    let sccs = tarjan_scc(&graph);
    for (c, members) in sccs.iter().enumerate() {
        for node in members {
            component[node.index()] = c;
        }
    }
    let mut recurrent_classes = Vec::new();
    let mut transient = Vec::new();
    for (c, members) in sccs.iter().enumerate() {
        let closed = members.iter().all(|node| {
            p[node.index()]
                .iter()
                .enumerate()
                .all(|(j, &x)| x <= SUPPORT_EPSILON || component[j] == c)
        });
        let mut states: Vec<usize> = members.iter().map(|node| node.index()).collect();
        states.sort_unstable();
        if closed {
            recurrent_classes.push(states);
        } else {
            transient.extend(states);
        }
    }
    recurrent_classes.sort_unstable_by_key(|class| class[0]);
    transient.sort_unstable();
    let unichain = recurrent_classes.len() == 1;
    Ok(Classification { recurrent_classes, transient, unichain })
}

/// Stationary distribution of the closed class `class`, as a vector over all
/// states (zero outside the class).
pub fn stationary_distribution(p: &[Vec<f64>], class: &[usize]) -> Result<Vec<f64>, ChainError> {
    let k = class.len();
    // rho (I - P_cc) = 0 transposed, with the last equation replaced by sum(rho) = 1
    let mut a = DMatrix::<f64>::zeros(k, k);
    for (col, &i) in class.iter().enumerate() {
        for (row, &j) in class.iter().enumerate() {
            let identity = if i == j { 1.0 } else { 0.0 };
            a[(row, col)] = identity - p[i][j];
        }
    }
    for col in 0..k {
        a[(k - 1, col)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(k);
    b[k - 1] = 1.0;
    let rho_class = a.lu().solve(&b).ok_or(ChainError::NumericalFailure {
        what: "stationary distribution",
        residual: f64::INFINITY,
    })?;

    let mut rho = vec![0.0; p.len()];
    for (idx, &i) in class.iter().enumerate() {
        rho[i] = rho_class[idx];
    }
    let residual = stationary_residual(p, &rho);
    if !(residual <= STATIONARY_RESIDUAL_TOLERANCE) || rho.iter().any(|x| *x < -STATIONARY_RESIDUAL_TOLERANCE) {
        return Err(ChainError::NumericalFailure { what: "stationary distribution", residual });
    }
    Ok(rho)
}

/// `max_j |(rho P)_j - rho_j|` together with `|sum(rho) - 1|`.
pub fn stationary_residual(p: &[Vec<f64>], rho: &[f64]) -> f64 {
    let n = rho.len();
    let mut worst = (rho.iter().sum::<f64>() - 1.0).abs();
    for j in 0..n {
        let flow: f64 = (0..n).map(|i| rho[i] * p[i][j]).sum();
        worst = worst.max((flow - rho[j]).abs());
    }
    worst
}

/// Average reward, bias and recurrence structure of an induced chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainSolution {
    /// Per-state gain; constant for unichain processes.
    pub mu: Vec<f64>,
    /// Bias, shifted so its minimum is 0.
    pub bias: Vec<f64>,
    pub span: f64,
    pub classification: Classification,
    /// Stationary distribution of each recurrent class, aligned with
    /// `classification.recurrent_classes`.
    pub stationary: Vec<Vec<f64>>,
    /// Residual of the bias equation at the returned solution.
    pub residual: f64,
}

impl ChainSolution {
    pub fn is_unichain(&self) -> bool {
        self.classification.unichain
    }

    /// The scalar gain of a unichain process.
    pub fn gain(&self) -> Option<f64> {
        self.is_unichain().then(|| self.mu[0])
    }

    pub fn max_gain(&self) -> f64 {
        self.mu.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `max_s |lambda(s) + mu(s) - r(s) - sum_j P(s,j) lambda(j)|`.
pub fn bias_residual(p: &[Vec<f64>], r: &[f64], mu: &[f64], bias: &[f64]) -> f64 {
    p.iter()
        .enumerate()
        .map(|(s, row)| {
            let next: f64 = row.iter().zip(bias).map(|(x, l)| x * l).sum();
            (bias[s] + mu[s] - r[s] - next).abs()
        })
        .fold(0.0, f64::max)
}

pub fn solve_average_reward(p: &[Vec<f64>], r: &[f64]) -> Result<ChainSolution, ChainError> {
    if r.len() != p.len() {
        return Err(ChainError::RewardLength { expected: p.len(), found: r.len() });
    }
    let classification = classify_recurrence(p)?;
    let stationary = classification
        .recurrent_classes
        .iter()
        .map(|class| stationary_distribution(p, class))
        .collect::<Result<Vec<_>, _>>()?;

    let (mu, mut bias) = if classification.unichain {
        solve_unichain(p, r, classification.recurrent_classes[0][0])?
    } else {
        solve_multichain(p, r, &classification, &stationary)?
    };

    let min = bias.iter().copied().fold(f64::INFINITY, f64::min);
    bias.iter_mut().for_each(|x| *x -= min);
    let span = bias.iter().copied().fold(0.0, f64::max);
    let residual = bias_residual(p, r, &mu, &bias);
    if !(residual <= BIAS_RESIDUAL_TOLERANCE) {
        return Err(ChainError::NumericalFailure { what: "bias equation", residual });
    }
    if classification.unichain {
        debug_assert!(mu.iter().all(|m| (m - mu[0]).abs() <= UNICHAIN_GAIN_TOLERANCE));
    }
    Ok(ChainSolution { mu, bias, span, classification, stationary, residual })
}

fn solve_unichain(p: &[Vec<f64>], r: &[f64], reference: usize) -> Result<(Vec<f64>, Vec<f64>), ChainError> {
    let n = p.len();
    // unknowns: x[0] = mu, x[1 + s] = lambda(s)
    let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
    let mut b = DVector::<f64>::zeros(n + 1);
    for s in 0..n {
        a[(s, 0)] = 1.0;
        a[(s, 1 + s)] += 1.0;
        for (j, &x) in p[s].iter().enumerate() {
            a[(s, 1 + j)] -= x;
        }
        b[s] = r[s];
    }
    a[(n, 1 + reference)] = 1.0;
    let x = a.lu().solve(&b).ok_or(ChainError::NumericalFailure { what: "Poisson system", residual: f64::INFINITY })?;
    Ok((vec![x[0]; n], x.iter().skip(1).copied().collect()))
}

fn solve_multichain(
    p: &[Vec<f64>],
    r: &[f64],
    classification: &Classification,
    stationary: &[Vec<f64>],
) -> Result<(Vec<f64>, Vec<f64>), ChainError> {
    let n = p.len();
    let mut mu = vec![0.0; n];
    let class_gain: Vec<f64> = stationary.iter().map(|rho| rho.iter().zip(r).map(|(a, b)| a * b).sum()).collect();
    for (class, gain) in classification.recurrent_classes.iter().zip(&class_gain) {
        for &s in class {
            mu[s] = *gain;
        }
    }

    let transient = &classification.transient;
    if !transient.is_empty() {
        // absorption probabilities: (I - P_TT) x_c = P_T,c 1
        let k = transient.len();
        let mut a = DMatrix::<f64>::zeros(k, k);
        for (row, &i) in transient.iter().enumerate() {
            for (col, &j) in transient.iter().enumerate() {
                a[(row, col)] = if i == j { 1.0 } else { 0.0 } - p[i][j];
            }
        }
        let lu = a.lu();
        let mut gain_rhs = DVector::<f64>::zeros(k);
        for (row, &i) in transient.iter().enumerate() {
            gain_rhs[row] = classification
                .recurrent_classes
                .iter()
                .zip(&class_gain)
                .map(|(class, g)| g * class.iter().map(|&j| p[i][j]).sum::<f64>())
                .sum();
        }
        let x = lu
            .solve(&gain_rhs)
            .ok_or(ChainError::NumericalFailure { what: "absorption probabilities", residual: f64::INFINITY })?;
        for (row, &i) in transient.iter().enumerate() {
            mu[i] = x[row];
        }
    }

    // (I - P) lambda = r - mu, with one equation per recurrent class replaced by lambda(ref) = 0
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for s in 0..n {
        a[(s, s)] = 1.0;
        for (j, &x) in p[s].iter().enumerate() {
            a[(s, j)] -= x;
        }
        b[s] = r[s] - mu[s];
    }
    for class in &classification.recurrent_classes {
        let reference = class[0];
        for j in 0..n {
            a[(reference, j)] = 0.0;
        }
        a[(reference, reference)] = 1.0;
        b[reference] = 0.0;
    }
    let bias = a
        .lu()
        .solve(&b)
        .ok_or(ChainError::NumericalFailure { what: "multichain bias", residual: f64::INFINITY })?;
    Ok((mu, bias.iter().copied().collect()))
}

/// Induced chain of `policy` on `mdp`, solved.
pub fn evaluate_policy(mdp: &TabularMdp, policy: &DeterministicPolicy) -> Result<ChainSolution, ChainError> {
    let chain = induced_chain(mdp, policy)?;
    solve_average_reward(&chain.p, &chain.r)
}

/// Best-policy gain, gaps and spans of a policy set on one MDP.
#[derive(Debug, Clone, Serialize)]
pub struct GapStructure {
    pub mu_plus: f64,
    pub best_policy_index: usize,
    /// `min` over suboptimal policies and states of `mu_plus - mu(s)`;
    /// `+inf` when the set has a single policy.
    pub gamma_min: f64,
    pub h_plus: f64,
    pub h_max: f64,
    pub solutions: Vec<ChainSolution>,
}

/// Evaluates every policy; the best policy is the unichain policy with the
/// largest gain (lowest index on ties).
pub fn gap_structure(mdp: &TabularMdp, policies: &[DeterministicPolicy]) -> Result<GapStructure, ChainError> {
    if policies.is_empty() {
        return Err(ChainError::EmptyPolicySet);
    }
    let solutions = policies
        .iter()
        .map(|policy| evaluate_policy(mdp, policy))
        .collect::<Result<Vec<_>, _>>()?;

    let mut best: Option<(usize, f64)> = None;
    for (idx, sol) in solutions.iter().enumerate() {
        if let Some(gain) = sol.gain() {
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((idx, gain));
            }
        }
    }
    let (best_policy_index, mu_plus) = best.ok_or(ChainError::NoUnichainPolicy)?;

    let mut gamma_min = f64::INFINITY;
    for (idx, sol) in solutions.iter().enumerate() {
        if idx == best_policy_index {
            continue;
        }
        for (state, &gain) in sol.mu.iter().enumerate() {
            if gain > mu_plus {
                return Err(ChainError::BestPolicyNotDominant { policy: idx, state, gain, mu_plus });
            }
            gamma_min = gamma_min.min(mu_plus - gain);
        }
    }
    let h_plus = solutions[best_policy_index].span;
    let h_max = solutions.iter().map(|s| s.span).fold(0.0, f64::max);
    Ok(GapStructure { mu_plus, best_policy_index, gamma_min, h_plus, h_max, solutions })
}
