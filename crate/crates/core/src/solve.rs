//! Dynamic programming on [`TabularMdp`]: value iteration, policy evaluation
//! and greedy policy extraction.
//!
//! All sweeps are synchronous (Jacobi): every state is updated from the
//! previous iterate, so results do not depend on state order.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::mdp::TabularMdp;
use crate::policy::StochasticPolicy;

/// Ties within this distance of the row maximum go to the lowest action.
pub const ARGMAX_TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 10_000,
        }
    }
}

impl SolverConfig {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Self {
            tolerance,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { residual: f64, iterations: usize },
    #[error("tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),
    #[error("policy puts mass on invalid action {action} at state {state}")]
    InvalidPolicy { state: usize, action: usize },
    #[error("policy has {got} rows for a model with {expected} states")]
    PolicyShape { expected: usize, got: usize },
}

/// Per-state values.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction(pub Vec<f64>);

impl ValueFunction {
    pub fn get(&self, s: usize) -> f64 {
        self.0[s]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Per-(state, action) values, defined only for valid pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct QFunction {
    offsets: Vec<usize>,
    actions: Vec<usize>,
    values: Vec<f64>,
}

impl QFunction {
    /// Builds a Q-function from explicit rows of `(action, value)` pairs.
    /// Actions within a row must be strictly increasing.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut offsets = vec![0];
        let mut actions = Vec::new();
        let mut values = Vec::new();
        for row in rows {
            debug_assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
            for (a, q) in row {
                actions.push(a);
                values.push(q);
            }
            offsets.push(actions.len());
        }
        Self {
            offsets,
            actions,
            values,
        }
    }

    fn with_layout(mdp: &TabularMdp, values: Vec<f64>) -> Self {
        let offsets = (0..=mdp.n_states())
            .map(|s| {
                if s == mdp.n_states() {
                    mdp.n_choices()
                } else {
                    mdp.choice_range(s).start
                }
            })
            .collect();
        let actions = (0..mdp.n_choices()).map(|c| mdp.choice_action(c)).collect();
        Self {
            offsets,
            actions,
            values,
        }
    }

    pub fn n_states(&self) -> usize {
        self.offsets.len() - 1
    }

    /// `(action, value)` pairs defined at `s`, ascending by action.
    pub fn row(&self, s: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[s]..self.offsets[s + 1];
        self.actions[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn row_values(&self, s: usize) -> &[f64] {
        &self.values[self.offsets[s]..self.offsets[s + 1]]
    }

    pub fn get(&self, s: usize, a: usize) -> Option<f64> {
        let range = self.offsets[s]..self.offsets[s + 1];
        self.actions[range.clone()]
            .binary_search(&a)
            .ok()
            .map(|i| self.values[range.start + i])
    }

    pub fn max(&self, s: usize) -> Option<f64> {
        self.row_values(s).iter().copied().reduce(f64::max)
    }
}

/// Output of [`value_iteration`].
#[derive(Debug, Clone)]
pub struct ValueIteration {
    pub value: ValueFunction,
    pub q: QFunction,
    /// Max-norm Bellman error of `value`, measured after the solve.
    pub residual: f64,
    pub iterations: usize,
}

fn backup_choice(mdp: &TabularMdp, c: usize, v: &[f64]) -> f64 {
    let gamma = mdp.gamma();
    mdp.choice_outcomes(c)
        .iter()
        .map(|&(n, p)| p * (mdp.reward(n) + gamma * v[n]))
        .sum()
}

fn optimal_backup(mdp: &TabularMdp, s: usize, v: &[f64]) -> f64 {
    if mdp.is_terminal(s) {
        return 0.0;
    }
    mdp.choice_range(s)
        .map(|c| backup_choice(mdp, c, v))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `max_s |(B v)(s) - v(s)|` for the Bellman optimality operator `B`.
pub fn bellman_residual(mdp: &TabularMdp, v: &ValueFunction) -> f64 {
    (0..mdp.n_states())
        .map(|s| (optimal_backup(mdp, s, &v.0) - v.0[s]).abs())
        .fold(0.0, f64::max)
}

fn check_tolerance(tolerance: f64) -> Result<(), SolveError> {
    if tolerance > 0.0 && tolerance.is_finite() {
        Ok(())
    } else {
        Err(SolveError::InvalidTolerance(tolerance))
    }
}

/// Bellman-optimal values under entry rewards:
/// `Q(s,a) = sum_s' T(s,a,s') (R(s') + gamma V(s'))`, `V(terminal) = 0`.
///
/// Iterates until successive sweeps differ by at most `tolerance`, then
/// reports `V = max_a Q` so that greedy extraction and values agree exactly.
pub fn value_iteration(mdp: &TabularMdp, config: SolverConfig) -> Result<ValueIteration, SolveError> {
    check_tolerance(config.tolerance)?;
    let n = mdp.n_states();
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut delta = f64::INFINITY;
    for iteration in 1..=config.max_iterations {
        delta = 0.0;
        for s in 0..n {
            next[s] = optimal_backup(mdp, s, &v);
            delta = f64::max(delta, (next[s] - v[s]).abs());
        }
        core::mem::swap(&mut v, &mut next);
        if delta <= config.tolerance {
            let q_values: Vec<f64> = (0..mdp.n_choices())
                .map(|c| backup_choice(mdp, c, &v))
                .collect();
            let q = QFunction::with_layout(mdp, q_values);
            let value =
                ValueFunction((0..n).map(|s| q.max(s).unwrap_or(0.0)).collect());
            let residual = bellman_residual(mdp, &value);
            return Ok(ValueIteration {
                value,
                q,
                residual,
                iterations: iteration,
            });
        }
    }
    Err(SolveError::NonConvergence {
        residual: delta,
        iterations: config.max_iterations,
    })
}

/// Deterministic greedy policy: for every state with defined Q-values, the
/// lowest-indexed action within [`ARGMAX_TIE_TOLERANCE`] of the row maximum.
pub fn extract_greedy_policy(q: &QFunction) -> Vec<Option<usize>> {
    (0..q.n_states())
        .map(|s| {
            let best = q.max(s)?;
            q.row(s)
                .find(|&(_, value)| value >= best - ARGMAX_TIE_TOLERANCE)
                .map(|(a, _)| a)
        })
        .collect()
}

fn check_policy(mdp: &TabularMdp, policy: &StochasticPolicy) -> Result<(), SolveError> {
    if policy.n_states() != mdp.n_states() {
        return Err(SolveError::PolicyShape {
            expected: mdp.n_states(),
            got: policy.n_states(),
        });
    }
    for s in 0..mdp.n_states() {
        for &(a, p) in policy.row(s) {
            if p > 0.0 && (mdp.is_terminal(s) || !mdp.is_valid(s, a)) {
                return Err(SolveError::InvalidPolicy { state: s, action: a });
            }
        }
    }
    Ok(())
}

/// Fixed point of `V(s) = sum_a pi(a|s) sum_s' T(s,a,s') (R(s') + gamma V(s'))`.
pub fn policy_evaluation(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    config: SolverConfig,
) -> Result<ValueFunction, SolveError> {
    check_tolerance(config.tolerance)?;
    check_policy(mdp, policy)?;
    // Pre-resolve choice indices so sweeps avoid the binary searches.
    let rows: Vec<Vec<(usize, f64)>> = (0..mdp.n_states())
        .map(|s| {
            policy
                .row(s)
                .iter()
                .filter(|(_, p)| *p > 0.0)
                .filter_map(|&(a, p)| mdp.choice_index(s, a).map(|c| (c, p)))
                .collect()
        })
        .collect();
    let n = mdp.n_states();
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut delta = f64::INFINITY;
    for _ in 0..config.max_iterations {
        delta = 0.0;
        for s in 0..n {
            next[s] = if mdp.is_terminal(s) {
                0.0
            } else {
                rows[s]
                    .iter()
                    .map(|&(c, p)| p * backup_choice(mdp, c, &v))
                    .sum()
            };
            delta = f64::max(delta, (next[s] - v[s]).abs());
        }
        core::mem::swap(&mut v, &mut next);
        if delta <= config.tolerance {
            return Ok(ValueFunction(v));
        }
    }
    Err(SolveError::NonConvergence {
        residual: delta,
        iterations: config.max_iterations,
    })
}
