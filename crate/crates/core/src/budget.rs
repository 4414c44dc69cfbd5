//! Belief-safe intervention budget.
//!
//! The attacker entertains two hypotheses with equal prior: its own model
//! `M^A`, and a high-entropy model `M0` in which every transition goes to any
//! of the `|S|` states with probability `1/|S|`. The budget `K` is the length
//! of the shortest trajectory from the start that is possible under `M^A` yet
//! strictly more likely under `M0`; no shorter realized prefix can tip the
//! attacker's posterior towards `M0`.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::attacker::AttackerModel;
use crate::mdp::{TabularMdp, Trajectory, MIN_PROBABILITY};
use crate::solve::SolverConfig;

/// Default search cap on the budget.
pub const DEFAULT_BUDGET_CAP: usize = 15;

/// Relative slack applied to the strict comparison in log space, so that
/// rounding in a sum of equal logarithms is not mistaken for a tip.
const TIP_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BudgetError {
    #[error("brute-force oracle limited to |S| <= {max_states} and length <= {max_len}")]
    TooLarge { max_states: usize, max_len: usize },
    #[error("at least one trap is required")]
    NoTraps,
    #[error("state {state} is reachable but cannot reach any trap")]
    NoTrapReachable { state: usize },
    #[error("trap index {index} out of range (|S| = {n_states})")]
    InvalidTrap { index: usize, n_states: usize },
    #[error("step-count planning did not converge (residual {residual:e})")]
    NonConvergence { residual: f64 },
}

/// The high-entropy hypothesis `M0`; only `|S|` matters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HighEntropyModel {
    pub state_count: usize,
}

impl HighEntropyModel {
    pub fn new(state_count: usize) -> Self {
        assert!(state_count >= 1, "high-entropy model needs at least one state");
        Self { state_count }
    }

    /// `log P(tau | M0)` for a trajectory of `len` transitions.
    pub fn log_probability(&self, len: usize) -> f64 {
        -(len as f64) * libm::log(self.state_count as f64)
    }

    /// True when a trajectory with `log P(tau | M^A) = log_p` and `len`
    /// transitions is strictly better explained by `M0`.
    pub fn tips(&self, log_p: f64, len: usize) -> bool {
        let threshold = self.log_probability(len);
        log_p.is_finite() && log_p < threshold - TIP_SLACK * f64::max(1.0, threshold.abs())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BudgetResult {
    pub k: usize,
    /// The search reached the cap without finding a tipping trajectory.
    pub capped: bool,
    pub witness: Option<Trajectory>,
}

impl BudgetResult {
    /// Number of defender steps actually granted: interventions must stay
    /// strictly shorter than the witness, so `min(k - 1, cap)` when a witness
    /// exists and the cap otherwise.
    pub fn usable_budget(&self, cap: usize) -> usize {
        if self.capped {
            self.k.min(cap)
        } else {
            (self.k - 1).min(cap)
        }
    }
}

/// Breadth-by-depth search for the budget.
///
/// Layer `d` keeps, per state, the minimum log-probability over all
/// length-`d` trajectories from the start that reach it with positive
/// probability. Only that minimum matters: some length-`d` trajectory tips
/// iff the least likely one does, and log-probabilities add along a path, so
/// the per-state minimum of layer `d + 1` is determined by the per-state
/// minima of layer `d`. Ties keep the first path found in ascending
/// `(state, action, successor)` order; the witness ends at the lowest-indexed
/// minimizing state.
pub fn compute_budget(mdp: &TabularMdp, cap: usize) -> BudgetResult {
    let cap = cap.max(1);
    let n = mdp.n_states();
    let m0 = HighEntropyModel::new(n);
    let mut current = vec![f64::INFINITY; n];
    current[mdp.initial_state()] = 0.0;
    // parents[d][s] = (previous state, action) for the minimizing path.
    let mut parents: Vec<Vec<(usize, usize)>> = Vec::with_capacity(cap);

    for depth in 1..=cap {
        let mut next = vec![f64::INFINITY; n];
        let mut parent = vec![(usize::MAX, usize::MAX); n];
        for s in 0..n {
            if !current[s].is_finite() || mdp.is_terminal(s) {
                continue;
            }
            for c in mdp.choice_range(s) {
                let a = mdp.choice_action(c);
                for &(succ, p) in mdp.choice_outcomes(c) {
                    let candidate = current[s] + libm::log(p);
                    if candidate < next[succ] {
                        next[succ] = candidate;
                        parent[succ] = (s, a);
                    }
                }
            }
        }
        parents.push(parent);

        let mut best: Option<usize> = None;
        for s in 0..n {
            if next[s].is_finite() && best.is_none_or(|b| next[s] < next[b]) {
                best = Some(s);
            }
        }
        let Some(best) = best else {
            // Every path has hit a terminal state; nothing longer exists.
            break;
        };
        if m0.tips(next[best], depth) {
            return BudgetResult {
                k: depth,
                capped: false,
                witness: Some(reconstruct(&parents, best)),
            };
        }
        current = next;
    }
    BudgetResult {
        k: cap,
        capped: true,
        witness: None,
    }
}

fn reconstruct(parents: &[Vec<(usize, usize)>], end: usize) -> Trajectory {
    let mut states = vec![end];
    let mut actions = Vec::with_capacity(parents.len());
    let mut s = end;
    for layer in parents.iter().rev() {
        let (prev, a) = layer[s];
        actions.push(a);
        states.push(prev);
        s = prev;
    }
    states.reverse();
    actions.reverse();
    Trajectory::from_parts(states, actions).expect("one more state than actions")
}

/// Size limits of [`brute_force_budget_oracle`].
pub const ORACLE_MAX_STATES: usize = 6;
pub const ORACLE_MAX_LEN: usize = 6;

/// Applies the budget definition literally: enumerates every trajectory from
/// the start with up to `max_len` transitions, and returns the shortest one
/// that is possible under `mdp` and strictly more likely under `M0`. Meant
/// as a test oracle for [`compute_budget`]; refuses anything large.
pub fn brute_force_budget_oracle(mdp: &TabularMdp, max_len: usize) -> Result<BudgetResult, BudgetError> {
    if mdp.n_states() > ORACLE_MAX_STATES || max_len > ORACLE_MAX_LEN {
        return Err(BudgetError::TooLarge {
            max_states: ORACLE_MAX_STATES,
            max_len: ORACLE_MAX_LEN,
        });
    }
    let max_len = max_len.max(1);
    let m0 = HighEntropyModel::new(mdp.n_states());
    let mut shortest: Option<Trajectory> = None;
    let mut tau = Trajectory::new(mdp.initial_state());
    enumerate(mdp, &m0, max_len, &mut tau, 0.0, &mut shortest);
    Ok(match shortest {
        Some(w) => BudgetResult {
            k: w.len(),
            capped: false,
            witness: Some(w),
        },
        None => BudgetResult {
            k: max_len,
            capped: true,
            witness: None,
        },
    })
}

fn enumerate(
    mdp: &TabularMdp,
    m0: &HighEntropyModel,
    max_len: usize,
    tau: &mut Trajectory,
    log_p: f64,
    shortest: &mut Option<Trajectory>,
) {
    if !tau.is_empty() && m0.tips(log_p, tau.len()) {
        if shortest.as_ref().is_none_or(|w| tau.len() < w.len()) {
            *shortest = Some(tau.clone());
        }
        return;
    }
    if tau.len() == max_len {
        return;
    }
    let s = tau.last_state();
    if mdp.is_terminal(s) {
        return;
    }
    for c in mdp.choice_range(s) {
        let a = mdp.choice_action(c);
        for &(succ, p) in mdp.choice_outcomes(c) {
            let mut longer = tau.clone();
            longer.push(a, succ);
            enumerate(mdp, m0, max_len, &mut longer, log_p + libm::log(p), shortest);
        }
    }
}

/// Expected (discounted) number of steps the defender needs to trap the
/// attacker when its interventions are unlimited.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanningCap {
    pub expected_steps: f64,
    pub discount: f64,
}

/// Solves the defender problem without a budget, with every step costing one
/// unit until a trap absorbs the attacker. With `undiscounted` the discount is
/// set to 1, which is only well-posed when every state reachable from the
/// start can still reach a trap; otherwise the attacker's discount is used and
/// paths that never reach a trap cost `1 / (1 - gamma)`.
pub fn budget_cap_from_planning(
    attacker: &AttackerModel,
    traps: &[usize],
    undiscounted: bool,
    config: SolverConfig,
) -> Result<PlanningCap, BudgetError> {
    let m = attacker.mdp();
    let n = m.n_states();
    if traps.is_empty() {
        return Err(BudgetError::NoTraps);
    }
    let mut trap = vec![false; n];
    for &t in traps {
        if t >= n {
            return Err(BudgetError::InvalidTrap { index: t, n_states: n });
        }
        trap[t] = true;
    }
    if undiscounted {
        check_trap_reachability(m, &trap)?;
    }
    let gamma = if undiscounted { 1.0 } else { m.gamma() };
    let s0 = m.initial_state();
    if trap[s0] {
        return Ok(PlanningCap {
            expected_steps: 0.0,
            discount: gamma,
        });
    }

    // Nodes: one per (s, a) for live states, one per trap, one per terminal.
    let arrival = |s: usize| -> Vec<(usize, f64)> {
        if trap[s] || m.is_terminal(s) {
            vec![(usize::MAX, 1.0)]
        } else {
            attacker
                .behavior()
                .row(s)
                .iter()
                .copied()
                .filter(|&(_, p)| p >= MIN_PROBABILITY)
                .collect()
        }
    };
    let n_actions = m.n_actions();
    let node = |s: usize, a: usize| -> usize {
        if a == usize::MAX {
            n * n_actions + s
        } else {
            s * n_actions + a
        }
    };
    let total = n * n_actions + n;
    // Each node: list of choices, each choice a list of (node, prob).
    let mut choices: Vec<Vec<Vec<(usize, f64)>>> = vec![Vec::new(); total];
    let mut absorbing = vec![false; total];
    for s in 0..n {
        if trap[s] {
            absorbing[node(s, usize::MAX)] = true;
            continue;
        }
        if m.is_terminal(s) {
            let g = node(s, usize::MAX);
            choices[g].push(vec![(g, 1.0)]);
            continue;
        }
        for c in m.choice_range(s) {
            let a = m.choice_action(c);
            let outcomes = m.choice_outcomes(c);
            let expand = |target: usize, weight: f64, row: &mut Vec<(usize, f64)>| {
                for (a2, q) in arrival(target) {
                    row.push((node(target, a2), weight * q));
                }
            };
            let mut noop = Vec::new();
            for &(succ, p) in outcomes {
                expand(succ, p, &mut noop);
            }
            let x = node(s, a);
            choices[x].push(noop);
            for &(succ, _) in outcomes {
                let mut forced = Vec::new();
                expand(succ, 1.0, &mut forced);
                choices[x].push(forced);
            }
        }
    }

    let mut v = vec![0.0; total];
    let mut next = vec![0.0; total];
    let mut delta = f64::INFINITY;
    for _ in 0..config.max_iterations {
        delta = 0.0;
        for x in 0..total {
            if absorbing[x] || choices[x].is_empty() {
                next[x] = 0.0;
                continue;
            }
            next[x] = choices[x]
                .iter()
                .map(|row| row.iter().map(|&(y, p)| p * (1.0 + gamma * v[y])).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            delta = f64::max(delta, (next[x] - v[x]).abs());
        }
        core::mem::swap(&mut v, &mut next);
        if delta <= config.tolerance {
            let expected_steps = if m.is_terminal(s0) {
                v[node(s0, usize::MAX)]
            } else {
                arrival(s0).iter().map(|&(a, p)| p * v[node(s0, a)]).sum()
            };
            return Ok(PlanningCap {
                expected_steps,
                discount: gamma,
            });
        }
    }
    Err(BudgetError::NonConvergence { residual: delta })
}

fn check_trap_reachability(m: &TabularMdp, trap: &[bool]) -> Result<(), BudgetError> {
    let n = m.n_states();
    // Backward closure from the traps.
    let mut predecessors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (s, _, succ, _) in m.transitions() {
        predecessors[succ].push(s);
    }
    let mut reaches = trap.to_vec();
    let mut stack: Vec<usize> = (0..n).filter(|&s| trap[s]).collect();
    while let Some(s) = stack.pop() {
        for &p in &predecessors[s] {
            if !reaches[p] && !trap[p] {
                reaches[p] = true;
                stack.push(p);
            }
        }
    }
    // Forward closure from the start, stopping at traps.
    let mut seen = vec![false; n];
    let mut stack = vec![m.initial_state()];
    seen[m.initial_state()] = true;
    while let Some(s) = stack.pop() {
        if !reaches[s] {
            return Err(BudgetError::NoTrapReachable { state: s });
        }
        if trap[s] {
            continue;
        }
        for (_, _, succ, _) in m.transitions().filter(|t| t.0 == s) {
            if !seen[succ] {
                seen[succ] = true;
                stack.push(succ);
            }
        }
    }
    Ok(())
}
