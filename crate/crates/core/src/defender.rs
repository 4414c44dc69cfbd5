//! The covert defender's MDP over `(attacker state, attacker action, budget)`.
//!
//! From an active triple `(s, a, k)` the defender either lets the environment
//! resolve the attacker's action (`noop`) or forces one successor `ŝ` from the
//! support of `T^A(s, a, ·)`. Either way the budget drops by one and the next
//! attacker action is drawn from the attacker's behavior policy at the new
//! state, so every row is a proper distribution:
//!
//! ```text
//! noop:        (s,a,k) -> (s',a',k-1)  w.p. T^A(s,a,s') * P^A(a'|s')
//! select(ŝ):   (s,a,k) -> (ŝ,a',k-1)   w.p. P^A(a'|ŝ)
//! ```
//!
//! Triples whose state is a trap, whose budget is zero, or whose state is
//! terminal for the attacker are absorbing. Values are negated attacker
//! returns. A trap is worth `0`; an exhausted triple `(s,a,0)` is worth
//! `-Q^A*(s,a)`, the most the attacker can still collect once the defender
//! stops acting.
//!
//! The compiled model is a [`TabularMdp`] with entry rewards. Entering a
//! non-trap triple pays `-R^A(s')`; entering an exhausted triple additionally
//! pays `-gamma Q^A*(s',a')`, its boundary value discounted one step, so that
//! generic value iteration (which fixes absorbing values at zero) computes the
//! same quantity as the layered recursion above.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::attacker::AttackerModel;
use crate::domains::DomainInstance;
use crate::fingerprint::Fingerprint;
use crate::mdp::{MdpBuilder, ModelError, TabularMdp, MIN_PROBABILITY};
use crate::policy::StochasticPolicy;
use crate::sim::{estimate_return, SimError};
use crate::solve::{extract_greedy_policy, policy_evaluation, value_iteration, SolveError, SolverConfig};

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DefenderError {
    #[error("trap index {index} out of range (|S| = {n_states})")]
    InvalidTrap { index: usize, n_states: usize },
    #[error("defender budget must be at least 1")]
    InvalidBudget,
    #[error("defender model would have {states} states, above the limit of {limit}")]
    StateSpaceTooLarge { states: usize, limit: usize },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("value iteration and layered induction disagree by {gap:e}")]
    InductionMismatch { gap: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DefenderState {
    pub attacker_state: usize,
    pub attacker_action: usize,
    pub budget: usize,
}

impl DefenderState {
    pub fn new(attacker_state: usize, attacker_action: usize, budget: usize) -> Self {
        Self {
            attacker_state,
            attacker_action,
            budget,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DefenderAction {
    Noop,
    SelectOutcome(usize),
}

impl DefenderAction {
    /// Action index in the compiled model: `0` is noop, `1 + ŝ` selects `ŝ`.
    pub fn index(self) -> usize {
        match self {
            DefenderAction::Noop => 0,
            DefenderAction::SelectOutcome(s) => s + 1,
        }
    }

    pub fn from_index(index: usize) -> Self {
        match index {
            0 => DefenderAction::Noop,
            i => DefenderAction::SelectOutcome(i - 1),
        }
    }
}

/// Role of a defender triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    /// Budget left, attacker free to act: the defender decides here.
    Active,
    /// Attacker state is a trap.
    Trap,
    /// Budget exhausted outside a trap.
    Exhausted,
    /// Attacker state is terminal in the believed model (e.g. the goal).
    Finished,
    /// `(s, a)` is not a valid pair; only present in unpruned compilations.
    Invalid,
}

impl NodeKind {
    pub fn is_absorbing(self) -> bool {
        !matches!(self, NodeKind::Active)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompileOptions {
    /// Keep only triples reachable from the initial distribution.
    pub prune_unreachable: bool,
    /// Refuse to compile above this many defender states.
    pub state_limit: Option<usize>,
}

impl Default for CompileOptions {
    fn default() -> Self {
        Self {
            prune_unreachable: true,
            state_limit: None,
        }
    }
}

/// Dense `(s, a, k)` indexing shared by the compiled model and its solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TripleSpace {
    pub n_states: usize,
    pub n_actions: usize,
    pub budget: usize,
}

impl TripleSpace {
    pub fn len(&self) -> usize {
        self.n_states * self.n_actions * (self.budget + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dense(&self, x: DefenderState) -> Option<usize> {
        (x.attacker_state < self.n_states && x.attacker_action < self.n_actions && x.budget <= self.budget)
            .then(|| (x.budget * self.n_states + x.attacker_state) * self.n_actions + x.attacker_action)
    }

    pub fn triple(&self, dense: usize) -> DefenderState {
        let a = dense % self.n_actions;
        let rest = dense / self.n_actions;
        DefenderState::new(rest % self.n_states, a, rest / self.n_states)
    }
}

#[derive(Debug, Clone)]
pub struct DefenderMdp {
    mdp: TabularMdp,
    space: TripleSpace,
    states: Vec<DefenderState>,
    kinds: Vec<NodeKind>,
    boundary: Vec<f64>,
    index: Vec<u32>,
    initial: Vec<(usize, f64)>,
    traps: Vec<usize>,
    fingerprint: Fingerprint,
    pruned: bool,
}

fn classify(attacker: &AttackerModel, trap_mask: &[bool], x: DefenderState) -> NodeKind {
    let m = attacker.mdp();
    let s = x.attacker_state;
    if trap_mask[s] {
        NodeKind::Trap
    } else if m.is_terminal(s) {
        if x.attacker_action == 0 {
            NodeKind::Finished
        } else {
            NodeKind::Invalid
        }
    } else if !m.is_valid(s, x.attacker_action) {
        NodeKind::Invalid
    } else if x.budget == 0 {
        NodeKind::Exhausted
    } else {
        NodeKind::Active
    }
}

/// Attacker-action distribution on arrival at `s`. Terminal states get a
/// single placeholder action `0`. Entries below [`MIN_PROBABILITY`] are
/// dropped and the remainder renormalized.
fn arrival_actions(attacker: &AttackerModel, s: usize) -> Vec<(usize, f64)> {
    if attacker.mdp().is_terminal(s) {
        return vec![(0, 1.0)];
    }
    let row = attacker.behavior().row(s);
    let kept: Vec<(usize, f64)> = row.iter().copied().filter(|&(_, p)| p >= MIN_PROBABILITY).collect();
    let total: f64 = kept.iter().map(|(_, p)| p).sum();
    kept.into_iter().map(|(a, p)| (a, p / total)).collect()
}

/// Successor triples of `(s, a, k)` under one defender action, as
/// `(triple, probability)` with tiny entries dropped and the row renormalized.
fn successors(attacker: &AttackerModel, x: DefenderState, action: DefenderAction) -> Vec<(DefenderState, f64)> {
    let m = attacker.mdp();
    let k = x.budget - 1;
    let outcomes: Vec<(usize, f64)> = match action {
        DefenderAction::Noop => m
            .outcomes(x.attacker_state, x.attacker_action)
            .map(<[_]>::to_vec)
            .unwrap_or_default(),
        DefenderAction::SelectOutcome(target) => vec![(target, 1.0)],
    };
    let mut row = Vec::new();
    for (next, p) in outcomes {
        for (a, q) in arrival_actions(attacker, next) {
            row.push((DefenderState::new(next, a, k), p * q));
        }
    }
    let before: f64 = row.iter().map(|(_, p)| p).sum();
    row.retain(|&(_, p)| p >= MIN_PROBABILITY);
    let after: f64 = row.iter().map(|(_, p)| p).sum();
    if after != before {
        for entry in &mut row {
            entry.1 /= after;
        }
    }
    row
}

/// Defender actions available at an active triple: noop, then one
/// outcome selection per successor in the attacker's believed support.
fn defender_actions(attacker: &AttackerModel, x: DefenderState) -> Vec<DefenderAction> {
    let mut out = vec![DefenderAction::Noop];
    if let Some(row) = attacker.mdp().outcomes(x.attacker_state, x.attacker_action) {
        out.extend(row.iter().map(|&(n, _)| DefenderAction::SelectOutcome(n)));
    }
    out
}

/// Initial distribution over `(s0, a, K)` with `a ~ P^A(·|s0)`.
fn initial_triples(attacker: &AttackerModel, budget: usize) -> Vec<(DefenderState, f64)> {
    let s0 = attacker.mdp().initial_state();
    arrival_actions(attacker, s0)
        .into_iter()
        .map(|(a, p)| (DefenderState::new(s0, a, budget), p))
        .collect()
}

/// Compiles `D_(traps, budget)` from a built attacker.
pub fn compile_defender_mdp(
    attacker: &AttackerModel,
    traps: &[usize],
    budget: usize,
    options: CompileOptions,
) -> Result<DefenderMdp, DefenderError> {
    let m = attacker.mdp();
    let n_states = m.n_states();
    if budget == 0 {
        return Err(DefenderError::InvalidBudget);
    }
    let mut trap_mask = vec![false; n_states];
    for &t in traps {
        if t >= n_states {
            return Err(DefenderError::InvalidTrap { index: t, n_states });
        }
        trap_mask[t] = true;
    }
    let space = TripleSpace {
        n_states,
        n_actions: m.n_actions(),
        budget,
    };
    let initial = initial_triples(attacker, budget);

    // Enumerate compiled states: either everything, or breadth-first from the
    // initial distribution.
    let mut index = vec![NONE; space.len()];
    let mut states: Vec<DefenderState> = Vec::new();
    if options.prune_unreachable {
        let mut head = 0;
        for &(x, _) in &initial {
            let d = space.dense(x).expect("initial triple in range");
            if index[d] == NONE {
                index[d] = states.len() as u32;
                states.push(x);
            }
        }
        while head < states.len() {
            let x = states[head];
            head += 1;
            if classify(attacker, &trap_mask, x) != NodeKind::Active {
                continue;
            }
            // Selections can keep triples that the noop row drops as negligible.
            for action in defender_actions(attacker, x) {
                for (y, _) in successors(attacker, x, action) {
                    let d = space.dense(y).expect("successor in range");
                    if index[d] == NONE {
                        index[d] = states.len() as u32;
                        states.push(y);
                        if let Some(limit) = options.state_limit {
                            if states.len() > limit {
                                return Err(DefenderError::StateSpaceTooLarge {
                                    states: states.len(),
                                    limit,
                                });
                            }
                        }
                    }
                }
            }
        }
    } else {
        if let Some(limit) = options.state_limit {
            if space.len() > limit {
                return Err(DefenderError::StateSpaceTooLarge {
                    states: space.len(),
                    limit,
                });
            }
        }
        for d in 0..space.len() {
            index[d] = d as u32;
            states.push(space.triple(d));
        }
    }

    let kinds: Vec<NodeKind> = states.iter().map(|&x| classify(attacker, &trap_mask, x)).collect();
    let gamma = m.gamma();
    let boundary: Vec<f64> = states
        .iter()
        .zip(&kinds)
        .map(|(x, kind)| match kind {
            NodeKind::Exhausted => -attacker
                .q_star()
                .get(x.attacker_state, x.attacker_action)
                .expect("exhausted triples are valid pairs"),
            _ => 0.0,
        })
        .collect();

    let state_labels: Vec<String> = states
        .iter()
        .map(|x| format!("({},{},{})", x.attacker_state, x.attacker_action, x.budget))
        .collect();
    let mut action_labels = vec![String::from("noop")];
    action_labels.extend(m.state_labels().iter().map(|l| format!("select:{l}")));

    let mut b = MdpBuilder::new(state_labels, action_labels);
    b.allow_negative_rewards().gamma(gamma);
    if let Some(&(x, _)) = initial.first() {
        b.initial(index[space.dense(x).unwrap()] as usize);
    }
    for (i, (&x, &kind)) in states.iter().zip(&kinds).enumerate() {
        let entry = match kind {
            NodeKind::Trap | NodeKind::Invalid => 0.0,
            NodeKind::Finished | NodeKind::Active => -m.reward(x.attacker_state),
            NodeKind::Exhausted => -m.reward(x.attacker_state) + gamma * boundary[i],
        };
        b.set_reward(i, entry);
        if kind.is_absorbing() {
            b.set_terminal(i, true);
            continue;
        }
        for action in defender_actions(attacker, x) {
            for (y, p) in successors(attacker, x, action) {
                let d = space.dense(y).expect("successor in range");
                b.add_transition(i, action.index(), index[d] as usize, p);
            }
        }
    }
    let mdp = b.build()?;
    let initial = initial
        .into_iter()
        .map(|(x, p)| (index[space.dense(x).unwrap()] as usize, p))
        .collect();

    let mut traps: Vec<usize> = traps.to_vec();
    traps.sort_unstable();
    traps.dedup();
    Ok(DefenderMdp {
        mdp,
        space,
        states,
        kinds,
        boundary,
        index,
        initial,
        fingerprint: Fingerprint::of(m, &traps),
        traps,
        pruned: options.prune_unreachable,
    })
}

impl DefenderMdp {
    /// The compiled model over defender states (indices are compiled ids).
    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn space(&self) -> TripleSpace {
        self.space
    }

    pub fn budget(&self) -> usize {
        self.space.budget
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[DefenderState] {
        &self.states
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn kind(&self, id: usize) -> NodeKind {
        self.kinds[id]
    }

    /// Value fixed by construction for absorbing states (zero elsewhere).
    pub fn boundary_value(&self, id: usize) -> f64 {
        self.boundary[id]
    }

    pub fn id(&self, x: DefenderState) -> Option<usize> {
        self.space
            .dense(x)
            .map(|d| self.index[d])
            .filter(|&i| i != NONE)
            .map(|i| i as usize)
    }

    /// `(compiled id, probability)` pairs of the initial distribution.
    pub fn initial_distribution(&self) -> &[(usize, f64)] {
        &self.initial
    }

    pub fn traps(&self) -> &[usize] {
        &self.traps
    }

    /// True when compiled without traps: the defender can only suppress value.
    pub fn value_suppression_only(&self) -> bool {
        self.traps.is_empty()
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn is_pruned(&self) -> bool {
        self.pruned
    }

    /// Policy that always plays noop at active states.
    pub fn noop_policy(&self) -> StochasticPolicy {
        let actions: Vec<Option<usize>> = self
            .kinds
            .iter()
            .map(|k| (!k.is_absorbing()).then_some(DefenderAction::Noop.index()))
            .collect();
        StochasticPolicy::from_deterministic(&actions)
    }

    /// Full values of a compiled-model value vector: absorbing states take
    /// their boundary values.
    pub fn with_boundary(&self, compiled_values: &[f64]) -> Vec<f64> {
        compiled_values
            .iter()
            .zip(&self.kinds)
            .zip(&self.boundary)
            .map(|((&v, kind), &b)| if kind.is_absorbing() { b } else { v })
            .collect()
    }

    /// Exact values by one pass over budget layers `k = 1..=K`, each layer
    /// reading only the finished layer below it.
    pub fn backward_induction(&self) -> Vec<f64> {
        let mut order: Vec<usize> = (0..self.states.len()).collect();
        order.sort_by_key(|&i| self.states[i].budget);
        let mut v = vec![0.0; self.states.len()];
        let gamma = self.mdp.gamma();
        for i in order {
            if self.kinds[i].is_absorbing() {
                continue;
            }
            v[i] = self
                .mdp
                .choice_range(i)
                .map(|c| {
                    self.mdp
                        .choice_outcomes(c)
                        .iter()
                        .map(|&(n, p)| p * (self.mdp.reward(n) + gamma * v[n]))
                        .sum::<f64>()
                })
                .fold(f64::NEG_INFINITY, f64::max);
        }
        self.with_boundary(&v)
    }
}

/// One row of a solved defender policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyEntry {
    pub state: DefenderState,
    pub kind: NodeKind,
    pub action: Option<DefenderAction>,
    pub value: f64,
}

/// Solved defender: per-triple values and chosen actions. Self-contained, so
/// it can be written to disk and replayed without the compiled model.
#[derive(Debug, Clone, PartialEq)]
pub struct DefenderSolution {
    space: TripleSpace,
    gamma: f64,
    fingerprint: Fingerprint,
    traps: Vec<usize>,
    entries: Vec<PolicyEntry>,
    lookup: Vec<u32>,
    initial: Vec<(DefenderState, f64)>,
    initial_value: f64,
}

impl DefenderSolution {
    /// Reassembles a solution from its parts, e.g. after loading from disk.
    pub fn from_parts(
        space: TripleSpace,
        gamma: f64,
        fingerprint: Fingerprint,
        traps: Vec<usize>,
        entries: Vec<PolicyEntry>,
        initial: Vec<(DefenderState, f64)>,
    ) -> Option<Self> {
        let mut lookup = vec![NONE; space.len()];
        for (i, e) in entries.iter().enumerate() {
            let d = space.dense(e.state)?;
            lookup[d] = i as u32;
        }
        let mut solution = Self {
            space,
            gamma,
            fingerprint,
            traps,
            entries,
            lookup,
            initial,
            initial_value: 0.0,
        };
        solution.initial_value = solution
            .initial
            .iter()
            .map(|&(x, p)| p * solution.value(x).unwrap_or(0.0))
            .sum();
        Some(solution)
    }

    pub fn space(&self) -> TripleSpace {
        self.space
    }

    pub fn budget(&self) -> usize {
        self.space.budget
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn traps(&self) -> &[usize] {
        &self.traps
    }

    pub fn entries(&self) -> &[PolicyEntry] {
        &self.entries
    }

    pub fn initial(&self) -> &[(DefenderState, f64)] {
        &self.initial
    }

    /// `sum_a P^A(a|s0) V^D*((s0, a, K))` as stored at solve time.
    pub fn initial_value(&self) -> f64 {
        self.initial_value
    }

    pub fn entry(&self, x: DefenderState) -> Option<&PolicyEntry> {
        let d = self.space.dense(x)?;
        match self.lookup[d] {
            NONE => None,
            i => Some(&self.entries[i as usize]),
        }
    }

    pub fn value(&self, x: DefenderState) -> Option<f64> {
        self.entry(x).map(|e| e.value)
    }

    pub fn action(&self, x: DefenderState) -> Option<DefenderAction> {
        self.entry(x).and_then(|e| e.action)
    }
}

/// Solves the compiled model by value iteration and cross-checks the result
/// against [`DefenderMdp::backward_induction`] (agreement within
/// `10 * tolerance` on every state).
pub fn solve_defender(dmdp: &DefenderMdp, config: SolverConfig) -> Result<DefenderSolution, DefenderError> {
    let vi = value_iteration(&dmdp.mdp, config)?;
    let values = dmdp.with_boundary(vi.value.as_slice());
    let induction = dmdp.backward_induction();
    let gap = values
        .iter()
        .zip(&induction)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if gap > 10.0 * config.tolerance {
        return Err(DefenderError::InductionMismatch { gap });
    }
    let greedy = extract_greedy_policy(&vi.q);
    let entries: Vec<PolicyEntry> = (0..dmdp.n_states())
        .map(|i| PolicyEntry {
            state: dmdp.states[i],
            kind: dmdp.kinds[i],
            action: if dmdp.kinds[i].is_absorbing() {
                None
            } else {
                greedy[i].map(DefenderAction::from_index)
            },
            value: values[i],
        })
        .collect();
    let initial = dmdp
        .initial
        .iter()
        .map(|&(id, p)| (dmdp.states[id], p))
        .collect();
    Ok(DefenderSolution::from_parts(
        dmdp.space,
        dmdp.mdp.gamma(),
        dmdp.fingerprint,
        dmdp.traps.clone(),
        entries,
        initial,
    )
    .expect("compiled triples are in range"))
}

/// Defender value of the episode start: the expectation of
/// `V^D*((s0, a, K))` over the attacker's first action. Zero when the
/// attacker starts in a trap or a terminal state.
pub fn defender_initial_value(solution: &DefenderSolution, attacker: &AttackerModel) -> f64 {
    let m = attacker.mdp();
    let s0 = m.initial_state();
    if m.is_terminal(s0) || solution.traps.binary_search(&s0).is_ok() {
        return 0.0;
    }
    let k = solution.budget();
    attacker
        .behavior()
        .row(s0)
        .iter()
        .map(|&(a, p)| p * solution.value(DefenderState::new(s0, a, k)).unwrap_or(0.0))
        .sum()
}

/// Value of the all-noop defender on the same compiled model, with absorbing
/// states at their boundary values.
pub fn noop_values(dmdp: &DefenderMdp, config: SolverConfig) -> Result<Vec<f64>, DefenderError> {
    let v = policy_evaluation(&dmdp.mdp, &dmdp.noop_policy(), config)?;
    Ok(dmdp.with_boundary(v.as_slice()))
}

/// Checks of the values fixed by construction.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IdentityReport {
    /// Exhausted triples compared against `-Q^A*`.
    pub exhausted_checked: usize,
    pub max_exhausted_gap: f64,
    /// Trap triples; all must be exactly zero.
    pub trap_checked: usize,
    pub trap_nonzero: usize,
    /// Largest value anywhere (must be <= 0).
    pub max_value: f64,
}

impl IdentityReport {
    pub fn holds(&self, tolerance: f64) -> bool {
        self.max_exhausted_gap <= tolerance && self.trap_nonzero == 0 && self.max_value <= tolerance
    }
}

pub fn check_identities(solution: &DefenderSolution, attacker: &AttackerModel) -> IdentityReport {
    let mut report = IdentityReport {
        max_value: f64::NEG_INFINITY,
        ..IdentityReport::default()
    };
    for e in &solution.entries {
        report.max_value = report.max_value.max(e.value);
        match e.kind {
            NodeKind::Exhausted => {
                report.exhausted_checked += 1;
                let q = attacker
                    .q_star()
                    .get(e.state.attacker_state, e.state.attacker_action)
                    .unwrap_or(f64::NAN);
                let gap = (e.value + q).abs();
                report.max_exhausted_gap = if gap.is_nan() { f64::INFINITY } else { report.max_exhausted_gap.max(gap) };
            }
            NodeKind::Trap => {
                report.trap_checked += 1;
                if e.value != 0.0 {
                    report.trap_nonzero += 1;
                }
            }
            _ => {}
        }
    }
    if solution.entries.is_empty() {
        report.max_value = 0.0;
    }
    report
}

/// Monte-Carlo check that the attacker's realized return under the defender
/// stays below `|defender value|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub estimate: f64,
    pub stderr: f64,
    pub bound: f64,
    /// Numerical allowance for the attacker solve, `tolerance / (1 - gamma)`.
    pub slack: f64,
    pub episodes: usize,
    pub violated: bool,
}

impl BoundReport {
    pub fn new(estimate: f64, stderr: f64, bound: f64, slack: f64, episodes: usize) -> Self {
        let violated = estimate > bound + 3.0 * stderr + slack;
        Self {
            estimate,
            stderr,
            bound,
            slack,
            episodes,
            violated,
        }
    }
}

pub fn verify_value_bound(
    solution: &DefenderSolution,
    instance: &DomainInstance,
    attacker: &AttackerModel,
    episodes: usize,
    horizon: Option<usize>,
    seed: u64,
) -> Result<BoundReport, SimError> {
    let est = estimate_return(instance, attacker, Some(solution), solution.budget(), episodes, horizon, seed)?;
    let bound = defender_initial_value(solution, attacker).abs();
    let gamma = attacker.mdp().gamma();
    let slack = attacker.solver_config().tolerance / (1.0 - gamma);
    Ok(BoundReport::new(est.mean, est.stderr, bound, slack, episodes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::fixtures::labels;
    use crate::mdp::trajectory_log_probability;
    use crate::mdp::Trajectory;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    /// Three states, two actions; action 0 at s0 splits between s1 and s2.
    fn forked() -> TabularMdp {
        let mut b = MdpBuilder::new(labels("s", 3), labels("a", 2));
        b.add_transition(0, 0, 1, 0.5)
            .add_transition(0, 0, 2, 0.5)
            .add_transition(0, 1, 0, 1.0)
            .add_transition(1, 0, 0, 1.0)
            .add_transition(1, 1, 1, 1.0)
            .add_transition(2, 0, 0, 1.0)
            .add_transition(2, 1, 2, 1.0)
            .set_reward(1, 1.0)
            .gamma(0.9);
        b.build().unwrap()
    }

    #[test]
    fn unpruned_state_count_matches_product() {
        let att = AttackerModel::build(forked(), 1.0, cfg()).unwrap();
        let opts = CompileOptions {
            prune_unreachable: false,
            state_limit: None,
        };
        let d = compile_defender_mdp(&att, &[2], 2, opts).unwrap();
        assert_eq!(d.n_states(), 3 * 2 * 3);
        assert_eq!(d.space().len(), 18);
    }

    #[test]
    fn rows_sum_to_one_and_support_restricts_actions() {
        let att = AttackerModel::build(forked(), 1.0, cfg()).unwrap();
        let d = compile_defender_mdp(&att, &[2], 2, CompileOptions::default()).unwrap();
        let m = d.mdp();
        for s in 0..m.n_states() {
            for c in m.choice_range(s) {
                let sum: f64 = m.choice_outcomes(c).iter().map(|(_, p)| p).sum();
                assert!((sum - 1.0).abs() < 1e-9);
            }
        }
        let x = d.id(DefenderState::new(0, 0, 2)).unwrap();
        let acts: Vec<DefenderAction> = m.actions(x).iter().map(|&a| DefenderAction::from_index(a)).collect();
        assert_eq!(
            acts,
            vec![
                DefenderAction::Noop,
                DefenderAction::SelectOutcome(1),
                DefenderAction::SelectOutcome(2)
            ]
        );
    }

    #[test]
    fn exhausted_and_trap_values_follow_construction() {
        let att = AttackerModel::build(forked(), 2.0, cfg()).unwrap();
        let d = compile_defender_mdp(&att, &[2], 3, CompileOptions::default()).unwrap();
        let sol = solve_defender(&d, cfg()).unwrap();
        let report = check_identities(&sol, &att);
        assert!(report.exhausted_checked > 0);
        assert_eq!(report.max_exhausted_gap, 0.0);
        assert!(report.trap_checked > 0);
        assert!(report.holds(0.0));
        for e in sol.entries() {
            assert!(e.value <= 0.0);
        }
    }

    #[test]
    fn trap_at_start_is_worth_zero() {
        let att = AttackerModel::build(forked(), 1.0, cfg()).unwrap();
        let d = compile_defender_mdp(&att, &[0], 2, CompileOptions::default()).unwrap();
        let sol = solve_defender(&d, cfg()).unwrap();
        assert_eq!(sol.initial_value(), 0.0);
        assert_eq!(defender_initial_value(&sol, &att), 0.0);
    }

    #[test]
    fn single_action_start_is_degenerate_expectation() {
        let mut b = MdpBuilder::new(labels("s", 3), labels("a", 1));
        b.add_transition(0, 0, 1, 0.5)
            .add_transition(0, 0, 2, 0.5)
            .add_transition(1, 0, 1, 1.0)
            .add_transition(2, 0, 2, 1.0)
            .set_reward(1, 1.0)
            .set_reward(2, 0.2)
            .gamma(0.5);
        let att = AttackerModel::build(b.build().unwrap(), 1.0, cfg()).unwrap();
        let d = compile_defender_mdp(&att, &[], 1, CompileOptions::default()).unwrap();
        assert!(d.value_suppression_only());
        let sol = solve_defender(&d, cfg()).unwrap();
        let direct = sol.value(DefenderState::new(0, 0, 1)).unwrap();
        assert_eq!(defender_initial_value(&sol, &att), direct);
        // Forcing s2 beats noop: -(R(s2) + gamma Q*(s2, a)).
        let q2 = att.q_star().get(2, 0).unwrap();
        assert!((direct - (-(0.2 + 0.5 * q2))).abs() < 1e-12);
    }

    #[test]
    fn pruned_and_unpruned_agree() {
        let att = AttackerModel::build(forked(), 3.0, cfg()).unwrap();
        let pruned = compile_defender_mdp(&att, &[2], 3, CompileOptions::default()).unwrap();
        let full = compile_defender_mdp(
            &att,
            &[2],
            3,
            CompileOptions {
                prune_unreachable: false,
                state_limit: None,
            },
        )
        .unwrap();
        assert!(pruned.n_states() < full.n_states());
        let a = solve_defender(&pruned, cfg()).unwrap();
        let b = solve_defender(&full, cfg()).unwrap();
        for e in a.entries() {
            let other = b.value(e.state).unwrap();
            assert!((e.value - other).abs() < 1e-9, "{:?}", e.state);
        }
        assert!((a.initial_value() - b.initial_value()).abs() < 1e-12);
    }

    #[test]
    fn pruning_keeps_triples_only_selections_reach() {
        // Noop reaches (s1, a1) with probability 1e-6 * P(a1|s1) < 1e-12,
        // selecting s1 reaches it with P(a1|s1) alone.
        let mut b = MdpBuilder::new(labels("s", 4), labels("a", 2));
        b.add_transition(0, 0, 1, 1e-6)
            .add_transition(0, 0, 2, 1.0 - 1e-6)
            .add_transition(1, 0, 2, 1.0)
            .add_transition(1, 1, 3, 1.0)
            .add_transition(3, 0, 3, 1.0)
            .set_reward(2, 1.0)
            .set_terminal(2, true)
            .gamma(0.9)
            .initial(0);
        let att = AttackerModel::build(b.build().unwrap(), 20.0, cfg()).unwrap();
        let p = att.behavior().row(1).iter().find(|&&(a, _)| a == 1).unwrap().1;
        assert!(p * 1e-6 < MIN_PROBABILITY && p >= MIN_PROBABILITY, "{p}");
        let d = compile_defender_mdp(&att, &[], 2, CompileOptions::default()).unwrap();
        assert!(d.id(DefenderState::new(1, 1, 1)).is_some());
        solve_defender(&d, cfg()).unwrap();
    }

    #[test]
    fn defender_dominates_noop() {
        let att = AttackerModel::build(forked(), 0.5, cfg()).unwrap();
        let d = compile_defender_mdp(&att, &[2], 3, CompileOptions::default()).unwrap();
        let sol = solve_defender(&d, cfg()).unwrap();
        let noop = noop_values(&d, cfg()).unwrap();
        for (e, v) in sol.entries().iter().zip(&noop) {
            assert!(e.value >= v - 2e-6);
        }
    }

    #[test]
    fn selected_outcomes_are_believable() {
        let att = AttackerModel::build(forked(), 0.5, cfg()).unwrap();
        let d = compile_defender_mdp(&att, &[2], 3, CompileOptions::default()).unwrap();
        let sol = solve_defender(&d, cfg()).unwrap();
        for e in sol.entries() {
            if let Some(DefenderAction::SelectOutcome(target)) = e.action {
                let s = e.state.attacker_state;
                let tau = Trajectory::from_parts(vec![s, target], vec![e.state.attacker_action]).unwrap();
                assert!(trajectory_log_probability(att.mdp(), &tau) > f64::NEG_INFINITY);
            }
        }
    }

    #[test]
    fn guards() {
        let att = AttackerModel::build(forked(), 1.0, cfg()).unwrap();
        assert_eq!(
            compile_defender_mdp(&att, &[7], 2, CompileOptions::default()).unwrap_err(),
            DefenderError::InvalidTrap { index: 7, n_states: 3 }
        );
        assert_eq!(
            compile_defender_mdp(&att, &[1], 0, CompileOptions::default()).unwrap_err(),
            DefenderError::InvalidBudget
        );
        let opts = CompileOptions {
            prune_unreachable: false,
            state_limit: Some(10),
        };
        assert!(matches!(
            compile_defender_mdp(&att, &[1], 2, opts),
            Err(DefenderError::StateSpaceTooLarge { states: 18, limit: 10 })
        ));
    }

    #[test]
    fn triple_space_round_trips() {
        let space = TripleSpace {
            n_states: 5,
            n_actions: 3,
            budget: 4,
        };
        for d in 0..space.len() {
            assert_eq!(space.dense(space.triple(d)), Some(d));
        }
        assert_eq!(space.dense(DefenderState::new(5, 0, 0)), None);
    }

    mod properties {
        use super::*;
        use crate::mdp::{random_mdp, RandomMdpShape};
        use proptest::prelude::*;
        use rand::{Rng as _, SeedableRng};

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn construction_invariants(seed in any::<u64>(), kappa in 0.0f64..8.0, budget in 1usize..4) {
                let mut rng = crate::Rng::seed_from_u64(seed);
                let m = random_mdp(&mut rng, RandomMdpShape::default());
                let traps: Vec<usize> = (0..m.n_states())
                    .filter(|&s| !m.is_terminal(s) && rng.random::<f64>() < 0.3)
                    .collect();
                let att = AttackerModel::build(m, kappa, cfg()).unwrap();
                let d = compile_defender_mdp(&att, &traps, budget, CompileOptions::default()).unwrap();
                for row in d.mdp().transitions().fold(alloc::collections::BTreeMap::new(), |mut acc, (s, a, _, p)| {
                    *acc.entry((s, a)).or_insert(0.0) += p;
                    acc
                }).values() {
                    prop_assert!((row - 1.0).abs() < 1e-9);
                }
                let sol = solve_defender(&d, cfg()).unwrap();
                prop_assert!(check_identities(&sol, &att).holds(1e-9));
                let noop = noop_values(&d, cfg()).unwrap();
                for (e, v) in sol.entries().iter().zip(&noop) {
                    prop_assert!(e.value <= 1e-9);
                    prop_assert!(e.value >= v - 2.0 * cfg().tolerance);
                    if let Some(DefenderAction::SelectOutcome(t)) = e.action {
                        prop_assert!(att.mdp().transition_prob(e.state.attacker_state, e.state.attacker_action, t) > 0.0);
                    }
                }
            }
        }
    }
}
