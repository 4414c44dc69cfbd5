//! Finite tabular MDPs with sparse transitions and state-entry rewards.
//!
//! Rewards are attached to states and paid on entry: the reward for the
//! transition `(s, a, s')` is `R(s')`. Terminal states are absorbing, carry no
//! transitions, and have zero value after their entry reward has been paid.
//!
//! Transitions are stored in a compressed layout. Every state owns a contiguous
//! run of *choices* (valid actions, sorted by action index) and every choice
//! owns a contiguous run of `(successor, probability)` outcomes sorted by
//! successor. Choice indices are global, so per-choice data such as Q-values
//! can live in flat vectors aligned with [`TabularMdp::choice_range`].

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use thiserror::Error;

/// Successor probabilities must sum to one within this slack.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Smallest transition probability accepted at construction.
pub const MIN_PROBABILITY: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("model has no states")]
    NoStates,
    #[error("state index {index} out of range (|S| = {len})")]
    StateOutOfRange { index: usize, len: usize },
    #[error("action index {index} out of range (|A| = {len})")]
    ActionOutOfRange { index: usize, len: usize },
    #[error("transition ({state}, {action}) -> {successor} has invalid probability {prob}")]
    InvalidProbability {
        state: usize,
        action: usize,
        successor: usize,
        prob: f64,
    },
    #[error("transition row ({state}, {action}) sums to {sum}, expected 1")]
    RowSum { state: usize, action: usize, sum: f64 },
    #[error("state {state} has invalid reward {reward} (rewards must be finite and >= 0)")]
    InvalidReward { state: usize, reward: f64 },
    #[error("non-terminal state {state} has no valid action")]
    NoValidAction { state: usize },
    #[error("terminal state {state} has outgoing transitions")]
    TerminalWithTransitions { state: usize },
    #[error("discount factor {0} outside [0, 1)")]
    InvalidDiscount(f64),
    #[error("expected {expected} {what}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Explicit finite MDP. Immutable once built; see [`MdpBuilder`].
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    state_labels: Vec<String>,
    action_labels: Vec<String>,
    choice_offsets: Vec<usize>,
    choice_actions: Vec<usize>,
    outcome_offsets: Vec<usize>,
    outcomes: Vec<(usize, f64)>,
    rewards: Vec<f64>,
    terminal: Vec<bool>,
    gamma: f64,
    initial: usize,
    signed_rewards: bool,
}

impl TabularMdp {
    pub fn n_states(&self) -> usize {
        self.state_labels.len()
    }

    pub fn n_actions(&self) -> usize {
        self.action_labels.len()
    }

    pub fn n_choices(&self) -> usize {
        self.choice_actions.len()
    }

    pub fn n_outcomes(&self) -> usize {
        self.outcomes.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn initial_state(&self) -> usize {
        self.initial
    }

    pub fn reward(&self, s: usize) -> f64 {
        self.rewards[s]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    /// Whether negative rewards were permitted at construction.
    pub fn signed_rewards(&self) -> bool {
        self.signed_rewards
    }

    pub fn terminal_flags(&self) -> &[bool] {
        &self.terminal
    }

    pub fn state_label(&self, s: usize) -> &str {
        &self.state_labels[s]
    }

    pub fn state_labels(&self) -> &[String] {
        &self.state_labels
    }

    pub fn action_label(&self, a: usize) -> &str {
        &self.action_labels[a]
    }

    pub fn action_labels(&self) -> &[String] {
        &self.action_labels
    }

    /// Global choice indices belonging to state `s`.
    pub fn choice_range(&self, s: usize) -> Range<usize> {
        self.choice_offsets[s]..self.choice_offsets[s + 1]
    }

    pub fn choice_action(&self, c: usize) -> usize {
        self.choice_actions[c]
    }

    pub fn choice_outcomes(&self, c: usize) -> &[(usize, f64)] {
        &self.outcomes[self.outcome_offsets[c]..self.outcome_offsets[c + 1]]
    }

    /// Valid actions at `s`, ascending.
    pub fn actions(&self, s: usize) -> &[usize] {
        &self.choice_actions[self.choice_range(s)]
    }

    pub fn choice_index(&self, s: usize, a: usize) -> Option<usize> {
        let range = self.choice_range(s);
        self.choice_actions[range.clone()]
            .binary_search(&a)
            .ok()
            .map(|i| range.start + i)
    }

    pub fn is_valid(&self, s: usize, a: usize) -> bool {
        s < self.n_states() && self.choice_index(s, a).is_some()
    }

    /// Successor distribution of `(s, a)`; `None` when the pair is invalid.
    pub fn outcomes(&self, s: usize, a: usize) -> Option<&[(usize, f64)]> {
        self.choice_index(s, a).map(|c| self.choice_outcomes(c))
    }

    pub fn transition_prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.outcomes(s, a)
            .and_then(|row| {
                row.binary_search_by_key(&next, |&(n, _)| n)
                    .ok()
                    .map(|i| row[i].1)
            })
            .unwrap_or(0.0)
    }

    /// Every `(state, action, successor, probability)` entry in storage order.
    pub fn transitions(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        (0..self.n_states()).flat_map(move |s| {
            self.choice_range(s).flat_map(move |c| {
                let a = self.choice_actions[c];
                self.choice_outcomes(c).iter().map(move |&(n, p)| (s, a, n, p))
            })
        })
    }

    /// Builder pre-populated with this model, for deriving variants.
    pub fn to_builder(&self) -> MdpBuilder {
        let mut b = MdpBuilder::new(self.state_labels.clone(), self.action_labels.clone());
        for (s, a, n, p) in self.transitions() {
            b.add_transition(s, a, n, p);
        }
        b.rewards.copy_from_slice(&self.rewards);
        b.terminal.copy_from_slice(&self.terminal);
        b.gamma = self.gamma;
        b.initial = self.initial;
        b.signed_rewards = self.signed_rewards;
        b
    }
}

/// Incremental constructor for [`TabularMdp`]. Duplicate `(s, a, s')`
/// entries are merged by summing their probabilities; all invariants are
/// checked in [`MdpBuilder::build`], which reports the first violation.
#[derive(Debug, Clone)]
pub struct MdpBuilder {
    state_labels: Vec<String>,
    action_labels: Vec<String>,
    rows: Vec<Vec<(usize, Vec<(usize, f64)>)>>,
    rewards: Vec<f64>,
    terminal: Vec<bool>,
    gamma: f64,
    initial: usize,
    signed_rewards: bool,
    first_error: Option<ModelError>,
}

impl MdpBuilder {
    pub fn new(state_labels: Vec<String>, action_labels: Vec<String>) -> Self {
        let n = state_labels.len();
        Self {
            state_labels,
            action_labels,
            rows: (0..n).map(|_| Vec::new()).collect(),
            rewards: alloc::vec![0.0; n],
            terminal: alloc::vec![false; n],
            gamma: 0.95,
            initial: 0,
            signed_rewards: false,
            first_error: None,
        }
    }

    pub fn n_states(&self) -> usize {
        self.state_labels.len()
    }

    fn record(&mut self, err: ModelError) {
        if self.first_error.is_none() {
            self.first_error = Some(err);
        }
    }

    fn check_state(&mut self, s: usize) -> bool {
        let len = self.n_states();
        if s >= len {
            self.record(ModelError::StateOutOfRange { index: s, len });
            return false;
        }
        true
    }

    pub fn add_transition(&mut self, s: usize, a: usize, next: usize, prob: f64) -> &mut Self {
        if !self.check_state(s) || !self.check_state(next) {
            return self;
        }
        if a >= self.action_labels.len() {
            let len = self.action_labels.len();
            self.record(ModelError::ActionOutOfRange { index: a, len });
            return self;
        }
        let row = &mut self.rows[s];
        let pos = match row.iter().position(|(act, _)| *act == a) {
            Some(pos) => pos,
            None => {
                row.push((a, Vec::new()));
                row.len() - 1
            }
        };
        let outs = &mut row[pos].1;
        match outs.iter_mut().find(|(n, _)| *n == next) {
            Some(entry) => entry.1 += prob,
            None => outs.push((next, prob)),
        }
        self
    }

    pub fn set_reward(&mut self, s: usize, reward: f64) -> &mut Self {
        if self.check_state(s) {
            self.rewards[s] = reward;
        }
        self
    }

    pub fn set_terminal(&mut self, s: usize, terminal: bool) -> &mut Self {
        if self.check_state(s) {
            self.terminal[s] = terminal;
        }
        self
    }

    /// Drops every transition leaving `s`.
    pub fn clear_transitions(&mut self, s: usize) -> &mut Self {
        if self.check_state(s) {
            self.rows[s].clear();
        }
        self
    }

    pub fn gamma(&mut self, gamma: f64) -> &mut Self {
        self.gamma = gamma;
        self
    }

    pub fn initial(&mut self, s: usize) -> &mut Self {
        if self.check_state(s) {
            self.initial = s;
        }
        self
    }

    /// Permits negative rewards. Attacker models never use this; compiled
    /// defender models (negated attacker rewards) do.
    pub fn allow_negative_rewards(&mut self) -> &mut Self {
        self.signed_rewards = true;
        self
    }

    pub fn build(mut self) -> Result<TabularMdp, ModelError> {
        if let Some(err) = self.first_error.take() {
            return Err(err);
        }
        let n = self.n_states();
        if n == 0 {
            return Err(ModelError::NoStates);
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(ModelError::InvalidDiscount(self.gamma));
        }

        let mut choice_offsets = Vec::with_capacity(n + 1);
        let mut choice_actions = Vec::new();
        let mut outcome_offsets = alloc::vec![0];
        let mut outcomes = Vec::new();
        choice_offsets.push(0);

        for (s, row) in self.rows.iter_mut().enumerate() {
            let reward = self.rewards[s];
            if !reward.is_finite() || (reward < 0.0 && !self.signed_rewards) {
                return Err(ModelError::InvalidReward { state: s, reward });
            }
            if self.terminal[s] && !row.is_empty() {
                return Err(ModelError::TerminalWithTransitions { state: s });
            }
            if !self.terminal[s] && row.is_empty() {
                return Err(ModelError::NoValidAction { state: s });
            }
            row.sort_by_key(|(a, _)| *a);
            for (a, outs) in row.iter_mut() {
                outs.sort_by_key(|(next, _)| *next);
                let mut sum = 0.0;
                for &(next, prob) in outs.iter() {
                    if !prob.is_finite() || !(MIN_PROBABILITY..=1.0 + ROW_SUM_TOLERANCE).contains(&prob) {
                        return Err(ModelError::InvalidProbability {
                            state: s,
                            action: *a,
                            successor: next,
                            prob,
                        });
                    }
                    sum += prob;
                }
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return Err(ModelError::RowSum { state: s, action: *a, sum });
                }
                choice_actions.push(*a);
                outcomes.extend_from_slice(outs);
                outcome_offsets.push(outcomes.len());
            }
            choice_offsets.push(choice_actions.len());
        }

        Ok(TabularMdp {
            state_labels: self.state_labels,
            action_labels: self.action_labels,
            choice_offsets,
            choice_actions,
            outcome_offsets,
            outcomes,
            rewards: self.rewards,
            terminal: self.terminal,
            gamma: self.gamma,
            initial: self.initial,
            signed_rewards: self.signed_rewards,
        })
    }
}

/// Alternating state/action sequence `s0, a0, s1, ..., sn`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Trajectory {
    states: Vec<usize>,
    actions: Vec<usize>,
}

impl Trajectory {
    pub fn new(start: usize) -> Self {
        Self {
            states: alloc::vec![start],
            actions: Vec::new(),
        }
    }

    /// Builds from raw parts; `states.len()` must be `actions.len() + 1`.
    pub fn from_parts(states: Vec<usize>, actions: Vec<usize>) -> Option<Self> {
        (states.len() == actions.len() + 1).then_some(Self { states, actions })
    }

    pub fn push(&mut self, action: usize, next: usize) {
        self.actions.push(action);
        self.states.push(next);
    }

    /// Number of transitions.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn first_state(&self) -> usize {
        self.states[0]
    }

    pub fn last_state(&self) -> usize {
        self.states[self.states.len() - 1]
    }

    pub fn steps(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.actions
            .iter()
            .enumerate()
            .map(move |(i, &a)| (self.states[i], a, self.states[i + 1]))
    }

    /// Appends `other`, which must start where `self` ends.
    pub fn concat(&self, other: &Trajectory) -> Option<Trajectory> {
        if self.last_state() != other.first_state() {
            return None;
        }
        let mut out = self.clone();
        out.actions.extend_from_slice(&other.actions);
        out.states.extend_from_slice(&other.states[1..]);
        Some(out)
    }
}

/// `log P(tau | mdp)`: the sum of log transition probabilities, `0` for a
/// single-state trajectory, and exactly `-inf` if any step is impossible.
pub fn trajectory_log_probability(mdp: &TabularMdp, tau: &Trajectory) -> f64 {
    let mut total = 0.0;
    for (s, a, next) in tau.steps() {
        if s >= mdp.n_states() || next >= mdp.n_states() {
            return f64::NEG_INFINITY;
        }
        let p = mdp.transition_prob(s, a, next);
        if p <= 0.0 {
            return f64::NEG_INFINITY;
        }
        total += libm::log(p);
    }
    total
}

/// Shape limits for [`random_mdp`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomMdpShape {
    pub max_states: usize,
    pub max_actions: usize,
    /// Probability that a non-initial state is terminal.
    pub terminal_probability: f64,
    pub max_reward: u32,
    pub gamma: f64,
}

impl Default for RandomMdpShape {
    fn default() -> Self {
        Self {
            max_states: 4,
            max_actions: 2,
            terminal_probability: 0.25,
            max_reward: 3,
            gamma: 0.9,
        }
    }
}

/// Small random MDP for property tests. Weights are small integers so ties
/// and repeated probabilities are common; rewards are integers in
/// `0..=max_reward`.
pub fn random_mdp<R: rand::Rng + ?Sized>(rng: &mut R, shape: RandomMdpShape) -> TabularMdp {
    let n = rng.random_range(1..=shape.max_states.max(1));
    let m = rng.random_range(1..=shape.max_actions.max(1));
    let names = |p: &str, k: usize| (0..k).map(|i| alloc::format!("{p}{i}")).collect::<Vec<String>>();
    let mut b = MdpBuilder::new(names("s", n), names("a", m));
    for s in 0..n {
        b.set_reward(s, rng.random_range(0..=shape.max_reward) as f64);
        if s != 0 && rng.random::<f64>() < shape.terminal_probability {
            b.set_terminal(s, true);
            continue;
        }
        let first_valid = rng.random_range(0..m);
        for a in 0..m {
            if a != first_valid && rng.random::<bool>() {
                continue;
            }
            let weights: Vec<u32> = (0..n).map(|_| if rng.random::<bool>() { rng.random_range(1..=4) } else { 0 }).collect();
            let total: u32 = weights.iter().sum();
            if total == 0 {
                b.add_transition(s, a, rng.random_range(0..n), 1.0);
                continue;
            }
            for (t, &w) in weights.iter().enumerate() {
                if w > 0 {
                    b.add_transition(s, a, t, w as f64 / total as f64);
                }
            }
        }
    }
    b.gamma(shape.gamma);
    b.build().expect("random rows are normalized")
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use alloc::format;

    pub fn labels(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    /// s0 -> s1 -> s2 (terminal, reward 1), one action, gamma 0.9.
    pub fn chain() -> TabularMdp {
        let mut b = MdpBuilder::new(labels("s", 3), labels("a", 1));
        b.add_transition(0, 0, 1, 1.0)
            .add_transition(1, 0, 2, 1.0)
            .set_reward(2, 1.0)
            .set_terminal(2, true)
            .gamma(0.9);
        b.build().unwrap()
    }

    /// Chain with a second "stay" action so policies have something to choose.
    pub fn chain_with_stay() -> TabularMdp {
        let mut b = MdpBuilder::new(labels("s", 3), labels("a", 2));
        b.add_transition(0, 0, 1, 1.0)
            .add_transition(0, 1, 0, 1.0)
            .add_transition(1, 0, 2, 1.0)
            .add_transition(1, 1, 1, 1.0)
            .set_reward(2, 1.0)
            .set_terminal(2, true)
            .gamma(0.9);
        b.build().unwrap()
    }
}
