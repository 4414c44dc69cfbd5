//! The attacker: an optimal planner in its believed model whose observed
//! behavior is noisy-rational, `P(a|s) ∝ exp(kappa Q*(s,a))`.
//!
//! Behavior is computed once from the believed model and frozen; the
//! attacker never re-plans during an episode.

use thiserror::Error;

use crate::mdp::TabularMdp;
use crate::policy::{PolicyError, StochasticPolicy};
use crate::solve::{policy_evaluation, value_iteration, QFunction, SolveError, SolverConfig, ValueFunction};

/// Rationality used when none is configured.
pub const DEFAULT_KAPPA: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AttackerError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("state {0} is terminal in the believed model")]
    TerminalState(usize),
}

#[derive(Debug, Clone)]
pub struct AttackerModel {
    mdp: TabularMdp,
    kappa: f64,
    v_star: ValueFunction,
    q_star: QFunction,
    behavior: StochasticPolicy,
    config: SolverConfig,
}

impl AttackerModel {
    /// Solves the believed model and derives the softmax behavior policy.
    pub fn build(mdp: TabularMdp, kappa: f64, config: SolverConfig) -> Result<Self, AttackerError> {
        if kappa.is_nan() || kappa < 0.0 {
            return Err(PolicyError::InvalidKappa(kappa).into());
        }
        let vi = value_iteration(&mdp, config)?;
        let behavior = StochasticPolicy::softmax(&vi.q, kappa)?;
        Ok(Self {
            mdp,
            kappa,
            v_star: vi.value,
            q_star: vi.q,
            behavior,
            config,
        })
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn v_star(&self) -> &ValueFunction {
        &self.v_star
    }

    pub fn q_star(&self) -> &QFunction {
        &self.q_star
    }

    pub fn behavior(&self) -> &StochasticPolicy {
        &self.behavior
    }

    pub fn solver_config(&self) -> SolverConfig {
        self.config
    }

    /// Expected discounted return of the unopposed noisy-rational attacker
    /// from the initial state of its believed model.
    pub fn baseline_value(&self, config: SolverConfig) -> Result<f64, SolveError> {
        let v = policy_evaluation(&self.mdp, &self.behavior, config)?;
        Ok(v.get(self.mdp.initial_state()))
    }

    /// Draws the attacker's action at `state` from its behavior policy.
    pub fn sample_action<R: rand::Rng + ?Sized>(&self, state: usize, rng: &mut R) -> Result<usize, AttackerError> {
        if self.mdp.is_terminal(state) {
            return Err(AttackerError::TerminalState(state));
        }
        self.behavior
            .sample(state, rng)
            .ok_or(AttackerError::TerminalState(state))
    }
}

pub fn build_attacker(mdp: TabularMdp, kappa: f64, config: SolverConfig) -> Result<AttackerModel, AttackerError> {
    AttackerModel::build(mdp, kappa, config)
}

pub fn attacker_baseline_value(model: &AttackerModel, config: SolverConfig) -> Result<f64, SolveError> {
    model.baseline_value(config)
}

pub fn sample_attacker_action<R: rand::Rng + ?Sized>(
    model: &AttackerModel,
    state: usize,
    rng: &mut R,
) -> Result<usize, AttackerError> {
    model.sample_action(state, rng)
}
