//! Seeded benchmark generators.
//!
//! Every generator is a pure function of its parameters and seeds and yields a
//! [`DomainInstance`]: the attacker's believed model, the ground truth (the same
//! model with traps made terminal and worthless) and the trap set.

mod grid;

pub mod four_rooms;
pub mod gridworld;
pub mod puddle;
pub mod rock;
pub mod showroom;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::SeedableRng;
use thiserror::Error;

use crate::fingerprint::Fingerprint;
use crate::mdp::{ModelError, TabularMdp};
use crate::Rng;

pub use four_rooms::{generate_four_rooms, FourRoomsParams};
pub use gridworld::{generate_gridworld, GridworldParams};
pub use puddle::{generate_puddle, Capsule, PuddleParams};
pub use rock::{generate_rock_sampling, RockParams};
pub use showroom::showroom_demo;

/// Discount used by every generator unless overridden.
pub const DEFAULT_GAMMA: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("goal unreachable after {attempts} layout attempts")]
    LayoutInfeasible { attempts: usize },
    #[error("{requested} traps requested but only {available} cells are eligible")]
    TooManyTraps { requested: usize, available: usize },
    #[error("{states} states exceed the limit of {limit}")]
    StateSpaceTooLarge { states: usize, limit: usize },
    #[error("step size {0} does not give at least a 3x3 grid on the unit map")]
    InvalidDelta(f64),
    #[error("trap {index} out of range (|S| = {n_states})")]
    InvalidTrap { index: usize, n_states: usize },
    #[error("trap {0} is terminal in the believed model")]
    TerminalTrap(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DomainKind {
    Gridworld,
    FourRooms,
    RockSampling,
    Puddle,
    Showroom,
    /// Loaded from disk rather than generated.
    External,
}

impl DomainKind {
    pub const ALL: [DomainKind; 6] = [
        DomainKind::Gridworld,
        DomainKind::FourRooms,
        DomainKind::RockSampling,
        DomainKind::Puddle,
        DomainKind::Showroom,
        DomainKind::External,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DomainKind::Gridworld => "gridworld",
            DomainKind::FourRooms => "four-rooms",
            DomainKind::RockSampling => "rock-sampling",
            DomainKind::Puddle => "puddle",
            DomainKind::Showroom => "showroom",
            DomainKind::External => "external",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainMetadata {
    pub kind: DomainKind,
    /// Grid side length; 0 where it does not apply.
    pub size: usize,
    pub slip: f64,
    /// Puddle step size.
    pub delta: Option<f64>,
    pub seed: u64,
    pub trap_seed: u64,
    pub goal_reachable: bool,
}

impl DomainMetadata {
    pub fn new(kind: DomainKind) -> Self {
        Self {
            kind,
            size: 0,
            slip: 0.0,
            delta: None,
            seed: 0,
            trap_seed: 0,
            goal_reachable: true,
        }
    }

    /// Short human-readable instance label, e.g. `gridworld-4x4`.
    pub fn label(&self) -> String {
        match (self.kind, self.delta) {
            (DomainKind::Puddle, Some(d)) => alloc::format!("puddle-d{d}"),
            (kind, _) if self.size > 0 => alloc::format!("{}-{}x{}", kind.name(), self.size, self.size),
            (kind, _) => String::from(kind.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainInstance {
    pub believed: TabularMdp,
    pub truth: TabularMdp,
    /// Sorted, deduplicated.
    pub traps: Vec<usize>,
    pub metadata: DomainMetadata,
}

impl DomainInstance {
    /// Derives the ground truth from the believed model: trap rows are
    /// cleared, traps become terminal and entering one pays nothing.
    pub fn from_believed(believed: TabularMdp, traps: &[usize], metadata: DomainMetadata) -> Result<Self, DomainError> {
        let mut traps = traps.to_vec();
        traps.sort_unstable();
        traps.dedup();
        let n = believed.n_states();
        for &t in &traps {
            if t >= n {
                return Err(DomainError::InvalidTrap { index: t, n_states: n });
            }
            if believed.is_terminal(t) {
                return Err(DomainError::TerminalTrap(t));
            }
        }
        let truth = truth_model(&believed, &traps)?;
        Ok(Self {
            believed,
            truth,
            traps,
            metadata,
        })
    }

    /// Pairs a believed model with an externally supplied truth, checking that
    /// they differ only where the trap construction allows.
    pub fn from_parts(
        believed: TabularMdp,
        truth: TabularMdp,
        traps: &[usize],
        metadata: DomainMetadata,
    ) -> Result<Self, DomainError> {
        let derived = Self::from_believed(believed, traps, metadata)?;
        if derived.truth != truth {
            return Err(DomainError::InvalidParameter("truth model is not the trap-derived twin of the believed model"));
        }
        Ok(derived)
    }

    pub fn is_trap(&self, s: usize) -> bool {
        self.traps.binary_search(&s).is_ok()
    }

    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint::of(&self.believed, &self.traps)
    }
}

fn truth_model(believed: &TabularMdp, traps: &[usize]) -> Result<TabularMdp, ModelError> {
    let mut b = believed.to_builder();
    for &t in traps {
        b.clear_transitions(t).set_terminal(t, true).set_reward(t, 0.0);
    }
    b.build()
}

/// Draws `count` distinct entries of `candidates` with the trap stream.
pub(crate) fn pick_traps(candidates: &[usize], count: usize, trap_seed: u64) -> Result<Vec<usize>, DomainError> {
    if count == 0 {
        return Err(DomainError::InvalidParameter("at least one trap is required"));
    }
    if count > candidates.len() {
        return Err(DomainError::TooManyTraps {
            requested: count,
            available: candidates.len(),
        });
    }
    let mut rng = Rng::seed_from_u64(trap_seed);
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, candidates.len(), count)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

/// States reachable from the initial state under the believed dynamics.
pub fn reachable_states(mdp: &TabularMdp) -> Vec<bool> {
    let mut seen = vec![false; mdp.n_states()];
    let mut stack = vec![mdp.initial_state()];
    seen[mdp.initial_state()] = true;
    while let Some(s) = stack.pop() {
        for c in mdp.choice_range(s) {
            for &(t, _) in mdp.choice_outcomes(c) {
                if !seen[t] {
                    seen[t] = true;
                    stack.push(t);
                }
            }
        }
    }
    seen
}

pub(crate) fn check_slip(slip: f64) -> Result<(), DomainError> {
    if (0.0..1.0).contains(&slip) {
        Ok(())
    } else {
        Err(DomainError::InvalidParameter("slip must lie in [0, 1)"))
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<(), DomainError> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(DomainError::InvalidParameter("gamma must lie in (0, 1)"))
    }
}

#[cfg(test)]
pub(crate) mod checks {
    use super::*;

    /// Structural invariants every generated instance must satisfy.
    pub fn assert_well_formed(inst: &DomainInstance) {
        let (b, t) = (&inst.believed, &inst.truth);
        assert_eq!(b.n_states(), t.n_states());
        assert_eq!(b.n_actions(), t.n_actions());
        assert_eq!(b.gamma(), t.gamma());
        assert_eq!(b.initial_state(), t.initial_state());
        assert!(!inst.traps.is_empty() || inst.metadata.kind == DomainKind::Showroom);
        for s in 0..b.n_states() {
            assert!(b.reward(s) >= 0.0 && t.reward(s) >= 0.0);
            if inst.is_trap(s) {
                assert!(!b.is_terminal(s));
                assert!(t.is_terminal(s));
                assert_eq!(t.reward(s), 0.0);
                assert!(t.actions(s).is_empty());
                continue;
            }
            assert_eq!(b.is_terminal(s), t.is_terminal(s));
            assert_eq!(b.reward(s), t.reward(s));
            assert_eq!(b.actions(s), t.actions(s));
            for &a in b.actions(s) {
                assert_eq!(b.outcomes(s, a), t.outcomes(s, a));
                let sum: f64 = b.outcomes(s, a).unwrap().iter().map(|o| o.1).sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
        assert!(!inst.is_trap(b.initial_state()));
    }
}
