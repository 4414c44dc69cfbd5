//! Planning core for the attacker entrapment problem.
//!
//! An attacker plans in a believed tabular MDP and acts noisy-rationally on its
//! optimal Q-function. A covert defender, unknown to the attacker, may pick
//! which outcome of each attacker action manifests, for at most `K` steps. The
//! defender's problem compiles to another MDP over
//! `(attacker state, attacker action, remaining budget)` triples.
//!
//! Modules, bottom-up:
//!
//! - [`mdp`]: sparse tabular MDPs with state-entry rewards, trajectories.
//! - [`solve`]: value iteration, policy evaluation, greedy extraction.
//! - [`policy`]: softmax distributions and stochastic policies.
//! - [`attacker`]: the noisy-rational attacker model.
//! - [`defender`]: defender MDP compilation, solving and bound checks.
//! - [`budget`]: the belief-safe intervention budget search.
//! - [`domains`]: seeded benchmark generators and the showroom demo.
//! - [`sim`]: attacker-vs-defender episode simulation.
//!
//! The crate is `no_std` and only needs `alloc`.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod attacker;
pub mod budget;
pub mod defender;
pub mod domains;
pub mod fingerprint;
pub mod mdp;
pub mod policy;
pub mod sim;
pub mod solve;

mod stats;

pub use attacker::AttackerModel;
pub use budget::{compute_budget, BudgetResult};
pub use defender::{compile_defender_mdp, solve_defender, DefenderMdp, DefenderSolution};
pub use domains::DomainInstance;
pub use mdp::{MdpBuilder, ModelError, TabularMdp, Trajectory};
pub use policy::StochasticPolicy;
pub use solve::{QFunction, SolveError, SolverConfig, ValueFunction};
pub use stats::{mean_and_stderr, pairwise_sum};

/// Seeded random stream used everywhere randomness is drawn.
pub type Rng = rand_chacha::ChaCha8Rng;
