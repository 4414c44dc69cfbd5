//! Attacker-versus-defender episodes on the ground-truth dynamics.
//!
//! Each step the attacker draws an action from its frozen behavior policy.
//! While the defender has budget left it looks up the triple
//! `(state, action, budget)`: a noop lets the truth model sample the
//! successor, a selection forces it. The budget drops by one every step the
//! defender is consulted, noop or not. Rewards are the truth model's entry
//! rewards, discounted with the attacker's `gamma`.

use alloc::vec::Vec;

use rand::SeedableRng;
use thiserror::Error;

use crate::attacker::{AttackerError, AttackerModel};
use crate::defender::{DefenderAction, DefenderSolution, DefenderState};
use crate::domains::DomainInstance;
use crate::mdp::Trajectory;
use crate::policy::sample_index;
use crate::stats::mean_and_stderr;
use crate::Rng;

/// Discounted tail below which episodes are truncated.
pub const HORIZON_TAIL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("defender policy was compiled for a different instance or budget")]
    ModelMismatch,
    #[error("attacker model does not match the instance's believed model")]
    AttackerMismatch,
    #[error("at least one episode is required")]
    NoEpisodes,
    #[error(transparent)]
    Attacker(#[from] AttackerError),
}

/// Smallest `t` with `gamma^t <= HORIZON_TAIL`.
pub fn default_horizon(gamma: f64) -> usize {
    libm::ceil(libm::log(HORIZON_TAIL) / libm::log(gamma)) as usize
}

/// Random stream of episode `index`, independent of every other episode.
pub fn episode_rng(seed: u64, index: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One simulated step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    /// `None` when the defender was not consulted (no defense, or no budget).
    pub defender: Option<DefenderAction>,
    pub next: usize,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub steps: Vec<Step>,
    pub attacker_return: f64,
    pub trapped: bool,
    pub steps_to_trap: Option<usize>,
    /// Step count after which the budget reached zero.
    pub budget_exhausted_at: Option<usize>,
    /// Outcome selections made.
    pub interventions: usize,
    /// Selections of an outcome the believed model deems impossible.
    pub impossible_selects: usize,
}

impl EpisodeRecord {
    pub fn trajectory(&self, start: usize) -> Trajectory {
        let mut t = Trajectory::new(start);
        for s in &self.steps {
            t.push(s.action, s.next);
        }
        t
    }

    /// Defender decisions of any kind, noops included.
    pub fn decisions(&self) -> usize {
        self.steps.iter().filter(|s| s.defender.is_some()).count()
    }
}

fn check_compatible(
    instance: &DomainInstance,
    attacker: &AttackerModel,
    defense: Option<&DefenderSolution>,
    budget: usize,
) -> Result<(), SimError> {
    if attacker.mdp() != &instance.believed {
        return Err(SimError::AttackerMismatch);
    }
    if let Some(d) = defense {
        if d.fingerprint() != instance.fingerprint() || d.budget() != budget {
            return Err(SimError::ModelMismatch);
        }
    }
    Ok(())
}

pub fn run_episode(
    instance: &DomainInstance,
    attacker: &AttackerModel,
    defense: Option<&DefenderSolution>,
    budget: usize,
    horizon: usize,
    rng: &mut Rng,
) -> Result<EpisodeRecord, SimError> {
    check_compatible(instance, attacker, defense, budget)?;
    Ok(episode(instance, attacker, defense, budget, horizon, rng)?)
}

fn episode(
    instance: &DomainInstance,
    attacker: &AttackerModel,
    defense: Option<&DefenderSolution>,
    budget: usize,
    horizon: usize,
    rng: &mut Rng,
) -> Result<EpisodeRecord, AttackerError> {
    let truth = &instance.truth;
    let believed = &instance.believed;
    let gamma = truth.gamma();
    let mut s = truth.initial_state();
    let mut record = EpisodeRecord {
        steps: Vec::new(),
        attacker_return: 0.0,
        trapped: false,
        steps_to_trap: None,
        budget_exhausted_at: None,
        interventions: 0,
        impossible_selects: 0,
    };
    if truth.is_terminal(s) {
        if instance.is_trap(s) {
            record.trapped = true;
            record.steps_to_trap = Some(0);
        }
        return Ok(record);
    }
    let mut k = if defense.is_some() { budget } else { 0 };
    let mut discount = 1.0;
    for t in 0..horizon {
        let a = attacker.sample_action(s, rng)?;
        let decision = defense.filter(|_| k > 0).map(|d| {
            d.action(DefenderState::new(s, a, k))
                .unwrap_or(DefenderAction::Noop)
        });
        let next = match decision {
            Some(DefenderAction::SelectOutcome(target)) => {
                record.interventions += 1;
                if believed.transition_prob(s, a, target) <= 0.0 {
                    record.impossible_selects += 1;
                }
                target
            }
            _ => {
                let row = truth.outcomes(s, a).expect("attacker only draws valid actions");
                sample_index(row, rng).expect("truth rows are non-empty")
            }
        };
        if decision.is_some() {
            k -= 1;
            if k == 0 {
                record.budget_exhausted_at = Some(t + 1);
            }
        }
        let reward = truth.reward(next);
        record.attacker_return += discount * reward;
        discount *= gamma;
        record.steps.push(Step {
            state: s,
            action: a,
            defender: decision,
            next,
            reward,
        });
        s = next;
        if truth.is_terminal(s) {
            if instance.is_trap(s) {
                record.trapped = true;
                record.steps_to_trap = Some(t + 1);
            }
            break;
        }
    }
    Ok(record)
}

/// Monte-Carlo summary of [`estimate_return`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReturnEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub episodes: usize,
    pub trapped: usize,
    pub interventions: usize,
    pub impossible_selects: usize,
    /// Largest number of defender decisions in any one episode.
    pub max_decisions: usize,
    /// Episodes with more defender decisions than the budget.
    pub over_budget: usize,
}

/// Runs `episodes` episodes, episode `i` on stream `episode_rng(seed, i)`,
/// handing each record to `visit` in order.
pub fn simulate<F: FnMut(usize, &EpisodeRecord)>(
    instance: &DomainInstance,
    attacker: &AttackerModel,
    defense: Option<&DefenderSolution>,
    budget: usize,
    episodes: usize,
    horizon: Option<usize>,
    seed: u64,
    mut visit: F,
) -> Result<ReturnEstimate, SimError> {
    if episodes == 0 {
        return Err(SimError::NoEpisodes);
    }
    check_compatible(instance, attacker, defense, budget)?;
    let horizon = horizon.unwrap_or_else(|| default_horizon(instance.truth.gamma()));
    let mut returns = Vec::with_capacity(episodes);
    let mut summary = ReturnEstimate {
        episodes,
        ..Default::default()
    };
    for i in 0..episodes {
        let mut rng = episode_rng(seed, i as u64);
        let rec = episode(instance, attacker, defense, budget, horizon, &mut rng)?;
        returns.push(rec.attacker_return);
        summary.trapped += rec.trapped as usize;
        summary.interventions += rec.interventions;
        summary.impossible_selects += rec.impossible_selects;
        let decisions = rec.decisions();
        summary.max_decisions = summary.max_decisions.max(decisions);
        summary.over_budget += (decisions > budget) as usize;
        visit(i, &rec);
    }
    let (mean, stderr) = mean_and_stderr(&returns);
    summary.mean = mean;
    summary.stderr = stderr;
    Ok(summary)
}

/// Sample mean and standard error of the attacker's realized return.
pub fn estimate_return(
    instance: &DomainInstance,
    attacker: &AttackerModel,
    defense: Option<&DefenderSolution>,
    budget: usize,
    episodes: usize,
    horizon: Option<usize>,
    seed: u64,
) -> Result<ReturnEstimate, SimError> {
    simulate(instance, attacker, defense, budget, episodes, horizon, seed, |_, _| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defender::{compile_defender_mdp, solve_defender, CompileOptions};
    use crate::domains::{showroom_demo, DomainKind, DomainMetadata};
    use crate::mdp::fixtures::*;
    use crate::mdp::MdpBuilder;
    use crate::solve::SolverConfig;

    fn external(mdp: crate::TabularMdp, traps: &[usize]) -> DomainInstance {
        DomainInstance::from_believed(mdp, traps, DomainMetadata::new(DomainKind::External)).unwrap()
    }

    #[test]
    fn horizon_covers_tail() {
        let h = default_horizon(0.99);
        assert_eq!(h, 1375);
        assert!(libm::pow(0.99, h as f64) <= HORIZON_TAIL);
        assert!(libm::pow(0.99, (h - 1) as f64) > HORIZON_TAIL);
    }

    #[test]
    fn start_in_trap_returns_zero() {
        let mut b = chain().to_builder();
        b.initial(1);
        let inst = external(b.build().unwrap(), &[1]);
        let att = AttackerModel::build(inst.believed.clone(), 5.0, SolverConfig::default()).unwrap();
        let rec = run_episode(&inst, &att, None, 0, 100, &mut episode_rng(0, 0)).unwrap();
        assert_eq!(rec.attacker_return, 0.0);
        assert!(rec.trapped);
        assert_eq!(rec.steps_to_trap, Some(0));
    }

    #[test]
    fn undefended_chain_pays_point_nine() {
        let inst = external(chain(), &[]);
        let att = AttackerModel::build(inst.believed.clone(), 5.0, SolverConfig::default()).unwrap();
        let rec = run_episode(&inst, &att, None, 0, 100, &mut episode_rng(0, 0)).unwrap();
        assert!((rec.attacker_return - 0.9).abs() < 1e-15);
        assert!(!rec.trapped);
        assert_eq!(rec.trajectory(0).states(), &[0, 1, 2]);
        let est = estimate_return(&inst, &att, None, 0, 1000, None, 1).unwrap();
        assert!((est.mean - 0.9).abs() < 1e-12);
        assert!(est.stderr < 1e-15);
    }

    #[test]
    fn noisy_estimate_matches_policy_evaluation() {
        let inst = external(chain_with_stay(), &[]);
        let att = AttackerModel::build(inst.believed.clone(), 5.0, SolverConfig::default()).unwrap();
        let analytic = att.baseline_value(SolverConfig::default()).unwrap();
        let est = estimate_return(&inst, &att, None, 0, 10_000, None, 3).unwrap();
        assert!((est.mean - analytic).abs() <= 3.0 * est.stderr + 1e-6, "{est:?} vs {analytic}");
    }

    #[test]
    fn zero_reward_instance() {
        let mut b = MdpBuilder::new(labels("s", 2), labels("a", 1));
        b.add_transition(0, 0, 1, 0.5).add_transition(0, 0, 0, 0.5).add_transition(1, 0, 0, 1.0);
        let inst = external(b.build().unwrap(), &[]);
        let att = AttackerModel::build(inst.believed.clone(), 1.0, SolverConfig::default()).unwrap();
        let est = estimate_return(&inst, &att, None, 0, 50, Some(30), 0).unwrap();
        assert_eq!((est.mean, est.stderr), (0.0, 0.0));
    }

    /// Corridor s0 -> s1 with a fork at s1: `a0` splits between a
    /// rewarding s2 and the zero-reward trap s3.
    fn fork_to_trap() -> DomainInstance {
        let mut b = MdpBuilder::new(labels("s", 4), labels("a", 1));
        b.add_transition(0, 0, 1, 1.0)
            .add_transition(1, 0, 2, 0.5)
            .add_transition(1, 0, 3, 0.5)
            .add_transition(3, 0, 3, 1.0)
            .set_reward(2, 1.0)
            .set_terminal(2, true)
            .gamma(0.9);
        external(b.build().unwrap(), &[3])
    }

    #[test]
    fn defender_leads_corridor_into_trap() {
        let inst = fork_to_trap();
        let att = AttackerModel::build(inst.believed.clone(), 5.0, SolverConfig::default()).unwrap();
        let dmdp = compile_defender_mdp(&att, &inst.traps, 3, CompileOptions::default()).unwrap();
        let sol = solve_defender(&dmdp, SolverConfig::default()).unwrap();
        let est = estimate_return(&inst, &att, Some(&sol), 3, 200, None, 9).unwrap();
        assert_eq!(est.mean, 0.0);
        assert_eq!(est.trapped, 200);
        assert_eq!(est.impossible_selects, 0);
        assert!(est.max_decisions <= 3);

        let rec = run_episode(&inst, &att, Some(&sol), 3, 100, &mut episode_rng(9, 0)).unwrap();
        assert_eq!(rec.steps_to_trap, Some(2));
        assert_eq!(rec.steps[1].defender, Some(DefenderAction::SelectOutcome(3)));

        // Undefended, half the episodes reach the reward.
        let free = estimate_return(&inst, &att, None, 0, 4000, None, 9).unwrap();
        assert!((free.mean - 0.45).abs() <= 3.0 * free.stderr);
        // A policy for another budget or instance is refused.
        assert_eq!(
            estimate_return(&inst, &att, Some(&sol), 2, 10, None, 0),
            Err(SimError::ModelMismatch)
        );
        let other = showroom_demo();
        let other_att = AttackerModel::build(other.believed.clone(), 5.0, SolverConfig::default()).unwrap();
        assert_eq!(
            estimate_return(&other, &other_att, Some(&sol), 3, 10, None, 0),
            Err(SimError::ModelMismatch)
        );
        assert_eq!(estimate_return(&inst, &att, None, 0, 0, None, 0), Err(SimError::NoEpisodes));
    }

    #[test]
    fn budget_is_never_exceeded() {
        let inst = fork_to_trap();
        let att = AttackerModel::build(inst.believed.clone(), 5.0, SolverConfig::default()).unwrap();
        let dmdp = compile_defender_mdp(&att, &inst.traps, 1, CompileOptions::default()).unwrap();
        let sol = solve_defender(&dmdp, SolverConfig::default()).unwrap();
        let mut exhausted = 0;
        simulate(&inst, &att, Some(&sol), 1, 500, None, 4, |_, rec| {
            assert!(rec.decisions() <= 1);
            exhausted += rec.budget_exhausted_at.is_some() as usize;
        })
        .unwrap();
        assert_eq!(exhausted, 500);
    }

    #[test]
    fn streams_are_reproducible_in_isolation() {
        let inst = external(chain_with_stay(), &[]);
        let att = AttackerModel::build(inst.believed.clone(), 1.0, SolverConfig::default()).unwrap();
        let mut all = Vec::new();
        simulate(&inst, &att, None, 0, 20, None, 77, |_, r| all.push(r.clone())).unwrap();
        let alone = run_episode(&inst, &att, None, 0, default_horizon(0.9), &mut episode_rng(77, 13)).unwrap();
        assert_eq!(all[13], alone);
    }
}
