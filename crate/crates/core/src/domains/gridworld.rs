//! Slippery gridworld with seeded walls and lava.
//!
//! Start is the top-left cell, the goal the bottom-right one. The goal pays 1
//! and is terminal; lava is terminal and pays nothing in both models.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng as _, SeedableRng};

use super::grid::{build_navigation, Grid, NavSpec};
use super::{check_gamma, check_slip, pick_traps, DomainError, DomainInstance, DomainKind, DomainMetadata, DEFAULT_GAMMA};
use crate::Rng;

/// Layout draws tried before giving up on a reachable goal.
pub const MAX_LAYOUT_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct GridworldParams {
    pub size: usize,
    pub slip: f64,
    pub n_traps: usize,
    pub seed: u64,
    pub trap_seed: u64,
    pub gamma: f64,
    pub wall_density: f64,
    pub lava_density: f64,
    pub goal_reward: f64,
    /// Redraw the layout when the goal is unreachable instead of failing.
    pub regenerate: bool,
}

impl Default for GridworldParams {
    fn default() -> Self {
        Self {
            size: 4,
            slip: 0.5,
            n_traps: 2,
            seed: 0,
            trap_seed: 0,
            gamma: DEFAULT_GAMMA,
            wall_density: 0.1,
            lava_density: 0.05,
            goal_reward: 1.0,
            regenerate: true,
        }
    }
}

pub fn generate_gridworld(p: &GridworldParams) -> Result<DomainInstance, DomainError> {
    if p.size < 3 {
        return Err(DomainError::InvalidParameter("gridworld side must be at least 3"));
    }
    check_slip(p.slip)?;
    check_gamma(p.gamma)?;
    if !(0.0..1.0).contains(&(p.wall_density + p.lava_density)) || p.wall_density < 0.0 || p.lava_density < 0.0 {
        return Err(DomainError::InvalidParameter("wall and lava densities must be non-negative and sum below 1"));
    }
    let n = p.size;
    let start = 0;
    let goal = n * n - 1;
    let mut rng = Rng::seed_from_u64(p.seed);

    let attempts = if p.regenerate { MAX_LAYOUT_ATTEMPTS } else { 1 };
    for _ in 0..attempts {
        let mut grid = Grid::open(n);
        let mut lava = vec![false; n * n];
        for c in 0..n * n {
            if c == start || c == goal {
                continue;
            }
            let u: f64 = rng.random();
            if u < p.wall_density {
                grid.wall[c] = true;
            } else if u < p.wall_density + p.lava_density {
                lava[c] = true;
            }
        }
        let mut terminal = lava.clone();
        terminal[goal] = true;
        if !grid.reachable(start, p.slip, &terminal)[goal] {
            continue;
        }

        let mut reward = vec![0.0; n * n];
        reward[goal] = p.goal_reward;
        let (believed, index) = build_navigation(&NavSpec {
            grid: &grid,
            slip: p.slip,
            gamma: p.gamma,
            start,
            reward: &reward,
            terminal: &terminal,
        })?;
        let candidates: Vec<usize> = (0..n * n)
            .filter(|&c| c != start && c != goal && !grid.wall[c] && !lava[c])
            .filter_map(|c| index[c])
            .collect();
        let traps = pick_traps(&candidates, p.n_traps, p.trap_seed)?;
        let metadata = DomainMetadata {
            kind: DomainKind::Gridworld,
            size: n,
            slip: p.slip,
            delta: None,
            seed: p.seed,
            trap_seed: p.trap_seed,
            goal_reachable: true,
        };
        return DomainInstance::from_believed(believed, &traps, metadata);
    }
    Err(DomainError::LayoutInfeasible { attempts })
}
