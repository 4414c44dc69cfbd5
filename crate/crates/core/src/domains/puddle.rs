//! Discretized puddle world on the unit square.
//!
//! Grid points sit at multiples of `delta` along each axis. Entering a point
//! outside every puddle capsule pays `step_reward`, entering one inside pays
//! nothing. The start is `(0, 0)`; the goal is the far corner and terminal.
//! Rewards are paid on entry, so the goal pays like any other point.

use alloc::vec;
use alloc::vec::Vec;

use super::grid::{build_navigation, Grid, NavSpec};
use super::{check_gamma, check_slip, pick_traps, DomainError, DomainInstance, DomainKind, DomainMetadata, DEFAULT_GAMMA};

/// Segment `a`-`b` thickened by `radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capsule {
    pub a: (f64, f64),
    pub b: (f64, f64),
    pub radius: f64,
}

impl Capsule {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (self.b.0 - self.a.0, self.b.1 - self.a.1);
        let len2 = dx * dx + dy * dy;
        let t = if len2 == 0.0 {
            0.0
        } else {
            (((x - self.a.0) * dx + (y - self.a.1) * dy) / len2).clamp(0.0, 1.0)
        };
        let (px, py) = (self.a.0 + t * dx - x, self.a.1 + t * dy - y);
        libm::sqrt(px * px + py * py) < self.radius
    }
}

/// The two classic puddles.
pub const STANDARD_PUDDLES: [Capsule; 2] = [
    Capsule {
        a: (0.1, 0.75),
        b: (0.45, 0.75),
        radius: 0.1,
    },
    Capsule {
        a: (0.45, 0.4),
        b: (0.45, 0.8),
        radius: 0.1,
    },
];

#[derive(Debug, Clone, PartialEq)]
pub struct PuddleParams {
    pub delta: f64,
    pub slip: f64,
    pub n_traps: usize,
    pub seed: u64,
    pub trap_seed: u64,
    pub gamma: f64,
    pub step_reward: f64,
    pub puddles: Vec<Capsule>,
}

impl Default for PuddleParams {
    fn default() -> Self {
        Self {
            delta: 0.4,
            slip: 0.5,
            n_traps: 4,
            seed: 0,
            trap_seed: 0,
            gamma: DEFAULT_GAMMA,
            step_reward: 1.0,
            puddles: STANDARD_PUDDLES.to_vec(),
        }
    }
}

/// Grid points per axis for step size `delta`: `floor(1 / delta) + 1`.
pub fn points_per_axis(delta: f64) -> Result<usize, DomainError> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(DomainError::InvalidDelta(delta));
    }
    let m = libm::floor(1.0 / delta + 1e-9) as usize + 1;
    if m < 3 {
        return Err(DomainError::InvalidDelta(delta));
    }
    Ok(m)
}

/// The layout seed is unused: the map is fixed and only traps are drawn.
pub fn generate_puddle(p: &PuddleParams) -> Result<DomainInstance, DomainError> {
    check_slip(p.slip)?;
    check_gamma(p.gamma)?;
    if !(p.step_reward >= 0.0 && p.step_reward.is_finite()) {
        return Err(DomainError::InvalidParameter("step reward must be finite and non-negative"));
    }
    let m = points_per_axis(p.delta)?;
    let grid = Grid::open(m);
    let start = 0;
    let goal = m * m - 1;
    let mut reward = vec![0.0; m * m];
    for (cell, r) in reward.iter_mut().enumerate() {
        let (row, col) = grid.coords(cell);
        let (x, y) = (col as f64 * p.delta, row as f64 * p.delta);
        if !p.puddles.iter().any(|c| c.contains(x, y)) {
            *r = p.step_reward;
        }
    }
    let mut terminal = vec![false; m * m];
    terminal[goal] = true;
    let (believed, index) = build_navigation(&NavSpec {
        grid: &grid,
        slip: p.slip,
        gamma: p.gamma,
        start,
        reward: &reward,
        terminal: &terminal,
    })?;
    let candidates: Vec<usize> = (0..m * m)
        .filter(|&c| c != start && c != goal)
        .filter_map(|c| index[c])
        .collect();
    let traps = pick_traps(&candidates, p.n_traps, p.trap_seed)?;
    let metadata = DomainMetadata {
        kind: DomainKind::Puddle,
        size: m,
        slip: p.slip,
        delta: Some(p.delta),
        seed: p.seed,
        trap_seed: p.trap_seed,
        goal_reachable: true,
    };
    DomainInstance::from_believed(believed, &traps, metadata)
}
