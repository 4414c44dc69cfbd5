//! Four rooms separated by a cross of walls through the middle row and
//! column, joined by one door cell per wall arm.
//!
//! Door positions are seeded; removed doors can leave the goal unreachable,
//! which is reported in the metadata rather than rejected.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng as _, SeedableRng};

use super::grid::{build_navigation, Grid, NavSpec};
use super::{check_gamma, check_slip, pick_traps, DomainError, DomainInstance, DomainKind, DomainMetadata, DEFAULT_GAMMA};
use crate::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct FourRoomsParams {
    pub size: usize,
    pub slip: f64,
    pub n_traps: usize,
    pub seed: u64,
    pub trap_seed: u64,
    pub gamma: f64,
    pub goal_reward: f64,
    /// Which wall arms get a door: upper, lower, left, right.
    pub doors: [bool; 4],
}

impl Default for FourRoomsParams {
    fn default() -> Self {
        Self {
            size: 4,
            slip: 0.5,
            n_traps: 2,
            seed: 0,
            trap_seed: 0,
            gamma: DEFAULT_GAMMA,
            goal_reward: 1.0,
            doors: [true; 4],
        }
    }
}

/// Wall layout and door cells for side `n` (door order: upper, lower, left, right arm).
fn layout(n: usize, seed: u64, doors: [bool; 4]) -> (Grid, [Option<usize>; 4]) {
    let m = n / 2;
    let mut grid = Grid::open(n);
    for i in 0..n {
        let v = grid.cell(i, m);
        let h = grid.cell(m, i);
        grid.wall[v] = true;
        grid.wall[h] = true;
    }
    let mut rng = Rng::seed_from_u64(seed);
    let arms: [Vec<usize>; 4] = [
        (0..m).map(|r| grid.cell(r, m)).collect(),
        (m + 1..n).map(|r| grid.cell(r, m)).collect(),
        (0..m).map(|c| grid.cell(m, c)).collect(),
        (m + 1..n).map(|c| grid.cell(m, c)).collect(),
    ];
    let mut placed = [None; 4];
    for (k, arm) in arms.iter().enumerate() {
        // Draw unconditionally so each door keeps its position when others are removed.
        let pick = arm[rng.random_range(0..arm.len())];
        if doors[k] {
            grid.wall[pick] = false;
            placed[k] = Some(pick);
        }
    }
    (grid, placed)
}

pub fn generate_four_rooms(p: &FourRoomsParams) -> Result<DomainInstance, DomainError> {
    if p.size < 3 {
        return Err(DomainError::InvalidParameter("four-rooms side must be at least 3"));
    }
    check_slip(p.slip)?;
    check_gamma(p.gamma)?;
    let n = p.size;
    let (grid, doors) = layout(n, p.seed, p.doors);
    let start = 0;
    let goal = n * n - 1;
    let mut terminal = vec![false; n * n];
    terminal[goal] = true;
    let mut reward = vec![0.0; n * n];
    reward[goal] = p.goal_reward;
    let goal_reachable = grid.reachable(start, p.slip, &terminal)[goal];

    let (believed, index) = build_navigation(&NavSpec {
        grid: &grid,
        slip: p.slip,
        gamma: p.gamma,
        start,
        reward: &reward,
        terminal: &terminal,
    })?;
    let door_cells: Vec<usize> = doors.iter().flatten().copied().collect();
    let candidates: Vec<usize> = (0..n * n)
        .filter(|&c| c != start && c != goal && !grid.wall[c] && !door_cells.contains(&c))
        .filter_map(|c| index[c])
        .collect();
    let traps = pick_traps(&candidates, p.n_traps, p.trap_seed)?;
    let metadata = DomainMetadata {
        kind: DomainKind::FourRooms,
        size: n,
        slip: p.slip,
        delta: None,
        seed: p.seed,
        trap_seed: p.trap_seed,
        goal_reachable,
    };
    DomainInstance::from_believed(believed, &traps, metadata)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacker::AttackerModel;
    use crate::domains::checks::assert_well_formed;
    use crate::solve::SolverConfig;

    #[test]
    fn sweep_is_well_formed() {
        for size in [4, 6, 8, 9] {
            for trap_seed in 0..5 {
                let p = FourRoomsParams {
                    size,
                    trap_seed,
                    ..Default::default()
                };
                let inst = generate_four_rooms(&p).unwrap();
                assert_well_formed(&inst);
                assert!(inst.metadata.goal_reachable);
                assert_eq!(inst, generate_four_rooms(&p).unwrap());
            }
        }
    }

    #[test]
    fn removed_doors_cut_off_the_goal() {
        let p = FourRoomsParams {
            size: 6,
            doors: [true, false, true, false],
            ..Default::default()
        };
        let inst = generate_four_rooms(&p).unwrap();
        assert!(!inst.metadata.goal_reachable);
        let att = AttackerModel::build(inst.believed.clone(), 5.0, SolverConfig::default()).unwrap();
        assert_eq!(att.baseline_value(SolverConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn deterministic_shortest_path_value() {
        // Hand-built 5x5 with slip 0: the middle row/column are walls and
        // doors sit at seeded cells; the optimal return is gamma^(d - 1) for
        // the door path length d.
        let p = FourRoomsParams {
            size: 5,
            slip: 0.0,
            seed: 7,
            ..Default::default()
        };
        let inst = generate_four_rooms(&p).unwrap();
        let (grid, _) = layout(5, 7, [true; 4]);
        // Breadth-first distance over open cells.
        let mut dist = [usize::MAX; 25];
        let mut queue = alloc::collections::VecDeque::from([0usize]);
        dist[0] = 0;
        while let Some(c) = queue.pop_front() {
            for dir in 0..4 {
                let t = grid.step(c, dir);
                if dist[t] == usize::MAX {
                    dist[t] = dist[c] + 1;
                    queue.push_back(t);
                }
            }
        }
        let d = dist[24];
        assert!(d < usize::MAX);
        let att = AttackerModel::build(inst.believed.clone(), f64::INFINITY, SolverConfig::with_tolerance(1e-12)).unwrap();
        let base = att.baseline_value(SolverConfig::with_tolerance(1e-12)).unwrap();
        // The goal's entry reward is collected on the d-th move, discounted d - 1 times.
        assert!((base - libm::pow(p.gamma, (d - 1) as f64)).abs() < 1e-9, "{base} d={d}");
    }
}
