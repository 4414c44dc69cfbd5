//! Shared n-by-n grid movement with symmetric perpendicular slip.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::mdp::{MdpBuilder, ModelError, TabularMdp};

pub(crate) const MOVE_LABELS: [&str; 4] = ["north", "east", "south", "west"];

/// Row-major `n x n` grid; row 0 is the top, `(0, 0)` the top-left cell.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Grid {
    pub n: usize,
    pub wall: Vec<bool>,
}

impl Grid {
    pub fn open(n: usize) -> Self {
        Self {
            n,
            wall: vec![false; n * n],
        }
    }

    pub fn cell(&self, row: usize, col: usize) -> usize {
        row * self.n + col
    }

    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell / self.n, cell % self.n)
    }

    /// Target of moving from `cell` in `dir`; blocked moves stay put.
    pub fn step(&self, cell: usize, dir: usize) -> usize {
        let (r, c) = self.coords(cell);
        let n = self.n;
        let target = match dir {
            0 if r > 0 => Some(self.cell(r - 1, c)),
            1 if c + 1 < n => Some(self.cell(r, c + 1)),
            2 if r + 1 < n => Some(self.cell(r + 1, c)),
            3 if c > 0 => Some(self.cell(r, c - 1)),
            _ => None,
        };
        match target {
            Some(t) if !self.wall[t] => t,
            _ => cell,
        }
    }

    /// Intended direction with `1 - slip`, each perpendicular with `slip / 2`;
    /// merged by target cell, ascending, zero entries dropped.
    pub fn outcomes(&self, cell: usize, dir: usize, slip: f64) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(3);
        let mut add = |target: usize, p: f64| {
            if p <= 0.0 {
                return;
            }
            match out.iter_mut().find(|o| o.0 == target) {
                Some(o) => o.1 += p,
                None => out.push((target, p)),
            }
        };
        add(self.step(cell, dir), 1.0 - slip);
        add(self.step(cell, (dir + 1) % 4), slip / 2.0);
        add(self.step(cell, (dir + 3) % 4), slip / 2.0);
        out.sort_by_key(|o| o.0);
        out
    }

    /// Cells reachable from `start` with positive probability, never
    /// expanding cells flagged in `stop`.
    pub fn reachable(&self, start: usize, slip: f64, stop: &[bool]) -> Vec<bool> {
        let mut seen = vec![false; self.n * self.n];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(c) = stack.pop() {
            if stop[c] {
                continue;
            }
            for dir in 0..4 {
                for (t, _) in self.outcomes(c, dir, slip) {
                    if !seen[t] {
                        seen[t] = true;
                        stack.push(t);
                    }
                }
            }
        }
        seen
    }

    /// Non-wall cells in row-major order and the inverse map.
    pub fn state_map(&self) -> (Vec<usize>, Vec<Option<usize>>) {
        let cells: Vec<usize> = (0..self.n * self.n).filter(|&c| !self.wall[c]).collect();
        let mut index = vec![None; self.n * self.n];
        for (s, &c) in cells.iter().enumerate() {
            index[c] = Some(s);
        }
        (cells, index)
    }

    pub fn label(&self, cell: usize) -> alloc::string::String {
        let (r, c) = self.coords(cell);
        format!("r{r}c{c}")
    }
}

/// Per-cell description of a plain navigation task.
pub(crate) struct NavSpec<'a> {
    pub grid: &'a Grid,
    pub slip: f64,
    pub gamma: f64,
    pub start: usize,
    pub reward: &'a [f64],
    pub terminal: &'a [bool],
}

/// Builds the navigation MDP over non-wall cells; returns it with the
/// cell-to-state map.
pub(crate) fn build_navigation(spec: &NavSpec<'_>) -> Result<(TabularMdp, Vec<Option<usize>>), ModelError> {
    let grid = spec.grid;
    let (cells, index) = grid.state_map();
    let labels = cells.iter().map(|&c| grid.label(c)).collect();
    let mut b = MdpBuilder::new(labels, MOVE_LABELS.iter().map(|s| (*s).into()).collect());
    for (s, &c) in cells.iter().enumerate() {
        b.set_reward(s, spec.reward[c]);
        if spec.terminal[c] {
            b.set_terminal(s, true);
            continue;
        }
        for dir in 0..4 {
            for (t, p) in grid.outcomes(c, dir, spec.slip) {
                b.add_transition(s, dir, index[t].expect("moves never enter walls"), p);
            }
        }
    }
    b.gamma(spec.gamma)
        .initial(index[spec.start].expect("start is not a wall"));
    Ok((b.build()?, index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corner_moves_merge_blocked_outcomes() {
        let g = Grid::open(3);
        // North from the top-left corner: blocked (stay) and west blocked (stay).
        assert_eq!(g.outcomes(0, 0, 0.5), vec![(0, 0.75), (1, 0.25)]);
        assert_eq!(g.outcomes(0, 1, 0.5), vec![(0, 0.25), (1, 0.5), (3, 0.25)]);
        assert_eq!(g.outcomes(4, 2, 0.0), vec![(7, 1.0)]);
    }

    #[test]
    fn walls_block() {
        let mut g = Grid::open(3);
        g.wall[1] = true;
        assert_eq!(g.step(0, 1), 0);
        let stop = vec![false; 9];
        let seen = g.reachable(0, 0.0, &stop);
        assert!(!seen[1] && seen[8]);
        let (cells, index) = g.state_map();
        assert_eq!(cells.len(), 8);
        assert_eq!(index[1], None);
        assert_eq!(index[2], Some(1));
    }
}
