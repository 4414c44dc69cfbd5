//! Fully observable rock sampling.
//!
//! A rover moves on an open grid and may sample a rock on its cell once.
//! State is `(cell, sampled-rocks mask)` plus a transient "fresh" copy of each
//! good-rock cell, entered right after sampling it, which carries the rock
//! reward. Bad rocks pay nothing. There is no exit; the task is discounted.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng as _, SeedableRng};

use super::grid::{Grid, MOVE_LABELS};
use super::{check_gamma, check_slip, pick_traps, DomainError, DomainInstance, DomainKind, DomainMetadata, DEFAULT_GAMMA};
use crate::mdp::MdpBuilder;
use crate::Rng;

pub const MAX_ROCKS: usize = 4;
pub const SAMPLE_ACTION: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rock {
    pub cell: usize,
    pub good: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RockParams {
    pub size: usize,
    pub slip: f64,
    pub n_rocks: usize,
    pub n_traps: usize,
    pub seed: u64,
    pub trap_seed: u64,
    pub gamma: f64,
    pub rock_reward: f64,
    /// Probability that a seeded rock is good.
    pub good_probability: f64,
    /// Explicit rocks instead of seeded ones.
    pub rocks: Option<Vec<Rock>>,
    pub state_limit: usize,
}

impl Default for RockParams {
    fn default() -> Self {
        Self {
            size: 4,
            slip: 0.5,
            n_rocks: MAX_ROCKS,
            n_traps: 3,
            seed: 0,
            trap_seed: 0,
            gamma: DEFAULT_GAMMA,
            rock_reward: 750.0,
            good_probability: 0.5,
            rocks: None,
            state_limit: 200_000,
        }
    }
}

fn place_rocks(p: &RockParams, start: usize) -> Vec<Rock> {
    let cells = p.size * p.size;
    let mut rng = Rng::seed_from_u64(p.seed);
    let picks = rand::seq::index::sample(&mut rng, cells - 1, p.n_rocks);
    let mut rocks: Vec<Rock> = picks
        .into_iter()
        .map(|i| Rock {
            cell: if i >= start { i + 1 } else { i },
            good: false,
        })
        .collect();
    rocks.sort_by_key(|r| r.cell);
    for r in &mut rocks {
        r.good = rng.random::<f64>() < p.good_probability;
    }
    rocks
}

pub fn generate_rock_sampling(p: &RockParams) -> Result<DomainInstance, DomainError> {
    if p.size < 2 {
        return Err(DomainError::InvalidParameter("rock-sampling side must be at least 2"));
    }
    check_slip(p.slip)?;
    check_gamma(p.gamma)?;
    if !(p.rock_reward >= 0.0 && p.rock_reward.is_finite()) {
        return Err(DomainError::InvalidParameter("rock reward must be finite and non-negative"));
    }
    let n = p.size;
    let cells = n * n;
    let start = 0;
    let rocks = match &p.rocks {
        Some(r) => r.clone(),
        None => {
            if p.n_rocks >= cells {
                return Err(DomainError::InvalidParameter("more rocks than free cells"));
            }
            place_rocks(p, start)
        }
    };
    if rocks.len() > MAX_ROCKS {
        return Err(DomainError::InvalidParameter("at most four rocks are supported"));
    }
    let mut rock_at = vec![None; cells];
    for (i, r) in rocks.iter().enumerate() {
        if r.cell >= cells || r.cell == start || rock_at[r.cell].is_some() {
            return Err(DomainError::InvalidParameter("rocks need distinct in-grid cells other than the start"));
        }
        rock_at[r.cell] = Some(i);
    }
    let masks = 1usize << rocks.len();
    let n_good = rocks.iter().filter(|r| r.good).count();
    let plain = cells * masks;
    let total = plain + n_good * (masks / 2);
    if total > p.state_limit {
        return Err(DomainError::StateSpaceTooLarge {
            states: total,
            limit: p.state_limit,
        });
    }

    let grid = Grid::open(n);
    let plain_id = |cell: usize, mask: usize| mask * cells + cell;
    // Fresh states: one block of `masks` slots per good rock; only masks
    // containing that rock's bit are used, packed by dropping the bit.
    let good_rank: Vec<Option<usize>> = {
        let mut k = 0;
        rocks
            .iter()
            .map(|r| {
                r.good.then(|| {
                    k += 1;
                    k - 1
                })
            })
            .collect()
    };
    let fresh_id = |rock: usize, mask: usize| {
        let low = mask & ((1 << rock) - 1);
        let high = (mask >> (rock + 1)) << rock;
        plain + good_rank[rock].expect("fresh states exist for good rocks") * (masks / 2) + (low | high)
    };

    let mut labels = vec![String::new(); total];
    let mask_text = |mask: usize| format!("{mask:0w$b}", w = rocks.len().max(1));
    for mask in 0..masks {
        for cell in 0..cells {
            labels[plain_id(cell, mask)] = format!("{}m{}", grid.label(cell), mask_text(mask));
        }
        for (i, r) in rocks.iter().enumerate() {
            if r.good && mask & (1 << i) != 0 {
                labels[fresh_id(i, mask)] = format!("{}m{}+", grid.label(r.cell), mask_text(mask));
            }
        }
    }
    let mut actions: Vec<String> = MOVE_LABELS.iter().map(|s| String::from(*s)).collect();
    actions.push("sample".into());
    let mut b = MdpBuilder::new(labels, actions);

    let add_row = |b: &mut MdpBuilder, from: usize, cell: usize, mask: usize| {
        for dir in 0..4 {
            for (t, prob) in grid.outcomes(cell, dir, p.slip) {
                b.add_transition(from, dir, plain_id(t, mask), prob);
            }
        }
        if let Some(i) = rock_at[cell] {
            if mask & (1 << i) == 0 {
                let after = mask | (1 << i);
                let target = if rocks[i].good { fresh_id(i, after) } else { plain_id(cell, after) };
                b.add_transition(from, SAMPLE_ACTION, target, 1.0);
            }
        }
    };
    for mask in 0..masks {
        for cell in 0..cells {
            add_row(&mut b, plain_id(cell, mask), cell, mask);
        }
        for (i, r) in rocks.iter().enumerate() {
            if r.good && mask & (1 << i) != 0 {
                let f = fresh_id(i, mask);
                b.set_reward(f, p.rock_reward);
                add_row(&mut b, f, r.cell, mask);
            }
        }
    }
    b.gamma(p.gamma).initial(plain_id(start, 0));
    let believed = b.build()?;

    let trap_cells: Vec<usize> = (0..cells).filter(|&c| c != start && rock_at[c].is_none()).collect();
    let chosen = pick_traps(&trap_cells, p.n_traps, p.trap_seed)?;
    let traps: Vec<usize> = chosen
        .iter()
        .flat_map(|&c| (0..masks).map(move |m| plain_id(c, m)))
        .collect();
    let metadata = DomainMetadata {
        kind: DomainKind::RockSampling,
        size: n,
        slip: p.slip,
        delta: None,
        seed: p.seed,
        trap_seed: p.trap_seed,
        goal_reachable: n_good > 0,
    };
    DomainInstance::from_believed(believed, &traps, metadata)
}
