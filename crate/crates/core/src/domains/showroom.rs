//! A hand-authored showroom: a hall with two wings leading to a gallery that
//! holds a diamond, plus two grey trap rooms.
//!
//! Doors open with uniform probability among those a move could use:
//!
//! - hall `east`: D1 to the upper wing or D3 to the service corridor;
//! - hall `south`: D2 to the lower wing or D3;
//! - upper wing `east`: D4 to the gallery or D5 to the lower wing;
//! - lower wing `east`: D10 to the gallery or D11 into trap room B.
//!
//! The service corridor leads only into trap room A.

use alloc::string::String;
use alloc::vec::Vec;

use super::{DomainInstance, DomainKind, DomainMetadata};
use crate::mdp::MdpBuilder;

pub const ENTRANCE: usize = 0;
pub const HALL: usize = 1;
pub const CORRIDOR: usize = 2;
pub const UPPER: usize = 3;
pub const LOWER: usize = 4;
pub const GALLERY: usize = 5;
pub const DIAMOND: usize = 6;
pub const TRAP_A: usize = 7;
pub const TRAP_B: usize = 8;

const STATES: [&str; 9] = [
    "entrance", "hall", "corridor", "upper-wing", "lower-wing", "gallery", "diamond", "trap-a", "trap-b",
];
const ACTIONS: [&str; 6] = ["enter", "east", "south", "follow", "back", "steal"];
const ENTER: usize = 0;
const EAST: usize = 1;
const SOUTH: usize = 2;
const FOLLOW: usize = 3;
const BACK: usize = 4;
const STEAL: usize = 5;

pub const SHOWROOM_GAMMA: f64 = 0.95;

pub fn showroom_demo() -> DomainInstance {
    let labels = |xs: &[&str]| xs.iter().map(|s| String::from(*s)).collect::<Vec<_>>();
    let mut b = MdpBuilder::new(labels(&STATES), labels(&ACTIONS));
    b.add_transition(ENTRANCE, ENTER, HALL, 1.0)
        .add_transition(HALL, EAST, UPPER, 0.5)
        .add_transition(HALL, EAST, CORRIDOR, 0.5)
        .add_transition(HALL, SOUTH, LOWER, 0.5)
        .add_transition(HALL, SOUTH, CORRIDOR, 0.5)
        .add_transition(CORRIDOR, FOLLOW, TRAP_A, 1.0)
        .add_transition(UPPER, EAST, GALLERY, 0.5)
        .add_transition(UPPER, EAST, LOWER, 0.5)
        .add_transition(UPPER, BACK, HALL, 1.0)
        .add_transition(LOWER, EAST, GALLERY, 0.5)
        .add_transition(LOWER, EAST, TRAP_B, 0.5)
        .add_transition(LOWER, BACK, HALL, 1.0)
        .add_transition(GALLERY, STEAL, DIAMOND, 1.0)
        .add_transition(GALLERY, BACK, UPPER, 0.5)
        .add_transition(GALLERY, BACK, LOWER, 0.5)
        .add_transition(TRAP_A, BACK, HALL, 1.0)
        .add_transition(TRAP_B, BACK, LOWER, 1.0)
        .set_reward(DIAMOND, 1.0)
        .set_terminal(DIAMOND, true)
        .gamma(SHOWROOM_GAMMA)
        .initial(ENTRANCE);
    let believed = b.build().expect("showroom map is well formed");
    DomainInstance::from_believed(believed, &[TRAP_A, TRAP_B], DomainMetadata::new(DomainKind::Showroom))
        .expect("showroom traps are valid")
}
