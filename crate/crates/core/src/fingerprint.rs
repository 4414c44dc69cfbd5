//! Content hash identifying a (believed model, trap set) pair, used to reject
//! defender policies applied to the wrong instance.

use core::fmt;

use sha2::{Digest, Sha256};

use crate::mdp::TabularMdp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fingerprint(pub [u8; 32]);

impl Fingerprint {
    pub fn of(mdp: &TabularMdp, traps: &[usize]) -> Self {
        let mut h = Sha256::new();
        let mut word = |x: u64| h.update(x.to_le_bytes());
        word(mdp.n_states() as u64);
        word(mdp.n_actions() as u64);
        word(mdp.gamma().to_bits());
        word(mdp.initial_state() as u64);
        for s in 0..mdp.n_states() {
            word(mdp.reward(s).to_bits());
            word(mdp.is_terminal(s) as u64);
        }
        for (s, a, n, p) in mdp.transitions() {
            word(s as u64);
            word(a as u64);
            word(n as u64);
            word(p.to_bits());
        }
        word(u64::MAX);
        let mut sorted: alloc::vec::Vec<usize> = traps.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        for t in sorted {
            word(t as u64);
        }
        for label in mdp.state_labels().iter().chain(mdp.action_labels()) {
            h.update(label.as_bytes());
            h.update([0u8]);
        }
        Fingerprint(h.finalize().into())
    }

    pub fn to_hex(&self) -> alloc::string::String {
        use fmt::Write;
        let mut out = alloc::string::String::with_capacity(64);
        for b in self.0 {
            let _ = write!(out, "{b:02x}");
        }
        out
    }

    pub fn from_hex(text: &str) -> Option<Self> {
        if text.len() != 64 || !text.is_ascii() {
            return None;
        }
        let mut out = [0u8; 32];
        for (i, chunk) in text.as_bytes().chunks(2).enumerate() {
            let pair = core::str::from_utf8(chunk).ok()?;
            out[i] = u8::from_str_radix(pair, 16).ok()?;
        }
        Some(Fingerprint(out))
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}
