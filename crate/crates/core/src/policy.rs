//! Softmax (Boltzmann) action distributions and per-state stochastic policies.

use alloc::vec::Vec;

use thiserror::Error;

use crate::mdp::TabularMdp;
use crate::solve::{QFunction, ARGMAX_TIE_TOLERANCE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("softmax over an empty row")]
    EmptyRow,
    #[error("rationality parameter must be >= 0, got {0}")]
    InvalidKappa(f64),
    #[error("non-finite value {0} in softmax row")]
    NonFinite(f64),
}

/// `p_i = exp(kappa q_i) / sum_j exp(kappa q_j)`, evaluated after subtracting
/// the row maximum. `kappa = +inf` yields the uniform distribution over the
/// maximizers.
pub fn softmax_distribution(q_row: &[f64], kappa: f64) -> Result<Vec<f64>, PolicyError> {
    if q_row.is_empty() {
        return Err(PolicyError::EmptyRow);
    }
    if kappa.is_nan() || kappa < 0.0 {
        return Err(PolicyError::InvalidKappa(kappa));
    }
    if let Some(&bad) = q_row.iter().find(|q| !q.is_finite()) {
        return Err(PolicyError::NonFinite(bad));
    }
    let max = q_row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = if kappa.is_infinite() {
        q_row
            .iter()
            .map(|&q| if q >= max - ARGMAX_TIE_TOLERANCE { 1.0 } else { 0.0 })
            .collect()
    } else {
        q_row.iter().map(|&q| libm::exp(kappa * (q - max))).collect()
    };
    let z: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / z).collect())
}

/// Per-state distribution over valid actions, stored as `(action, prob)` rows.
/// Terminal states have empty rows.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticPolicy {
    rows: Vec<Vec<(usize, f64)>>,
}

impl StochasticPolicy {
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        Self { rows }
    }

    pub fn uniform(mdp: &TabularMdp) -> Self {
        let rows = (0..mdp.n_states())
            .map(|s| {
                let actions = mdp.actions(s);
                let p = 1.0 / actions.len() as f64;
                actions.iter().map(|&a| (a, p)).collect()
            })
            .collect();
        Self { rows }
    }

    pub fn from_deterministic(actions: &[Option<usize>]) -> Self {
        let rows = actions
            .iter()
            .map(|a| a.map(|a| alloc::vec![(a, 1.0)]).unwrap_or_default())
            .collect();
        Self { rows }
    }

    /// Noisy-rational policy: softmax of each Q row with rationality `kappa`.
    pub fn softmax(q: &QFunction, kappa: f64) -> Result<Self, PolicyError> {
        let rows = (0..q.n_states())
            .map(|s| {
                let values = q.row_values(s);
                if values.is_empty() {
                    return Ok(Vec::new());
                }
                let probs = softmax_distribution(values, kappa)?;
                Ok(q.row(s).map(|(a, _)| a).zip(probs).collect())
            })
            .collect::<Result<_, PolicyError>>()?;
        Ok(Self { rows })
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, s: usize) -> &[(usize, f64)] {
        &self.rows[s]
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.rows[s]
            .iter()
            .find(|(act, _)| *act == a)
            .map_or(0.0, |(_, p)| *p)
    }

    /// Draws an action at `s`; `None` for an empty row.
    pub fn sample<R: rand::Rng + ?Sized>(&self, s: usize, rng: &mut R) -> Option<usize> {
        sample_index(&self.rows[s], rng)
    }
}

/// Inverse-CDF draw from `(item, prob)` pairs. Falls back to the last item
/// with positive mass when rounding leaves the cumulative sum below `u`.
pub(crate) fn sample_index<R: rand::Rng + ?Sized>(row: &[(usize, f64)], rng: &mut R) -> Option<usize> {
    match row {
        [] => None,
        [(only, _)] => Some(*only),
        _ => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for &(item, p) in row {
                acc += p;
                if u < acc {
                    return Some(item);
                }
            }
            row.iter().rev().find(|(_, p)| *p > 0.0).map(|(i, _)| *i)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn symmetric_row_is_uniform() {
        let p = softmax_distribution(&[5.0, 5.0, 5.0], 3.7).unwrap();
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_kappa_is_uniform() {
        let p = softmax_distribution(&[1.0, -4.0, 100.0, 0.5], 0.0).unwrap();
        assert!(p.iter().all(|&x| x == 0.25));
    }

    #[test]
    fn ln9_gives_nine_to_one() {
        let p = softmax_distribution(&[1.0, 0.0], libm::log(9.0)).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-12);
        assert!((p[1] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn infinite_kappa_splits_over_maximizers() {
        let p = softmax_distribution(&[1.0, 2.0, 2.0], f64::INFINITY).unwrap();
        assert_eq!(p, alloc::vec![0.0, 0.5, 0.5]);
    }

    #[test]
    fn large_values_do_not_overflow() {
        let p = softmax_distribution(&[1e6, 1e6 - 1.0], 1000.0).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[0] > 0.99);
    }

    #[test]
    fn errors() {
        assert_eq!(softmax_distribution(&[], 1.0), Err(PolicyError::EmptyRow));
        assert_eq!(
            softmax_distribution(&[1.0], -1.0),
            Err(PolicyError::InvalidKappa(-1.0))
        );
        assert!(matches!(
            softmax_distribution(&[f64::NAN], 1.0),
            Err(PolicyError::NonFinite(_))
        ));
    }

    proptest! {
        #[test]
        fn shift_invariant(
            q in proptest::collection::vec(-50.0f64..50.0, 1..8),
            shift in -100.0f64..100.0,
            kappa in 0.0f64..20.0,
        ) {
            let base = softmax_distribution(&q, kappa).unwrap();
            let shifted: Vec<f64> = q.iter().map(|x| x + shift).collect();
            let moved = softmax_distribution(&shifted, kappa).unwrap();
            prop_assert!((base.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (a, b) in base.iter().zip(&moved) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
