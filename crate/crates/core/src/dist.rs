//! Probability vectors over finite index sets.

use crate::error::{Error, Result};

/// Tolerance on the sum of a probability vector.
pub const SUM_TOL: f64 = 1e-12;
/// Entries in `[NEG_TOL, 0)` are clamped to zero; anything below is rejected.
pub const NEG_TOL: f64 = -1e-15;

/// A probability vector: entries nonnegative after clamping, sum exactly 1
/// after renormalization. Construction rejects anything farther than
/// [`SUM_TOL`] from a valid distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(mut probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        for (i, p) in probs.iter_mut().enumerate() {
            if !p.is_finite() {
                return Err(Error::InvalidDistribution(format!(
                    "non-finite entry {} at index {}",
                    p, i
                )));
            }
            if *p < 0.0 {
                if *p >= NEG_TOL {
                    *p = 0.0;
                } else {
                    return Err(Error::InvalidDistribution(format!(
                        "negative entry {} at index {}",
                        p, i
                    )));
                }
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidDistribution(format!(
                "sum {} deviates from 1 by more than {}",
                sum, SUM_TOL
            )));
        }
        for p in probs.iter_mut() {
            *p /= sum;
        }
        Ok(Distribution { probs })
    }

    pub fn uniform(n: usize) -> Self {
        Distribution {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn point_mass(n: usize, at: usize) -> Result<Self> {
        if at >= n {
            return Err(Error::IndexOutOfRange(format!(
                "point mass at {} in support of size {}",
                at, n
            )));
        }
        let mut probs = vec![0.0; n];
        probs[at] = 1.0;
        Ok(Distribution { probs })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.probs[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Inverse-CDF sample of an index given a uniform draw.
    pub fn sample_index(&self, xi: f64) -> usize {
        inverse_cdf_index(&self.probs, xi)
    }
}

/// Index of the interval partition of `[0, 1]` that `xi` falls in, where
/// interval `i` has length `probs[i]` and intervals are laid out in index
/// order, closed on the right. Zero-probability entries own no interval, so
/// `xi = 0` maps to the first index with positive mass. A draw beyond the
/// accumulated total (possible when the row undershoots 1 by rounding)
/// falls through to the last positive entry.
pub fn inverse_cdf_index(probs: &[f64], xi: f64) -> usize {
    debug_assert!(!probs.is_empty());
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            cum += p;
            last_positive = i;
            if xi <= cum {
                return i;
            }
        }
    }
    last_positive
}
