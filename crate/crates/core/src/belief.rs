//! Probability vectors over finite state sets and their canonical keys.
//!
//! Beliefs are compared and tabulated through [`BeliefKey`], which rounds every
//! coordinate to [`KEY_DIGITS`] fractional digits. Two beliefs are "equal" for
//! value-table lookups and for the model-transition indicator exactly when
//! their keys match.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a valid distribution.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Fractional digits kept by [`BeliefKey`].
pub const KEY_DIGITS: i32 = 12;

/// Below this pre-normalization mass an observation is treated as impossible.
pub const IMPOSSIBLE_MASS: f64 = 1e-12;

/// A finite, labelled set of physical states.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSpace {
    labels: Vec<String>,
}

impl StateSpace {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidFrame("state space must not be empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::InvalidFrame(format!("duplicate state label {l:?}")));
            }
        }
        Ok(Self { labels })
    }

    /// States labelled `s0`, `s1`, ...
    pub fn indexed(size: usize) -> Result<Self> {
        Self::new((0..size).map(|i| format!("s{i}")).collect())
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// A probability distribution over an enumerated support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    mass: Vec<f64>,
}

impl Belief {
    /// Validates nonnegativity and unit total mass (within [`MASS_TOLERANCE`]).
    pub fn new(mass: Vec<f64>) -> Result<Self> {
        if mass.is_empty() {
            return Err(Error::InvalidBelief("empty support".into()));
        }
        if let Some(p) = mass.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidBelief(format!("entry {p} is negative or not finite")));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidBelief(format!("mass sums to {total}")));
        }
        Ok(Self { mass })
    }

    /// Normalizes nonnegative weights; fails with `ImpossibleObservation` when
    /// the total is below [`IMPOSSIBLE_MASS`].
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total >= IMPOSSIBLE_MASS) {
            return Err(Error::ImpossibleObservation { mass: total });
        }
        Ok(Self {
            mass: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn uniform(size: usize) -> Self {
        Self {
            mass: vec![1.0 / size as f64; size],
        }
    }

    pub fn point(size: usize, index: usize) -> Self {
        let mut mass = vec![0.0; size];
        mass[index] = 1.0;
        Self { mass }
    }

    pub fn support_size(&self) -> usize {
        self.mass.len()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn get(&self, i: usize) -> f64 {
        self.mass[i]
    }

    pub fn key(&self) -> BeliefKey {
        BeliefKey::of(&self.mass)
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .mass
            .iter()
            .filter(|p| **p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>()
    }

    pub fn total_variation(&self, other: &Belief) -> f64 {
        total_variation(&self.mass, &other.mass)
    }
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Coordinates rounded to [`KEY_DIGITS`] fractional digits, as integers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BeliefKey(pub Vec<i64>);

impl BeliefKey {
    pub fn of(mass: &[f64]) -> Self {
        let scale = 10f64.powi(KEY_DIGITS);
        BeliefKey(mass.iter().map(|p| (p * scale).round() as i64).collect())
    }

    /// L1 distance between the rounded coordinates, in probability units.
    pub fn l1_distance(&self, other: &BeliefKey) -> f64 {
        let scale = 10f64.powi(KEY_DIGITS);
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).unsigned_abs() as f64)
            .sum::<f64>()
            / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_mass() {
        assert!(Belief::new(vec![0.5, 0.4]).is_err());
        assert!(Belief::new(vec![1.1, -0.1]).is_err());
        assert!(Belief::new(vec![]).is_err());
        assert!(Belief::new(vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn normalization_of_null_mass_is_impossible() {
        let err = Belief::normalized(vec![0.0, 1e-13]).unwrap_err();
        assert!(matches!(err, Error::ImpossibleObservation { .. }));
    }

    #[test]
    fn keys_round_to_twelve_digits() {
        let a = BeliefKey::of(&[0.5, 0.5]);
        let b = BeliefKey::of(&[0.5 + 1e-14, 0.5 - 1e-14]);
        assert_eq!(a, b);
        let c = BeliefKey::of(&[0.5 + 1e-11, 0.5 - 1e-11]);
        assert_ne!(a, c);
    }

    #[test]
    fn entropy_of_uniform_pair_is_ln2() {
        assert!((Belief::uniform(2).entropy() - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(Belief::point(3, 1).entropy(), 0.0);
    }

    #[test]
    fn state_space_rejects_duplicates() {
        assert!(StateSpace::new(vec!["a".into(), "a".into()]).is_err());
        assert!(StateSpace::new(vec![]).is_err());
        assert_eq!(StateSpace::indexed(3).unwrap().size(), 3);
    }
}
