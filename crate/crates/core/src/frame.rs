//! Stochastic tensors of single-agent and networked frames.
//!
//! All tensors are stored flat in row-major order. A [`PomdpFrame`] indexes
//! transitions as `(s, a, s')`, observations as `(s', a, o)` and rewards as
//! `(s, a)`. A [`NetFrame`] inserts the joint neighbor action `n` after the
//! agent's own action: `(s, a, n, s')`, `(s', a, n, o)` and `(s, a, n)`.
//! The joint neighbor action is a mixed-radix index over the neighbors in
//! order, first neighbor most significant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-sum tolerance for stochastic slices.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-9;

fn check_discount(discount: f64, out: &mut Vec<String>) {
    if !(discount > 0.0 && discount < 1.0) {
        out.push(format!("discount {discount} is outside (0, 1)"));
    }
}

fn check_rows(name: &str, data: &[f64], row_len: usize, label: impl Fn(usize) -> String, out: &mut Vec<String>) {
    for (r, row) in data.chunks(row_len).enumerate() {
        if let Some(x) = row.iter().find(|x| !x.is_finite() || **x < 0.0) {
            out.push(format!("{name}[{}] has invalid entry {x}", label(r)));
            continue;
        }
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > STOCHASTIC_TOLERANCE {
            out.push(format!("{name}[{}] sums to {total}", label(r)));
        }
    }
}

/// A single-agent frame: actions, observations, transition, observation and
/// reward tensors, and the discount of the infinite-horizon criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PomdpFrame {
    num_states: usize,
    actions: Vec<String>,
    observations: Vec<String>,
    transition: Vec<f64>,
    observation: Vec<f64>,
    reward: Vec<f64>,
    discount: f64,
}

impl PomdpFrame {
    pub fn new(
        num_states: usize,
        actions: Vec<String>,
        observations: Vec<String>,
        transition: Vec<f64>,
        observation: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        let frame = Self {
            num_states,
            actions,
            observations,
            transition,
            observation,
            reward,
            discount,
        };
        let violations = frame.violations();
        if violations.is_empty() {
            Ok(frame)
        } else {
            Err(Error::InvalidFrame(violations.join("; ")))
        }
    }

    /// Every broken invariant, one human-readable line each.
    pub fn violations(&self) -> Vec<String> {
        let (ns, na, no) = (self.num_states, self.actions.len(), self.observations.len());
        let mut out = Vec::new();
        if ns == 0 || na == 0 || no == 0 {
            out.push(format!("empty space: {ns} states, {na} actions, {no} observations"));
            return out;
        }
        if self.transition.len() != ns * na * ns {
            out.push(format!("transition has {} entries, expected {}", self.transition.len(), ns * na * ns));
        }
        if self.observation.len() != ns * na * no {
            out.push(format!("observation has {} entries, expected {}", self.observation.len(), ns * na * no));
        }
        if self.reward.len() != ns * na {
            out.push(format!("reward has {} entries, expected {}", self.reward.len(), ns * na));
        }
        if !out.is_empty() {
            return out;
        }
        check_rows("transition", &self.transition, ns, |r| format!("s={}, a={}", r / na, r % na), &mut out);
        check_rows("observation", &self.observation, no, |r| format!("s'={}, a={}", r / na, r % na), &mut out);
        if let Some(x) = self.reward.iter().find(|x| !x.is_finite()) {
            out.push(format!("reward has non-finite entry {x}"));
        }
        check_discount(self.discount, &mut out);
        out
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }
    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }
    pub fn num_observations(&self) -> usize {
        self.observations.len()
    }
    pub fn actions(&self) -> &[String] {
        &self.actions
    }
    pub fn observations(&self) -> &[String] {
        &self.observations
    }
    pub fn discount(&self) -> f64 {
        self.discount
    }

    #[inline]
    pub fn t(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.transition[(s * self.actions.len() + a) * self.num_states + s2]
    }

    #[inline]
    pub fn o(&self, s2: usize, a: usize, o: usize) -> f64 {
        self.observation[(s2 * self.actions.len() + a) * self.observations.len() + o]
    }

    #[inline]
    pub fn r(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.actions.len() + a]
    }

    /// Same frame with every reward mapped through `f`.
    pub fn map_rewards(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            reward: self.reward.iter().map(|r| f(*r)).collect(),
            ..self.clone()
        }
    }

    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        let mut f = self.clone();
        f.discount = discount;
        let v = f.violations();
        if v.is_empty() {
            Ok(f)
        } else {
            Err(Error::InvalidFrame(v.join("; ")))
        }
    }
}

/// The frame of an agent embedded in a communication graph: its dynamics,
/// observations and rewards depend on its own action and on the joint action
/// of its neighbors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetFrame {
    num_states: usize,
    actions: Vec<String>,
    observations: Vec<String>,
    neighbor_actions: Vec<usize>,
    transition: Vec<f64>,
    observation: Vec<f64>,
    reward: Vec<f64>,
    discount: f64,
}

impl NetFrame {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        num_states: usize,
        actions: Vec<String>,
        observations: Vec<String>,
        neighbor_actions: Vec<usize>,
        transition: Vec<f64>,
        observation: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        let frame = Self {
            num_states,
            actions,
            observations,
            neighbor_actions,
            transition,
            observation,
            reward,
            discount,
        };
        let violations = frame.violations();
        if violations.is_empty() {
            Ok(frame)
        } else {
            Err(Error::InvalidFrame(violations.join("; ")))
        }
    }

    /// A frame without neighbors, wrapping a single-agent frame.
    pub fn from_pomdp(f: &PomdpFrame) -> Self {
        Self {
            num_states: f.num_states,
            actions: f.actions.clone(),
            observations: f.observations.clone(),
            neighbor_actions: Vec::new(),
            transition: f.transition.clone(),
            observation: f.observation.clone(),
            reward: f.reward.clone(),
            discount: f.discount,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let (ns, na, no) = (self.num_states, self.actions.len(), self.observations.len());
        let nn = self.joint_neighbor_actions();
        let mut out = Vec::new();
        if ns == 0 || na == 0 || no == 0 || nn == 0 {
            out.push(format!(
                "empty space: {ns} states, {na} actions, {no} observations, {nn} joint neighbor actions"
            ));
            return out;
        }
        if self.transition.len() != ns * na * nn * ns {
            out.push(format!(
                "transition has {} entries, expected {}",
                self.transition.len(),
                ns * na * nn * ns
            ));
        }
        if self.observation.len() != ns * na * nn * no {
            out.push(format!(
                "observation has {} entries, expected {}",
                self.observation.len(),
                ns * na * nn * no
            ));
        }
        if self.reward.len() != ns * na * nn {
            out.push(format!("reward has {} entries, expected {}", self.reward.len(), ns * na * nn));
        }
        if !out.is_empty() {
            return out;
        }
        let label = |r: usize| format!("s={}, a={}, n={}", r / (na * nn), (r / nn) % na, r % nn);
        check_rows("transition", &self.transition, ns, label, &mut out);
        let label = |r: usize| format!("s'={}, a={}, n={}", r / (na * nn), (r / nn) % na, r % nn);
        check_rows("observation", &self.observation, no, label, &mut out);
        if let Some(x) = self.reward.iter().find(|x| !x.is_finite()) {
            out.push(format!("reward has non-finite entry {x}"));
        }
        check_discount(self.discount, &mut out);
        out
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }
    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }
    pub fn num_observations(&self) -> usize {
        self.observations.len()
    }
    pub fn actions(&self) -> &[String] {
        &self.actions
    }
    pub fn observations(&self) -> &[String] {
        &self.observations
    }
    pub fn neighbor_actions(&self) -> &[usize] {
        &self.neighbor_actions
    }
    pub fn num_neighbors(&self) -> usize {
        self.neighbor_actions.len()
    }
    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// Number of joint neighbor actions (1 when there are no neighbors).
    pub fn joint_neighbor_actions(&self) -> usize {
        self.neighbor_actions.iter().product()
    }

    /// Splits a joint neighbor action index into per-neighbor actions.
    pub fn split_joint(&self, mut n: usize) -> Vec<usize> {
        let mut out = vec![0; self.neighbor_actions.len()];
        for (k, radix) in self.neighbor_actions.iter().enumerate().rev() {
            out[k] = n % radix;
            n /= radix;
        }
        out
    }

    pub fn join_actions(&self, actions: &[usize]) -> usize {
        actions
            .iter()
            .zip(&self.neighbor_actions)
            .fold(0, |acc, (a, radix)| acc * radix + a)
    }

    #[inline]
    pub fn t(&self, s: usize, a: usize, n: usize, s2: usize) -> f64 {
        let nn = self.joint_neighbor_actions();
        self.transition[((s * self.actions.len() + a) * nn + n) * self.num_states + s2]
    }

    #[inline]
    pub fn o(&self, s2: usize, a: usize, n: usize, o: usize) -> f64 {
        let nn = self.joint_neighbor_actions();
        self.observation[((s2 * self.actions.len() + a) * nn + n) * self.observations.len() + o]
    }

    #[inline]
    pub fn r(&self, s: usize, a: usize, n: usize) -> f64 {
        let nn = self.joint_neighbor_actions();
        self.reward[(s * self.actions.len() + a) * nn + n]
    }

    pub fn map_rewards(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            reward: self.reward.iter().map(|r| f(*r)).collect(),
            ..self.clone()
        }
    }

    /// Single-agent frame obtained by averaging transition, observation and
    /// reward slices over a fixed distribution of joint neighbor actions.
    pub fn marginalize_neighbors(&self, joint_dist: &[f64]) -> Result<PomdpFrame> {
        let nn = self.joint_neighbor_actions();
        if joint_dist.len() != nn {
            return Err(Error::InvalidFrame(format!(
                "neighbor action distribution has {} entries, expected {nn}",
                joint_dist.len()
            )));
        }
        let (ns, na, no) = (self.num_states, self.actions.len(), self.observations.len());
        let mut transition = vec![0.0; ns * na * ns];
        let mut observation = vec![0.0; ns * na * no];
        let mut reward = vec![0.0; ns * na];
        for s in 0..ns {
            for a in 0..na {
                for (n, p) in joint_dist.iter().enumerate() {
                    reward[s * na + a] += p * self.r(s, a, n);
                    for s2 in 0..ns {
                        transition[(s * na + a) * ns + s2] += p * self.t(s, a, n, s2);
                    }
                    for o in 0..no {
                        observation[(s * na + a) * no + o] += p * self.o(s, a, n, o);
                    }
                }
            }
        }
        PomdpFrame::new(
            ns,
            self.actions.clone(),
            self.observations.clone(),
            transition,
            observation,
            reward,
            self.discount,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize, p: &str) -> Vec<String> {
        (0..n).map(|i| format!("{p}{i}")).collect()
    }

    #[test]
    fn names_the_broken_slice() {
        let err = PomdpFrame::new(
            2,
            labels(1, "a"),
            labels(1, "o"),
            vec![0.5, 0.4, 0.0, 1.0],
            vec![1.0, 1.0],
            vec![0.0, 0.0],
            0.9,
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("transition[s=0, a=0] sums to 0.9"), "{msg}");
    }

    #[test]
    fn rejects_discount_one() {
        let f = PomdpFrame::new(1, labels(1, "a"), labels(1, "o"), vec![1.0], vec![1.0], vec![1.0], 1.0);
        assert!(f.is_err());
    }

    #[test]
    fn joint_index_round_trip() {
        let f = NetFrame::new(
            1,
            labels(1, "a"),
            labels(1, "o"),
            vec![2, 3],
            vec![1.0; 6],
            vec![1.0; 6],
            vec![0.0; 6],
            0.5,
        )
        .unwrap();
        for n in 0..6 {
            assert_eq!(f.join_actions(&f.split_joint(n)), n);
        }
        assert_eq!(f.split_joint(5), vec![1, 2]);
    }

    #[test]
    fn marginalizing_point_mass_selects_slice() {
        // transition depends on the neighbor action: n=0 stays, n=1 flips.
        let f = NetFrame::new(
            2,
            labels(1, "a"),
            labels(1, "o"),
            vec![2],
            vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0],
            vec![1.0; 4],
            vec![1.0, 2.0, 3.0, 4.0],
            0.5,
        )
        .unwrap();
        let p = f.marginalize_neighbors(&[0.0, 1.0]).unwrap();
        assert_eq!(p.t(0, 0, 1), 1.0);
        assert_eq!(p.r(1, 0), 4.0);
    }
}
