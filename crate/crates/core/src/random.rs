//! Random desk-scale instances for diagnostics and property tests.
//!
//! An instance is a level-1 agent with one neighbor. The neighbor's candidate
//! models share a random level-0 frame; candidate 0 has a random belief and
//! the remaining candidates are successors of earlier ones, so the model
//! transition indicator is exercised.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::belief::{Belief, StateSpace};
use crate::domains::spectrum::{log_grid, SpectrumConfig};
use crate::error::{Error, Result};
use crate::frame::{NetFrame, PomdpFrame};
use crate::ipomdp::{InteractiveFrame, InteractiveStateSpace, ModelFrame, ModelSet, ObsKernel};
use crate::net::{MessageKind, NetModel};
use crate::value::{Domain, MessageKey};

/// Sizes of a random instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceShape {
    pub states: usize,
    pub actions: usize,
    pub observations: usize,
    pub neighbor_actions: usize,
    pub neighbor_observations: usize,
    pub models: usize,
    pub discount: f64,
}

impl Default for InstanceShape {
    fn default() -> Self {
        Self {
            states: 2,
            actions: 2,
            observations: 2,
            neighbor_actions: 2,
            neighbor_observations: 2,
            models: 2,
            discount: 0.9,
        }
    }
}

/// `rows` random distributions of width `width`, row-major.
pub fn stochastic_rows(rng: &mut impl Rng, rows: usize, width: usize) -> Vec<f64> {
    (0..rows).flat_map(|_| random_distribution(rng, width)).collect()
}

pub fn random_distribution(rng: &mut impl Rng, width: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..width).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

pub fn random_belief(rng: &mut impl Rng, width: usize) -> Belief {
    Belief::new(random_distribution(rng, width)).expect("normalized weights form a belief")
}

fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

/// Uniform over a random nonempty subset of actions.
fn random_policy(rng: &mut impl Rng, actions: usize) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..actions).collect();
    idx.shuffle(rng);
    let k = rng.gen_range(1..=actions);
    let mut d = vec![0.0; actions];
    for a in &idx[..k] {
        d[*a] = 1.0 / k as f64;
    }
    d
}

/// A random level-0 frame for the neighbor.
pub fn random_pomdp(rng: &mut impl Rng, states: usize, actions: usize, observations: usize, discount: f64) -> Result<PomdpFrame> {
    PomdpFrame::new(
        states,
        labels(actions),
        labels(observations),
        stochastic_rows(rng, states * actions, states),
        stochastic_rows(rng, states * actions, observations),
        (0..states * actions).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        discount,
    )
}

/// Candidate beliefs: one random seed followed by successors of earlier
/// candidates under random actions and observations.
pub fn random_candidates(rng: &mut impl Rng, frame: &PomdpFrame, count: usize) -> Vec<Belief> {
    let mut out = vec![random_belief(rng, frame.num_states())];
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        let from = out[rng.gen_range(0..out.len())].clone();
        let a = rng.gen_range(0..frame.num_actions());
        let o = rng.gen_range(0..frame.num_observations());
        let next = crate::pomdp::se_pomdp(&from, a, o, frame).unwrap_or_else(|_| random_belief(rng, frame.num_states()));
        let next = if out.iter().any(|b| b.key() == next.key()) || attempts > 50 {
            random_belief(rng, frame.num_states())
        } else {
            next
        };
        if out.iter().all(|b| b.key() != next.key()) {
            out.push(next);
        }
    }
    out
}

/// A random level-1 agent with one neighbor.
pub fn random_instance(rng: &mut impl Rng, shape: &InstanceShape) -> Result<InteractiveFrame> {
    let s = shape;
    let neighbor = Arc::new(random_pomdp(rng, s.states, s.neighbor_actions, s.neighbor_observations, s.discount)?);
    let beliefs = random_candidates(rng, &neighbor, s.models);
    let policies = (0..beliefs.len()).map(|_| random_policy(rng, s.neighbor_actions)).collect();
    let models = Arc::new(ModelSet::with_policies(ModelFrame::Pomdp(neighbor), beliefs, policies)?);
    let space = InteractiveStateSpace::product(StateSpace::indexed(s.states)?, vec![models]);
    let rows = s.states * s.actions * s.neighbor_actions;
    let frame = NetFrame::new(
        s.states,
        labels(s.actions),
        labels(s.observations),
        vec![s.neighbor_actions],
        stochastic_rows(rng, rows, s.states),
        stochastic_rows(rng, rows, s.observations),
        (0..rows).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        s.discount,
    )?;
    let kernel = ObsKernel::new(s.neighbor_observations, stochastic_rows(rng, rows, s.neighbor_observations));
    InteractiveFrame::new(frame, space, vec![kernel])
}

/// A random message key for `frame` under `kind`.
pub fn random_message(rng: &mut impl Rng, frame: &InteractiveFrame, kind: MessageKind) -> MessageKey {
    MessageKey(
        frame
            .space()
            .models()
            .iter()
            .map(|m| {
                let n = match kind {
                    MessageKind::Action => m.num_actions(),
                    MessageKind::Observation => m.num_observations(),
                    MessageKind::Belief => m.len(),
                };
                rng.gen_range(0..n) as u32
            })
            .collect(),
    )
}

/// Closure of a few random (belief, message) points.
pub fn random_domain(
    rng: &mut impl Rng,
    frame: &InteractiveFrame,
    kind: MessageKind,
    seeds: usize,
    depth: usize,
) -> Result<Domain> {
    if seeds == 0 {
        return Err(Error::InvalidConfig("random domain needs at least one seed".into()));
    }
    let points: Vec<_> = (0..seeds)
        .map(|_| (random_belief(rng, frame.space().len()), random_message(rng, frame, kind)))
        .collect();
    Domain::closure(&NetModel::new(frame, kind), &points, depth)
}

/// A static-channel spectrum configuration with random gains on a complete
/// backhaul, rates in bit/s per Hz of a unit bandwidth.
pub fn random_spectrum(rng: &mut impl Rng, stations: usize) -> SpectrumConfig {
    let gains = (0..stations)
        .map(|j| {
            (0..stations)
                .map(|i| if i == j { rng.gen_range(0.5..2.0) } else { rng.gen_range(0.01..0.5) })
                .collect()
        })
        .collect();
    SpectrumConfig {
        stations,
        bandwidth: 1.0,
        power: rng.gen_range(0.5..2.0),
        noise: rng.gen_range(0.05..0.5),
        gains,
        averaging: rng.gen_range(1.5..20.0),
        grid: log_grid(0.01, 10.0, 8),
        edges: (0..stations).flat_map(|i| (i + 1..stations).map(move |j| (i, j))).collect(),
        fading: None,
        grid_error_bound: f64::INFINITY,
        initial_rate: 0,
    }
}

/// `slots` random on/off action vectors for `stations` stations.
pub fn random_schedule(rng: &mut impl Rng, stations: usize, slots: usize) -> Vec<Vec<usize>> {
    (0..slots)
        .map(|_| (0..stations).map(|_| usize::from(rng.gen_bool(0.5))).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn instances_are_valid_and_reproducible() {
        let a = random_instance(&mut ChaCha8Rng::seed_from_u64(3), &InstanceShape::default()).unwrap();
        let b = random_instance(&mut ChaCha8Rng::seed_from_u64(3), &InstanceShape::default()).unwrap();
        assert!(a.violations().is_empty());
        assert_eq!(a.frame(), b.frame());
        assert_eq!(a.space().len(), 4);
    }

    #[test]
    fn candidates_are_distinct() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = random_pomdp(&mut rng, 2, 2, 2, 0.9).unwrap();
        let c = random_candidates(&mut rng, &f, 5);
        assert_eq!(c.len(), 5);
        for i in 0..5 {
            for j in i + 1..5 {
                assert_ne!(c[i].key(), c[j].key());
            }
        }
    }
}
