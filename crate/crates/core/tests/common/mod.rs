//! Brute-force oracles shared by the integration and acceptance tests.
//!
//! Instances are generated here from raw tensors, and every oracle works on
//! those tensors directly: the neighbor's belief update is plain Bayes, the
//! model transition indicator compares rounded beliefs, and the joint
//! update enumerates every (s, m, a_j, o_j, s', m') combination.

#![allow(dead_code, clippy::needless_range_loop)]

use std::sync::Arc;

use netpomdp_core::belief::{Belief, StateSpace};
use netpomdp_core::frame::{NetFrame, PomdpFrame};
use netpomdp_core::ipomdp::{InteractiveFrame, InteractiveStateSpace, ModelFrame, ModelSet, ObsKernel};
use rand::Rng;

pub fn distribution(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

fn rows(rng: &mut impl Rng, count: usize, width: usize) -> Vec<f64> {
    (0..count).flat_map(|_| distribution(rng, width)).collect()
}

/// Raw tensors of a level-1 agent with one level-0 neighbor.
#[derive(Debug, Clone)]
pub struct RawInstance {
    pub s: usize,
    pub a: usize,
    pub o: usize,
    pub aj: usize,
    pub oj: usize,
    /// `(s, a, a_j, s')`
    pub t: Vec<f64>,
    /// `(s', a, a_j, o)`
    pub obs: Vec<f64>,
    /// `(s, a, a_j)`
    pub r: Vec<f64>,
    /// Neighbor's own `(s, a_j, s')`, `(s', a_j, o_j)` and `(s, a_j)`.
    pub tj: Vec<f64>,
    pub oj_own: Vec<f64>,
    pub rj: Vec<f64>,
    /// `(s', a, a_j, o_j)`
    pub kernel: Vec<f64>,
    pub candidates: Vec<Vec<f64>>,
    pub policies: Vec<Vec<f64>>,
    pub discount: f64,
}

impl RawInstance {
    pub fn random(rng: &mut impl Rng, s: usize, a: usize, o: usize, aj: usize, oj: usize, models: usize) -> Self {
        let mut raw = RawInstance {
            s,
            a,
            o,
            aj,
            oj,
            t: rows(rng, s * a * aj, s),
            obs: rows(rng, s * a * aj, o),
            r: (0..s * a * aj).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            tj: rows(rng, s * aj, s),
            oj_own: rows(rng, s * aj, oj),
            rj: (0..s * aj).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            kernel: rows(rng, s * a * aj, oj),
            candidates: vec![distribution(rng, s)],
            policies: Vec::new(),
            discount: 0.9,
        };
        // Later candidates are Bayes successors of earlier ones, so the model
        // transition indicator fires.
        while raw.candidates.len() < models {
            let from = rng.gen_range(0..raw.candidates.len());
            let next = raw
                .bayes_j(&raw.candidates[from].clone(), rng.gen_range(0..aj), rng.gen_range(0..oj))
                .unwrap_or_else(|| distribution(rng, s));
            let key = round_key(&next);
            if raw.candidates.iter().all(|c| round_key(c) != key) {
                raw.candidates.push(next);
            } else {
                raw.candidates.push(distribution(rng, s));
            }
        }
        raw.policies = (0..models).map(|_| distribution(rng, aj)).collect();
        raw
    }

    pub fn t_i(&self, s: usize, a: usize, aj: usize, s2: usize) -> f64 {
        self.t[((s * self.a + a) * self.aj + aj) * self.s + s2]
    }

    pub fn o_i(&self, s2: usize, a: usize, aj: usize, o: usize) -> f64 {
        self.obs[((s2 * self.a + a) * self.aj + aj) * self.o + o]
    }

    pub fn r_i(&self, s: usize, a: usize, aj: usize) -> f64 {
        self.r[(s * self.a + a) * self.aj + aj]
    }

    pub fn k(&self, s2: usize, a: usize, aj: usize, oj: usize) -> f64 {
        self.kernel[((s2 * self.a + a) * self.aj + aj) * self.oj + oj]
    }

    /// The neighbor's own Bayes update; `None` when the observation is
    /// impossible.
    pub fn bayes_j(&self, b: &[f64], aj: usize, oj: usize) -> Option<Vec<f64>> {
        let mut post = vec![0.0; self.s];
        for (s2, p) in post.iter_mut().enumerate() {
            let pred: f64 = (0..self.s).map(|s| b[s] * self.tj[(s * self.aj + aj) * self.s + s2]).sum();
            *p = self.oj_own[(s2 * self.aj + aj) * self.oj + oj] * pred;
        }
        let total: f64 = post.iter().sum();
        (total > 1e-12).then(|| post.iter().map(|x| x / total).collect())
    }

    /// 1 when the neighbor's update of candidate `m` lands on candidate `m2`.
    pub fn tau(&self, m: usize, aj: usize, oj: usize, m2: usize) -> f64 {
        match self.bayes_j(&self.candidates[m], aj, oj) {
            Some(b) if round_key(&b) == round_key(&self.candidates[m2]) => 1.0,
            _ => 0.0,
        }
    }

    pub fn frame(&self) -> InteractiveFrame {
        let labels = |n: usize| (0..n).map(|i| i.to_string()).collect::<Vec<_>>();
        let neighbor = PomdpFrame::new(
            self.s,
            labels(self.aj),
            labels(self.oj),
            self.tj.clone(),
            self.oj_own.clone(),
            self.rj.clone(),
            self.discount,
        )
        .unwrap();
        let beliefs = self.candidates.iter().map(|c| Belief::new(c.clone()).unwrap()).collect();
        let models = ModelSet::with_policies(ModelFrame::Pomdp(Arc::new(neighbor)), beliefs, self.policies.clone()).unwrap();
        let space = InteractiveStateSpace::product(StateSpace::indexed(self.s).unwrap(), vec![Arc::new(models)]);
        let frame = NetFrame::new(
            self.s,
            labels(self.a),
            labels(self.o),
            vec![self.aj],
            self.t.clone(),
            self.obs.clone(),
            self.r.clone(),
            self.discount,
        )
        .unwrap();
        InteractiveFrame::new(frame, space, vec![ObsKernel::new(self.oj, self.kernel.clone())]).unwrap()
    }
}

pub fn round_key(b: &[f64]) -> Vec<i64> {
    b.iter().map(|x| (x * 1e12).round() as i64).collect()
}

/// What the oracle is told about the neighbor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Told {
    Nothing,
    Action(usize),
    Observation(usize),
    Model(usize),
}

/// Joint-enumeration update. `b[s][m]` is the prior; the result has the same
/// shape, or `None` when every term vanishes.
pub fn joint_update(raw: &RawInstance, b: &[Vec<f64>], a: usize, o: usize, told: Told) -> Option<Vec<Vec<f64>>> {
    let nm = raw.candidates.len();
    let mut post = vec![vec![0.0; nm]; raw.s];
    for s in 0..raw.s {
        for m in 0..nm {
            if b[s][m] == 0.0 {
                continue;
            }
            for aj in 0..raw.aj {
                let act = match told {
                    Told::Action(shown) => f64::from(u8::from(aj == shown)),
                    _ => raw.policies[m][aj],
                };
                if act == 0.0 {
                    continue;
                }
                for s2 in 0..raw.s {
                    let base = b[s][m] * act * raw.t_i(s, a, aj, s2) * raw.o_i(s2, a, aj, o);
                    for m2 in 0..nm {
                        let nu = match told {
                            Told::Model(c) => f64::from(u8::from(m2 == c)),
                            Told::Observation(oj) => raw.k(s2, a, aj, oj) * raw.tau(m, aj, oj, m2),
                            Told::Nothing | Told::Action(_) => {
                                (0..raw.oj).map(|oj| raw.k(s2, a, aj, oj) * raw.tau(m, aj, oj, m2)).sum()
                            }
                        };
                        post[s2][m2] += base * nu;
                    }
                }
            }
        }
    }
    let total: f64 = post.iter().flatten().sum();
    (total > 1e-12).then(|| {
        post.iter()
            .map(|row| row.iter().map(|x| x / total).collect())
            .collect()
    })
}

/// Spreads a `[s][m]` table onto the frame's interactive state order.
pub fn to_belief(frame: &InteractiveFrame, b: &[Vec<f64>]) -> Belief {
    let mut mass = vec![0.0; frame.space().len()];
    for (s, row) in b.iter().enumerate() {
        for (m, p) in row.iter().enumerate() {
            mass[frame.space().index(s, &[m])] = *p;
        }
    }
    Belief::new(mass).unwrap()
}

pub fn random_prior(rng: &mut impl Rng, raw: &RawInstance) -> Vec<Vec<f64>> {
    let flat = distribution(rng, raw.s * raw.candidates.len());
    flat.chunks(raw.candidates.len()).map(|c| c.to_vec()).collect()
}

/// Largest elementwise gap between an implementation belief and an oracle
/// table.
pub fn max_gap(frame: &InteractiveFrame, got: &Belief, want: &[Vec<f64>]) -> f64 {
    let mut gap = 0.0f64;
    for (s, row) in want.iter().enumerate() {
        for (m, p) in row.iter().enumerate() {
            gap = gap.max((got.get(frame.space().index(s, &[m])) - p).abs());
        }
    }
    gap
}
