//! Two-agent tiger problem.
//!
//! A tiger sits behind the left or right door. Each agent listens or opens a
//! door; listening costs 1, the tiger-free door pays 10 and the tiger door
//! costs 100. An agent's reward adds a weighted share of its neighbor's base
//! reward. Growls are heard correctly with the listen accuracy only when both
//! agents listen, otherwise they are uninformative. Opening any door resets
//! the tiger uniformly.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::belief::{Belief, StateSpace};
use crate::error::{Error, Result};
use crate::frame::{NetFrame, PomdpFrame};
use crate::ipomdp::{InteractiveFrame, InteractiveStateSpace, ModelConfig, ModelFrame, ModelSet, ObsKernel};
use crate::net::CommGraph;
use crate::solver::{NetAgent, Scenario, SimulationConfig, TabularEnv};

pub const TIGER_LEFT: usize = 0;
pub const TIGER_RIGHT: usize = 1;
pub const LISTEN: usize = 0;
pub const OPEN_LEFT: usize = 1;
pub const OPEN_RIGHT: usize = 2;
pub const GROWL_LEFT: usize = 0;
pub const GROWL_RIGHT: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TigerConfig {
    /// Nesting level of both agents (1 or 2).
    pub levels: usize,
    pub listen_accuracy: f64,
    /// Share of the neighbor's base reward added to each agent's reward.
    pub neighbor_weight: f64,
}

impl Default for TigerConfig {
    fn default() -> Self {
        Self {
            levels: 1,
            listen_accuracy: 0.85,
            neighbor_weight: 0.5,
        }
    }
}

impl TigerConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.levels == 0 {
            out.push("domain.levels must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.listen_accuracy) {
            out.push(format!("domain.listen_accuracy must lie in [0, 1], got {}", self.listen_accuracy));
        }
        if !self.neighbor_weight.is_finite() {
            out.push("domain.neighbor_weight must be finite".into());
        }
        out
    }
}

fn labels(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn actions() -> Vec<String> {
    labels(&["listen", "open-left", "open-right"])
}

fn observations() -> Vec<String> {
    labels(&["growl-left", "growl-right"])
}

/// Single-agent reward of action `a` with the tiger in `s`.
pub fn base_reward(s: usize, a: usize) -> f64 {
    match a {
        LISTEN => -1.0,
        OPEN_LEFT if s == TIGER_LEFT => -100.0,
        OPEN_RIGHT if s == TIGER_RIGHT => -100.0,
        _ => 10.0,
    }
}

fn reset_row(s: usize, opened: bool, s2: usize) -> f64 {
    if opened {
        0.5
    } else {
        f64::from(u8::from(s == s2))
    }
}

fn growl(accuracy: f64, informative: bool, s2: usize, o: usize) -> f64 {
    if !informative {
        0.5
    } else if o == s2 {
        accuracy
    } else {
        1.0 - accuracy
    }
}

/// The level-0 tiger: a single agent who believes its own listening is
/// always informative.
pub fn single_agent_tiger(listen_accuracy: f64, discount: f64) -> Result<PomdpFrame> {
    let mut t = Vec::new();
    let mut o = Vec::new();
    let mut r = Vec::new();
    for s in 0..2 {
        for a in 0..3 {
            for s2 in 0..2 {
                t.push(reset_row(s, a != LISTEN, s2));
            }
            r.push(base_reward(s, a));
        }
    }
    for s2 in 0..2 {
        for a in 0..3 {
            for obs in 0..2 {
                o.push(growl(listen_accuracy, a == LISTEN, s2, obs));
            }
        }
    }
    PomdpFrame::new(2, actions(), observations(), t, o, r, discount)
}

/// One agent's frame with the other agent as its single neighbor.
pub fn tiger_net_frame(cfg: &TigerConfig, discount: f64) -> Result<NetFrame> {
    let (mut t, mut o, mut r) = (Vec::new(), Vec::new(), Vec::new());
    for s in 0..2 {
        for a in 0..3 {
            for n in 0..3 {
                for s2 in 0..2 {
                    t.push(reset_row(s, a != LISTEN || n != LISTEN, s2));
                }
                r.push(base_reward(s, a) + cfg.neighbor_weight * base_reward(s, n));
            }
        }
    }
    for s2 in 0..2 {
        for a in 0..3 {
            for n in 0..3 {
                for obs in 0..2 {
                    o.push(growl(cfg.listen_accuracy, a == LISTEN && n == LISTEN, s2, obs));
                }
            }
        }
    }
    NetFrame::new(2, actions(), observations(), vec![3], t, o, r, discount)
}

/// The neighbor's growl observation seen from the modelling agent's side.
fn neighbor_kernel(cfg: &TigerConfig) -> ObsKernel {
    let mut data = Vec::new();
    for s2 in 0..2 {
        for a in 0..3 {
            for n in 0..3 {
                for obs in 0..2 {
                    data.push(growl(cfg.listen_accuracy, a == LISTEN && n == LISTEN, s2, obs));
                }
            }
        }
    }
    ObsKernel::new(2, data)
}

fn physical() -> Result<StateSpace> {
    StateSpace::new(labels(&["tiger-left", "tiger-right"]))
}

/// Frame of a level-`level` tiger agent, with its candidate neighbor models.
fn interactive_frame(cfg: &TigerConfig, sim: &SimulationConfig, level: usize) -> Result<Arc<InteractiveFrame>> {
    let discount = sim.discount;
    let base = sim.model_config();
    let level0 = ModelFrame::Pomdp(Arc::new(single_agent_tiger(cfg.listen_accuracy, discount)?));
    let mut sets = vec![ModelSet::build(vec![(level0, vec![Belief::uniform(2)])], &base)?];
    if level >= 2 {
        // Nested interactive models are closed only to the expansion depth.
        let inner = interactive_frame(cfg, sim, level - 1)?;
        let initial = initial_belief(&inner);
        let nested = ModelConfig {
            depth: base.depth.min(sim.expansion_depth),
            ..base
        };
        sets.push(ModelSet::build(vec![(ModelFrame::Interactive(inner), vec![initial])], &nested)?);
    }
    let models = ModelSet::union(sets)?;
    let space = InteractiveStateSpace::product(physical()?, vec![Arc::new(models)]);
    Ok(Arc::new(InteractiveFrame::new(
        tiger_net_frame(cfg, discount)?,
        space,
        vec![neighbor_kernel(cfg)],
    )?))
}

/// Uniform tiger location, neighbor at the first candidate of the highest
/// nesting level.
fn initial_belief(frame: &InteractiveFrame) -> Belief {
    let space = frame.space();
    let models = &space.models()[0];
    let m = (0..models.len())
        .find(|&m| models.frame(m).level() == models.level())
        .unwrap_or(0);
    let mut mass = vec![0.0; space.len()];
    for s in 0..2 {
        mass[space.index(s, &[m])] = 0.5;
    }
    Belief::new(mass).expect("two halves form a belief")
}

/// Two tiger agents connected by one edge, both at nesting level
/// `cfg.levels`.
pub fn build_tiger_model(cfg: &TigerConfig, sim: &SimulationConfig) -> Result<Scenario> {
    let v = cfg.violations();
    if !v.is_empty() {
        return Err(Error::InvalidConfig(v.join("; ")));
    }
    if cfg.levels > sim.nesting_bound {
        return Err(Error::RecursionDepthExceeded {
            level: cfg.levels,
            bound: sim.nesting_bound,
        });
    }
    let frame = interactive_frame(cfg, sim, cfg.levels)?;
    let belief = initial_belief(&frame);
    let agents = (0..2)
        .map(|i| NetAgent {
            frame: frame.clone(),
            belief: belief.clone(),
            neighbors: vec![1 - i],
        })
        .collect();
    Ok(Scenario {
        graph: CommGraph::new(2, [(0, 1)]),
        agents,
        env: tiger_env(cfg)?,
    })
}

/// The true two-agent system.
pub fn tiger_env(cfg: &TigerConfig) -> Result<TabularEnv> {
    let mut t = Vec::new();
    let mut obs = vec![Vec::new(), Vec::new()];
    let mut rewards = vec![Vec::new(), Vec::new()];
    for s in 0..2 {
        for a0 in 0..3 {
            for a1 in 0..3 {
                for s2 in 0..2 {
                    t.push(reset_row(s, a0 != LISTEN || a1 != LISTEN, s2));
                }
                rewards[0].push(base_reward(s, a0) + cfg.neighbor_weight * base_reward(s, a1));
                rewards[1].push(base_reward(s, a1) + cfg.neighbor_weight * base_reward(s, a0));
            }
        }
    }
    for s2 in 0..2 {
        for a0 in 0..3 {
            for a1 in 0..3 {
                for o in 0..2 {
                    let p = growl(cfg.listen_accuracy, a0 == LISTEN && a1 == LISTEN, s2, o);
                    obs[0].push(p);
                    obs[1].push(p);
                }
            }
        }
    }
    let [o0, o1] = <[Vec<f64>; 2]>::try_from(obs).expect("two agents");
    TabularEnv::new(2, vec![3, 3], t, vec![(2, o0), (2, o1)], rewards, vec![0.5, 0.5])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pomdp::se_pomdp;

    #[test]
    fn frames_are_stochastic() {
        assert!(single_agent_tiger(0.85, 0.9).is_ok());
        assert!(tiger_net_frame(&TigerConfig::default(), 0.9).is_ok());
        assert!(tiger_env(&TigerConfig::default()).is_ok());
    }

    #[test]
    fn listening_posterior() {
        let f = single_agent_tiger(0.85, 0.9).unwrap();
        let b = se_pomdp(&Belief::uniform(2), LISTEN, GROWL_LEFT, &f).unwrap();
        assert!((b.get(TIGER_LEFT) - 0.85).abs() < 1e-12);
    }

    #[test]
    fn level_zero_closure_is_finite() {
        let sim = SimulationConfig::default();
        let s = build_tiger_model(&TigerConfig::default(), &sim).unwrap();
        let models = &s.agents[0].frame.space().models()[0];
        assert!(models.len() < 64, "{} models", models.len());
        // The uniform model ties between opening doors only after listening;
        // listening is its unique choice.
        assert_eq!(models.opt(0), &[LISTEN]);
    }
}
