//! TOML scenario files.
//!
//! A file names its format version, the loop controls and either a domain
//! builder or explicit per-agent frames:
//!
//! ```toml
//! format_version = 1
//!
//! [simulation]
//! discount = 0.9
//! message_type = "action"
//!
//! [domain]
//! kind = "tiger"
//! levels = 1
//! ```
//!
//! Explicit agents give their tensors as nested arrays in the index order
//! of [`crate::frame`]; nesting depth is free, entries are read in row-major
//! order. Each neighbor entry carries a level-0 model frame, its candidate
//! seed beliefs and the kernel of the neighbor's observation seen from the
//! modelling agent. Without an `[environment]` section the true system is
//! derived from the agents' own frames, which requires a single agent or a
//! complete graph.

use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::belief::{Belief, StateSpace};
use crate::domains::{build_spectrum_model, build_tiger_model, SpectrumConfig, TigerConfig};
use crate::frame::{NetFrame, PomdpFrame};
use crate::ipomdp::{InteractiveFrame, InteractiveStateSpace, ModelConfig, ModelFrame, ModelSet, ObsKernel};
use crate::net::CommGraph;
use crate::solver::{NetAgent, Scenario, SimulationConfig, TabularEnv};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

/// A tensor written as nested arrays of numbers.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Tensor {
    Scalar(f64),
    Nested(Vec<Tensor>),
}

impl Tensor {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect(&self, out: &mut Vec<f64>) {
        match self {
            Tensor::Scalar(x) => out.push(*x),
            Tensor::Nested(items) => items.iter().for_each(|t| t.collect(out)),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainSpec {
    Tiger(TigerConfig),
    Spectrum(SpectrumConfig),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub nodes: usize,
    #[serde(default)]
    pub edges: Vec<(usize, usize)>,
}

/// A level-0 frame over the modelling agent's physical states.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFrameSpec {
    pub actions: Vec<String>,
    pub observations: Vec<String>,
    pub transition: Tensor,
    pub observation: Tensor,
    pub reward: Tensor,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeighborSpec {
    /// Graph node of the neighbor.
    pub node: usize,
    pub model: ModelFrameSpec,
    /// Seed beliefs of the candidate models.
    pub beliefs: Vec<Vec<f64>>,
    /// Fixed action distributions, one per seed; the seeds are then used as
    /// given instead of being closed and solved.
    #[serde(default)]
    pub policies: Option<Vec<Vec<f64>>>,
    /// Closure depth of the candidates; defaults to the smaller of the model
    /// and expansion depths.
    #[serde(default)]
    pub closure_depth: Option<usize>,
    /// The neighbor's observation probabilities, indexed `(s', a, n, o)`.
    pub kernel: Tensor,
    /// Candidate the initial belief points at.
    #[serde(default)]
    pub initial_model: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub actions: Vec<String>,
    pub observations: Vec<String>,
    pub transition: Tensor,
    pub observation: Tensor,
    pub reward: Tensor,
    /// Initial belief over physical states.
    pub belief: Vec<f64>,
    #[serde(default)]
    pub neighbors: Vec<NeighborSpec>,
}

/// The true system, laid out as in [`TabularEnv::new`].
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub transition: Tensor,
    pub observations: Vec<Tensor>,
    pub rewards: Vec<Tensor>,
    pub initial: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub format_version: u32,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub domain: Option<DomainSpec>,
    #[serde(default)]
    pub graph: Option<GraphSpec>,
    #[serde(default)]
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub environment: Option<EnvSpec>,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Validates the file and builds the scenario it describes.
    pub fn build(&self) -> Result<Scenario, ScenarioError> {
        let mut problems = Vec::new();
        if self.format_version != FORMAT_VERSION {
            problems.push(format!(
                "format_version {} is not supported (expected {FORMAT_VERSION})",
                self.format_version
            ));
        }
        problems.extend(self.simulation.violations());
        if !problems.is_empty() {
            return Err(ScenarioError::Invalid(problems));
        }
        let sim = &self.simulation;
        let scenario = match (&self.domain, self.agents.is_empty()) {
            (Some(_), false) => {
                return Err(ScenarioError::Invalid(vec![
                    "a scenario has either a [domain] builder or [[agents]], not both".into(),
                ]))
            }
            (None, true) => {
                return Err(ScenarioError::Invalid(vec![
                    "a scenario needs a [domain] builder or at least one [[agents]] entry".into(),
                ]))
            }
            (Some(DomainSpec::Tiger(cfg)), true) => build_tiger_model(cfg, sim).map_err(invalid)?,
            (Some(DomainSpec::Spectrum(cfg)), true) => build_spectrum_model(cfg, sim).map_err(invalid)?,
            (None, false) => self.build_explicit()?,
        };
        let problems = scenario.violations();
        if problems.is_empty() {
            Ok(scenario)
        } else {
            Err(ScenarioError::Invalid(problems))
        }
    }

    fn build_explicit(&self) -> Result<Scenario, ScenarioError> {
        let sim = &self.simulation;
        let graph = match &self.graph {
            Some(g) => CommGraph::new(g.nodes, g.edges.iter().copied()),
            None => CommGraph::new(self.agents.len(), []),
        };
        let mut problems = Vec::new();
        let mut agents = Vec::with_capacity(self.agents.len());
        for (i, spec) in self.agents.iter().enumerate() {
            match agent(spec, sim) {
                Ok(a) => agents.push(a),
                Err(e) => problems.push(format!("agent {i}: {e}")),
            }
        }
        if !problems.is_empty() {
            return Err(ScenarioError::Invalid(problems));
        }
        let env = match &self.environment {
            Some(e) => TabularEnv::new(
                self.agents[0].belief.len(),
                self.agents.iter().map(|a| a.actions.len()).collect(),
                e.transition.flatten(),
                self.agents
                    .iter()
                    .zip(&e.observations)
                    .map(|(a, o)| (a.observations.len(), o.flatten()))
                    .collect(),
                e.rewards.iter().map(Tensor::flatten).collect(),
                e.initial.clone(),
            ),
            None => derive_env(&graph, &agents),
        }
        .map_err(invalid)?;
        Ok(Scenario { graph, agents, env })
    }
}

fn invalid(e: impl ToString) -> ScenarioError {
    ScenarioError::Invalid(vec![e.to_string()])
}

fn agent(spec: &AgentSpec, sim: &SimulationConfig) -> crate::Result<NetAgent> {
    let ns = spec.belief.len();
    let physical = Belief::new(spec.belief.clone())?;
    let frame = NetFrame::new(
        ns,
        spec.actions.clone(),
        spec.observations.clone(),
        spec.neighbors.iter().map(|n| n.model.actions.len()).collect(),
        spec.transition.flatten(),
        spec.observation.flatten(),
        spec.reward.flatten(),
        sim.discount,
    )?;
    let mut sets = Vec::with_capacity(spec.neighbors.len());
    for n in &spec.neighbors {
        let model = Arc::new(PomdpFrame::new(
            ns,
            n.model.actions.clone(),
            n.model.observations.clone(),
            n.model.transition.flatten(),
            n.model.observation.flatten(),
            n.model.reward.flatten(),
            sim.discount,
        )?);
        let beliefs = n.beliefs.iter().cloned().map(Belief::new).collect::<crate::Result<Vec<_>>>()?;
        let set = match &n.policies {
            Some(p) => ModelSet::with_policies(ModelFrame::Pomdp(model), beliefs, p.clone())?,
            None => {
                let cfg = ModelConfig {
                    depth: n.closure_depth.unwrap_or(sim.model_depth.min(sim.expansion_depth)),
                    ..sim.model_config()
                };
                ModelSet::build(vec![(ModelFrame::Pomdp(model), beliefs)], &cfg)?
            }
        };
        if n.initial_model >= set.len() {
            return Err(crate::Error::InvalidConfig(format!(
                "neighbor {}: initial_model {} exceeds {} candidates",
                n.node,
                n.initial_model,
                set.len()
            )));
        }
        sets.push(Arc::new(set));
    }
    let kernels = spec
        .neighbors
        .iter()
        .map(|n| ObsKernel::new(n.model.observations.len(), n.kernel.flatten()))
        .collect();
    let space = InteractiveStateSpace::product(StateSpace::indexed(ns)?, sets);
    let frame = InteractiveFrame::new(frame, space, kernels)?;
    let models: Vec<usize> = spec.neighbors.iter().map(|n| n.initial_model).collect();
    let mut mass = vec![0.0; frame.space().len()];
    for (s, p) in physical.mass().iter().enumerate() {
        mass[frame.space().index(s, &models)] = *p;
    }
    Ok(NetAgent {
        belief: Belief::new(mass)?,
        frame: Arc::new(frame),
        neighbors: spec.neighbors.iter().map(|n| n.node).collect(),
    })
}

/// The true system implied by the agents' frames when every agent sees all
/// others. Agent 0's transition and initial belief define the dynamics; the
/// other agents must agree on the transition.
fn derive_env(graph: &CommGraph, agents: &[NetAgent]) -> crate::Result<TabularEnv> {
    let n = agents.len();
    if n > 1 && !graph.is_complete() {
        return Err(crate::Error::InvalidConfig(
            "an [environment] section is required unless the graph is complete".into(),
        ));
    }
    for (i, a) in agents.iter().enumerate() {
        let expected: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        if a.neighbors != expected {
            return Err(crate::Error::InvalidConfig(format!(
                "agent {i} must list neighbors {expected:?} to derive the environment"
            )));
        }
    }
    let frames: Vec<&NetFrame> = agents.iter().map(|a| a.frame.frame()).collect();
    let ns = frames[0].num_states();
    if let Some(i) = frames.iter().position(|f| f.num_states() != ns) {
        return Err(crate::Error::InvalidConfig(format!(
            "agent {i} has {} states, agent 0 has {ns}",
            frames[i].num_states()
        )));
    }
    let actions: Vec<usize> = frames.iter().map(|f| f.num_actions()).collect();
    let nj: usize = actions.iter().product();
    let decode = |mut j: usize| {
        let mut joint = vec![0; n];
        for k in (0..n).rev() {
            joint[k] = j % actions[k];
            j /= actions[k];
        }
        joint
    };
    // Own action and joint neighbor index of agent `i` within `joint`.
    let local = |i: usize, joint: &[usize]| {
        let others: Vec<usize> = (0..n).filter(|&k| k != i).map(|k| joint[k]).collect();
        (joint[i], frames[i].join_actions(&others))
    };
    let mut transition = Vec::with_capacity(ns * nj * ns);
    let mut rewards = vec![Vec::with_capacity(ns * nj); n];
    for s in 0..ns {
        for j in 0..nj {
            let joint = decode(j);
            for s2 in 0..ns {
                let (a, m) = local(0, &joint);
                let p = frames[0].t(s, a, m, s2);
                for (i, frame) in frames.iter().enumerate().skip(1) {
                    let (a, m) = local(i, &joint);
                    if (frame.t(s, a, m, s2) - p).abs() > crate::frame::STOCHASTIC_TOLERANCE {
                        return Err(crate::Error::InvalidConfig(format!(
                            "agent {i} transition disagrees with agent 0 at s={s}, joint action {joint:?}, s'={s2}"
                        )));
                    }
                }
                transition.push(p);
            }
            for (i, r) in rewards.iter_mut().enumerate() {
                let (a, m) = local(i, &joint);
                r.push(frames[i].r(s, a, m));
            }
        }
    }
    let observations = (0..n)
        .map(|i| {
            let no = frames[i].num_observations();
            let mut data = Vec::with_capacity(ns * nj * no);
            for s2 in 0..ns {
                for j in 0..nj {
                    let (a, m) = local(i, &decode(j));
                    data.extend((0..no).map(|o| frames[i].o(s2, a, m, o)));
                }
            }
            (no, data)
        })
        .collect();
    let initial = agents[0].frame.space().physical_marginal(&agents[0].belief);
    TabularEnv::new(ns, actions, transition, observations, rewards, initial)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CHAIN: &str = r#"
format_version = 1

[simulation]
discount = 0.5

[[agents]]
actions = ["stay"]
observations = ["none"]
transition = [[[[1.0]]]]
observation = [[[[1.0]]]]
reward = [[[1]]]
belief = [1.0]
"#;

    #[test]
    fn nested_tensors_flatten_in_row_major_order() {
        let t: Tensor = toml::from_str::<toml::Table>("x = [[1, 2], [3, [4, 5]]]").unwrap()["x"]
            .clone()
            .try_into()
            .unwrap();
        assert_eq!(t.flatten(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn chain_builds_with_derived_environment() {
        let s = ScenarioFile::parse(CHAIN).unwrap().build().unwrap();
        assert_eq!(s.agents.len(), 1);
        assert_eq!(s.env.num_states(), 1);
        assert_eq!(s.env.r(0, 0, 0), 1.0);
    }

    #[test]
    fn missing_version_is_a_parse_error() {
        let text = CHAIN.replace("format_version = 1", "");
        assert!(matches!(ScenarioFile::parse(&text), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn unknown_version_is_invalid() {
        let text = CHAIN.replace("format_version = 1", "format_version = 7");
        let err = ScenarioFile::parse(&text).unwrap().build().unwrap_err();
        assert!(matches!(err, ScenarioError::Invalid(v) if v[0].contains("format_version 7")));
    }

    #[test]
    fn tiger_domain_builds() {
        let text = "format_version = 1\n[domain]\nkind = \"tiger\"\nlevels = 1\n";
        let s = ScenarioFile::parse(text).unwrap().build().unwrap();
        assert_eq!(s.agents.len(), 2);
    }

    #[test]
    fn unknown_domain_field_is_rejected() {
        let text = "format_version = 1\n[domain]\nkind = \"tiger\"\nlevel = 1\n";
        assert!(ScenarioFile::parse(text).is_err());
    }
}
