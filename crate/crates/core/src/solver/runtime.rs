use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::SimulationConfig;
use super::env::{env_step, TabularEnv};
use super::trace::{AgentRecord, Summary, TraceEvent};
use crate::belief::Belief;
use crate::error::{Error, Result};
use crate::ipomdp::InteractiveFrame;
use crate::net::{read_messages, validate_graph, CommGraph, Message, MessageKind, NetModel, Payload};
use crate::value::{argmax_set, BackupPlan, Domain, MessageKey, TableKey, ValueTable, TIE_EPSILON};

/// Message-key combinations are enumerated up front only below this count.
const MAX_SEEDED_MESSAGES: usize = 256;

/// One agent of a scenario. Neighbor `k` of the frame is graph node
/// `neighbors[k]`.
#[derive(Debug, Clone)]
pub struct NetAgent {
    pub frame: Arc<InteractiveFrame>,
    pub belief: Belief,
    pub neighbors: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub graph: CommGraph,
    pub agents: Vec<NetAgent>,
    pub env: TabularEnv,
}

impl Scenario {
    /// Dimension mismatches between the graph, the agents and the
    /// environment.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Err(e) = validate_graph(&self.graph) {
            out.push(e.to_string());
        }
        if self.agents.len() != self.graph.node_count() || self.env.num_agents() != self.agents.len() {
            out.push(format!(
                "{} agents, {} graph nodes, {} environment agents",
                self.agents.len(),
                self.graph.node_count(),
                self.env.num_agents()
            ));
            return out;
        }
        for (i, agent) in self.agents.iter().enumerate() {
            let f = agent.frame.frame();
            if agent.neighbors != self.graph.neighbors(i) {
                out.push(format!(
                    "agent {i}: neighbors {:?} differ from graph neighbors {:?}",
                    agent.neighbors,
                    self.graph.neighbors(i)
                ));
                continue;
            }
            if f.num_actions() != self.env.actions()[i] {
                out.push(format!(
                    "agent {i}: frame has {} actions, environment has {}",
                    f.num_actions(),
                    self.env.actions()[i]
                ));
            }
            if f.num_observations() != self.env.num_observations(i) {
                out.push(format!(
                    "agent {i}: frame has {} observations, environment has {}",
                    f.num_observations(),
                    self.env.num_observations(i)
                ));
            }
            for (k, &j) in agent.neighbors.iter().enumerate() {
                if f.neighbor_actions()[k] != self.env.actions()[j] {
                    out.push(format!(
                        "agent {i}: neighbor {j} has {} actions in the frame, {} in the environment",
                        f.neighbor_actions()[k],
                        self.env.actions()[j]
                    ));
                }
            }
            if agent.belief.support_size() != agent.frame.space().len() {
                out.push(format!(
                    "agent {i}: initial belief has {} entries, interactive space has {}",
                    agent.belief.support_size(),
                    agent.frame.space().len()
                ));
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: Summary,
    pub tables: Vec<ValueTable>,
    /// Each agent's belief after the last round.
    pub beliefs: Vec<Belief>,
}

struct AgentRun {
    belief: Belief,
    domain: Domain,
    plan: BackupPlan,
    values: Vec<f64>,
    current: usize,
}

struct RoundResult {
    action: usize,
    record: AgentRecord,
}

impl AgentRun {
    fn new(agent: &NetAgent, cfg: &SimulationConfig) -> Result<Self> {
        let model = NetModel::new(&agent.frame, cfg.message_type);
        let seeds: Vec<_> = message_space(&agent.frame, cfg.message_type)
            .into_iter()
            .map(|m| (agent.belief.clone(), m))
            .collect();
        let domain = Domain::closure(&model, &seeds, cfg.expansion_depth)?;
        let plan = BackupPlan::compile(&model, &domain, cfg.lookup)?;
        Ok(Self {
            belief: agent.belief.clone(),
            values: vec![0.0; domain.len()],
            domain,
            plan,
            current: 0,
        })
    }

    /// Adds the closure of `(belief, message)` to the domain; new entries
    /// start at 0.
    fn grow(&mut self, model: &NetModel<'_>, belief: &Belief, message: &MessageKey, depth: usize) -> Result<usize> {
        let closure = Domain::closure(model, &[(belief.clone(), message.clone())], depth)?;
        let before = self.domain.len();
        for (b, m) in closure.points() {
            self.domain.insert(b.clone(), m.clone());
        }
        self.values.resize(self.domain.len(), 0.0);
        self.plan.extend(model, &self.domain)?;
        Ok(self.domain.len() - before)
    }

    #[allow(clippy::too_many_arguments)]
    fn round(
        &mut self,
        agent: &NetAgent,
        id: usize,
        slot: usize,
        messages: &[Message],
        prev_action: usize,
        observation: usize,
        reward: f64,
        cfg: &SimulationConfig,
    ) -> Result<RoundResult> {
        let frame = agent.frame.as_ref();
        let model = NetModel::new(frame, cfg.message_type);
        let abort = |source: Error| Error::BeliefUpdate {
            slot,
            agent: id,
            source: Box::new(source),
        };
        let inbox_messages: Vec<Message> = agent.neighbors.iter().map(|&j| messages[j].clone()).collect();
        let inbox = read_messages(&inbox_messages, cfg.message_type, frame, cfg.projection_bound).map_err(abort)?;
        self.belief = frame
            .update(&self.belief, prev_action, observation, &inbox.evidence)
            .map_err(abort)?;

        let key = TableKey::new(&self.belief, &inbox.key);
        let new_keys = match self.domain.position(&key) {
            Some(_) => 0,
            None => self.grow(&model, &self.belief.clone(), &inbox.key, cfg.expansion_depth)?,
        };

        let mut value_delta = 0.0f64;
        for _ in 0..cfg.sweeps_per_round {
            let next = self.plan.apply(&self.values);
            value_delta = self
                .values
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            self.values = next;
        }

        let idx = self.domain.position(&key).expect("current point is tabulated");
        self.current = idx;
        let action = argmax_set(&self.plan.q_values(idx, &self.values), TIE_EPSILON)[0];
        let projection_distance = inbox
            .projections
            .iter()
            .flatten()
            .copied()
            .reduce(f64::max);
        Ok(RoundResult {
            action,
            record: AgentRecord {
                slot,
                agent: id,
                action,
                observation,
                reward,
                value_delta,
                belief_entropy: self.belief.entropy(),
                projection_distance,
                new_keys,
                domain_size: self.domain.len(),
                value: self.values[idx],
            },
        })
    }
}

/// Every message key an agent can receive, when there are few enough to
/// enumerate.
fn message_space(frame: &InteractiveFrame, kind: MessageKind) -> Vec<MessageKey> {
    let sizes: Vec<usize> = frame
        .space()
        .models()
        .iter()
        .map(|m| match kind {
            MessageKind::Action => m.num_actions(),
            MessageKind::Observation => m.num_observations(),
            MessageKind::Belief => m.len(),
        })
        .collect();
    let total: usize = sizes.iter().product();
    if total > MAX_SEEDED_MESSAGES {
        return Vec::new();
    }
    (0..total)
        .map(|mut x| {
            let mut key = vec![0u32; sizes.len()];
            for k in (0..sizes.len()).rev() {
                key[k] = (x % sizes[k]) as u32;
                x /= sizes[k];
            }
            MessageKey(key)
        })
        .collect()
}

/// Runs synchronous rounds until every agent's value change is below
/// `cfg.epsilon` in a round that added no table entries, or until
/// `cfg.max_rounds`.
///
/// Before the first round the initial joint action is applied to the
/// environment, so round 1 already has observations and previous actions to
/// exchange. In each round every agent reads its neighbors' messages, updates
/// its belief, sweeps its value table and picks the lowest-index optimal
/// action; the joint action then advances the environment. Events are
/// passed to `sink` in a fixed order, independent of the worker count.
pub fn run_decentralized_bp(
    cfg: &SimulationConfig,
    scenario: &Scenario,
    sink: &mut (dyn FnMut(&TraceEvent) + Send),
) -> Result<RunOutcome> {
    let violations = cfg.violations();
    if !violations.is_empty() {
        return Err(Error::InvalidConfig(violations.join("; ")));
    }
    validate_graph(&scenario.graph)?;
    let violations = scenario.violations();
    if !violations.is_empty() {
        return Err(Error::InvalidConfig(violations.join("; ")));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run_rounds(cfg, scenario, sink))
}

fn run_rounds(cfg: &SimulationConfig, scenario: &Scenario, sink: &mut (dyn FnMut(&TraceEvent) + Send)) -> Result<RunOutcome> {
    let env = &scenario.env;
    let n = scenario.agents.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut actions = cfg.initial_action.clone().unwrap_or_else(|| vec![0; n]);
    let start = env.sample_initial(&mut rng);
    let (mut state, mut observations, mut rewards) = env_step(&start, &actions, env, &mut rng)?;

    let mut runs: Vec<AgentRun> = scenario
        .agents
        .par_iter()
        .map(|a| AgentRun::new(a, cfg))
        .collect::<Result<_>>()?;

    let mut converged = false;
    let mut rounds = 0;
    let mut final_max_delta = f64::INFINITY;
    for slot in 1..=cfg.max_rounds {
        rounds = slot;
        let messages: Vec<Message> = (0..n)
            .map(|i| Message {
                sender: i,
                slot,
                payload: match cfg.message_type {
                    MessageKind::Action => Payload::Action(actions[i]),
                    MessageKind::Observation => Payload::Observation(observations[i]),
                    MessageKind::Belief => Payload::Belief(scenario.agents[i].frame.space().physical_marginal(&runs[i].belief)),
                },
            })
            .collect();
        for m in &messages {
            sink(&TraceEvent::Message(m.clone()));
        }

        let results: Vec<RoundResult> = runs
            .par_iter_mut()
            .enumerate()
            .map(|(i, run)| {
                run.round(
                    &scenario.agents[i],
                    i,
                    slot,
                    &messages,
                    actions[i],
                    observations[i],
                    rewards[i],
                    cfg,
                )
            })
            .collect::<Result<_>>()?;

        let mut grew = false;
        final_max_delta = 0.0;
        for (i, r) in results.into_iter().enumerate() {
            grew |= r.record.new_keys > 0;
            final_max_delta = final_max_delta.max(r.record.value_delta);
            actions[i] = r.action;
            sink(&TraceEvent::Agent(r.record));
        }
        (state, observations, rewards) = env_step(&state, &actions, env, &mut rng)?;
        if !grew && final_max_delta < cfg.epsilon {
            converged = true;
            break;
        }
    }

    let final_values = runs
        .iter()
        .map(|run| run.values.get(run.current).copied().unwrap_or(0.0))
        .collect();
    let summary = Summary {
        converged,
        rounds,
        final_max_delta,
        final_values,
    };
    sink(&TraceEvent::Summary(summary.clone()));
    Ok(RunOutcome {
        summary,
        tables: runs.iter().map(|r| r.domain.table(&r.values)).collect(),
        beliefs: runs.into_iter().map(|r| r.belief).collect(),
    })
}
