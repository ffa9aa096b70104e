//! Networked interactive POMDPs: the communication graph, messages between
//! neighbors and the message-conditioned belief and value machinery.
//!
//! Every agent keeps an interactive belief over its physical state and one
//! model per graph neighbor. A round's incoming messages are turned into
//! per-neighbor [`Evidence`]:
//!
//! - an action message `a_j` replaces `Pr(a_j | θ_j)` with the indicator of
//!   the messaged action while keeping the `Σ_{o_j} τ · O_j` sum;
//! - an observation message `o_j` keeps `Pr(a_j | θ_j)` and evaluates
//!   `τ · O_j` at the messaged observation only;
//! - a belief message is projected onto the nearest candidate model (total
//!   variation); the successor model is pinned to that candidate and the
//!   `τ · O_j` factor is dropped.
//!
//! Several neighbors combine as a product of their factors, which treats
//! their actions and observations as independent given the physical
//! transition.
//!
//! Value tables are keyed on the belief together with the per-neighbor
//! message payload, and a backup keeps the message of the entry it backs up.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::belief::{total_variation, Belief};
use crate::error::{Error, Result};
use crate::ipomdp::{Evidence, InteractiveFrame, ModelSet};
use crate::value::{self, BeliefModel, Domain, Lookup, MessageKey, TableKey, ValueTable};

/// Undirected communication graph over agents `0..node_count`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommGraph {
    node_count: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl CommGraph {
    /// Edges are stored unordered; duplicates collapse.
    pub fn new(node_count: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Self {
            node_count,
            edges: edges.into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect(),
        }
    }

    pub fn complete(node_count: usize) -> Self {
        Self::new(
            node_count,
            (0..node_count).flat_map(|i| (i + 1..node_count).map(move |j| (i, j))),
        )
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    /// Neighbors of `i` in ascending order.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| match (a == i, b == i) {
                (true, false) => Some(b),
                (false, true) => Some(a),
                _ => None,
            })
            .collect();
        out.sort_unstable();
        out
    }

    pub fn is_complete(&self) -> bool {
        (0..self.node_count).all(|i| self.neighbors(i).len() + 1 == self.node_count)
    }
}

/// Succeeds iff the graph has no self-loops and every node is reachable
/// from node 0.
pub fn validate_graph(g: &CommGraph) -> Result<()> {
    if g.node_count == 0 {
        return Err(Error::InvalidConfig("graph has no nodes".into()));
    }
    for &(a, b) in &g.edges {
        if a == b {
            return Err(Error::SelfLoop { node: a });
        }
        if b >= g.node_count {
            return Err(Error::InvalidConfig(format!(
                "edge ({a}, {b}) refers to a node outside 0..{}",
                g.node_count
            )));
        }
    }
    let mut seen = vec![false; g.node_count];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for j in g.neighbors(i) {
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    match seen.iter().position(|s| !s) {
        Some(unreachable) => Err(Error::DisconnectedGraph { unreachable }),
        None => Ok(()),
    }
}

/// What neighbors exchange, fixed for a whole scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Action,
    Belief,
    Observation,
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MessageKind::Action => "action",
            MessageKind::Belief => "belief",
            MessageKind::Observation => "observation",
        })
    }
}

impl std::str::FromStr for MessageKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "action" => Ok(MessageKind::Action),
            "belief" => Ok(MessageKind::Belief),
            "observation" => Ok(MessageKind::Observation),
            other => Err(Error::InvalidConfig(format!("unknown message type {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// The sender's previous action.
    Action(usize),
    /// The sender's belief over physical states.
    Belief(Vec<f64>),
    /// The sender's current observation.
    Observation(usize),
}

impl Payload {
    pub fn kind(&self) -> MessageKind {
        match self {
            Payload::Action(_) => MessageKind::Action,
            Payload::Belief(_) => MessageKind::Belief,
            Payload::Observation(_) => MessageKind::Observation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub sender: usize,
    pub slot: usize,
    pub payload: Payload,
}

/// A real formatted with 12 fractional digits, as a JSON number.
pub fn decimal(x: f64) -> Box<RawValue> {
    let x = if x == 0.0 { 0.0 } else { x };
    RawValue::from_string(format!("{x:.12}")).expect("formatted float is valid JSON")
}

#[derive(Serialize)]
struct WireMessage {
    slot: usize,
    sender: usize,
    kind: MessageKind,
    payload: Box<RawValue>,
}

#[derive(Deserialize)]
struct WireMessageIn {
    slot: usize,
    sender: usize,
    kind: MessageKind,
    payload: serde_json::Value,
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        self.payload.kind()
    }

    /// One-line JSON record `{slot, sender, kind, payload}`.
    pub fn to_wire(&self) -> String {
        let payload = match &self.payload {
            Payload::Action(a) | Payload::Observation(a) => RawValue::from_string(a.to_string()).expect("integer is valid JSON"),
            Payload::Belief(p) => {
                let items: Vec<String> = p.iter().map(|x| decimal(*x).get().to_string()).collect();
                RawValue::from_string(format!("[{}]", items.join(","))).expect("array is valid JSON")
            }
        };
        serde_json::to_string(&WireMessage {
            slot: self.slot,
            sender: self.sender,
            kind: self.kind(),
            payload,
        })
        .expect("message serializes")
    }

    pub fn from_wire(line: &str) -> Result<Self> {
        let w: WireMessageIn =
            serde_json::from_str(line).map_err(|e| Error::InvalidConfig(format!("bad message record: {e}")))?;
        let bad = || Error::InvalidConfig(format!("payload does not match kind {}", w.kind));
        let index = |v: &serde_json::Value| v.as_u64().map(|x| x as usize).ok_or_else(bad);
        let payload = match w.kind {
            MessageKind::Action => Payload::Action(index(&w.payload)?),
            MessageKind::Observation => Payload::Observation(index(&w.payload)?),
            MessageKind::Belief => Payload::Belief(
                w.payload
                    .as_array()
                    .ok_or_else(bad)?
                    .iter()
                    .map(|v| v.as_f64().ok_or_else(bad))
                    .collect::<Result<_>>()?,
            ),
        };
        Ok(Self {
            sender: w.sender,
            slot: w.slot,
            payload,
        })
    }
}

/// The candidate chosen for a belief message.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub candidate: usize,
    pub distance: f64,
}

/// Candidate whose belief is closest to `raw` in total variation, ties to
/// the lowest index. `raw` may be either a full candidate belief or a
/// distribution over physical states, compared with each candidate's
/// physical marginal.
pub fn project_belief_message(raw: &[f64], candidates: &ModelSet, bound: f64) -> Result<Projection> {
    Belief::new(raw.to_vec())?;
    let mut best: Option<Projection> = None;
    for m in 0..candidates.len() {
        let cand = candidates.belief(m);
        let distance = if raw.len() == cand.support_size() {
            total_variation(raw, cand.mass())
        } else if raw.len() == candidates.frame(m).num_physical_states() {
            total_variation(raw, &candidates.physical_marginal(m))
        } else {
            return Err(Error::InvalidBelief(format!(
                "belief message has {} entries, candidate {m} has {} (or {} physical states)",
                raw.len(),
                cand.support_size(),
                candidates.frame(m).num_physical_states()
            )));
        };
        if best.is_none_or(|b| distance < b.distance) {
            best = Some(Projection { candidate: m, distance });
        }
    }
    let best = best.ok_or_else(|| Error::InvalidConfig("empty candidate set".into()))?;
    if best.distance > bound {
        return Err(Error::ProjectionTooFar {
            distance: best.distance,
            bound,
        });
    }
    Ok(best)
}

/// Per-neighbor evidence and table key for one round's messages, given in
/// the agent's neighbor order.
#[derive(Debug, Clone, PartialEq)]
pub struct Inbox {
    pub evidence: Vec<Evidence>,
    pub key: MessageKey,
    /// Projection distances of belief messages, per neighbor.
    pub projections: Vec<Option<f64>>,
}

pub fn read_messages(messages: &[Message], kind: MessageKind, frame: &InteractiveFrame, bound: f64) -> Result<Inbox> {
    if messages.len() != frame.num_neighbors() {
        return Err(Error::InvalidConfig(format!(
            "{} messages for {} neighbors",
            messages.len(),
            frame.num_neighbors()
        )));
    }
    let mut evidence = Vec::with_capacity(messages.len());
    let mut key = Vec::with_capacity(messages.len());
    let mut projections = Vec::with_capacity(messages.len());
    for (k, msg) in messages.iter().enumerate() {
        if msg.kind() != kind {
            return Err(Error::MessageKindMismatch {
                expected: kind.to_string(),
                found: msg.kind().to_string(),
            });
        }
        let models = &frame.space().models()[k];
        let (ev, payload, dist) = match &msg.payload {
            Payload::Action(a) => (Evidence::Action(*a), *a, None),
            Payload::Observation(o) => (Evidence::Observation(*o), *o, None),
            Payload::Belief(raw) => {
                let p = project_belief_message(raw, models, bound)?;
                (Evidence::Model(p.candidate), p.candidate, Some(p.distance))
            }
        };
        evidence.push(ev);
        key.push(payload as u32);
        projections.push(dist);
    }
    Ok(Inbox {
        evidence,
        key: MessageKey(key),
        projections,
    })
}

/// Evidence encoded by a table message key.
pub fn evidence_of(kind: MessageKind, key: &MessageKey, neighbors: usize) -> Vec<Evidence> {
    if key.0.is_empty() {
        return vec![Evidence::Unobserved; neighbors];
    }
    key.0
        .iter()
        .map(|&x| match kind {
            MessageKind::Action => Evidence::Action(x as usize),
            MessageKind::Observation => Evidence::Observation(x as usize),
            MessageKind::Belief => Evidence::Model(x as usize),
        })
        .collect()
}

/// Message-conditioned update for any message kind.
#[allow(clippy::too_many_arguments)]
pub fn se_net(
    b: &Belief,
    a_i: usize,
    o_i: usize,
    messages: &[Message],
    kind: MessageKind,
    frame: &InteractiveFrame,
    bound: f64,
) -> Result<Belief> {
    let inbox = read_messages(messages, kind, frame, bound)?;
    frame.update(b, a_i, o_i, &inbox.evidence)
}

/// Update after action messages `a_j^{t−1}`.
pub fn se_net_action(b: &Belief, a_i: usize, o_i: usize, messages: &[Message], frame: &InteractiveFrame) -> Result<Belief> {
    se_net(b, a_i, o_i, messages, MessageKind::Action, frame, f64::INFINITY)
}

/// Update after belief messages, each projected onto the candidate set
/// within `bound` total variation.
pub fn se_net_belief(
    b: &Belief,
    a_i: usize,
    o_i: usize,
    messages: &[Message],
    frame: &InteractiveFrame,
    bound: f64,
) -> Result<Belief> {
    se_net(b, a_i, o_i, messages, MessageKind::Belief, frame, bound)
}

/// Update after observation messages `o_j^t`.
pub fn se_net_observation(
    b: &Belief,
    a_i: usize,
    o_i: usize,
    messages: &[Message],
    frame: &InteractiveFrame,
) -> Result<Belief> {
    se_net(b, a_i, o_i, messages, MessageKind::Observation, frame, f64::INFINITY)
}

/// Joint update over several neighbors from per-neighbor evidence.
pub fn combine_neighbors(
    b: &Belief,
    a_i: usize,
    o_i: usize,
    evidence: &[Evidence],
    frame: &InteractiveFrame,
) -> Result<Belief> {
    frame.update(b, a_i, o_i, evidence)
}

/// `Σ_{a_∂} R(is, a_i, a_∂) Pr(a_∂ | m_∂, μ)`.
pub fn er_net(point: usize, a_i: usize, evidence: &[Evidence], frame: &InteractiveFrame) -> f64 {
    frame.point_reward(point, a_i, evidence)
}

/// An agent's interactive frame seen through a scenario's message kind.
#[derive(Debug, Clone, Copy)]
pub struct NetModel<'a> {
    pub frame: &'a InteractiveFrame,
    pub kind: MessageKind,
}

impl<'a> NetModel<'a> {
    pub fn new(frame: &'a InteractiveFrame, kind: MessageKind) -> Self {
        Self { frame, kind }
    }

    fn evidence(&self, key: &MessageKey) -> Vec<Evidence> {
        evidence_of(self.kind, key, self.frame.num_neighbors())
    }
}

impl BeliefModel for NetModel<'_> {
    fn num_actions(&self) -> usize {
        self.frame.frame().num_actions()
    }

    fn num_observations(&self) -> usize {
        self.frame.frame().num_observations()
    }

    fn discount(&self) -> f64 {
        self.frame.frame().discount()
    }

    fn expected_reward(&self, belief: &Belief, message: &MessageKey, action: usize) -> Result<f64> {
        self.frame.expected_reward(belief, action, &self.evidence(message))
    }

    fn successors(&self, belief: &Belief, message: &MessageKey, action: usize) -> Result<Vec<(f64, Option<Belief>)>> {
        self.frame.successors_with(belief, action, &self.evidence(message))
    }
}

/// `h(θ, a_i, μ, U)`: expected reward plus discounted, observation-weighted
/// value of the message-conditioned successors.
pub fn h_eval(model: &NetModel<'_>, b: &Belief, a_i: usize, message: &MessageKey, table: &ValueTable, lookup: Lookup) -> Result<f64> {
    value::q_value(model, b, message, a_i, table, lookup)
}

/// `(HU)(θ, μ) = max_{a_i} h(θ, a_i, μ, U)` at every point of `domain`.
pub fn net_backup(model: &NetModel<'_>, table: &ValueTable, domain: &Domain, lookup: Lookup) -> Result<ValueTable> {
    let mut out = ValueTable::new();
    for (b, m) in domain.points() {
        let best = value::q_values(model, b, m, table, lookup)?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        out.insert(TableKey::new(b, m), best);
    }
    Ok(out)
}

/// Actions within the tie margin of the best `h`.
pub fn net_opt(model: &NetModel<'_>, b: &Belief, message: &MessageKey, table: &ValueTable, lookup: Lookup) -> Result<Vec<usize>> {
    value::optimal_actions(model, b, message, table, lookup)
}
