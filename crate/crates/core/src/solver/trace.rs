use serde::Serialize;
use serde_json::value::RawValue;

use crate::net::{decimal, Message};

/// One agent's round.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentRecord {
    pub slot: usize,
    pub agent: usize,
    pub action: usize,
    pub observation: usize,
    /// Reward of the previous environment step.
    pub reward: f64,
    /// Sup-norm change of the value table in this round.
    pub value_delta: f64,
    /// Entropy (nats) of the updated interactive belief.
    pub belief_entropy: f64,
    /// Largest projection distance among incoming belief messages.
    pub projection_distance: Option<f64>,
    /// Table entries added this round (initialized at 0).
    pub new_keys: usize,
    pub domain_size: usize,
    /// Tabulated value of the agent's current (belief, message) point.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub converged: bool,
    pub rounds: usize,
    pub final_max_delta: f64,
    pub final_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceEvent {
    Message(Message),
    Agent(AgentRecord),
    Summary(Summary),
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Record {
    Agent {
        slot: usize,
        agent: usize,
        action: usize,
        observation: usize,
        reward: Box<RawValue>,
        value_delta: Box<RawValue>,
        belief_entropy: Box<RawValue>,
        projection_distance: Option<Box<RawValue>>,
        new_keys: usize,
        domain_size: usize,
        value: Box<RawValue>,
    },
    Summary {
        converged: bool,
        rounds: usize,
        final_max_delta: Box<RawValue>,
        final_values: Vec<Box<RawValue>>,
    },
}

impl TraceEvent {
    /// The event as one line of JSON (no trailing newline). Every record has
    /// a `type` field: `message`, `agent` or `summary`.
    pub fn to_json_line(&self) -> String {
        let record = match self {
            TraceEvent::Message(m) => {
                let wire = m.to_wire();
                return format!("{{\"type\":\"message\",{}", &wire[1..]);
            }
            TraceEvent::Agent(a) => Record::Agent {
                slot: a.slot,
                agent: a.agent,
                action: a.action,
                observation: a.observation,
                reward: decimal(a.reward),
                value_delta: decimal(a.value_delta),
                belief_entropy: decimal(a.belief_entropy),
                projection_distance: a.projection_distance.map(decimal),
                new_keys: a.new_keys,
                domain_size: a.domain_size,
                value: decimal(a.value),
            },
            TraceEvent::Summary(s) => Record::Summary {
                converged: s.converged,
                rounds: s.rounds,
                final_max_delta: decimal(s.final_max_delta),
                final_values: s.final_values.iter().map(|v| decimal(*v)).collect(),
            },
        };
        serde_json::to_string(&record).expect("trace record serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Payload;

    #[test]
    fn records_carry_type_tags() {
        let m = TraceEvent::Message(Message {
            sender: 0,
            slot: 1,
            payload: Payload::Action(2),
        });
        assert_eq!(
            m.to_json_line(),
            r#"{"type":"message","slot":1,"sender":0,"kind":"action","payload":2}"#
        );
        let s = TraceEvent::Summary(Summary {
            converged: true,
            rounds: 3,
            final_max_delta: 1e-7,
            final_values: vec![2.0],
        });
        assert_eq!(
            s.to_json_line(),
            r#"{"type":"summary","converged":true,"rounds":3,"final_max_delta":0.000000100000,"final_values":[2.000000000000]}"#
        );
    }
}
