use serde::{Deserialize, Serialize};

use crate::ipomdp::ModelConfig;
use crate::net::MessageKind;
use crate::value::Lookup;

/// Loop controls for a decentralized run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub discount: f64,
    /// Convergence threshold on every agent's per-round value change.
    pub epsilon: f64,
    pub max_rounds: usize,
    /// Closure depth of the tabulated (belief, message) domain.
    pub expansion_depth: usize,
    /// Closure depth of candidate neighbor models.
    pub model_depth: usize,
    /// Resolution of candidate model updates that leave the closure.
    pub model_lookup: Lookup,
    pub nesting_bound: usize,
    pub message_type: MessageKind,
    pub seed: u64,
    /// Largest total-variation distance accepted when projecting a belief
    /// message onto a candidate model.
    pub projection_bound: f64,
    pub sweeps_per_round: usize,
    /// Worker threads; 0 uses the default pool.
    pub workers: usize,
    pub lookup: Lookup,
    /// Joint action applied before the first round; all zeros when absent.
    pub initial_action: Option<Vec<usize>>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            discount: 0.9,
            epsilon: 1e-6,
            max_rounds: 500,
            expansion_depth: 4,
            model_depth: 64,
            model_lookup: Lookup::Exact,
            nesting_bound: 2,
            message_type: MessageKind::Action,
            seed: 0,
            projection_bound: 0.25,
            sweeps_per_round: 1,
            workers: 0,
            lookup: Lookup::Nearest,
            initial_action: None,
        }
    }
}

impl SimulationConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.discount > 0.0 && self.discount < 1.0) {
            out.push(format!("simulation.discount must lie in (0, 1), got {}", self.discount));
        }
        if !(self.epsilon > 0.0) {
            out.push(format!("simulation.epsilon must be positive, got {}", self.epsilon));
        }
        if self.max_rounds == 0 {
            out.push("simulation.max_rounds must be at least 1".into());
        }
        if self.sweeps_per_round == 0 {
            out.push("simulation.sweeps_per_round must be at least 1".into());
        }
        if !(self.projection_bound >= 0.0) {
            out.push(format!(
                "simulation.projection_bound must be nonnegative, got {}",
                self.projection_bound
            ));
        }
        out
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            depth: self.model_depth,
            nesting_bound: self.nesting_bound,
            frontier: self.model_lookup,
            ..ModelConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        assert!(SimulationConfig::default().violations().is_empty());
    }

    #[test]
    fn unit_discount_rejected() {
        let cfg = SimulationConfig {
            discount: 1.0,
            ..Default::default()
        };
        assert_eq!(cfg.violations().len(), 1);
    }
}
