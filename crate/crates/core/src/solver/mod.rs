//! Round-synchronous decentralized planning: every round each agent observes,
//! exchanges messages with its neighbors, filters its interactive belief,
//! applies a backup sweep to its value table and acts.

mod config;
mod diagnostics;
mod env;
mod runtime;
mod trace;

pub use config::SimulationConfig;
pub use diagnostics::{
    check_contraction, check_monotonicity, check_pf_utility, fixed_point_iterate, fixed_point_uniqueness,
    DiagnosticReport, PF_RESIDUAL_BOUND, SLACK,
};
pub use env::{env_step, EnvState, TabularEnv};
pub use runtime::{run_decentralized_bp, NetAgent, RunOutcome, Scenario};
pub use trace::{AgentRecord, Summary, TraceEvent};
