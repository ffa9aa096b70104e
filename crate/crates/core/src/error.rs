use thiserror::Error;

/// Errors raised by the belief, value and simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("observation has zero likelihood under the prior (total mass {mass:e})")]
    ImpossibleObservation { mass: f64 },

    #[error("no tabulated value for a successor belief (message {message:?})")]
    MissingEntry { message: Vec<u32> },

    #[error("candidate model level {found} does not match required level {expected}")]
    LevelMismatch { expected: usize, found: usize },

    #[error("model nesting level {level} exceeds the configured bound {bound}")]
    RecursionDepthExceeded { level: usize, bound: usize },

    #[error("message kind {found} does not match the expected kind {expected}")]
    MessageKindMismatch { expected: String, found: String },

    #[error("belief message is {distance:.6} (total variation) from the nearest candidate model, bound is {bound}")]
    ProjectionTooFar { distance: f64, bound: f64 },

    #[error("communication graph is disconnected: node {unreachable} is unreachable from node 0")]
    DisconnectedGraph { unreachable: usize },

    #[error("communication graph has a self-loop at node {node}")]
    SelfLoop { node: usize },

    #[error("value tables have different key sets")]
    KeyMismatch,

    #[error("fixed-point iteration did not reach tolerance within {cap} iterations (last delta {delta:e})")]
    IterationCapExceeded { cap: usize, delta: f64 },

    #[error("averaged rate must be strictly positive, got {value}")]
    DegenerateAverage { value: f64 },

    #[error("rate grid too coarse: reward quantization error {error:.6} exceeds bound {bound}")]
    GridTooCoarse { error: f64, bound: f64 },

    #[error("invalid belief: {0}")]
    InvalidBelief(String),

    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("belief update failed at slot {slot} for agent {agent}: {source}")]
    BeliefUpdate {
        slot: usize,
        agent: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
