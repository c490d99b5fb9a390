use thiserror::Error;

/// Everything that can go wrong while building or running a market.
#[derive(Debug, Error)]
pub enum Error {
    #[error("feeder line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("cycle through node {0}")]
    Cycle(String),

    #[error("node {0} is not connected to the substation")]
    Disconnected(String),

    #[error("duplicate line {0} -> {1}")]
    DuplicateLine(String, String),

    #[error("line into node {0} has a nonpositive impedance pair")]
    BadImpedance(String),

    #[error("aggregator {label} placed at unknown node {node}")]
    UnknownAggregatorNode { label: String, node: String },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("power flow did not converge after {sweeps} sweeps (last update {last_update:e})")]
    NoConvergence { sweeps: usize, last_update: f64 },

    #[error("voltage collapse at node {node}: {voltage} pu")]
    VoltageCollapse { node: usize, voltage: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("reference operating point violates {0}")]
    InfeasibleReference(String),

    #[error("infeasible constraint set: {0}")]
    Infeasible(String),

    #[error("price must be positive, got {0}")]
    NonPositivePrice(f64),

    #[error("consumption must be nonnegative, got {0}")]
    NegativeConsumption(f64),

    #[error("fairness mask is empty")]
    EmptyMask,

    #[error("allocation is identically zero")]
    ZeroAllocation,

    #[error("aggregator {0} sits inside the fairness deadband")]
    NonsmoothPoint(usize),

    #[error("prices diverged at iteration {0}")]
    Diverged(usize),

    #[error("unknown scenario kind {0:?}")]
    UnknownScenario(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
