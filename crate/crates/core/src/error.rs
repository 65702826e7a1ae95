use thiserror::Error;

use crate::space::NodeId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid tree{}: {reason}", at_node(.node))]
    InvalidTree { node: Option<NodeId>, reason: String },

    #[error("level mismatch: expected level {expected}, got {found}")]
    LevelMismatch { expected: usize, found: usize },

    #[error("invalid level range: s={s}, t={t} (tree has {levels} levels)")]
    InvalidLevels { s: usize, t: usize, levels: usize },

    #[error("invalid density at node {node}: {reason}")]
    InvalidDensity { node: NodeId, reason: String },

    #[error("densities are not adjacent: first acts on ({r},{s}], second on ({s2},{t}]")]
    NonAdjacent { r: usize, s: usize, s2: usize, t: usize },

    #[error("empty family")]
    EmptyFamily,

    #[error("invalid driver: {0}")]
    InvalidDriver(String),

    #[error("g-expectation requires a binary tree; node {node} has {children} children")]
    NotBinary { node: NodeId, children: usize },

    #[error("driver violates the monotonicity guard at node {node}: C*sqrt(dt) = {value} > {bound}")]
    NonMonotoneDriver { node: NodeId, value: f64, bound: f64 },

    #[error("invalid risk family: {0}")]
    InvalidFamily(String),

    #[error("invalid strategy space: {0}")]
    InvalidStrategySpace(String),

    #[error("unbounded risk reduction at node {node}: inner infimum diverges along {direction:?}")]
    UnboundedRiskReduction { node: NodeId, direction: Vec<f64> },

    #[error("claim is not feasible: no strategy dominates it ({0})")]
    InfeasibleClaim(String),

    #[error("invalid delta schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidTree { .. } => "invalid_tree",
            Error::LevelMismatch { .. } => "level_mismatch",
            Error::InvalidLevels { .. } => "invalid_levels",
            Error::InvalidDensity { .. } => "invalid_density",
            Error::NonAdjacent { .. } => "non_adjacent",
            Error::EmptyFamily => "empty_family",
            Error::InvalidDriver(_) => "invalid_driver",
            Error::NotBinary { .. } => "not_binary",
            Error::NonMonotoneDriver { .. } => "non_monotone_driver",
            Error::InvalidFamily(_) => "invalid_family",
            Error::InvalidStrategySpace(_) => "invalid_strategy_space",
            Error::UnboundedRiskReduction { .. } => "unbounded_risk_reduction",
            Error::InfeasibleClaim(_) => "infeasible_claim",
            Error::InvalidSchedule(_) => "invalid_schedule",
            Error::InvalidGrid(_) => "invalid_grid",
            Error::Lp(_) => "lp",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

fn at_node(node: &Option<NodeId>) -> String {
    node.map(|n| format!(" at node {n}")).unwrap_or_default()
}
