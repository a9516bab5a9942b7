use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("invalid tensor shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: &'static str },
    #[error("backward root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("invalid supernet: {0}")]
    InvalidGraph(String),
    #[error("node {0} has no computed inputs")]
    DanglingNode(usize),
    #[error("unknown edge id {0}")]
    UnknownEdge(usize),
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("invalid mixture on edge {edge}: {reason}")]
    InvalidMixture { edge: usize, reason: &'static str },
    #[error("invalid distribution parameters: {0}")]
    InvalidParams(String),
    #[error("missing zeroed-edge reward for edge slot {0}")]
    MissingZeroedReward(usize),
    #[error("edge taps for edge {0} lack a backward gradient")]
    MissingTapGradient(usize),
    #[error("gumbel temperature must be positive, got {0}")]
    InvalidTemperature(f64),
    #[error("schedule horizon must be positive")]
    ZeroHorizon,
    #[error("schedule step {step} exceeds horizon {horizon}")]
    StepOutOfRange { step: u64, horizon: u64 },
    #[error("architecture space has {size} members, cap is {cap}")]
    StateSpaceTooLarge { size: u128, cap: u128 },
    #[error("reward must be strictly positive, got {0} for some architecture")]
    NonPositiveReward(f64),
    #[error("non-finite {what} at iteration {iteration}{}", edge.map(|e| alloc::format!(", edge slot {e}")).unwrap_or_default())]
    NonFinite {
        iteration: u64,
        edge: Option<usize>,
        what: &'static str,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("process-best selection requested but no architecture was evaluated")]
    EmptyHistory,
}
