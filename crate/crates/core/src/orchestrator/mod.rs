//! The training loop: a generator worker on the calling thread and one worker
//! thread per data node, talking only through protocol messages.
//!
//! Every round runs `disc_steps` discriminator phases followed by one
//! generator phase, with a barrier between rounds. Randomness is derived from
//! the master seed, so a run is reproducible across transports.

mod config;
mod data;
mod eval;
mod node;
mod run;

pub use config::{ConditionSource, EvalConfig, ExperimentConfig, NodeConfig, Setting};
pub use data::{derive_seed, node_base, participants, LocalData, Participant, SeedTag};
pub use eval::{complete_modality, evaluate, ChannelError, Evaluation};
pub use node::{NodeLog, NodeState};
pub use run::{run_training, Coordinator, RoundMetrics, TrainingOutcome};

use thiserror::Error;

use crate::gan::GanError;
use crate::metrics::MetricError;
use crate::protocol::TransportError;
use crate::toytask::ToyError;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("invalid config field `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Gan(#[from] GanError),
    #[error(transparent)]
    Toy(#[from] ToyError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("node {node}: expected {expected} in round {round}, got {got}")]
    Protocol {
        node: u32,
        round: u64,
        expected: String,
        got: String,
    },
    #[error("node {node} timed out in round {round}")]
    Timeout { node: u32, round: u64 },
    #[error("node {0} worker failed: {1}")]
    NodeFailed(u32, String),
}

impl OrchestratorError {
    pub(crate) fn invalid(field: &str, message: String) -> Self {
        Self::Invalid {
            field: field.to_string(),
            message,
        }
    }
}
