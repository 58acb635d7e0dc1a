//! Evaluation: segmentation overlap and boundary distance on binary masks,
//! mode coverage for point clouds, and discrete checks of the optimal
//! discriminator and the value of the adversarial game.

mod coverage;
mod segmentation;
mod theory;

pub use coverage::{mode_coverage, Coverage};
pub use segmentation::{
    boundary, dice, hd95, hd95_with, overlap_metrics, sensitivity, specificity, BinaryMask,
    Hd95Mode, Overlap,
};
pub use theory::{
    discriminator_value, lemma2_loss, optimal_discriminator, pair_value, random_simplex,
    theory_check, value_functional, DiscreteDist, GridSpec, NodeDistributions, TheoryReport,
    LOG4,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{0} is undefined: zero denominator")]
    Degenerate(&'static str),
    #[error("empty mask")]
    EmptyMask,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("distributions are on different grids")]
    GridMismatch,
    #[error("invalid distribution: {0}")]
    Distribution(String),
    #[error("support of the first distribution is not contained in the second (cell {0})")]
    Support(usize),
}
