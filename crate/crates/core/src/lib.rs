pub mod autodiff;
pub mod cli;
pub mod gan;
pub mod metrics;
pub mod orchestrator;
pub mod protocol;
pub mod toytask;
