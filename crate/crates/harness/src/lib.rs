//! Deploys the two betting contracts on a simulated network and times how
//! long batches of bets take to resolve under each.

pub mod demo;
pub mod experiment;
pub mod report;
pub mod samples;
pub mod testbed;

use excall_core::chain::{ChainError, SubmitError};
use excall_netsim::NetError;
use excall_oracle::{RelayError, ServiceError};
use thiserror::Error;

pub use experiment::{run_experiment, ExperimentConfig, ExperimentReport, Impl, RepeatResult};
pub use report::{emit_report, summarize, write_csv, ConfigSummary, RatioRow, CSV_HEADER};
pub use samples::{deploy_samples, sample_programs, Deployed, SamplePrograms};
pub use testbed::{OracleSetup, Testbed, TestbedOptions};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("assembling {name}: {detail}")]
    Assemble { name: &'static str, detail: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error(transparent)]
    Relay(#[from] RelayError),
    #[error("submitting transaction: {0}")]
    Submit(#[from] SubmitError),
    #[error("timed out waiting for {0}")]
    Timeout(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
