//! Risk-constrained adaptive deployment over a discrete route-cluster by time-of-day
//! space.
//!
//! A piecewise-constant-intensity surrogate is fitted to the deployments made so far;
//! the next deployment maximizes the learning gain among cells whose confidence-weighted
//! estimated risk stays under a tolerance. The [`deploy`] module runs that loop against a
//! ground-truth [`world`], alongside a uniformly random baseline, and [`replication`]
//! compares the two over many paired replications.

pub mod acquire;
pub mod deploy;
pub mod env;
pub mod error;
pub mod fit;
pub mod ingest;
pub mod replication;
pub mod rng;
pub mod surrogate;
pub mod world;

pub use acquire::{AcquireConfig, Selection};
pub use deploy::{IterationRecord, RunConfig, RunResult, Strategy, TerminatedBy};
pub use env::{Environment, EnvironmentSpace, TimeGrid};
pub use error::{Error, Result};
pub use fit::{DeploymentHistory, FitConfig, FitResult};
pub use replication::{BenchConfig, BenchSummary, PairedRun};
pub use surrogate::{IntensityModel, Theta};
pub use world::{ObservationMode, RiskTable, WorldConfig};
