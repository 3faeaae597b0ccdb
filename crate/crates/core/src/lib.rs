//! Off-policy evaluation from adaptively collected bandit logs.
//!
//! The crate covers the full pipeline: logged data types and assumption
//! checks, LIBSVM ingestion, synthetic and classification environments,
//! adaptive behavior policies, sequentially fitted nuisance regressions and
//! the estimator family built on the augmented inverse-probability score.

pub mod envs;
pub mod estimators;
pub mod error;
pub mod ingest;
pub mod nuisance;
pub mod policies;
pub mod types;

pub use error::{OpeError, Result};
pub use types::{
    validate_log, EstimateReport, HistoricalLog, ImportanceRatioBound, LoggedSample, Method, Policy, PolicyKind,
    SharedPolicy, ValidationReport, Violation,
};
