//! Estimation of a scalar function of the parameters of a quantum process: the
//! process-norm variance bound, protocols that attain it, and Monte-Carlo checks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fisher;
pub mod geometry;
mod minimize;
pub mod norm;
pub mod operator;
pub mod protocol;
pub mod sim;

pub use error::{ChainLink, QprocError, Result};
pub use fisher::DerivativeMode;
pub use geometry::{FisherMatrix, OneForm, TangentVector};
pub use norm::{BMinResult, ProcessFamily};
pub use protocol::{Protocol, ProtocolKind, SignString, ZooAmplitudes};
pub use sim::{Estimator, EstimatorReport, OutcomeRecord};
