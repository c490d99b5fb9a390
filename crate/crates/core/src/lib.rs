//! Fairness-regularized distribution locational marginal prices.
//!
//! A DSO broadcasts per-aggregator prices, aggregators answer with the
//! demand of their prosumers, and the DSO updates prices from the duals of a
//! linearized radial power-flow model until demands settle. An optional
//! Jain's-index term pushes the allocation towards equal demand per
//! prosumer per unit price.
//!
//! * [`network`]: feeder description and topology operators
//! * [`powerflow`]: exact AC sweep, linearization, constraint assembly
//! * [`agents`]: prosumers and aggregators
//! * [`fairness`]: Jain's index and its gradient
//! * [`solver`]: the market loop and a full-information reference solver
//! * [`harness`]: scenarios, sweeps and result files

pub mod agents;
pub mod error;
pub mod fairness;
pub mod format;
pub mod harness;
pub mod network;
pub mod powerflow;
pub mod solver;

pub use error::{Error, Result};
