//! Simulator and verification harness for server-assisted federated learning
//! under incomplete client participation.
//!
//! The crate is organised bottom-up:
//!
//! * [`objectives`] client and server losses with exact and stochastic gradients,
//! * [`population`] client populations, data partitioning and participation processes,
//! * [`fedopt`] the SAFARI mixed client/server update loop and plain FedAvg,
//! * [`learnability`] Monte-Carlo checks of the PAC-learnability constructions,
//! * [`harness`] configuration, sweeps, IDX ingestion, slope fitting and output files.
//!
//! All randomness is drawn from [`rng::Stream`]s keyed by `(seed, purpose, round, client)`,
//! so results do not depend on thread count or scheduling.

pub mod error;
pub mod fedopt;
pub mod harness;
pub mod learnability;
pub mod objectives;
pub mod par;
pub mod population;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use objectives::ModelPoint;
