//! SAFARI (server-assisted federated averaging), plain FedAvg and centralized
//! SGD, plus the admissible-`q` diagnostics computed from realised trajectories.

mod algorithm;
mod bounds;
mod config;
mod record;

pub use algorithm::{
    aggregate, local_update, run_centralized_sgd, run_fedavg, run_safari, server_step, SafariRun,
};
pub use bounds::{
    admissible_ratio_band, eta_bar, q_bound_nonconvex, q_bound_strongly_convex, q_fraction_nonconvex,
    q_fraction_strongly_convex, QBound,
};
pub use config::SafariConfig;
pub use record::{DiagnosticStats, RoundKind, RoundRecord, RunSummary};

/// Iterates with norm above this are treated as divergent.
pub const DIVERGENCE_NORM: f64 = 1e12;
