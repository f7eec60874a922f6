//! Monte-Carlo experiments on learnability: the two-point construction showing
//! that incomplete participation can make a class unlearnable, and the 1-D
//! threshold class used to check PAC rates of training on a mixture of client
//! and server data.

mod impossibility;
mod threshold;

pub use impossibility::{
    adversarial_select, impossibility_failure_rate, impossibility_trial, ImpossibilityInstance, ImpossibilityReport,
    Point, Sample, TrialOutcome,
};
pub use threshold::{
    centralized_baseline, check_positively_related, erm_threshold, pac_rate_experiment, sample_mixture,
    PacRateResult, PositivelyRelatedFit, ThresholdInstance,
};
