//! Augmented latent force model, Kalman filtering and RTS smoothing.

mod estimates;
mod filter;
mod model;

pub use estimates::{estimate, extract_estimates, EstimationResult, Estimates, SignalEstimate};
pub use filter::{
    kalman_filter, kalman_filter_with, negative_log_likelihood, rts_smoother, FilterRun,
    GaussianBelief, UpdateForm,
};
pub use model::{
    assemble_augmented, response_map_for, AugmentedModel, DiscreteModel, Prior, ResponseMap,
    StateLayout,
};
