//! Detectability and transmission-zero checks, and error metrics for
//! comparing estimates against simulated truth.

mod metrics;
mod observability;

pub use metrics::{
    correlation, drift_metric, normalized_rmse, peak_error, rms, rmse, signal_metrics, Biquad,
    SignalMetrics,
};
pub use observability::{
    detectability_check, detectability_of, transmission_zero_rank, DetectabilityReport,
    ModeCheck, STABILITY_TOL,
};
