//! Measurement noise and the statistics used to judge its effect.

mod awgn;
mod calibrate;
mod ensemble;
mod metrics;

pub use awgn::{add_awgn, noisy_trace, NoiseSpec, NoiseTarget, SnrReference};
pub use calibrate::{calibrate_threshold, DEFAULT_KAPPA};
pub use ensemble::{noisy_lif_ensemble, EnsembleStats};
pub use metrics::{channel_nmse, estimation_error, event_metrics, DetectionReport};
