//! Event synthesis and the plant/network interface.
//!
//! Three residuals flag dynamic conditions on each bus: the inductor-voltage
//! residual `Ω_i`, the capacitor-current residual `Ω_v`, and the
//! network-flow residual `Ω_o`. They are compared in per-unit against fixed
//! thresholds; any crossing wakes the node's network for a retriggerable
//! window, and estimates are held between windows.

mod derivative;
mod gate;
mod pipeline;
mod residual;
mod scaling;

pub use derivative::{DerivativeFilter, Median3};
pub use gate::{decode_outputs, encode_inputs, gate_inference, Estimate, GateState, GatedRun};
pub use pipeline::{
    episode_from_trace, feature_series, residual_series, EventPipeline, NodeCodec, Sample,
    TickOutput, FEATURES,
};
pub use residual::{
    synthesize_residuals, synthesize_residuals_algebraic, trigger, Channel, EventRecord,
    EventThresholds, ResidualInputs, Residuals,
};
pub use scaling::ChannelScaling;
