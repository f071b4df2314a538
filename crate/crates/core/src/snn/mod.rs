//! Spiking-network engine.
//!
//! Neurons follow the spike response model: the membrane potential is a
//! weighted sum of presynaptic spikes filtered by the synaptic kernel `α`,
//! plus the neuron's own past spikes filtered by the refractory kernel `β`.
//! Both convolutions are carried by exponential accumulators, so a step costs
//! the same regardless of history length.
//!
//! The [`lif`] submodule holds the RC membrane view of the same neuron and
//! its low-pass characteristics.

mod kernel;
mod layer;
mod lif;
mod network;
mod train;

pub use kernel::{alpha_kernel, beta_kernel, heaviside, DiscreteKernel, KernelParams};
pub use layer::{srm_layer_step, LayerState, LayerWeights};
pub use lif::{lif_frequency_response, lif_step, simulate_sine_gain, FrequencyResponse};
pub use network::{ForwardOutput, NetworkState, SpikeTrain, SrmNetwork};
pub use train::{evaluate, loss_gradient, train, Episode, TrainConfig, TrainReport};

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::ValidationReport;
use crate::events::EventThresholds;

/// Network, gating and training settings for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnnConfig {
    /// Widths of the spiking layers, encoding layer first.
    pub layer_sizes: Vec<usize>,
    /// Width of the non-spiking readout (2 or 4).
    pub outputs: usize,
    pub kernel: KernelParams,
    pub thresholds: EventThresholds,
    /// Retriggerable execution window after an event (s).
    pub active_window: f64,
    /// Age after which a held estimate is flagged stale (s).
    pub stale_after: f64,
    pub training: TrainConfig,
}

impl Default for SnnConfig {
    fn default() -> Self {
        Self {
            layer_sizes: vec![256, 256],
            outputs: 4,
            kernel: KernelParams::default(),
            thresholds: EventThresholds::default(),
            active_window: 0.1,
            stale_after: 0.2,
            training: TrainConfig::default(),
        }
    }
}

impl SnnConfig {
    pub fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::new();
        r.require(
            !self.layer_sizes.is_empty(),
            "snn.layer_sizes",
            "at least one spiking layer is required",
        );
        r.require(
            self.layer_sizes.iter().all(|&n| n > 0),
            "snn.layer_sizes",
            "layer widths must be > 0",
        );
        r.require(
            self.outputs == 2 || self.outputs == 4,
            "snn.outputs",
            "readout width must be 2 or 4",
        );
        r.require(
            self.active_window > 0.0 && self.active_window.is_finite(),
            "snn.active_window",
            "must be > 0",
        );
        r.require(
            self.stale_after > 0.0 && self.stale_after.is_finite(),
            "snn.stale_after",
            "must be > 0",
        );
        r.merge(self.kernel.validate());
        r.merge(self.thresholds.validate());
        r.merge(self.training.validate());
        r
    }
}
