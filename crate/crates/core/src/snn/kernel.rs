use serde::{Deserialize, Serialize};

use crate::error::ValidationReport;

/// Time constants and thresholds shared by the SRM kernels and the LIF
/// membrane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelParams {
    /// Membrane time constant (s).
    pub tau_m: f64,
    /// Synaptic time constant (s).
    pub tau_syn: f64,
    /// Refractory time constant (s).
    pub tau_ref: f64,
    /// Leak conductance (S).
    pub g: f64,
    /// Rest potential.
    pub v_rest: f64,
    /// Firing threshold.
    pub u_thr: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            tau_m: 20e-3,
            tau_syn: 5e-3,
            tau_ref: 10e-3,
            g: 1.0,
            v_rest: 0.0,
            u_thr: 1.0,
        }
    }
}

impl KernelParams {
    pub fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::new();
        let pos = |x: f64| x > 0.0 && x.is_finite();
        r.require(pos(self.tau_m), "snn.kernel.tau_m", "must be > 0");
        r.require(pos(self.tau_syn), "snn.kernel.tau_syn", "must be > 0");
        r.require(pos(self.tau_ref), "snn.kernel.tau_ref", "must be > 0");
        r.require(pos(self.g), "snn.kernel.g", "must be > 0");
        r.require(
            self.tau_m != self.tau_syn,
            "snn.kernel.tau_syn",
            "degenerate kernel: tau_m == tau_syn makes the synaptic kernel vanish identically",
        );
        r.require(
            self.u_thr > self.v_rest,
            "snn.kernel.u_thr",
            "threshold must exceed the rest potential",
        );
        r
    }

    /// Per-step decay factors for a simulation step `dt`.
    pub fn discretize(&self, dt: f64) -> DiscreteKernel {
        DiscreteKernel {
            a_m: libm::exp(-dt / self.tau_m),
            a_s: libm::exp(-dt / self.tau_syn),
            a_r: libm::exp(-dt / self.tau_ref),
            u_thr: self.u_thr,
        }
    }
}

/// Exponential decay factors of the three SRM accumulators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteKernel {
    pub a_m: f64,
    pub a_s: f64,
    pub a_r: f64,
    pub u_thr: f64,
}

impl DiscreteKernel {
    /// Sum of the sampled synaptic kernel over all lags.
    pub fn alpha_mass(&self) -> f64 {
        1.0 / (1.0 - self.a_m) - 1.0 / (1.0 - self.a_s)
    }
}

/// Synaptic kernel `α(t) = e^{−t/τ_m} − e^{−t/τ_syn}`.
pub fn alpha_kernel(t: f64, k: &KernelParams) -> f64 {
    libm::exp(-t / k.tau_m) - libm::exp(-t / k.tau_syn)
}

/// Post-spike feedback kernel `β(t) = −e^{−t/τ_ref}`.
pub fn beta_kernel(t: f64, k: &KernelParams) -> f64 {
    -libm::exp(-t / k.tau_ref)
}

/// `H(x)`: 1 for `x > 0`, else 0.
#[inline]
pub fn heaviside(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}
