use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::ValidationReport;
use crate::grid::ConverterParams;

/// Per-unit trigger levels for the three residual channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventThresholds {
    pub sigma_v: f64,
    pub sigma_i: f64,
    pub sigma_o: f64,
}

impl Default for EventThresholds {
    fn default() -> Self {
        Self {
            sigma_v: 0.01,
            sigma_i: 0.002,
            sigma_o: 0.0039,
        }
    }
}

impl EventThresholds {
    pub fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::new();
        for (name, x) in [
            ("snn.thresholds.sigma_v", self.sigma_v),
            ("snn.thresholds.sigma_i", self.sigma_i),
            ("snn.thresholds.sigma_o", self.sigma_o),
        ] {
            r.require(x > 0.0 && x.is_finite(), name, "threshold must be > 0");
        }
        r
    }

    pub fn get(&self, c: Channel) -> f64 {
        match c {
            Channel::V => self.sigma_v,
            Channel::I => self.sigma_i,
            Channel::O => self.sigma_o,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    V,
    I,
    O,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::V, Channel::I, Channel::O];

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::V => "V",
            Channel::I => "I",
            Channel::O => "O",
        }
    }
}

/// A residual that crossed its threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    pub t: f64,
    pub node: usize,
    pub channel: Channel,
    /// Per-unit residual.
    pub magnitude: f64,
    pub threshold: f64,
}

/// Signals entering residual synthesis for one bus and one tick.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ResidualInputs {
    pub v: f64,
    pub i: f64,
    pub v_dot: f64,
    pub i_dot: f64,
    /// Voltage-loop tracking error `v* − v` (V).
    pub e_v: f64,
    /// Current-loop tracking error `i_ref − i` (A).
    pub e_i: f64,
    /// Derivative of the net line current leaving the bus (A/s).
    pub i_flow_dot: f64,
    pub d: f64,
    pub v_in: f64,
    pub i_in: f64,
}

/// Residuals in physical units: `omega_v` and `omega_o` in A, `omega_i` in V.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Residuals {
    pub omega_v: f64,
    pub omega_i: f64,
    pub omega_o: f64,
}

impl Residuals {
    /// Divides by the converter's rated current and voltage.
    pub fn per_unit(&self, p: &ConverterParams) -> Self {
        let ib = p.rated_current();
        Self {
            omega_v: self.omega_v / ib,
            omega_i: self.omega_i / p.rated_voltage,
            omega_o: self.omega_o / ib,
        }
    }

    pub fn get(&self, c: Channel) -> f64 {
        match c {
            Channel::V => self.omega_v,
            Channel::I => self.omega_i,
            Channel::O => self.omega_o,
        }
    }
}

fn assemble(inp: &ResidualInputs, p: &ConverterParams, v_l: f64, dt: f64) -> Residuals {
    let zb = p.base_impedance();
    let i_c = p.capacitance * inp.v_dot;
    Residuals {
        omega_i: v_l - zb * inp.e_i,
        omega_v: i_c - inp.e_v / zb,
        omega_o: i_c - dt * inp.i_flow_dot,
    }
}

/// Residuals with the inductor voltage taken from the current derivative,
/// `v_L = L·di/dt`.
///
/// `Ω_i = v_L − Z_b e_i`, `Ω_v = C dv/dt − e_v / Z_b`,
/// `Ω_o = C dv/dt − dt·dI_flow/dt`; the base impedance brings the tracking
/// errors into the residual's units and `dt` is the sampling step.
pub fn synthesize_residuals(inp: &ResidualInputs, p: &ConverterParams, dt: f64) -> Residuals {
    assemble(inp, p, p.inductance * inp.i_dot, dt)
}

/// Same residuals with the inductor voltage taken from the averaged
/// converter relation `v_L = d·v_in − v`, which needs no differentiation of
/// the current.
pub fn synthesize_residuals_algebraic(
    inp: &ResidualInputs,
    p: &ConverterParams,
    dt: f64,
) -> Residuals {
    assemble(inp, p, inp.d * inp.v_in - inp.v, dt)
}

/// One record per channel whose per-unit residual strictly exceeds its
/// threshold.
pub fn trigger(pu: &Residuals, th: &EventThresholds, t: f64, node: usize) -> Vec<EventRecord> {
    Channel::ALL
        .iter()
        .filter_map(|&c| {
            let m = pu.get(c);
            let s = th.get(c);
            (m.abs() > s).then_some(EventRecord {
                t,
                node,
                channel: c,
                magnitude: m,
                threshold: s,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ConverterParams {
        ConverterParams::default()
    }

    #[test]
    fn quiescent_inputs_give_zero() {
        let p = params();
        let inp = ResidualInputs {
            v: 48.0,
            i: 9.6,
            d: 0.48,
            v_in: 100.0,
            ..Default::default()
        };
        assert_eq!(synthesize_residuals(&inp, &p, 1e-4), Residuals::default());
        assert_eq!(
            synthesize_residuals_algebraic(&inp, &p, 1e-4),
            Residuals::default()
        );
    }

    #[test]
    fn capacitor_current_arithmetic() {
        let p = params();
        let inp = ResidualInputs {
            v_dot: 10.0,
            ..Default::default()
        };
        let r = synthesize_residuals(&inp, &p, 1e-4);
        assert!((r.omega_v - 0.01).abs() < 1e-15);
    }

    #[test]
    fn tracking_errors_in_base_units() {
        let p = params();
        let zb = p.base_impedance();
        let inp = ResidualInputs {
            e_i: 1.0,
            e_v: zb,
            ..Default::default()
        };
        let r = synthesize_residuals(&inp, &p, 1e-4);
        assert!((r.omega_i + zb).abs() < 1e-12);
        assert!((r.omega_v + 1.0).abs() < 1e-12);
    }

    #[test]
    fn threshold_boundary_is_strict() {
        let th = EventThresholds::default();
        let at = Residuals {
            omega_v: 0.01,
            omega_i: -0.002,
            omega_o: 0.0039,
        };
        assert!(trigger(&at, &th, 0.0, 0).is_empty());
        let above = Residuals {
            omega_v: 0.011,
            ..Default::default()
        };
        let ev = trigger(&above, &th, 0.5, 1);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].channel, Channel::V);
        assert_eq!((ev[0].t, ev[0].node), (0.5, 1));
    }

    #[test]
    fn below_threshold_is_silent() {
        let th = EventThresholds::default();
        let r = Residuals {
            omega_v: 0.005,
            omega_i: 0.001,
            omega_o: -0.001,
        };
        assert!(trigger(&r, &th, 0.0, 0).is_empty());
    }

    #[test]
    fn non_positive_threshold_rejected() {
        let th = EventThresholds {
            sigma_o: 0.0,
            ..Default::default()
        };
        assert_eq!(th.validate().violations.len(), 1);
    }
}
