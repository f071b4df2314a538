use super::topology::GridTopology;

/// PI regulator with a clamped integral contribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pi {
    pub kp: f64,
    pub ki: f64,
    pub integral: f64,
    /// Bound on `|ki * integral|` in output units; infinite disables the clamp.
    pub limit: f64,
}

impl Pi {
    pub fn new(kp: f64, ki: f64, limit: f64) -> Self {
        Self {
            kp,
            ki,
            integral: 0.0,
            limit,
        }
    }

    /// Integrates `e` over `dt` (forward rectangle) then returns the output.
    pub fn update(&mut self, e: f64, dt: f64) -> f64 {
        self.integral += e * dt;
        if self.ki != 0.0 && self.limit.is_finite() {
            let bound = self.limit / self.ki.abs();
            self.integral = self.integral.clamp(-bound, bound);
        }
        self.kp * e + self.ki * self.integral
    }

    pub fn output(&self, e: f64) -> f64 {
        self.kp * e + self.ki * self.integral
    }
}

/// Per-node secondary controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerState {
    /// Latest observer estimate of the network-average voltage.
    pub v_bar: f64,
    /// Voltage-restoration regulator (`δv^I`).
    pub primary: Pi,
    /// Power-sharing regulator (`δv^II`).
    pub secondary: Pi,
    /// Global average-voltage reference.
    pub v_ref: f64,
}

impl ControllerState {
    /// Integrators are clamped to `± fraction * v_ref`.
    pub fn new(v_ref: f64, kp_i: f64, ki_i: f64, kp_ii: f64, ki_ii: f64, fraction: f64) -> Self {
        let limit = fraction * v_ref;
        Self {
            v_bar: v_ref,
            primary: Pi::new(kp_i, ki_i, limit),
            secondary: Pi::new(kp_ii, ki_ii, limit),
            v_ref,
        }
    }
}

/// `(e_I, e_II)` for node `k`: average-voltage error and the weighted power
/// mismatch with its neighbours.
pub fn control_errors(
    k: usize,
    v_bar_k: f64,
    powers: &[f64],
    topology: &GridTopology,
    v_ref: f64,
) -> (f64, f64) {
    let e_i = v_ref - v_bar_k;
    let e_ii = topology
        .neighbors(k)
        .map(|j| topology.a(k, j) * (powers[j] - powers[k]))
        .sum();
    (e_i, e_ii)
}

/// Local voltage command `v* = v_ref_k + δv^I + δv^II`.
pub fn voltage_command(
    ctrl: &mut ControllerState,
    e_i: f64,
    e_ii: f64,
    v_ref_k: f64,
    dt: f64,
) -> f64 {
    let dv1 = ctrl.primary.update(e_i, dt);
    let dv2 = ctrl.secondary.update(e_ii, dt);
    v_ref_k + dv1 + dv2
}

/// Output of the inner cascade for one tick.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InnerOutput {
    pub d: f64,
    pub i_ref: f64,
    /// Voltage tracking error `v* − v` (V).
    pub e_v: f64,
    /// Current tracking error `i_ref − i` (A).
    pub e_i: f64,
}

/// Cascaded voltage and current PI loops producing the duty ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerLoop {
    pub voltage: Pi,
    pub current: Pi,
    pub i_max: f64,
}

impl InnerLoop {
    pub fn update(&mut self, v_star: f64, v: f64, i: f64, v_in: f64, dt: f64) -> InnerOutput {
        let e_v = v_star - v;
        let i_ref = self.voltage.update(e_v, dt).clamp(-self.i_max, self.i_max);
        let e_i = i_ref - i;
        let held = self.current.integral;
        let u = self.current.update(e_i, dt);
        let raw = (v + u) / v_in;
        if (raw > 1.0 && e_i > 0.0) || (raw < 0.0 && e_i < 0.0) {
            self.current.integral = held;
        }
        InnerOutput {
            d: raw.clamp(0.0, 1.0),
            i_ref,
            e_v,
            e_i,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Line;
    use alloc::vec;

    #[test]
    fn regulated_state_has_zero_errors() {
        let t = GridTopology::two_bus(2.0, 1.0);
        assert_eq!(
            control_errors(0, 48.0, &[100.0, 100.0], &t, 48.0),
            (0.0, 0.0)
        );
    }

    #[test]
    fn power_mismatch_two_bus() {
        let t = GridTopology::two_bus(2.0, 1.0);
        let (_, e2) = control_errors(1, 48.0, &[100.0, 80.0], &t, 48.0);
        assert_eq!(e2, 20.0);
    }

    #[test]
    fn line_graph_cancels_symmetric_mismatch() {
        let t = GridTopology::from_lines(
            3,
            vec![
                Line {
                    from: 0,
                    to: 1,
                    conductance: 1.0,
                },
                Line {
                    from: 1,
                    to: 2,
                    conductance: 1.0,
                },
            ],
            1.0,
        );
        let (_, e) = control_errors(1, 48.0, &[90.0, 100.0, 110.0], &t, 48.0);
        assert_eq!(e, 0.0);
    }

    #[test]
    fn zero_errors_leave_reference() {
        let mut c = ControllerState::new(48.0, 0.5, 10.0, 0.01, 1.0, 0.1);
        assert_eq!(voltage_command(&mut c, 0.0, 0.0, 48.0, 1e-4), 48.0);
    }

    #[test]
    fn single_step_pi_arithmetic() {
        let mut c = ControllerState::new(48.0, 0.5, 10.0, 0.0, 0.0, 0.1);
        let v = voltage_command(&mut c, 1.0, 0.0, 48.0, 1e-4);
        assert!((v - 48.0 - 0.501).abs() < 1e-12);
    }

    #[test]
    fn ramp_matches_discrete_closed_form() {
        // e_n = r * n * dt; rectangle-rule integral sums to r dt^2 n(n+1)/2.
        let (kp, ki, r, dt) = (0.5, 10.0, 3.0, 1e-4);
        let mut pi = Pi::new(kp, ki, f64::INFINITY);
        for n in 1..=5000u32 {
            let n = n as f64;
            let out = pi.update(r * n * dt, dt);
            let closed = kp * r * n * dt + ki * r * dt * dt * n * (n + 1.0) / 2.0;
            assert!((out - closed).abs() < 1e-9, "n={n}: {out} vs {closed}");
        }
    }

    #[test]
    fn anti_windup_bounds_integral_action() {
        let mut c = ControllerState::new(48.0, 0.0, 10.0, 0.0, 0.0, 0.1);
        let mut v = 0.0;
        for _ in 0..100_000 {
            v = voltage_command(&mut c, 5.0, 0.0, 48.0, 1e-4);
        }
        assert!((v - 48.0 - 4.8).abs() < 1e-12);
    }

    #[test]
    fn inner_loop_saturates_duty() {
        let mut il = InnerLoop {
            voltage: Pi::new(1.0, 100.0, 20.0),
            current: Pi::new(2.0, 500.0, 50.0),
            i_max: 20.0,
        };
        let out = il.update(60.0, 10.0, 0.0, 30.0, 1e-4);
        assert_eq!(out.d, 1.0);
        assert_eq!(out.i_ref, 20.0);
        // integral held while saturated
        assert_eq!(il.current.integral, 0.0);
        assert_eq!(out.e_v, 50.0);
    }
}
