use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::topology::Line;
use crate::error::{Error, Result, ValidationReport};

/// Electrical parameters of one converter and its output filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConverterParams {
    /// Filter inductance (H).
    pub inductance: f64,
    /// Output capacitance (F).
    pub capacitance: f64,
    /// Input source voltage (V).
    pub v_in: f64,
    /// Rated power (W); with `rated_voltage` fixes the per-unit bases.
    pub rated_power: f64,
    /// Rated bus voltage (V).
    pub rated_voltage: f64,
}

impl Default for ConverterParams {
    fn default() -> Self {
        Self {
            inductance: 1e-3,
            capacitance: 1e-3,
            v_in: 100.0,
            rated_power: 500.0,
            rated_voltage: 48.0,
        }
    }
}

impl ConverterParams {
    pub fn rated_current(&self) -> f64 {
        self.rated_power / self.rated_voltage
    }

    /// Base impedance `V_b^2 / P_b`, converting a per-unit current error into
    /// volts and back.
    pub fn base_impedance(&self) -> f64 {
        self.rated_voltage * self.rated_voltage / self.rated_power
    }

    pub fn validate(&self, prefix: &str) -> ValidationReport {
        let mut r = ValidationReport::new();
        let pos = |x: f64| x > 0.0 && x.is_finite();
        r.require(
            pos(self.inductance),
            alloc::format!("{prefix}.inductance"),
            "must be > 0",
        );
        r.require(
            pos(self.capacitance),
            alloc::format!("{prefix}.capacitance"),
            "must be > 0",
        );
        r.require(
            pos(self.v_in),
            alloc::format!("{prefix}.v_in"),
            "must be > 0",
        );
        r.require(
            pos(self.rated_power),
            alloc::format!("{prefix}.rated_power"),
            "must be > 0",
        );
        r.require(
            pos(self.rated_voltage),
            alloc::format!("{prefix}.rated_voltage"),
            "must be > 0",
        );
        r
    }
}

/// Averaged converter state at one bus.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConverterState {
    /// Bus (capacitor) voltage, V.
    pub v: f64,
    /// Inductor current delivered to the bus, A.
    pub i: f64,
    /// Duty ratio, the converter's equivalent voltage gain in `[0, 1]`.
    pub d: f64,
    /// Input-side current drawn from the source, `d * i` in the averaged model.
    pub i_in: f64,
}

impl ConverterState {
    pub fn power(&self) -> f64 {
        self.v * self.i
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.i.is_finite() && self.d.is_finite() && self.i_in.is_finite()
    }
}

/// Local load: a conductance in parallel with a constant-power sink.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Load {
    pub conductance: f64,
    #[serde(default)]
    pub power: f64,
}

impl Load {
    pub fn current(&self, v: f64) -> f64 {
        let cp = if v > 1.0 { self.power / v } else { self.power };
        self.conductance * v + cp
    }
}

/// `(dv/dt, di/dt)` of the averaged buck model with `i_out` leaving the bus.
#[inline]
pub fn converter_derivative(v: f64, i: f64, d: f64, p: &ConverterParams, i_out: f64) -> (f64, f64) {
    ((i - i_out) / p.capacitance, (d * p.v_in - v) / p.inductance)
}

/// One classical RK4 step of a single converter with the external bus
/// current `i_out` (load plus net line outflow) held constant over `dt`.
pub fn step_converter(
    state: &ConverterState,
    params: &ConverterParams,
    i_out: f64,
    dt: f64,
) -> ConverterState {
    let d = state.d;
    let f = |v: f64, i: f64| converter_derivative(v, i, d, params, i_out);
    let (v0, i0) = (state.v, state.i);
    let (a1, b1) = f(v0, i0);
    let (a2, b2) = f(v0 + 0.5 * dt * a1, i0 + 0.5 * dt * b1);
    let (a3, b3) = f(v0 + 0.5 * dt * a2, i0 + 0.5 * dt * b2);
    let (a4, b4) = f(v0 + dt * a3, i0 + dt * b3);
    let v = v0 + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
    let i = i0 + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
    ConverterState {
        v,
        i,
        d,
        i_in: d * i,
    }
}

/// Coupled N-bus plant integrated with fixed-step RK4.
#[derive(Debug, Clone)]
pub struct Plant {
    pub params: Vec<ConverterParams>,
    pub loads: Vec<Load>,
    pub lines: Vec<Line>,
    pub states: Vec<ConverterState>,
    /// Converters out of service have `d = 0` and a blocking diode (`i >= 0`).
    pub online: Vec<bool>,
    scratch: Vec<f64>,
}

impl Plant {
    pub fn new(
        params: Vec<ConverterParams>,
        loads: Vec<Load>,
        lines: Vec<Line>,
        states: Vec<ConverterState>,
    ) -> Self {
        let n = params.len();
        Self {
            params,
            loads,
            lines,
            states,
            online: vec![true; n],
            scratch: vec![0.0; 12 * n],
        }
    }

    pub fn n(&self) -> usize {
        self.params.len()
    }

    /// Current leaving each bus through its load and the tie-lines.
    pub fn output_currents(&self, v: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.loads[k].current(v[k]);
        }
        for l in &self.lines {
            let f = l.conductance * (v[l.from] - v[l.to]);
            out[l.from] += f;
            out[l.to] -= f;
        }
    }

    /// Net line outflow per bus (loads excluded).
    pub fn line_outflow(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for l in &self.lines {
            let f = l.conductance * (v[l.from] - v[l.to]);
            out[l.from] += f;
            out[l.to] -= f;
        }
        out
    }

    // x = [v.., i..]
    fn derivative(&self, x: &[f64], dx: &mut [f64], i_out: &mut [f64]) {
        let n = self.n();
        let (v, i) = x.split_at(n);
        self.output_currents(v, i_out);
        for k in 0..n {
            let (dv, di) =
                converter_derivative(v[k], i[k], self.states[k].d, &self.params[k], i_out[k]);
            dx[k] = dv;
            dx[n + k] = di;
        }
    }

    /// Advances every bus by `dt` with duty ratios held (zero-order hold).
    pub fn step(&mut self, dt: f64, t: f64) -> Result<()> {
        let n = self.n();
        let mut s = core::mem::take(&mut self.scratch);
        {
            let (x0, rest) = s.split_at_mut(2 * n);
            let (k1, rest) = rest.split_at_mut(2 * n);
            let (k2, rest) = rest.split_at_mut(2 * n);
            let (k3, rest) = rest.split_at_mut(2 * n);
            let (k4, xt) = rest.split_at_mut(2 * n);
            let mut iout = vec![0.0; n];
            for k in 0..n {
                x0[k] = self.states[k].v;
                x0[n + k] = self.states[k].i;
            }
            self.derivative(x0, k1, &mut iout);
            for m in 0..2 * n {
                xt[m] = x0[m] + 0.5 * dt * k1[m];
            }
            self.derivative(xt, k2, &mut iout);
            for m in 0..2 * n {
                xt[m] = x0[m] + 0.5 * dt * k2[m];
            }
            self.derivative(xt, k3, &mut iout);
            for m in 0..2 * n {
                xt[m] = x0[m] + dt * k3[m];
            }
            self.derivative(xt, k4, &mut iout);
            for k in 0..n {
                let st = &mut self.states[k];
                st.v = x0[k] + dt / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
                let m = n + k;
                st.i = x0[m] + dt / 6.0 * (k1[m] + 2.0 * k2[m] + 2.0 * k3[m] + k4[m]);
                if !self.online[k] && st.i < 0.0 {
                    st.i = 0.0;
                }
                st.i_in = st.d * st.i;
            }
        }
        self.scratch = s;
        for (k, st) in self.states.iter().enumerate() {
            if !st.is_finite() {
                return Err(Error::Divergence {
                    node: k,
                    time: t + dt,
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> ConverterParams {
        ConverterParams::default()
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        // d * v_in = v and i balances the load current.
        let st = ConverterState {
            v: 48.0,
            i: 9.6,
            d: 0.48,
            i_in: 0.48 * 9.6,
        };
        let next = step_converter(&st, &p(), 9.6, 1e-5);
        assert!((next.v - 48.0).abs() < 1e-12);
        assert!((next.i - 9.6).abs() < 1e-12);
    }

    #[test]
    fn disconnected_source_discharges() {
        let mut st = ConverterState {
            v: 48.0,
            i: 0.0,
            d: 0.0,
            i_in: 0.0,
        };
        let first = step_converter(&st, &p(), 0.0, 1e-5);
        // di/dt = -v/L at the first instant
        assert!(first.i < 0.0);
        assert!(((first.i - 0.0) / 1e-5 + 48.0 / 1e-3).abs() < 1.0);
        for _ in 0..50 {
            st = step_converter(&st, &p(), 0.0, 1e-5);
        }
        assert!(st.v < 48.0 && st.i < 0.0);
    }

    // Explicit midpoint at a 100x finer step serves as the reference.
    fn midpoint_reference(
        mut v: f64,
        mut i: f64,
        d: f64,
        i_out: f64,
        t_end: f64,
        h: f64,
    ) -> (f64, f64) {
        let pr = p();
        let f = |v: f64, i: f64| converter_derivative(v, i, d, &pr, i_out);
        let steps = libm::round(t_end / h) as usize;
        for _ in 0..steps {
            let (a1, b1) = f(v, i);
            let (a2, b2) = f(v + 0.5 * h * a1, i + 0.5 * h * b1);
            v += h * a2;
            i += h * b2;
        }
        (v, i)
    }

    fn two_bus() -> Plant {
        let loads = vec![
            Load {
                conductance: 0.2,
                power: 150.0,
            },
            Load {
                conductance: 0.3,
                power: 0.0,
            },
        ];
        let lines = vec![Line {
            from: 0,
            to: 1,
            conductance: 2.0,
        }];
        let states = vec![
            ConverterState {
                v: 46.0,
                i: 8.0,
                d: 0.55,
                i_in: 0.0,
            },
            ConverterState {
                v: 49.0,
                i: 14.0,
                d: 0.5,
                i_in: 0.0,
            },
        ];
        Plant::new(vec![p(), p()], loads, lines, states)
    }

    fn run_for(t_end: f64, h: f64) -> Vec<f64> {
        let mut plant = two_bus();
        let steps = libm::round(t_end / h) as usize;
        for n in 0..steps {
            plant.step(h, n as f64 * h).unwrap();
        }
        plant.states.iter().flat_map(|s| [s.v, s.i]).collect()
    }

    #[test]
    fn step_halving_shows_fourth_order() {
        let t_end = 5e-3;
        let reference = run_for(t_end, 1e-4 / 128.0);
        let err = |h: f64| {
            run_for(t_end, h)
                .iter()
                .zip(&reference)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let e = [err(2e-4), err(1e-4), err(5e-5)];
        for w in e.windows(2) {
            let order = libm::log2(w[0] / w[1]);
            assert!(order > 3.5 && order < 4.5, "{e:?} order {order}");
        }
    }

    #[test]
    fn duty_step_matches_refined_reference() {
        // Start at the d = 0.5 equilibrium with a 10 A constant-current load,
        // then step d to 0.6 and follow the undamped LC response for 10 ms.
        let load = 10.0;
        let mut st = ConverterState {
            v: 50.0,
            i: 10.0,
            d: 0.6,
            i_in: 0.0,
        };
        let dt = 1e-5;
        let (mut rv, mut ri) = (50.0, 10.0);
        for _ in 0..10 {
            for _ in 0..100 {
                st = step_converter(&st, &p(), load, dt);
            }
            let (v, i) = midpoint_reference(rv, ri, 0.6, load, 1e-3, dt / 100.0);
            rv = v;
            ri = i;
            assert!(((st.v - rv) / rv).abs() < 1e-6, "v {} vs {}", st.v, rv);
            assert!(
                ((st.i - ri) / ri.abs().max(1.0)).abs() < 1e-6,
                "i {} vs {}",
                st.i,
                ri
            );
        }
    }

    #[test]
    fn lines_conserve_charge() {
        // Inductors frozen (huge L, zero current) and no loads: only lines act.
        let params = vec![
            ConverterParams {
                inductance: 1e12,
                ..p()
            },
            ConverterParams {
                inductance: 1e12,
                capacitance: 2e-3,
                ..p()
            },
            ConverterParams {
                inductance: 1e12,
                capacitance: 0.5e-3,
                ..p()
            },
        ];
        let lines = vec![
            Line {
                from: 0,
                to: 1,
                conductance: 2.0,
            },
            Line {
                from: 1,
                to: 2,
                conductance: 1.0,
            },
        ];
        let states = vec![
            ConverterState {
                v: 50.0,
                ..Default::default()
            },
            ConverterState {
                v: 47.0,
                ..Default::default()
            },
            ConverterState {
                v: 44.0,
                ..Default::default()
            },
        ];
        let mut plant = Plant::new(params.clone(), vec![Load::default(); 3], lines, states);
        let q = |pl: &Plant| {
            pl.states
                .iter()
                .zip(&params)
                .map(|(s, p)| s.v * p.capacitance)
                .sum::<f64>()
        };
        let q0 = q(&plant);
        for n in 0..1000 {
            plant.step(1e-5, n as f64 * 1e-5).unwrap();
        }
        assert!((q(&plant) - q0).abs() < 1e-9);
        // voltages equalised towards the charge-weighted mean
        assert!((plant.states[0].v - plant.states[2].v).abs() < 6.0);
    }

    #[test]
    fn divergence_names_node_and_time() {
        let mut plant = Plant::new(
            vec![p()],
            vec![Load::default()],
            vec![],
            vec![ConverterState {
                v: f64::NAN,
                ..Default::default()
            }],
        );
        match plant.step(1e-5, 0.25) {
            Err(Error::Divergence { node, time }) => {
                assert_eq!(node, 0);
                assert!((time - 0.25001).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
