use alloc::vec;
use alloc::vec::Vec;

use super::control::{control_errors, voltage_command, ControllerState, InnerLoop, Pi};
use super::observer::ConsensusObserver;
use super::plant::{ConverterState, Plant};
use super::scenario::{DisturbanceKind, PowerSource, ScenarioConfig};
use super::topology::GridTopology;
use crate::error::Result;

/// Everything sampled or computed for one node on one control tick.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TraceRow {
    pub t: f64,
    pub node: usize,
    pub v: f64,
    pub i: f64,
    pub p: f64,
    pub v_bar: f64,
    pub v_star: f64,
    pub d: f64,
    pub i_ref: f64,
    pub e_v: f64,
    pub e_i: f64,
    /// Current leaving the bus through load and lines (A).
    pub i_out: f64,
    /// Net current leaving the bus through the lines (A).
    pub line_out: f64,
    pub v_in: f64,
    pub online: bool,
    /// Estimate of the first neighbour's voltage and current.
    pub est_v: f64,
    pub est_i: f64,
    pub est_stale: bool,
    pub event_v: bool,
    pub event_i: bool,
    pub event_o: bool,
}

/// Time-indexed record of a run: `rows[tick * n_nodes + node]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub dt: f64,
    pub n_nodes: usize,
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn ticks(&self) -> usize {
        self.rows.len().checked_div(self.n_nodes).unwrap_or(0)
    }

    pub fn row(&self, tick: usize, node: usize) -> &TraceRow {
        &self.rows[tick * self.n_nodes + node]
    }

    pub fn series(&self, node: usize, f: impl Fn(&TraceRow) -> f64) -> Vec<f64> {
        (0..self.ticks()).map(|n| f(self.row(n, node))).collect()
    }

    /// Fraction of node-ticks on which any event channel fired.
    pub fn event_ratio(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        let hits = self
            .rows
            .iter()
            .filter(|r| r.event_v || r.event_i || r.event_o)
            .count();
        hits as f64 / self.rows.len() as f64
    }
}

/// Per-tick hook through which event synthesis and remote-state inference
/// ride along with the plant.
pub trait RemoteEstimator {
    /// Sees one tick's rows (negative `t` during the settling pre-roll) and
    /// fills the estimate and event fields.
    fn on_tick(&mut self, rows: &mut [TraceRow], topology: &GridTopology);

    /// Latest estimated power of node `j` as seen from node `k`.
    fn neighbor_power(&self, k: usize, j: usize) -> Option<f64>;
}

/// Closed-loop simulator: plant at `dt_plant`, control at `dt_ctrl`.
pub struct Simulator {
    cfg: ScenarioConfig,
    plant: Plant,
    topology: GridTopology,
    observer: ConsensusObserver,
    ctrls: Vec<ControllerState>,
    inner: Vec<InnerLoop>,
    v_ref: Vec<f64>,
    tick: i64,
    settle_ticks: i64,
}

impl Simulator {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate().into_result()?;
        let c = &cfg.control;
        let params = cfg.params();
        let topology = cfg.topology();
        let loads: Vec<_> = cfg.plant.nodes.iter().map(|n| n.load()).collect();
        let states: Vec<_> = params
            .iter()
            .zip(&loads)
            .map(|(p, l)| {
                let v = c.v_ref;
                let d = (v / p.v_in).clamp(0.0, 1.0);
                let i = l.current(v);
                ConverterState {
                    v,
                    i,
                    d,
                    i_in: d * i,
                }
            })
            .collect();
        let ctrls = (0..cfg.n())
            .map(|_| {
                ControllerState::new(
                    c.v_ref,
                    c.kp_primary,
                    c.ki_primary,
                    c.kp_secondary,
                    c.ki_secondary,
                    c.anti_windup_fraction,
                )
            })
            .collect();
        let inner = params
            .iter()
            .zip(&states)
            .map(|(p, s)| {
                let i_max = 2.0 * p.rated_current();
                let mut voltage = Pi::new(c.kp_voltage, c.ki_voltage, i_max);
                if c.ki_voltage > 0.0 {
                    voltage.integral = s.i / c.ki_voltage;
                }
                InnerLoop {
                    voltage,
                    current: Pi::new(c.kp_current, c.ki_current, p.v_in),
                    i_max,
                }
            })
            .collect();
        let v0: Vec<f64> = states.iter().map(|s| s.v).collect();
        let settle_ticks = libm::round(c.settle / c.dt_ctrl) as i64;
        Ok(Self {
            plant: Plant::new(params, loads, topology.lines.clone(), states),
            observer: ConsensusObserver::new(&v0),
            ctrls,
            inner,
            v_ref: vec![c.v_ref; cfg.n()],
            tick: -settle_ticks,
            settle_ticks,
            topology,
            cfg: cfg.clone(),
        })
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.cfg.control.dt_ctrl
    }

    pub fn plant(&self) -> &Plant {
        &self.plant
    }

    fn apply_disturbances(&mut self) {
        let dt = self.cfg.control.dt_ctrl;
        for d in &self.cfg.events {
            let due = libm::ceil(d.time_s / dt - 1e-9) as i64;
            if due != self.tick {
                continue;
            }
            let k = d.target_node;
            match d.kind {
                DisturbanceKind::LoadStep => self.plant.loads[k].conductance += d.magnitude,
                DisturbanceKind::Outage => self.plant.online[k] = false,
                DisturbanceKind::ReferenceStep => self.v_ref[k] += d.magnitude,
            }
        }
    }

    /// One control tick followed by the plant sub-steps it holds.
    pub fn step(&mut self, estimator: &mut dyn RemoteEstimator) -> Result<Vec<TraceRow>> {
        self.apply_disturbances();
        let n = self.plant.n();
        let c = &self.cfg.control;
        let (dt, t) = (c.dt_ctrl, self.time());
        let alive = self.plant.online.clone();
        let comm = if alive.iter().all(|&a| a) {
            self.topology.clone()
        } else {
            self.topology.restricted(&alive)
        };

        let v: Vec<f64> = self.plant.states.iter().map(|s| s.v).collect();
        let i: Vec<f64> = self.plant.states.iter().map(|s| s.i).collect();
        let truth: Vec<f64> = v.iter().zip(&i).map(|(a, b)| a * b).collect();
        let mut iout = vec![0.0; n];
        self.plant.output_currents(&v, &mut iout);
        let line_out = self.plant.line_outflow(&v);

        self.observer.step(&v, &comm, dt);

        let mut rows = vec![TraceRow::default(); n];
        for k in 0..n {
            let p = self.plant.params[k];
            let row = &mut rows[k];
            *row = TraceRow {
                t,
                node: k,
                v: v[k],
                i: i[k],
                p: truth[k],
                v_bar: self.observer.v_bar[k],
                i_out: iout[k],
                line_out: line_out[k],
                v_in: p.v_in,
                online: alive[k],
                est_v: f64::NAN,
                est_i: f64::NAN,
                ..Default::default()
            };
            if !alive[k] {
                self.plant.states[k].d = 0.0;
                row.v_star = f64::NAN;
                continue;
            }
            let powers: Vec<f64> = (0..n)
                .map(|j| match c.power_source {
                    PowerSource::Oracle => truth[j],
                    PowerSource::Estimated if j != k => {
                        estimator.neighbor_power(k, j).unwrap_or(truth[j])
                    }
                    PowerSource::Estimated => truth[j],
                })
                .collect();
            let ctrl = &mut self.ctrls[k];
            ctrl.v_bar = self.observer.v_bar[k];
            ctrl.v_ref = self.v_ref[k];
            let (e1, e2) = control_errors(k, ctrl.v_bar, &powers, &comm, ctrl.v_ref);
            let v_star = voltage_command(ctrl, e1, e2, self.v_ref[k], dt);
            let out = self.inner[k].update(v_star, v[k], i[k], p.v_in, dt);
            self.plant.states[k].d = out.d;
            row.v_star = v_star;
            row.d = out.d;
            row.i_ref = out.i_ref;
            row.e_v = out.e_v;
            row.e_i = out.e_i;
        }
        estimator.on_tick(&mut rows, &comm);
        for row in rows.iter_mut() {
            if let Some(j) = self.topology.neighbors(row.node).next() {
                if !alive[j] {
                    row.est_stale = true;
                }
            }
        }

        let sub = libm::round(dt / c.dt_plant) as usize;
        for s in 0..sub {
            self.plant.step(c.dt_plant, t + s as f64 * c.dt_plant)?;
        }
        self.tick += 1;
        Ok(rows)
    }

    /// Runs the pre-roll then records `duration` seconds.
    pub fn run(mut self, estimator: &mut dyn RemoteEstimator) -> Result<Trace> {
        let n = self.plant.n();
        let ticks = self.cfg.recorded_ticks();
        for _ in 0..self.settle_ticks {
            self.step(estimator)?;
        }
        let mut rows = Vec::with_capacity(ticks * n);
        for _ in 0..ticks {
            rows.extend(self.step(estimator)?);
        }
        Ok(Trace {
            dt: self.cfg.control.dt_ctrl,
            n_nodes: n,
            rows,
        })
    }
}

/// Hook that does nothing; estimates stay NaN and no events are flagged.
pub struct NoEstimator;

impl RemoteEstimator for NoEstimator {
    fn on_tick(&mut self, _rows: &mut [TraceRow], _topology: &GridTopology) {}
    fn neighbor_power(&self, _k: usize, _j: usize) -> Option<f64> {
        None
    }
}

/// Simulates `config` with the given per-tick estimator.
pub fn run_scenario_with(
    config: &ScenarioConfig,
    estimator: &mut dyn RemoteEstimator,
) -> Result<Trace> {
    Simulator::new(config)?.run(estimator)
}

/// Simulates `config` with clean event synthesis and no remote estimator.
pub fn run_scenario(config: &ScenarioConfig) -> Result<Trace> {
    let mut codec = crate::events::EventPipeline::new(config, None);
    run_scenario_with(config, &mut codec)
}
