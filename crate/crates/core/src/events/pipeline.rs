use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use super::derivative::DerivativeFilter;
use super::gate::GateState;
use super::residual::{
    synthesize_residuals_algebraic, Channel, EventRecord, EventThresholds, ResidualInputs,
    Residuals,
};
use crate::error::{Error, Result, ValidationReport};
use crate::grid::{
    ConverterParams, GridTopology, RemoteEstimator, ScenarioConfig, Trace, TraceRow,
};
use crate::snn::{Episode, NetworkState, SrmNetwork};

/// Network input width: filtered `v`, `i` and their derivatives.
pub const FEATURES: usize = 4;

/// Past feature rows kept per bus; a closed gate that opens primes the
/// network on them before the current tick. Training windows carry the same
/// amount of history.
pub const HISTORY: usize = 200;

/// Measured and logged signals of one bus on one tick.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sample {
    pub t: f64,
    pub v: f64,
    pub i: f64,
    pub d: f64,
    pub v_in: f64,
    /// Voltage command from the controller log (V).
    pub v_star: f64,
    /// Current reference from the controller log (A).
    pub i_ref: f64,
    /// Net line current leaving the bus (A).
    pub line_out: f64,
    pub online: bool,
}

impl From<&TraceRow> for Sample {
    fn from(r: &TraceRow) -> Self {
        Self {
            t: r.t,
            v: r.v,
            i: r.i,
            d: r.d,
            v_in: r.v_in,
            v_star: r.v_star,
            i_ref: r.i_ref,
            line_out: r.line_out,
            online: r.online,
        }
    }
}

/// What one tick of a [`NodeCodec`] produced.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TickOutput {
    /// Per-unit residuals.
    pub residuals: Residuals,
    /// Fired flags in `V, I, O` order.
    pub fired: [bool; 3],
    pub features: [f64; FEATURES],
    /// Whether the network ran on this tick.
    pub active: bool,
}

impl TickOutput {
    pub fn any(&self) -> bool {
        self.fired.iter().any(|&f| f)
    }
}

struct Runner {
    net: SrmNetwork,
    state: NetworkState,
}

/// Residual synthesis, triggering, gating and inference for one bus.
pub struct NodeCodec {
    params: ConverterParams,
    thresholds: EventThresholds,
    dt: f64,
    stale_after: f64,
    v: DerivativeFilter,
    i: DerivativeFilter,
    flow: DerivativeFilter,
    gate: GateState,
    runner: Option<Runner>,
    history: VecDeque<[f64; FEATURES]>,
    estimate: Option<Vec<f64>>,
    since_exec: Option<usize>,
}

impl NodeCodec {
    pub fn new(
        params: ConverterParams,
        thresholds: EventThresholds,
        dt: f64,
        active_window: f64,
        stale_after: f64,
        net: Option<SrmNetwork>,
    ) -> Self {
        Self {
            params,
            thresholds,
            dt,
            stale_after,
            v: DerivativeFilter::default(),
            i: DerivativeFilter::default(),
            flow: DerivativeFilter::default(),
            gate: GateState::from_seconds(active_window, dt),
            runner: net.map(|net| Runner {
                state: net.state(),
                net,
            }),
            history: VecDeque::with_capacity(HISTORY),
            estimate: None,
            since_exec: None,
        }
    }

    /// Drops the median prefilter, so residuals see raw samples.
    pub fn without_prefilter(mut self) -> Self {
        self.v = DerivativeFilter::unfiltered();
        self.i = DerivativeFilter::unfiltered();
        self.flow = DerivativeFilter::unfiltered();
        self
    }

    pub fn push(&mut self, s: &Sample) -> TickOutput {
        let (v, v_dot) = self.v.push(s.v, self.dt);
        let (i, i_dot) = self.i.push(s.i, self.dt);
        let (_, flow_dot) = self.flow.push(s.line_out, self.dt);
        let features = [v, i, v_dot, i_dot];
        let warm = self.v.is_warm() && self.i.is_warm() && self.flow.is_warm();
        let residuals = if warm {
            let inp = ResidualInputs {
                v,
                i,
                v_dot,
                i_dot,
                // tracking errors against the measured, filtered signals
                e_v: s.v_star - v,
                e_i: s.i_ref - i,
                i_flow_dot: flow_dot,
                d: s.d,
                v_in: s.v_in,
                i_in: s.d * i,
            };
            synthesize_residuals_algebraic(&inp, &self.params, self.dt).per_unit(&self.params)
        } else {
            Residuals::default()
        };
        let mut fired = [false; 3];
        for (f, c) in fired.iter_mut().zip(Channel::ALL) {
            *f = residuals.get(c).abs() > self.thresholds.get(c);
        }
        let was_open = self.gate.is_open();
        let active = self.gate.update(fired.iter().any(|&f| f));
        if let Some(r) = self.runner.as_mut() {
            if active {
                if !was_open {
                    r.state.reset();
                    let _ = if self.history.is_empty() {
                        r.net.settle(&mut r.state, &features)
                    } else {
                        let rows: Vec<f64> = self.history.iter().flatten().copied().collect();
                        r.net.prime(&mut r.state, &rows)
                    };
                }
                self.estimate = r.net.step(&mut r.state, &features).ok();
                self.since_exec = Some(0);
            } else if let Some(a) = self.since_exec.as_mut() {
                *a += 1;
            }
        }
        if self.history.len() == HISTORY {
            self.history.pop_front();
        }
        self.history.push_back(features);
        TickOutput {
            residuals,
            fired,
            features,
            active,
        }
    }

    /// Latest decoded estimate, held between executions.
    pub fn estimate(&self) -> Option<&[f64]> {
        self.estimate.as_deref()
    }

    /// Seconds since the network last ran.
    pub fn age(&self) -> Option<f64> {
        self.since_exec.map(|n| n as f64 * self.dt)
    }

    pub fn is_stale(&self) -> bool {
        self.age().is_none_or(|a| a > self.stale_after)
    }

    pub fn has_network(&self) -> bool {
        self.runner.is_some()
    }
}

/// Network features of `node` for every tick of `trace`, row-major.
pub fn feature_series(trace: &Trace, node: usize) -> Vec<f64> {
    let mut v = DerivativeFilter::default();
    let mut i = DerivativeFilter::default();
    let mut out = Vec::with_capacity(trace.ticks() * FEATURES);
    for n in 0..trace.ticks() {
        let r = trace.row(n, node);
        let (vf, vd) = v.push(r.v, trace.dt);
        let (i_f, id) = i.push(r.i, trace.dt);
        out.extend([vf, i_f, vd, id]);
    }
    out
}

/// Per-unit residuals of `node` on every tick of `trace`, with or without
/// the median prefilter.
pub fn residual_series(
    trace: &Trace,
    node: usize,
    params: ConverterParams,
    prefilter: bool,
) -> Vec<Residuals> {
    let mut codec = NodeCodec::new(
        params,
        EventThresholds::default(),
        trace.dt,
        trace.dt,
        f64::INFINITY,
        None,
    );
    if !prefilter {
        codec = codec.without_prefilter();
    }
    (0..trace.ticks())
        .map(|n| codec.push(&Sample::from(trace.row(n, node))).residuals)
        .collect()
}

/// Training window for the network at `node` estimating `neighbors`:
/// `window` ticks from `start` with up to [`HISTORY`] preceding rows for
/// priming. Inputs are the node's features, targets each neighbour's `v, i`.
pub fn episode_from_trace(
    trace: &Trace,
    node: usize,
    neighbors: &[usize],
    start: usize,
    window: usize,
) -> Result<Episode> {
    let end = start + window;
    if end > trace.ticks() || window == 0 {
        return Err(Error::InsufficientData {
            needed: end.max(1),
            got: trace.ticks(),
        });
    }
    let mut report = ValidationReport::new();
    report.require(
        !neighbors.is_empty() && neighbors.iter().all(|&j| j < trace.n_nodes && j != node),
        "episode.neighbors",
        "must be other buses of the trace",
    );
    report.into_result()?;
    let own = feature_series(trace, node);
    let inputs = own[start * FEATURES..end * FEATURES].to_vec();
    let history = own[start.saturating_sub(HISTORY) * FEATURES..start * FEATURES].to_vec();
    let mut targets = Vec::with_capacity(window * 2 * neighbors.len());
    for n in start..end {
        for &j in neighbors {
            let r = trace.row(n, j);
            targets.extend([r.v, r.i]);
        }
    }
    Ok(Episode {
        inputs,
        targets,
        history,
    })
}

/// Event synthesis and gated inference for every bus of a scenario.
///
/// Plugs into the simulator as a [`RemoteEstimator`] or replays a recorded
/// trace. Events and activity are only accounted for non-negative times, so
/// the settling pre-roll is excluded.
pub struct EventPipeline {
    codecs: Vec<NodeCodec>,
    neighbor: Vec<Option<usize>>,
    events: Vec<EventRecord>,
    active_ticks: Vec<usize>,
    recorded_ticks: usize,
}

impl EventPipeline {
    /// `networks[k]`, when present, estimates node `k`'s first neighbour.
    pub fn new(cfg: &ScenarioConfig, networks: Option<Vec<Option<SrmNetwork>>>) -> Self {
        let n = cfg.n();
        let topo = cfg.topology();
        let mut nets = networks.unwrap_or_default();
        nets.resize(n, None);
        let snn = &cfg.snn;
        let codecs = cfg
            .params()
            .into_iter()
            .zip(nets)
            .map(|(p, net)| {
                NodeCodec::new(
                    p,
                    snn.thresholds,
                    cfg.control.dt_ctrl,
                    snn.active_window,
                    snn.stale_after,
                    net,
                )
            })
            .collect();
        Self {
            codecs,
            neighbor: (0..n).map(|k| topo.neighbors(k).next()).collect(),
            events: Vec::new(),
            active_ticks: vec![0; n],
            recorded_ticks: 0,
        }
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    pub fn into_events(self) -> Vec<EventRecord> {
        self.events
    }

    pub fn codec(&self, k: usize) -> &NodeCodec {
        &self.codecs[k]
    }

    /// Fraction of recorded ticks on which each node's gate was open.
    pub fn activity(&self) -> Vec<f64> {
        self.active_ticks
            .iter()
            .map(|&a| {
                if self.recorded_ticks == 0 {
                    0.0
                } else {
                    a as f64 / self.recorded_ticks as f64
                }
            })
            .collect()
    }

    /// Mean gate activity over nodes.
    pub fn activity_ratio(&self) -> f64 {
        let a = self.activity();
        if a.is_empty() {
            0.0
        } else {
            a.iter().sum::<f64>() / a.len() as f64
        }
    }

    /// Runs the pipeline over a recorded trace, filling its event and
    /// estimate fields in place.
    pub fn replay(&mut self, trace: &mut Trace, topology: &GridTopology) {
        let n = trace.n_nodes;
        for rows in trace.rows.chunks_exact_mut(n) {
            self.on_tick(rows, topology);
        }
    }
}

impl RemoteEstimator for EventPipeline {
    fn on_tick(&mut self, rows: &mut [TraceRow], _topology: &GridTopology) {
        let recorded = rows.first().is_some_and(|r| r.t >= -1e-12);
        if recorded {
            self.recorded_ticks += 1;
        }
        for row in rows.iter_mut() {
            let k = row.node;
            if !row.online {
                continue;
            }
            let codec = &mut self.codecs[k];
            let out = codec.push(&Sample::from(&*row));
            row.event_v = out.fired[0];
            row.event_i = out.fired[1];
            row.event_o = out.fired[2];
            if let Some(e) = codec.estimate() {
                row.est_v = e[0];
                row.est_i = e.get(1).copied().unwrap_or(f64::NAN);
            }
            row.est_stale = codec.has_network() && codec.is_stale();
            if recorded {
                if out.active {
                    self.active_ticks[k] += 1;
                }
                for (c, &f) in Channel::ALL.iter().zip(&out.fired) {
                    if f {
                        let m = out.residuals.get(*c);
                        self.events.push(EventRecord {
                            t: row.t,
                            node: k,
                            channel: *c,
                            magnitude: m,
                            threshold: codec.thresholds.get(*c),
                        });
                    }
                }
            }
        }
    }

    fn neighbor_power(&self, k: usize, j: usize) -> Option<f64> {
        if self.neighbor.get(k).copied().flatten() != Some(j) {
            return None;
        }
        self.codecs[k].estimate().and_then(|e| {
            let p = e[0] * *e.get(1)?;
            p.is_finite().then_some(p)
        })
    }
}
