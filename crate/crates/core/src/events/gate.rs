use alloc::vec;
use alloc::vec::Vec;

use super::scaling::ChannelScaling;
use crate::error::{Error, Result};

/// Retriggerable execution window counted in ticks.
#[derive(Debug, Clone, PartialEq)]
pub struct GateState {
    window: usize,
    remaining: usize,
}

impl GateState {
    pub fn new(window_ticks: usize) -> Self {
        Self {
            window: window_ticks,
            remaining: 0,
        }
    }

    /// Window length for `active_window` seconds at step `dt`.
    pub fn from_seconds(active_window: f64, dt: f64) -> Self {
        Self::new(libm::round(active_window / dt) as usize)
    }

    /// Advances one tick; an event opens (or extends) the window starting on
    /// this tick. Returns whether the network runs on this tick.
    pub fn update(&mut self, event: bool) -> bool {
        if event {
            self.remaining = self.window;
        }
        if self.remaining > 0 {
            self.remaining -= 1;
            true
        } else {
            false
        }
    }

    pub fn is_open(&self) -> bool {
        self.remaining > 0
    }
}

/// Mask and held estimates of a gated run.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedRun {
    pub mask: Vec<bool>,
    /// `estimates[tick * width + k]`, zero-order held between executions.
    pub estimates: Vec<f64>,
    /// Ticks since the last execution (0 on executed ticks).
    pub age: Vec<usize>,
    pub activity_ratio: f64,
}

/// Drives `run(tick, out)` only on ticks covered by an event window and holds
/// its last output elsewhere. Before the first execution the estimate stays
/// at `initial`.
pub fn gate_inference(
    events: &[bool],
    window_ticks: usize,
    initial: &[f64],
    mut run: impl FnMut(usize, &mut [f64]),
) -> GatedRun {
    let w = initial.len();
    let mut gate = GateState::new(window_ticks);
    let mut held = initial.to_vec();
    let mut mask = Vec::with_capacity(events.len());
    let mut estimates = Vec::with_capacity(events.len() * w);
    let mut age = Vec::with_capacity(events.len());
    let mut since = usize::MAX;
    for (t, &e) in events.iter().enumerate() {
        let on = gate.update(e);
        if on {
            run(t, &mut held);
            since = 0;
        } else if since != usize::MAX {
            since += 1;
        }
        mask.push(on);
        estimates.extend_from_slice(&held);
        age.push(since);
    }
    let active = mask.iter().filter(|&&m| m).count();
    let activity_ratio = if mask.is_empty() {
        0.0
    } else {
        active as f64 / mask.len() as f64
    };
    GatedRun {
        mask,
        estimates,
        age,
        activity_ratio,
    }
}

/// Scales row-major physical samples into network units.
pub fn encode_inputs(samples: &[f64], scaling: &ChannelScaling) -> Result<Vec<f64>> {
    let n = scaling.channels();
    if !scaling.is_valid() {
        return Err(Error::ShapeMismatch {
            what: "scaling constants",
            expected: n,
            actual: scaling.offset.len(),
        });
    }
    if n == 0 || !samples.len().is_multiple_of(n) {
        return Err(Error::ShapeMismatch {
            what: "encoded samples",
            expected: n,
            actual: samples.len() % n.max(1),
        });
    }
    let mut out = vec![0.0; samples.len()];
    for (src, dst) in samples.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
        scaling.encode_into(src, dst);
    }
    Ok(out)
}

/// A decoded estimate with its age.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub values: Vec<f64>,
    /// Time since the network last ran (s).
    pub age: f64,
    pub stale: bool,
}

/// Maps readout values back to physical units and stamps staleness.
pub fn decode_outputs(
    readout: &[f64],
    scaling: &ChannelScaling,
    age: f64,
    stale_after: f64,
) -> Estimate {
    Estimate {
        values: scaling.decode(readout),
        age,
        stale: age > stale_after,
    }
}
