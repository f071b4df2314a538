use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::events::EventRecord;

/// Detection quality of an event log against a disturbance schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    pub precision: f64,
    pub recall: f64,
    /// Mean delay from each detected disturbance to its first event (s).
    pub latency: Option<f64>,
    pub false_per_s: f64,
    pub true_events: usize,
    pub false_events: usize,
    pub detected: usize,
    pub disturbances: usize,
}

/// Scores `events` against disturbance times `truth`.
///
/// An event is a true positive iff it falls in `[t_d, t_d + window]` of some
/// disturbance. With no events precision is 1; with an empty schedule any
/// event makes precision 0 and recall is 1.
pub fn event_metrics(
    events: &[EventRecord],
    truth: &[f64],
    window: f64,
    duration: f64,
) -> DetectionReport {
    let eps = 1e-9;
    let covers = |td: f64, t: f64| t >= td - eps && t <= td + window + eps;
    let true_events = events
        .iter()
        .filter(|e| truth.iter().any(|&td| covers(td, e.t)))
        .count();
    let false_events = events.len() - true_events;
    let mut first: Vec<Option<f64>> = vec![None; truth.len()];
    for (k, &td) in truth.iter().enumerate() {
        first[k] = events
            .iter()
            .filter(|e| covers(td, e.t))
            .map(|e| e.t)
            .fold(None, |m: Option<f64>, t| Some(m.map_or(t, |m| m.min(t))));
    }
    let detected = first.iter().filter(|f| f.is_some()).count();
    let delays: Vec<f64> = first
        .iter()
        .zip(truth)
        .filter_map(|(f, td)| f.map(|t| (t - td).max(0.0)))
        .collect();
    DetectionReport {
        precision: if events.is_empty() {
            1.0
        } else {
            true_events as f64 / events.len() as f64
        },
        recall: if truth.is_empty() {
            1.0
        } else {
            detected as f64 / truth.len() as f64
        },
        latency: (!delays.is_empty()).then(|| delays.iter().sum::<f64>() / delays.len() as f64),
        false_per_s: if duration > 0.0 {
            false_events as f64 / duration
        } else {
            0.0
        },
        true_events,
        false_events,
        detected,
        disturbances: truth.len(),
    }
}

/// `(MSE, MSE / var(measurement))`.
pub fn estimation_error(estimates: &[f64], measurements: &[f64]) -> Result<(f64, f64)> {
    if estimates.len() != measurements.len() {
        return Err(Error::LengthMismatch {
            left: estimates.len(),
            right: measurements.len(),
        });
    }
    if measurements.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let n = measurements.len() as f64;
    let mse = estimates
        .iter()
        .zip(measurements)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    let mean = measurements.iter().sum::<f64>() / n;
    let var = measurements
        .iter()
        .map(|x| (x - mean) * (x - mean))
        .sum::<f64>()
        / n;
    let nmse = if mse == 0.0 {
        0.0
    } else if var > 0.0 {
        mse / var
    } else {
        f64::INFINITY
    };
    Ok((mse, nmse))
}

/// Normalized MSE per channel of row-major series, averaged over channels.
pub fn channel_nmse(estimates: &[f64], measurements: &[f64], channels: usize) -> Result<f64> {
    if estimates.len() != measurements.len() {
        return Err(Error::LengthMismatch {
            left: estimates.len(),
            right: measurements.len(),
        });
    }
    if channels == 0 || !measurements.len().is_multiple_of(channels) {
        return Err(Error::ShapeMismatch {
            what: "channel series",
            expected: channels,
            actual: measurements.len() % channels.max(1),
        });
    }
    let mut total = 0.0;
    for c in 0..channels {
        let e: Vec<f64> = estimates
            .iter()
            .skip(c)
            .step_by(channels)
            .copied()
            .collect();
        let m: Vec<f64> = measurements
            .iter()
            .skip(c)
            .step_by(channels)
            .copied()
            .collect();
        total += estimation_error(&e, &m)?.1;
    }
    Ok(total / channels as f64)
}
