use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ValidationReport};
use crate::grid::Trace;
use crate::rng::{normal, substream};

/// Sensor channels that can receive noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseTarget {
    /// Bus voltage sensor.
    Voltage,
    /// Converter output-current sensor.
    Current,
    /// Tie-line current sensor.
    LineCurrent,
}

impl NoiseTarget {
    fn index(self) -> u32 {
        match self {
            NoiseTarget::Voltage => 0,
            NoiseTarget::Current => 1,
            NoiseTarget::LineCurrent => 2,
        }
    }
}

/// Where the signal power of the SNR definition is measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrReference {
    /// Mean square over the whole series.
    WholeRun,
    /// Mean square over samples `start..start + len`.
    Window { start: usize, len: usize },
}

/// Additive white Gaussian noise settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Signal-to-noise ratio in dB; `None` means clean.
    pub snr_db: Option<f64>,
    pub seed: u64,
    pub targets: Vec<NoiseTarget>,
    pub reference: SnrReference,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            snr_db: None,
            seed: 1,
            targets: alloc::vec![NoiseTarget::Current],
            reference: SnrReference::WholeRun,
        }
    }
}

impl NoiseSpec {
    pub fn clean() -> Self {
        Self::default()
    }

    pub fn with_snr(snr_db: f64, seed: u64) -> Self {
        Self {
            snr_db: Some(snr_db),
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::new();
        if let Some(s) = self.snr_db {
            r.require(
                s.is_finite(),
                "noise.snr_db",
                "must be finite (omit for clean)",
            );
        }
        if let SnrReference::Window { len, .. } = self.reference {
            r.require(len > 0, "noise.reference.window.len", "must be > 0");
        }
        r
    }
}

/// Adds zero-mean Gaussian noise with variance `P / 10^(snr/10)`, where `P`
/// is the mean square of the clean signal over the configured reference.
/// `stream` selects an independent substream under `spec.seed`.
pub fn add_awgn(signal: &[f64], spec: &NoiseSpec, stream: (u32, u32)) -> Result<Vec<f64>> {
    if signal.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let Some(snr) = spec.snr_db else {
        return Ok(signal.to_vec());
    };
    let reference = match spec.reference {
        SnrReference::WholeRun => signal,
        SnrReference::Window { start, len } => {
            let end = (start + len).min(signal.len());
            if start >= end {
                return Err(Error::InsufficientData {
                    needed: start + 1,
                    got: signal.len(),
                });
            }
            &signal[start..end]
        }
    };
    let power = reference.iter().map(|x| x * x).sum::<f64>() / reference.len() as f64;
    if power <= 0.0 {
        return Err(Error::ZeroPowerSignal);
    }
    let sd = libm::sqrt(power / libm::pow(10.0, snr / 10.0));
    let mut rng = substream(spec.seed, stream.0, stream.1);
    Ok(signal.iter().map(|&x| x + sd * normal(&mut rng)).collect())
}

/// Copy of `trace` with noise on the targeted sensor channels of every
/// node. Each (node, channel) pair draws from its own substream of run
/// `run`.
pub fn noisy_trace(trace: &Trace, spec: &NoiseSpec, run: u32) -> Result<Trace> {
    let mut out = trace.clone();
    if spec.snr_db.is_none() {
        return Ok(out);
    }
    for node in 0..trace.n_nodes {
        for &target in &spec.targets {
            let pick = |r: &crate::grid::TraceRow| match target {
                NoiseTarget::Voltage => r.v,
                NoiseTarget::Current => r.i,
                NoiseTarget::LineCurrent => r.line_out,
            };
            let clean = trace.series(node, pick);
            let channel = node as u32 * 4 + target.index();
            let noisy = add_awgn(&clean, spec, (run, channel))?;
            for (n, x) in noisy.into_iter().enumerate() {
                let r = &mut out.rows[n * trace.n_nodes + node];
                match target {
                    NoiseTarget::Voltage => r.v = x,
                    NoiseTarget::Current => r.i = x,
                    NoiseTarget::LineCurrent => r.line_out = x,
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_power(n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| if k % 2 == 0 { 1.0 } else { -1.0 })
            .collect()
    }

    #[test]
    fn clean_sentinel_is_identity() {
        let x = [1.0, 2.0, 3.0];
        assert_eq!(
            add_awgn(&x, &NoiseSpec::clean(), (0, 0)).unwrap(),
            x.to_vec()
        );
        let inf = NoiseSpec::with_snr(f64::INFINITY, 1);
        assert_eq!(add_awgn(&x, &inf, (0, 0)).unwrap(), x.to_vec());
    }

    #[test]
    fn noise_variance_matches_snr() {
        let x = unit_power(100_000);
        let y = add_awgn(&x, &NoiseSpec::with_snr(20.0, 3), (0, 0)).unwrap();
        let n = x.len() as f64;
        let e: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
        let mean = e.iter().sum::<f64>() / n;
        let var = e.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
        assert!((var / 0.01 - 1.0).abs() < 0.05, "var {var}");
        let measured = 10.0 * libm::log10(1.0 / (e.iter().map(|d| d * d).sum::<f64>() / n));
        assert!((measured - 20.0).abs() < 0.2, "snr {measured}");
    }

    #[test]
    fn zero_power_rejected() {
        assert_eq!(
            add_awgn(&[0.0; 10], &NoiseSpec::with_snr(20.0, 1), (0, 0)),
            Err(Error::ZeroPowerSignal)
        );
    }

    #[test]
    fn same_seed_same_path_and_streams_disjoint() {
        let x = unit_power(64);
        let s = NoiseSpec::with_snr(10.0, 9);
        let a = add_awgn(&x, &s, (0, 1)).unwrap();
        assert_eq!(a, add_awgn(&x, &s, (0, 1)).unwrap());
        assert_ne!(a, add_awgn(&x, &s, (0, 2)).unwrap());
    }

    #[test]
    fn non_finite_snr_rejected() {
        let s = NoiseSpec {
            snr_db: Some(f64::INFINITY),
            ..Default::default()
        };
        assert!(!s.validate().is_empty());
    }
}
