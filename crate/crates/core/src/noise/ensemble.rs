use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::snn::{lif_step, KernelParams};

/// Statistics of `M` noisy LIF membranes driven by the same current.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    /// Noiseless trajectory.
    pub reference: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Upward threshold crossings per member.
    pub spike_counts: Vec<usize>,
    pub reference_spikes: usize,
    /// Fraction of members whose crossing times differ from the reference.
    pub mis_trigger_rate: f64,
    /// RMS of `mean − reference` over the run.
    pub rms_error: f64,
}

fn simulate(
    k: &KernelParams,
    drive: &[f64],
    dt: f64,
    noise_std: f64,
    seed: u64,
    member: u32,
    mut visit: impl FnMut(usize, f64, bool),
) {
    let mut rng = substream(seed, member, 0);
    let mut v = k.v_rest;
    let mut above = v > k.u_thr;
    for (n, &i) in drive.iter().enumerate() {
        v = lif_step(v, i, k, dt, noise_std, &mut rng);
        let now = v > k.u_thr;
        visit(n, v, now && !above);
        above = now;
    }
}

/// Runs `m` independent noisy membranes from rest, each on its own
/// substream of `seed`. Spikes are upward crossings of `U_thr`; the membrane
/// is not reset so the ensemble mean stays comparable with the reference.
pub fn noisy_lif_ensemble(
    k: &KernelParams,
    drive: &[f64],
    dt: f64,
    noise_std: f64,
    m: usize,
    seed: u64,
) -> Result<EnsembleStats> {
    if m < 2 {
        return Err(Error::InsufficientData { needed: 2, got: m });
    }
    let steps = drive.len();
    let mut reference = vec![0.0; steps];
    let mut ref_cross = vec![false; steps];
    simulate(k, drive, dt, 0.0, seed, u32::MAX, |n, v, c| {
        reference[n] = v;
        ref_cross[n] = c;
    });
    let reference_spikes = ref_cross.iter().filter(|&&c| c).count();
    let mut sum = vec![0.0; steps];
    let mut sumsq = vec![0.0; steps];
    let mut spike_counts = Vec::with_capacity(m);
    let mut mismatched = 0usize;
    for member in 0..m {
        let mut count = 0;
        let mut differs = false;
        simulate(k, drive, dt, noise_std, seed, member as u32, |n, v, c| {
            sum[n] += v;
            sumsq[n] += v * v;
            count += c as usize;
            differs |= c != ref_cross[n];
        });
        spike_counts.push(count);
        mismatched += differs as usize;
    }
    let mf = m as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / mf).collect();
    let std = sumsq
        .iter()
        .zip(&mean)
        .map(|(q, mu)| libm::sqrt((q / mf - mu * mu).max(0.0) * mf / (mf - 1.0)))
        .collect();
    let rms_error = if steps == 0 {
        0.0
    } else {
        libm::sqrt(
            mean.iter()
                .zip(&reference)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / steps as f64,
        )
    };
    Ok(EnsembleStats {
        reference,
        mean,
        std,
        spike_counts,
        reference_spikes,
        mis_trigger_rate: mismatched as f64 / mf,
        rms_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drive(steps: usize, level: f64) -> Vec<f64> {
        (0..steps)
            .map(|n| level * (1.0 + 0.5 * libm::sin(n as f64 * 1e-3)))
            .collect()
    }

    #[test]
    fn zero_noise_members_match_reference() {
        let k = KernelParams::default();
        let s = noisy_lif_ensemble(&k, &drive(2000, 1.2), 1e-4, 0.0, 5, 1).unwrap();
        for (a, b) in s.mean.iter().zip(&s.reference) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(s.mis_trigger_rate, 0.0);
        assert!(s.spike_counts.iter().all(|&c| c == s.reference_spikes));
        assert!(s.rms_error < 1e-12);
    }

    #[test]
    fn ensemble_size_checked() {
        let k = KernelParams::default();
        assert!(noisy_lif_ensemble(&k, &[0.0; 10], 1e-4, 0.1, 1, 1).is_err());
    }

    #[test]
    fn subthreshold_spurious_rate_grows_with_noise() {
        let k = KernelParams::default();
        let d = vec![0.8; 5000];
        let mut prev = -1.0;
        for sd in [0.0, 0.05, 0.1, 0.2] {
            let s = noisy_lif_ensemble(&k, &d, 1e-4, sd, 200, 4).unwrap();
            assert_eq!(s.reference_spikes, 0);
            assert!(
                s.mis_trigger_rate >= prev,
                "sd {sd}: {}",
                s.mis_trigger_rate
            );
            prev = s.mis_trigger_rate;
        }
        assert!(prev > 0.0);
    }

    #[test]
    fn mean_error_shrinks_with_ensemble_size() {
        let k = KernelParams::default();
        let d = drive(20_000, 1.0);
        let r10 = noisy_lif_ensemble(&k, &d, 1e-4, 0.2, 10, 8)
            .unwrap()
            .rms_error;
        let r1000 = noisy_lif_ensemble(&k, &d, 1e-4, 0.2, 1000, 8)
            .unwrap()
            .rms_error;
        assert!(r1000 <= r10 / 3.0, "{r10} -> {r1000}");
    }
}
