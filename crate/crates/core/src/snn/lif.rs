use core::f64::consts::PI;

use super::kernel::KernelParams;
use crate::rng::{normal, StreamRng};

/// One Euler–Maruyama step of `τ_m dV/dt = −(V − V_r) + I/g + ξ`.
///
/// The noise term has per-step standard deviation `noise_std·√(dt/τ_m)`, so
/// ensemble statistics do not depend on the step size. With `noise_std == 0`
/// no random number is drawn.
pub fn lif_step(
    v: f64,
    i_in: f64,
    k: &KernelParams,
    dt: f64,
    noise_std: f64,
    rng: &mut StreamRng,
) -> f64 {
    let h = dt / k.tau_m;
    let drift = -(v - k.v_rest) + i_in / k.g;
    let mut next = v + h * drift;
    if noise_std > 0.0 {
        next += noise_std * libm::sqrt(h) * normal(rng);
    }
    next
}

/// Magnitude of the membrane transfer function and its corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyResponse {
    /// `|V/I|` (V/A).
    pub gain: f64,
    /// Corner frequency (rad/s).
    pub cutoff: f64,
}

impl FrequencyResponse {
    pub fn cutoff_hz(&self) -> f64 {
        self.cutoff / (2.0 * PI)
    }
}

/// First-order low-pass response `1/(g·√(1 + (τ_m ω)²))`, corner `1/τ_m`.
pub fn lif_frequency_response(omega: f64, k: &KernelParams) -> FrequencyResponse {
    let x = k.tau_m * omega;
    FrequencyResponse {
        gain: 1.0 / (k.g * libm::sqrt(1.0 + x * x)),
        cutoff: 1.0 / k.tau_m,
    }
}

/// Drives the noiseless membrane with `sin(ωt)` and measures the steady
/// amplitude of `V − V_r` by projection over whole periods.
pub fn simulate_sine_gain(omega: f64, k: &KernelParams) -> f64 {
    let period = 2.0 * PI / omega;
    let dt = (k.tau_m / 2000.0).min(period / 2000.0);
    let settle = 10.0 * k.tau_m;
    let periods = libm::ceil(settle / period) + 4.0;
    let skip = libm::ceil(settle / period) * period;
    let total = libm::round(periods * period / dt) as usize;
    let start = libm::round(skip / dt) as usize;
    // dummy stream; never drawn from with zero noise
    let mut rng = crate::rng::substream(0, 0, 0);
    let mut v = k.v_rest;
    let (mut s, mut c, mut n) = (0.0, 0.0, 0usize);
    for step in 0..total {
        let t = step as f64 * dt;
        // sample the state at the start of the step against the phase of t
        if step >= start {
            s += (v - k.v_rest) * libm::sin(omega * t);
            c += (v - k.v_rest) * libm::cos(omega * t);
            n += 1;
        }
        v = lif_step(v, libm::sin(omega * t), k, dt, 0.0, &mut rng);
    }
    let s = 2.0 * s / n as f64;
    let c = 2.0 * c / n as f64;
    libm::sqrt(s * s + c * c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn rest_is_fixed_point() {
        let k = KernelParams::default();
        let mut rng = substream(1, 0, 0);
        assert_eq!(lif_step(k.v_rest, 0.0, &k, 1e-4, 0.0, &mut rng), k.v_rest);
    }

    #[test]
    fn free_decay_matches_exponential() {
        let k = KernelParams::default();
        let mut rng = substream(1, 0, 0);
        let dt = 1e-6;
        let mut v = 1.0;
        let steps = 20_000;
        for _ in 0..steps {
            v = lif_step(v, 0.0, &k, dt, 0.0, &mut rng);
        }
        let exact = libm::exp(-(steps as f64) * dt / k.tau_m);
        // Euler global error is about t·dt/(2τ²)·e^{-t/τ}
        assert!((v - exact).abs() < 1e-4, "{v} vs {exact}");
    }

    #[test]
    fn constant_drive_reaches_ohmic_level() {
        let k = KernelParams {
            g: 2.0,
            v_rest: 0.1,
            ..Default::default()
        };
        let mut rng = substream(1, 0, 0);
        let mut v = k.v_rest;
        for _ in 0..20_000 {
            v = lif_step(v, 0.5, &k, 1e-4, 0.0, &mut rng);
        }
        assert!((v - (0.1 + 0.25)).abs() < 1e-9);
    }

    #[test]
    fn response_dc_and_corner() {
        let k = KernelParams {
            g: 2.0,
            ..Default::default()
        };
        let dc = lif_frequency_response(0.0, &k);
        assert_eq!(dc.gain, 0.5);
        let corner = lif_frequency_response(dc.cutoff, &k);
        assert!((corner.gain - 0.5 / libm::sqrt(2.0)).abs() < 1e-15);
    }

    #[test]
    fn cutoff_band_for_biological_tau() {
        for tau in [10e-3, 100e-3] {
            let k = KernelParams {
                tau_m: tau,
                ..Default::default()
            };
            let hz = lif_frequency_response(0.0, &k).cutoff_hz();
            assert!((1.59..=15.92).contains(&hz), "{hz}");
        }
    }

    #[test]
    fn simulated_gain_matches_analytic() {
        let k = KernelParams::default();
        for m in [0.1, 1.0, 10.0] {
            let w = m / k.tau_m;
            let g = simulate_sine_gain(w, &k);
            let a = lif_frequency_response(w, &k).gain;
            assert!((g / a - 1.0).abs() < 0.02, "ω={w}: {g} vs {a}");
        }
    }

    #[test]
    fn noise_moves_membrane() {
        let k = KernelParams::default();
        let mut rng = substream(3, 0, 0);
        let v = lif_step(0.0, 0.0, &k, 1e-4, 0.5, &mut rng);
        assert!(v != 0.0);
    }
}
