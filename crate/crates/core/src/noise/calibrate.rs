use crate::error::{Error, Result};

/// Default multiple of the quiescent standard deviation.
pub const DEFAULT_KAPPA: f64 = 4.0;

const MIN_SAMPLES: usize = 100;

/// `max(floor, κ·std(residual))` over an event-free stretch.
pub fn calibrate_threshold(quiescent: &[f64], kappa: f64, floor: f64) -> Result<f64> {
    if quiescent.len() < MIN_SAMPLES {
        return Err(Error::InsufficientData {
            needed: MIN_SAMPLES,
            got: quiescent.len(),
        });
    }
    let n = quiescent.len() as f64;
    let mean = quiescent.iter().sum::<f64>() / n;
    let var = quiescent
        .iter()
        .map(|x| (x - mean) * (x - mean))
        .sum::<f64>()
        / n;
    Ok(floor.max(kappa * libm::sqrt(var)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal, substream};
    use alloc::vec::Vec;

    #[test]
    fn clean_residual_returns_floor() {
        assert_eq!(calibrate_threshold(&[0.0; 200], 4.0, 0.1).unwrap(), 0.1);
    }

    #[test]
    fn short_series_rejected() {
        assert_eq!(
            calibrate_threshold(&[0.0; 99], 4.0, 0.1),
            Err(Error::InsufficientData {
                needed: 100,
                got: 99
            })
        );
    }

    #[test]
    fn monotone_in_noise() {
        let mut rng = substream(5, 0, 0);
        let z: Vec<f64> = (0..1000).map(|_| normal(&mut rng)).collect();
        let mut prev = 0.0;
        for sd in [0.001, 0.01, 0.05, 0.1] {
            let r: Vec<f64> = z.iter().map(|x| sd * x).collect();
            let th = calibrate_threshold(&r, DEFAULT_KAPPA, 0.002).unwrap();
            assert!(th >= prev);
            prev = th;
        }
        assert!(prev > 0.3 && prev < 0.5);
    }
}
