use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-channel affine map between physical units and network units:
/// `x_net = (x − offset) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelScaling {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl ChannelScaling {
    /// Identity map on `n` channels.
    pub fn identity(n: usize) -> Self {
        Self {
            offset: vec![0.0; n],
            scale: vec![1.0; n],
        }
    }

    /// Per-unit map: each channel divided by its base value.
    pub fn per_unit(bases: &[f64]) -> Result<Self> {
        if let Some(j) = bases.iter().position(|&b| !(b > 0.0 && b.is_finite())) {
            return Err(Error::Invalid({
                let mut r = crate::error::ValidationReport::new();
                r.push(alloc::format!("scaling.base[{j}]"), "must be > 0");
                r
            }));
        }
        Ok(Self {
            offset: vec![0.0; bases.len()],
            scale: bases.to_vec(),
        })
    }

    /// Mean/standard-deviation map fitted on row-major samples with `n`
    /// channels. Constant channels keep unit scale.
    pub fn fit_zscore(samples: &[f64], n: usize) -> Result<Self> {
        if n == 0 || !samples.len().is_multiple_of(n) {
            return Err(Error::ShapeMismatch {
                what: "scaling samples",
                expected: n,
                actual: samples.len(),
            });
        }
        let rows = samples.len() / n;
        if rows < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: rows,
            });
        }
        let mut offset = vec![0.0; n];
        let mut scale = vec![0.0; n];
        for row in samples.chunks_exact(n) {
            for (o, x) in offset.iter_mut().zip(row) {
                *o += x;
            }
        }
        for o in offset.iter_mut() {
            *o /= rows as f64;
        }
        for row in samples.chunks_exact(n) {
            for j in 0..n {
                let d = row[j] - offset[j];
                scale[j] += d * d;
            }
        }
        for (j, s) in scale.iter_mut().enumerate() {
            let sd = libm::sqrt(*s / rows as f64);
            *s = if sd > 1e-12 * (1.0 + offset[j].abs()) {
                sd
            } else {
                1.0
            };
        }
        Ok(Self { offset, scale })
    }

    pub fn channels(&self) -> usize {
        self.scale.len()
    }

    pub fn encode_into(&self, x: &[f64], out: &mut [f64]) {
        for j in 0..x.len() {
            out[j] = (x[j] - self.offset[j]) / self.scale[j];
        }
    }

    pub fn decode_into(&self, y: &[f64], out: &mut [f64]) {
        for j in 0..y.len() {
            out[j] = y[j] * self.scale[j] + self.offset[j];
        }
    }

    pub fn encode(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.encode_into(x, &mut out);
        out
    }

    pub fn decode(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; y.len()];
        self.decode_into(y, &mut out);
        out
    }

    pub fn is_valid(&self) -> bool {
        self.offset.len() == self.scale.len()
            && self.scale.iter().all(|&s| s > 0.0 && s.is_finite())
            && self.offset.iter().all(|o| o.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rated_values_become_unity() {
        let s = ChannelScaling::per_unit(&[48.0, 10.4]).unwrap();
        assert_eq!(s.encode(&[48.0, 10.4]), vec![1.0, 1.0]);
        assert_eq!(s.encode(&[0.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(s.decode(&[1.0]), vec![48.0]);
    }

    #[test]
    fn non_positive_base_rejected() {
        assert!(ChannelScaling::per_unit(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn zscore_fit() {
        let s = ChannelScaling::fit_zscore(&[1.0, 5.0, 3.0, 5.0], 2).unwrap();
        assert_eq!(s.offset, vec![2.0, 5.0]);
        assert_eq!(s.scale, vec![1.0, 1.0]);
    }

    proptest! {
        #[test]
        fn affine_round_trip(
            x in proptest::collection::vec(-1e3f64..1e3, 3),
            off in proptest::collection::vec(-100f64..100.0, 3),
            sc in proptest::collection::vec(1e-2f64..1e2, 3),
        ) {
            let s = ChannelScaling { offset: off, scale: sc };
            let back = s.decode(&s.encode(&x));
            for (a, b) in x.iter().zip(&back) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
        }
    }
}
