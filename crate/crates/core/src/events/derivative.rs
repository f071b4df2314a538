/// Causal three-tap median.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Median3 {
    buf: [f64; 3],
    len: usize,
}

impl Median3 {
    /// Pushes a sample; returns the median once three samples are held.
    pub fn push(&mut self, x: f64) -> Option<f64> {
        self.buf = [self.buf[1], self.buf[2], x];
        self.len = (self.len + 1).min(3);
        (self.len == 3).then(|| {
            let [a, b, c] = self.buf;
            a.max(b).min(a.min(b).max(c))
        })
    }
}

/// Median prefilter followed by a first-order backward difference.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DerivativeFilter {
    median: Median3,
    prev: Option<f64>,
    bypass: bool,
}

impl DerivativeFilter {
    /// Backward difference on the raw samples, without the median.
    pub fn unfiltered() -> Self {
        Self {
            bypass: true,
            ..Self::default()
        }
    }

    /// Returns `(filtered, derivative)`. Until the median window is full the
    /// raw sample passes through with zero derivative, and the first full
    /// window also reports zero derivative.
    pub fn push(&mut self, x: f64, dt: f64) -> (f64, f64) {
        let m = self.median.push(x);
        let m = if self.bypass { m.map(|_| x) } else { m };
        match m {
            None => (x, 0.0),
            Some(m) => {
                let d = self.prev.map_or(0.0, |p| (m - p) / dt);
                self.prev = Some(m);
                (m, d)
            }
        }
    }

    pub fn is_warm(&self) -> bool {
        self.prev.is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_rejects_single_outlier() {
        let mut m = Median3::default();
        assert_eq!(m.push(1.0), None);
        assert_eq!(m.push(100.0), None);
        assert_eq!(m.push(2.0), Some(2.0));
        assert_eq!(m.push(3.0), Some(3.0));
        assert_eq!(m.push(-50.0), Some(2.0));
    }

    #[test]
    fn ramp_derivative_after_warmup() {
        let mut f = DerivativeFilter::default();
        let dt = 1e-4;
        let out: alloc::vec::Vec<_> = (0..6).map(|n| f.push(2.0 * n as f64 * dt, dt)).collect();
        assert_eq!(out[0].1, 0.0);
        assert_eq!(out[1].1, 0.0);
        assert_eq!(out[2].1, 0.0);
        for (_, d) in &out[3..] {
            assert!((d - 2.0).abs() < 1e-9);
        }
        // monotone input: the median is the middle sample, one tick late
        assert!((out[5].0 - 2.0 * 4.0 * dt).abs() < 1e-15);
    }

    #[test]
    fn unfiltered_passes_outliers() {
        let mut f = DerivativeFilter::unfiltered();
        f.push(0.0, 1.0);
        f.push(0.0, 1.0);
        f.push(0.0, 1.0);
        assert_eq!(f.push(5.0, 1.0), (5.0, 5.0));
    }

    #[test]
    fn constant_signal_has_zero_derivative() {
        let mut f = DerivativeFilter::default();
        for _ in 0..10 {
            assert_eq!(f.push(48.0, 1e-4), (48.0, 0.0));
        }
    }
}
