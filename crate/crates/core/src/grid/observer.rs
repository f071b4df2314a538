use alloc::vec;
use alloc::vec::Vec;

use super::topology::GridTopology;

/// One discretised step of the dynamic average-consensus observer for node `k`:
///
/// `v̄_k = v_k + ∫ Σ_j a_kj (v̄_j − v̄_k) dτ`
///
/// `integral_k` is the running integral; the updated pair `(v̄_k, integral_k)`
/// is returned. Neighbour estimates are taken from the previous tick.
pub fn observer_step(
    v_local: f64,
    integral_k: f64,
    v_bar_all: &[f64],
    topology: &GridTopology,
    k: usize,
    dt: f64,
) -> (f64, f64) {
    let flux: f64 = (0..topology.n)
        .map(|j| topology.a(k, j) * (v_bar_all[j] - v_bar_all[k]))
        .sum();
    let integral = integral_k + dt * flux;
    (v_local + integral, integral)
}

/// Observer state for every node, updated synchronously.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusObserver {
    pub v_bar: Vec<f64>,
    pub integral: Vec<f64>,
}

impl ConsensusObserver {
    pub fn new(v0: &[f64]) -> Self {
        Self {
            v_bar: v0.to_vec(),
            integral: vec![0.0; v0.len()],
        }
    }

    pub fn step(&mut self, v: &[f64], topology: &GridTopology, dt: f64) {
        let prev = self.v_bar.clone();
        for k in 0..v.len() {
            let (vb, w) = observer_step(v[k], self.integral[k], &prev, topology, k, dt);
            self.v_bar[k] = vb;
            self.integral[k] = w;
        }
    }
}
