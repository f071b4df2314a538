use alloc::vec;
use alloc::vec::Vec;

use super::topology::GridTopology;

/// Line currents of a resistive network.
#[derive(Debug, Clone, PartialEq)]
pub struct Flows {
    /// Current on each line, positive from `from` to `to` (A).
    pub edge: Vec<f64>,
    /// Net current each node injects into the lines (A).
    pub net: Vec<f64>,
}

/// `I_kj = g_kj (v_k − v_j)` per line and the signed per-node sum.
pub fn network_flows(voltages: &[f64], topology: &GridTopology) -> Flows {
    let mut net = vec![0.0; topology.n];
    let edge = topology
        .lines
        .iter()
        .map(|l| {
            let f = l.conductance * (voltages[l.from] - voltages[l.to]);
            net[l.from] += f;
            net[l.to] -= f;
            f
        })
        .collect();
    Flows { edge, net }
}
