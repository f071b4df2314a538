use alloc::vec;
use alloc::vec::Vec;

use crate::error::ValidationReport;

/// A resistive tie-line between two buses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    /// Series conductance in siemens.
    pub conductance: f64,
}

/// Electrical and communication graph of the microgrid.
///
/// `adjacency` holds the consensus weights `a_kj` (row-major `n x n`), used by
/// both the average-voltage observer and the power-sharing error. `lines`
/// carries the physical tie-lines.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTopology {
    pub n: usize,
    pub adjacency: Vec<f64>,
    pub lines: Vec<Line>,
}

impl GridTopology {
    /// Communication graph follows the lines with a uniform weight.
    pub fn from_lines(n: usize, lines: Vec<Line>, weight: f64) -> Self {
        let mut adjacency = vec![0.0; n * n];
        for l in &lines {
            if l.from < n && l.to < n && l.from != l.to {
                adjacency[l.from * n + l.to] = weight;
                adjacency[l.to * n + l.from] = weight;
            }
        }
        Self {
            n,
            adjacency,
            lines,
        }
    }

    /// Two buses joined by a single line.
    pub fn two_bus(conductance: f64, weight: f64) -> Self {
        Self::from_lines(
            2,
            vec![Line {
                from: 0,
                to: 1,
                conductance,
            }],
            weight,
        )
    }

    #[inline]
    pub fn a(&self, k: usize, j: usize) -> f64 {
        self.adjacency[k * self.n + j]
    }

    /// Neighbours of `k` in the communication graph.
    pub fn neighbors(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| j != k && self.a(k, j) > 0.0)
    }

    /// Binary node/line incidence matrix `J` (`n x lines`, row-major).
    pub fn incidence(&self) -> Vec<u8> {
        let m = self.lines.len();
        let mut j = vec![0u8; self.n * m];
        for (e, l) in self.lines.iter().enumerate() {
            j[l.from * m + e] = 1;
            j[l.to * m + e] = 1;
        }
        j
    }

    /// Same topology with every link touching a `false` node removed from the
    /// communication graph.
    pub fn restricted(&self, alive: &[bool]) -> Self {
        let mut out = self.clone();
        for k in 0..self.n {
            for j in 0..self.n {
                if !alive[k] || !alive[j] {
                    out.adjacency[k * self.n + j] = 0.0;
                }
            }
        }
        out
    }

    fn connected_by(&self, linked: impl Fn(usize, usize) -> bool) -> bool {
        if self.n == 0 {
            return false;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(k) = stack.pop() {
            for j in 0..self.n {
                if !seen[j] && linked(k, j) {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    pub fn physically_connected(&self) -> bool {
        self.connected_by(|k, j| {
            self.lines.iter().any(|l| {
                l.conductance > 0.0 && ((l.from == k && l.to == j) || (l.from == j && l.to == k))
            })
        })
    }

    pub fn communication_connected(&self) -> bool {
        self.connected_by(|k, j| self.a(k, j) > 0.0)
    }

    pub fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::new();
        r.require(
            self.n > 0,
            "topology.nodes",
            "at least one node is required",
        );
        r.require(
            self.adjacency.len() == self.n * self.n,
            "topology.adjacency",
            "must be an n x n matrix",
        );
        if self.adjacency.len() == self.n * self.n {
            for k in 0..self.n {
                r.require(
                    self.a(k, k) == 0.0,
                    alloc::format!("topology.adjacency[{k}][{k}]"),
                    "self-weights must be zero",
                );
                for j in 0..self.n {
                    let (a, b) = (self.a(k, j), self.a(j, k));
                    if !(a >= 0.0 && a.is_finite()) || a != b {
                        r.push(
                            alloc::format!("topology.adjacency[{k}][{j}]"),
                            "weights must be finite, non-negative and symmetric",
                        );
                    }
                }
            }
            r.require(
                self.n == 1 || self.communication_connected(),
                "topology.adjacency",
                "communication graph is disconnected",
            );
        }
        for (e, l) in self.lines.iter().enumerate() {
            r.require(
                l.from < self.n && l.to < self.n && l.from != l.to,
                alloc::format!("topology.lines[{e}]"),
                "endpoints must be distinct existing nodes",
            );
            r.require(
                l.conductance > 0.0 && l.conductance.is_finite(),
                alloc::format!("topology.lines[{e}].conductance"),
                "must be positive",
            );
        }
        r.require(
            self.n == 1 || self.physically_connected(),
            "topology.lines",
            "electrical network is disconnected",
        );
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn incidence_is_binary() {
        let t = GridTopology::from_lines(
            3,
            vec![
                Line {
                    from: 0,
                    to: 1,
                    conductance: 1.0,
                },
                Line {
                    from: 1,
                    to: 2,
                    conductance: 1.0,
                },
            ],
            1.0,
        );
        let j = t.incidence();
        assert_eq!(j, vec![1, 0, 1, 1, 0, 1]);
        assert!(t.validate().is_empty());
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let t = GridTopology::from_lines(
            3,
            vec![Line {
                from: 0,
                to: 1,
                conductance: 1.0,
            }],
            1.0,
        );
        let r = t.validate();
        assert!(r
            .violations
            .iter()
            .any(|v| v.reason.contains("disconnected")));
    }

    #[test]
    fn restricted_isolates_dead_nodes() {
        let t = GridTopology::two_bus(2.0, 5.0);
        let r = t.restricted(&[true, false]);
        assert_eq!(r.a(0, 1), 0.0);
        assert_eq!(r.neighbors(0).count(), 0);
    }
}
