use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::plant::{ConverterParams, Load};
use super::topology::{GridTopology, Line};
use crate::error::ValidationReport;
use crate::noise::NoiseSpec;
use crate::snn::SnnConfig;

/// Full description of one closed-loop scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct ScenarioConfig {
    pub plant: PlantConfig,
    pub topology: TopologyConfig,
    pub control: ControlConfig,
    pub snn: SnnConfig,
    pub noise: NoiseSpec,
    pub events: Vec<Disturbance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    pub nodes: Vec<NodeConfig>,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            nodes: vec![NodeConfig::default(), NodeConfig::default()],
        }
    }
}

/// One bus: converter parameters plus its local load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NodeConfig {
    pub inductance: f64,
    pub capacitance: f64,
    pub v_in: f64,
    pub rated_power: f64,
    pub rated_voltage: f64,
    /// Resistive load conductance (S).
    pub load_conductance: f64,
    /// Constant-power load (W).
    pub load_power: f64,
}

impl Default for NodeConfig {
    fn default() -> Self {
        let p = ConverterParams::default();
        Self {
            inductance: p.inductance,
            capacitance: p.capacitance,
            v_in: p.v_in,
            rated_power: p.rated_power,
            rated_voltage: p.rated_voltage,
            load_conductance: 0.2,
            load_power: 0.0,
        }
    }
}

impl NodeConfig {
    pub fn params(&self) -> ConverterParams {
        ConverterParams {
            inductance: self.inductance,
            capacitance: self.capacitance,
            v_in: self.v_in,
            rated_power: self.rated_power,
            rated_voltage: self.rated_voltage,
        }
    }

    pub fn load(&self) -> Load {
        Load {
            conductance: self.load_conductance,
            power: self.load_power,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineConfig {
    pub from: usize,
    pub to: usize,
    pub conductance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub lines: Vec<LineConfig>,
    /// Uniform consensus weight placed on every line-connected pair.
    pub consensus_weight: f64,
    /// Explicit `a_kj` matrix; overrides `consensus_weight` when present.
    pub adjacency: Option<Vec<Vec<f64>>>,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            lines: vec![LineConfig {
                from: 0,
                to: 1,
                conductance: 2.0,
            }],
            consensus_weight: 50.0,
            adjacency: None,
        }
    }
}

impl TopologyConfig {
    pub fn build(&self, n: usize) -> GridTopology {
        let lines = self
            .lines
            .iter()
            .map(|l| Line {
                from: l.from,
                to: l.to,
                conductance: l.conductance,
            })
            .collect();
        let mut topo = GridTopology::from_lines(n, lines, self.consensus_weight);
        if let Some(a) = &self.adjacency {
            topo.adjacency = vec![f64::NAN; n * n];
            if a.len() == n && a.iter().all(|r| r.len() == n) {
                topo.adjacency = a.iter().flatten().copied().collect();
            }
        }
        topo
    }
}

/// Where the secondary controller takes neighbour powers from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerSource {
    /// Ground-truth neighbour powers.
    Oracle,
    /// Powers reconstructed from the spiking estimator's outputs.
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    /// Network-average voltage reference (V).
    pub v_ref: f64,
    pub kp_primary: f64,
    pub ki_primary: f64,
    pub kp_secondary: f64,
    pub ki_secondary: f64,
    /// Secondary integrators are clamped to this fraction of `v_ref`.
    pub anti_windup_fraction: f64,
    pub kp_voltage: f64,
    pub ki_voltage: f64,
    pub kp_current: f64,
    pub ki_current: f64,
    pub dt_plant: f64,
    pub dt_ctrl: f64,
    /// Recorded duration (s).
    pub duration: f64,
    /// Unrecorded pre-roll that lets the loop settle before `t = 0` (s).
    pub settle: f64,
    pub power_source: PowerSource,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            v_ref: 48.0,
            kp_primary: 0.0,
            ki_primary: 30.0,
            kp_secondary: 0.0,
            ki_secondary: 0.0026,
            anti_windup_fraction: 0.1,
            kp_voltage: 0.5,
            ki_voltage: 50.0,
            kp_current: 2.0,
            ki_current: 400.0,
            dt_plant: 1e-5,
            dt_ctrl: 1e-4,
            duration: 2.0,
            settle: 1.0,
            power_source: PowerSource::Oracle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceKind {
    /// Adds `magnitude` siemens to the target bus load.
    LoadStep,
    /// Takes the target converter out of service.
    Outage,
    /// Shifts the target node's voltage reference by `magnitude` volts.
    ReferenceStep,
}

/// A timed disturbance applied during the recorded interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    pub time_s: f64,
    pub kind: DisturbanceKind,
    pub target_node: usize,
    #[serde(default)]
    pub magnitude: f64,
}

impl ScenarioConfig {
    pub fn n(&self) -> usize {
        self.plant.nodes.len()
    }

    pub fn params(&self) -> Vec<ConverterParams> {
        self.plant.nodes.iter().map(NodeConfig::params).collect()
    }

    pub fn topology(&self) -> GridTopology {
        self.topology.build(self.n())
    }

    /// Ticks of the control clock inside the recorded interval.
    pub fn recorded_ticks(&self) -> usize {
        libm::round(self.control.duration / self.control.dt_ctrl) as usize
    }

    /// Range-checks every physical and network parameter, aggregating all
    /// violations.
    pub fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::new();
        let n = self.n();
        r.require(n > 0, "plant.nodes", "at least one node is required");
        for (k, node) in self.plant.nodes.iter().enumerate() {
            r.merge(node.params().validate(&format!("plant.nodes[{k}]")));
            r.require(
                node.load_conductance >= 0.0 && node.load_conductance.is_finite(),
                format!("plant.nodes[{k}].load_conductance"),
                "must be >= 0",
            );
            r.require(
                node.load_power >= 0.0 && node.load_power.is_finite(),
                format!("plant.nodes[{k}].load_power"),
                "must be >= 0",
            );
        }
        if let Some(a) = &self.topology.adjacency {
            r.require(
                a.len() == n && a.iter().all(|row| row.len() == n),
                "topology.adjacency",
                "must be an n x n matrix",
            );
        }
        r.require(
            self.topology.consensus_weight >= 0.0,
            "topology.consensus_weight",
            "must be >= 0",
        );
        if n > 0 {
            r.merge(self.topology().validate());
        }
        let c = &self.control;
        let pos = |x: f64| x > 0.0 && x.is_finite();
        r.require(pos(c.v_ref), "control.v_ref", "must be > 0");
        r.require(pos(c.dt_plant), "control.dt_plant", "must be > 0");
        r.require(
            c.dt_plant <= 1e-4,
            "control.dt_plant",
            "must not exceed 1e-4 s",
        );
        r.require(pos(c.dt_ctrl), "control.dt_ctrl", "must be > 0");
        if pos(c.dt_plant) && pos(c.dt_ctrl) {
            let ratio = c.dt_ctrl / c.dt_plant;
            r.require(
                libm::fabs(ratio - libm::round(ratio)) < 1e-9 && ratio >= 1.0,
                "control.dt_ctrl",
                "must be an integer multiple of dt_plant",
            );
        }
        r.require(pos(c.duration), "control.duration", "must be > 0");
        r.require(c.settle >= 0.0, "control.settle", "must be >= 0");
        r.require(
            pos(c.anti_windup_fraction),
            "control.anti_windup_fraction",
            "must be > 0",
        );
        for (name, g) in [
            ("kp_primary", c.kp_primary),
            ("ki_primary", c.ki_primary),
            ("kp_secondary", c.kp_secondary),
            ("ki_secondary", c.ki_secondary),
            ("kp_voltage", c.kp_voltage),
            ("ki_voltage", c.ki_voltage),
            ("kp_current", c.kp_current),
            ("ki_current", c.ki_current),
        ] {
            r.require(
                g >= 0.0 && g.is_finite(),
                format!("control.{name}"),
                "gains must be finite and >= 0",
            );
        }
        for (e, d) in self.events.iter().enumerate() {
            r.require(
                d.target_node < n,
                format!("events[{e}].target_node"),
                "no such node",
            );
            r.require(
                d.time_s >= 0.0 && d.time_s <= c.duration,
                format!("events[{e}].time_s"),
                "must lie inside the recorded interval",
            );
            if d.kind == DisturbanceKind::LoadStep {
                r.require(
                    d.magnitude.is_finite(),
                    format!("events[{e}].magnitude"),
                    "must be finite",
                );
            }
        }
        r.merge(self.snn.validate());
        r.merge(self.noise.validate());
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        let r = ScenarioConfig::default().validate();
        assert!(r.is_empty(), "{r}");
    }

    #[test]
    fn violations_are_aggregated() {
        let mut c = ScenarioConfig::default();
        c.plant.nodes[0].inductance = -1.0;
        c.control.dt_ctrl = 0.0;
        c.events.push(Disturbance {
            time_s: 0.5,
            kind: DisturbanceKind::Outage,
            target_node: 7,
            magnitude: 0.0,
        });
        let r = c.validate();
        let fields: Vec<_> = r.violations.iter().map(|v| v.field.as_str()).collect();
        assert!(fields.contains(&"plant.nodes[0].inductance"));
        assert!(fields.contains(&"control.dt_ctrl"));
        assert!(fields.contains(&"events[0].target_node"));
    }

    #[test]
    fn disconnected_topology_rejected() {
        let mut c = ScenarioConfig::default();
        c.plant.nodes.push(NodeConfig::default());
        let r = c.validate();
        assert!(r
            .violations
            .iter()
            .any(|v| v.reason.contains("disconnected")));
    }
}
