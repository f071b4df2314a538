//! DC-microgrid plant and control.
//!
//! Each bus hosts one averaged buck converter (inductor current `i`,
//! capacitor/bus voltage `v`) feeding a local load. Buses are tied by
//! resistive lines. Above the converters sit three control layers:
//! inner voltage/current PI loops, a dynamic-consensus observer of the
//! network-average voltage, and the secondary power-sharing term.

mod control;
mod flows;
mod observer;
mod plant;
mod scenario;
mod sim;
mod topology;

pub use control::{control_errors, voltage_command, ControllerState, InnerLoop, InnerOutput, Pi};
pub use flows::{network_flows, Flows};
pub use observer::{observer_step, ConsensusObserver};
pub use plant::{
    converter_derivative, step_converter, ConverterParams, ConverterState, Load, Plant,
};
pub use scenario::{
    ControlConfig, Disturbance, DisturbanceKind, LineConfig, NodeConfig, PlantConfig, PowerSource,
    ScenarioConfig, TopologyConfig,
};
pub use sim::{
    run_scenario, run_scenario_with, NoEstimator, RemoteEstimator, Simulator, Trace, TraceRow,
};
pub use topology::{GridTopology, Line};
