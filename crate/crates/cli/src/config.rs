//! Configuration documents and experiment plans.
//!
//! A document is one JSON object holding the scenario sections (`plant`,
//! `topology`, `control`, `snn`, `noise`, `events`) plus an optional
//! `experiment` section. `experiment.base` names a bundled document whose
//! scenario sections are used as the starting point; the document's own
//! sections are merged over it key by key.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use spikegrid_core::events::EventThresholds;
use spikegrid_core::grid::ScenarioConfig;
use spikegrid_core::ValidationReport;

use crate::error::{CliError, Result};

/// The experiments the runner knows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Baseline,
    EventCaptureSweep,
    TrainUnderNoise,
    ExecuteUnderNoise,
    OutageReplay,
    LifAnalysis,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Baseline => "baseline",
            ExperimentKind::EventCaptureSweep => "event-capture-sweep",
            ExperimentKind::TrainUnderNoise => "train-under-noise",
            ExperimentKind::ExecuteUnderNoise => "execute-under-noise",
            ExperimentKind::OutageReplay => "outage-replay",
            ExperimentKind::LifAnalysis => "lif-analysis",
        }
    }

    /// Whether the kind needs at least one timed disturbance.
    fn needs_disturbance(self) -> bool {
        !matches!(self, ExperimentKind::Baseline | ExperimentKind::LifAnalysis)
    }

    fn trains(self) -> bool {
        matches!(
            self,
            ExperimentKind::TrainUnderNoise
                | ExperimentKind::ExecuteUnderNoise
                | ExperimentKind::OutageReplay
        )
    }
}

/// The `experiment` section as written; unset axes take per-kind defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
    pub base: Option<String>,
    /// SNR axis in dB; `null` entries mean clean.
    pub snr_db: Option<Vec<Option<f64>>>,
    /// Current-residual threshold axis (per-unit).
    pub sigma_i: Option<Vec<f64>>,
    pub seeds: Option<Vec<u64>>,
    pub settings: Settings,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::Baseline,
            base: None,
            snr_db: None,
            sigma_i: None,
            seeds: None,
            settings: Settings::default(),
            output: None,
        }
    }
}

/// Knobs shared by the experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// Detection window after each disturbance (s).
    pub truth_window: f64,
    /// Load-step magnitudes (S) of the training traces.
    pub train_magnitudes: Vec<f64>,
    /// Load-step magnitudes (S) of the held-out traces.
    pub heldout_magnitudes: Vec<f64>,
    /// Bus whose network is trained and replayed.
    pub estimator_node: usize,
    /// Training windows start this many ticks before the first disturbance.
    pub window_lead: usize,
    /// Noise realisations of the scenario used as replay training data.
    pub realisations: u32,
    /// Noise realisations per training trace when training under noise.
    pub train_realisations: u32,
    /// Noise realisations per held-out trace pooled into one score.
    pub heldout_realisations: u32,
    /// Noise run of the replayed trace; kept apart from the training runs.
    pub replay_run: u32,
    /// Calibration multiplier on the quiescent residual std.
    pub kappa: f64,
    /// Lower bounds of calibrated thresholds.
    pub calibration_floor: EventThresholds,
    /// Quiescent calibration stretch stays this far from `t = 0` and from
    /// the first disturbance (s).
    pub quiescent_margin: f64,
    /// Evaluate the embedded acceptance checks.
    pub acceptance: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            truth_window: 0.05,
            train_magnitudes: vec![0.05, 0.1, 0.2, 0.25],
            heldout_magnitudes: vec![0.075, 0.15, 0.225],
            estimator_node: 0,
            window_lead: 0,
            realisations: 8,
            train_realisations: 3,
            heldout_realisations: 4,
            replay_run: 77,
            kappa: spikegrid_core::noise::DEFAULT_KAPPA,
            calibration_floor: EventThresholds {
                sigma_v: 0.01,
                sigma_i: 0.1,
                sigma_o: 0.0039,
            },
            quiescent_margin: 0.05,
            acceptance: true,
        }
    }
}

/// Sweep axes after defaults are filled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    pub snr_db: Vec<Option<f64>>,
    pub sigma_i: Vec<f64>,
    pub seeds: Vec<u64>,
}

/// A validated experiment: what to run, on which scenario, over which axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub kind: ExperimentKind,
    pub scenario: ScenarioConfig,
    pub axes: SweepAxes,
    pub settings: Settings,
    pub output: Option<PathBuf>,
}

const BUNDLED: &[(&str, &str)] = &[
    ("baseline", include_str!("../scenarios/baseline.json")),
    (
        "load-step-sweep",
        include_str!("../scenarios/load-step-sweep.json"),
    ),
    (
        "train-under-noise",
        include_str!("../scenarios/train-under-noise.json"),
    ),
    (
        "execute-under-noise",
        include_str!("../scenarios/execute-under-noise.json"),
    ),
    (
        "outage-replay",
        include_str!("../scenarios/outage-replay.json"),
    ),
    (
        "load-increase-replay",
        include_str!("../scenarios/load-increase-replay.json"),
    ),
    (
        "lif-analysis",
        include_str!("../scenarios/lif-analysis.json"),
    ),
];

/// Names of the bundled documents.
pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

/// Text of a bundled document.
pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn invalid(field: &str, reason: &str) -> CliError {
    let mut r = ValidationReport::new();
    r.push(field, reason);
    CliError::Invalid(r)
}

fn scenario_sections(doc: &Value, depth: usize) -> Result<(Value, Option<Value>)> {
    let Value::Object(map) = doc else {
        return Err(invalid("<document>", "must be a JSON object"));
    };
    let mut scenario = map.clone();
    let experiment = scenario.remove("experiment");
    let base = experiment
        .as_ref()
        .and_then(|e| e.get("base"))
        .filter(|b| !b.is_null());
    let mut merged = Value::Object(Map::new());
    if let Some(b) = base {
        let name = b
            .as_str()
            .ok_or_else(|| invalid("experiment.base", "must be a string"))?;
        if depth > 4 {
            return Err(invalid(
                "experiment.base",
                "bundled documents nest too deeply",
            ));
        }
        let text = bundled(name).ok_or_else(|| {
            invalid(
                "experiment.base",
                &format!("unknown bundled document `{name}`"),
            )
        })?;
        let (inner, _) = scenario_sections(&serde_json::from_str(text)?, depth + 1)?;
        merged = inner;
    }
    merge(&mut merged, Value::Object(scenario));
    Ok((merged, experiment))
}

/// Parses and range-checks a configuration document, filling defaults.
///
/// Every violated field is collected into one report.
pub fn validate_config(document: &str) -> Result<ExperimentPlan> {
    let doc: Value = serde_json::from_str(document)?;
    let (scenario, experiment) = scenario_sections(&doc, 0)?;
    let section: ExperimentSection = match experiment {
        Some(e) => serde_json::from_value(e)?,
        None => ExperimentSection::default(),
    };
    let scenario: ScenarioConfig = serde_json::from_value(scenario)?;
    let plan = fill_defaults(section, scenario);
    let report = plan.validate();
    if report.is_empty() {
        Ok(plan)
    } else {
        Err(CliError::Invalid(report))
    }
}

fn fill_defaults(e: ExperimentSection, scenario: ScenarioConfig) -> ExperimentPlan {
    use ExperimentKind as K;
    let snr_db = e.snr_db.unwrap_or_else(|| match e.kind {
        K::EventCaptureSweep => vec![None, Some(40.0), Some(30.0), Some(20.0)],
        K::TrainUnderNoise | K::ExecuteUnderNoise => vec![None, Some(20.0)],
        K::LifAnalysis => vec![None],
        K::Baseline | K::OutageReplay => vec![scenario.noise.snr_db],
    });
    let sigma_i = e.sigma_i.unwrap_or_else(|| match e.kind {
        K::EventCaptureSweep => vec![0.1, 0.145, 0.4],
        _ => vec![scenario.snn.thresholds.sigma_i],
    });
    let seeds = e.seeds.unwrap_or_else(|| vec![scenario.noise.seed]);
    ExperimentPlan {
        kind: e.kind,
        axes: SweepAxes {
            snr_db,
            sigma_i,
            seeds,
        },
        settings: e.settings,
        output: e.output,
        scenario,
    }
}

impl ExperimentPlan {
    /// Range checks on the scenario and the experiment axes.
    pub fn validate(&self) -> ValidationReport {
        let mut r = self.scenario.validate();
        let a = &self.axes;
        let s = &self.settings;
        r.require(
            !a.snr_db.is_empty(),
            "experiment.snr_db",
            "axis must not be empty",
        );
        r.require(
            a.snr_db.iter().flatten().all(|x| x.is_finite()),
            "experiment.snr_db",
            "entries must be finite dB values or null for clean",
        );
        r.require(
            !a.sigma_i.is_empty(),
            "experiment.sigma_i",
            "axis must not be empty",
        );
        r.require(
            a.sigma_i.iter().all(|&x| x > 0.0 && x.is_finite()),
            "experiment.sigma_i",
            "thresholds must be > 0",
        );
        r.require(
            !a.seeds.is_empty(),
            "experiment.seeds",
            "axis must not be empty",
        );
        r.require(
            s.truth_window > 0.0 && s.truth_window.is_finite(),
            "experiment.settings.truth_window",
            "must be > 0",
        );
        r.require(
            s.kappa > 0.0 && s.kappa.is_finite(),
            "experiment.settings.kappa",
            "must be > 0",
        );
        r.require(
            s.quiescent_margin >= 0.0 && s.quiescent_margin.is_finite(),
            "experiment.settings.quiescent_margin",
            "must be >= 0",
        );
        r.merge(s.calibration_floor.validate());
        if self.kind.needs_disturbance() {
            r.require(
                !self.scenario.events.is_empty(),
                "events",
                "this experiment needs at least one disturbance",
            );
        }
        if self.kind.trains() {
            let n = self.scenario.n();
            let k = s.estimator_node;
            r.require(k < n, "experiment.settings.estimator_node", "no such node");
            if k < n && self.scenario.validate().is_empty() {
                r.require(
                    self.scenario.topology().neighbors(k).next().is_some(),
                    "experiment.settings.estimator_node",
                    "node has no neighbour to estimate",
                );
            }
        }
        if matches!(
            self.kind,
            ExperimentKind::TrainUnderNoise | ExperimentKind::ExecuteUnderNoise
        ) {
            for (field, n) in [
                (
                    "experiment.settings.train_realisations",
                    s.train_realisations,
                ),
                (
                    "experiment.settings.heldout_realisations",
                    s.heldout_realisations,
                ),
            ] {
                r.require(n > 0, field, "must be > 0");
            }
            for (field, m) in [
                ("experiment.settings.train_magnitudes", &s.train_magnitudes),
                (
                    "experiment.settings.heldout_magnitudes",
                    &s.heldout_magnitudes,
                ),
            ] {
                r.require(
                    !m.is_empty() && m.iter().all(|x| x.is_finite()),
                    field,
                    "needs at least one finite magnitude",
                );
            }
        }
        if self.kind == ExperimentKind::OutageReplay {
            r.require(
                s.realisations > 0,
                "experiment.settings.realisations",
                "must be > 0",
            );
            r.require(
                s.replay_run >= s.realisations,
                "experiment.settings.replay_run",
                "must differ from every training realisation",
            );
        }
        r
    }

    /// The plan as a self-contained document that validates back to it.
    pub fn to_document(&self) -> Result<String> {
        let mut doc = serde_json::to_value(&self.scenario)?;
        let section = ExperimentSection {
            kind: self.kind,
            base: None,
            snr_db: Some(self.axes.snr_db.clone()),
            sigma_i: Some(self.axes.sigma_i.clone()),
            seeds: Some(self.axes.seeds.clone()),
            settings: self.settings.clone(),
            output: self.output.clone(),
        };
        if let Value::Object(m) = &mut doc {
            m.insert("experiment".into(), serde_json::to_value(section)?);
        }
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Readout width used for the estimator bus: one `(v, i)` pair per
    /// neighbour, capped by the configured width.
    pub fn neighbors(&self) -> Vec<usize> {
        let k = self.settings.estimator_node;
        self.scenario
            .topology()
            .neighbors(k)
            .take(self.scenario.snn.outputs / 2)
            .collect()
    }

    /// Time of the first configured disturbance.
    pub fn first_disturbance(&self) -> Option<f64> {
        self.scenario
            .events
            .iter()
            .map(|d| d.time_s)
            .min_by(|a, b| a.total_cmp(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_bundled_document_validates() {
        for name in bundled_names() {
            let plan = validate_config(bundled(name).unwrap());
            assert!(plan.is_ok(), "{name}: {}", plan.unwrap_err());
        }
    }

    #[test]
    fn minimal_document_fills_network_defaults() {
        let plan = validate_config("{}").unwrap();
        assert_eq!(plan.kind, ExperimentKind::Baseline);
        assert_eq!(plan.scenario.n(), 2);
        assert_eq!(plan.scenario.snn.layer_sizes, vec![256, 256]);
        assert_eq!(plan.scenario.snn.outputs, 4);
        assert_eq!(plan.axes.seeds, vec![plan.scenario.noise.seed]);
    }

    #[test]
    fn degenerate_kernel_rejected() {
        let doc = r#"{"snn": {"kernel": {"tau_m": 0.005, "tau_syn": 0.005}}}"#;
        let Err(CliError::Invalid(r)) = validate_config(doc) else {
            panic!("expected a validation failure");
        };
        assert!(r.to_string().contains("degenerate"), "{r}");
    }

    #[test]
    fn disconnected_topology_rejected() {
        let doc = r#"{"plant": {"nodes": [{}, {}, {}]}}"#;
        let Err(CliError::Invalid(r)) = validate_config(doc) else {
            panic!("expected a validation failure");
        };
        assert!(r.to_string().contains("disconnected"), "{r}");
    }

    #[test]
    fn violations_across_sections_are_aggregated() {
        let doc = r#"{
            "control": {"dt_ctrl": -1},
            "experiment": {"kind": "event-capture-sweep", "seeds": [], "sigma_i": [0]}
        }"#;
        let Err(CliError::Invalid(r)) = validate_config(doc) else {
            panic!("expected a validation failure");
        };
        let fields: Vec<_> = r.violations.iter().map(|v| v.field.as_str()).collect();
        for f in [
            "control.dt_ctrl",
            "experiment.seeds",
            "experiment.sigma_i",
            "events",
        ] {
            assert!(fields.contains(&f), "{f} missing from {fields:?}");
        }
    }

    #[test]
    fn base_sections_merge_under_the_document() {
        let doc = r#"{
            "experiment": {"kind": "event-capture-sweep", "base": "load-step-sweep", "seeds": [3]},
            "control": {"duration": 1.0}
        }"#;
        let plan = validate_config(doc).unwrap();
        let base = validate_config(bundled("load-step-sweep").unwrap()).unwrap();
        assert_eq!(plan.scenario.events, base.scenario.events);
        assert_eq!(plan.scenario.control.duration, 1.0);
        assert_eq!(plan.scenario.control.settle, base.scenario.control.settle);
        assert_eq!(plan.axes.seeds, vec![3]);
        assert_eq!(plan.axes.sigma_i, vec![0.1, 0.145, 0.4]);
    }

    #[test]
    fn unknown_base_and_fields_rejected() {
        let doc = r#"{"experiment": {"base": "nope"}}"#;
        assert!(matches!(validate_config(doc), Err(CliError::Invalid(_))));
        assert!(matches!(
            validate_config(r#"{"plant": {"wat": 1}}"#),
            Err(CliError::Parse(_))
        ));
    }

    #[test]
    fn plan_round_trips_through_its_document() {
        for name in bundled_names() {
            let plan = validate_config(bundled(name).unwrap()).unwrap();
            let again = validate_config(&plan.to_document().unwrap()).unwrap();
            assert_eq!(plan, again, "{name}");
        }
    }

    #[test]
    fn two_bus_estimator_sees_one_neighbour() {
        let plan = validate_config(bundled("train-under-noise").unwrap()).unwrap();
        assert_eq!(plan.neighbors(), vec![1]);
    }
}
