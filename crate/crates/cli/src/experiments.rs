//! The experiments behind `run`, `sweep` and `replay`.
//!
//! Each experiment returns a typed result; [`artifacts`] turns it into
//! files, sweep-grid rows and acceptance checks.

use rayon::prelude::*;
use spikegrid_core::events::{
    episode_from_trace, residual_series, EventPipeline, EventRecord, EventThresholds, Residuals,
    FEATURES,
};
use spikegrid_core::grid::{
    run_scenario, run_scenario_with, DisturbanceKind, ScenarioConfig, Trace,
};
use spikegrid_core::noise::{
    calibrate_threshold, estimation_error, event_metrics, noisy_lif_ensemble, noisy_trace,
    DetectionReport, NoiseSpec,
};
use spikegrid_core::snn::{
    evaluate, lif_frequency_response, simulate_sine_gain, train, Episode, SrmNetwork, TrainReport,
};

use crate::config::{ExperimentKind, ExperimentPlan};
use crate::error::{CliError, Context, Result};
use crate::formats::{events_csv, model_json, sweep_csv, trace_csv, SweepRow};

/// Power-sharing tolerance as a fraction of rated power.
pub const SHARING_TOLERANCE: f64 = 0.01;
/// Average-voltage tolerance as a fraction of the reference.
pub const VOLTAGE_TOLERANCE: f64 = 0.005;
/// Sharing and restoration must hold from this time on (s).
pub const SETTLE_BY: f64 = 0.5;
/// Highest clean held-out normalized MSE of a trained estimator.
pub const CLEAN_NMSE_LIMIT: f64 = 0.05;
/// Largest allowed noisy/clean NMSE ratio.
pub const NOISE_RATIO_LIMIT: f64 = 3.0;
/// Highest replay tracking NMSE.
pub const REPLAY_NMSE_LIMIT: f64 = 0.1;
/// Fraction of seeds that must show the capture pattern.
pub const PATTERN_FRACTION: f64 = 0.9;
/// Largest relative deviation of a simulated LIF gain.
pub const GAIN_TOLERANCE: f64 = 0.02;
/// Cut-off band for membrane constants between 10 and 100 ms (Hz).
pub const CUTOFF_BAND: (f64, f64) = (1.59, 15.92);
/// Allowed RMS reduction per tenfold ensemble growth.
pub const ENSEMBLE_RATIO: (f64, f64) = (2.5, 4.0);

/// Noise runs of held-out traces start here, clear of the training runs.
const HELDOUT_RUN: u32 = 1000;
/// Replay traces for inspection use this run when executing under noise.
const EXECUTE_RUN: u32 = 2000;

pub const ENSEMBLE_SIZES: [usize; 3] = [10, 100, 1000];
pub const ENSEMBLE_STEPS: usize = 50_000;
pub const ENSEMBLE_DT: f64 = 1e-4;
pub const ENSEMBLE_NOISE: f64 = 0.2;
pub const CUTOFF_TAUS: [f64; 4] = [10e-3, 20e-3, 50e-3, 100e-3];

/// One embedded acceptance check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }
}

/// Files, grid rows and checks of one experiment.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub files: Vec<(String, Vec<u8>)>,
    pub rows: Vec<SweepRow>,
    pub checks: Vec<Check>,
    /// Cells that failed; completed cells are still written.
    pub failures: Vec<String>,
}

fn simulate(cfg: &ScenarioConfig) -> Result<Trace> {
    run_scenario(cfg).context(|| "simulating scenario".into())
}

fn noise(plan: &ExperimentPlan, snr_db: Option<f64>, seed: u64) -> NoiseSpec {
    NoiseSpec {
        snr_db,
        seed,
        ..plan.scenario.noise.clone()
    }
}

fn snr_label(snr: Option<f64>) -> String {
    snr.map_or_else(|| "clean".into(), |s| format!("snr{s}"))
}

fn truth(plan: &ExperimentPlan) -> Vec<f64> {
    plan.scenario.events.iter().map(|d| d.time_s).collect()
}

fn thresholds_of(t: &EventThresholds) -> [f64; 3] {
    [t.sigma_v, t.sigma_i, t.sigma_o]
}

fn tick_of(t: f64, dt: f64) -> usize {
    (t / dt - 1e-9).ceil().max(0.0) as usize
}

// ---------------------------------------------------------------- baseline

#[derive(Debug, Clone)]
pub struct BaselineResult {
    pub trace: Trace,
    pub events: Vec<EventRecord>,
    /// Largest power mismatch between online buses over the judged stretch,
    /// as a fraction of the smallest rating.
    pub sharing_error: f64,
    /// Largest `|mean(v̄) − V_ref| / V_ref` over the judged stretch.
    pub voltage_error: f64,
    /// Start of the judged stretch (s).
    pub judged_from: f64,
}

/// Closed-loop run of the scenario. Without disturbances, sharing and
/// restoration are judged from [`SETTLE_BY`] on; otherwise on the last tick.
pub fn baseline(plan: &ExperimentPlan) -> Result<BaselineResult> {
    let cfg = &plan.scenario;
    let mut pipe = EventPipeline::new(cfg, None);
    let trace = run_scenario_with(cfg, &mut pipe).context(|| "baseline run".into())?;
    let rated = cfg
        .plant
        .nodes
        .iter()
        .map(|n| n.rated_power)
        .fold(f64::INFINITY, f64::min);
    let last = trace.ticks().saturating_sub(1);
    let from = if cfg.events.is_empty() {
        tick_of(SETTLE_BY.min(cfg.control.duration), trace.dt).min(last)
    } else {
        last
    };
    let (mut share, mut volt) = (0.0f64, 0.0f64);
    for n in from..trace.ticks() {
        let rows: Vec<_> = (0..trace.n_nodes)
            .map(|k| trace.row(n, k))
            .filter(|r| r.online)
            .collect();
        let (lo, hi) = rows
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| {
                (a.min(r.p), b.max(r.p))
            });
        share = share.max((hi - lo) / rated);
        let mean = rows.iter().map(|r| r.v_bar).sum::<f64>() / rows.len().max(1) as f64;
        volt = volt.max((mean - cfg.control.v_ref).abs() / cfg.control.v_ref);
    }
    Ok(BaselineResult {
        judged_from: from as f64 * trace.dt,
        events: pipe.into_events(),
        trace,
        sharing_error: share,
        voltage_error: volt,
    })
}

// ------------------------------------------------------------------- sweep

#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub report: DetectionReport,
    pub activity: f64,
    pub events: Vec<EventRecord>,
}

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub snr_db: Option<f64>,
    pub thresholds: EventThresholds,
    pub seeds: Vec<SeedOutcome>,
}

impl SweepCell {
    fn row(&self) -> SweepRow {
        let n = self.seeds.len().max(1) as f64;
        let mean = |f: &dyn Fn(&SeedOutcome) -> f64| self.seeds.iter().map(f).sum::<f64>() / n;
        let lat: Vec<f64> = self.seeds.iter().filter_map(|s| s.report.latency).collect();
        SweepRow {
            snr_db: self.snr_db,
            thresholds: thresholds_of(&self.thresholds),
            precision: Some(mean(&|s| s.report.precision)),
            recall: Some(mean(&|s| s.report.recall)),
            latency_ms: (!lat.is_empty()).then(|| 1e3 * lat.iter().sum::<f64>() / lat.len() as f64),
            false_per_s: Some(mean(&|s| s.report.false_per_s)),
            nmse_v: None,
            nmse_i: None,
            activity_ratio: Some(mean(&|s| s.activity)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub clean: Trace,
    /// Cells in `snr × sigma_i` order.
    pub cells: Vec<SweepCell>,
    /// `(snr, seed, error)` of realisations that failed.
    pub failures: Vec<(Option<f64>, u64, String)>,
}

impl SweepResult {
    pub fn cell(&self, snr_db: Option<f64>, sigma_i: f64) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.snr_db == snr_db && c.thresholds.sigma_i == sigma_i)
    }

    /// Seeds showing clean P = R = 1 at σ_I = 0.1, P < 1 at SNR 20 with
    /// σ_I = 0.1, and P = R = 1 again at SNR 20 with σ_I = 0.4, out of the
    /// seeds evaluated. `None` when the grid lacks one of those cells.
    pub fn pattern_count(&self) -> Option<(usize, usize)> {
        let clean = self.cell(None, 0.1)?;
        let low = self.cell(Some(20.0), 0.1)?;
        let high = self.cell(Some(20.0), 0.4)?;
        let perfect = |r: &DetectionReport| r.precision == 1.0 && r.recall == 1.0;
        let mut hits = 0;
        for s in &clean.seeds {
            let find = |c: &SweepCell| {
                c.seeds
                    .iter()
                    .find(|x| x.seed == s.seed)
                    .map(|x| x.report.clone())
            };
            if let (Some(l), Some(h)) = (find(low), find(high)) {
                if perfect(&s.report) && l.precision < 1.0 && perfect(&h) {
                    hits += 1;
                }
            }
        }
        Some((hits, clean.seeds.len()))
    }
}

/// Replays noisy copies of one clean run over the `snr × sigma_i × seed`
/// grid. Each (SNR, seed) realisation draws from its own substream.
pub fn capture_sweep(plan: &ExperimentPlan) -> Result<SweepResult> {
    let clean = simulate(&plan.scenario)?;
    let topo = plan.scenario.topology();
    let truth = truth(plan);
    let duration = plan.scenario.control.duration;
    let window = plan.settings.truth_window;
    let jobs: Vec<(usize, Option<f64>, u64)> = plan
        .axes
        .snr_db
        .iter()
        .enumerate()
        .flat_map(|(k, &snr)| plan.axes.seeds.iter().map(move |&s| (k, snr, s)))
        .collect();
    let outcomes: Vec<_> = jobs
        .par_iter()
        .map(|&(k, snr, seed)| {
            let noisy = noisy_trace(&clean, &noise(plan, snr, seed), 0)
                .context(|| format!("noise {} seed {seed}", snr_label(snr)))?;
            let per_sigma = plan
                .axes
                .sigma_i
                .iter()
                .map(|&sigma| {
                    let mut cfg = plan.scenario.clone();
                    cfg.snn.thresholds.sigma_i = sigma;
                    let mut pipe = EventPipeline::new(&cfg, None);
                    let mut t = noisy.clone();
                    pipe.replay(&mut t, &topo);
                    let report = event_metrics(pipe.events(), &truth, window, duration);
                    SeedOutcome {
                        seed,
                        report,
                        activity: pipe.activity_ratio(),
                        events: pipe.into_events(),
                    }
                })
                .collect::<Vec<_>>();
            Ok::<_, CliError>((k, per_sigma))
        })
        .collect();
    let mut cells: Vec<SweepCell> = plan
        .axes
        .snr_db
        .iter()
        .flat_map(|&snr| plan.axes.sigma_i.iter().map(move |&sigma| (snr, sigma)))
        .map(|(snr_db, sigma)| SweepCell {
            snr_db,
            thresholds: EventThresholds {
                sigma_i: sigma,
                ..plan.scenario.snn.thresholds
            },
            seeds: Vec::new(),
        })
        .collect();
    let mut failures = Vec::new();
    let n_sigma = plan.axes.sigma_i.len();
    for ((_, snr, seed), out) in jobs.iter().zip(outcomes) {
        match out {
            Ok((k, per_sigma)) => {
                for (j, s) in per_sigma.into_iter().enumerate() {
                    cells[k * n_sigma + j].seeds.push(s);
                }
            }
            Err(e) => failures.push((*snr, *seed, e.to_string())),
        }
    }
    Ok(SweepResult {
        clean,
        cells,
        failures,
    })
}

// ---------------------------------------------------------------- training

/// Held-out normalized MSE: averaged over all readout channels, and for the
/// first neighbour's voltage and current separately.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub nmse: f64,
    pub nmse_v: f64,
    pub nmse_i: f64,
}

/// Scores `net` on `episodes`, each primed on its history.
pub fn score(net: &SrmNetwork, episodes: &[Episode]) -> Result<Score> {
    let (nmse, _) = evaluate(net, episodes).context(|| "evaluating".into())?;
    let n_out = net.n_outputs();
    let (mut est, mut meas) = ([Vec::new(), Vec::new()], [Vec::new(), Vec::new()]);
    for e in episodes {
        let out = net
            .forward_after(&e.history, &e.inputs, false)
            .context(|| "forward pass".into())?
            .outputs;
        for c in 0..2 {
            est[c].extend(out.iter().skip(c).step_by(n_out));
            meas[c].extend(e.targets.iter().skip(c).step_by(n_out));
        }
    }
    let ch = |c: usize| estimation_error(&est[c], &meas[c]).map(|x| x.1);
    Ok(Score {
        nmse,
        nmse_v: ch(0).context(|| "scoring voltage".into())?,
        nmse_i: ch(1).context(|| "scoring current".into())?,
    })
}

fn with_load_step(cfg: &ScenarioConfig, magnitude: f64) -> ScenarioConfig {
    let mut c = cfg.clone();
    for d in c
        .events
        .iter_mut()
        .filter(|d| d.kind == DisturbanceKind::LoadStep)
    {
        d.magnitude = magnitude;
    }
    c
}

fn window_start(plan: &ExperimentPlan) -> usize {
    let t = plan.first_disturbance().unwrap_or(0.0);
    tick_of(t, plan.scenario.control.dt_ctrl).saturating_sub(plan.settings.window_lead)
}

/// Training window of the estimator bus from a noisy copy of `clean`, with
/// targets taken from the clean trace.
fn noisy_episode(
    plan: &ExperimentPlan,
    clean: &Trace,
    spec: &NoiseSpec,
    run: u32,
) -> Result<Episode> {
    let node = plan.settings.estimator_node;
    let neighbors = plan.neighbors();
    let (start, window) = (window_start(plan), plan.scenario.snn.training.window);
    let noisy = noisy_trace(clean, spec, run).context(|| format!("noise run {run}"))?;
    let mut e = episode_from_trace(&noisy, node, &neighbors, start, window)
        .context(|| "cutting training window".into())?;
    e.targets = episode_from_trace(clean, node, &neighbors, start, window)
        .context(|| "cutting target window".into())?
        .targets;
    Ok(e)
}

/// `copies` noisy episodes of every clean trace with distinct noise runs
/// from `run0`. A clean spec yields one copy since all copies would match.
fn episodes(
    plan: &ExperimentPlan,
    clean: &[Trace],
    spec: &NoiseSpec,
    run0: u32,
    copies: u32,
) -> Result<Vec<Episode>> {
    let copies = if spec.snr_db.is_some() { copies } else { 1 };
    let n = clean.len() as u32;
    (0..copies)
        .flat_map(|r| {
            clean
                .iter()
                .enumerate()
                .map(move |(k, t)| (run0 + r * n + k as u32, t))
        })
        .map(|(run, t)| noisy_episode(plan, t, spec, run))
        .collect()
}

fn fresh_network(plan: &ExperimentPlan) -> Result<SrmNetwork> {
    let snn = &plan.scenario.snn;
    SrmNetwork::new(
        FEATURES,
        &snn.layer_sizes,
        2 * plan.neighbors().len(),
        snn.kernel,
        plan.scenario.control.dt_ctrl,
        snn.training.seed,
    )
    .context(|| "building network".into())
}

fn fit(plan: &ExperimentPlan, eps: &[Episode]) -> Result<(SrmNetwork, TrainReport)> {
    let mut net = fresh_network(plan)?;
    let report = train(&mut net, eps, &plan.scenario.snn.training).context(|| "training".into())?;
    Ok((net, report))
}

fn load_step_traces(plan: &ExperimentPlan, magnitudes: &[f64]) -> Result<Vec<Trace>> {
    magnitudes
        .par_iter()
        .map(|&m| simulate(&with_load_step(&plan.scenario, m)))
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub snr_db: Option<f64>,
    pub report: TrainReport,
    pub network: SrmNetwork,
    /// Held-out score with inputs at the same SNR as training.
    pub heldout: Score,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub runs: Vec<TrainRun>,
}

impl TrainResult {
    pub fn run(&self, snr_db: Option<f64>) -> Option<&TrainRun> {
        self.runs.iter().find(|r| r.snr_db == snr_db)
    }
}

/// Trains one estimator per SNR on noisy inputs and clean targets and scores
/// each on held-out load steps at the same SNR.
pub fn train_under_noise(plan: &ExperimentPlan) -> Result<TrainResult> {
    let s = &plan.settings;
    let train_clean = load_step_traces(plan, &s.train_magnitudes)?;
    let held_clean = load_step_traces(plan, &s.heldout_magnitudes)?;
    let seed = plan.axes.seeds[0];
    let runs = plan
        .axes
        .snr_db
        .par_iter()
        .map(|&snr| {
            let spec = noise(plan, snr, seed);
            let eps = episodes(plan, &train_clean, &spec, 0, s.train_realisations)?;
            let held = episodes(
                plan,
                &held_clean,
                &spec,
                HELDOUT_RUN,
                s.heldout_realisations,
            )?;
            let (network, report) = fit(plan, &eps)?;
            let heldout = score(&network, &held)?;
            Ok(TrainRun {
                snr_db: snr,
                report,
                network,
                heldout,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainResult { runs })
}

#[derive(Debug, Clone)]
pub struct ExecuteRun {
    pub snr_db: Option<f64>,
    pub heldout: Score,
    /// Gated replay of the first held-out trace at this SNR.
    pub trace: Trace,
    pub events: Vec<EventRecord>,
    pub detection: DetectionReport,
    pub activity: f64,
}

#[derive(Debug, Clone)]
pub struct ExecuteResult {
    pub report: TrainReport,
    pub network: SrmNetwork,
    pub runs: Vec<ExecuteRun>,
}

impl ExecuteResult {
    pub fn run(&self, snr_db: Option<f64>) -> Option<&ExecuteRun> {
        self.runs.iter().find(|r| r.snr_db == snr_db)
    }
}

/// Trains one estimator, then executes it on held-out inputs at every SNR of
/// the axis. Training sees the clean traces plus noisy copies at the lowest
/// SNR of the axis, so the deployed network has met both input regimes.
pub fn execute_under_noise(plan: &ExperimentPlan) -> Result<ExecuteResult> {
    let s = &plan.settings;
    let seed = plan.axes.seeds[0];
    let train_clean = load_step_traces(plan, &s.train_magnitudes)?;
    let held_clean = load_step_traces(plan, &s.heldout_magnitudes)?;
    let mut eps = episodes(plan, &train_clean, &NoiseSpec::clean(), 0, 1)?;
    let worst = plan.axes.snr_db.iter().flatten().copied().reduce(f64::min);
    if worst.is_some() {
        let spec = noise(plan, worst, seed);
        eps.extend(episodes(
            plan,
            &train_clean,
            &spec,
            0,
            s.train_realisations,
        )?);
    }
    let (network, report) = fit(plan, &eps)?;
    let topo = plan.scenario.topology();
    let runs = plan
        .axes
        .snr_db
        .par_iter()
        .map(|&snr| {
            let spec = noise(plan, snr, seed);
            let held = episodes(
                plan,
                &held_clean,
                &spec,
                HELDOUT_RUN,
                s.heldout_realisations,
            )?;
            let heldout = score(&network, &held)?;
            let mut trace = noisy_trace(&held_clean[0], &spec, EXECUTE_RUN)
                .context(|| "noisy replay trace".into())?;
            let mut nets = vec![None; plan.scenario.n()];
            nets[s.estimator_node] = Some(network.clone());
            let mut pipe = EventPipeline::new(&plan.scenario, Some(nets));
            pipe.replay(&mut trace, &topo);
            let detection = event_metrics(
                pipe.events(),
                &truth(plan),
                s.truth_window,
                plan.scenario.control.duration,
            );
            Ok(ExecuteRun {
                snr_db: snr,
                heldout,
                trace,
                activity: pipe.activity_ratio(),
                events: pipe.into_events(),
                detection,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExecuteResult {
        report,
        network,
        runs,
    })
}

// ------------------------------------------------------------------ replay

#[derive(Debug, Clone)]
pub struct ReplayResult {
    pub snr_db: Option<f64>,
    pub report: TrainReport,
    pub network: SrmNetwork,
    /// Thresholds calibrated on the quiescent stretch of the replayed trace.
    pub thresholds: EventThresholds,
    /// Replayed noisy trace with events and held estimates.
    pub trace: Trace,
    pub events: Vec<EventRecord>,
    /// Delay from the first disturbance to the first event at or after it.
    pub first_event_delay: Option<f64>,
    pub detection: DetectionReport,
    /// Ungated tracking score over the training window of the replayed
    /// trace, against the clean reference.
    pub tracking: Score,
    pub activity: f64,
}

/// Calibrates each channel's threshold on the raw residuals of `node`
/// between `quiescent_margin` after the start and the same margin before
/// the first disturbance.
pub fn calibrate(plan: &ExperimentPlan, trace: &Trace, node: usize) -> Result<EventThresholds> {
    let s = &plan.settings;
    let params = plan.scenario.plant.nodes[node].params();
    let raw = residual_series(trace, node, params, false);
    let end_t = plan
        .first_disturbance()
        .unwrap_or(plan.scenario.control.duration);
    let a = tick_of(s.quiescent_margin, trace.dt);
    let b = tick_of(end_t - s.quiescent_margin, trace.dt).min(raw.len());
    let quiet = &raw[a.min(b)..b];
    let pick = |f: fn(&Residuals) -> f64, floor: f64| {
        let q: Vec<f64> = quiet.iter().map(f).collect();
        calibrate_threshold(&q, s.kappa, floor).context(|| "calibrating thresholds".into())
    };
    let floor = s.calibration_floor;
    Ok(EventThresholds {
        sigma_v: pick(|r| r.omega_v, floor.sigma_v)?,
        sigma_i: pick(|r| r.omega_i, floor.sigma_i)?,
        sigma_o: pick(|r| r.omega_o, floor.sigma_o)?,
    })
}

/// Replay of a bundled scenario under sensor noise.
///
/// The estimator trains on independent noise realisations of the same
/// scenario, thresholds are calibrated on the replayed trace's quiescent
/// stretch, and the trace is replayed through the gated pipeline.
pub fn replay(plan: &ExperimentPlan) -> Result<ReplayResult> {
    let s = &plan.settings;
    let snr = plan.axes.snr_db[0];
    let spec = noise(plan, snr, plan.axes.seeds[0]);
    let clean = simulate(&plan.scenario)?;
    let eps = (0..s.realisations)
        .into_par_iter()
        .map(|r| noisy_episode(plan, &clean, &spec, r))
        .collect::<Result<Vec<_>>>()?;
    let (network, report) = fit(plan, &eps)?;

    let node = s.estimator_node;
    let mut trace = noisy_trace(&clean, &spec, s.replay_run).context(|| "replay trace".into())?;
    let thresholds = calibrate(plan, &trace, node)?;
    let tracking = score(
        &network,
        &[noisy_episode(plan, &clean, &spec, s.replay_run)?],
    )?;

    let mut cfg = plan.scenario.clone();
    cfg.snn.thresholds = thresholds;
    let mut nets = vec![None; cfg.n()];
    nets[node] = Some(network.clone());
    let mut pipe = EventPipeline::new(&cfg, Some(nets));
    pipe.replay(&mut trace, &cfg.topology());
    let t_d = plan.first_disturbance().unwrap_or(0.0);
    let first_event_delay = pipe
        .events()
        .iter()
        .filter(|e| e.t >= t_d - 1e-9)
        .map(|e| e.t - t_d)
        .reduce(f64::min);
    let detection = event_metrics(
        pipe.events(),
        &truth(plan),
        s.truth_window,
        cfg.control.duration,
    );
    Ok(ReplayResult {
        snr_db: snr,
        report,
        network,
        thresholds,
        trace,
        activity: pipe.activity_ratio(),
        events: pipe.into_events(),
        first_event_delay,
        detection,
        tracking,
    })
}

// ------------------------------------------------------------- LIF analysis

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainPoint {
    pub omega: f64,
    pub analytic: f64,
    pub simulated: f64,
}

impl GainPoint {
    pub fn relative_error(&self) -> f64 {
        (self.simulated - self.analytic).abs() / self.analytic
    }
}

#[derive(Debug, Clone)]
pub struct LifResult {
    pub gains: Vec<GainPoint>,
    /// `(τ_m, cut-off in Hz)`.
    pub cutoffs: Vec<(f64, f64)>,
    /// `(M, RMS of ensemble mean − reference)`.
    pub ensemble: Vec<(usize, f64)>,
}

/// The slow sinusoidal drive of the ensemble study.
pub fn ensemble_drive() -> Vec<f64> {
    (0..ENSEMBLE_STEPS)
        .map(|n| 1.2 * (1.0 + 0.5 * (n as f64 * 1e-3).sin()))
        .collect()
}

/// Low-pass law of the membrane and the Monte-Carlo convergence of noisy
/// ensembles.
pub fn lif_analysis(plan: &ExperimentPlan) -> Result<LifResult> {
    let k = plan.scenario.snn.kernel;
    let gains = [0.1, 1.0, 10.0]
        .par_iter()
        .map(|&x| {
            let omega = x / k.tau_m;
            GainPoint {
                omega,
                analytic: lif_frequency_response(omega, &k).gain,
                simulated: simulate_sine_gain(omega, &k),
            }
        })
        .collect();
    let cutoffs = CUTOFF_TAUS
        .iter()
        .map(|&tau| {
            let kk = spikegrid_core::snn::KernelParams { tau_m: tau, ..k };
            (tau, lif_frequency_response(0.0, &kk).cutoff_hz())
        })
        .collect();
    let drive = ensemble_drive();
    let seed = plan.axes.seeds[0];
    let ensemble = ENSEMBLE_SIZES
        .par_iter()
        .map(|&m| {
            noisy_lif_ensemble(&k, &drive, ENSEMBLE_DT, ENSEMBLE_NOISE, m, seed)
                .map(|st| (m, st.rms_error))
                .context(|| format!("ensemble of {m}"))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LifResult {
        gains,
        cutoffs,
        ensemble,
    })
}

// --------------------------------------------------------------- artifacts

fn train_report_json(r: &TrainReport, heldout: &[(Option<f64>, Score)]) -> Result<Vec<u8>> {
    let doc = serde_json::json!({
        "epochs": r.epochs,
        "losses": r.losses,
        "best_epoch": r.best_epoch,
        "final_nmse": r.final_nmse,
        "rates_hz": r.rates,
        "heldout": heldout.iter().map(|(snr, s)| serde_json::json!({
            "snr_db": snr,
            "nmse": s.nmse,
            "nmse_v": s.nmse_v,
            "nmse_i": s.nmse_i,
        })).collect::<Vec<_>>(),
    });
    Ok(serde_json::to_vec_pretty(&doc)?)
}

fn ratio_checks(checks: &mut Vec<Check>, scores: &[(Option<f64>, Score)]) {
    let Some(clean) = scores.iter().find(|(s, _)| s.is_none()).map(|x| x.1) else {
        return;
    };
    checks.push(Check::new(
        "clean held-out NMSE",
        clean.nmse <= CLEAN_NMSE_LIMIT,
        format!("{:.4} <= {CLEAN_NMSE_LIMIT}", clean.nmse),
    ));
    for (snr, s) in scores.iter().filter(|(s, _)| s.is_some()) {
        let ratio = s.nmse / clean.nmse;
        checks.push(Check::new(
            &format!("NMSE degradation at {}", snr_label(*snr)),
            ratio < NOISE_RATIO_LIMIT,
            format!(
                "{:.4} / {:.4} = {ratio:.2} < {NOISE_RATIO_LIMIT}",
                s.nmse, clean.nmse
            ),
        ));
    }
}

/// Runs the plan's experiment and collects its outputs.
pub fn artifacts(plan: &ExperimentPlan) -> Result<Artifacts> {
    let mut a = Artifacts::default();
    let th = thresholds_of(&plan.scenario.snn.thresholds);
    match plan.kind {
        ExperimentKind::Baseline => {
            let r = baseline(plan)?;
            a.files.push(("trace.csv".into(), trace_csv(&r.trace)?));
            a.files.push(("events.csv".into(), events_csv(&r.events)?));
            a.checks.push(Check::new(
                "power sharing",
                r.sharing_error < SHARING_TOLERANCE,
                format!(
                    "max |P_j - P_k| = {:.4}% of rated from t = {} s",
                    100.0 * r.sharing_error,
                    r.judged_from
                ),
            ));
            a.checks.push(Check::new(
                "voltage restoration",
                r.voltage_error < VOLTAGE_TOLERANCE,
                format!(
                    "max |mean(v_bar) - V_ref| = {:.4}% from t = {} s",
                    100.0 * r.voltage_error,
                    r.judged_from
                ),
            ));
        }
        ExperimentKind::EventCaptureSweep => {
            let r = capture_sweep(plan)?;
            a.files.push(("trace.csv".into(), trace_csv(&r.clean)?));
            for c in &r.cells {
                if let Some(first) = c.seeds.first() {
                    let name = format!(
                        "events/{}_sigma_i{}_seed{}.csv",
                        snr_label(c.snr_db),
                        c.thresholds.sigma_i,
                        first.seed
                    );
                    a.files.push((name, events_csv(&first.events)?));
                }
                a.rows.push(c.row());
            }
            if let Some((hits, total)) = r.pattern_count() {
                a.checks.push(Check::new(
                    "capture pattern",
                    hits as f64 >= PATTERN_FRACTION * total as f64,
                    format!("{hits}/{total} seeds"),
                ));
            }
            a.failures = r
                .failures
                .iter()
                .map(|(snr, seed, e)| format!("{} seed {seed}: {e}", snr_label(*snr)))
                .collect();
        }
        ExperimentKind::TrainUnderNoise => {
            let r = train_under_noise(plan)?;
            let scores: Vec<_> = r.runs.iter().map(|x| (x.snr_db, x.heldout)).collect();
            for run in &r.runs {
                let tag = snr_label(run.snr_db);
                a.files
                    .push((format!("model_{tag}.json"), model_json(&run.network)?));
                a.files.push((
                    format!("train_{tag}.json"),
                    train_report_json(&run.report, &[(run.snr_db, run.heldout)])?,
                ));
                a.rows.push(SweepRow {
                    snr_db: run.snr_db,
                    thresholds: th,
                    nmse_v: Some(run.heldout.nmse_v),
                    nmse_i: Some(run.heldout.nmse_i),
                    ..Default::default()
                });
            }
            ratio_checks(&mut a.checks, &scores);
        }
        ExperimentKind::ExecuteUnderNoise => {
            let r = execute_under_noise(plan)?;
            let scores: Vec<_> = r.runs.iter().map(|x| (x.snr_db, x.heldout)).collect();
            a.files.push(("model.json".into(), model_json(&r.network)?));
            a.files
                .push(("train.json".into(), train_report_json(&r.report, &scores)?));
            for run in &r.runs {
                let tag = snr_label(run.snr_db);
                a.files
                    .push((format!("trace_{tag}.csv"), trace_csv(&run.trace)?));
                a.files
                    .push((format!("events_{tag}.csv"), events_csv(&run.events)?));
                a.rows.push(SweepRow {
                    snr_db: run.snr_db,
                    thresholds: th,
                    precision: Some(run.detection.precision),
                    recall: Some(run.detection.recall),
                    latency_ms: run.detection.latency.map(|l| 1e3 * l),
                    false_per_s: Some(run.detection.false_per_s),
                    nmse_v: Some(run.heldout.nmse_v),
                    nmse_i: Some(run.heldout.nmse_i),
                    activity_ratio: Some(run.activity),
                });
            }
            ratio_checks(&mut a.checks, &scores);
        }
        ExperimentKind::OutageReplay => {
            let r = replay(plan)?;
            a.files.push(("trace.csv".into(), trace_csv(&r.trace)?));
            a.files.push(("events.csv".into(), events_csv(&r.events)?));
            a.files.push(("model.json".into(), model_json(&r.network)?));
            a.files.push((
                "train.json".into(),
                train_report_json(&r.report, &[(r.snr_db, r.tracking)])?,
            ));
            a.rows.push(SweepRow {
                snr_db: r.snr_db,
                thresholds: thresholds_of(&r.thresholds),
                precision: Some(r.detection.precision),
                recall: Some(r.detection.recall),
                latency_ms: r.detection.latency.map(|l| 1e3 * l),
                false_per_s: Some(r.detection.false_per_s),
                nmse_v: Some(r.tracking.nmse_v),
                nmse_i: Some(r.tracking.nmse_i),
                activity_ratio: Some(r.activity),
            });
            let w = plan.settings.truth_window;
            a.checks.push(Check::new(
                "event after transient",
                r.first_event_delay.is_some_and(|d| d <= w + 1e-9),
                match r.first_event_delay {
                    Some(d) => format!(
                        "first event {:.1} ms after the disturbance, window {} ms",
                        1e3 * d,
                        1e3 * w
                    ),
                    None => "no event after the disturbance".into(),
                },
            ));
            a.checks.push(Check::new(
                "neighbour current tracking",
                r.tracking.nmse_i <= REPLAY_NMSE_LIMIT,
                format!("NMSE {:.4} <= {REPLAY_NMSE_LIMIT}", r.tracking.nmse_i),
            ));
        }
        ExperimentKind::LifAnalysis => {
            let r = lif_analysis(plan)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["omega", "analytic_gain", "simulated_gain", "relative_error"])?;
            for g in &r.gains {
                w.write_record(
                    [g.omega, g.analytic, g.simulated, g.relative_error()]
                        .map(crate::formats::fmt_f64),
                )?;
            }
            a.files.push(("lif_gain.csv".into(), into_bytes(w)?));
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["tau_m", "cutoff_hz"])?;
            for &(tau, hz) in &r.cutoffs {
                w.write_record([tau, hz].map(crate::formats::fmt_f64))?;
            }
            a.files.push(("lif_cutoff.csv".into(), into_bytes(w)?));
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["members", "rms_error"])?;
            for &(m, rms) in &r.ensemble {
                w.write_record([m.to_string(), crate::formats::fmt_f64(rms)])?;
            }
            a.files.push(("ensemble.csv".into(), into_bytes(w)?));
            let worst = r
                .gains
                .iter()
                .map(GainPoint::relative_error)
                .fold(0.0, f64::max);
            a.checks.push(Check::new(
                "low-pass gain",
                worst <= GAIN_TOLERANCE,
                format!("worst relative error {worst:.4}"),
            ));
            let band = r
                .cutoffs
                .iter()
                .all(|&(_, hz)| (CUTOFF_BAND.0..=CUTOFF_BAND.1).contains(&hz));
            a.checks
                .push(Check::new("cut-off band", band, format!("{:?}", r.cutoffs)));
            let ratios: Vec<f64> = r.ensemble.windows(2).map(|p| p[0].1 / p[1].1).collect();
            a.checks.push(Check::new(
                "ensemble convergence",
                ratios
                    .iter()
                    .all(|x| (ENSEMBLE_RATIO.0..=ENSEMBLE_RATIO.1).contains(x)),
                format!("RMS ratios {ratios:.3?}"),
            ));
        }
    }
    if !plan.settings.acceptance {
        a.checks.clear();
    }
    if !a.rows.is_empty() {
        a.files.push(("sweep.csv".into(), sweep_csv(&a.rows)?));
    }
    Ok(a)
}

fn into_bytes(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner()
        .map_err(|e| CliError::Format(format!("csv flush: {}", e.error())))
}
