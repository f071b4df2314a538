//! Run orchestration: worker pool, manifest and artifact persistence.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentPlan;
use crate::error::{CliError, Result};
use crate::experiments::{artifacts, Check};
use crate::formats::write_atomic;

/// Provenance of one run, written before any result file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub kind: String,
    /// SHA-256 of the validated plan.
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub code_version: String,
    /// Result files, relative to the run directory.
    pub outputs: Vec<String>,
    pub wall_clock: WallClock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallClock {
    pub started_unix_s: f64,
    pub compute_s: f64,
}

/// Completion record written after the results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub checks: Vec<CheckRecord>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl From<&Check> for CheckRecord {
    fn from(c: &Check) -> Self {
        Self {
            name: c.name.clone(),
            passed: c.passed,
            detail: c.detail.clone(),
        }
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub checks: Vec<Check>,
    pub failures: Vec<String>,
}

impl RunOutcome {
    pub fn failed_checks(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }
}

pub fn config_hash(plan: &ExperimentPlan) -> Result<String> {
    let bytes = serde_json::to_vec(plan)?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// Runs `plan` on a pool of `jobs` workers (0 picks the core count) and
/// persists everything under `out`.
pub fn run_experiment(plan: &ExperimentPlan, out: &Path, jobs: usize) -> Result<RunOutcome> {
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64());
    let clock = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Format(format!("worker pool: {e}")))?;
    let art = pool.install(|| artifacts(plan))?;
    let manifest = RunManifest {
        kind: plan.kind.as_str().into(),
        config_hash: config_hash(plan)?,
        seeds: plan.axes.seeds.clone(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        outputs: art.files.iter().map(|(n, _)| n.clone()).collect(),
        wall_clock: WallClock {
            started_unix_s: started,
            compute_s: clock.elapsed().as_secs_f64(),
        },
    };
    write_atomic(
        &out.join("manifest.json"),
        &serde_json::to_vec_pretty(&manifest)?,
    )?;
    write_atomic(&out.join("plan.json"), plan.to_document()?.as_bytes())?;
    for (name, bytes) in &art.files {
        write_atomic(&out.join(name), bytes)?;
    }
    let report = RunReport {
        checks: art.checks.iter().map(CheckRecord::from).collect(),
        failures: art.failures.clone(),
    };
    write_atomic(
        &out.join("report.json"),
        &serde_json::to_vec_pretty(&report)?,
    )?;
    Ok(RunOutcome {
        dir: out.to_path_buf(),
        manifest,
        checks: art.checks,
        failures: art.failures,
    })
}
