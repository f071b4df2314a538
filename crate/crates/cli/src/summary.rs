//! Aggregation of sweep grids found under an artifact directory.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};
use crate::formats::{fmt_f64, read_sweep_csv, write_atomic, SweepRow, SWEEP_HEADER};
use crate::runner::RunReport;

/// One grid cell pooled over every run that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub cell: SweepRow,
    pub runs: usize,
    pub flags: Vec<&'static str>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    pub warnings: Vec<String>,
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| CliError::io(dir, e)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            walk(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

fn flags(c: &SweepRow) -> Vec<&'static str> {
    let mut f = Vec::new();
    if c.precision.is_some_and(|p| p < 1.0) {
        f.push("false-events");
    }
    if c.recall.is_some_and(|r| r < 1.0) {
        f.push("missed-events");
    }
    let worst = c
        .nmse_v
        .into_iter()
        .chain(c.nmse_i)
        .fold(f64::NAN, f64::max);
    if worst > crate::experiments::REPLAY_NMSE_LIMIT {
        f.push("nmse");
    }
    if c.activity_ratio.is_some_and(|a| a > 0.5) {
        f.push("over-execution");
    }
    f
}

fn key(r: &SweepRow) -> (f64, [f64; 3]) {
    (r.snr_db.unwrap_or(f64::INFINITY), r.thresholds)
}

/// Pools every `sweep.csv` under `dir` by `(SNR, thresholds)` cell.
///
/// Unreadable grids and runs without a completion report become warnings.
/// Cells are ordered from clean to noisiest, then by threshold.
pub fn summarize(dir: &Path) -> Result<Summary> {
    let mut files = Vec::new();
    walk(dir, &mut files)?;
    let mut warnings = Vec::new();
    let mut cells: Vec<(SweepRow, Vec<SweepRow>)> = Vec::new();
    for f in &files {
        let name = f.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let rel = f.strip_prefix(dir).unwrap_or(f).display().to_string();
        match name {
            "sweep.csv" => {
                let rows = fs::read(f)
                    .map_err(|e| CliError::io(f, e))
                    .and_then(|b| read_sweep_csv(&b));
                match rows {
                    Ok(rows) => {
                        for r in rows {
                            match cells.iter_mut().find(|(k, _)| key(k) == key(&r)) {
                                Some((_, v)) => v.push(r),
                                None => cells.push((r.clone(), vec![r])),
                            }
                        }
                    }
                    Err(e) => warnings.push(format!("{rel}: unreadable ({e})")),
                }
            }
            "manifest.json" => {
                let report = f.with_file_name("report.json");
                match fs::read(&report) {
                    Err(_) => warnings.push(format!("{rel}: run has no completion report")),
                    Ok(b) => match serde_json::from_slice::<RunReport>(&b) {
                        Ok(r) => warnings
                            .extend(r.failures.iter().map(|e| format!("{rel}: failed cell {e}"))),
                        Err(e) => warnings.push(format!("{rel}: unreadable report ({e})")),
                    },
                }
            }
            _ => {}
        }
    }
    if cells.is_empty() {
        warnings.push("no sweep results in this directory".into());
    }
    cells.sort_by(|a, b| {
        let (ka, kb) = (key(&a.0), key(&b.0));
        kb.0.total_cmp(&ka.0).then_with(|| {
            ka.1.iter()
                .zip(&kb.1)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let rows = cells
        .into_iter()
        .map(|(first, runs)| {
            let mut cell = first;
            let mut m = [None; 7];
            for (k, slot) in m.iter_mut().enumerate() {
                let v: Vec<f64> = runs.iter().filter_map(|r| r.metrics()[k]).collect();
                *slot = (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
            }
            cell.set_metrics(m);
            SummaryRow {
                flags: flags(&cell),
                runs: runs.len(),
                cell,
            }
        })
        .collect();
    Ok(Summary { rows, warnings })
}

impl Summary {
    pub fn csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<&str> = SWEEP_HEADER.to_vec();
        header.extend(["runs", "flags"]);
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = r.cell.record();
            rec.push(r.runs.to_string());
            rec.push(r.flags.join(";"));
            w.write_record(&rec)?;
        }
        w.into_inner()
            .map_err(|e| CliError::Format(format!("csv flush: {}", e.error())))
    }

    /// Fixed-width plain-text table followed by any warnings.
    pub fn table(&self) -> String {
        let cols = [
            "snr_db", "sigma_V", "sigma_I", "sigma_O", "prec", "recall", "lat_ms", "false/s",
            "nmse_v", "nmse_i", "active", "runs", "flags",
        ];
        let mut lines = vec![cols
            .iter()
            .map(|c| format!("{c:>9}"))
            .collect::<Vec<_>>()
            .join(" ")];
        for r in &self.rows {
            let c = &r.cell;
            let mut cells = vec![c.snr_db.map_or_else(|| "clean".into(), fmt_f64)];
            cells.extend(c.thresholds.iter().map(|x| format!("{x:.4}")));
            cells.extend(
                c.metrics()
                    .iter()
                    .map(|m| m.map_or_else(|| "-".into(), |x| format!("{x:.4}"))),
            );
            cells.push(r.runs.to_string());
            let mut line = cells
                .iter()
                .map(|s| format!("{s:>9}"))
                .collect::<Vec<_>>()
                .join(" ");
            if !r.flags.is_empty() {
                line.push(' ');
                line.push_str(&r.flags.join(","));
            }
            lines.push(line);
        }
        for w in &self.warnings {
            lines.push(format!("warning: {w}"));
        }
        lines.join("\n") + "\n"
    }

    /// Writes `summary.csv` and `summary.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join("summary.csv"), &self.csv()?)?;
        write_atomic(&dir.join("summary.txt"), self.table().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::sweep_csv;

    fn row(snr: Option<f64>, sigma_i: f64, precision: f64) -> SweepRow {
        SweepRow {
            snr_db: snr,
            thresholds: [0.01, sigma_i, 0.0039],
            precision: Some(precision),
            recall: Some(1.0),
            ..Default::default()
        }
    }

    #[test]
    fn empty_directory_warns() {
        let dir = tempfile::tempdir().unwrap();
        let s = summarize(dir.path()).unwrap();
        assert!(s.rows.is_empty());
        assert_eq!(s.warnings.len(), 1);
        assert!(s.table().contains("warning: no sweep results"));
    }

    #[test]
    fn cells_pool_across_runs_and_sort() {
        let dir = tempfile::tempdir().unwrap();
        let a = vec![row(Some(20.0), 0.1, 0.5), row(None, 0.1, 1.0)];
        let b = vec![row(Some(20.0), 0.1, 0.7), row(Some(20.0), 0.4, 1.0)];
        write_atomic(&dir.path().join("a/sweep.csv"), &sweep_csv(&a).unwrap()).unwrap();
        write_atomic(&dir.path().join("b/sweep.csv"), &sweep_csv(&b).unwrap()).unwrap();
        let s = summarize(dir.path()).unwrap();
        assert!(s.warnings.is_empty());
        let keys: Vec<_> = s
            .rows
            .iter()
            .map(|r| (r.cell.snr_db, r.cell.thresholds[1]))
            .collect();
        assert_eq!(
            keys,
            vec![(None, 0.1), (Some(20.0), 0.1), (Some(20.0), 0.4)]
        );
        let noisy = &s.rows[1];
        assert_eq!(noisy.runs, 2);
        assert!((noisy.cell.precision.unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(noisy.flags, vec!["false-events"]);
        assert!(s.rows[0].flags.is_empty());
    }

    #[test]
    fn partial_runs_are_reported_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        write_atomic(&dir.path().join("x/manifest.json"), b"{}").unwrap();
        write_atomic(&dir.path().join("y/sweep.csv"), b"garbage\n1,2\n").unwrap();
        let s = summarize(dir.path()).unwrap();
        assert_eq!(s.warnings.len(), 3, "{:?}", s.warnings);
        assert!(s.warnings[0].contains("no completion report"));
        assert!(s.warnings[1].contains("unreadable"));
    }

    #[test]
    fn summary_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let a = vec![row(Some(30.0), 0.145, 0.9), row(None, 0.1, 1.0)];
        write_atomic(&dir.path().join("sweep.csv"), &sweep_csv(&a).unwrap()).unwrap();
        let s1 = summarize(dir.path()).unwrap();
        s1.write(dir.path()).unwrap();
        let first = (
            fs::read(dir.path().join("summary.csv")).unwrap(),
            s1.table(),
        );
        let s2 = summarize(dir.path()).unwrap();
        assert_eq!(first, (s2.csv().unwrap(), s2.table()));
    }
}
