//! On-disk formats: trace and event CSVs, the sweep grid, and model files.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use spikegrid_core::events::{Channel, EventRecord};
use spikegrid_core::grid::{Trace, TraceRow};
use spikegrid_core::snn::SrmNetwork;

use crate::error::{CliError, Result};

pub const TRACE_HEADER: [&str; 12] = [
    "t", "node", "v", "i", "p", "v_bar", "v_star", "est_v_j", "est_i_j", "event_V", "event_I",
    "event_O",
];

pub const EVENT_HEADER: [&str; 5] = ["t", "node", "channel", "magnitude", "threshold"];

pub const SWEEP_HEADER: [&str; 11] = [
    "snr_db",
    "threshold_V",
    "threshold_I",
    "threshold_O",
    "precision",
    "recall",
    "latency_ms",
    "false_per_s",
    "nmse_v",
    "nmse_i",
    "activity_ratio",
];

/// Writes through a sibling temporary file so readers never see a partial
/// file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = Path::new(&tmp);
    let mut f = fs::File::create(tmp).map_err(|e| CliError::io(tmp, e))?;
    f.write_all(bytes).map_err(|e| CliError::io(tmp, e))?;
    f.sync_all().map_err(|e| CliError::io(tmp, e))?;
    drop(f);
    fs::rename(tmp, path).map_err(|e| CliError::io(path, e))
}

/// Shortest round-trip decimal; non-finite values become empty fields,
/// except `+inf`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else if x == f64::INFINITY {
        "inf".into()
    } else {
        String::new()
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, fmt_f64)
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| CliError::Format(format!("not a number: `{s}`")))
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn trace_csv(trace: &Trace) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_HEADER)?;
    for r in &trace.rows {
        w.write_record([
            fmt_f64(r.t),
            r.node.to_string(),
            fmt_f64(r.v),
            fmt_f64(r.i),
            fmt_f64(r.p),
            fmt_f64(r.v_bar),
            fmt_f64(r.v_star),
            fmt_f64(r.est_v),
            fmt_f64(r.est_i),
            flag(r.event_v).into(),
            flag(r.event_i).into(),
            flag(r.event_o).into(),
        ])?;
    }
    into_bytes(w)
}

fn into_bytes(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner()
        .map_err(|e| CliError::Format(format!("csv flush: {}", e.error())))
}

/// Reads a trace CSV back. Only the columns of the file format are
/// restored; every other row field keeps its default.
pub fn read_trace_csv(bytes: &[u8]) -> Result<Trace> {
    let mut r = csv::Reader::from_reader(bytes);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != TRACE_HEADER {
        return Err(CliError::Format(format!(
            "unexpected trace header {header:?}"
        )));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |k: usize| parse_opt(&rec[k]).map(|x| x.unwrap_or(f64::NAN));
        let node = rec[1]
            .parse()
            .map_err(|_| CliError::Format(format!("bad node id `{}`", &rec[1])))?;
        rows.push(TraceRow {
            t: num(0)?,
            node,
            v: num(2)?,
            i: num(3)?,
            p: num(4)?,
            v_bar: num(5)?,
            v_star: num(6)?,
            est_v: num(7)?,
            est_i: num(8)?,
            event_v: &rec[9] == "1",
            event_i: &rec[10] == "1",
            event_o: &rec[11] == "1",
            online: true,
            ..Default::default()
        });
    }
    let n_nodes = rows.iter().map(|r| r.node + 1).max().unwrap_or(0);
    if n_nodes == 0 || rows.len() % n_nodes != 0 {
        return Err(CliError::Format(
            "trace rows do not tile the node set".into(),
        ));
    }
    let dt = if rows.len() > n_nodes {
        rows[n_nodes].t - rows[0].t
    } else {
        0.0
    };
    Ok(Trace { dt, n_nodes, rows })
}

pub fn events_csv(events: &[EventRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(EVENT_HEADER)?;
    for e in events {
        w.write_record([
            fmt_f64(e.t),
            e.node.to_string(),
            e.channel.as_str().into(),
            fmt_f64(e.magnitude),
            fmt_f64(e.threshold),
        ])?;
    }
    into_bytes(w)
}

pub fn read_events_csv(bytes: &[u8]) -> Result<Vec<EventRecord>> {
    let mut r = csv::Reader::from_reader(bytes);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |k: usize| parse_opt(&rec[k]).map(|x| x.unwrap_or(f64::NAN));
        let channel = Channel::ALL
            .into_iter()
            .find(|c| c.as_str() == &rec[2])
            .ok_or_else(|| CliError::Format(format!("unknown channel `{}`", &rec[2])))?;
        out.push(EventRecord {
            t: num(0)?,
            node: rec[1]
                .parse()
                .map_err(|_| CliError::Format(format!("bad node id `{}`", &rec[1])))?,
            channel,
            magnitude: num(3)?,
            threshold: num(4)?,
        });
    }
    Ok(out)
}

/// One cell of the sweep grid. Metrics that an experiment does not produce
/// stay `None` and are written as empty fields.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepRow {
    /// `None` is the clean run.
    pub snr_db: Option<f64>,
    pub thresholds: [f64; 3],
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub latency_ms: Option<f64>,
    pub false_per_s: Option<f64>,
    pub nmse_v: Option<f64>,
    pub nmse_i: Option<f64>,
    pub activity_ratio: Option<f64>,
}

impl SweepRow {
    pub fn metrics(&self) -> [Option<f64>; 7] {
        [
            self.precision,
            self.recall,
            self.latency_ms,
            self.false_per_s,
            self.nmse_v,
            self.nmse_i,
            self.activity_ratio,
        ]
    }

    pub fn set_metrics(&mut self, m: [Option<f64>; 7]) {
        [
            self.precision,
            self.recall,
            self.latency_ms,
            self.false_per_s,
            self.nmse_v,
            self.nmse_i,
            self.activity_ratio,
        ] = m;
    }

    pub(crate) fn record(&self) -> Vec<String> {
        let mut rec = vec![
            fmt_f64(self.snr_db.unwrap_or(f64::INFINITY)),
            fmt_f64(self.thresholds[0]),
            fmt_f64(self.thresholds[1]),
            fmt_f64(self.thresholds[2]),
        ];
        rec.extend(self.metrics().into_iter().map(fmt_opt));
        rec
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    into_bytes(w)
}

pub fn read_sweep_csv(bytes: &[u8]) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_reader(bytes);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != SWEEP_HEADER {
        return Err(CliError::Format(format!(
            "unexpected sweep header {header:?}"
        )));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f: Vec<Option<f64>> = rec.iter().map(parse_opt).collect::<Result<_>>()?;
        let need = |k: usize| {
            f[k].ok_or_else(|| CliError::Format(format!("missing `{}`", SWEEP_HEADER[k])))
        };
        let snr = need(0)?;
        let mut row = SweepRow {
            snr_db: snr.is_finite().then_some(snr),
            thresholds: [need(1)?, need(2)?, need(3)?],
            ..Default::default()
        };
        row.set_metrics([f[4], f[5], f[6], f[7], f[8], f[9], f[10]]);
        out.push(row);
    }
    Ok(out)
}

pub const MODEL_FORMAT: &str = "spikegrid-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    network: SrmNetwork,
}

/// Versioned JSON document of a trained network; floats round-trip exactly.
pub fn model_json(net: &SrmNetwork) -> Result<Vec<u8>> {
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        network: net.clone(),
    };
    Ok(serde_json::to_vec(&file)?)
}

pub fn read_model_json(bytes: &[u8]) -> Result<SrmNetwork> {
    let file: ModelFile = serde_json::from_slice(bytes)?;
    if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
        return Err(CliError::Format(format!(
            "unsupported model document {} v{}",
            file.format, file.version
        )));
    }
    file.network.check().map_err(|source| CliError::Core {
        context: "loading model".into(),
        source,
    })?;
    Ok(file.network)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use spikegrid_core::snn::KernelParams;

    fn tiny_trace() -> Trace {
        let rows = (0..6)
            .map(|k| TraceRow {
                t: (k / 2) as f64 * 1e-4,
                node: k % 2,
                v: 48.0 + 0.1 * k as f64,
                i: 9.6 - 1.0 / 3.0 * k as f64,
                p: 460.0,
                v_bar: 48.0,
                v_star: 48.01,
                est_v: if k < 2 { f64::NAN } else { 47.9 },
                est_i: if k < 2 { f64::NAN } else { 14.1 },
                event_i: k == 3,
                online: true,
                ..Default::default()
            })
            .collect();
        Trace {
            dt: 1e-4,
            n_nodes: 2,
            rows,
        }
    }

    #[test]
    fn trace_csv_round_trips_file_columns() {
        let t = tiny_trace();
        let bytes = trace_csv(&t).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(
            text.starts_with("t,node,v,i,p,v_bar,v_star,est_v_j,est_i_j,event_V,event_I,event_O\n")
        );
        let back = read_trace_csv(&bytes).unwrap();
        assert_eq!(back.n_nodes, 2);
        assert_eq!(back.dt, 1e-4);
        for (a, b) in t.rows.iter().zip(&back.rows) {
            assert_eq!(a.v.to_bits(), b.v.to_bits());
            assert_eq!(a.i.to_bits(), b.i.to_bits());
            assert_eq!(a.est_v.is_nan(), b.est_v.is_nan());
            assert_eq!(a.event_i, b.event_i);
        }
    }

    #[test]
    fn events_round_trip() {
        let ev = vec![EventRecord {
            t: 0.5002,
            node: 1,
            channel: Channel::I,
            magnitude: -0.731,
            threshold: 0.4,
        }];
        let bytes = events_csv(&ev).unwrap();
        assert!(String::from_utf8_lossy(&bytes).starts_with("t,node,channel,magnitude,threshold\n"));
        assert_eq!(read_events_csv(&bytes).unwrap(), ev);
    }

    #[test]
    fn model_round_trips_bit_exactly() {
        let mut net = SrmNetwork::new(4, &[12, 8], 2, KernelParams::default(), 1e-4, 9).unwrap();
        net.readout
            .w
            .iter_mut()
            .enumerate()
            .for_each(|(k, w)| *w = (k as f64).sin() / 3.0);
        net.output_scaling.offset = vec![48.123456789, 1e-300];
        let bytes = model_json(&net).unwrap();
        let back = read_model_json(&bytes).unwrap();
        assert_eq!(back, net);
        let bits = |n: &SrmNetwork| -> Vec<u64> {
            n.layers
                .iter()
                .chain(std::iter::once(&n.readout))
                .flat_map(|l| l.w.iter().chain(&l.bias).map(|x| x.to_bits()))
                .collect()
        };
        assert_eq!(bits(&back), bits(&net));
    }

    #[test]
    fn foreign_model_documents_rejected() {
        let net = SrmNetwork::new(4, &[3], 2, KernelParams::default(), 1e-4, 1).unwrap();
        let text = String::from_utf8(model_json(&net).unwrap()).unwrap();
        let bumped = text.replace("\"version\":1", "\"version\":2");
        assert!(read_model_json(bumped.as_bytes()).is_err());
    }

    #[test]
    fn atomic_write_leaves_no_partial_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b.csv");
        write_atomic(&p, b"x,y\n").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"x,y\n");
        assert!(!dir.path().join("a/b.csv.partial").exists());
    }

    proptest! {
        #[test]
        fn sweep_rows_round_trip(
            snr in proptest::option::of(-10.0f64..60.0),
            th in proptest::array::uniform3(1e-4f64..1.0),
            m in proptest::array::uniform7(proptest::option::of(0.0f64..100.0)),
        ) {
            let mut row = SweepRow { snr_db: snr, thresholds: th, ..Default::default() };
            row.set_metrics(m);
            let back = read_sweep_csv(&sweep_csv(&[row.clone()]).unwrap()).unwrap();
            prop_assert_eq!(back, vec![row]);
        }
    }
}
