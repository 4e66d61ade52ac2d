//! Deterministic CSV and JSON emission.
//!
//! Floats are written as `{:.16e}` (17 significant digits), which round-trips
//! every `f64` exactly and does not depend on locale or platform.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::analysis::{EnsembleStats, Metric, TrajectoryRecord};
use crate::error::{QestError, Result};
use crate::scenario::ScenarioSpec;

pub const STATS_FILE: &str = "stats.csv";
pub const REPORT_FILE: &str = "report.json";
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.json";

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn trajectory_header(n_channels: usize) -> String {
    let mut h = String::from("t,fidelity,purity_true,purity_est,hs_distance");
    for k in 0..n_channels {
        let _ = write!(h, ",Q_{k}");
    }
    h
}

pub fn trajectory_csv(rec: &TrajectoryRecord) -> String {
    let mut out = trajectory_header(rec.n_channels());
    out.push('\n');
    for i in 0..rec.len() {
        let mut row = vec![
            fmt_f64(rec.times[i]),
            fmt_f64(rec.fidelity[i]),
            fmt_f64(rec.purity_true[i]),
            fmt_f64(rec.purity_est[i]),
            fmt_f64(rec.hs_distance[i]),
        ];
        row.extend(rec.q_int.iter().map(|q| fmt_f64(q[i])));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn stats_header() -> String {
    let mut h = String::from("t");
    for m in Metric::ALL {
        let _ = write!(h, ",{0}_mean,{0}_stderr", m.name());
    }
    h
}

pub fn stats_csv(stats: Option<&EnsembleStats>) -> String {
    let mut out = stats_header();
    out.push('\n');
    if let Some(s) = stats {
        for i in 0..s.times.len() {
            let mut row = vec![fmt_f64(s.times[i])];
            for m in Metric::ALL {
                let series = s.series(m);
                row.push(fmt_f64(series.mean[i]));
                row.push(fmt_f64(series.stderr[i]));
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
    }
    out
}

/// Aggregates the complete (non-truncated) records, if at least two exist.
pub fn aggregate(records: &[TrajectoryRecord]) -> Option<EnsembleStats> {
    let complete: Vec<TrajectoryRecord> = records.iter().filter(|r| !r.truncated).cloned().collect();
    EnsembleStats::from_records(&complete).ok()
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf> {
    fs::write(&path, contents).map_err(|e| QestError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

pub fn trajectory_file_name(stream_id: u64) -> String {
    format!("traj_{stream_id}.csv")
}

/// Writes `traj_<id>.csv` per record, `stats.csv`, and `report.json` when a
/// report is given. Returns the written paths in write order.
pub fn emit_results(
    records: &[TrajectoryRecord],
    stats: Option<&EnsembleStats>,
    report: Option<&Value>,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| QestError::Io(format!("{}: {e}", out_dir.display())))?;
    let mut paths = Vec::with_capacity(records.len() + 2);
    for rec in records {
        paths.push(write(out_dir.join(trajectory_file_name(rec.stream_id)), &trajectory_csv(rec))?);
    }
    paths.push(write(out_dir.join(STATS_FILE), &stats_csv(stats))?);
    if let Some(r) = report {
        paths.push(write(out_dir.join(REPORT_FILE), &to_pretty_json(r))?);
    }
    Ok(paths)
}

pub fn to_pretty_json(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}

pub fn write_resolved_config(spec: &ScenarioSpec, out_dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(out_dir).map_err(|e| QestError::Io(format!("{}: {e}", out_dir.display())))?;
    write(out_dir.join(RESOLVED_CONFIG_FILE), &to_pretty_json(&spec.to_json()))
}

/// Parses a CSV written by this module into its header and numeric rows.
pub fn read_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| QestError::Io("empty CSV".into()))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let row: std::result::Result<Vec<f64>, _> = line.split(',').map(str::parse::<f64>).collect();
        let row = row.map_err(|e| QestError::Io(format!("CSV line {}: {e}", n + 2)))?;
        if row.len() != header.len() {
            return Err(QestError::Io(format!("CSV line {}: {} fields, header has {}", n + 2, row.len(), header.len())));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::campaign::simulate;
    use crate::linalg::state_metrics;
    use crate::noise::NoiseStream;
    use crate::scenario::preset;

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 1e300, 0.0, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn zero_trajectories_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_results(&[], aggregate(&[]).as_ref(), None, dir.path()).unwrap();
        assert_eq!(paths.len(), 1);
        let text = fs::read_to_string(&paths[0]).unwrap();
        assert_eq!(text, format!("{}\n", stats_header()));
    }

    #[test]
    fn csv_schema_and_round_trip() {
        let mut spec = preset("two_channel").unwrap();
        spec.horizon = 0.2;
        spec.n_trajectories = 3;
        let recs = simulate(&spec).unwrap();
        let stats = aggregate(&recs);
        let dir = tempfile::tempdir().unwrap();
        emit_results(&recs, stats.as_ref(), None, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("traj_1.csv")).unwrap();
        let (header, rows) = read_csv(&text).unwrap();
        assert_eq!(header.len(), 5 + spec.channels.len());
        assert_eq!(header[5], "Q_0");
        assert_eq!(rows.len(), recs[1].len());

        // fidelity at t = 0 from the initial states of stream 1
        let mut noise = NoiseStream::new(spec.seed, 1);
        let init = spec.initial_state(&mut noise).unwrap();
        let m = state_metrics(&init.rho, &init.rho_e).unwrap();
        assert_eq!(rows[0][0], 0.0);
        assert_eq!(rows[0][1], m.fidelity);
        assert_eq!(rows[0][2], m.purity_true);

        let (sh, srows) = read_csv(&fs::read_to_string(dir.path().join(STATS_FILE)).unwrap()).unwrap();
        assert_eq!(sh.len(), 9);
        assert_eq!(srows.len(), recs[0].len());
    }
}
