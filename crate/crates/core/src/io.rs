//! CSV export and import with full double precision and `\n` line endings.

use std::fs;
use std::path::Path;

use crate::dynamics::DynamicsOutput;
use crate::error::{Error, Result};
use crate::limits::{CausalityResult, SweepResult};
use crate::trajectory::Trajectory;

/// 17 significant digits, enough to round-trip every finite double.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Node time as written to disk; the last node carries `T` exactly so that
/// re-import recovers the same step.
fn node_time(traj: &Trajectory, k: usize) -> f64 {
    if k == traj.intervals() {
        traj.horizon()
    } else {
        traj.time(k)
    }
}

/// Serializes a header and rows to CSV bytes.
pub fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("writing to memory");
    for row in rows {
        w.write_record(row).expect("writing to memory");
    }
    w.into_inner().expect("flushing memory writer")
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn trajectory_csv(traj: &Trajectory) -> Vec<u8> {
    let n = traj.dim();
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("q{i}")));
    let rows: Vec<Vec<String>> = (0..=traj.intervals())
        .map(|k| {
            let mut row = vec![fmt_float(node_time(traj, k))];
            row.extend(traj.node(k).iter().map(|&v| fmt_float(v)));
            row
        })
        .collect();
    csv_bytes(&header, &rows)
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    write_bytes(path, &trajectory_csv(traj))
}

fn csv_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Reads a `t,q0..q{n-1}` file; the grid must start at 0 and be uniform.
pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_trajectory_csv(path, &text)
}

fn parse_trajectory_csv(path: &Path, text: &str) -> Result<Trajectory> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| csv_err(path, e.to_string()))?
        .clone();
    let n = header.len().saturating_sub(1);
    let expected: Vec<String> = std::iter::once("t".to_string())
        .chain((0..n).map(|i| format!("q{i}")))
        .collect();
    if n == 0 || header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(csv_err(
            path,
            format!("header must be {}", expected.join(",")),
        ));
    }
    let mut times = Vec::new();
    let mut nodes = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e.to_string()))?;
        if record.len() != n + 1 {
            return Err(csv_err(
                path,
                format!("row {} has {} fields", line + 1, record.len()),
            ));
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                csv_err(path, format!("row {}: '{field}' is not a number", line + 1))
            })?;
            if j == 0 {
                times.push(v);
            } else {
                nodes.push(v);
            }
        }
    }
    if times.len() < 2 {
        return Err(csv_err(path, "trajectory needs at least two rows"));
    }
    let intervals = times.len() - 1;
    let horizon = times[intervals];
    let h = horizon / intervals as f64;
    for (k, &t) in times.iter().enumerate() {
        if (t - k as f64 * h).abs() > 1e-9 * horizon.abs().max(1.0) {
            return Err(csv_err(
                path,
                format!("row {} breaks the uniform grid", k + 1),
            ));
        }
    }
    Trajectory::new(horizon, intervals, n, nodes)
}

/// `t,q0..,dq0..,energy`; velocity columns only for second-order kinds.
pub fn dynamics_csv(out: &DynamicsOutput) -> Vec<u8> {
    let q = &out.positions;
    let n = q.dim();
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("q{i}")));
    if out.velocities.is_some() {
        header.extend((0..n).map(|i| format!("dq{i}")));
    }
    header.push("energy".to_string());
    let rows: Vec<Vec<String>> = (0..=q.intervals())
        .map(|k| {
            let mut row = vec![fmt_float(node_time(q, k))];
            row.extend(q.node(k).iter().map(|&v| fmt_float(v)));
            if let Some(v) = &out.velocities {
                row.extend(v.node(k).iter().map(|&x| fmt_float(x)));
            }
            row.push(fmt_float(out.energy[k]));
            row
        })
        .collect();
    csv_bytes(&header, &rows)
}

pub const SWEEP_HEADER: [&str; 6] = [
    "param",
    "h1_dist",
    "l2_dist",
    "sup_dist",
    "converged",
    "iterations",
];

pub fn sweep_csv(result: &SweepResult) -> Vec<u8> {
    let header: Vec<String> = SWEEP_HEADER.iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = result
        .rows
        .iter()
        .map(|r| {
            vec![
                fmt_float(r.param),
                fmt_float(r.h1_dist),
                fmt_float(r.l2_dist),
                fmt_float(r.sup_dist),
                r.converged.to_string(),
                r.iterations.to_string(),
            ]
        })
        .collect();
    csv_bytes(&header, &rows)
}

pub fn causality_csv(result: &CausalityResult) -> Vec<u8> {
    let header: Vec<String> = [
        "param",
        "deviation",
        "converged",
        "iterations_base",
        "iterations_perturbed",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let rows: Vec<Vec<String>> = result
        .rows
        .iter()
        .map(|r| {
            vec![
                fmt_float(r.param),
                fmt_float(r.deviation),
                r.converged.to_string(),
                r.iterations_base.to_string(),
                r.iterations_perturbed.to_string(),
            ]
        })
        .collect();
    csv_bytes(&header, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::DynamicsKind;
    use crate::limits::{h1_distance, ReferenceDescriptor, METRIC_NOTE};

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            let s = fmt_float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_float(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn trajectory_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        let traj =
            Trajectory::from_fn(3.0, 600, 2, |t| vec![t.cos(), (t * 0.7).sin() / 3.0]).unwrap();
        write_trajectory_csv(&path, &traj).unwrap();
        let back = read_trajectory_csv(&path).unwrap();
        assert_eq!(h1_distance(&traj, &back).unwrap(), 0.0);
        assert_eq!(back, traj);
        let first = std::fs::read(&path).unwrap();
        write_trajectory_csv(&path, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
        assert!(!first.contains(&b'\r'));
    }

    #[test]
    fn malformed_files_are_rejected() {
        let p = Path::new("mem.csv");
        assert!(parse_trajectory_csv(p, "t,x0\n0,1\n1,2\n").is_err());
        assert!(parse_trajectory_csv(p, "t,q0\n0,1\n").is_err());
        assert!(parse_trajectory_csv(p, "t,q0\n0,1\n1,2\n5,3\n3,4\n4,4\n").is_err());
        assert!(parse_trajectory_csv(p, "t,q0\n0,1\n1,oops\n2,1\n3,1\n4,1\n").is_err());
        assert!(read_trajectory_csv(Path::new("/nonexistent/traj.csv")).is_err());
    }

    #[test]
    fn empty_sweep_is_header_only() {
        let result = SweepResult {
            parameter: "epsilon",
            rows: vec![],
            reference: ReferenceDescriptor {
                integrator: "rk4",
                dynamics: DynamicsKind::Newton,
                mass: Some(1.0),
                dissipation: 0.0,
                dt: 1e-3,
                sample_every: 10,
            },
            sup_window: [0.0, 1.0],
            metric: METRIC_NOTE,
        };
        assert_eq!(
            String::from_utf8(sweep_csv(&result)).unwrap(),
            "param,h1_dist,l2_dist,sup_dist,converged,iterations\n"
        );
    }
}
