//! Trajectory files: the CSV contract and a JSON dump.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DVector;
use serde_json::json;

use crate::dynamics::{Termination, TrajectoryRecord};
use crate::error::{Error, Result};

/// Header `t,x_1,...,x_n,gap,norm_delta,norm_eps`.
pub fn csv_header(n: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("x_{i}")));
    cols.extend(["gap", "norm_delta", "norm_eps"].map(String::from));
    cols.join(",")
}

/// The CSV text for a record, every value with 12 significant digits.
pub fn to_csv(traj: &TrajectoryRecord) -> Result<String> {
    if traj.is_empty() {
        return Err(Error::Validation("cannot export an empty trajectory".into()));
    }
    let mut out = csv_header(traj.dim());
    out.push('\n');
    for i in 0..traj.len() {
        let [nd, ne] = traj.disturbance_norms[i];
        let values = std::iter::once(traj.times[i])
            .chain(traj.states[i].iter().copied())
            .chain([traj.gaps[i], nd, ne]);
        for (j, v) in values.enumerate() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{v:.11e}").expect("writing to a String");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn export_csv(traj: &TrajectoryRecord, path: &Path) -> Result<()> {
    fs::write(path, to_csv(traj)?)?;
    Ok(())
}

/// Parses a file written by [`export_csv`]. Fields the CSV does not carry
/// (step, counters) come back as `step` and zero.
pub fn parse_csv(text: &str, step: f64) -> Result<TrajectoryRecord> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Validation("empty CSV".into()))?;
    let cols = header.split(',').count();
    if cols < 5 {
        return Err(Error::Validation(format!("CSV header has {cols} columns, need at least 5")));
    }
    let n = cols - 4;
    if header != csv_header(n) {
        return Err(Error::Validation(format!("unexpected CSV header `{header}`")));
    }
    let mut traj = TrajectoryRecord {
        times: Vec::new(),
        states: Vec::new(),
        gaps: Vec::new(),
        disturbance_norms: Vec::new(),
        terminated_by: Termination::Horizon,
        step,
        clamped_evaluations: 0,
        fallback_selections: 0,
    };
    for (row, line) in lines.enumerate() {
        let values = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| Error::Validation(format!("CSV row {}: {e}", row + 1)))?;
        if values.len() != cols {
            return Err(Error::Validation(format!("CSV row {} has {} fields", row + 1, values.len())));
        }
        traj.times.push(values[0]);
        traj.states.push(DVector::from_column_slice(&values[1..=n]));
        traj.gaps.push(values[n + 1]);
        traj.disturbance_norms.push([values[n + 2], values[n + 3]]);
    }
    Ok(traj)
}

pub fn read_csv(path: &Path, step: f64) -> Result<TrajectoryRecord> {
    parse_csv(&fs::read_to_string(path)?, step)
}

pub fn to_json(traj: &TrajectoryRecord) -> serde_json::Value {
    json!({
        "times": traj.times,
        "states": traj.states.iter().map(|x| x.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
        "gaps": traj.gaps,
        "disturbance_norms": traj.disturbance_norms,
        "terminated_by": traj.terminated_by,
        "step": traj.step,
        "clamped_evaluations": traj.clamped_evaluations,
        "fallback_selections": traj.fallback_selections,
    })
}

pub fn export_json(traj: &TrajectoryRecord, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(&to_json(traj))?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TrajectoryRecord {
        TrajectoryRecord {
            times: vec![0.0, 0.1],
            states: vec![DVector::from_column_slice(&[1.0, 0.0, 0.0]), DVector::from_column_slice(&[0.9, 0.1, 0.0])],
            gaps: vec![1.0, 0.81234567890123],
            disturbance_norms: vec![[0.0, 0.0], [1.0 / 3.0, 2e-7]],
            terminated_by: Termination::Horizon,
            step: 0.01,
            clamped_evaluations: 0,
            fallback_selections: 0,
        }
    }

    #[test]
    fn csv_shape() {
        let text = to_csv(&sample()).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "t,x_1,x_2,x_3,gap,norm_delta,norm_eps");
        assert!(lines[2].starts_with("1.00000000000e-1,9.00000000000e-1,"));
    }

    #[test]
    fn csv_is_deterministic_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        export_csv(&sample(), &a).unwrap();
        export_csv(&sample(), &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

        let back = read_csv(&a, 0.01).unwrap();
        let orig = sample();
        for i in 0..2 {
            assert!((back.times[i] - orig.times[i]).abs() <= 1e-11);
            assert!((&back.states[i] - &orig.states[i]).amax() <= 1e-11);
            assert!((back.gaps[i] - orig.gaps[i]).abs() <= 1e-11);
            for j in 0..2 {
                assert!((back.disturbance_norms[i][j] - orig.disturbance_norms[i][j]).abs() <= 1e-11);
            }
        }
    }

    #[test]
    fn empty_records_and_bad_files_are_rejected() {
        let mut empty = sample();
        empty.times.clear();
        empty.states.clear();
        empty.gaps.clear();
        empty.disturbance_norms.clear();
        assert!(to_csv(&empty).is_err());
        assert!(parse_csv("t,x_1,gap\n", 0.01).is_err());
        assert!(parse_csv("t,x_1,gap,norm_delta,norm_eps\n0,abc,0,0,0\n", 0.01).is_err());
    }
}
