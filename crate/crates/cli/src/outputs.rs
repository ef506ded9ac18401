//! Plot-ready CSV and JSON writers.
//!
//! Floats are written with Rust's shortest round-trip formatting, so for a
//! fixed configuration and seed the emitted bytes are identical across
//! runs. JSON objects are serde structs (never maps), which pins the key
//! order.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use reachcert::dynamics::TrajectoryRecord;
use serde::Serialize;

/// Writes a serializable report as pretty-printed JSON with a trailing
/// newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    text.push('\n');
    fs::write(path, text)
}

/// Long-format particle trajectory: one row per (time node, particle).
///
/// Columns: `t,particle,x1..xd,v1..vd,w`. The velocity columns carry the
/// Euler step taken *from* that node; the terminal node has no outgoing
/// step and writes zeros there.
pub fn write_trajectory_csv(path: &Path, traj: &TrajectoryRecord) -> io::Result<()> {
    let dim = traj.initial().dim();
    let mut text = String::new();
    text.push('t');
    text.push_str(",particle");
    for c in 1..=dim {
        let _ = write!(text, ",x{c}");
    }
    for c in 1..=dim {
        let _ = write!(text, ",v{c}");
    }
    text.push_str(",w\n");

    let zeros = vec![0.0; dim];
    for (j, measure) in traj.measures.iter().enumerate() {
        let t = traj.times[j];
        for i in 0..measure.len() {
            let velocity: &[f64] =
                if j < traj.velocities.len() { traj.velocities[j].vector(i) } else { &zeros };
            let _ = write!(text, "{t},{i}");
            for x in measure.point(i) {
                let _ = write!(text, ",{x}");
            }
            for v in velocity {
                let _ = write!(text, ",{v}");
            }
            let _ = writeln!(text, ",{}", measure.weight(i));
        }
    }
    fs::write(path, text)
}

/// Per-node trajectory summary.
///
/// Columns: `t,m2,mean_norm,residual`. `residual` is the velocity
/// membership residual of the step taken from that node (zero at the
/// terminal node, which takes no step).
pub fn write_summary_csv(path: &Path, traj: &TrajectoryRecord) -> io::Result<()> {
    let mut text = String::from("t,m2,mean_norm,residual\n");
    for (j, measure) in traj.measures.iter().enumerate() {
        let t = traj.times[j];
        let m2 = measure.moment2().value;
        let mean_norm = norm(&measure.mean());
        let residual =
            if j < traj.diagnostics.len() { traj.diagnostics[j].membership_residual } else { 0.0 };
        let _ = writeln!(text, "{t},{m2},{mean_norm},{residual}");
    }
    fs::write(path, text)
}

/// Per-node decay series.
///
/// Columns: `t,V,S,W2_to_target` with `S = e^{alpha t} V`.
pub fn write_decay_csv(
    path: &Path,
    times: &[f64],
    v_values: &[f64],
    s_values: &[f64],
    w2_to_target: &[f64],
) -> io::Result<()> {
    let mut text = String::from("t,V,S,W2_to_target\n");
    for j in 0..times.len() {
        let _ = writeln!(text, "{},{},{},{}", times[j], v_values[j], s_values[j], w2_to_target[j]);
    }
    fs::write(path, text)
}

/// Estimated value function along a trajectory.
///
/// Columns: `t,node_value`; one row per node, values from re-solving the
/// terminal-cost problem starting at that node.
pub fn write_mayer_csv(path: &Path, times: &[f64], values: &[f64]) -> io::Result<()> {
    let mut text = String::from("t,node_value\n");
    for (t, v) in times.iter().zip(values) {
        let _ = writeln!(text, "{t},{v}");
    }
    fs::write(path, text)
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|c| c * c).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use reachcert::dynamics::{integrate_steps, FieldSpec, Selection};
    use reachcert::measure::DiscreteMeasure;
    use std::sync::Arc;

    fn sample_trajectory() -> TrajectoryRecord {
        let field = FieldSpec::ball(1.0).unwrap();
        let mu0 = DiscreteMeasure::uniform(vec![vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        let sel = Selection::analytic("radial", Arc::new(|_t, _i, x: &[f64], _nu: &_| vec![-x[0], -x[1]]));
        integrate_steps(&field, &mu0, &sel, 0.5, 2, 0).unwrap()
    }

    #[test]
    fn trajectory_csv_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trajectory.csv");
        write_trajectory_csv(&path, &sample_trajectory()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,particle,x1,x2,v1,v2,w");
        // 3 nodes x 2 particles + header.
        assert_eq!(lines.len(), 1 + 3 * 2);
        // Terminal rows carry zero velocity columns.
        let last: Vec<&str> = lines[6].split(',').collect();
        assert_eq!(last[0], "1");
        assert_eq!(last[4], "0");
        assert_eq!(last[5], "0");
        assert_eq!(last[6], "0.5");
    }

    #[test]
    fn summary_csv_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.csv");
        write_summary_csv(&path, &sample_trajectory()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,m2,mean_norm,residual");
        assert_eq!(lines.len(), 1 + 3);
        let first: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(first[0], "0");
        assert_eq!(first[1], "1");
        assert_eq!(first[2], "0");
    }

    #[test]
    fn decay_csv_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("decay.csv");
        write_decay_csv(&path, &[0.0, 0.5], &[1.0, 0.25], &[1.0, 0.5], &[1.0, 0.7]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "t,V,S,W2_to_target\n0,1,1,1\n0.5,0.25,0.5,0.7\n");
    }

    #[test]
    fn mayer_csv_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mayer.csv");
        write_mayer_csv(&path, &[0.0, 0.1], &[0.5, 0.5]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "t,node_value\n0,0.5\n0.1,0.5\n");
    }

    #[test]
    fn json_writer_is_pretty_with_trailing_newline() {
        #[derive(Serialize)]
        struct Tiny {
            a: f64,
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        write_json(&path, &Tiny { a: 1.5 }).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "{\n  \"a\": 1.5\n}\n");
    }
}
