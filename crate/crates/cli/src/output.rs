//! Run artifacts: trajectory and diagnostics tables as CSV, switch structure
//! and the run summary as JSON.  Every float is written through `Display`
//! (CSV) or serde_json, both of which emit the shortest digit string that
//! parses back to the same bits, so files are lossless and byte-stable.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use topoflock_core::diagnostics::DiagnosticsSeries;
use topoflock_core::dynamics::{SwitchLog, Trajectory};

use crate::config::RunConfig;

/// Topology fingerprints appear in JSON as fixed-width hex strings.
pub fn fingerprint_hex(hash: u64) -> String {
    format!("{hash:016x}")
}

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::new();
    let first = &traj.states[0];
    let (n, d) = (first.n_agents(), first.dim());
    out.push('t');
    for i in 0..n {
        for k in 0..d {
            write!(out, ",x{i}_{k}").unwrap();
        }
    }
    for i in 0..n {
        for k in 0..d {
            write!(out, ",v{i}_{k}").unwrap();
        }
    }
    out.push('\n');
    for (t, state) in traj.times.iter().zip(&traj.states) {
        write!(out, "{t}").unwrap();
        for x in state.positions() {
            write!(out, ",{x}").unwrap();
        }
        for v in state.velocities() {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn diagnostics_csv(series: &DiagnosticsSeries, dim: usize) -> String {
    let mut out = String::new();
    out.push_str("t,omega,vel_diameter,pos_fluctuation");
    for k in 0..dim {
        write!(out, ",momentum_{k}").unwrap();
    }
    out.push_str(",max_position\n");
    for s in 0..series.times.len() {
        write!(
            out,
            "{},{},{},{}",
            series.times[s], series.omega[s], series.vel_diameter[s], series.pos_fluctuation[s]
        )
        .unwrap();
        for k in 0..dim {
            write!(out, ",{}", series.momentum[s][k]).unwrap();
        }
        writeln!(out, ",{}", series.max_position[s]).unwrap();
    }
    out
}

#[derive(Serialize)]
pub struct EventDoc {
    pub time: f64,
    pub old: String,
    pub new: String,
}

#[derive(Serialize)]
pub struct IntervalDoc {
    pub t_start: f64,
    pub t_end: f64,
    pub fingerprint: String,
    /// Connectivity of the digraph holding on this interval; absent when no
    /// sample landed inside it or the model has no switching digraph.
    pub strong: Option<bool>,
    pub weak: Option<bool>,
}

#[derive(Serialize)]
pub struct SwitchesDoc {
    pub events: Vec<EventDoc>,
    pub intervals: Vec<IntervalDoc>,
    /// Total time spent in each topology, keyed by fingerprint.
    pub occupancy: BTreeMap<String, f64>,
}

/// Builds the switch document.  `connectivity` must align with
/// `log.intervals`; pass `(None, None)` where nothing was computed.
pub fn switches_doc(log: &SwitchLog, connectivity: &[(Option<bool>, Option<bool>)]) -> SwitchesDoc {
    assert_eq!(connectivity.len(), log.intervals.len());
    SwitchesDoc {
        events: log
            .events
            .iter()
            .map(|ev| EventDoc {
                time: ev.time,
                old: fingerprint_hex(ev.old_hash),
                new: fingerprint_hex(ev.new_hash),
            })
            .collect(),
        intervals: log
            .intervals
            .iter()
            .zip(connectivity)
            .map(|(iv, &(strong, weak))| IntervalDoc {
                t_start: iv.t_start,
                t_end: iv.t_end,
                fingerprint: fingerprint_hex(iv.hash),
                strong,
                weak,
            })
            .collect(),
        occupancy: log.occupancy.iter().map(|(h, t)| (fingerprint_hex(*h), *t)).collect(),
    }
}

#[derive(Serialize)]
pub struct FlockingDoc {
    pub flocked: bool,
    pub t_flock: Option<f64>,
    pub v_consensus: Option<Vec<f64>>,
}

#[derive(Serialize, Clone)]
pub struct PredictionDoc {
    /// Whether the frozen digraph admits a one-dimensional left kernel.
    pub valid: bool,
    pub kernel_dim: usize,
    pub xi: Vec<f64>,
    /// Predicted consensus velocity; absent when the certificate is invalid.
    pub velocity: Option<Vec<f64>>,
}

#[derive(Serialize, Clone)]
pub struct SwarmDoc {
    pub final_cluster_count: usize,
    pub final_polarization: f64,
    /// Largest |angular momentum| over the second half of the run; a
    /// sustained nonzero value signals milling.
    pub peak_angular_momentum: f64,
}

#[derive(Serialize)]
pub struct Summary {
    pub schema_version: u32,
    /// Fully resolved configuration, defaults included, so the run can be
    /// reproduced from the summary alone.
    pub config: RunConfig,
    pub n_agents: usize,
    pub dim: usize,
    pub final_time: f64,
    pub n_switch_events: usize,
    pub flocking: FlockingDoc,
    pub momentum_drift: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_return_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consensus_prediction: Option<PredictionDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub swarm: Option<SwarmDoc>,
}

pub fn write_json<T: Serialize>(path: &Path, doc: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(doc)
        .with_context(|| format!("serializing {}", path.display()))?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use topoflock_core::dynamics::{simulate, SimOptions};
    use topoflock_core::scenarios::oscillator;

    #[test]
    fn trajectory_header_matches_column_count() {
        let (e, w) = oscillator(0.5).unwrap();
        let traj = simulate(&e, &w, 1e-2, 0.1, &SimOptions::default()).unwrap();
        let csv = trajectory_csv(&traj);
        let mut lines = csv.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(header.len(), 1 + 2 * 7);
        assert_eq!(header[0], "t");
        assert_eq!(header[1], "x0_0");
        assert_eq!(header[8], "v0_0");
        for line in lines {
            assert_eq!(line.split(',').count(), header.len());
        }
    }

    #[test]
    fn csv_floats_round_trip_exactly() {
        let (e, w) = oscillator(0.5).unwrap();
        let traj = simulate(&e, &w, 1e-2, 0.1, &SimOptions::default()).unwrap();
        let csv = trajectory_csv(&traj);
        let last = csv.lines().last().unwrap();
        let fields: Vec<f64> = last.split(',').map(|s| s.parse().unwrap()).collect();
        let end = traj.final_state();
        assert_eq!(fields[0], traj.final_time());
        for i in 0..7 {
            assert_eq!(fields[1 + i], end.position(i)[0]);
            assert_eq!(fields[8 + i], end.velocity(i)[0]);
        }
    }

    #[test]
    fn fingerprints_are_sixteen_hex_digits() {
        assert_eq!(fingerprint_hex(0), "0000000000000000");
        assert_eq!(fingerprint_hex(u64::MAX), "ffffffffffffffff");
    }
}
