//! Disk artifacts: per-trial trajectory CSVs and the batch summary JSON.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use nscbf::dynamics::Trajectory;
use nscbf::montecarlo::MonteCarloSummary;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// `summary.json` layout: artifact version, the full resolved config and
/// the batch statistics inline.
#[derive(Debug, Serialize, Deserialize)]
pub struct SummaryFile {
    pub artifact_version: String,
    pub config: RunConfig,
    #[serde(flatten)]
    pub summary: MonteCarloSummary,
}

/// Writes one trajectory as CSV with columns
/// `t, x1..xn, u1..um, h, active_leaves`.
///
/// Floats use the shortest round-trip representation. The final state row
/// has no control sample; its `u` cells stay empty. `active_leaves` is the
/// almost-active set joined with `;`.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> io::Result<()> {
    let n = traj.states.first().map_or(0, |s| s.len());
    let m = traj.controls.first().map_or(0, |u| u.len());
    let mut w = BufWriter::new(File::create(path)?);

    let mut header = String::from("t");
    for i in 1..=n {
        header.push_str(&format!(",x{i}"));
    }
    for i in 1..=m {
        header.push_str(&format!(",u{i}"));
    }
    header.push_str(",h,active_leaves");
    writeln!(w, "{header}")?;

    for (k, state) in traj.states.iter().enumerate() {
        let mut line = format!("{}", traj.times[k]);
        for v in state.iter() {
            line.push_str(&format!(",{v}"));
        }
        match traj.controls.get(k) {
            Some(u) => {
                for v in u.iter() {
                    line.push_str(&format!(",{v}"));
                }
            }
            None => line.push_str(&",".repeat(m)),
        }
        match traj.h_values.get(k) {
            Some(h) => line.push_str(&format!(",{h}")),
            None => line.push(','),
        }
        let leaves = traj
            .active_leaves
            .get(k)
            .map(|set| {
                set.iter()
                    .map(|i| i.to_string())
                    .collect::<Vec<_>>()
                    .join(";")
            })
            .unwrap_or_default();
        line.push_str(&format!(",{leaves}"));
        writeln!(w, "{line}")?;
    }
    w.flush()
}

pub fn write_summary_json(
    path: &Path,
    config: &RunConfig,
    summary: &MonteCarloSummary,
) -> io::Result<()> {
    let file = SummaryFile {
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        summary: summary.clone(),
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &file)?;
    writeln!(w)?;
    w.flush()
}
