use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Format};
use crate::output::{ensure_dir, write_table, Row};

/// One nonzero transition of `M(τ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRow {
    pub tau: f64,
    pub s: usize,
    pub a: usize,
    pub reward: f64,
    pub s_next: usize,
    pub prob: f64,
}

impl Row for SnapshotRow {
    const HEADER: &'static [&'static str] = &["tau", "s", "a", "reward", "s_next", "prob"];
}

pub struct SnapshotReport {
    pub rows: Vec<SnapshotRow>,
    pub files: Vec<PathBuf>,
}

/// Dumps `M(τ)` on a uniform grid of `[snapshot] points`.
pub fn gen_path(cfg: &ExperimentConfig, out: &Path, formats: &[Format]) -> Result<SnapshotReport> {
    let path = cfg.build_path()?;
    let n = cfg.snapshot.points;
    let mut rows = Vec::new();
    for i in 0..n {
        let tau = i as f64 / (n - 1) as f64;
        let m = path.evaluate(tau)?;
        for s in 0..m.n_states() {
            for a in 0..m.n_actions() {
                for (s_next, &prob) in m.row(s, a).iter().enumerate() {
                    if prob > 0.0 {
                        rows.push(SnapshotRow {
                            tau,
                            s,
                            a,
                            reward: m.reward(s, a),
                            s_next,
                            prob,
                        });
                    }
                }
            }
        }
    }
    ensure_dir(out)?;
    let files = write_table(out, "path_snapshot", &rows, formats)?;
    Ok(SnapshotReport { rows, files })
}
