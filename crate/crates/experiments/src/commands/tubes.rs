use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use htmdp::geometry::{PathGeometry, TubeOrder};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Format};
use crate::output::{ensure_dir, write_json, write_table, Row};

/// One `(τ0, ε, order)` tube. Interval fields are empty when `status` is not `ok`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeRow {
    pub tau0: f64,
    pub eps: f64,
    pub order: TubeOrder,
    pub status: String,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub component_lo: Option<f64>,
    pub component_hi: Option<f64>,
    pub checked: Option<usize>,
    pub violations: Option<usize>,
    pub max_deviation: Option<f64>,
    pub gap_tau0: Option<f64>,
    pub safe_lo: Option<f64>,
    pub safe_hi: Option<f64>,
    pub warning: Option<bool>,
}

impl Row for TubeRow {
    const HEADER: &'static [&'static str] = &[
        "tau0",
        "eps",
        "order",
        "status",
        "lo",
        "hi",
        "component_lo",
        "component_hi",
        "checked",
        "violations",
        "max_deviation",
        "gap_tau0",
        "safe_lo",
        "safe_hi",
        "warning",
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubesSummary {
    pub rows: usize,
    pub errors: usize,
    pub coverage_violations: usize,
    /// `(τ0, ε)` points whose second-order interval is a strict subset of the first-order one.
    pub strictly_tighter: usize,
}

pub struct TubesReport {
    pub rows: Vec<TubeRow>,
    pub summary: TubesSummary,
    pub files: Vec<PathBuf>,
}

fn empty_row(tau0: f64, eps: f64, order: TubeOrder, status: String) -> TubeRow {
    TubeRow {
        tau0,
        eps,
        order,
        status,
        lo: None,
        hi: None,
        component_lo: None,
        component_hi: None,
        checked: None,
        violations: None,
        max_deviation: None,
        gap_tau0: None,
        safe_lo: None,
        safe_hi: None,
        warning: None,
    }
}

fn tube_row(geo: &PathGeometry, tau0: f64, eps: f64, order: TubeOrder) -> TubeRow {
    let attempt = || -> htmdp::Result<TubeRow> {
        let safe = geo.gap_safe_region(tau0, eps, order, None)?;
        let cov = geo.tube_coverage(&safe.tube)?;
        Ok(TubeRow {
            tau0,
            eps,
            order,
            status: "ok".into(),
            lo: Some(safe.tube.interval.0),
            hi: Some(safe.tube.interval.1),
            component_lo: Some(safe.tube.component.0),
            component_hi: Some(safe.tube.component.1),
            checked: Some(cov.checked),
            violations: Some(cov.violations),
            max_deviation: Some(cov.max_deviation),
            gap_tau0: Some(safe.gap_at_tau0),
            safe_lo: safe.certified.map(|c| c.0),
            safe_hi: safe.certified.map(|c| c.1),
            warning: Some(safe.warning),
        })
    };
    attempt().unwrap_or_else(|e| empty_row(tau0, eps, order, e.to_string()))
}

pub fn sweep(geo: &PathGeometry, tau0: &[f64], eps: &[f64]) -> Vec<TubeRow> {
    let points: Vec<(f64, f64, TubeOrder)> = tau0
        .iter()
        .flat_map(|&t| {
            eps.iter()
                .flat_map(move |&e| [(t, e, TubeOrder::First), (t, e, TubeOrder::Second)])
        })
        .collect();
    points
        .par_iter()
        .map(|&(t, e, o)| tube_row(geo, t, e, o))
        .collect()
}

pub fn summarize(rows: &[TubeRow]) -> TubesSummary {
    let strictly_tighter = rows
        .chunks(2)
        .filter(|pair| match pair {
            [f, s] => match (f.lo, f.hi, s.lo, s.hi) {
                (Some(fl), Some(fh), Some(sl), Some(sh)) => {
                    fl <= sl && sh <= fh && (fl < sl || sh < fh)
                }
                _ => false,
            },
            _ => false,
        })
        .count();
    TubesSummary {
        rows: rows.len(),
        errors: rows.iter().filter(|r| r.status != "ok").count(),
        coverage_violations: rows.iter().filter_map(|r| r.violations).sum(),
        strictly_tighter,
    }
}

pub fn tubes(cfg: &ExperimentConfig, out: &Path, formats: &[Format]) -> Result<TubesReport> {
    let sweep_cfg = cfg
        .tubes
        .as_ref()
        .context("tubes needs a [tubes] block with tau0 and eps lists")?;
    let path = cfg.build_path()?;
    let geo = PathGeometry::analyze(&path, &cfg.geometry)?;
    let rows = sweep(&geo, &sweep_cfg.tau0, &sweep_cfg.eps);
    let summary = summarize(&rows);
    ensure_dir(out)?;
    let mut files = write_table(out, "tubes", &rows, formats)?;
    let p = out.join("tubes_summary.json");
    write_json(&p, &summary)?;
    files.push(p);
    Ok(TubesReport {
        rows,
        summary,
        files,
    })
}
