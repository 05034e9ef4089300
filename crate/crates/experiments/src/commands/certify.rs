use std::path::{Path, PathBuf};

use anyhow::Result;
use htmdp::geometry::{GeometrySummary, PathGeometry};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Format};
use crate::output::{ensure_dir, write_json, write_table, Row};
use crate::stats::median;

/// One audited pair `τ0 < τ1`; `ratio = bound / true_drift`, empty when the drift is 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub tau0: f64,
    pub tau1: f64,
    pub true_drift: f64,
    pub bound: f64,
    pub pl_term: f64,
    pub curv_term: f64,
    pub phi_term: f64,
    pub ratio: Option<f64>,
}

impl Row for PairRow {
    const HEADER: &'static [&'static str] = &[
        "tau0",
        "tau1",
        "true_drift",
        "bound",
        "pl_term",
        "curv_term",
        "phi_term",
        "ratio",
    ];
}

/// Per-grid-point densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryRow {
    pub tau: f64,
    pub gap: f64,
    pub speed_density: f64,
    pub curvature_density: f64,
    pub pl_density: f64,
    pub curv_density: f64,
    pub dr_inf: f64,
    pub dp_w1: f64,
    pub ddr_inf: f64,
    pub ddp_w1: f64,
    pub in_kink_window: bool,
}

impl Row for GeometryRow {
    const HEADER: &'static [&'static str] = &[
        "tau",
        "gap",
        "speed_density",
        "curvature_density",
        "pl_density",
        "curv_density",
        "dr_inf",
        "dp_w1",
        "ddr_inf",
        "ddp_w1",
        "in_kink_window",
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifySummary {
    pub pairs: usize,
    pub violations: usize,
    /// Pairs whose interval meets no kink window.
    pub regular_pairs: usize,
    /// Median of `ratio` over regular pairs with positive drift.
    pub median_ratio_regular: f64,
    pub max_ratio_regular: f64,
    /// Pairs with `phi_term > 0`.
    pub phi_pairs: usize,
    /// Pairs with `phi_term > 0` whose interval straddles a kink location.
    pub phi_pairs_straddling: usize,
    pub geometry: GeometrySummary,
}

pub struct CertifyReport {
    pub rows: Vec<PairRow>,
    pub regular: Vec<bool>,
    pub summary: CertifySummary,
    pub files: Vec<PathBuf>,
}

/// Audits the path-value bound on all grid pairs (strided by `[certify] stride`).
pub fn audit(
    geo: &PathGeometry,
    stride: usize,
    slack: f64,
) -> Result<(Vec<PairRow>, Vec<bool>, usize)> {
    let idx: Vec<usize> = (0..geo.points().len()).step_by(stride).collect();
    let per_i: Result<Vec<Vec<(PairRow, bool)>>> = idx
        .par_iter()
        .enumerate()
        .map(|(k, &i)| {
            idx[k + 1..]
                .iter()
                .map(|&j| {
                    let (t0, t1) = (geo.points()[i].tau, geo.points()[j].tau);
                    let b = geo.value_bound(t0, t1)?;
                    let d = geo.true_drift(i, j);
                    let regular = !geo
                        .kinks()
                        .iter()
                        .any(|k| k.window.0 <= t1 && k.window.1 >= t0);
                    let row = PairRow {
                        tau0: t0,
                        tau1: t1,
                        true_drift: d,
                        bound: b.bound,
                        pl_term: b.pl_term,
                        curv_term: b.curv_term,
                        phi_term: b.phi_term,
                        ratio: (d > 0.0).then(|| b.bound / d),
                    };
                    Ok((row, regular))
                })
                .collect()
        })
        .collect();
    let (rows, regular): (Vec<PairRow>, Vec<bool>) = per_i?.into_iter().flatten().unzip();
    let violations = rows
        .iter()
        .filter(|r| r.true_drift > r.bound + slack * r.bound.max(1.0))
        .count();
    Ok((rows, regular, violations))
}

pub fn certify(cfg: &ExperimentConfig, out: &Path, formats: &[Format]) -> Result<CertifyReport> {
    let path = cfg.build_path()?;
    let geo = PathGeometry::analyze(&path, &cfg.geometry)?;
    certify_geometry(&geo, cfg, out, formats)
}

pub fn certify_geometry(
    geo: &PathGeometry,
    cfg: &ExperimentConfig,
    out: &Path,
    formats: &[Format],
) -> Result<CertifyReport> {
    let (rows, regular, violations) = audit(geo, cfg.certify.stride, cfg.certify.slack)?;
    let ratios: Vec<f64> = rows
        .iter()
        .zip(&regular)
        .filter(|(_, r)| **r)
        .filter_map(|(p, _)| p.ratio)
        .collect();
    let straddles = |r: &PairRow| {
        geo.kinks()
            .iter()
            .any(|k| r.tau0 < k.tau_star && k.tau_star <= r.tau1)
    };
    let summary = CertifySummary {
        pairs: rows.len(),
        violations,
        regular_pairs: regular.iter().filter(|r| **r).count(),
        median_ratio_regular: median(&ratios),
        max_ratio_regular: ratios.iter().copied().fold(f64::NAN, f64::max),
        phi_pairs: rows.iter().filter(|r| r.phi_term > 0.0).count(),
        phi_pairs_straddling: rows
            .iter()
            .filter(|r| r.phi_term > 0.0 && straddles(r))
            .count(),
        geometry: geo.summary(),
    };
    let geometry_rows: Vec<GeometryRow> = geo
        .points()
        .iter()
        .map(|p| GeometryRow {
            tau: p.tau,
            gap: p.gap,
            speed_density: p.speed,
            curvature_density: p.kappa,
            pl_density: p.pl_density,
            curv_density: p.curv_density,
            dr_inf: p.terms.dr_inf,
            dp_w1: p.terms.dp_w1,
            ddr_inf: p.terms.ddr_inf,
            ddp_w1: p.terms.ddp_w1,
            in_kink_window: geo.kink_window_containing(p.tau).is_some(),
        })
        .collect();
    ensure_dir(out)?;
    let mut files = write_table(out, "geometry", &geometry_rows, formats)?;
    files.extend(write_table(out, "certify_pairs", &rows, formats)?);
    let summary_path = out.join("certify_summary.json");
    write_json(&summary_path, &summary)?;
    files.push(summary_path);
    Ok(CertifyReport {
        rows,
        regular,
        summary,
        files,
    })
}
