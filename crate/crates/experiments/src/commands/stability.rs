use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use htmdp::agents::{ht_q_learning_run, AgentConfig, RunTrace};
use htmdp::path::MdpPath;
use htmdp::scheduler::{chatter_stats, robbins_monro_audit, SchedulerConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Format};
use crate::output::{ensure_dir, write_json, write_table, Row};
use crate::stats::median;

/// One HT Q-learning run at a sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    #[serde(rename = "H")]
    pub h: u64,
    pub delta_hys: f64,
    pub seed: u64,
    pub updates: usize,
    pub large_change_fraction: f64,
    /// Mean of `‖X̃ − reference‖²` over ticks.
    pub second_moment: f64,
    /// `2 C₂ / (H Δ_hys²)`.
    pub chatter_bound: f64,
    pub var_eta: f64,
    pub var_nu: f64,
    pub var_lambda: f64,
    pub var_depth: f64,
    pub var_budget: f64,
    pub variation_ok: bool,
    pub rm_comparable_fraction: f64,
}

impl Row for StabilityRow {
    const HEADER: &'static [&'static str] = &[
        "H",
        "delta_hys",
        "seed",
        "updates",
        "large_change_fraction",
        "second_moment",
        "chatter_bound",
        "var_eta",
        "var_nu",
        "var_lambda",
        "var_depth",
        "var_budget",
        "variation_ok",
        "rm_comparable_fraction",
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityCell {
    #[serde(rename = "H")]
    pub h: u64,
    pub delta_hys: f64,
    pub median_fraction: f64,
    pub median_bound: f64,
    pub variation_ok: bool,
    pub bound_ok: bool,
    pub min_rm_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilitySummary {
    pub cells: Vec<StabilityCell>,
    /// For every `Δ_hys`, median fraction nonincreasing in `H`.
    pub monotone_along_h: bool,
    /// For every `H`, median fraction nonincreasing in `Δ_hys`.
    pub monotone_along_delta: bool,
    /// Median fraction nonincreasing along `(H[k], Δ_hys[k])`; absent when the lists differ in length.
    pub monotone_diagonal: Option<bool>,
    /// `P̄`, the bound on both smoothed proxies used for `λ`'s range and `m_K`.
    pub proxy_bound: f64,
    /// Lower comparability constant `m_K` used by the Robbins–Monro audit.
    pub rm_constant: f64,
    pub violations: usize,
}

pub struct StabilityReport {
    pub rows: Vec<StabilityRow>,
    pub summary: StabilitySummary,
    pub files: Vec<PathBuf>,
}

/// `P̄ = span(r) + L_s √2`, bounding both smoothed proxies under one-hot features.
pub fn proxy_bound(path: &MdpPath, sched: &SchedulerConfig, grid: usize) -> Result<f64> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..grid {
        let m = path.evaluate(i as f64 / (grid - 1) as f64)?;
        for &r in m.rewards() {
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    let l_s = match sched.l_s {
        Some(l) => l,
        None => path.l_s()?,
    };
    Ok((hi - lo) + l_s * 2f64.sqrt())
}

/// `m_K = 1 / (1 + (α₁ + α₂) P̄)`; `η_t ≥ m_K η⁰_t` whenever the proxies stay below `P̄`.
pub fn rm_constant(sched: &SchedulerConfig, p_bar: f64) -> f64 {
    1.0 / (1.0 + (sched.alpha1 + sched.alpha2) * p_bar)
}

fn nonincreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0] + 1e-12)
}

/// Total variation allowance per hyperparameter: `⌈T/H⌉·range`, plus the drop of the
/// clipped base `η` schedule when it decays between updates. `λ` uses its range under
/// proxies bounded by `p_bar`.
pub fn variation_allowance(sched: &SchedulerConfig, steps: u64, p_bar: f64) -> [f64; 5] {
    let ticks = steps.div_ceil(sched.h) as f64;
    let mut ranges = sched.ranges();
    ranges[2] = sched.lambda_range(p_bar);
    let mut allow = ranges.map(|r| ticks * r);
    let clip = |x: f64| x.clamp(sched.eta_min, sched.eta_max);
    allow[0] += clip(sched.base_eta(0)) - clip(sched.base_eta(steps.saturating_sub(1)));
    allow
}

fn stability_row(
    trace: &RunTrace,
    sched: &SchedulerConfig,
    seed: u64,
    eps: f64,
    p_bar: f64,
) -> Result<StabilityRow> {
    let hyper = trace.hyper_trace();
    let c = chatter_stats(&hyper, eps)?;
    let steps = trace.records.len() as u64;
    let allow = variation_allowance(sched, steps, p_bar);
    let variation_ok = c
        .variation
        .iter()
        .zip(allow)
        .all(|(v, a)| *v <= a * (1.0 + 1e-12) + 1e-12);
    let moves = &trace.hysteresis_moves;
    let second_moment = if moves.is_empty() {
        0.0
    } else {
        moves.iter().map(|m| m * m).sum::<f64>() / moves.len() as f64
    };
    let chatter_bound = if sched.delta_hys == 0.0 {
        f64::INFINITY
    } else {
        2.0 * second_moment / (sched.h as f64 * sched.delta_hys * sched.delta_hys)
    };
    let eta: Vec<f64> = hyper.iter().map(|h| h.eta).collect();
    let base: Vec<f64> = (0..steps)
        .map(|t| sched.base_eta(t).clamp(sched.eta_min, sched.eta_max))
        .collect();
    let rm = robbins_monro_audit(&eta, &base, rm_constant(sched, p_bar))?;
    Ok(StabilityRow {
        h: sched.h,
        delta_hys: sched.delta_hys,
        seed,
        updates: trace.scheduler_updates,
        large_change_fraction: c.large_change_fraction,
        second_moment,
        chatter_bound,
        var_eta: c.variation[0],
        var_nu: c.variation[1],
        var_lambda: c.variation[2],
        var_depth: c.variation[3],
        var_budget: c.variation[4],
        variation_ok,
        rm_comparable_fraction: rm.comparable_fraction,
    })
}

pub fn sweep(
    path: &MdpPath,
    base: &SchedulerConfig,
    agent: &AgentConfig,
    hs: &[u64],
    deltas: &[f64],
    seeds: &[u64],
    eps: f64,
) -> Result<(Vec<StabilityRow>, StabilitySummary)> {
    let p_bar = proxy_bound(path, base, 201)?;
    let jobs: Vec<(u64, f64, u64)> = hs
        .iter()
        .flat_map(|&h| {
            deltas
                .iter()
                .flat_map(move |&d| seeds.iter().map(move |&s| (h, d, s)))
        })
        .collect();
    let rows: Result<Vec<StabilityRow>> = jobs
        .par_iter()
        .map(|&(h, d, seed)| {
            let sched = SchedulerConfig {
                h,
                delta_hys: d,
                ..base.clone()
            };
            let trace = ht_q_learning_run(path, None, &sched, agent, seed)?;
            stability_row(&trace, &sched, seed, eps, p_bar)
        })
        .collect();
    let rows = rows?;
    let cell_rows = |h: u64, d: f64| {
        rows.iter()
            .filter(move |r| r.h == h && r.delta_hys.total_cmp(&d).is_eq())
    };
    let mut cells = Vec::new();
    for &h in hs {
        for &d in deltas {
            let rs: Vec<&StabilityRow> = cell_rows(h, d).collect();
            cells.push(StabilityCell {
                h,
                delta_hys: d,
                median_fraction: median(
                    &rs.iter()
                        .map(|r| r.large_change_fraction)
                        .collect::<Vec<_>>(),
                ),
                median_bound: median(&rs.iter().map(|r| r.chatter_bound).collect::<Vec<_>>()),
                variation_ok: rs.iter().all(|r| r.variation_ok),
                bound_ok: rs
                    .iter()
                    .all(|r| r.large_change_fraction <= r.chatter_bound + 1e-12),
                min_rm_fraction: rs
                    .iter()
                    .map(|r| r.rm_comparable_fraction)
                    .fold(f64::INFINITY, f64::min),
            });
        }
    }
    let cell = |h: u64, d: f64| {
        cells
            .iter()
            .find(|c| c.h == h && c.delta_hys.total_cmp(&d).is_eq())
            .map_or(f64::NAN, |c| c.median_fraction)
    };
    let monotone_along_h = deltas
        .iter()
        .all(|&d| nonincreasing(&hs.iter().map(|&h| cell(h, d)).collect::<Vec<_>>()));
    let monotone_along_delta = hs
        .iter()
        .all(|&h| nonincreasing(&deltas.iter().map(|&d| cell(h, d)).collect::<Vec<_>>()));
    let monotone_diagonal = (hs.len() == deltas.len()).then(|| {
        nonincreasing(
            &hs.iter()
                .zip(deltas)
                .map(|(&h, &d)| cell(h, d))
                .collect::<Vec<_>>(),
        )
    });
    let violations = rows
        .iter()
        .filter(|r| !r.variation_ok || r.large_change_fraction > r.chatter_bound + 1e-12)
        .count();
    let summary = StabilitySummary {
        cells,
        monotone_along_h,
        monotone_along_delta,
        monotone_diagonal,
        proxy_bound: p_bar,
        rm_constant: rm_constant(base, p_bar),
        violations,
    };
    Ok((rows, summary))
}

pub fn scheduler_stability(
    cfg: &ExperimentConfig,
    n_seeds: u64,
    out: &Path,
    formats: &[Format],
) -> Result<StabilityReport> {
    let sweep_cfg = cfg
        .stability
        .as_ref()
        .context("scheduler-stability needs a [stability] block with H and delta_hys lists")?;
    let path = cfg.build_path()?;
    let seeds: Vec<u64> = (0..n_seeds).collect();
    let (rows, summary) = sweep(
        &path,
        &cfg.scheduler,
        &cfg.agent,
        &sweep_cfg.h,
        &sweep_cfg.delta_hys,
        &seeds,
        sweep_cfg.eps,
    )?;
    ensure_dir(out)?;
    let mut files = write_table(out, "stability", &rows, formats)?;
    let p = out.join("stability_summary.json");
    write_json(&p, &summary)?;
    files.push(p);
    Ok(StabilityReport {
        rows,
        summary,
        files,
    })
}
