use serde::{Deserialize, Serialize};

use crate::scheduler::HyperParams;

/// One row of a run trace; field order is the CSV column order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub tau: f64,
    pub e_t: f64,
    pub regret_inc: f64,
    pub geo_load: f64,
    pub eta: f64,
    pub nu: f64,
    pub lambda: f64,
    pub depth: usize,
    pub budget: usize,
    /// Undiscounted reward of the most recently completed episode.
    #[serde(rename = "return")]
    pub episode_return: f64,
}

impl StepRecord {
    pub fn hyper(&self) -> HyperParams {
        HyperParams {
            eta: self.eta,
            nu: self.nu,
            lambda: self.lambda,
            depth: self.depth,
            budget: self.budget,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<StepRecord>,
    /// Planner node expansions (0 for model-free runs).
    pub expansions: u64,
    /// Number of scheduler updates that passed hysteresis.
    pub scheduler_updates: usize,
    /// Smoothed-proxy distance from the hysteresis reference at each tick (HT runs only).
    #[serde(default)]
    pub hysteresis_moves: Vec<f64>,
}

impl RunTrace {
    pub fn hyper_trace(&self) -> Vec<HyperParams> {
        self.records.iter().map(StepRecord::hyper).collect()
    }

    pub fn total_budget(&self) -> u64 {
        self.records.iter().map(|r| r.budget as u64).sum()
    }
}

/// `Σ_t ⟨d₀, V⋆_{τ_t} − V^{π_t}_{τ_t}⟩`.
pub fn dynamic_regret(trace: &RunTrace) -> f64 {
    trace.records.iter().map(|r| r.regret_inc).sum()
}

/// Fit of `e_{t+1} ≤ ρ e_t + c₁ ΔGeo_t + c_noise` for one `ρ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecursionFit {
    pub rho: f64,
    pub c1: f64,
    pub c_noise: f64,
    pub violation_fraction: f64,
    /// Mean absolute slack `|c₁ g_t + c_noise − (e_{t+1} − ρ e_t)|`.
    pub mean_abs_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecursionReport {
    pub best: RecursionFit,
    pub per_rho: Vec<RecursionFit>,
}

const COVERAGE: f64 = 0.95;

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let i = ((sorted.len() as f64 * q).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[i]
}

fn fit_rho(rho: f64, e: &[f64], g: &[f64]) -> RecursionFit {
    let n = e.len() - 1;
    let resid: Vec<f64> = (0..n).map(|t| e[t + 1] - rho * e[t]).collect();
    let mut ratios: Vec<f64> = (0..n)
        .filter(|&t| g[t] > 0.0 && resid[t] > 0.0)
        .map(|t| resid[t] / g[t])
        .collect();
    ratios.sort_by(f64::total_cmp);
    let mut c1_candidates = vec![0.0];
    if !ratios.is_empty() {
        c1_candidates.extend((0..=20).map(|k| quantile(&ratios, k as f64 / 20.0)));
    }
    let mut best: Option<RecursionFit> = None;
    for c1 in c1_candidates {
        let mut need: Vec<f64> = (0..n).map(|t| resid[t] - c1 * g[t]).collect();
        need.sort_by(f64::total_cmp);
        let c_noise = quantile(&need, COVERAGE).max(0.0);
        let mut viol = 0usize;
        let mut abs = 0.0;
        for t in 0..n {
            let s = c1 * g[t] + c_noise - resid[t];
            viol += usize::from(s < -1e-12 * (1.0 + resid[t].abs()));
            abs += s.abs();
        }
        let fit = RecursionFit {
            rho,
            c1,
            c_noise,
            violation_fraction: viol as f64 / n as f64,
            mean_abs_residual: abs / n as f64,
        };
        if best.is_none_or(|b| fit.mean_abs_residual < b.mean_abs_residual) {
            best = Some(fit);
        }
    }
    best.expect("at least one candidate")
}

/// For each `ρ`, the nonnegative `(c₁, c_noise)` with least mean absolute
/// slack among fits where the recursion holds on at least 95% of steps.
/// `None` for traces shorter than two steps or an empty `rho_grid`.
pub fn tracking_recursion_audit(trace: &RunTrace, rho_grid: &[f64]) -> Option<RecursionReport> {
    if trace.records.len() < 2 || rho_grid.is_empty() {
        return None;
    }
    let e: Vec<f64> = trace.records.iter().map(|r| r.e_t).collect();
    let g: Vec<f64> = trace.records.iter().map(|r| r.geo_load).collect();
    let per_rho: Vec<RecursionFit> = rho_grid.iter().map(|&rho| fit_rho(rho, &e, &g)).collect();
    let best = *per_rho
        .iter()
        .min_by(|a, b| a.mean_abs_residual.total_cmp(&b.mean_abs_residual))
        .expect("nonempty grid");
    Some(RecursionReport { best, per_rho })
}
