use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{action_gap_masked, greedy_policy, optimal_q, QTable};
use crate::path::MdpPath;

use super::density::trapezoid;

/// An isolated action switch with its integration window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinkRecord {
    pub tau_star: f64,
    pub window: (f64, f64),
    pub min_gap_in_window: f64,
    pub local_phi: f64,
    /// A state whose greedy action differs across the switch.
    pub tied_state: usize,
}

/// Global gap sampled at sorted parameter values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapProfile {
    pub tau: Vec<f64>,
    pub gap: Vec<f64>,
}

impl GapProfile {
    pub fn new(tau: Vec<f64>, gap: Vec<f64>) -> Result<Self> {
        if tau.len() != gap.len() || tau.is_empty() {
            return Err(Error::Dimension(
                "profile needs matching nonempty tau and gap".into(),
            ));
        }
        if tau.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "profile tau must be strictly increasing".into(),
            ));
        }
        Ok(Self { tau, gap })
    }

    /// Linear interpolation, clamped to the sampled range.
    pub fn interpolate(&self, t: f64) -> f64 {
        let n = self.tau.len();
        if t <= self.tau[0] {
            return self.gap[0];
        }
        if t >= self.tau[n - 1] {
            return self.gap[n - 1];
        }
        let j = self.tau.partition_point(|x| *x <= t);
        let (x0, x1) = (self.tau[j - 1], self.tau[j]);
        let w = (t - x0) / (x1 - x0);
        self.gap[j - 1] * (1.0 - w) + self.gap[j] * w
    }

    /// Samples inside `[lo, hi]`, with interpolated values at both ends.
    pub fn restrict(&self, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
        let mut xs = vec![lo];
        let mut ys = vec![self.interpolate(lo)];
        for (t, g) in self.tau.iter().zip(&self.gap) {
            if *t > lo && *t < hi {
                xs.push(*t);
                ys.push(*g);
            }
        }
        xs.push(hi);
        ys.push(self.interpolate(hi));
        (xs, ys)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinkScan {
    pub kinks: Vec<KinkRecord>,
    /// Grid gaps merged with the refined samples inside kink windows.
    pub profile: GapProfile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinkPenalty {
    pub total: f64,
    pub local: Vec<f64>,
}

pub(crate) struct Solved {
    pub q: QTable,
    pub policy: Vec<usize>,
    pub gap: f64,
}

pub(crate) fn solve_point(path: &MdpPath, tau: f64, mask: Option<&[bool]>) -> Result<Solved> {
    let q = optimal_q(&path.evaluate(tau)?)?;
    let gap = action_gap_masked(&q, mask)?.global;
    let policy = greedy_policy(&q).actions;
    Ok(Solved { q, policy, gap })
}

/// Global gap of exactly solved `Q⋆` at each grid point.
pub fn gap_profile(path: &MdpPath, grid: &[f64]) -> Result<Vec<f64>> {
    grid.par_iter()
        .map(|&t| Ok(solve_point(path, t, None)?.gap))
        .collect()
}

pub(crate) struct KinkSettings<'a> {
    pub tie_threshold: f64,
    pub refine_factor: usize,
    pub bisection_tol: f64,
    pub mask: Option<&'a [bool]>,
}

/// Reports kinks where the greedy policy changes between adjacent grid points
/// and the bisected minimum gap falls below `tie_threshold`.
pub fn detect_kinks(path: &MdpPath, grid: &[f64], tie_threshold: f64) -> Result<KinkScan> {
    let solved: Result<Vec<Solved>> = grid
        .par_iter()
        .map(|&t| solve_point(path, t, None))
        .collect();
    let solved = solved?;
    let policies: Vec<Vec<usize>> = solved.iter().map(|s| s.policy.clone()).collect();
    let gaps: Vec<f64> = solved.iter().map(|s| s.gap).collect();
    let settings = KinkSettings {
        tie_threshold,
        refine_factor: 10,
        bisection_tol: 1e-6,
        mask: None,
    };
    detect_from_solved(path, grid, &policies, &gaps, &settings)
}

struct Candidate {
    tau: f64,
    cell: usize,
    min_gap: f64,
    tied_state: usize,
}

pub(crate) fn detect_from_solved(
    path: &MdpPath,
    grid: &[f64],
    policies: &[Vec<usize>],
    gaps: &[f64],
    st: &KinkSettings<'_>,
) -> Result<KinkScan> {
    if !(st.tie_threshold > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tie threshold {}",
            st.tie_threshold
        )));
    }
    if grid.len() < 2 || grid.len() != policies.len() || grid.len() != gaps.len() {
        return Err(Error::Dimension(
            "grid, policies and gaps must align (>= 2 points)".into(),
        ));
    }
    let mut extra: Vec<(f64, f64)> = Vec::new();

    let mut cands: Vec<Candidate> = Vec::new();
    for k in 0..grid.len() - 1 {
        if policies[k] == policies[k + 1] {
            continue;
        }
        let (mut lo, mut hi) = (grid[k], grid[k + 1]);
        let (mut pol_lo, mut pol_hi) = (policies[k].clone(), policies[k + 1].clone());
        let (mut g_lo, mut g_hi) = (gaps[k], gaps[k + 1]);
        while hi - lo > st.bisection_tol {
            let mid = 0.5 * (lo + hi);
            let s = solve_point(path, mid, st.mask)?;
            extra.push((mid, s.gap));
            if s.policy == policies[k] {
                lo = mid;
                pol_lo = s.policy;
                g_lo = s.gap;
            } else {
                hi = mid;
                pol_hi = s.policy;
                g_hi = s.gap;
            }
        }
        let min_gap = g_lo.min(g_hi);
        if min_gap < st.tie_threshold {
            let tied_state = (0..pol_lo.len())
                .find(|&s| pol_lo[s] != pol_hi[s])
                .unwrap_or(0);
            cands.push(Candidate {
                tau: 0.5 * (lo + hi),
                cell: k,
                min_gap,
                tied_state,
            });
        }
    }

    // switches closer than half a cell are one tie seen from both sides of a grid point
    let min_cell = grid
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let mut merged: Vec<Candidate> = Vec::new();
    for c in cands {
        match merged.last_mut() {
            Some(prev) if c.tau - prev.tau <= 0.5 * min_cell => {
                if c.min_gap < prev.min_gap {
                    *prev = Candidate {
                        cell: prev.cell.min(c.cell),
                        ..c
                    };
                }
            }
            _ => merged.push(c),
        }
    }

    let last = grid.len() - 1;
    let mut kinks: Vec<KinkRecord> = merged
        .iter()
        .map(|c| {
            let mut i = c.cell;
            while i > 0 && gaps[i] < st.tie_threshold {
                i -= 1;
            }
            let mut j = c.cell + 1;
            while j < last && gaps[j] < st.tie_threshold {
                j += 1;
            }
            KinkRecord {
                tau_star: c.tau,
                window: (grid[i].min(c.tau), grid[j].max(c.tau)),
                min_gap_in_window: c.min_gap,
                local_phi: 0.0,
                tied_state: c.tied_state,
            }
        })
        .collect();
    for i in 1..kinks.len() {
        if kinks[i - 1].window.1 > kinks[i].window.0 {
            let mid = 0.5 * (kinks[i - 1].tau_star + kinks[i].tau_star);
            kinks[i - 1].window.1 = kinks[i - 1].window.1.min(mid);
            kinks[i].window.0 = kinks[i].window.0.max(mid);
        }
    }

    // denser samples inside each window, where 1/max(g, δ) is stiff
    let step = min_cell / st.refine_factor.max(1) as f64;
    let mut fine: Vec<f64> = Vec::new();
    for k in &kinks {
        let (lo, hi) = k.window;
        let m = ((hi - lo) / step).ceil().max(1.0) as usize;
        fine.extend((1..m).map(|i| lo + (hi - lo) * i as f64 / m as f64));
    }
    let fine_gaps: Result<Vec<f64>> = fine
        .par_iter()
        .map(|&t| Ok(solve_point(path, t, st.mask)?.gap))
        .collect();
    extra.extend(fine.into_iter().zip(fine_gaps?));

    let mut samples: Vec<(f64, f64)> = grid.iter().copied().zip(gaps.iter().copied()).collect();
    samples.extend(extra);
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    samples.dedup_by(|a, b| a.0 == b.0);
    let (tau, gap): (Vec<f64>, Vec<f64>) = samples.into_iter().unzip();
    let profile = GapProfile::new(tau, gap)?;

    for k in &mut kinks {
        let (_, ys) = profile.restrict(k.window.0, k.window.1);
        k.min_gap_in_window = ys.iter().copied().fold(k.min_gap_in_window, f64::min);
    }
    Ok(KinkScan { kinks, profile })
}

/// `Φ = Σ_i ∫_{window_i} dτ / max(g_τ, δ)` by trapezoid quadrature on the profile.
pub fn kink_penalty(kinks: &[KinkRecord], profile: &GapProfile, delta: f64) -> Result<KinkPenalty> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "delta {delta} must be positive"
        )));
    }
    let mut order: Vec<&KinkRecord> = kinks.iter().collect();
    order.sort_by(|a, b| a.window.0.total_cmp(&b.window.0));
    for w in order.windows(2) {
        let (a, b) = (w[0].window, w[1].window);
        if a.1 > b.0 {
            return Err(Error::OverlappingWindows(a.0, a.1, b.0, b.1));
        }
    }
    let local: Vec<f64> = kinks
        .iter()
        .map(|k| {
            let (xs, gs) = profile.restrict(k.window.0, k.window.1);
            let ys: Vec<f64> = gs.iter().map(|g| 1.0 / g.max(delta)).collect();
            trapezoid(&xs, &ys)
        })
        .collect();
    Ok(KinkPenalty {
        total: local.iter().sum(),
        local,
    })
}
