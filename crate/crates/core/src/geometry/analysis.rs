use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::QTable;
use crate::path::{path_speed_terms, MdpPath, SpeedTerms};

use super::density::{
    curvature_density_from, density_constants, speed_density_from, uniform_grid, DEFAULT_C2,
};
use super::kinks::{
    detect_from_solved, kink_penalty, solve_point, GapProfile, KinkPenalty, KinkRecord,
    KinkSettings,
};

fn default_grid() -> usize {
    201
}

fn default_refine() -> usize {
    10
}

fn default_bisection() -> f64 {
    1e-6
}

fn default_c2() -> f64 {
    DEFAULT_C2
}

/// Settings for [`PathGeometry::analyze`]. Unset thresholds take
/// scale-relative defaults (see [`ResolvedConstants`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    #[serde(default = "default_grid")]
    pub grid: usize,
    /// Floor in the kink penalty; default `1e-3 · reward_range / (1 − γ)`.
    #[serde(default)]
    pub delta: Option<f64>,
    /// Regular-region gap margin; default `0.05 · max grid gap`.
    #[serde(default)]
    pub xi: Option<f64>,
    /// Gap level below which a policy switch counts as a kink; default `xi`.
    #[serde(default)]
    pub tie_threshold: Option<f64>,
    #[serde(default = "default_refine")]
    pub refine_factor: usize,
    #[serde(default = "default_bisection")]
    pub bisection_tol: f64,
    #[serde(default = "default_c2")]
    pub c2: f64,
    /// States entering the global gap; all states when unset.
    #[serde(default)]
    pub state_mask: Option<Vec<bool>>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            grid: default_grid(),
            delta: None,
            xi: None,
            tie_threshold: None,
            refine_factor: default_refine(),
            bisection_tol: default_bisection(),
            c2: default_c2(),
            state_mask: None,
        }
    }
}

/// Constants used by a geometry analysis, after defaults are applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConstants {
    #[serde(rename = "C_mix")]
    pub c_mix: f64,
    #[serde(rename = "L_s")]
    pub l_s: f64,
    #[serde(rename = "L_r")]
    pub reward_lipschitz: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub delta: f64,
    pub xi: f64,
    pub tie_threshold: f64,
    pub c2: f64,
    /// Multiplier `C = 2 · reward_range / (1 − γ)` applied to `Φ` in the value bound.
    pub phi_constant: f64,
    pub reward_range: f64,
}

/// Exact solve and derivative norms at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub tau: f64,
    pub q: QTable,
    pub policy: Vec<usize>,
    pub gap: f64,
    pub terms: SpeedTerms,
    /// Speed density `v_τ`.
    pub speed: f64,
    /// Curvature density `κ_τ`.
    pub kappa: f64,
    pub pl_density: f64,
    pub curv_density: f64,
}

/// Decomposition of the path-integral value bound on one interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueBound {
    pub bound: f64,
    pub pl_term: f64,
    pub curv_term: f64,
    pub phi_term: f64,
    pub pl: f64,
    pub curv: f64,
    pub phi: f64,
}

/// JSON form of a geometry analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometrySummary {
    pub grid: Vec<f64>,
    pub pl_density: Vec<f64>,
    pub curv_density: Vec<f64>,
    pub speed_density: Vec<f64>,
    pub curvature_density: Vec<f64>,
    pub gap: Vec<f64>,
    #[serde(rename = "PL")]
    pub pl: f64,
    #[serde(rename = "Curv")]
    pub curv: f64,
    #[serde(rename = "Phi")]
    pub phi: f64,
    pub kinks: Vec<KinkRecord>,
    pub constants: ResolvedConstants,
}

/// Grid solves, densities, kinks and prefix integrals for one path on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct PathGeometry {
    path: MdpPath,
    constants: ResolvedConstants,
    points: Vec<GridPoint>,
    kinks: Vec<KinkRecord>,
    profile: GapProfile,
    cum_pl: Vec<f64>,
    cum_curv: Vec<f64>,
    cum_speed: Vec<f64>,
    cum_kappa: Vec<f64>,
    mask: Option<Vec<bool>>,
}

fn prefix_trapezoid(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..x.len() {
        acc += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
        out.push(acc);
    }
    out
}

impl PathGeometry {
    pub fn analyze(path: &MdpPath, config: &GeometryConfig) -> Result<Self> {
        let grid = uniform_grid(0.0, 1.0, config.grid)?;
        Self::analyze_on(path, grid, config)
    }

    /// Analysis on an explicit sorted grid.
    pub fn analyze_on(path: &MdpPath, grid: Vec<f64>, config: &GeometryConfig) -> Result<Self> {
        if grid.len() < 2 || grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "grid must be strictly increasing with >= 2 points".into(),
            ));
        }
        if !(config.c2 >= 0.0) {
            return Err(Error::InvalidParameter(format!("c2 = {}", config.c2)));
        }
        let mask = config.state_mask.clone();
        if let Some(m) = &mask {
            if m.len() != path.n_states() {
                return Err(Error::Dimension(
                    "state mask length differs from n_states".into(),
                ));
            }
        }
        let gamma = path.discount();
        let (c_mix, l_s) = density_constants(path)?;
        let (reward_lipschitz, kappa) = match path.mixing_certificate() {
            Ok(c) => (c.reward_lipschitz, c.kappa),
            Err(_) => (f64::NAN, f64::NAN),
        };

        struct Raw {
            q: QTable,
            policy: Vec<usize>,
            gap: f64,
            terms: SpeedTerms,
            r_min: f64,
            r_max: f64,
        }
        let raw: Result<Vec<Raw>> = grid
            .par_iter()
            .map(|&t| {
                let s = solve_point(path, t, mask.as_deref())?;
                let mdp = path.evaluate(t)?;
                let r_min = mdp.rewards().iter().copied().fold(f64::INFINITY, f64::min);
                let r_max = mdp
                    .rewards()
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max);
                Ok(Raw {
                    q: s.q,
                    policy: s.policy,
                    gap: s.gap,
                    terms: path_speed_terms(path, t)?,
                    r_min,
                    r_max,
                })
            })
            .collect();
        let raw = raw?;

        let r_min = raw.iter().map(|r| r.r_min).fold(f64::INFINITY, f64::min);
        let r_max = raw
            .iter()
            .map(|r| r.r_max)
            .fold(f64::NEG_INFINITY, f64::max);
        let reward_range = r_max - r_min;
        let max_gap = raw.iter().map(|r| r.gap).fold(0.0, f64::max);
        let xi = config.xi.unwrap_or(0.05 * max_gap);
        let tie_threshold = config.tie_threshold.unwrap_or(xi).max(1e-12);
        let delta = match config.delta {
            Some(d) => d,
            None if reward_range > 0.0 => 1e-3 * reward_range / (1.0 - gamma),
            None => 1e-3,
        };
        if !(delta > 0.0) || !(xi >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "delta = {delta}, xi = {xi}"
            )));
        }
        let constants = ResolvedConstants {
            c_mix,
            l_s,
            reward_lipschitz,
            kappa,
            gamma,
            delta,
            xi,
            tie_threshold,
            c2: config.c2,
            phi_constant: 2.0 * reward_range / (1.0 - gamma),
            reward_range,
        };

        let policies: Vec<Vec<usize>> = raw.iter().map(|r| r.policy.clone()).collect();
        let gaps: Vec<f64> = raw.iter().map(|r| r.gap).collect();
        let settings = KinkSettings {
            tie_threshold,
            refine_factor: config.refine_factor,
            bisection_tol: config.bisection_tol,
            mask: mask.as_deref(),
        };
        let scan = detect_from_solved(path, &grid, &policies, &gaps, &settings)?;
        let mut kinks = scan.kinks;
        let penalty = kink_penalty(&kinks, &scan.profile, delta)?;
        for (k, phi) in kinks.iter_mut().zip(&penalty.local) {
            k.local_phi = *phi;
        }

        let points: Vec<GridPoint> = grid
            .iter()
            .zip(raw)
            .map(|(&tau, r)| GridPoint {
                tau,
                speed: speed_density_from(&r.terms, gamma, c_mix),
                kappa: curvature_density_from(&r.terms, gamma, c_mix, l_s, config.c2),
                pl_density: r.terms.dr_inf + l_s * r.terms.dp_w1,
                curv_density: r.terms.ddr_inf + l_s * r.terms.ddp_w1,
                q: r.q,
                policy: r.policy,
                gap: r.gap,
                terms: r.terms,
            })
            .collect();
        let col = |f: fn(&GridPoint) -> f64| -> Vec<f64> { points.iter().map(f).collect() };
        let cum_pl = prefix_trapezoid(&grid, &col(|p| p.pl_density));
        let cum_curv = prefix_trapezoid(&grid, &col(|p| p.curv_density));
        let cum_speed = prefix_trapezoid(&grid, &col(|p| p.speed));
        let cum_kappa = prefix_trapezoid(&grid, &col(|p| p.kappa));

        Ok(Self {
            path: path.clone(),
            constants,
            points,
            kinks,
            profile: scan.profile,
            cum_pl,
            cum_curv,
            cum_speed,
            cum_kappa,
            mask,
        })
    }

    pub fn path(&self) -> &MdpPath {
        &self.path
    }

    pub fn constants(&self) -> &ResolvedConstants {
        &self.constants
    }

    pub fn points(&self) -> &[GridPoint] {
        &self.points
    }

    pub fn grid(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.tau).collect()
    }

    pub fn kinks(&self) -> &[KinkRecord] {
        &self.kinks
    }

    /// Grid gaps merged with refined samples inside kink windows.
    pub fn profile(&self) -> &GapProfile {
        &self.profile
    }

    pub(crate) fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    /// Index of the grid point equal to `tau`, if any.
    pub fn grid_index(&self, tau: f64) -> Option<usize> {
        let i = self.points.partition_point(|p| p.tau < tau);
        (i < self.points.len() && self.points[i].tau == tau).then_some(i)
    }

    fn start(&self) -> f64 {
        self.points[0].tau
    }

    fn end(&self) -> f64 {
        self.points[self.points.len() - 1].tau
    }

    /// Prefix integral of a grid density up to `tau`, linear between grid points.
    fn cumulative(&self, cum: &[f64], density: impl Fn(&GridPoint) -> f64, tau: f64) -> f64 {
        let t = tau.clamp(self.start(), self.end());
        let j = self
            .points
            .partition_point(|p| p.tau <= t)
            .saturating_sub(1);
        if j + 1 >= self.points.len() {
            return cum[cum.len() - 1];
        }
        let (a, b) = (&self.points[j], &self.points[j + 1]);
        let w = (t - a.tau) / (b.tau - a.tau);
        let ya = density(a);
        let yt = ya * (1.0 - w) + density(b) * w;
        cum[j] + 0.5 * (t - a.tau) * (ya + yt)
    }

    pub fn pl(&self, tau0: f64, tau1: f64) -> f64 {
        self.cumulative(&self.cum_pl, |p| p.pl_density, tau1)
            - self.cumulative(&self.cum_pl, |p| p.pl_density, tau0)
    }

    pub fn curv(&self, tau0: f64, tau1: f64) -> f64 {
        self.cumulative(&self.cum_curv, |p| p.curv_density, tau1)
            - self.cumulative(&self.cum_curv, |p| p.curv_density, tau0)
    }

    /// `∫ v` between two parameters (grid quadrature).
    pub fn speed_integral(&self, tau0: f64, tau1: f64) -> f64 {
        self.cumulative(&self.cum_speed, |p| p.speed, tau1)
            - self.cumulative(&self.cum_speed, |p| p.speed, tau0)
    }

    /// `∫ κ` between two parameters (grid quadrature).
    pub fn kappa_integral(&self, tau0: f64, tau1: f64) -> f64 {
        self.cumulative(&self.cum_kappa, |p| p.kappa, tau1)
            - self.cumulative(&self.cum_kappa, |p| p.kappa, tau0)
    }

    pub fn total_pl(&self) -> f64 {
        self.cum_pl[self.cum_pl.len() - 1]
    }

    pub fn total_curv(&self) -> f64 {
        self.cum_curv[self.cum_curv.len() - 1]
    }

    pub fn total_phi(&self) -> f64 {
        self.kinks.iter().map(|k| k.local_phi).sum()
    }

    /// Kink penalty of the detected windows under another floor `δ`.
    pub fn phi_for_delta(&self, delta: f64) -> Result<KinkPenalty> {
        kink_penalty(&self.kinks, &self.profile, delta)
    }

    /// `Φ` over kinks with `τ⋆ ∈ (τ0, τ1]`.
    pub fn phi(&self, tau0: f64, tau1: f64) -> f64 {
        self.kinks
            .iter()
            .filter(|k| k.tau_star > tau0 && k.tau_star <= tau1)
            .map(|k| k.local_phi)
            .sum::<f64>()
            + 0.0
    }

    /// `PL/(1−γ)² + Curv/(1−γ)³ + C·Φ` restricted to `[τ0, τ1]`.
    pub fn value_bound(&self, tau0: f64, tau1: f64) -> Result<ValueBound> {
        if !(tau0 <= tau1) {
            return Err(Error::InvalidParameter(format!(
                "need tau0 <= tau1, got {tau0} > {tau1}"
            )));
        }
        let k = 1.0 - self.constants.gamma;
        let pl = self.pl(tau0, tau1).max(0.0);
        let curv = self.curv(tau0, tau1).max(0.0);
        let phi = self.phi(tau0, tau1);
        let pl_term = pl / (k * k);
        let curv_term = curv / (k * k * k);
        let phi_term = self.constants.phi_constant * phi + 0.0;
        Ok(ValueBound {
            bound: pl_term + curv_term + phi_term,
            pl_term,
            curv_term,
            phi_term,
            pl,
            curv,
            phi,
        })
    }

    /// `‖Q⋆_{τ_j} − Q⋆_{τ_i}‖∞` between grid points.
    pub fn true_drift(&self, i: usize, j: usize) -> f64 {
        self.points[i].q.sup_distance(&self.points[j].q)
    }

    /// Kink window strictly containing `tau`, if any.
    pub fn kink_window_containing(&self, tau: f64) -> Option<&KinkRecord> {
        self.kinks
            .iter()
            .find(|k| k.window.0 < tau && tau < k.window.1)
    }

    /// Regular component (the span between neighbouring kink windows) containing `tau`.
    pub fn component(&self, tau: f64) -> Result<(f64, f64)> {
        if tau < self.start() || tau > self.end() || self.kink_window_containing(tau).is_some() {
            return Err(Error::NonRegular(tau));
        }
        let lo = self
            .kinks
            .iter()
            .map(|k| k.window.1)
            .filter(|h| *h <= tau)
            .fold(self.start(), f64::max);
        let hi = self
            .kinks
            .iter()
            .map(|k| k.window.0)
            .filter(|l| *l >= tau)
            .fold(self.end(), f64::min);
        Ok((lo, hi))
    }

    /// `(v_τ, κ_τ)` at any parameter, reusing grid values when possible.
    pub fn densities_at(&self, tau: f64) -> Result<(f64, f64)> {
        if let Some(i) = self.grid_index(tau) {
            return Ok((self.points[i].speed, self.points[i].kappa));
        }
        let c = &self.constants;
        let t = path_speed_terms(&self.path, tau)?;
        Ok((
            speed_density_from(&t, c.gamma, c.c_mix),
            curvature_density_from(&t, c.gamma, c.c_mix, c.l_s, c.c2),
        ))
    }

    /// Exact `Q⋆` and gap at any parameter, reusing grid solves when possible.
    pub fn solve_at(&self, tau: f64) -> Result<(QTable, f64)> {
        if let Some(i) = self.grid_index(tau) {
            return Ok((self.points[i].q.clone(), self.points[i].gap));
        }
        let s = solve_point(&self.path, tau, self.mask())?;
        Ok((s.q, s.gap))
    }

    pub fn summary(&self) -> GeometrySummary {
        let col = |f: fn(&GridPoint) -> f64| -> Vec<f64> { self.points.iter().map(f).collect() };
        GeometrySummary {
            grid: self.grid(),
            pl_density: col(|p| p.pl_density),
            curv_density: col(|p| p.curv_density),
            speed_density: col(|p| p.speed),
            curvature_density: col(|p| p.kappa),
            gap: col(|p| p.gap),
            pl: self.total_pl(),
            curv: self.total_curv(),
            phi: self.total_phi(),
            kinks: self.kinks.clone(),
            constants: self.constants,
        }
    }
}
