use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::analysis::PathGeometry;

/// Which budget the tube enforces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TubeOrder {
    /// `∫ v ≤ ε`.
    First,
    /// `∫ v + ½ |τ − τ0| ∫ κ ≤ ε`.
    Second,
}

/// Largest interval around `τ0` inside one regular component whose
/// integrated density budget stays within `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubeResult {
    pub tau0: f64,
    pub budget_eps: f64,
    pub interval: (f64, f64),
    pub order: TubeOrder,
    pub component: (f64, f64),
}

/// Tube together with where the greedy policy is provably or empirically stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafeRegion {
    pub tube: TubeResult,
    pub xi: f64,
    pub gap_at_tau0: f64,
    /// Maximal runs of grid points inside the tube whose exact gap is at least `ξ`.
    pub measured: Vec<(f64, f64)>,
    /// Sub-interval where `g0 − 2 ∫v ≥ ξ`; `None` when `g0 < ξ`.
    pub certified: Option<(f64, f64)>,
    /// Set when `g0 < ξ + 2ε`, i.e. the tube budget can close the gap margin.
    pub warning: bool,
}

/// Tube coverage check against exact solves on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubeCoverage {
    pub checked: usize,
    pub violations: usize,
    pub max_deviation: f64,
}

const BISECTION_STEPS: usize = 100;

impl PathGeometry {
    /// Feasible tube `{τ : budget(τ0, τ) ≤ ε}` grown outward from `τ0`, with
    /// densities linear between samples; it never leaves the regular component.
    pub fn tube(&self, tau0: f64, eps: f64, order: TubeOrder) -> Result<TubeResult> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::InvalidParameter(format!("tube budget {eps}")));
        }
        let component = self.component(tau0)?;
        let (v0, k0) = self.densities_at(tau0)?;
        let lo = self.tube_side(tau0, v0, k0, eps, order, component.0)?;
        let hi = self.tube_side(tau0, v0, k0, eps, order, component.1)?;
        Ok(TubeResult {
            tau0,
            budget_eps: eps,
            interval: (lo, hi),
            order,
            component,
        })
    }

    fn tube_side(
        &self,
        tau0: f64,
        v0: f64,
        k0: f64,
        eps: f64,
        order: TubeOrder,
        edge: f64,
    ) -> Result<f64> {
        if edge == tau0 {
            return Ok(tau0);
        }
        let dir = if edge > tau0 { 1.0 } else { -1.0 };
        let mut samples: Vec<(f64, f64, f64)> = vec![(0.0, v0, k0)];
        for p in self.points() {
            let x = dir * (p.tau - tau0);
            if x > 0.0 && x < dir * (edge - tau0) {
                samples.push((x, p.speed, p.kappa));
            }
        }
        if dir < 0.0 {
            samples[1..].reverse();
        }
        let (ve, ke) = self.densities_at(edge)?;
        samples.push((dir * (edge - tau0), ve, ke));

        let second = matches!(order, TubeOrder::Second);
        let (mut v_int, mut k_int) = (0.0, 0.0);
        for w in samples.windows(2) {
            let ((xa, va, ka), (xb, vb, kb)) = (w[0], w[1]);
            let span = xb - xa;
            let budget = |t: f64| {
                let vi = v_int + va * t + (vb - va) * t * t / (2.0 * span);
                let ki = k_int + ka * t + (kb - ka) * t * t / (2.0 * span);
                if second {
                    vi + 0.5 * (xa + t) * ki
                } else {
                    vi
                }
            };
            if budget(span) <= eps {
                v_int += 0.5 * span * (va + vb);
                k_int += 0.5 * span * (ka + kb);
                continue;
            }
            let (mut lo, mut hi) = (0.0, span);
            for _ in 0..BISECTION_STEPS {
                let mid = 0.5 * (lo + hi);
                if budget(mid) <= eps {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Ok(tau0 + dir * (xa + lo));
        }
        Ok(edge)
    }

    /// Compares `‖Q⋆_τ − Q⋆_{τ0}‖∞` with the tube budget at every grid point in the tube.
    pub fn tube_coverage(&self, tube: &TubeResult) -> Result<TubeCoverage> {
        let (q0, _) = self.solve_at(tube.tau0)?;
        let mut cov = TubeCoverage {
            checked: 0,
            violations: 0,
            max_deviation: 0.0,
        };
        for p in self.points() {
            if p.tau < tube.interval.0 || p.tau > tube.interval.1 {
                continue;
            }
            let d = p.q.sup_distance(&q0);
            cov.checked += 1;
            cov.max_deviation = cov.max_deviation.max(d);
            if d > tube.budget_eps + 1e-9 {
                cov.violations += 1;
            }
        }
        Ok(cov)
    }

    /// Tube plus measured and certified gap-safe sub-intervals; `xi` defaults
    /// to the analysis margin.
    pub fn gap_safe_region(
        &self,
        tau0: f64,
        eps: f64,
        order: TubeOrder,
        xi: Option<f64>,
    ) -> Result<SafeRegion> {
        let xi = xi.unwrap_or(self.constants().xi);
        if !(xi >= 0.0) {
            return Err(Error::InvalidParameter(format!("xi = {xi}")));
        }
        let tube = self.tube(tau0, eps, order)?;
        let (_, g0) = self.solve_at(tau0)?;

        let mut measured: Vec<(f64, f64)> = Vec::new();
        let mut run: Option<(f64, f64)> = None;
        for p in self.points() {
            if p.tau < tube.interval.0 || p.tau > tube.interval.1 {
                continue;
            }
            if p.gap >= xi {
                run = Some(run.map_or((p.tau, p.tau), |(a, _)| (a, p.tau)));
            } else if let Some(r) = run.take() {
                measured.push(r);
            }
        }
        measured.extend(run);

        let margin = 0.5 * (g0 - xi);
        let certified = if margin >= 0.0 {
            let inner = self.tube(tau0, eps.min(margin), TubeOrder::First)?;
            let lo = inner.interval.0.max(tube.interval.0);
            let hi = inner.interval.1.min(tube.interval.1);
            (lo <= hi).then_some((lo, hi))
        } else {
            None
        };
        Ok(SafeRegion {
            tube,
            xi,
            gap_at_tau0: g0,
            measured,
            certified,
            warning: g0 < xi + 2.0 * eps,
        })
    }
}
