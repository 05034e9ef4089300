use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mdp::{optimal_q, policy_state_values, FiniteMdp, Policy, QTable};
use crate::path::MdpPath;

/// Exact solution at one snapped parameter.
#[derive(Debug, Clone)]
pub struct Solution {
    pub tau: f64,
    pub mdp: FiniteMdp,
    pub q: QTable,
    pub v: Vec<f64>,
}

/// Memoized exact `Q⋆` on a snapped `τ` grid, with policy regret against a
/// fixed initial distribution `d₀`.
#[derive(Debug, Clone)]
pub struct Oracle {
    path: MdpPath,
    snap: f64,
    d0: Vec<f64>,
    cache: HashMap<i64, Arc<Solution>>,
    last_eval: Option<(i64, Vec<usize>, f64)>,
}

impl Oracle {
    /// Uniform `d₀`.
    pub fn new(path: MdpPath, snap: f64) -> Result<Self> {
        let n = path.n_states();
        Self::with_initial(path, snap, vec![1.0 / n as f64; n])
    }

    pub fn with_initial(path: MdpPath, snap: f64, d0: Vec<f64>) -> Result<Self> {
        if !(snap > 0.0 && snap <= 1.0) {
            return Err(Error::InvalidParameter(format!("snap {snap}")));
        }
        if d0.len() != path.n_states()
            || d0.iter().any(|p| !(*p >= 0.0))
            || (d0.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::InvalidParameter(
                "d0 must be a distribution over states".into(),
            ));
        }
        Ok(Self {
            path,
            snap,
            d0,
            cache: HashMap::new(),
            last_eval: None,
        })
    }

    fn key(&self, tau: f64) -> i64 {
        (tau / self.snap).round() as i64
    }

    /// Snapped parameter for `tau`.
    pub fn snapped(&self, tau: f64) -> f64 {
        (self.key(tau) as f64 * self.snap).clamp(0.0, 1.0)
    }

    pub fn solution(&mut self, tau: f64) -> Result<Arc<Solution>> {
        let k = self.key(tau);
        if let Some(s) = self.cache.get(&k) {
            return Ok(s.clone());
        }
        let t = self.snapped(tau);
        let mdp = self.path.evaluate(t)?;
        let q = optimal_q(&mdp)?;
        let v = q.state_values().values;
        let s = Arc::new(Solution { tau: t, mdp, q, v });
        self.cache.insert(k, s.clone());
        Ok(s)
    }

    /// `‖Q − Q⋆_τ‖∞`.
    pub fn tracking_error(&mut self, tau: f64, q: &QTable) -> Result<f64> {
        Ok(self.solution(tau)?.q.sup_distance(q))
    }

    /// `⟨d₀, V⋆_τ − V^π_τ⟩` by exact policy evaluation.
    pub fn regret(&mut self, tau: f64, pi: &Policy) -> Result<f64> {
        let k = self.key(tau);
        if let Some((lk, la, r)) = &self.last_eval {
            if *lk == k && *la == pi.actions {
                return Ok(*r);
            }
        }
        let sol = self.solution(tau)?;
        let vpi = policy_state_values(&sol.mdp, pi)?;
        let r = self
            .d0
            .iter()
            .zip(sol.v.iter().zip(&vpi.values))
            .map(|(d, (a, b))| d * (a - b))
            .sum();
        self.last_eval = Some((k, pi.actions.clone(), r));
        Ok(r)
    }
}
