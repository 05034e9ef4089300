use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Monotone schedule of the environment index `τ_t ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathProcess {
    /// `τ_t ≡ tau`.
    Constant { tau: f64 },
    /// Linear from `tau0` at step 0 to `tau1` at the final step.
    LinearRamp { tau0: f64, tau1: f64 },
    /// Linear ramp plus uniform noise of half-width `sigma`, made monotone by a running maximum.
    NoisyRamp { tau0: f64, tau1: f64, sigma: f64 },
    /// Linear from `tau0` to `tau1` over the first `t0` steps, constant afterwards.
    FrozenAfter { tau0: f64, tau1: f64, t0: u64 },
}

impl PathProcess {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let ok = match *self {
            PathProcess::Constant { tau } => unit(tau),
            PathProcess::LinearRamp { tau0, tau1 } => unit(tau0) && unit(tau1) && tau0 <= tau1,
            PathProcess::NoisyRamp { tau0, tau1, sigma } => {
                unit(tau0) && unit(tau1) && tau0 <= tau1 && sigma >= 0.0
            }
            PathProcess::FrozenAfter { tau0, tau1, t0 } => {
                unit(tau0) && unit(tau1) && tau0 <= tau1 && t0 > 0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "invalid path process {self:?}"
            )))
        }
    }

    /// `τ_0, …, τ_{T−1}`; nondecreasing and inside `[0, 1]`.
    pub fn sequence(&self, steps: u64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        self.validate()?;
        let frac = |t: u64| {
            if steps <= 1 {
                0.0
            } else {
                t as f64 / (steps - 1) as f64
            }
        };
        let lin = |a: f64, b: f64, u: f64| if u >= 1.0 { b } else { a + (b - a) * u };
        let mut out = Vec::with_capacity(steps as usize);
        match *self {
            PathProcess::Constant { tau } => out.resize(steps as usize, tau),
            PathProcess::LinearRamp { tau0, tau1 } => {
                out.extend((0..steps).map(|t| lin(tau0, tau1, frac(t))))
            }
            PathProcess::NoisyRamp { tau0, tau1, sigma } => {
                let mut run = tau0;
                for t in 0..steps {
                    let noise = sigma * (2.0 * rng.gen::<f64>() - 1.0);
                    let x = (lin(tau0, tau1, frac(t)) + noise).clamp(tau0, tau1);
                    run = run.max(x);
                    out.push(run);
                }
            }
            PathProcess::FrozenAfter { tau0, tau1, t0 } => {
                out.extend((0..steps).map(|t| lin(tau0, tau1, t.min(t0) as f64 / t0 as f64)))
            }
        }
        Ok(out)
    }
}
