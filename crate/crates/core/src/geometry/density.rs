use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mdp::{action_gap, greedy_policy, optimal_q, QTable, Resolvent};
use crate::path::{path_derivatives, path_speed_terms, MdpPath, PathDerivatives, SpeedTerms};

/// Constant in the first-order term of the curvature density.
pub const DEFAULT_C2: f64 = 2.0;

/// `‖∂r‖∞/(1−γ) + γ C_mix/(1−γ)² · sup‖∂P‖_W1*`.
pub fn speed_density_from(t: &SpeedTerms, gamma: f64, c_mix: f64) -> f64 {
    let k = 1.0 - gamma;
    t.dr_inf / k + gamma * c_mix / (k * k) * t.dp_w1
}

/// `‖∂²r‖∞/(1−γ) + γ C_mix L_s/(1−γ)² · sup‖∂²P‖ + c₂/(1−γ)³ · (‖∂r‖∞ + L_s sup‖∂P‖)`.
pub fn curvature_density_from(t: &SpeedTerms, gamma: f64, c_mix: f64, l_s: f64, c2: f64) -> f64 {
    let k = 1.0 - gamma;
    t.ddr_inf / k
        + gamma * c_mix / (k * k) * l_s * t.ddp_w1
        + c2 / (k * k * k) * (t.dr_inf + l_s * t.dp_w1)
}

/// `(C_mix, L_s)`; an explicit `L_s` stands in for `C_mix` when the mixing
/// certificate cannot be established.
pub(crate) fn density_constants(path: &MdpPath) -> Result<(f64, f64)> {
    match path.mixing_certificate() {
        Ok(cert) => Ok((cert.c_mix, path.l_s()?)),
        Err(e) => match path.l_s() {
            Ok(l_s) => Ok((l_s, l_s)),
            Err(_) => Err(e),
        },
    }
}

pub fn speed_density(path: &MdpPath, tau: f64) -> Result<f64> {
    let (c_mix, _) = density_constants(path)?;
    Ok(speed_density_from(
        &path_speed_terms(path, tau)?,
        path.discount(),
        c_mix,
    ))
}

pub fn curvature_density(path: &MdpPath, tau: f64) -> Result<f64> {
    let (c_mix, l_s) = density_constants(path)?;
    let t = path_speed_terms(path, tau)?;
    Ok(curvature_density_from(
        &t,
        path.discount(),
        c_mix,
        l_s,
        DEFAULT_C2,
    ))
}

/// `k` equally spaced points from `a` to `b`, both included exactly.
pub fn uniform_grid(a: f64, b: f64, k: usize) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!(
            "grid needs at least 2 points, got {k}"
        )));
    }
    if !(a < b) {
        return Err(Error::InvalidParameter(format!(
            "empty interval [{a}, {b}]"
        )));
    }
    let mut g: Vec<f64> = (0..k)
        .map(|i| a + (b - a) * i as f64 / (k - 1) as f64)
        .collect();
    g[k - 1] = b;
    Ok(g)
}

/// Composite trapezoid rule on sorted abscissae.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

fn integrate_terms(
    path: &MdpPath,
    tau0: f64,
    tau1: f64,
    grid: usize,
    f: impl Fn(&SpeedTerms, f64) -> f64 + Sync,
) -> Result<f64> {
    let xs = uniform_grid(tau0, tau1, grid)?;
    let l_s = path.l_s()?;
    let ys: Result<Vec<f64>> = xs
        .par_iter()
        .map(|&t| Ok(f(&path_speed_terms(path, t)?, l_s)))
        .collect();
    Ok(trapezoid(&xs, &ys?))
}

/// `∫ (‖∂r‖∞ + L_s sup‖∂P‖_W1*) dτ` by trapezoid quadrature on `grid` points.
pub fn path_length(path: &MdpPath, tau0: f64, tau1: f64, grid: usize) -> Result<f64> {
    integrate_terms(path, tau0, tau1, grid, |t, l_s| t.dr_inf + l_s * t.dp_w1)
}

/// `∫ (‖∂²r‖∞ + L_s sup‖∂²P‖_W1*) dτ` by trapezoid quadrature on `grid` points.
pub fn curvature(path: &MdpPath, tau0: f64, tau1: f64, grid: usize) -> Result<f64> {
    integrate_terms(path, tau0, tau1, grid, |t, l_s| t.ddr_inf + l_s * t.ddp_w1)
}

/// `dQ⋆/dτ` together with the speed-density bound on its sup norm.
#[derive(Debug, Clone, PartialEq)]
pub struct QDerivative {
    pub dq: QTable,
    pub bound: f64,
    pub gap: f64,
}

struct RegularPoint {
    q: QTable,
    resolvent: Resolvent,
    values: Vec<f64>,
    policy: Vec<usize>,
    derivs: PathDerivatives,
    gap: f64,
}

fn regular_point(path: &MdpPath, tau: f64, xi: f64) -> Result<RegularPoint> {
    let mdp = path.evaluate(tau)?;
    let q = optimal_q(&mdp)?;
    let gap = action_gap(&q)?.global;
    if !(gap > 0.0 && gap >= xi) {
        return Err(Error::NonRegular(tau));
    }
    let pi = greedy_policy(&q);
    let resolvent = Resolvent::new(&mdp, &pi)?;
    let values = q.state_values().values;
    Ok(RegularPoint {
        q,
        resolvent,
        values,
        policy: pi.actions,
        derivs: path_derivatives(path, tau)?,
        gap,
    })
}

/// `∫ f d(row)` for each state-action row of a kernel derivative.
fn kernel_action(rows: &[f64], f: &[f64]) -> Vec<f64> {
    rows.chunks(f.len())
        .map(|row| row.iter().zip(f).map(|(p, v)| p * v).sum())
        .collect()
}

/// First-order fixed-point derivative `R^{π⋆}(∂r + γ Δ)` with
/// `Δ(s,a) = ∫ V⋆ d(∂P(·|s,a))`. Requires a global gap of at least `xi`.
pub fn q_path_derivative(path: &MdpPath, tau: f64, xi: f64) -> Result<QDerivative> {
    let p = regular_point(path, tau, xi)?;
    let gamma = path.discount();
    let delta = kernel_action(&p.derivs.dp, &p.values);
    let x: Vec<f64> = p
        .derivs
        .dr
        .iter()
        .zip(&delta)
        .map(|(r, d)| r + gamma * d)
        .collect();
    let y = p.resolvent.apply(&x)?;
    let (c_mix, _) = density_constants(path)?;
    let terms = crate::path::speed_terms_of(&p.derivs, path.metric())?;
    Ok(QDerivative {
        dq: QTable::from_values(p.q.n_states(), p.q.n_actions(), y)?,
        bound: speed_density_from(&terms, gamma, c_mix),
        gap: p.gap,
    })
}

/// Second-order fixed-point derivative
/// `R^{π⋆}(∂²r + γ ∫V⋆ d∂²P + 2γ ∫V' d∂P)` with `V'(s) = Q'(s, π⋆(s))`.
pub fn q_path_second_derivative(path: &MdpPath, tau: f64, xi: f64) -> Result<QTable> {
    let p = regular_point(path, tau, xi)?;
    let gamma = path.discount();
    let (ns, na) = (p.q.n_states(), p.q.n_actions());
    let delta = kernel_action(&p.derivs.dp, &p.values);
    let x1: Vec<f64> = p
        .derivs
        .dr
        .iter()
        .zip(&delta)
        .map(|(r, d)| r + gamma * d)
        .collect();
    let q1 = p.resolvent.apply(&x1)?;
    let v1: Vec<f64> = (0..ns).map(|s| q1[s * na + p.policy[s]]).collect();
    let delta2 = kernel_action(&p.derivs.ddp, &p.values);
    let cross = kernel_action(&p.derivs.dp, &v1);
    let x2: Vec<f64> = (0..ns * na)
        .map(|i| p.derivs.ddr[i] + gamma * delta2[i] + 2.0 * gamma * cross[i])
        .collect();
    QTable::from_values(ns, na, p.resolvent.apply(&x2)?)
}
