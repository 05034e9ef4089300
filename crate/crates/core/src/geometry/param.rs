use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mdp::{action_gap, greedy_policy, optimal_q, FiniteMdp, QTable, Resolvent};
use crate::path::{ring_mdp, MdpPath};

/// Smooth map `θ ↦ M_θ` on a finite-dimensional parameter space.
pub trait ParamFamily: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn evaluate(&self, theta: &[f64]) -> Result<FiniteMdp>;

    /// Central difference step along a unit-sup direction.
    fn fd_step(&self) -> f64 {
        1e-4
    }
}

/// One-dimensional family `θ = [τ]` over a path.
#[derive(Debug, Clone)]
pub struct PathParamFamily {
    path: MdpPath,
}

impl PathParamFamily {
    pub fn new(path: MdpPath) -> Self {
        Self { path }
    }
}

impl ParamFamily for PathParamFamily {
    fn dim(&self) -> usize {
        1
    }

    fn evaluate(&self, theta: &[f64]) -> Result<FiniteMdp> {
        if theta.len() != 1 {
            return Err(Error::Dimension(format!(
                "expected 1 parameter, got {}",
                theta.len()
            )));
        }
        self.path.evaluate(theta[0])
    }
}

/// Ring MDPs with `θ = [c, w_L, w_N, w_R]` (bump center and action weights).
#[derive(Debug, Clone, PartialEq)]
pub struct RingParamFamily {
    pub n: usize,
    pub gamma: f64,
    pub sigma: f64,
    pub epsilon_mix: f64,
}

impl ParamFamily for RingParamFamily {
    fn dim(&self) -> usize {
        4
    }

    fn evaluate(&self, theta: &[f64]) -> Result<FiniteMdp> {
        if theta.len() != 4 {
            return Err(Error::Dimension(format!(
                "expected 4 parameters, got {}",
                theta.len()
            )));
        }
        ring_mdp(
            self.n,
            self.epsilon_mix,
            self.gamma,
            theta[0],
            self.sigma,
            &theta[1..],
        )
    }
}

fn check_theta(family: &dyn ParamFamily, theta: &[f64]) -> Result<()> {
    if theta.len() != family.dim() {
        return Err(Error::Dimension(format!(
            "theta has {} entries, family dim {}",
            theta.len(),
            family.dim()
        )));
    }
    Ok(())
}

struct Anchor {
    mdp: FiniteMdp,
    q: QTable,
    resolvent: Resolvent,
    values: Vec<f64>,
}

fn anchor(family: &dyn ParamFamily, theta: &[f64], xi: f64) -> Result<Anchor> {
    check_theta(family, theta)?;
    let mdp = family.evaluate(theta)?;
    let q = optimal_q(&mdp)?;
    let gap = action_gap(&q)?.global;
    if !(gap > 0.0 && gap >= xi) {
        return Err(Error::NonRegular(gap));
    }
    let resolvent = Resolvent::new(&mdp, &greedy_policy(&q))?;
    let values = q.state_values().values;
    Ok(Anchor {
        mdp,
        q,
        resolvent,
        values,
    })
}

fn directional(family: &dyn ParamFamily, a: &Anchor, theta: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    let n_pairs = a.mdp.n_pairs();
    let scale = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return Ok(vec![0.0; n_pairs]);
    }
    let h = family.fd_step() / scale;
    let shifted =
        |sign: f64| -> Vec<f64> { theta.iter().zip(u).map(|(t, d)| t + sign * h * d).collect() };
    let plus = family.evaluate(&shifted(1.0))?;
    let minus = family.evaluate(&shifted(-1.0))?;
    let ns = a.mdp.n_states();
    let gamma = a.mdp.discount();
    let x: Vec<f64> = (0..n_pairs)
        .map(|i| {
            let dr = (plus.rewards()[i] - minus.rewards()[i]) / (2.0 * h);
            let rp = &plus.transitions()[i * ns..(i + 1) * ns];
            let rm = &minus.transitions()[i * ns..(i + 1) * ns];
            let dv: f64 = (0..ns).map(|s| (rp[s] - rm[s]) * a.values[s]).sum::<f64>() / (2.0 * h);
            dr + gamma * dv
        })
        .collect();
    a.resolvent.apply(&x)
}

/// `D_θ Q⋆ · u` by the fixed-point derivative along `u`, with the model
/// derivative taken by central differences. Requires a global gap of at least `xi`.
pub fn jacobian_vector_product(
    family: &dyn ParamFamily,
    theta: &[f64],
    u: &[f64],
    xi: f64,
) -> Result<Vec<f64>> {
    if u.len() != theta.len() {
        return Err(Error::Dimension(
            "direction and theta differ in length".into(),
        ));
    }
    let a = anchor(family, theta, xi)?;
    directional(family, &a, theta, u)
}

/// Local geometry at one parameter point.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGeometry {
    pub theta_dim: usize,
    pub q: QTable,
    /// `n_pairs × p`, column `i` is `D_θ Q⋆ · e_i`.
    pub jacobian: DMatrix<f64>,
    /// `G = Jᵀ J`.
    pub pullback: DMatrix<f64>,
}

fn jacobian_of(family: &dyn ParamFamily, a: &Anchor, theta: &[f64]) -> Result<DMatrix<f64>> {
    let p = theta.len();
    let cols: Result<Vec<Vec<f64>>> = (0..p)
        .into_par_iter()
        .map(|i| {
            let mut e = vec![0.0; p];
            e[i] = 1.0;
            directional(family, a, theta, &e)
        })
        .collect();
    let cols = cols?;
    Ok(DMatrix::from_fn(a.mdp.n_pairs(), p, |r, c| cols[c][r]))
}

fn gram(j: &DMatrix<f64>) -> DMatrix<f64> {
    let g = j.transpose() * j;
    (&g + g.transpose()) * 0.5
}

pub fn param_geometry(family: &dyn ParamFamily, theta: &[f64], xi: f64) -> Result<ParamGeometry> {
    let a = anchor(family, theta, xi)?;
    let jacobian = jacobian_of(family, &a, theta)?;
    let pullback = gram(&jacobian);
    Ok(ParamGeometry {
        theta_dim: theta.len(),
        q: a.q,
        jacobian,
        pullback,
    })
}

/// Pullback metric `G(θ) = Jᵀ J`, symmetric positive semidefinite.
pub fn pullback_metric(family: &dyn ParamFamily, theta: &[f64], xi: f64) -> Result<DMatrix<f64>> {
    Ok(param_geometry(family, theta, xi)?.pullback)
}

/// Whether `dθᵀ G dθ ≤ ε²`.
pub fn ellipsoid_contains(g: &DMatrix<f64>, dtheta: &[f64], eps: f64) -> bool {
    assert_eq!(g.nrows(), dtheta.len(), "metric and step dimensions differ");
    let d = DVector::from_column_slice(dtheta);
    (d.transpose() * g * &d)[(0, 0)] <= eps * eps
}

/// Inequality constraint `h(θ, Q) ≥ 0` evaluated at `Q = Q⋆(θ)`.
pub trait Constraint: Send + Sync {
    fn value(&self, theta: &[f64], q: &QTable) -> f64;
}

/// Constraint from a closure.
pub struct FnConstraint<F>(pub F);

impl<F> Constraint for FnConstraint<F>
where
    F: Fn(&[f64], &QTable) -> f64 + Send + Sync,
{
    fn value(&self, theta: &[f64], q: &QTable) -> f64 {
        (self.0)(theta, q)
    }
}

/// Outcome of the tangent-cone test for a direction.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeDecision {
    pub values: Vec<f64>,
    /// Constraints with `|H_j| ≤ tol_active`.
    pub active: Vec<usize>,
    /// Total derivatives `∇_θ H_j = ∇_θ h_j + Jᵀ ∇_Q h_j`, one per constraint.
    pub gradients: Vec<Vec<f64>>,
    /// `⟨∇H_j, u⟩` per constraint.
    pub inner: Vec<f64>,
    pub accepted: bool,
}

const CONSTRAINT_FD_STEP: f64 = 1e-6;

fn constraint_gradient(
    c: &dyn Constraint,
    theta: &[f64],
    q: &QTable,
    jac: &DMatrix<f64>,
) -> Vec<f64> {
    let p = theta.len();
    let mut grad = vec![0.0; p];
    for (i, g) in grad.iter_mut().enumerate() {
        let h = CONSTRAINT_FD_STEP * theta[i].abs().max(1.0);
        let mut tp = theta.to_vec();
        let mut tm = theta.to_vec();
        tp[i] += h;
        tm[i] -= h;
        *g = (c.value(&tp, q) - c.value(&tm, q)) / (2.0 * h);
    }
    let mut qp = q.clone();
    for k in 0..q.values().len() {
        let base = q.values()[k];
        let h = CONSTRAINT_FD_STEP * base.abs().max(1.0);
        qp.values_mut()[k] = base + h;
        let up = c.value(theta, &qp);
        qp.values_mut()[k] = base - h;
        let down = c.value(theta, &qp);
        qp.values_mut()[k] = base;
        let dq = (up - down) / (2.0 * h);
        if dq != 0.0 {
            for (i, g) in grad.iter_mut().enumerate() {
                *g += jac[(k, i)] * dq;
            }
        }
    }
    grad
}

/// Accepts `u` iff `⟨∇H_j, u⟩ ≥ 0` (up to roundoff) for every active constraint.
pub fn feasible_cone(
    family: &dyn ParamFamily,
    theta: &[f64],
    constraints: &[&dyn Constraint],
    tol_active: f64,
    direction: &[f64],
    xi: f64,
) -> Result<ConeDecision> {
    if direction.len() != theta.len() {
        return Err(Error::Dimension(
            "direction and theta differ in length".into(),
        ));
    }
    if !(tol_active >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tol_active = {tol_active}"
        )));
    }
    let a = anchor(family, theta, xi)?;
    let jac = jacobian_of(family, &a, theta)?;
    let u_norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut d = ConeDecision {
        values: vec![],
        active: vec![],
        gradients: vec![],
        inner: vec![],
        accepted: true,
    };
    for (j, c) in constraints.iter().enumerate() {
        let h = c.value(theta, &a.q);
        let g = constraint_gradient(*c, theta, &a.q, &jac);
        let ip: f64 = g.iter().zip(direction).map(|(x, y)| x * y).sum();
        let g_norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if h.abs() <= tol_active {
            d.active.push(j);
            if ip < -1e-12 * g_norm * u_norm {
                d.accepted = false;
            }
        }
        d.values.push(h);
        d.gradients.push(g);
        d.inner.push(ip);
    }
    Ok(d)
}
