//! Parameterized MDP families `τ ↦ M(τ)` with first and second derivatives,
//! and the synthetic ring regimes.

use std::fmt;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::FiniteMdp;
use crate::metric::{
    l1_surrogate_norm, mixing_certificate, w1_dual_norm, GroundMetric, MixingCertificate,
    SignedMeasure,
};

pub const ACTION_LEFT: usize = 0;
pub const ACTION_NONE: usize = 1;
pub const ACTION_RIGHT: usize = 2;

/// Default central-difference step for first derivatives.
pub const DEFAULT_FD_STEP: f64 = 1e-4;
/// Default central-difference step for second derivatives.
pub const DEFAULT_FD_STEP2: f64 = 1e-3;
/// Grid used to take the sup over `τ` of the mixing constants.
pub const DEFAULT_CERTIFICATE_GRID: usize = 201;

/// First and second `τ`-derivatives of rewards and kernels at one point.
///
/// Kernel rows use the same layout as [`FiniteMdp::transitions`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathDerivatives {
    pub n_states: usize,
    pub n_actions: usize,
    pub dr: Vec<f64>,
    pub dp: Vec<f64>,
    pub ddr: Vec<f64>,
    pub ddp: Vec<f64>,
}

impl PathDerivatives {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        let np = n_states * n_actions;
        Self {
            n_states,
            n_actions,
            dr: vec![0.0; np],
            dp: vec![0.0; np * n_states],
            ddr: vec![0.0; np],
            ddp: vec![0.0; np * n_states],
        }
    }

    pub fn dp_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.dp[start..start + self.n_states]
    }

    pub fn ddp_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.ddp[start..start + self.n_states]
    }

    /// Largest absolute row sum over both kernel derivatives.
    pub fn max_row_mass(&self) -> f64 {
        self.dp
            .chunks(self.n_states)
            .chain(self.ddp.chunks(self.n_states))
            .map(|row| row.iter().sum::<f64>().abs())
            .fold(0.0, f64::max)
    }
}

/// Norms of the path derivatives entering the speed and curvature densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedTerms {
    pub dr_inf: f64,
    pub dp_w1: f64,
    pub ddr_inf: f64,
    pub ddp_w1: f64,
}

impl SpeedTerms {
    pub const ZERO: SpeedTerms = SpeedTerms {
        dr_inf: 0.0,
        dp_w1: 0.0,
        ddr_inf: 0.0,
        ddp_w1: 0.0,
    };
}

/// A family of MDPs on a fixed state/action space indexed by a scalar.
pub trait PathFamily: Send + Sync + fmt::Debug {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn discount(&self) -> f64;
    fn evaluate(&self, tau: f64) -> Result<FiniteMdp>;

    /// Closed-form derivatives, when the family has them.
    fn analytic_derivatives(&self, _tau: f64) -> Option<Result<PathDerivatives>> {
        None
    }

    /// False for families that are only piecewise differentiable.
    fn is_smooth(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DerivativeMode {
    Analytic,
    CentralFd { h1: f64, h2: f64 },
}

impl DerivativeMode {
    pub fn central_fd() -> Self {
        DerivativeMode::CentralFd {
            h1: DEFAULT_FD_STEP,
            h2: DEFAULT_FD_STEP2,
        }
    }
}

/// A homotopy path together with its ground metric and value-scale constant.
#[derive(Clone)]
pub struct MdpPath {
    family: Arc<dyn PathFamily>,
    metric: GroundMetric,
    mode: DerivativeMode,
    l_s_override: Option<f64>,
    certificate_grid: usize,
    certificate: Arc<OnceLock<Result<MixingCertificate>>>,
}

impl fmt::Debug for MdpPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MdpPath")
            .field("family", &self.family)
            .field("mode", &self.mode)
            .field("l_s_override", &self.l_s_override)
            .finish()
    }
}

impl MdpPath {
    pub fn new(
        family: Arc<dyn PathFamily>,
        metric: GroundMetric,
        mode: DerivativeMode,
    ) -> Result<Self> {
        if metric.n_states() != family.n_states() {
            return Err(Error::Dimension(format!(
                "metric has {} states, family has {}",
                metric.n_states(),
                family.n_states()
            )));
        }
        if let DerivativeMode::CentralFd { h1, h2 } = mode {
            for h in [h1, h2] {
                if !(h > 0.0 && h < 0.1) {
                    return Err(Error::InvalidParameter(format!(
                        "fd step {h} outside (0, 0.1)"
                    )));
                }
            }
        }
        Ok(Self {
            family,
            metric,
            mode,
            l_s_override: None,
            certificate_grid: DEFAULT_CERTIFICATE_GRID,
            certificate: Arc::new(OnceLock::new()),
        })
    }

    /// Replaces the value-scale constant `L_s` (defaults to `C_mix`).
    pub fn with_l_s(mut self, l_s: f64) -> Result<Self> {
        if !(l_s >= 0.0) || !l_s.is_finite() {
            return Err(Error::InvalidParameter(format!("L_s = {l_s}")));
        }
        self.l_s_override = Some(l_s);
        Ok(self)
    }

    pub fn with_certificate_grid(mut self, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::InvalidParameter(
                "certificate grid needs 2 points".into(),
            ));
        }
        self.certificate_grid = points;
        self.certificate = Arc::new(OnceLock::new());
        Ok(self)
    }

    pub fn with_mode(&self, mode: DerivativeMode) -> Result<Self> {
        let mut p = Self::new(self.family.clone(), self.metric.clone(), mode)?;
        p.l_s_override = self.l_s_override;
        p.certificate_grid = self.certificate_grid;
        p.certificate = self.certificate.clone();
        Ok(p)
    }

    pub fn family(&self) -> &Arc<dyn PathFamily> {
        &self.family
    }

    pub fn metric(&self) -> &GroundMetric {
        &self.metric
    }

    pub fn mode(&self) -> DerivativeMode {
        self.mode
    }

    pub fn discount(&self) -> f64 {
        self.family.discount()
    }

    pub fn n_states(&self) -> usize {
        self.family.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.family.n_actions()
    }

    pub fn evaluate(&self, tau: f64) -> Result<FiniteMdp> {
        if !tau.is_finite() {
            return Err(Error::InvalidParameter(format!("tau = {tau}")));
        }
        self.family.evaluate(tau)
    }

    /// Mixing certificate with `L_r` and `κ` maximized over a uniform `τ` grid.
    pub fn mixing_certificate(&self) -> Result<MixingCertificate> {
        self.certificate
            .get_or_init(|| {
                let k = self.certificate_grid;
                let certs: Result<Vec<_>> = (0..k)
                    .into_par_iter()
                    .map(|i| {
                        let tau = i as f64 / (k - 1) as f64;
                        mixing_certificate(&self.evaluate(tau)?, &self.metric)
                    })
                    .collect();
                MixingCertificate::sup(&certs?)
            })
            .clone()
    }

    /// Value-scale conversion constant `L_s`.
    pub fn l_s(&self) -> Result<f64> {
        match self.l_s_override {
            Some(v) => Ok(v),
            None => Ok(self.mixing_certificate()?.l_s()),
        }
    }
}

/// First and second `τ`-derivatives of rewards and kernels.
pub fn path_derivatives(path: &MdpPath, tau: f64) -> Result<PathDerivatives> {
    match path.mode {
        DerivativeMode::Analytic => path.family.analytic_derivatives(tau).unwrap_or_else(|| {
            Err(Error::InvalidParameter(
                "family has no analytic derivatives".into(),
            ))
        }),
        DerivativeMode::CentralFd { h1, h2 } => central_fd_derivatives(path, tau, h1, h2),
    }
}

/// Stencil center shifted to keep `[c − h, c + h]` inside `[0, 1]`.
fn clamp_center(tau: f64, h: f64) -> f64 {
    tau.clamp(h, 1.0 - h)
}

fn central_fd_derivatives(path: &MdpPath, tau: f64, h1: f64, h2: f64) -> Result<PathDerivatives> {
    let (ns, na) = (path.n_states(), path.n_actions());
    let mut d = PathDerivatives::zeros(ns, na);

    let c1 = clamp_center(tau, h1);
    let (plus, minus) = (path.evaluate(c1 + h1)?, path.evaluate(c1 - h1)?);
    for (i, out) in d.dr.iter_mut().enumerate() {
        *out = (plus.rewards()[i] - minus.rewards()[i]) / (2.0 * h1);
    }
    for (i, out) in d.dp.iter_mut().enumerate() {
        *out = (plus.transitions()[i] - minus.transitions()[i]) / (2.0 * h1);
    }

    let c2 = clamp_center(tau, h2);
    let (plus, mid, minus) = (
        path.evaluate(c2 + h2)?,
        path.evaluate(c2)?,
        path.evaluate(c2 - h2)?,
    );
    let h2sq = h2 * h2;
    for (i, out) in d.ddr.iter_mut().enumerate() {
        *out = (plus.rewards()[i] - 2.0 * mid.rewards()[i] + minus.rewards()[i]) / h2sq;
    }
    for (i, out) in d.ddp.iter_mut().enumerate() {
        *out = (plus.transitions()[i] - 2.0 * mid.transitions()[i] + minus.transitions()[i]) / h2sq;
    }
    Ok(d)
}

/// Sup norms of the reward derivatives and sup over `(s,a)` of the
/// Wasserstein dual norms of the kernel derivatives.
pub fn path_speed_terms(path: &MdpPath, tau: f64) -> Result<SpeedTerms> {
    let d = path_derivatives(path, tau)?;
    speed_terms_of(&d, path.metric())
}

pub fn speed_terms_of(d: &PathDerivatives, metric: &GroundMetric) -> Result<SpeedTerms> {
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let row_sup = |rows: &[f64]| -> Result<f64> {
        let mut best = 0.0f64;
        for row in rows.chunks(d.n_states) {
            if row.iter().any(|x| *x != 0.0) {
                best = best.max(w1_dual_norm(&SignedMeasure::new(row.to_vec()), metric)?);
            }
        }
        Ok(best)
    };
    Ok(SpeedTerms {
        dr_inf: sup(&d.dr),
        dp_w1: row_sup(&d.dp)?,
        ddr_inf: sup(&d.ddr),
        ddp_w1: row_sup(&d.ddp)?,
    })
}

/// Sup over `(s,a)` of the ℓ1 surrogate of the first kernel derivative.
pub fn dp_l1_surrogate(d: &PathDerivatives, metric: &GroundMetric) -> f64 {
    d.dp.chunks(d.n_states)
        .map(|row| l1_surrogate_norm(&SignedMeasure::new(row.to_vec()), metric))
        .fold(0.0, f64::max)
}

/// Signed wrap-around displacement `s − c` on a ring of `n` states, in `(−n/2, n/2]`.
pub fn ring_displacement(s: f64, c: f64, n: usize) -> f64 {
    let n = n as f64;
    let mut d = (s - c).rem_euclid(n);
    if d > n / 2.0 {
        d -= n;
    }
    d
}

fn bump(s: usize, center: f64, sigma: f64, n: usize) -> f64 {
    let d = ring_displacement(s as f64, center, n);
    (-d * d / (2.0 * sigma * sigma)).exp()
}

fn ring_kernel(n: usize, epsilon: f64) -> Vec<f64> {
    let mut t = vec![epsilon / n as f64; n * 3 * n];
    for s in 0..n {
        for a in 0..3 {
            let next = ring_successor(s, a, n);
            t[(s * 3 + a) * n + next] += 1.0 - epsilon;
        }
    }
    t
}

/// Deterministic successor of `(s, a)` on the ring: L moves to `s − 1`,
/// N stays, R moves to `s + 1`.
pub fn ring_successor(s: usize, a: usize, n: usize) -> usize {
    match a {
        ACTION_LEFT => (s + n - 1) % n,
        ACTION_NONE => s,
        _ => (s + 1) % n,
    }
}

/// Ring MDP with actions {L, N, R}, uniform mixing at rate `ε`, and reward
/// `w_a · exp(−d_ring(s, c)² / (2σ²))`.
pub fn ring_mdp(
    n: usize,
    epsilon_mix: f64,
    gamma: f64,
    bump_center: f64,
    bump_width: f64,
    action_weights: &[f64],
) -> Result<FiniteMdp> {
    check_ring_params(n, epsilon_mix, bump_width, action_weights)?;
    if !bump_center.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "bump center {bump_center}"
        )));
    }
    let mut r = vec![0.0; n * 3];
    for s in 0..n {
        let b = bump(s, bump_center, bump_width, n);
        for a in 0..3 {
            r[s * 3 + a] = action_weights[a] * b;
        }
    }
    FiniteMdp::new(n, 3, ring_kernel(n, epsilon_mix), r, gamma)
}

fn check_ring_params(n: usize, eps: f64, sigma: f64, weights: &[f64]) -> Result<()> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!(
            "ring needs n >= 3, got {n}"
        )));
    }
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidParameter(format!(
            "epsilon_mix {eps} outside [0, 1]"
        )));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "bump width {sigma} must be positive"
        )));
    }
    if weights.len() != 3 || weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::InvalidParameter(
            "need three finite action weights".into(),
        ));
    }
    Ok(())
}

/// Which synthetic regime a ring path realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Length,
    Curvature,
    Kink,
    Custom,
}

/// Reparameterization of the interpolation variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Schedule {
    Linear,
    /// `σ(τ) = 3τ² − 2τ³`.
    SCurve,
}

impl Schedule {
    /// Returns `(u, u', u'')` at `τ`.
    pub fn eval(self, tau: f64) -> (f64, f64, f64) {
        match self {
            Schedule::Linear => (tau, 1.0, 0.0),
            Schedule::SCurve => (
                3.0 * tau * tau - 2.0 * tau.powi(3),
                6.0 * tau - 6.0 * tau * tau,
                6.0 - 12.0 * tau,
            ),
        }
    }
}

/// Configuration of a synthetic ring path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingPathConfig {
    pub family: FamilyKind,
    pub n: usize,
    pub gamma: f64,
    pub epsilon_mix: f64,
    /// Mixing rate at `τ = 1` (custom family only; defaults to `epsilon_mix`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_mix1: Option<f64>,
    pub c0: f64,
    pub c1: f64,
    pub sigma: f64,
    pub weights0: Vec<f64>,
    pub weights1: Vec<f64>,
    /// `[α(0), α(1)]` for the linear L/R competition profile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_profile: Option<[f64; 2]>,
    /// Floors the bump center to an integer state (non-smooth stress variant).
    #[serde(default)]
    pub floored: bool,
}

impl RingPathConfig {
    /// Length-dominated default: fixed center, weights doubled linearly.
    pub fn length_default() -> Self {
        Self {
            family: FamilyKind::Length,
            n: 20,
            gamma: 0.95,
            epsilon_mix: 0.05,
            epsilon_mix1: None,
            c0: 4.0,
            c1: 4.0,
            sigma: 2.0,
            weights0: vec![0.8, 1.0, 0.4],
            weights1: vec![1.6, 2.0, 0.8],
            alpha_profile: None,
            floored: false,
        }
    }

    /// Same endpoints as the length default, reparameterized by the S-curve.
    pub fn curvature_default() -> Self {
        Self {
            family: FamilyKind::Curvature,
            ..Self::length_default()
        }
    }

    /// Symmetric L/R competition whose crossing sits at `τ = 0.5`.
    pub fn kink_default() -> Self {
        Self {
            family: FamilyKind::Kink,
            n: 20,
            gamma: 0.95,
            epsilon_mix: 0.05,
            epsilon_mix1: None,
            c0: 10.0,
            c1: 10.0,
            sigma: 2.0,
            weights0: vec![1.0, 0.5, 1.0],
            weights1: vec![1.0, 0.5, 1.0],
            alpha_profile: Some([0.4, 0.6]),
            floored: false,
        }
    }

    fn validate(&self) -> Result<()> {
        check_ring_params(self.n, self.epsilon_mix, self.sigma, &self.weights0)?;
        check_ring_params(
            self.n,
            self.epsilon_mix1.unwrap_or(self.epsilon_mix),
            self.sigma,
            &self.weights1,
        )?;
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma {} outside (0, 1)",
                self.gamma
            )));
        }
        if !self.c0.is_finite() || !self.c1.is_finite() {
            return Err(Error::InvalidParameter(
                "bump centers must be finite".into(),
            ));
        }
        match self.family {
            FamilyKind::Kink if self.alpha_profile.is_none() => {
                return Err(Error::InvalidParameter(
                    "kink family needs alpha_profile".into(),
                ))
            }
            FamilyKind::Length | FamilyKind::Curvature if self.alpha_profile.is_some() => {
                return Err(Error::InvalidParameter(
                    "alpha_profile applies to kink and custom families only".into(),
                ))
            }
            _ => {}
        }
        if self.family != FamilyKind::Custom
            && self.epsilon_mix1.is_some_and(|e| e != self.epsilon_mix)
        {
            return Err(Error::InvalidParameter(
                "epsilon_mix1 applies to the custom family only".into(),
            ));
        }
        if let Some([a0, a1]) = self.alpha_profile {
            if !a0.is_finite() || !a1.is_finite() {
                return Err(Error::InvalidParameter(
                    "alpha_profile must be finite".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn schedule(&self) -> Schedule {
        match self.family {
            FamilyKind::Curvature => Schedule::SCurve,
            _ => Schedule::Linear,
        }
    }
}

/// Ring family `r_τ(s,a) = m_a(τ) · w_a(u) · b(s; c(u))` with `u` the
/// scheduled interpolation variable and `m_a` the optional L/R competition
/// multipliers `(α, 1, 1 − α)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RingPath {
    config: RingPathConfig,
}

/// Interpolation exact at both endpoints and for equal arguments.
fn lerp(a: f64, b: f64, u: f64) -> f64 {
    if a == b {
        a
    } else {
        a * (1.0 - u) + b * u
    }
}

impl RingPath {
    pub fn new(config: RingPathConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &RingPathConfig {
        &self.config
    }

    fn epsilon1(&self) -> f64 {
        self.config.epsilon_mix1.unwrap_or(self.config.epsilon_mix)
    }

    fn center(&self, u: f64) -> f64 {
        let c = lerp(self.config.c0, self.config.c1, u);
        if self.config.floored {
            c.floor()
        } else {
            c
        }
    }

    /// `(m, m')` for action `a`; `m'' = 0`.
    fn multiplier(&self, a: usize, tau: f64) -> (f64, f64) {
        match self.config.alpha_profile {
            None => (1.0, 0.0),
            Some([a0, a1]) => {
                let alpha = lerp(a0, a1, tau);
                match a {
                    ACTION_LEFT => (alpha, a1 - a0),
                    ACTION_RIGHT => (1.0 - alpha, a0 - a1),
                    _ => (1.0, 0.0),
                }
            }
        }
    }
}

impl PathFamily for RingPath {
    fn n_states(&self) -> usize {
        self.config.n
    }

    fn n_actions(&self) -> usize {
        3
    }

    fn discount(&self) -> f64 {
        self.config.gamma
    }

    fn evaluate(&self, tau: f64) -> Result<FiniteMdp> {
        let cfg = &self.config;
        let (u, _, _) = cfg.schedule().eval(tau);
        let weights: Vec<f64> = (0..3)
            .map(|a| lerp(cfg.weights0[a], cfg.weights1[a], u))
            .collect();
        let eps = lerp(cfg.epsilon_mix, self.epsilon1(), u);
        let mdp = ring_mdp(cfg.n, eps, cfg.gamma, self.center(u), cfg.sigma, &weights)?;
        if cfg.alpha_profile.is_none() {
            return Ok(mdp);
        }
        let mut r = mdp.rewards().to_vec();
        for s in 0..cfg.n {
            for a in 0..3 {
                r[s * 3 + a] *= self.multiplier(a, tau).0;
            }
        }
        FiniteMdp::new(cfg.n, 3, mdp.transitions().to_vec(), r, cfg.gamma)
    }

    fn analytic_derivatives(&self, tau: f64) -> Option<Result<PathDerivatives>> {
        let cfg = &self.config;
        let n = cfg.n;
        let (u, du, ddu) = cfg.schedule().eval(tau);
        let c = self.center(u);
        let dc = if cfg.floored { 0.0 } else { cfg.c1 - cfg.c0 };
        let sig2 = cfg.sigma * cfg.sigma;
        let mut d = PathDerivatives::zeros(n, 3);

        for s in 0..n {
            let disp = ring_displacement(s as f64, c, n);
            let b = (-disp * disp / (2.0 * sig2)).exp();
            let b_c = b * disp / sig2;
            let b_cc = b * (disp * disp / (sig2 * sig2) - 1.0 / sig2);
            for a in 0..3 {
                let (w0, w1) = (cfg.weights0[a], cfg.weights1[a]);
                let w = lerp(w0, w1, u);
                let dw = w1 - w0;
                // f(u) = w(u) b(c(u))
                let f = w * b;
                let f_u = dw * b + w * b_c * dc;
                let f_uu = 2.0 * dw * b_c * dc + w * b_cc * dc * dc;
                let g1 = f_u * du;
                let g2 = f_uu * du * du + f_u * ddu;
                let (m, dm) = self.multiplier(a, tau);
                let i = s * 3 + a;
                d.dr[i] = dm * f + m * g1;
                d.ddr[i] = 2.0 * dm * g1 + m * g2;
            }
        }

        let de = self.epsilon1() - cfg.epsilon_mix;
        if de != 0.0 {
            for s in 0..n {
                for a in 0..3 {
                    let next = ring_successor(s, a, n);
                    let base = (s * 3 + a) * n;
                    for s2 in 0..n {
                        let shape = 1.0 / n as f64 - if s2 == next { 1.0 } else { 0.0 };
                        d.dp[base + s2] = de * shape * du;
                        d.ddp[base + s2] = de * shape * ddu;
                    }
                }
            }
        }
        Some(Ok(d))
    }

    fn is_smooth(&self) -> bool {
        !self.config.floored
    }
}

/// Entrywise linear interpolation `M(τ) = (1 − τ) M₀ + τ M₁` of two MDPs on
/// the same spaces and discount.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolatedPath {
    m0: FiniteMdp,
    m1: FiniteMdp,
}

impl InterpolatedPath {
    pub fn new(m0: FiniteMdp, m1: FiniteMdp) -> Result<Self> {
        if m0.n_states() != m1.n_states()
            || m0.n_actions() != m1.n_actions()
            || m0.discount() != m1.discount()
        {
            return Err(Error::Dimension(
                "endpoint MDPs differ in shape or discount".into(),
            ));
        }
        Ok(Self { m0, m1 })
    }

    pub fn stationary(m: FiniteMdp) -> Self {
        Self {
            m0: m.clone(),
            m1: m,
        }
    }
}

impl PathFamily for InterpolatedPath {
    fn n_states(&self) -> usize {
        self.m0.n_states()
    }

    fn n_actions(&self) -> usize {
        self.m0.n_actions()
    }

    fn discount(&self) -> f64 {
        self.m0.discount()
    }

    fn evaluate(&self, tau: f64) -> Result<FiniteMdp> {
        if tau == 0.0 {
            return Ok(self.m0.clone());
        }
        if tau == 1.0 {
            return Ok(self.m1.clone());
        }
        let mix = |x: &[f64], y: &[f64]| -> Vec<f64> {
            x.iter().zip(y).map(|(a, b)| lerp(*a, *b, tau)).collect()
        };
        FiniteMdp::new(
            self.n_states(),
            self.n_actions(),
            mix(self.m0.transitions(), self.m1.transitions()),
            mix(self.m0.rewards(), self.m1.rewards()),
            self.discount(),
        )
    }

    fn analytic_derivatives(&self, _tau: f64) -> Option<Result<PathDerivatives>> {
        let diff =
            |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(a, b)| b - a).collect() };
        let mut d = PathDerivatives::zeros(self.n_states(), self.n_actions());
        d.dr = diff(self.m0.rewards(), self.m1.rewards());
        d.dp = diff(self.m0.transitions(), self.m1.transitions());
        Some(Ok(d))
    }
}

/// Builds the analytic-mode path for a ring configuration on the unit ring metric.
pub fn ring_path(config: RingPathConfig) -> Result<MdpPath> {
    let n = config.n;
    let family = RingPath::new(config)?;
    MdpPath::new(
        Arc::new(family),
        GroundMetric::unit_ring(n)?,
        DerivativeMode::Analytic,
    )
}

pub fn length_dominated_path(config: RingPathConfig) -> Result<MdpPath> {
    ring_path(RingPathConfig {
        family: FamilyKind::Length,
        ..config
    })
}

pub fn curvature_dominated_path(config: RingPathConfig) -> Result<MdpPath> {
    ring_path(RingPathConfig {
        family: FamilyKind::Curvature,
        ..config
    })
}

pub fn kink_prone_path(config: RingPathConfig) -> Result<MdpPath> {
    ring_path(RingPathConfig {
        family: FamilyKind::Kink,
        ..config
    })
}
