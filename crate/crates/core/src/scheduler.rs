//! Replay-based geometry proxies and the smoothed, clipped, hysteretic
//! hyperparameter scheduler.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::QTable;

/// One environment transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
    pub step: u64,
}

/// Bounded FIFO of transitions with strictly increasing step indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidParameter(
                "replay capacity must be positive".into(),
            ));
        }
        Ok(Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        })
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if let Some(last) = self.entries.back() {
            if t.step <= last.step {
                return Err(Error::InvalidParameter(format!(
                    "step {} after {}",
                    t.step, last.step
                )));
            }
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(t);
        Ok(())
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.entries.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.entries.iter()
    }

    pub fn latest_step(&self) -> Option<u64> {
        self.entries.back().map(|t| t.step)
    }

    /// Number of steps covered, `latest − earliest + 1`.
    pub fn span(&self) -> u64 {
        match (self.entries.front(), self.entries.back()) {
            (Some(a), Some(b)) => b.step - a.step + 1,
            _ => 0,
        }
    }

    /// Transitions with `lo ≤ step < hi`, oldest first.
    pub fn window(&self, lo: u64, hi: u64) -> impl Iterator<Item = &Transition> {
        let start = self.entries.partition_point(|t| t.step < lo);
        self.entries.range(start..).take_while(move |t| t.step < hi)
    }
}

/// Next-state features `φ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateFeatures {
    OneHot(usize),
    /// Row `s` is `φ(s)`.
    Table(Vec<Vec<f64>>),
}

impl StateFeatures {
    pub fn dim(&self) -> usize {
        match self {
            StateFeatures::OneHot(n) => *n,
            StateFeatures::Table(rows) => rows.first().map_or(0, Vec::len),
        }
    }

    fn accumulate(&self, s: usize, acc: &mut [f64]) {
        match self {
            StateFeatures::OneHot(_) => acc[s] += 1.0,
            StateFeatures::Table(rows) => {
                for (x, f) in acc.iter_mut().zip(&rows[s]) {
                    *x += f;
                }
            }
        }
    }
}

/// `(lo, mid, hi)` half-open step bounds of the two most recent `w1`-windows,
/// or `None` while the buffer spans fewer than `2 w1` steps.
fn windows(buffer: &ReplayBuffer, w1: u64) -> Option<(u64, u64, u64)> {
    let end = buffer.latest_step()? + 1;
    if w1 == 0 || buffer.span() < 2 * w1 {
        return None;
    }
    Some((end - 2 * w1, end - w1, end))
}

/// Reward EMA over one window, restarted at the first visit of the pair.
fn windowed_reward_ema(
    buffer: &ReplayBuffer,
    lo: u64,
    hi: u64,
    pair: (usize, usize),
    rate: f64,
) -> Option<f64> {
    let mut est: Option<f64> = None;
    for t in buffer.window(lo, hi).filter(|t| (t.s, t.a) == pair) {
        est = Some(match est {
            None => t.r,
            Some(e) => e + rate * (t.r - e),
        });
    }
    est
}

/// `max_{(s,a)} |r̂_t(s,a) − r̂_{t−W1}(s,a)|` over the minibatch pairs, with
/// `r̂` a per-window EMA; pairs unseen in either window contribute 0.
/// `None` until the buffer spans `2 W1` steps.
pub fn reward_drift(
    buffer: &ReplayBuffer,
    w1: u64,
    pairs: &[(usize, usize)],
    ema_rate: f64,
) -> Option<f64> {
    let (lo, mid, hi) = windows(buffer, w1)?;
    let mut best = 0.0f64;
    for &p in pairs {
        if let (Some(new), Some(old)) = (
            windowed_reward_ema(buffer, mid, hi, p, ema_rate),
            windowed_reward_ema(buffer, lo, mid, p, ema_rate),
        ) {
            best = best.max((new - old).abs());
        }
    }
    Some(best)
}

fn feature_mean(
    buffer: &ReplayBuffer,
    lo: u64,
    hi: u64,
    pair: (usize, usize),
    phi: &StateFeatures,
) -> Option<Vec<f64>> {
    let mut acc = vec![0.0; phi.dim()];
    let mut count = 0usize;
    for t in buffer.window(lo, hi).filter(|t| (t.s, t.a) == pair) {
        phi.accumulate(t.s_next, &mut acc);
        count += 1;
    }
    (count > 0).then(|| acc.into_iter().map(|x| x / count as f64).collect())
}

/// `max_{(s,a)} ‖μ_t(s,a) − μ_{t−W1}(s,a)‖₂` with `μ` the empirical next-state
/// feature mean per window; pairs unseen in either window contribute 0.
pub fn feature_mean_drift(
    buffer: &ReplayBuffer,
    w1: u64,
    pairs: &[(usize, usize)],
    phi: &StateFeatures,
) -> Option<f64> {
    let (lo, mid, hi) = windows(buffer, w1)?;
    let mut best = 0.0f64;
    for &p in pairs {
        if let (Some(new), Some(old)) = (
            feature_mean(buffer, mid, hi, p, phi),
            feature_mean(buffer, lo, mid, p, phi),
        ) {
            let d: f64 = new
                .iter()
                .zip(&old)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            best = best.max(d);
        }
    }
    Some(best)
}

/// `min_s (best − second best)` of `q` over the given states; `+∞` for an empty set.
pub fn minibatch_gap(q: &QTable, states: &[usize]) -> f64 {
    states
        .iter()
        .map(|&s| {
            let row = q.state_row(s);
            let (mut b1, mut b2) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for &v in row {
                if v > b1 {
                    b2 = b1;
                    b1 = v;
                } else if v > b2 {
                    b2 = v;
                }
            }
            if row.len() < 2 {
                f64::INFINITY
            } else {
                b1 - b2
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// Raw proxies at one scheduler tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxySignals {
    pub delta_r_inf: f64,
    pub delta_p_phi: f64,
    pub delta_pl_hat: f64,
    pub delta_curv_hat: f64,
    pub gap_hat: f64,
    pub kink: u8,
}

impl ProxySignals {
    pub const ZERO: ProxySignals = ProxySignals {
        delta_r_inf: 0.0,
        delta_p_phi: 0.0,
        delta_pl_hat: 0.0,
        delta_curv_hat: 0.0,
        gap_hat: f64::INFINITY,
        kink: 0,
    };
}

/// Combines drift estimates into `(ΔPL, ΔCurv, ĝap, Kink)`, keeping the
/// `ΔPL` history needed for the lag-`W2` difference.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyTracker {
    l_s: f64,
    w2: u64,
    eps_gap: f64,
    history: VecDeque<(u64, f64)>,
    last: ProxySignals,
}

impl ProxyTracker {
    pub fn new(l_s: f64, w2: u64, eps_gap: f64) -> Result<Self> {
        if w2 == 0 || !(l_s >= 0.0) || !(eps_gap >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "proxy tracker L_s={l_s} W2={w2} eps_gap={eps_gap}"
            )));
        }
        Ok(Self {
            l_s,
            w2,
            eps_gap,
            history: VecDeque::new(),
            last: ProxySignals::ZERO,
        })
    }

    pub fn last(&self) -> ProxySignals {
        self.last
    }

    /// `ΔPL = Δr + L_s ΔP`, `ΔCurv = |ΔPL_t − ΔPL_{t−W2}|` (0 without lagged
    /// history), `Kink = 1{ĝap ≤ ε_gap}`.
    pub fn update(
        &mut self,
        step: u64,
        delta_r_inf: f64,
        delta_p_phi: f64,
        gap_hat: f64,
    ) -> ProxySignals {
        let pl = delta_r_inf + self.l_s * delta_p_phi;
        let lag = step.checked_sub(self.w2);
        let lagged = lag.and_then(|l| {
            self.history
                .iter()
                .rev()
                .find(|(t, _)| *t <= l)
                .map(|(_, v)| *v)
        });
        if let Some(l) = lag {
            // keep one entry at or before the lag point
            while self.history.len() >= 2 && self.history[1].0 <= l {
                self.history.pop_front();
            }
        }
        self.history.push_back((step, pl));
        self.last = ProxySignals {
            delta_r_inf,
            delta_p_phi,
            delta_pl_hat: pl,
            delta_curv_hat: lagged.map_or(0.0, |v| (pl - v).abs()),
            gap_hat,
            kink: u8::from(gap_hat <= self.eps_gap),
        };
        self.last
    }
}

fn default_beta() -> f64 {
    0.1
}
fn default_h() -> u64 {
    50
}
fn default_delta_hys() -> f64 {
    0.05
}
fn default_eps_gap() -> f64 {
    0.01
}
fn default_w1() -> u64 {
    500
}
fn default_w2() -> u64 {
    1500
}
fn default_ema_rate() -> f64 {
    0.1
}
fn default_eta0() -> f64 {
    0.1
}
fn default_eta_min() -> f64 {
    1e-5
}
fn default_half() -> f64 {
    0.5
}
fn default_nu0() -> f64 {
    0.05
}
fn default_nu_min() -> f64 {
    1e-4
}
fn default_lambda0() -> f64 {
    0.01
}
fn default_one() -> f64 {
    1.0
}
fn default_beta2() -> f64 {
    0.01
}
fn default_gamma1() -> f64 {
    2.0
}
fn default_gamma3() -> f64 {
    4.0
}
fn default_delta() -> f64 {
    1e-3
}
fn default_d0() -> f64 {
    8.0
}
fn default_dmax() -> usize {
    32
}
fn default_b0() -> f64 {
    64.0
}
fn default_bmax() -> usize {
    1024
}

/// Scheduler coefficients. Key names follow the experiment config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerConfig {
    /// EMA weight of a new raw proxy in the smoothed proxies.
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Update period in steps.
    #[serde(rename = "H", default = "default_h")]
    pub h: u64,
    /// Minimum L2 change of the smoothed proxies since the last applied update; `inf` freezes.
    #[serde(default = "default_delta_hys")]
    pub delta_hys: f64,
    #[serde(default = "default_eps_gap")]
    pub eps_gap: f64,
    #[serde(rename = "W1", default = "default_w1")]
    pub w1: u64,
    #[serde(rename = "W2", default = "default_w2")]
    pub w2: u64,
    /// Per-pair reward EMA coefficient.
    #[serde(default = "default_ema_rate")]
    pub ema_rate: f64,
    /// Value-scale constant in `ΔPL`; the path's `L_s` when unset.
    #[serde(default)]
    pub l_s: Option<f64>,
    #[serde(default = "default_eta0")]
    pub eta0: f64,
    #[serde(default = "default_eta_min")]
    pub eta_min: f64,
    #[serde(default = "default_half")]
    pub eta_max: f64,
    /// Base schedule `η⁰_t = η₀ t₀/(t₀ + t)`; constant when unset.
    #[serde(default)]
    pub eta_decay: Option<f64>,
    #[serde(default = "default_nu0")]
    pub nu0: f64,
    #[serde(default = "default_nu_min")]
    pub nu_min: f64,
    #[serde(default = "default_half")]
    pub nu_max: f64,
    #[serde(default = "default_lambda0")]
    pub lambda0: f64,
    #[serde(default = "default_one")]
    pub alpha1: f64,
    #[serde(default = "default_one")]
    pub alpha2: f64,
    #[serde(default = "default_one")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_one")]
    pub c1: f64,
    #[serde(default = "default_one")]
    pub c2: f64,
    #[serde(default = "default_gamma1")]
    pub gamma1: f64,
    #[serde(default = "default_one")]
    pub gamma2: f64,
    #[serde(default = "default_gamma3")]
    pub gamma3: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(rename = "D0", default = "default_d0")]
    pub d0: f64,
    #[serde(rename = "Dmax", default = "default_dmax")]
    pub dmax: usize,
    #[serde(rename = "B0", default = "default_b0")]
    pub b0: f64,
    #[serde(rename = "Bmax", default = "default_bmax")]
    pub bmax: usize,
    /// Normalize raw `ΔPL`, `ΔCurv` by running EMA moments before smoothing.
    #[serde(default)]
    pub zscore: bool,
    /// Compute `ĝap` on the target table instead of the online table.
    #[serde(default)]
    pub gap_on_target: bool,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            beta: default_beta(),
            h: default_h(),
            delta_hys: default_delta_hys(),
            eps_gap: default_eps_gap(),
            w1: default_w1(),
            w2: default_w2(),
            ema_rate: default_ema_rate(),
            l_s: None,
            eta0: default_eta0(),
            eta_min: default_eta_min(),
            eta_max: default_half(),
            eta_decay: None,
            nu0: default_nu0(),
            nu_min: default_nu_min(),
            nu_max: default_half(),
            lambda0: default_lambda0(),
            alpha1: 1.0,
            alpha2: 1.0,
            beta1: 1.0,
            beta2: default_beta2(),
            c1: 1.0,
            c2: 1.0,
            gamma1: default_gamma1(),
            gamma2: 1.0,
            gamma3: default_gamma3(),
            delta: default_delta(),
            d0: default_d0(),
            dmax: default_dmax(),
            b0: default_b0(),
            bmax: default_bmax(),
            zscore: false,
            gap_on_target: false,
        }
    }
}

/// Emitted hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub eta: f64,
    pub nu: f64,
    pub lambda: f64,
    pub depth: usize,
    pub budget: usize,
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad("beta must lie in (0, 1]");
        }
        if self.h == 0 {
            return bad("H must be positive");
        }
        if !(self.delta_hys >= 0.0) {
            return bad("delta_hys must be nonnegative");
        }
        if self.w1 == 0 || self.w2 == 0 {
            return bad("W1 and W2 must be positive");
        }
        if !(self.ema_rate > 0.0 && self.ema_rate <= 1.0) {
            return bad("ema_rate must lie in (0, 1]");
        }
        if !(0.0 <= self.eta_min && self.eta_min <= self.eta_max)
            || !(0.0 <= self.nu_min && self.nu_min <= self.nu_max)
        {
            return bad("clip ranges must satisfy 0 <= min <= max");
        }
        if self.eta_decay.is_some_and(|t| !(t > 0.0)) {
            return bad("eta_decay must be positive");
        }
        let coeffs = [
            self.eta0,
            self.nu0,
            self.lambda0,
            self.alpha1,
            self.alpha2,
            self.beta1,
            self.beta2,
            self.c1,
            self.c2,
            self.gamma1,
            self.gamma2,
            self.gamma3,
            self.d0,
            self.b0,
            self.eps_gap,
        ];
        if coeffs.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
            return bad("scheduler coefficients must be finite and nonnegative");
        }
        if !(self.delta > 0.0) {
            return bad("delta must be positive");
        }
        if self.l_s.is_some_and(|l| !(l >= 0.0)) {
            return bad("l_s must be nonnegative");
        }
        Ok(())
    }

    /// `η⁰_t`.
    pub fn base_eta(&self, step: u64) -> f64 {
        self.decayed(self.eta0, step)
    }

    /// `η t₀/(t₀ + t)` under the configured decay, `η` without one.
    pub fn decayed(&self, eta: f64, step: u64) -> f64 {
        match self.eta_decay {
            None => eta,
            Some(t0) => eta * t0 / (t0 + step as f64),
        }
    }

    /// `1/(1 + α₁ PL + α₂ Curv)`.
    pub fn eta_multiplier(&self, pl: f64, curv: f64) -> f64 {
        1.0 / (1.0 + self.alpha1 * pl + self.alpha2 * curv)
    }

    /// Hyperparameter map at smoothed proxies `(PL, Curv, Kink)` and gap proxy.
    pub fn map(&self, step: u64, pl: f64, curv: f64, kink: f64, gap: f64) -> HyperParams {
        let g = gap.max(self.delta);
        let eta =
            (self.base_eta(step) * self.eta_multiplier(pl, curv)).clamp(self.eta_min, self.eta_max);
        let nu = (self.nu0 / (1.0 + self.beta1 * kink * (1.0 + self.beta2 / g)))
            .clamp(self.nu_min, self.nu_max);
        let lambda = self.lambda0 * (1.0 + self.c1 * pl + self.c2 * curv.sqrt());
        let d = self.d0
            + self.gamma1 * (1.0 + pl)
            + self.gamma2 * (1.0 + curv).sqrt()
            + self.gamma3 * kink / g;
        let b = self.b0 * (1.0 + self.gamma1 * pl + self.gamma2 * curv);
        HyperParams {
            eta,
            nu,
            lambda,
            depth: ceil_count(d).min(self.dmax),
            budget: ceil_count(b).min(self.bmax),
        }
    }

    /// Hyperparameters with all proxies at zero.
    pub fn idle(&self) -> HyperParams {
        self.map(0, 0.0, 0.0, 0.0, f64::INFINITY)
    }

    /// Width of the `λ` range when both `PL` and `Curv` proxies lie in `[0, proxy_bound]`.
    pub fn lambda_range(&self, proxy_bound: f64) -> f64 {
        self.lambda0 * (self.c1 * proxy_bound + self.c2 * proxy_bound.sqrt())
    }

    /// Widths of the admissible intervals, ordered `(η, ν, λ, D, B)`; `λ` is
    /// unbounded above.
    pub fn ranges(&self) -> [f64; 5] {
        [
            self.eta_max - self.eta_min,
            self.nu_max - self.nu_min,
            f64::INFINITY,
            self.dmax as f64,
            self.bmax as f64,
        ]
    }
}

fn ceil_count(x: f64) -> usize {
    if x.is_finite() {
        x.ceil().max(0.0) as usize
    } else {
        usize::MAX
    }
}

/// Running EMA mean and variance used for optional z-scoring.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct Moments {
    mean: f64,
    var: f64,
    seen: bool,
}

impl Moments {
    fn normalize(&mut self, x: f64, rate: f64) -> f64 {
        if !self.seen {
            self.mean = x;
            self.var = 0.0;
            self.seen = true;
        } else {
            let d = x - self.mean;
            self.mean += rate * d;
            self.var = (1.0 - rate) * (self.var + rate * d * d);
        }
        ((x - self.mean) / (self.var + 1e-12).sqrt()).max(0.0)
    }
}

/// Smoothed proxies, hysteresis reference, and current hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerState {
    config: SchedulerConfig,
    pub pl_tilde: f64,
    pub curv_tilde: f64,
    pub kink_tilde: f64,
    pub gap_hat: f64,
    pub last_update_step: Option<u64>,
    /// Smoothed proxies at the last applied update.
    reference: [f64; 3],
    multiplier: f64,
    hyper: HyperParams,
    moments: [Moments; 2],
    updates: usize,
    moves: Vec<f64>,
}

impl SchedulerState {
    pub fn new(config: SchedulerConfig) -> Result<Self> {
        config.validate()?;
        let hyper = config.idle();
        Ok(Self {
            multiplier: 1.0,
            config,
            pl_tilde: 0.0,
            curv_tilde: 0.0,
            kink_tilde: 0.0,
            gap_hat: f64::INFINITY,
            last_update_step: None,
            reference: [0.0; 3],
            hyper,
            moments: [Moments::default(); 2],
            updates: 0,
            moves: Vec::new(),
        })
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.config
    }

    /// Hyperparameters fixed at the last applied update.
    pub fn hyper(&self) -> HyperParams {
        self.hyper
    }

    /// Hyperparameters in force at `step`; only `η` varies between updates,
    /// and only when a decaying base schedule is configured.
    pub fn hyper_at(&self, step: u64) -> HyperParams {
        let c = &self.config;
        HyperParams {
            eta: (c.base_eta(step) * self.multiplier).clamp(c.eta_min, c.eta_max),
            ..self.hyper
        }
    }

    /// Number of applied (hysteresis-passing) updates.
    pub fn updates(&self) -> usize {
        self.updates
    }

    /// `‖X̃ − reference‖₂` at every tick so far, before any update it triggered.
    pub fn moves(&self) -> &[f64] {
        &self.moves
    }

    pub fn is_tick(&self, step: u64) -> bool {
        step.is_multiple_of(self.config.h)
    }

    /// Smooths `raw` on ticks and recomputes hyperparameters when the
    /// smoothed proxies moved at least `Δ_hys` (L2) since the last update.
    /// Returns whether the hyperparameters were recomputed.
    pub fn step(&mut self, raw: &ProxySignals, step: u64) -> bool {
        if !self.is_tick(step) {
            return false;
        }
        let b = self.config.beta;
        let (mut pl, mut curv) = (raw.delta_pl_hat, raw.delta_curv_hat);
        if self.config.zscore {
            pl = self.moments[0].normalize(pl, b);
            curv = self.moments[1].normalize(curv, b);
        }
        self.pl_tilde = (1.0 - b) * self.pl_tilde + b * pl;
        self.curv_tilde = (1.0 - b) * self.curv_tilde + b * curv;
        self.kink_tilde = (1.0 - b) * self.kink_tilde + b * f64::from(raw.kink);
        self.gap_hat = raw.gap_hat;
        let x = [self.pl_tilde, self.curv_tilde, self.kink_tilde];
        let moved = x
            .iter()
            .zip(&self.reference)
            .map(|(a, r)| (a - r) * (a - r))
            .sum::<f64>()
            .sqrt();
        self.moves.push(moved);
        if !(moved >= self.config.delta_hys) {
            return false;
        }
        self.reference = x;
        self.last_update_step = Some(step);
        self.multiplier = self.config.eta_multiplier(x[0], x[1]);
        self.hyper = self.config.map(step, x[0], x[1], x[2], self.gap_hat);
        self.updates += 1;
        true
    }
}

/// Total variation per hyperparameter, ordered `(η, ν, λ, D, B)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChatterStats {
    pub variation: [f64; 5],
    /// Fraction of consecutive pairs where some hyperparameter moved by more than `eps`.
    pub large_change_fraction: f64,
}

fn as_array(h: &HyperParams) -> [f64; 5] {
    [h.eta, h.nu, h.lambda, h.depth as f64, h.budget as f64]
}

pub fn chatter_stats(trace: &[HyperParams], eps: f64) -> Result<ChatterStats> {
    if trace.is_empty() {
        return Err(Error::InvalidParameter("empty hyperparameter trace".into()));
    }
    let mut variation = [0.0; 5];
    let mut large = 0usize;
    for w in trace.windows(2) {
        let (a, b) = (as_array(&w[0]), as_array(&w[1]));
        let mut big = false;
        for i in 0..5 {
            let d = (b[i] - a[i]).abs();
            variation[i] += d;
            big |= d > eps;
        }
        large += usize::from(big);
    }
    let pairs = trace.len() - 1;
    Ok(ChatterStats {
        variation,
        large_change_fraction: if pairs == 0 {
            0.0
        } else {
            large as f64 / pairs as f64
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobbinsMonroAudit {
    pub comparable_fraction: f64,
    pub sum_eta: f64,
    pub sum_eta_sq: f64,
}

/// Fraction of steps with `c η⁰_t ≤ η_t ≤ η⁰_t` (relative slack `1e-12`) and partial sums of `η_t`.
pub fn robbins_monro_audit(eta: &[f64], base: &[f64], c: f64) -> Result<RobbinsMonroAudit> {
    if eta.len() != base.len() {
        return Err(Error::Dimension(
            "eta and base schedules differ in length".into(),
        ));
    }
    let ok = eta
        .iter()
        .zip(base)
        .filter(|(e, b)| {
            let slack = 1e-12 * b.abs();
            c * *b - slack <= **e && **e <= *b + slack
        })
        .count();
    Ok(RobbinsMonroAudit {
        comparable_fraction: if eta.is_empty() {
            1.0
        } else {
            ok as f64 / eta.len() as f64
        },
        sum_eta: eta.iter().sum(),
        sum_eta_sq: eta.iter().map(|e| e * e).sum(),
    })
}
