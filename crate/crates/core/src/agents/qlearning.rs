use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PathGeometry;
use crate::mdp::{greedy_policy, QTable};
use crate::path::MdpPath;
use crate::scheduler::{HyperParams, SchedulerConfig, SchedulerState, Transition};

use super::env::{Episodes, PathEnv, ProxyEngine};
use super::oracle::Oracle;
use super::process::PathProcess;
use super::trace::{RunTrace, StepRecord};

/// Model used by the planner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSource {
    /// Exact `M(τ_t)`.
    TrueModel,
    /// Tabular EMA estimates of rewards and kernels.
    EmaModel,
}

fn default_steps() -> u64 {
    4000
}
fn default_seeds() -> u64 {
    5
}
fn default_eps() -> f64 {
    0.1
}
fn default_batch() -> usize {
    16
}
fn default_recent() -> usize {
    1000
}
fn default_proxy_batch() -> usize {
    64
}
fn default_episode() -> u64 {
    100
}
fn default_c_uct() -> f64 {
    2.0
}
fn default_model() -> ModelSource {
    ModelSource::TrueModel
}
fn default_model_rate() -> f64 {
    5.0
}
fn default_snap() -> f64 {
    1e-3
}
fn default_process() -> PathProcess {
    PathProcess::LinearRamp {
        tau0: 0.0,
        tau1: 1.0,
    }
}

/// Learner and planner settings shared by all run modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    #[serde(rename = "T", default = "default_steps")]
    pub steps: u64,
    #[serde(default = "default_seeds")]
    pub seeds: u64,
    #[serde(default = "default_eps")]
    pub epsilon_greedy: f64,
    /// Q-updates per step: the newest transition plus uniform draws from recent replay.
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default = "default_recent")]
    pub replay_recent: usize,
    /// Replay draws per proxy estimate.
    #[serde(default = "default_proxy_batch")]
    pub proxy_batch: usize,
    #[serde(default = "default_episode")]
    pub episode_len: u64,
    /// Initial Q value; defaults to the largest reward on the path over `1 − γ`.
    #[serde(default)]
    pub q_init: Option<f64>,
    #[serde(default = "default_c_uct")]
    pub c_uct: f64,
    #[serde(default = "default_model")]
    pub model: ModelSource,
    /// Model EMA rate as a multiple of `η_t`.
    #[serde(default = "default_model_rate")]
    pub model_rate: f64,
    /// Grid spacing for memoized exact solves.
    #[serde(default = "default_snap")]
    pub snap: f64,
    #[serde(default = "default_process")]
    pub process: PathProcess,
    /// Static-baseline overrides; the scheduler's zero-proxy map otherwise.
    #[serde(default)]
    pub static_eta: Option<f64>,
    #[serde(default)]
    pub static_nu: Option<f64>,
    #[serde(default)]
    pub static_lambda: Option<f64>,
    #[serde(default)]
    pub static_depth: Option<usize>,
    #[serde(default)]
    pub static_budget: Option<usize>,
    /// Total simulations for static MCTS, spread as evenly as integers allow.
    /// Takes precedence over `static_budget`.
    #[serde(default)]
    pub static_total_budget: Option<u64>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            steps: default_steps(),
            seeds: default_seeds(),
            epsilon_greedy: default_eps(),
            batch: default_batch(),
            replay_recent: default_recent(),
            proxy_batch: default_proxy_batch(),
            episode_len: default_episode(),
            q_init: None,
            c_uct: default_c_uct(),
            model: default_model(),
            model_rate: default_model_rate(),
            snap: default_snap(),
            process: default_process(),
            static_eta: None,
            static_nu: None,
            static_lambda: None,
            static_depth: None,
            static_budget: None,
            static_total_budget: None,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.steps == 0 {
            return bad("T must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.epsilon_greedy) {
            return bad("epsilon_greedy must lie in [0, 1]");
        }
        if self.batch == 0
            || self.replay_recent == 0
            || self.proxy_batch == 0
            || self.episode_len == 0
        {
            return bad("batch, replay_recent, proxy_batch and episode_len must be positive");
        }
        if !(self.c_uct >= 0.0) || !(self.model_rate > 0.0) {
            return bad("c_uct must be nonnegative and model_rate positive");
        }
        if self.q_init.is_some_and(|q| !q.is_finite()) {
            return bad("q_init must be finite");
        }
        self.process.validate()
    }

    /// Constant hyperparameters of the static baselines.
    pub fn static_hyper(&self, sched: &SchedulerConfig) -> HyperParams {
        let idle = sched.idle();
        HyperParams {
            eta: self.static_eta.unwrap_or(idle.eta),
            nu: self.static_nu.unwrap_or(idle.nu),
            lambda: self.static_lambda.unwrap_or(idle.lambda),
            depth: self.static_depth.unwrap_or(idle.depth),
            budget: self.static_budget.unwrap_or(idle.budget),
        }
    }

    /// Static MCTS budget at `step`.
    pub fn static_budget_at(&self, sched: &SchedulerConfig, step: u64) -> usize {
        match self.static_total_budget {
            Some(total) => {
                let (base, rem) = (total / self.steps, total % self.steps);
                (base + u64::from(step < rem)) as usize
            }
            None => self.static_hyper(sched).budget,
        }
    }
}

/// Static step size: the base (or overridden) rate under the configured decay, clipped.
pub(crate) fn static_eta(agent: &AgentConfig, sched: &SchedulerConfig, step: u64) -> f64 {
    sched
        .decayed(agent.static_eta.unwrap_or(sched.eta0), step)
        .clamp(sched.eta_min, sched.eta_max)
}

/// Independent generator streams derived from one seed.
pub(crate) struct Streams {
    pub env: ChaCha8Rng,
    pub agent: ChaCha8Rng,
    pub planner: ChaCha8Rng,
    pub process: ChaCha8Rng,
    pub proxy: ChaCha8Rng,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        let mk = |stream: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(stream);
            r
        };
        Self {
            env: mk(1),
            agent: mk(2),
            planner: mk(3),
            process: mk(4),
            proxy: mk(5),
        }
    }
}

/// `ΔGeo_t` on `[τ_t, τ_{t+1}]`, 0 without a geometry analysis.
pub(crate) fn geo_load(geometry: Option<&PathGeometry>, taus: &[f64], t: usize) -> Result<f64> {
    match (geometry, taus.get(t + 1)) {
        (Some(g), Some(&next)) if next > taus[t] => Ok(g.value_bound(taus[t], next)?.bound),
        _ => Ok(0.0),
    }
}

pub(crate) fn epsilon_greedy(q: &QTable, s: usize, eps: f64, rng: &mut ChaCha8Rng) -> usize {
    let na = q.n_actions();
    if rng.gen::<f64>() < eps {
        rng.gen_range(0..na)
    } else {
        argmax(q.state_row(s))
    }
}

/// First index of the maximum.
pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Optimistic initial value: `max_τ max r_τ / (1 − γ)` over an 11-point grid.
pub(crate) fn resolve_q_init(path: &MdpPath, agent: &AgentConfig) -> Result<f64> {
    if let Some(q) = agent.q_init {
        return Ok(q);
    }
    let mut r_max = f64::NEG_INFINITY;
    for i in 0..=10 {
        let m = path.evaluate(i as f64 / 10.0)?;
        r_max = m.rewards().iter().fold(r_max, |acc, &r| acc.max(r));
    }
    Ok(r_max / (1.0 - path.discount()))
}

pub(crate) fn resolve_l_s(path: &MdpPath, sched: &SchedulerConfig) -> Result<f64> {
    match sched.l_s {
        Some(l) => Ok(l),
        None => path.l_s(),
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Ht,
    Static,
}

/// Homotopy-tracking Q-learning: replay proxies drive the scheduler, which
/// sets `(η_t, ν_t, λ_t)` for the regularized target-network update.
pub fn ht_q_learning_run(
    path: &MdpPath,
    geometry: Option<&PathGeometry>,
    sched: &SchedulerConfig,
    agent: &AgentConfig,
    seed: u64,
) -> Result<RunTrace> {
    q_learning(path, geometry, sched, agent, seed, Mode::Ht)
}

/// The same learner with constant hyperparameters.
pub fn static_q_learning_run(
    path: &MdpPath,
    geometry: Option<&PathGeometry>,
    sched: &SchedulerConfig,
    agent: &AgentConfig,
    seed: u64,
) -> Result<RunTrace> {
    q_learning(path, geometry, sched, agent, seed, Mode::Static)
}

fn q_learning(
    path: &MdpPath,
    geometry: Option<&PathGeometry>,
    sched: &SchedulerConfig,
    agent: &AgentConfig,
    seed: u64,
    mode: Mode,
) -> Result<RunTrace> {
    agent.validate()?;
    let mut scheduler = SchedulerState::new(sched.clone())?;
    let fixed = agent.static_hyper(sched);
    let (ns, na) = (path.n_states(), path.n_actions());
    let gamma = path.discount();
    let mut rng = Streams::new(seed);
    let taus = agent.process.sequence(agent.steps, &mut rng.process)?;
    let mut env = PathEnv::new(path.clone(), taus[0])?;
    let mut oracle = Oracle::new(path.clone(), agent.snap)?;
    let mut proxies = match mode {
        Mode::Ht => Some(ProxyEngine::new(
            sched,
            resolve_l_s(path, sched)?,
            ns,
            agent.proxy_batch,
        )?),
        Mode::Static => None,
    };
    let mut recent: std::collections::VecDeque<Transition> = std::collections::VecDeque::new();

    let mut q = QTable::from_values(ns, na, vec![resolve_q_init(path, agent)?; ns * na])?;
    let mut target = q.clone();
    let mut episodes = Episodes::new(agent.episode_len);
    let mut s = rng.env.gen_range(0..ns);
    let mut trace = RunTrace::default();

    for (t, &tau) in taus.iter().enumerate() {
        let step = t as u64;
        env.set_tau(tau)?;
        let a = epsilon_greedy(&q, s, agent.epsilon_greedy, &mut rng.agent);
        let (r, s_next) = env.step(s, a, &mut rng.env);
        let tr = Transition {
            s,
            a,
            r,
            s_next,
            step,
        };
        recent.push_back(tr);
        if recent.len() > agent.replay_recent {
            recent.pop_front();
        }

        let hp = match proxies.as_mut() {
            Some(engine) => {
                engine.push(tr)?;
                if scheduler.is_tick(step) {
                    let table = if sched.gap_on_target { &target } else { &q };
                    let raw = engine.tick(step, table, &mut rng.proxy);
                    scheduler.step(&raw, step);
                }
                scheduler.hyper_at(step)
            }
            None => HyperParams {
                eta: static_eta(agent, sched, step),
                ..fixed
            },
        };

        for k in 0..agent.batch {
            let u = if k == 0 {
                tr
            } else {
                recent[rng.agent.gen_range(0..recent.len())]
            };
            let boot = target
                .state_row(u.s_next)
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            let cur = q.get(u.s, u.a);
            let next = cur + hp.eta * (u.r + gamma * boot - cur)
                - hp.eta * hp.lambda * (cur - target.get(u.s, u.a));
            q.set(u.s, u.a, next);
        }
        for (tv, qv) in target.values_mut().iter_mut().zip(q.values()) {
            *tv = (1.0 - hp.nu) * *tv + hp.nu * qv;
        }

        let e_t = oracle.tracking_error(tau, &q)?;
        let regret_inc = oracle.regret(tau, &greedy_policy(&q))?;
        let done = episodes.record(step, r);
        s = if done {
            rng.env.gen_range(0..ns)
        } else {
            s_next
        };
        trace.records.push(StepRecord {
            step,
            tau,
            e_t,
            regret_inc,
            geo_load: geo_load(geometry, &taus, t)?,
            eta: hp.eta,
            nu: hp.nu,
            lambda: hp.lambda,
            depth: hp.depth,
            budget: hp.budget,
            episode_return: episodes.last_return,
        });
    }
    trace.scheduler_updates = scheduler.updates();
    if proxies.is_some() {
        trace.hysteresis_moves = scheduler.moves().to_vec();
    }
    Ok(trace)
}
