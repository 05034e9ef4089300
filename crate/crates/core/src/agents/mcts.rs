use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PathGeometry;
use crate::mdp::{FiniteMdp, Policy, QTable};
use crate::path::MdpPath;
use crate::scheduler::{HyperParams, SchedulerConfig, SchedulerState, Transition};

use super::env::{sample_row, Episodes, PathEnv, ProxyEngine};
use super::oracle::Oracle;
use super::qlearning::{
    geo_load, resolve_l_s, resolve_q_init, static_eta, AgentConfig, ModelSource, Streams,
};
use super::trace::{RunTrace, StepRecord};

/// Root statistics of one UCT search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub action: usize,
    pub visits: Vec<u32>,
    /// Mean discounted return per root action (0 when unvisited).
    pub values: Vec<f64>,
    pub expansions: u64,
}

struct Node {
    state: usize,
    remaining: usize,
    n: u32,
    n_a: Vec<u32>,
    w_a: Vec<f64>,
    children: Vec<Vec<(usize, usize)>>,
}

impl Node {
    fn new(state: usize, remaining: usize, na: usize) -> Self {
        Self {
            state,
            remaining,
            n: 0,
            n_a: vec![0; na],
            w_a: vec![0.0; na],
            children: vec![Vec::new(); na],
        }
    }

    fn select(&self, c: f64) -> usize {
        if let Some(a) = self.n_a.iter().position(|n| *n == 0) {
            return a;
        }
        let ln = (self.n as f64).ln();
        let score =
            |a: usize| self.w_a[a] / self.n_a[a] as f64 + c * (ln / self.n_a[a] as f64).sqrt();
        let mut best = 0;
        for a in 1..self.n_a.len() {
            if score(a) > score(best) {
                best = a;
            }
        }
        best
    }
}

fn rollout(model: &FiniteMdp, mut s: usize, steps: usize, rng: &mut ChaCha8Rng) -> f64 {
    let gamma = model.discount();
    let mut g = 0.0;
    let mut disc = 1.0;
    for _ in 0..steps {
        let a = rng.gen_range(0..model.n_actions());
        g += disc * model.reward(s, a);
        disc *= gamma;
        s = sample_row(model.row(s, a), rng);
    }
    g
}

/// UCT from `root` with `budget` simulations of horizon `depth`; one node is
/// expanded per simulation and leaves are valued by uniform random rollouts.
/// Acts by root visit count, ties to the lowest index.
pub fn uct_plan(
    model: &FiniteMdp,
    root: usize,
    depth: usize,
    budget: usize,
    c_uct: f64,
    rng: &mut ChaCha8Rng,
) -> Result<PlanResult> {
    let na = model.n_actions();
    if depth == 0 || budget < na {
        return Err(Error::InvalidParameter(format!(
            "uct needs depth >= 1 and budget >= {na}"
        )));
    }
    if root >= model.n_states() {
        return Err(Error::Dimension(format!("root state {root}")));
    }
    let gamma = model.discount();
    let mut nodes = vec![Node::new(root, depth, na)];
    let mut expansions = 0u64;
    let mut path: Vec<(usize, usize, f64)> = Vec::with_capacity(depth);
    for _ in 0..budget {
        path.clear();
        let mut id = 0;
        let mut leaf = 0.0;
        while nodes[id].remaining > 0 {
            let a = nodes[id].select(c_uct);
            let s = nodes[id].state;
            let r = model.reward(s, a);
            let s2 = sample_row(model.row(s, a), rng);
            path.push((id, a, r));
            let remaining = nodes[id].remaining - 1;
            match nodes[id].children[a].iter().find(|(st, _)| *st == s2) {
                Some(&(_, child)) => id = child,
                None => {
                    let child = nodes.len();
                    nodes.push(Node::new(s2, remaining, na));
                    nodes[id].children[a].push((s2, child));
                    expansions += 1;
                    leaf = rollout(model, s2, remaining, rng);
                    break;
                }
            }
        }
        let mut g = leaf;
        for &(id, a, r) in path.iter().rev() {
            g = r + gamma * g;
            let node = &mut nodes[id];
            node.n += 1;
            node.n_a[a] += 1;
            node.w_a[a] += g;
        }
    }
    let root = &nodes[0];
    let mut action = 0;
    for a in 1..na {
        if root.n_a[a] > root.n_a[action] {
            action = a;
        }
    }
    let values = (0..na)
        .map(|a| {
            if root.n_a[a] == 0 {
                0.0
            } else {
                root.w_a[a] / root.n_a[a] as f64
            }
        })
        .collect();
    Ok(PlanResult {
        action,
        visits: root.n_a.clone(),
        values,
        expansions,
    })
}

/// Tabular EMA estimates `(r̂, P̂)`, starting from zero rewards and uniform kernels.
struct EmaModel {
    ns: usize,
    na: usize,
    gamma: f64,
    r: Vec<f64>,
    p: Vec<f64>,
}

impl EmaModel {
    fn new(ns: usize, na: usize, gamma: f64) -> Self {
        Self {
            ns,
            na,
            gamma,
            r: vec![0.0; ns * na],
            p: vec![1.0 / ns as f64; ns * na * ns],
        }
    }

    fn update(&mut self, t: &Transition, rate: f64) {
        let i = t.s * self.na + t.a;
        self.r[i] += rate * (t.r - self.r[i]);
        let row = &mut self.p[i * self.ns..(i + 1) * self.ns];
        for (k, p) in row.iter_mut().enumerate() {
            *p = (1.0 - rate) * *p + if k == t.s_next { rate } else { 0.0 };
        }
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= sum);
    }

    fn mdp(&self) -> Result<FiniteMdp> {
        FiniteMdp::new(self.ns, self.na, self.p.clone(), self.r.clone(), self.gamma)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Ht,
    Static,
}

/// Homotopy-tracking MCTS: replay proxies drive the scheduler, which sets the
/// planner's depth and simulation budget each step.
pub fn ht_mcts_run(
    path: &MdpPath,
    geometry: Option<&PathGeometry>,
    sched: &SchedulerConfig,
    agent: &AgentConfig,
    seed: u64,
) -> Result<RunTrace> {
    mcts(path, geometry, sched, agent, seed, Mode::Ht)
}

/// UCT with constant depth and budget.
pub fn static_mcts_run(
    path: &MdpPath,
    geometry: Option<&PathGeometry>,
    sched: &SchedulerConfig,
    agent: &AgentConfig,
    seed: u64,
) -> Result<RunTrace> {
    mcts(path, geometry, sched, agent, seed, Mode::Static)
}

fn mcts(
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
    let mut learned = EmaModel::new(ns, na, path.discount());
    // root value estimates and most recent planned action per state
    let mut roots = QTable::from_values(ns, na, vec![resolve_q_init(path, agent)?; ns * na])?;
    let mut policy = Policy::new(vec![0; ns]);
    let mut episodes = Episodes::new(agent.episode_len);
    let mut s = rng.env.gen_range(0..ns);
    let mut trace = RunTrace::default();

    for (t, &tau) in taus.iter().enumerate() {
        let step = t as u64;
        env.set_tau(tau)?;
        let hp = match proxies.as_mut() {
            Some(engine) => {
                if scheduler.is_tick(step) {
                    let raw = engine.tick(step, &roots, &mut rng.proxy);
                    scheduler.step(&raw, step);
                }
                scheduler.hyper_at(step)
            }
            None => HyperParams {
                eta: static_eta(agent, sched, step),
                budget: agent.static_budget_at(sched, step),
                ..fixed
            },
        };
        let model = match agent.model {
            ModelSource::TrueModel => env.mdp().clone(),
            ModelSource::EmaModel => learned.mdp()?,
        };
        let plan = uct_plan(
            &model,
            s,
            hp.depth.max(1),
            hp.budget.max(na),
            agent.c_uct,
            &mut rng.planner,
        )?;
        trace.expansions += plan.expansions;
        for (a, v) in plan.values.iter().enumerate() {
            if plan.visits[a] > 0 {
                roots.set(s, a, *v);
            }
        }
        policy.actions[s] = plan.action;

        let (r, s_next) = env.step(s, plan.action, &mut rng.env);
        let tr = Transition {
            s,
            a: plan.action,
            r,
            s_next,
            step,
        };
        if let Some(engine) = proxies.as_mut() {
            engine.push(tr)?;
        }
        if agent.model == ModelSource::EmaModel {
            learned.update(&tr, (agent.model_rate * hp.eta).min(1.0));
        }

        let e_t = oracle.tracking_error(tau, &roots)?;
        let regret_inc = oracle.regret(tau, &policy)?;
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
            depth: hp.depth.max(1),
            budget: hp.budget.max(na),
            episode_return: episodes.last_return,
        });
    }
    trace.scheduler_updates = scheduler.updates();
    if proxies.is_some() {
        trace.hysteresis_moves = scheduler.moves().to_vec();
    }
    Ok(trace)
}
