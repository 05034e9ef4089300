use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::mdp::{FiniteMdp, QTable};
use crate::path::MdpPath;
use crate::scheduler::{
    feature_mean_drift, minibatch_gap, reward_drift, ProxySignals, ProxyTracker, ReplayBuffer,
    SchedulerConfig, StateFeatures, Transition,
};

/// Draws an index from a probability row.
pub(crate) fn sample_row(row: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in row.iter().enumerate() {
        if *p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Environment following the path at the current `τ_t`.
pub(crate) struct PathEnv {
    path: MdpPath,
    tau: f64,
    mdp: FiniteMdp,
}

impl PathEnv {
    pub fn new(path: MdpPath, tau: f64) -> Result<Self> {
        let mdp = path.evaluate(tau)?;
        Ok(Self { path, tau, mdp })
    }

    pub fn set_tau(&mut self, tau: f64) -> Result<()> {
        if tau != self.tau {
            self.mdp = self.path.evaluate(tau)?;
            self.tau = tau;
        }
        Ok(())
    }

    pub fn mdp(&self) -> &FiniteMdp {
        &self.mdp
    }

    pub fn step(&self, s: usize, a: usize, rng: &mut ChaCha8Rng) -> (f64, usize) {
        (self.mdp.reward(s, a), sample_row(self.mdp.row(s, a), rng))
    }
}

/// Replay buffer plus drift estimation at scheduler ticks.
pub(crate) struct ProxyEngine {
    pub buffer: ReplayBuffer,
    tracker: ProxyTracker,
    features: StateFeatures,
    w1: u64,
    ema_rate: f64,
    batch: usize,
}

impl ProxyEngine {
    pub fn new(cfg: &SchedulerConfig, l_s: f64, n_states: usize, batch: usize) -> Result<Self> {
        Ok(Self {
            buffer: ReplayBuffer::new((2 * cfg.w1) as usize)?,
            tracker: ProxyTracker::new(l_s, cfg.w2, cfg.eps_gap)?,
            features: StateFeatures::OneHot(n_states),
            w1: cfg.w1,
            ema_rate: cfg.ema_rate,
            batch: batch.max(1),
        })
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        self.buffer.push(t)
    }

    /// Fresh proxies from a replay minibatch, or the previous ones while the
    /// buffer is too short.
    pub fn tick(&mut self, step: u64, gap_table: &QTable, rng: &mut ChaCha8Rng) -> ProxySignals {
        if self.buffer.span() < 2 * self.w1 {
            return self.tracker.last();
        }
        let n = self.buffer.len();
        let picks: Vec<Transition> = (0..self.batch)
            .map(|_| *self.buffer.get(rng.gen_range(0..n)).expect("in range"))
            .collect();
        let pairs: Vec<(usize, usize)> = picks.iter().map(|t| (t.s, t.a)).collect();
        let states: Vec<usize> = picks.iter().map(|t| t.s).collect();
        let dr = reward_drift(&self.buffer, self.w1, &pairs, self.ema_rate).unwrap_or(0.0);
        let dp = feature_mean_drift(&self.buffer, self.w1, &pairs, &self.features).unwrap_or(0.0);
        self.tracker
            .update(step, dr, dp, minibatch_gap(gap_table, &states))
    }
}

/// Episode bookkeeping: resets every `len` steps and reports the last completed return.
pub(crate) struct Episodes {
    len: u64,
    running: f64,
    pub last_return: f64,
}

impl Episodes {
    pub fn new(len: u64) -> Self {
        Self {
            len: len.max(1),
            running: 0.0,
            last_return: 0.0,
        }
    }

    /// Adds a reward; returns true when the episode ended and the state must be reset.
    pub fn record(&mut self, step: u64, r: f64) -> bool {
        self.running += r;
        if (step + 1).is_multiple_of(self.len) {
            self.last_return = self.running;
            self.running = 0.0;
            true
        } else {
            false
        }
    }
}
