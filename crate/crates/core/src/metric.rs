//! Ground metrics on finite state spaces, Wasserstein-1 dual norms of
//! signed measures, Lipschitz seminorms, and the mixing-scale certificate.
//!
//! The dual norm computed here is the Kantorovich-Rubinstein norm
//! `sup { |Σ f ξ| : ‖f‖_Lip ≤ 1 }` for zero-mass `ξ`. It carries no
//! sup-norm constraint on `f`, so it upper-bounds the bounded-Lipschitz norm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{FiniteMdp, ValueFn};

const TRIANGLE_TOL: f64 = 1e-9;
const ZERO_MASS_TOL: f64 = 1e-12;
/// Relative mass tolerance accepted by [`w1_dual_norm`].
pub const DUAL_NORM_MASS_TOL: f64 = 1e-8;

/// Structure of a ground metric; line and ring have closed-form dual norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MetricKind {
    /// States at increasing positions on the real line.
    Line {
        positions: Vec<f64>,
    },
    /// Cycle where edge `i` joins state `i` and `i + 1 (mod n)`.
    Ring {
        edge_lengths: Vec<f64>,
    },
    General,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundMetric {
    n: usize,
    dist: Vec<f64>,
    kind: MetricKind,
}

impl GroundMetric {
    pub fn line(positions: Vec<f64>) -> Result<Self> {
        let n = positions.len();
        if n == 0 {
            return Err(Error::InvalidMetric("empty state space".into()));
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMetric("non-finite position".into()));
        }
        if positions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidMetric(
                "line positions must be strictly increasing".into(),
            ));
        }
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                dist[i * n + j] = (positions[i] - positions[j]).abs();
            }
        }
        Ok(Self {
            n,
            dist,
            kind: MetricKind::Line { positions },
        })
    }

    pub fn unit_line(n: usize) -> Result<Self> {
        Self::line((0..n).map(|i| i as f64).collect())
    }

    pub fn ring(edge_lengths: Vec<f64>) -> Result<Self> {
        let n = edge_lengths.len();
        if n < 3 {
            return Err(Error::InvalidMetric(
                "a ring needs at least 3 states".into(),
            ));
        }
        if edge_lengths.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return Err(Error::InvalidMetric(
                "ring edge lengths must be positive".into(),
            ));
        }
        let total: f64 = edge_lengths.iter().sum();
        let mut offset = vec![0.0; n];
        for i in 1..n {
            offset[i] = offset[i - 1] + edge_lengths[i - 1];
        }
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let cw = (offset[j] - offset[i]).abs();
                dist[i * n + j] = cw.min(total - cw);
            }
        }
        Ok(Self {
            n,
            dist,
            kind: MetricKind::Ring { edge_lengths },
        })
    }

    pub fn unit_ring(n: usize) -> Result<Self> {
        Self::ring(vec![1.0; n])
    }

    /// Arbitrary finite metric given as a row-major `n × n` matrix; the
    /// metric axioms are checked (triangle inequality within 1e-9).
    pub fn general(n: usize, dist: Vec<f64>) -> Result<Self> {
        if n == 0 || dist.len() != n * n {
            return Err(Error::InvalidMetric(format!("need {n}x{n} distances")));
        }
        for i in 0..n {
            if dist[i * n + i] != 0.0 {
                return Err(Error::InvalidMetric(format!("d({i},{i}) != 0")));
            }
            for j in 0..n {
                let d = dist[i * n + j];
                if !(d >= 0.0) || !d.is_finite() {
                    return Err(Error::InvalidMetric(format!("d({i},{j}) = {d}")));
                }
                if (d - dist[j * n + i]).abs() > TRIANGLE_TOL {
                    return Err(Error::InvalidMetric(format!("d({i},{j}) != d({j},{i})")));
                }
                for k in 0..n {
                    if d > dist[i * n + k] + dist[k * n + j] + TRIANGLE_TOL {
                        return Err(Error::InvalidMetric(format!(
                            "triangle inequality fails for ({i},{k},{j})"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            n,
            dist,
            kind: MetricKind::General,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    pub fn kind(&self) -> &MetricKind {
        &self.kind
    }

    pub fn diameter(&self) -> f64 {
        self.dist.iter().copied().fold(0.0, f64::max)
    }

    /// Same distances, tagged as a general metric (forces the transport solver).
    pub fn as_general(&self) -> Self {
        Self {
            n: self.n,
            dist: self.dist.clone(),
            kind: MetricKind::General,
        }
    }
}

/// Finite signed measure on the state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedMeasure {
    pub weights: Vec<f64>,
    zero_mass: bool,
}

impl SignedMeasure {
    pub fn new(weights: Vec<f64>) -> Self {
        Self {
            weights,
            zero_mass: false,
        }
    }

    /// Measure asserted to have zero total mass (within 1e-12, relative to its
    /// total variation).
    pub fn with_zero_mass(weights: Vec<f64>) -> Result<Self> {
        let m = Self::new(weights);
        let mass = m.total_mass();
        if mass.abs() > ZERO_MASS_TOL * m.l1_norm().max(1.0) {
            return Err(Error::NonZeroMass(mass));
        }
        Ok(Self {
            zero_mass: true,
            ..m
        })
    }

    /// `p − q` for two probability vectors.
    pub fn difference(p: &[f64], q: &[f64]) -> Self {
        Self::new(p.iter().zip(q).map(|(a, b)| a - b).collect())
    }

    pub fn is_zero_mass(&self) -> bool {
        self.zero_mass
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn l1_norm(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            weights: self.weights.iter().map(|w| w * c).collect(),
            zero_mass: self.zero_mass,
        }
    }
}

/// Kantorovich-Rubinstein dual norm of a zero-mass signed measure.
pub fn w1_dual_norm(xi: &SignedMeasure, metric: &GroundMetric) -> Result<f64> {
    if xi.weights.len() != metric.n {
        return Err(Error::Dimension(format!(
            "measure has {} weights, metric has {} states",
            xi.weights.len(),
            metric.n
        )));
    }
    let mass = xi.total_mass();
    if mass.abs() > DUAL_NORM_MASS_TOL * xi.l1_norm().max(1.0) {
        return Err(Error::NonZeroMass(mass));
    }
    if xi.weights.iter().all(|w| *w == 0.0) {
        return Ok(0.0);
    }
    Ok(match &metric.kind {
        MetricKind::Line { positions } => line_dual_norm(&xi.weights, positions),
        MetricKind::Ring { edge_lengths } => ring_dual_norm(&xi.weights, edge_lengths),
        MetricKind::General => transport_cost(&xi.weights, metric),
    })
}

/// `W1(p, q)` between two probability vectors.
pub fn w1_distance(p: &[f64], q: &[f64], metric: &GroundMetric) -> Result<f64> {
    w1_dual_norm(&SignedMeasure::difference(p, q), metric)
}

fn line_dual_norm(w: &[f64], positions: &[f64]) -> f64 {
    let mut cum = 0.0;
    let mut total = 0.0;
    for i in 0..w.len() - 1 {
        cum += w[i];
        total += cum.abs() * (positions[i + 1] - positions[i]);
    }
    total
}

fn ring_dual_norm(w: &[f64], edges: &[f64]) -> f64 {
    // Flow on edge i is F_i − c; the optimal circulation shift c is a
    // weighted median of the cumulative sums under edge-length weights.
    let n = w.len();
    let mut cum = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &x in w {
        acc += x;
        cum.push(acc);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| cum[a].total_cmp(&cum[b]));
    let half: f64 = edges.iter().sum::<f64>() / 2.0;
    let mut running = 0.0;
    let mut c = cum[order[n - 1]];
    for &i in &order {
        running += edges[i];
        if running >= half {
            c = cum[i];
            break;
        }
    }
    cum.iter().zip(edges).map(|(f, e)| (f - c).abs() * e).sum()
}

/// Min-cost transport of `ξ⁺` onto `ξ⁻` by successive shortest paths.
fn transport_cost(w: &[f64], metric: &GroundMetric) -> f64 {
    let sources: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 0.0).collect();
    let sinks: Vec<usize> = (0..w.len()).filter(|&i| w[i] < 0.0).collect();
    let mut supply: Vec<f64> = sources.iter().map(|&i| w[i]).collect();
    let mut demand: Vec<f64> = sinks.iter().map(|&j| -w[j]).collect();
    // rebalance round-off so total supply equals total demand
    let (ts, td): (f64, f64) = (supply.iter().sum(), demand.iter().sum());
    if ts > td {
        supply.iter_mut().for_each(|x| *x *= td / ts);
    } else if td > ts {
        demand.iter_mut().for_each(|x| *x *= ts / td);
    }
    let (ns, nt) = (sources.len(), sinks.len());
    let cost = |i: usize, j: usize| metric.dist(sources[i], sinks[j]);
    let mut flow = vec![0.0; ns * nt];
    let eps = 1e-15 * ts.max(td).max(1.0);

    loop {
        if supply.iter().all(|&s| s <= eps) || demand.iter().all(|&d| d <= eps) {
            break;
        }
        // Bellman-Ford from all sources with remaining supply. Nodes 0..ns are
        // sources, ns..ns+nt are sinks. Forward arcs i→j (cost d), backward
        // arcs j→i (cost −d) when flow(i,j) > 0.
        let nn = ns + nt;
        let mut dist = vec![f64::INFINITY; nn];
        let mut pred: Vec<Option<usize>> = vec![None; nn];
        for i in 0..ns {
            if supply[i] > eps {
                dist[i] = 0.0;
            }
        }
        for _ in 0..nn {
            let mut changed = false;
            for i in 0..ns {
                if dist[i].is_finite() {
                    for j in 0..nt {
                        let nd = dist[i] + cost(i, j);
                        if nd < dist[ns + j] - 1e-15 {
                            dist[ns + j] = nd;
                            pred[ns + j] = Some(i);
                            changed = true;
                        }
                    }
                }
            }
            for j in 0..nt {
                if dist[ns + j].is_finite() {
                    for i in 0..ns {
                        if flow[i * nt + j] > eps {
                            let nd = dist[ns + j] - cost(i, j);
                            if nd < dist[i] - 1e-15 {
                                dist[i] = nd;
                                pred[i] = Some(ns + j);
                                changed = true;
                            }
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let target = (0..nt)
            .filter(|&j| demand[j] > eps && dist[ns + j].is_finite())
            .min_by(|&a, &b| dist[ns + a].total_cmp(&dist[ns + b]));
        let Some(tj) = target else { break };

        // walk back to a source, collecting the bottleneck
        let mut path = Vec::new();
        let mut node = ns + tj;
        while let Some(p) = pred[node] {
            path.push((p, node));
            node = p;
            if path.len() > nn {
                break;
            }
        }
        let src = node;
        let mut delta = supply[src].min(demand[tj]);
        for &(from, to) in &path {
            if from >= ns {
                // backward arc sink(from) → source(to)
                delta = delta.min(flow[to * nt + (from - ns)]);
            }
        }
        if delta <= eps {
            break;
        }
        for &(from, to) in &path {
            if from < ns {
                flow[from * nt + (to - ns)] += delta;
            } else {
                flow[to * nt + (from - ns)] -= delta;
            }
        }
        supply[src] -= delta;
        demand[tj] -= delta;
    }
    let mut total = 0.0;
    for i in 0..ns {
        for j in 0..nt {
            total += flow[i * nt + j] * cost(i, j);
        }
    }
    total
}

/// `α ‖ξ‖₁` with `α = diameter / 2`; dominates the dual norm for zero-mass `ξ`.
pub fn l1_surrogate_norm(xi: &SignedMeasure, metric: &GroundMetric) -> f64 {
    0.5 * metric.diameter() * xi.l1_norm()
}

/// `max_{x≠y} |f(x) − f(y)| / d(x, y)`.
pub fn lipschitz_seminorm(f: &ValueFn, metric: &GroundMetric) -> Result<f64> {
    lipschitz_seminorm_slice(&f.values, metric)
}

pub(crate) fn lipschitz_seminorm_slice(f: &[f64], metric: &GroundMetric) -> Result<f64> {
    if f.len() != metric.n {
        return Err(Error::Dimension(format!(
            "function has {} entries, metric has {} states",
            f.len(),
            metric.n
        )));
    }
    let mut best = 0.0f64;
    for i in 0..metric.n {
        for j in i + 1..metric.n {
            let diff = (f[i] - f[j]).abs();
            let d = metric.dist(i, j);
            if d == 0.0 {
                if diff > 0.0 {
                    return Err(Error::InfiniteSeminorm(i, j));
                }
                continue;
            }
            best = best.max(diff / d);
        }
    }
    Ok(best)
}

/// Uniform mixing scale `C_mix = L_r / (1 − γκ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingCertificate {
    /// Reward Lipschitz constant `L_r`.
    pub reward_lipschitz: f64,
    /// Kernel Wasserstein-Lipschitz constant `κ`.
    pub kappa: f64,
    pub gamma: f64,
    pub c_mix: f64,
}

impl MixingCertificate {
    pub fn from_constants(reward_lipschitz: f64, kappa: f64, gamma: f64) -> Result<Self> {
        let gk = gamma * kappa;
        if gk >= 1.0 {
            return Err(Error::NoCertificate(gk));
        }
        Ok(Self {
            reward_lipschitz,
            kappa,
            gamma,
            c_mix: reward_lipschitz / (1.0 - gk),
        })
    }

    /// Combine certificates from several MDPs sharing a discount (sup over the family).
    pub fn sup(certs: &[MixingCertificate]) -> Result<Self> {
        let first = certs
            .first()
            .ok_or_else(|| Error::InvalidParameter("no certificates to combine".into()))?;
        let lr = certs.iter().map(|c| c.reward_lipschitz).fold(0.0, f64::max);
        let kappa = certs.iter().map(|c| c.kappa).fold(0.0, f64::max);
        Self::from_constants(lr, kappa, first.gamma)
    }

    /// Default value-scale conversion constant `L_s`.
    pub fn l_s(&self) -> f64 {
        self.c_mix
    }
}

/// Computes `L_r` and `κ` exactly for one MDP and returns the certificate.
pub fn mixing_certificate(mdp: &FiniteMdp, metric: &GroundMetric) -> Result<MixingCertificate> {
    let ns = mdp.n_states();
    if metric.n != ns {
        return Err(Error::Dimension(format!(
            "metric has {} states, MDP has {ns}",
            metric.n
        )));
    }
    let mut lr = 0.0f64;
    for a in 0..mdp.n_actions() {
        let col: Vec<f64> = (0..ns).map(|s| mdp.reward(s, a)).collect();
        lr = lr.max(lipschitz_seminorm_slice(&col, metric)?);
    }
    let mut kappa = 0.0f64;
    for a in 0..mdp.n_actions() {
        for s in 0..ns {
            for s2 in s + 1..ns {
                let d = metric.dist(s, s2);
                if d == 0.0 {
                    return Err(Error::InvalidMetric(format!(
                        "states {s} and {s2} coincide"
                    )));
                }
                kappa = kappa.max(w1_distance(mdp.row(s, a), mdp.row(s2, a), metric)? / d);
            }
        }
    }
    MixingCertificate::from_constants(lr, kappa, mdp.discount())
}
