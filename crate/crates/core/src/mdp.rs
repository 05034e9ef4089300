//! Exact tabular machinery: Bellman operators, value iteration, policy
//! evaluation, action gaps, and resolvent solves on the state-action space.
//!
//! State-action tables are stored row-major with index `s * n_actions + a`.
//! Transition tensors use `(s * n_actions + a) * n_states + s'`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-12;

/// Default stopping tolerance for [`value_iteration`].
pub const DEFAULT_VI_TOL: f64 = 1e-10;
/// Default iteration cap for [`value_iteration`].
pub const DEFAULT_VI_MAX_ITER: usize = 200_000;

/// A discounted MDP with finite state and action sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    discount: f64,
}

impl FiniteMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidMdp(
                "state and action counts must be positive".into(),
            ));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(Error::Dimension(format!(
                "transition has {} entries, expected {}",
                transition.len(),
                n_states * n_actions * n_states
            )));
        }
        if reward.len() != n_states * n_actions {
            return Err(Error::Dimension(format!(
                "reward has {} entries, expected {}",
                reward.len(),
                n_states * n_actions
            )));
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(Error::InvalidMdp(format!(
                "discount {discount} outside (0, 1)"
            )));
        }
        if let Some(i) = reward.iter().position(|r| !r.is_finite()) {
            return Err(Error::InvalidMdp(format!("reward entry {i} is not finite")));
        }
        for (row_idx, row) in transition.chunks(n_states).enumerate() {
            if row.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
                return Err(Error::InvalidMdp(format!(
                    "transition row (s={}, a={}) has a negative or non-finite entry",
                    row_idx / n_actions,
                    row_idx % n_actions
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidMdp(format!(
                    "transition row (s={}, a={}) sums to {sum}",
                    row_idx / n_actions,
                    row_idx % n_actions
                )));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            transition,
            reward,
            discount,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Size of the state-action space.
    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transition
    }

    /// Next-state distribution `P(. | s, a)`.
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    /// `max r - min r` over all state-action pairs.
    pub fn reward_range(&self) -> f64 {
        let (lo, hi) = self
            .reward
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                (lo.min(r), hi.max(r))
            });
        hi - lo
    }

    fn check_table(&self, q: &QTable) -> Result<()> {
        if q.n_states != self.n_states || q.n_actions != self.n_actions {
            return Err(Error::Dimension(format!(
                "table is {}x{}, MDP is {}x{}",
                q.n_states, q.n_actions, self.n_states, self.n_actions
            )));
        }
        Ok(())
    }

    fn check_policy(&self, pi: &Policy) -> Result<()> {
        if pi.actions.len() != self.n_states {
            return Err(Error::Dimension(format!(
                "policy covers {} states, MDP has {}",
                pi.actions.len(),
                self.n_states
            )));
        }
        if let Some(s) = pi.actions.iter().position(|&a| a >= self.n_actions) {
            return Err(Error::Dimension(format!(
                "policy action at state {s} out of range"
            )));
        }
        Ok(())
    }
}

/// Action-value table indexed by `(s, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
        }
    }

    pub fn from_values(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::Dimension(format!(
                "{} values for a {}x{} table",
                values.len(),
                n_states,
                n_actions
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "Q-table entries must be finite".into(),
            ));
        }
        Ok(Self {
            n_states,
            n_actions,
            values,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.n_actions + a] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn state_row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// `V(s) = max_a Q(s, a)`.
    pub fn state_values(&self) -> ValueFn {
        ValueFn {
            values: (0..self.n_states)
                .map(|s| {
                    self.state_row(s)
                        .iter()
                        .copied()
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect(),
        }
    }

    /// Sup-norm distance to another table of the same shape.
    pub fn sup_distance(&self, other: &QTable) -> f64 {
        sup_diff(&self.values, &other.values)
    }

    pub fn sup_norm(&self) -> f64 {
        sup_norm(&self.values)
    }

    /// `max Q - min Q`.
    pub fn value_range(&self) -> f64 {
        let (lo, hi) = self
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        hi - lo
    }
}

/// Deterministic stationary policy.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Policy {
    pub actions: Vec<usize>,
}

impl Policy {
    pub fn new(actions: Vec<usize>) -> Self {
        Self { actions }
    }

    pub fn action(&self, s: usize) -> usize {
        self.actions[s]
    }
}

/// State-value function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFn {
    pub values: Vec<f64>,
}

impl ValueFn {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn get(&self, s: usize) -> f64 {
        self.values[s]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub(crate) fn sup_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub(crate) fn sup_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

/// `(T Q)(s,a) = r(s,a) + γ Σ_{s'} P(s'|s,a) max_{a'} Q(s',a')`.
pub fn bellman_optimal_apply(mdp: &FiniteMdp, q: &QTable) -> Result<QTable> {
    mdp.check_table(q)?;
    let v = q.state_values();
    Ok(apply_with_values(mdp, &v.values))
}

fn apply_with_values(mdp: &FiniteMdp, v: &[f64]) -> QTable {
    let mut out = QTable::zeros(mdp.n_states, mdp.n_actions);
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let ev: f64 = mdp.row(s, a).iter().zip(v).map(|(p, x)| p * x).sum();
            out.set(s, a, mdp.reward(s, a) + mdp.discount * ev);
        }
    }
    out
}

/// Result of [`value_iteration`].
#[derive(Debug, Clone)]
pub struct ValueIterationOutcome {
    pub q: QTable,
    pub iterations: usize,
    /// Final sup-norm residual `‖T Q − Q‖∞`.
    pub residual: f64,
    /// A-posteriori bound on `‖Q − Q⋆‖∞`, namely `residual · γ / (1 − γ)`.
    pub error_bound: f64,
}

/// Plain value iteration from `Q ≡ 0`, stopped once `‖T Q − Q‖∞ ≤ tol`.
///
/// The returned table is the last iterate `Q` whose residual met `tol`.
pub fn value_iteration(
    mdp: &FiniteMdp,
    tol: f64,
    max_iter: usize,
) -> Result<ValueIterationOutcome> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let mut q = QTable::zeros(mdp.n_states, mdp.n_actions);
    let mut residual = f64::INFINITY;
    for it in 0..max_iter {
        let next = bellman_optimal_apply(mdp, &q)?;
        residual = next.sup_distance(&q);
        if residual <= tol {
            let g = mdp.discount;
            return Ok(ValueIterationOutcome {
                q,
                iterations: it + 1,
                residual,
                error_bound: residual * g / (1.0 - g),
            });
        }
        q = next;
    }
    Err(Error::IterationLimit {
        iterations: max_iter,
        residual,
    })
}

/// Greedy policy; ties resolve to the lowest action index.
pub fn greedy_policy(q: &QTable) -> Policy {
    let actions = (0..q.n_states)
        .map(|s| {
            let row = q.state_row(s);
            let mut best = 0;
            for (a, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = a;
                }
            }
            best
        })
        .collect();
    Policy { actions }
}

/// Per-state and global action gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionGap {
    pub per_state: Vec<f64>,
    pub global: f64,
    /// State attaining the global minimum (lowest index on ties).
    pub argmin_state: usize,
}

/// `max_a Q(s,a) − second_max_a Q(s,a)` per state and its minimum over states.
///
/// Duplicated maxima give a gap of exactly 0.
pub fn action_gap(q: &QTable) -> Result<ActionGap> {
    action_gap_masked(q, None)
}

/// As [`action_gap`], but the global minimum runs only over states with
/// `mask[s] == true`. `None` uses every state.
pub fn action_gap_masked(q: &QTable, mask: Option<&[bool]>) -> Result<ActionGap> {
    if q.n_actions < 2 {
        return Err(Error::GapUndefined(q.n_actions));
    }
    if let Some(m) = mask {
        if m.len() != q.n_states {
            return Err(Error::Dimension(format!(
                "state mask has {} entries, table has {} states",
                m.len(),
                q.n_states
            )));
        }
        if !m.iter().any(|&b| b) {
            return Err(Error::InvalidParameter(
                "state mask selects no states".into(),
            ));
        }
    }
    let per_state: Vec<f64> = (0..q.n_states).map(|s| state_gap(q.state_row(s))).collect();
    let mut global = f64::INFINITY;
    let mut argmin_state = 0;
    for (s, &g) in per_state.iter().enumerate() {
        if mask.is_some_and(|m| !m[s]) {
            continue;
        }
        if g < global {
            global = g;
            argmin_state = s;
        }
    }
    Ok(ActionGap {
        per_state,
        global,
        argmin_state,
    })
}

pub(crate) fn state_gap(row: &[f64]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for &v in row {
        if v > best {
            second = best;
            best = v;
        } else if v > second {
            second = v;
        }
    }
    best - second
}

/// Policy-induced operator on state-action functions:
/// entry `((s,a), (s', π(s'))) = P(s'|s,a)`.
pub fn policy_transition(mdp: &FiniteMdp, pi: &Policy) -> Result<DMatrix<f64>> {
    mdp.check_policy(pi)?;
    let na = mdp.n_actions;
    let m = mdp.n_pairs();
    let mut out = DMatrix::<f64>::zeros(m, m);
    for s in 0..mdp.n_states {
        for a in 0..na {
            let row = s * na + a;
            for (s2, &p) in mdp.row(s, a).iter().enumerate() {
                if p != 0.0 {
                    out[(row, s2 * na + pi.actions[s2])] += p;
                }
            }
        }
    }
    Ok(out)
}

/// LU-factorized resolvent `(I − γ P^π)^{-1}` for repeated solves.
pub struct Resolvent {
    system: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    discount: f64,
}

impl Resolvent {
    pub fn new(mdp: &FiniteMdp, pi: &Policy) -> Result<Self> {
        let p = policy_transition(mdp, pi)?;
        let m = p.nrows();
        let system = DMatrix::<f64>::identity(m, m) - p * mdp.discount;
        let lu = system.clone().lu();
        Ok(Self {
            system,
            lu,
            discount: mdp.discount,
        })
    }

    /// Solve `(I − γ P^π) y = x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.system.nrows() {
            return Err(Error::Dimension(format!(
                "right-hand side has {} entries, expected {}",
                x.len(),
                self.system.nrows()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "resolvent input must be finite".into(),
            ));
        }
        let rhs = DVector::from_column_slice(x);
        let y = self
            .lu
            .solve(&rhs)
            .ok_or_else(|| Error::Solver("singular (I - γP^π) system".into()))?;
        let residual = sup_norm((&self.system * &y - &rhs).as_slice());
        let scale = 1.0f64.max(sup_norm(x) / (1.0 - self.discount));
        if residual > 1e-10 * scale {
            return Err(Error::Solver(format!(
                "residual {residual:e} exceeds tolerance"
            )));
        }
        Ok(y.as_slice().to_vec())
    }
}

/// `y = (I − γ P^π)^{-1} x` by direct LU solve.
pub fn resolvent_apply(mdp: &FiniteMdp, pi: &Policy, x: &[f64]) -> Result<Vec<f64>> {
    Resolvent::new(mdp, pi)?.apply(x)
}

/// Exact `Q^π` from the linear system `(I − γ P^π) q = r`.
pub fn policy_evaluation(mdp: &FiniteMdp, pi: &Policy) -> Result<QTable> {
    let q = resolvent_apply(mdp, pi, &mdp.reward)?;
    Ok(QTable {
        n_states: mdp.n_states,
        n_actions: mdp.n_actions,
        values: q,
    })
}

/// `V^π(s) = Q^π(s, π(s))`.
pub fn policy_state_values(mdp: &FiniteMdp, pi: &Policy) -> Result<ValueFn> {
    let q = policy_evaluation(mdp, pi)?;
    Ok(ValueFn {
        values: (0..mdp.n_states).map(|s| q.get(s, pi.actions[s])).collect(),
    })
}

/// Q⋆ to linear-solver precision: value iteration followed by policy
/// iteration on the greedy policy until it is stable.
pub fn optimal_q(mdp: &FiniteMdp) -> Result<QTable> {
    let vi = value_iteration(mdp, DEFAULT_VI_TOL, DEFAULT_VI_MAX_ITER)?;
    let mut pi = greedy_policy(&vi.q);
    let mut best = vi.q;
    for _ in 0..50 {
        let q = policy_evaluation(mdp, &pi)?;
        let next = greedy_policy(&q);
        // Exact ties may make the greedy policy alternate between equally
        // optimal choices; accept once the Bellman residual is at round-off.
        let residual = bellman_optimal_apply(mdp, &q)?.sup_distance(&q);
        best = q;
        if next == pi || residual <= 1e-11 * (1.0 + best.sup_norm()) {
            break;
        }
        pi = next;
    }
    Ok(best)
}
