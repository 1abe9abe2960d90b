//! Tabular MDP model, Q-tables, policies and the Bellman operator.

use nalgebra::DMatrix;

use crate::error::{dims, Error, Result};
use crate::rng::SeededRng;

/// Row-sum tolerance for transition rows and policy rows.
pub const PROB_TOL: f64 = 1e-12;

/// Finite MDP with rewards in `[0, 1]`.
///
/// Transitions are stored flat, row-major over `(s, a, s')`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    num_states: usize,
    num_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
}

impl Mdp {
    /// Builds and validates an MDP. `transition` has length `S*A*S`, `reward` has length `S*A`.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
    ) -> Result<Self> {
        let mdp = Self::assemble(num_states, num_actions, transition, reward)?;
        mdp.validate()?;
        Ok(mdp)
    }

    /// Like [`Mdp::new`] but rescales every nonnegative row to sum to one first.
    pub fn new_renormalized(
        num_states: usize,
        num_actions: usize,
        mut transition: Vec<f64>,
        reward: Vec<f64>,
    ) -> Result<Self> {
        if num_states > 0 {
            for (i, row) in transition.chunks_mut(num_states).enumerate() {
                let sum: f64 = row.iter().sum();
                if sum > 0.0 && sum.is_finite() {
                    row.iter_mut().for_each(|p| *p /= sum);
                } else {
                    return Err(Error::RowSum {
                        state: i / num_actions.max(1),
                        action: i % num_actions.max(1),
                        sum,
                    });
                }
            }
        }
        Self::new(num_states, num_actions, transition, reward)
    }

    /// Builds from nested `[s][a][s']` transitions and `[s][a]` rewards.
    pub fn from_nested(transition: &[Vec<Vec<f64>>], reward: &[Vec<f64>]) -> Result<Self> {
        let num_states = transition.len();
        let num_actions = transition.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(num_states * num_actions * num_states);
        for (s, per_action) in transition.iter().enumerate() {
            if per_action.len() != num_actions {
                return Err(Error::DimensionMismatch {
                    expected: format!("{num_actions} actions"),
                    found: format!("{} actions at state {s}", per_action.len()),
                });
            }
            for row in per_action {
                if row.len() != num_states {
                    return Err(Error::DimensionMismatch {
                        expected: format!("{num_states} successors"),
                        found: format!("{} successors at state {s}", row.len()),
                    });
                }
                flat.extend_from_slice(row);
            }
        }
        if reward.len() != num_states || reward.iter().any(|r| r.len() != num_actions) {
            return Err(Error::DimensionMismatch {
                expected: dims(num_states, num_actions),
                found: "ragged reward table".into(),
            });
        }
        let flat_reward = reward.iter().flatten().copied().collect();
        Self::new(num_states, num_actions, flat, flat_reward)
    }

    fn assemble(
        num_states: usize,
        num_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::EmptySpace);
        }
        if transition.len() != num_states * num_actions * num_states {
            return Err(Error::DimensionMismatch {
                expected: format!("{} transition entries", num_states * num_actions * num_states),
                found: transition.len().to_string(),
            });
        }
        if reward.len() != num_states * num_actions {
            return Err(Error::DimensionMismatch {
                expected: format!("{} reward entries", num_states * num_actions),
                found: reward.len().to_string(),
            });
        }
        Ok(Self {
            num_states,
            num_actions,
            transition,
            reward,
        })
    }

    /// Checks every invariant, reporting the first violation in `(s, a)` order.
    pub fn validate(&self) -> Result<()> {
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let row = self.row(s, a);
                for (next, &value) in row.iter().enumerate() {
                    if !(0.0..=1.0).contains(&value) {
                        return Err(Error::ProbabilityOutOfRange {
                            state: s,
                            action: a,
                            next,
                            value,
                        });
                    }
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > PROB_TOL {
                    return Err(Error::RowSum {
                        state: s,
                        action: a,
                        sum,
                    });
                }
                let value = self.reward(s, a);
                if !(0.0..=1.0).contains(&value) {
                    return Err(Error::RewardOutOfRange {
                        state: s,
                        action: a,
                        value,
                    });
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    #[inline]
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn num_pairs(&self) -> usize {
        self.num_states * self.num_actions
    }

    /// Distribution `p(. | s, a)`.
    #[inline]
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.transition[start..start + self.num_states]
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.row(s, a)[next]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.num_actions + a]
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transition
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub(crate) fn check_state(&self, state: usize) -> Result<()> {
        if state < self.num_states {
            Ok(())
        } else {
            Err(Error::StateOutOfRange {
                state,
                num_states: self.num_states,
            })
        }
    }

    pub(crate) fn check_table(&self, q: &QTable) -> Result<()> {
        if q.num_states() == self.num_states && q.num_actions() == self.num_actions {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: dims(self.num_states, self.num_actions),
                found: dims(q.num_states(), q.num_actions()),
            })
        }
    }
}

/// Real-valued table over state-action pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self::constant(num_states, num_actions, 0.0)
    }

    pub fn constant(num_states: usize, num_actions: usize, value: f64) -> Self {
        Self {
            num_states,
            num_actions,
            values: vec![value; num_states * num_actions],
        }
    }

    /// Wraps a row-major vector; all entries must be finite.
    pub fn from_vec(num_states: usize, num_actions: usize, values: Vec<f64>) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::EmptySpace);
        }
        if values.len() != num_states * num_actions {
            return Err(Error::DimensionMismatch {
                expected: format!("{} entries", num_states * num_actions),
                found: values.len().to_string(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "q",
                value: values[i],
                reason: "entries must be finite",
            });
        }
        Ok(Self {
            num_states,
            num_actions,
            values,
        })
    }

    pub(crate) fn from_raw(num_states: usize, num_actions: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), num_states * num_actions);
        Self {
            num_states,
            num_actions,
            values,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let num_actions = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != num_actions) {
            return Err(Error::DimensionMismatch {
                expected: format!("{num_actions} actions per row"),
                found: "ragged rows".into(),
            });
        }
        Self::from_vec(rows.len(), num_actions, rows.concat())
    }

    #[inline]
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    #[inline]
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, value: f64) {
        self.values[s * self.num_actions + a] = value;
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// `max_a q(s, a)`.
    #[inline]
    pub fn state_max(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Per-state maxima, i.e. the induced value function.
    pub fn state_values(&self) -> Vec<f64> {
        (0..self.num_states).map(|s| self.state_max(s)).collect()
    }

    pub fn span(&self) -> f64 {
        span_of(&self.values)
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn check_same_shape(&self, other: &QTable) -> Result<()> {
        if self.num_states == other.num_states && self.num_actions == other.num_actions {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: dims(self.num_states, self.num_actions),
                found: dims(other.num_states, other.num_actions),
            })
        }
    }

    pub fn sub(&self, other: &QTable) -> Result<QTable> {
        self.check_same_shape(other)?;
        Ok(self.zip_map(other, |x, y| x - y))
    }

    pub fn add(&self, other: &QTable) -> Result<QTable> {
        self.check_same_shape(other)?;
        Ok(self.zip_map(other, |x, y| x + y))
    }

    fn zip_map(&self, other: &QTable, f: impl Fn(f64, f64) -> f64) -> QTable {
        QTable {
            num_states: self.num_states,
            num_actions: self.num_actions,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&x, &y)| f(x, y))
                .collect(),
        }
    }

    pub fn add_scalar(&self, c: f64) -> QTable {
        self.map(|v| v + c)
    }

    pub fn scale(&self, c: f64) -> QTable {
        self.map(|v| v * c)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> QTable {
        QTable {
            num_states: self.num_states,
            num_actions: self.num_actions,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Entries whose state lies in `states`, in table order.
    pub fn restrict(&self, states: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(states.len() * self.num_actions);
        for &s in states {
            out.extend_from_slice(self.row(s));
        }
        out
    }
}

/// Max minus min, 0 for an empty slice.
#[inline]
pub(crate) fn span_of(values: &[f64]) -> f64 {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if values.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// One action per state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DeterministicPolicy {
    actions: Vec<usize>,
}

impl DeterministicPolicy {
    pub fn new(actions: Vec<usize>, num_actions: usize) -> Result<Self> {
        if let Some(&action) = actions.iter().find(|&&a| a >= num_actions) {
            return Err(Error::ActionOutOfRange {
                action,
                num_actions,
            });
        }
        Ok(Self { actions })
    }

    #[inline]
    pub fn action(&self, s: usize) -> usize {
        self.actions[s]
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn num_states(&self) -> usize {
        self.actions.len()
    }

    /// Every deterministic policy, in lexicographic order with state 0 most significant.
    pub fn enumerate(num_states: usize, num_actions: usize) -> Vec<DeterministicPolicy> {
        let total = num_actions.pow(num_states as u32);
        (0..total)
            .map(|mut code| {
                let mut actions = vec![0; num_states];
                for slot in actions.iter_mut().rev() {
                    *slot = code % num_actions;
                    code /= num_actions;
                }
                DeterministicPolicy { actions }
            })
            .collect()
    }
}

/// Probability vector over actions for every state.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticPolicy {
    num_actions: usize,
    dist: Vec<f64>,
}

impl StochasticPolicy {
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let num_actions = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || num_actions == 0 {
            return Err(Error::EmptySpace);
        }
        for (state, row) in rows.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.len() != num_actions
                || row.iter().any(|&p| !(0.0..=1.0).contains(&p))
                || (sum - 1.0).abs() > PROB_TOL
            {
                return Err(Error::InvalidPolicy { state });
            }
        }
        Ok(Self {
            num_actions,
            dist: rows.concat(),
        })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_actions,
            dist: vec![1.0 / num_actions as f64; num_states * num_actions],
        }
    }

    pub fn from_deterministic(policy: &DeterministicPolicy, num_actions: usize) -> Self {
        let mut dist = vec![0.0; policy.num_states() * num_actions];
        for (s, &a) in policy.actions().iter().enumerate() {
            dist[s * num_actions + a] = 1.0;
        }
        Self { num_actions, dist }
    }

    pub fn num_states(&self) -> usize {
        self.dist.len() / self.num_actions
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.dist[s * self.num_actions + a]
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.dist[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub(crate) fn check_against(&self, mdp: &Mdp) -> Result<()> {
        if self.num_states() == mdp.num_states() && self.num_actions == mdp.num_actions() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: dims(mdp.num_states(), mdp.num_actions()),
                found: dims(self.num_states(), self.num_actions),
            })
        }
    }
}

/// `r(s,a) + sum_s' p(s'|s,a) max_a' q(s',a')`.
pub fn bellman(mdp: &Mdp, q: &QTable) -> Result<QTable> {
    mdp.check_table(q)?;
    let values = q.state_values();
    Ok(bellman_with_values(mdp, &values))
}

pub(crate) fn bellman_with_values(mdp: &Mdp, values: &[f64]) -> QTable {
    let mut out = QTable::zeros(mdp.num_states(), mdp.num_actions());
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            let expect: f64 = mdp.row(s, a).iter().zip(values).map(|(p, v)| p * v).sum();
            out.set(s, a, mdp.reward(s, a) + expect);
        }
    }
    out
}

/// Greedy policy; ties go to the smallest action index.
pub fn greedy(q: &QTable) -> DeterministicPolicy {
    let actions = (0..q.num_states())
        .map(|s| {
            let row = q.row(s);
            let mut best = 0;
            for a in 1..row.len() {
                if row[a] > row[best] {
                    best = a;
                }
            }
            best
        })
        .collect();
    DeterministicPolicy { actions }
}

/// State-to-state kernel `P_pi(s, s') = sum_a pi(a|s) p(s'|s,a)`.
pub fn policy_matrix(mdp: &Mdp, policy: &StochasticPolicy) -> Result<DMatrix<f64>> {
    policy.check_against(mdp)?;
    let n = mdp.num_states();
    let mut m = DMatrix::zeros(n, n);
    for s in 0..n {
        for a in 0..mdp.num_actions() {
            let w = policy.prob(s, a);
            if w == 0.0 {
                continue;
            }
            for (next, &p) in mdp.row(s, a).iter().enumerate() {
                m[(s, next)] += w * p;
            }
        }
    }
    Ok(m)
}

/// Kernel of a deterministic policy.
pub fn deterministic_policy_matrix(mdp: &Mdp, policy: &DeterministicPolicy) -> Result<DMatrix<f64>> {
    if policy.num_states() != mdp.num_states() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} states", mdp.num_states()),
            found: format!("{} states", policy.num_states()),
        });
    }
    let n = mdp.num_states();
    Ok(DMatrix::from_fn(n, n, |s, next| {
        mdp.prob(s, policy.action(s), next)
    }))
}

/// Draws `s' ~ p(. | s, a)` by inverse CDF.
#[inline]
pub fn sample_next(mdp: &Mdp, s: usize, a: usize, rng: &mut SeededRng) -> usize {
    rng.categorical(mdp.row(s, a))
}
