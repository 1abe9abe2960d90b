//! Exact reference computations: reachability, hitting times, optimal gain,
//! stationary distributions and recurrent classes.

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use crate::error::{Error, Result};
use crate::lazy::{correct_unchecked, lazy_transform, DEFAULT_ALPHA};
use crate::mdp::{
    bellman_with_values, deterministic_policy_matrix, policy_matrix, DeterministicPolicy, Mdp,
    QTable, StochasticPolicy,
};

/// Default convergence tolerance for the iterative oracles.
pub const ORACLE_TOL: f64 = 1e-10;
/// Iteration cap shared by the value-iteration oracles.
pub const MAX_ITERATIONS: usize = 1_000_000;

/// Whether `s_dagger` is reachable under every deterministic policy, and how fast.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachabilityReport {
    pub reference_state: usize,
    pub reachable: bool,
    /// Worst-case expected return time `K`; `None` when unreachable.
    pub hitting_constant: Option<f64>,
    /// `ceil(K)`; `None` when unreachable.
    pub horizon: Option<usize>,
}

/// Optimal gain with an optimal Q-function (defined up to a constant shift).
#[derive(Debug, Clone, PartialEq)]
pub struct AvgRewardSolution {
    pub gain: f64,
    pub q: QTable,
    pub bias: Vec<f64>,
    /// `sp(T(Q) - Q - gain)` at termination.
    pub residual: f64,
}

/// Greatest-fixed-point test: can some policy keep the chain away from `s_dagger` forever?
pub fn check_reachability(mdp: &Mdp, s_dagger: usize) -> Result<bool> {
    mdp.check_state(s_dagger)?;
    let n = mdp.num_states();
    let mut trapped: Vec<bool> = (0..n).map(|s| s != s_dagger).collect();
    loop {
        let mut changed = false;
        for s in 0..n {
            if !trapped[s] {
                continue;
            }
            let can_stay = (0..mdp.num_actions()).any(|a| {
                mdp.row(s, a)
                    .iter()
                    .enumerate()
                    .all(|(next, &p)| p == 0.0 || trapped[next])
            });
            if !can_stay {
                trapped[s] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(!trapped.iter().any(|&t| t))
}

/// Knobs for [`max_hitting_time_with`].
#[derive(Debug, Clone, Copy)]
pub struct HittingOptions {
    pub tol: f64,
    /// Any iterate above this signals a reachability violation.
    pub ceiling: f64,
    pub max_iterations: usize,
}

impl Default for HittingOptions {
    fn default() -> Self {
        Self {
            tol: ORACLE_TOL,
            ceiling: 1e5,
            max_iterations: MAX_ITERATIONS,
        }
    }
}

/// Worst-case expected return time `K` to `s_dagger`, counting steps `t > 0`.
pub fn max_hitting_time(mdp: &Mdp, s_dagger: usize) -> Result<f64> {
    max_hitting_time_with(mdp, s_dagger, HittingOptions::default())
}

pub fn max_hitting_time_with(mdp: &Mdp, s_dagger: usize, opts: HittingOptions) -> Result<f64> {
    let h = worst_hitting_times(mdp, s_dagger, opts)?;
    Ok(h.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// Worst-case expected hitting time per start state (the entry at `s_dagger` is the return time).
pub fn worst_hitting_times(mdp: &Mdp, s_dagger: usize, opts: HittingOptions) -> Result<Vec<f64>> {
    mdp.check_state(s_dagger)?;
    let n = mdp.num_states();
    let backup = |h: &[f64], s: usize| -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for a in 0..mdp.num_actions() {
            let v: f64 = mdp
                .row(s, a)
                .iter()
                .enumerate()
                .filter(|&(next, _)| next != s_dagger)
                .map(|(next, &p)| p * h[next])
                .sum();
            if v > best.0 {
                best = (v, a);
            }
        }
        (1.0 + best.0, best.1)
    };

    let mut h = vec![0.0; n];
    let mut converged = false;
    let mut delta = f64::INFINITY;
    for _ in 0..opts.max_iterations {
        let next: Vec<f64> = (0..n).map(|s| backup(&h, s).0).collect();
        delta = next
            .iter()
            .zip(&h)
            .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
        h = next;
        if h.iter().any(|&v| v > opts.ceiling) {
            return Err(Error::HittingTimeDivergence {
                ceiling: opts.ceiling,
            });
        }
        if delta <= opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::IterationCap {
            cap: opts.max_iterations,
            residual: delta,
        });
    }

    // Policy-iteration polish: exact solves starting from the greedy policy.
    let mut actions: Vec<usize> = (0..n).map(|s| backup(&h, s).1).collect();
    for _ in 0..4 * n * mdp.num_actions() + 8 {
        let policy = DeterministicPolicy::new(actions.clone(), mdp.num_actions())?;
        let exact = match expected_hitting_time(mdp, &policy, s_dagger) {
            Ok(v) => v,
            Err(_) => break,
        };
        let mut improved = false;
        for s in 0..n {
            let (best, a) = backup(&exact, s);
            let current = exact[s];
            if best > current + 1e-12 * current.max(1.0) && a != actions[s] {
                actions[s] = a;
                improved = true;
            }
        }
        h = exact;
        if !improved {
            break;
        }
    }
    Ok(h)
}

/// Expected hitting time of `s_dagger` under a fixed policy, for every start.
pub fn expected_hitting_time(
    mdp: &Mdp,
    policy: &DeterministicPolicy,
    s_dagger: usize,
) -> Result<Vec<f64>> {
    mdp.check_state(s_dagger)?;
    let p = deterministic_policy_matrix(mdp, policy)?;
    hitting_times_of_chain(&p, s_dagger)
}

/// Solves `h(s) = 1 + sum_{s' != s_dagger} P(s, s') h(s')` for a fixed chain.
pub fn hitting_times_of_chain(p: &DMatrix<f64>, s_dagger: usize) -> Result<Vec<f64>> {
    let n = p.nrows();
    let others: Vec<usize> = (0..n).filter(|&s| s != s_dagger).collect();
    let m = others.len();
    let mut h = vec![0.0; n];
    if m > 0 {
        let a = DMatrix::from_fn(m, m, |i, j| {
            let delta = if i == j { 1.0 } else { 0.0 };
            delta - p[(others[i], others[j])]
        });
        let b = DVector::from_element(m, 1.0);
        let x = a
            .clone()
            .lu()
            .solve(&b)
            .ok_or(Error::Singular("hitting-time system"))?;
        let residual = (&a * &x - &b).amax();
        if x.iter().any(|v| !v.is_finite() || *v < 1.0 - 1e-9) || residual > 1e-6 {
            return Err(Error::Singular("hitting-time system"));
        }
        for (i, &s) in others.iter().enumerate() {
            h[s] = x[i];
        }
    }
    let ret: f64 = 1.0
        + others
            .iter()
            .map(|&next| p[(s_dagger, next)] * h[next])
            .sum::<f64>();
    h[s_dagger] = ret;
    Ok(h)
}

/// Runs reachability and, when it holds, computes `K` and `ceil(K)`.
pub fn reachability_report(mdp: &Mdp, s_dagger: usize) -> Result<ReachabilityReport> {
    let reachable = check_reachability(mdp, s_dagger)?;
    if !reachable {
        return Ok(ReachabilityReport {
            reference_state: s_dagger,
            reachable,
            hitting_constant: None,
            horizon: None,
        });
    }
    let k = max_hitting_time(mdp, s_dagger)?;
    Ok(ReachabilityReport {
        reference_state: s_dagger,
        reachable,
        hitting_constant: Some(k),
        horizon: Some(horizon_of(k)),
    })
}

/// `ceil(K)`, snapping values within 1e-9 of an integer down to it.
pub fn horizon_of(k: f64) -> usize {
    let rounded = k.round();
    let h = if (k - rounded).abs() <= 1e-9 {
        rounded
    } else {
        k.ceil()
    };
    (h as usize).max(1)
}

/// Optimal gain and Q-function, with relative value iteration run on the
/// half-lazy kernel (aperiodic, so the iteration converges even when the
/// original chain is periodic) and mapped back through the output correction.
pub fn solve_average_reward(mdp: &Mdp, anchor: usize, tol: f64) -> Result<AvgRewardSolution> {
    solve_average_reward_capped(mdp, anchor, tol, MAX_ITERATIONS)
}

pub fn solve_average_reward_capped(
    mdp: &Mdp,
    anchor: usize,
    tol: f64,
    cap: usize,
) -> Result<AvgRewardSolution> {
    mdp.check_state(anchor)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tol",
            value: tol,
            reason: "must be positive",
        });
    }
    let lazy = lazy_transform(mdp, DEFAULT_ALPHA)?;
    let n = mdp.num_states();
    let m = mdp.num_actions();
    let mut q_bar = QTable::zeros(n, m);
    let mut residual = f64::INFINITY;
    for _ in 0..cap {
        let image = bellman_with_values(&lazy, &q_bar.state_values());
        let diff = image.sub(&q_bar)?;
        residual = diff.span();
        let offset = image.get(anchor, 0);
        q_bar = image.add_scalar(-offset);
        if residual <= tol * 0.5 {
            let q = correct_unchecked(&q_bar, DEFAULT_ALPHA);
            let t_q = bellman_with_values(mdp, &q.state_values());
            let gain = t_q.get(anchor, 0) - q.get(anchor, 0);
            let residual = t_q.sub(&q)?.span();
            if residual <= tol {
                let bias = q.state_values();
                return Ok(AvgRewardSolution {
                    gain,
                    q,
                    bias,
                    residual,
                });
            }
        }
    }
    Err(Error::IterationCap { cap, residual })
}

/// Unique closed communicating class of a chain, sorted.
pub fn recurrent_class(p: &DMatrix<f64>) -> Result<Vec<usize>> {
    let classes = closed_classes(p)?;
    match classes.len() {
        1 => Ok(classes.into_iter().next().unwrap_or_default()),
        k => Err(Error::Multichain { classes: k }),
    }
}

/// Every closed communicating class, each sorted, ordered by smallest member.
pub fn closed_classes(p: &DMatrix<f64>) -> Result<Vec<Vec<usize>>> {
    let n = p.nrows();
    if p.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: "square matrix".into(),
            found: format!("{}x{}", p.nrows(), p.ncols()),
        });
    }
    if n == 0 {
        return Err(Error::Empty);
    }
    let graph = support_graph(p);
    let mut component = vec![0; n];
    let sccs = tarjan_scc(&graph);
    for (c, members) in sccs.iter().enumerate() {
        for node in members {
            component[node.index()] = c;
        }
    }
    let mut closed: Vec<Vec<usize>> = sccs
        .iter()
        .enumerate()
        .filter(|(c, members)| {
            members.iter().all(|node| {
                let s = node.index();
                (0..n).all(|t| p[(s, t)] <= 0.0 || component[t] == *c)
            })
        })
        .map(|(_, members)| {
            let mut v: Vec<usize> = members.iter().map(|x| x.index()).collect();
            v.sort_unstable();
            v
        })
        .collect();
    closed.sort();
    Ok(closed)
}

fn support_graph(p: &DMatrix<f64>) -> DiGraph<(), ()> {
    let n = p.nrows();
    let mut graph = DiGraph::with_capacity(n, n * n);
    let nodes: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
    for s in 0..n {
        for t in 0..n {
            if p[(s, t)] > 0.0 {
                graph.add_edge(nodes[s], nodes[t], ());
            }
        }
    }
    graph
}

/// Stationary distribution of a unichain kernel.
pub fn stationary_distribution(p: &DMatrix<f64>) -> Result<Vec<f64>> {
    recurrent_class(p)?;
    let n = p.nrows();
    let mut a = p.transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let rho = a
        .lu()
        .solve(&b)
        .ok_or(Error::Singular("stationary system"))?;
    let mut rho: Vec<f64> = rho.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = rho.iter().sum();
    rho.iter_mut().for_each(|v| *v /= total);
    Ok(rho)
}

/// Long-run average reward of a stationary policy.
pub fn gain_of_policy(mdp: &Mdp, policy: &StochasticPolicy) -> Result<f64> {
    let p = policy_matrix(mdp, policy)?;
    let rho = stationary_distribution(&p)?;
    Ok((0..mdp.num_states())
        .map(|s| {
            rho[s]
                * (0..mdp.num_actions())
                    .map(|a| policy.prob(s, a) * mdp.reward(s, a))
                    .sum::<f64>()
        })
        .sum())
}

pub fn gain_of_deterministic(mdp: &Mdp, policy: &DeterministicPolicy) -> Result<f64> {
    gain_of_policy(
        mdp,
        &StochasticPolicy::from_deterministic(policy, mdp.num_actions()),
    )
}

pub(crate) fn check_full_support(behavior: &StochasticPolicy) -> Result<()> {
    for s in 0..behavior.num_states() {
        for a in 0..behavior.num_actions() {
            if behavior.prob(s, a) <= 0.0 {
                return Err(Error::BehaviorNotFullySupported {
                    state: s,
                    action: a,
                });
            }
        }
    }
    Ok(())
}

/// Smallest positive stationary state-action frequency `rho(s) * pi_b(a | s)`.
pub fn p_wedge(mdp: &Mdp, behavior: &StochasticPolicy) -> Result<f64> {
    behavior.check_against(mdp)?;
    check_full_support(behavior)?;
    let rho = stationary_distribution(&policy_matrix(mdp, behavior)?)?;
    let mut best = f64::INFINITY;
    for (s, &mass) in rho.iter().enumerate() {
        for a in 0..mdp.num_actions() {
            let v = mass * behavior.prob(s, a);
            if v > 0.0 {
                best = best.min(v);
            }
        }
    }
    Ok(best)
}

/// Period of the recurrent class is 1.
pub fn is_aperiodic(p: &DMatrix<f64>) -> Result<bool> {
    let class = recurrent_class(p)?;
    let n = p.nrows();
    let mut in_class = vec![false; n];
    class.iter().for_each(|&s| in_class[s] = true);
    let mut level = vec![usize::MAX; n];
    let root = class[0];
    level[root] = 0;
    let mut queue = std::collections::VecDeque::from([root]);
    while let Some(s) = queue.pop_front() {
        for t in 0..n {
            if in_class[t] && p[(s, t)] > 0.0 && level[t] == usize::MAX {
                level[t] = level[s] + 1;
                queue.push_back(t);
            }
        }
    }
    let mut period = 0usize;
    for &s in &class {
        for &t in &class {
            if p[(s, t)] > 0.0 {
                period = gcd(period, (level[s] + 1).abs_diff(level[t]));
            }
        }
    }
    Ok(period == 1)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}
