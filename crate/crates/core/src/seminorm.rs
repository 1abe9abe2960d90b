//! Span seminorm and the horizon-discounted worst-case span `sp~` under which
//! the lazy Bellman operator contracts in one step.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::mdp::{bellman, span_of, Mdp, QTable, StochasticPolicy};
use crate::rng::SeededRng;

/// Slack on every inequality check in this module.
pub const CHECK_TOL: f64 = 1e-9;

/// Max entry minus min entry.
pub fn span(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty);
    }
    Ok(span_of(values))
}

/// `(1 - 1/(H 2^H))^(1/(H+1))`.
pub fn contraction_beta(horizon: usize) -> Result<f64> {
    if horizon < 1 {
        return Err(Error::InvalidParameter {
            name: "horizon",
            value: horizon as f64,
            reason: "must be at least 1",
        });
    }
    let h = horizon as f64;
    let base = 1.0 - 1.0 / (h * 2f64.powi(horizon as i32));
    Ok(base.powf(1.0 / (h + 1.0)))
}

/// `1 - 1/(H (H+1) 2^H)`, an upper bound on [`contraction_beta`].
pub fn relaxed_beta(horizon: usize) -> Result<f64> {
    contraction_beta(horizon)?;
    let h = horizon as f64;
    Ok(1.0 - 1.0 / (h * (h + 1.0) * 2f64.powi(horizon as i32)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeminormConfig {
    pub horizon: usize,
    pub beta: f64,
    /// Maximum number of search nodes before giving up.
    pub sequence_budget: usize,
}

impl SeminormConfig {
    pub const DEFAULT_BUDGET: usize = 1_000_000;

    pub fn new(horizon: usize) -> Result<Self> {
        Ok(Self {
            horizon,
            beta: contraction_beta(horizon)?,
            sequence_budget: Self::DEFAULT_BUDGET,
        })
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.sequence_budget = budget;
        self
    }
}

/// `P_bar Pi^pi x` for a state-action vector `x` and a per-state choice `u(s) = x(s, pi(s))`.
fn propagate(lazy: &Mdp, u: &[f64]) -> Vec<f64> {
    let n = lazy.num_states();
    let m = lazy.num_actions();
    let mut out = Vec::with_capacity(n * m);
    for s in 0..n {
        for a in 0..m {
            out.push(lazy.row(s, a).iter().zip(u).map(|(p, v)| p * v).sum());
        }
    }
    out
}

/// Per-state (min, max) over actions of a flat state-action vector.
fn action_extremes(x: &[f64], m: usize) -> Vec<(f64, f64)> {
    x.chunks(m)
        .map(|row| {
            row.iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                })
        })
        .collect()
}

fn key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

/// Worst discounted span over deterministic policy sequences of length `0..=horizon`.
///
/// Depth-first search where each node branches on the per-state minimum or
/// maximum action value. The final span is convex in the chosen state vector,
/// so these box vertices dominate every other deterministic choice. Spans
/// never grow along a branch, which bounds every subtree by
/// `beta^-horizon * sp(node)`.
pub fn sp_tilde(lazy_mdp: &Mdp, cfg: &SeminormConfig, q: &QTable) -> Result<f64> {
    lazy_mdp.check_table(q)?;
    let n = lazy_mdp.num_states();
    let m = lazy_mdp.num_actions();
    let inv_beta = 1.0 / cfg.beta;
    let ceiling_factor = inv_beta.powi(cfg.horizon as i32);

    let root = q.as_slice().to_vec();
    let mut best = span_of(&root);
    let mut seen: Vec<HashSet<Vec<u64>>> = vec![HashSet::new(); cfg.horizon + 1];
    let mut stack = vec![(root, 0usize)];
    let mut nodes = 0usize;

    while let Some((x, depth)) = stack.pop() {
        if depth == cfg.horizon {
            continue;
        }
        let sp = span_of(&x);
        if ceiling_factor * sp <= best {
            continue;
        }
        let extremes = action_extremes(&x, m);
        let free: Vec<usize> = (0..n).filter(|&s| extremes[s].0 < extremes[s].1).collect();
        let weight = inv_beta.powi(depth as i32 + 1);
        for mask in 0u64..(1u64 << free.len()) {
            nodes += 1;
            if nodes > cfg.sequence_budget {
                return Err(Error::BudgetExceeded {
                    budget: cfg.sequence_budget,
                });
            }
            let mut u: Vec<f64> = extremes.iter().map(|e| e.0).collect();
            for (bit, &s) in free.iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    u[s] = extremes[s].1;
                }
            }
            let child = propagate(lazy_mdp, &u);
            if !seen[depth + 1].insert(key(&child)) {
                continue;
            }
            best = best.max(weight * span_of(&child));
            stack.push((child, depth + 1));
        }
    }
    Ok(best)
}

/// `beta^-k sp(prod_i P_bar Pi^{pi_i} q)` for one explicit sequence, innermost policy last.
pub fn sequence_span(
    lazy_mdp: &Mdp,
    beta: f64,
    policies: &[StochasticPolicy],
    q: &QTable,
) -> Result<f64> {
    lazy_mdp.check_table(q)?;
    let m = lazy_mdp.num_actions();
    let mut x = q.as_slice().to_vec();
    for pi in policies.iter().rev() {
        pi.check_against(lazy_mdp)?;
        let u: Vec<f64> = x
            .chunks(m)
            .enumerate()
            .map(|(s, row)| row.iter().zip(pi.row(s)).map(|(v, w)| v * w).sum())
            .collect();
        x = propagate(lazy_mdp, &u);
    }
    Ok(beta.powi(-(policies.len() as i32)) * span_of(&x))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `sp~(T_bar q1 - T_bar q2) <= beta sp~(q1 - q2)`.
pub fn check_contraction(
    lazy_mdp: &Mdp,
    cfg: &SeminormConfig,
    q1: &QTable,
    q2: &QTable,
) -> Result<ContractionReport> {
    let image = bellman(lazy_mdp, q1)?.sub(&bellman(lazy_mdp, q2)?)?;
    let lhs = sp_tilde(lazy_mdp, cfg, &image)?;
    let rhs = cfg.beta * sp_tilde(lazy_mdp, cfg, &q1.sub(q2)?)?;
    Ok(ContractionReport {
        lhs,
        rhs,
        holds: lhs <= rhs + CHECK_TOL,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyContractionReport {
    pub lhs: f64,
    pub rhs: f64,
    /// Bound with the factor `1 - 1/(H (H+1) 2^H)`.
    pub relaxed_rhs: f64,
    pub holds: bool,
    pub holds_relaxed: bool,
}

/// `sp~(P_bar Pi^pi q) <= beta sp~(q)` for a fixed policy.
pub fn check_policy_contraction(
    lazy_mdp: &Mdp,
    cfg: &SeminormConfig,
    policy: &StochasticPolicy,
    q: &QTable,
) -> Result<PolicyContractionReport> {
    lazy_mdp.check_table(q)?;
    policy.check_against(lazy_mdp)?;
    let image = sequence_image(lazy_mdp, policy, q);
    let lhs = sp_tilde(lazy_mdp, cfg, &image)?;
    let base = sp_tilde(lazy_mdp, cfg, q)?;
    let rhs = cfg.beta * base;
    let relaxed_rhs = relaxed_beta(cfg.horizon)? * base;
    Ok(PolicyContractionReport {
        lhs,
        rhs,
        relaxed_rhs,
        holds: lhs <= rhs + CHECK_TOL,
        holds_relaxed: lhs <= relaxed_rhs + CHECK_TOL,
    })
}

fn sequence_image(lazy_mdp: &Mdp, policy: &StochasticPolicy, q: &QTable) -> QTable {
    let m = lazy_mdp.num_actions();
    let u: Vec<f64> = (0..lazy_mdp.num_states())
        .map(|s| q.row(s).iter().zip(policy.row(s)).map(|(v, w)| v * w).sum())
        .collect();
    let values = propagate(lazy_mdp, &u);
    QTable::from_raw(lazy_mdp.num_states(), m, values)
}

/// Largest total-variation distance between any two transition rows.
///
/// Bounds `sp(T q1 - T q2) / sp(q1 - q2)` for the Bellman operator of `mdp`.
pub fn dobrushin_coefficient(mdp: &Mdp) -> f64 {
    let rows: Vec<&[f64]> = (0..mdp.num_states())
        .flat_map(|s| (0..mdp.num_actions()).map(move |a| (s, a)))
        .map(|(s, a)| mdp.row(s, a))
        .collect();
    let mut worst = 0.0_f64;
    for (i, x) in rows.iter().enumerate() {
        for y in &rows[i + 1..] {
            let tv: f64 = 0.5 * x.iter().zip(y.iter()).map(|(a, b)| (a - b).abs()).sum::<f64>();
            worst = worst.max(tv);
        }
    }
    worst
}

/// Outcome of a random search for `sp(T q1 - T q2) > beta sp(q1 - q2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanExpansionSearch {
    pub pairs_tried: usize,
    pub best_ratio: f64,
    pub witness: Option<(QTable, QTable)>,
}

/// Draws table pairs, half with uniform entries and half with `{0, 1}` entries,
/// and stops at the first pair whose image span ratio exceeds `beta`.
pub fn search_span_expansion(
    mdp: &Mdp,
    beta: f64,
    max_pairs: usize,
    rng: &mut SeededRng,
) -> Result<SpanExpansionSearch> {
    let n = mdp.num_states();
    let m = mdp.num_actions();
    let mut best_ratio = 0.0_f64;
    for i in 0..max_pairs {
        let binary = i % 2 == 1;
        let draw = |rng: &mut SeededRng| -> Result<QTable> {
            let v = (0..n * m)
                .map(|_| {
                    if binary {
                        if rng.coin() { 1.0 } else { 0.0 }
                    } else {
                        rng.uniform()
                    }
                })
                .collect();
            QTable::from_vec(n, m, v)
        };
        let q1 = draw(rng)?;
        let q2 = draw(rng)?;
        let denom = q1.sub(&q2)?.span();
        if denom <= 1e-12 {
            continue;
        }
        let lhs = bellman(mdp, &q1)?.sub(&bellman(mdp, &q2)?)?.span();
        let ratio = lhs / denom;
        best_ratio = best_ratio.max(ratio);
        if lhs > beta * denom + CHECK_TOL {
            return Ok(SpanExpansionSearch {
                pairs_tried: i + 1,
                best_ratio,
                witness: Some((q1, q2)),
            });
        }
    }
    Ok(SpanExpansionSearch {
        pairs_tried: max_pairs,
        best_ratio,
        witness: None,
    })
}
