//! Asynchronous lazy Q-learning along one behavior-policy trajectory.
//!
//! Each step updates only the visited pair, with stepsize
//! `lambda_star / (N(s, a) + h)` where `N` counts earlier visits.

use crate::error::{Error, Result};
use crate::mdp::{policy_matrix, sample_next, span_of, Mdp, QTable, StochasticPolicy};
use crate::oracles::{
    check_full_support, is_aperiodic, recurrent_class, stationary_distribution, AvgRewardSolution,
};
use crate::rng::SeededRng;
use crate::runlog::{default_record_every, ErrorTracker, LogEntry, RunLog, RunOutput, Variant};

/// Tolerance on the span invariants checked during a run.
const INVARIANT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct AsyncConfig {
    pub variant: Variant,
    pub iterations: usize,
    pub lambda_star: f64,
    pub h: f64,
    pub behavior: StochasticPolicy,
    pub start_state: usize,
    pub seed: u64,
    pub record_every: usize,
}

impl AsyncConfig {
    /// Uniform behavior, start state 0, `lambda_star = h = 4H(H+1)2^H`.
    pub fn with_defaults(
        mdp: &Mdp,
        variant: Variant,
        iterations: usize,
        horizon: usize,
        seed: u64,
    ) -> Result<Self> {
        let lambda_star = default_lambda_star(horizon)?;
        Ok(Self {
            variant,
            iterations,
            lambda_star,
            h: lambda_star,
            behavior: StochasticPolicy::uniform(mdp.num_states(), mdp.num_actions()),
            start_state: 0,
            seed,
            record_every: default_record_every(iterations),
        })
    }

    pub fn validate(&self, mdp: &Mdp) -> Result<()> {
        if !(self.lambda_star > 0.0 && self.lambda_star.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "lambda_star",
                value: self.lambda_star,
                reason: "must be positive",
            });
        }
        if !(self.h >= self.lambda_star && self.h.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "h",
                value: self.h,
                reason: "must be at least lambda_star",
            });
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter {
                name: "record_every",
                value: 0.0,
                reason: "must be positive",
            });
        }
        mdp.check_state(self.start_state)?;
        self.behavior.check_against(mdp)?;
        check_full_support(&self.behavior)
    }
}

/// `4 H (H+1) 2^H`.
pub fn default_lambda_star(horizon: usize) -> Result<f64> {
    if horizon < 1 {
        return Err(Error::InvalidParameter {
            name: "horizon",
            value: horizon as f64,
            reason: "must be at least 1",
        });
    }
    let h = horizon as f64;
    Ok(4.0 * h * (h + 1.0) * 2f64.powi(horizon as i32))
}

/// Visit counts per state-action pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisitCounter {
    num_actions: usize,
    counts: Vec<u64>,
    total: u64,
}

impl VisitCounter {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_actions,
            counts: vec![0; num_states * num_actions],
            total: 0,
        }
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> u64 {
        self.counts[s * self.num_actions + a]
    }

    #[inline]
    pub fn increment(&mut self, s: usize, a: usize) {
        self.counts[s * self.num_actions + a] += 1;
        self.total += 1;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn num_states(&self) -> usize {
        self.counts.len() / self.num_actions
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }
}

/// Whether the run-time invariants held at every checked step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsyncDiagnostics {
    /// Every stepsize was in `(0, 1]`.
    pub stepsizes_valid: bool,
    /// `sp(Q_t) <= sp(Q_{t-1}) + lambda_t` at every step.
    pub span_growth_ok: bool,
    /// `sp(Q_t) <= lambda_star SA ln((t/SA + h)/h)` at every log point.
    pub span_ceiling_ok: bool,
    /// Largest `sp(Q_t) - ceiling` seen at a log point.
    pub worst_ceiling_excess: f64,
    /// Whether the behavior chain is aperiodic on its recurrent class.
    pub behavior_aperiodic: bool,
}

/// Result of [`run_async`].
#[derive(Debug, Clone, PartialEq)]
pub struct AsyncOutput {
    pub run: RunOutput,
    pub counter: VisitCounter,
    pub diagnostics: AsyncDiagnostics,
    /// Recurrent class of the behavior chain, where errors are measured.
    pub recurrent_class: Vec<usize>,
}

/// One transition of the trajectory, passed to observers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsyncStep {
    pub t: usize,
    pub state: usize,
    pub action: usize,
    pub next: usize,
    pub stepsize: f64,
    pub td: f64,
}

/// Temporal difference of one transition under the given variant.
#[inline]
pub fn td_error(
    variant: Variant,
    mdp: &Mdp,
    q: &QTable,
    state: usize,
    action: usize,
    next: usize,
) -> f64 {
    let target = match variant {
        Variant::Explicit => q.state_max(next),
        Variant::Implicit => 0.5 * (q.state_max(state) + q.state_max(next)),
    };
    mdp.reward(state, action) + target - q.get(state, action)
}

/// Draws the successor used by the variant: lazy kernel for explicit, original for implicit.
#[inline]
pub fn draw_successor(
    variant: Variant,
    mdp: &Mdp,
    state: usize,
    action: usize,
    rng: &mut SeededRng,
) -> usize {
    match variant {
        Variant::Explicit if rng.coin() => state,
        _ => sample_next(mdp, state, action, rng),
    }
}

/// `lambda_star SA ln((t/SA + h)/h)`.
pub fn span_ceiling(lambda_star: f64, h: f64, pairs: usize, t: usize) -> f64 {
    let sa = pairs as f64;
    lambda_star * sa * ((t as f64 / sa + h) / h).ln()
}

pub fn run_async(mdp: &Mdp, cfg: &AsyncConfig, truth: &AvgRewardSolution) -> Result<AsyncOutput> {
    run_async_observed(mdp, cfg, truth, |_, _| {})
}

/// As [`run_async`], calling `observer(&step, &q_t)` after every update.
pub fn run_async_observed(
    mdp: &Mdp,
    cfg: &AsyncConfig,
    truth: &AvgRewardSolution,
    mut observer: impl FnMut(&AsyncStep, &QTable),
) -> Result<AsyncOutput> {
    cfg.validate(mdp)?;
    let behavior_kernel = policy_matrix(mdp, &cfg.behavior)?;
    let class = recurrent_class(&behavior_kernel)?;
    let behavior_aperiodic = is_aperiodic(&behavior_kernel)?;
    if cfg.variant == Variant::Implicit && !behavior_aperiodic {
        log::warn!("behavior chain is periodic; implicit updates carry no rate guarantee here");
    }
    let mut tracker = ErrorTracker::new(mdp, truth, class.clone())?;
    let mut rng = SeededRng::new(cfg.seed);
    let pairs = mdp.num_pairs();

    let mut q = QTable::zeros(mdp.num_states(), mdp.num_actions());
    let mut counter = VisitCounter::new(mdp.num_states(), mdp.num_actions());
    let mut log = RunLog::new();
    let mut diagnostics = AsyncDiagnostics {
        stepsizes_valid: true,
        span_growth_ok: true,
        span_ceiling_ok: true,
        worst_ceiling_excess: f64::NEG_INFINITY,
        behavior_aperiodic,
    };
    let mut span = 0.0;
    let mut state = cfg.start_state;
    for t in 1..=cfg.iterations {
        let action = rng.categorical(cfg.behavior.row(state));
        let next = draw_successor(cfg.variant, mdp, state, action, &mut rng);
        let stepsize = cfg.lambda_star / (counter.get(state, action) as f64 + cfg.h);
        if !(stepsize > 0.0 && stepsize <= 1.0) {
            diagnostics.stepsizes_valid = false;
        }
        counter.increment(state, action);
        let td = td_error(cfg.variant, mdp, &q, state, action, next);
        let updated = q.get(state, action) + stepsize * td;
        q.set(state, action, updated);

        let new_span = span_of(q.as_slice());
        let slack = INVARIANT_TOL * (1.0 + q.linf());
        if new_span > span + stepsize + slack {
            diagnostics.span_growth_ok = false;
        }
        span = new_span;
        observer(
            &AsyncStep {
                t,
                state,
                action,
                next,
                stepsize,
                td,
            },
            &q,
        );

        if t % cfg.record_every == 0 || t == cfg.iterations {
            let excess = span - span_ceiling(cfg.lambda_star, cfg.h, pairs, t);
            diagnostics.worst_ceiling_excess = diagnostics.worst_ceiling_excess.max(excess);
            if excess > slack {
                diagnostics.span_ceiling_ok = false;
            }
            let (span_error, gain_gap, _, _) = tracker.score(&q)?;
            log.push(LogEntry {
                samples_used: t as u64,
                span_error,
                gain_gap,
            })?;
        }
        state = next;
    }
    let (_, _, q_corr, policy) = tracker.score(&q)?;
    Ok(AsyncOutput {
        run: RunOutput {
            q_t: q,
            q_corr,
            policy,
            log,
        },
        counter,
        diagnostics,
        recurrent_class: class,
    })
}

/// Empirical visit frequency next to its stationary limit, per pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisitFrequency {
    pub state: usize,
    pub action: usize,
    pub empirical: f64,
    pub stationary: f64,
}

pub fn visit_frequency_report(
    counter: &VisitCounter,
    mdp: &Mdp,
    behavior: &StochasticPolicy,
) -> Result<Vec<VisitFrequency>> {
    behavior.check_against(mdp)?;
    if counter.num_states() != mdp.num_states() || counter.num_actions() != mdp.num_actions() {
        return Err(Error::DimensionMismatch {
            expected: crate::error::dims(mdp.num_states(), mdp.num_actions()),
            found: crate::error::dims(counter.num_states(), counter.num_actions()),
        });
    }
    let rho = stationary_distribution(&policy_matrix(mdp, behavior)?)?;
    let total = counter.total().max(1) as f64;
    let mut out = Vec::with_capacity(mdp.num_pairs());
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            out.push(VisitFrequency {
                state: s,
                action: a,
                empirical: counter.get(s, a) as f64 / total,
                stationary: rho[s] * behavior.prob(s, a),
            });
        }
    }
    Ok(out)
}
