//! Synchronous lazy Q-learning: every state-action pair gets one fresh
//! sample per iteration and the whole table moves toward the empirical
//! lazy Bellman image with a constant stepsize.

use crate::error::{Error, Result};
use crate::mdp::{sample_next, Mdp, QTable};
use crate::oracles::AvgRewardSolution;
use crate::rng::SeededRng;
use crate::runlog::{default_record_every, ErrorTracker, LogEntry, RunLog, RunOutput, Variant};

#[derive(Debug, Clone, PartialEq)]
pub struct SyncConfig {
    pub variant: Variant,
    pub iterations: usize,
    pub stepsize: f64,
    pub seed: u64,
    pub record_every: usize,
}

impl SyncConfig {
    pub fn new(variant: Variant, iterations: usize, stepsize: f64, seed: u64) -> Result<Self> {
        let cfg = Self {
            variant,
            iterations,
            stepsize,
            seed,
            record_every: default_record_every(iterations),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_record_every(mut self, every: usize) -> Self {
        self.record_every = every.max(1);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.stepsize > 0.0 && self.stepsize <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "stepsize",
                value: self.stepsize,
                reason: "must lie in (0, 1]",
            });
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter {
                name: "record_every",
                value: 0.0,
                reason: "must be positive",
            });
        }
        Ok(())
    }
}

/// `min{1, H (H+1) 2^H ln T / T}`.
pub fn default_sync_stepsize(horizon: usize, iterations: usize) -> Result<f64> {
    if iterations < 2 {
        return Err(Error::InvalidParameter {
            name: "iterations",
            value: iterations as f64,
            reason: "must be at least 2",
        });
    }
    if horizon < 1 {
        return Err(Error::InvalidParameter {
            name: "horizon",
            value: horizon as f64,
            reason: "must be at least 1",
        });
    }
    let h = horizon as f64;
    let t = iterations as f64;
    Ok((h * (h + 1.0) * 2f64.powi(horizon as i32) * t.ln() / t).min(1.0))
}

/// Lazy coin used by the explicit operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LazyCoin {
    /// Stay put with probability one half.
    #[default]
    Fair,
    /// Always take the sampled transition.
    AlwaysMove,
}

fn explicit_into(mdp: &Mdp, values: &[f64], rng: &mut SeededRng, coin: LazyCoin, out: &mut QTable) {
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            let stay = match coin {
                LazyCoin::Fair => rng.coin(),
                LazyCoin::AlwaysMove => false,
            };
            let next = if stay { s } else { sample_next(mdp, s, a, rng) };
            out.set(s, a, mdp.reward(s, a) + values[next]);
        }
    }
}

fn implicit_into(mdp: &Mdp, values: &[f64], rng: &mut SeededRng, out: &mut QTable) {
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            let next = sample_next(mdp, s, a, rng);
            out.set(s, a, mdp.reward(s, a) + 0.5 * (values[s] + values[next]));
        }
    }
}

/// `r(s,a) + max q(s_bar, .)` where `s_bar = s` on heads and `s_bar ~ p(.|s,a)` otherwise.
pub fn empirical_bellman_explicit(mdp: &Mdp, q: &QTable, rng: &mut SeededRng) -> Result<QTable> {
    mdp.check_table(q)?;
    let mut out = QTable::zeros(mdp.num_states(), mdp.num_actions());
    explicit_into(mdp, &q.state_values(), rng, LazyCoin::Fair, &mut out);
    Ok(out)
}

/// `r(s,a) + (max q(s, .) + max q(s', .)) / 2` with `s' ~ p(.|s,a)`.
pub fn empirical_bellman_implicit(mdp: &Mdp, q: &QTable, rng: &mut SeededRng) -> Result<QTable> {
    mdp.check_table(q)?;
    let mut out = QTable::zeros(mdp.num_states(), mdp.num_actions());
    implicit_into(mdp, &q.state_values(), rng, &mut out);
    Ok(out)
}

/// Runs the synchronous learner from `Q_0 = 0` on the original kernel.
pub fn run_sync(mdp: &Mdp, cfg: &SyncConfig, truth: &AvgRewardSolution) -> Result<RunOutput> {
    run_sync_observed(mdp, cfg, truth, LazyCoin::Fair, |_, _| {})
}

/// As [`run_sync`], calling `observer(t, &q_t)` after every iteration.
pub fn run_sync_observed(
    mdp: &Mdp,
    cfg: &SyncConfig,
    truth: &AvgRewardSolution,
    coin: LazyCoin,
    mut observer: impl FnMut(usize, &QTable),
) -> Result<RunOutput> {
    cfg.validate()?;
    let all_states: Vec<usize> = (0..mdp.num_states()).collect();
    let mut tracker = ErrorTracker::new(mdp, truth, all_states)?;
    let mut rng = SeededRng::new(cfg.seed);
    let pairs = mdp.num_pairs() as u64;
    let lambda = cfg.stepsize;

    let mut q = QTable::zeros(mdp.num_states(), mdp.num_actions());
    let mut target = q.clone();
    let mut log = RunLog::new();
    for t in 1..=cfg.iterations {
        let values = q.state_values();
        match cfg.variant {
            Variant::Explicit => explicit_into(mdp, &values, &mut rng, coin, &mut target),
            Variant::Implicit => implicit_into(mdp, &values, &mut rng, &mut target),
        }
        for (x, &y) in q.as_mut_slice().iter_mut().zip(target.as_slice()) {
            *x = (1.0 - lambda) * *x + lambda * y;
        }
        observer(t, &q);
        if t % cfg.record_every == 0 || t == cfg.iterations {
            let (span_error, gain_gap, _, _) = tracker.score(&q)?;
            log.push(LogEntry {
                samples_used: t as u64 * pairs,
                span_error,
                gain_gap,
            })?;
        }
    }
    let (_, _, q_corr, policy) = tracker.score(&q)?;
    Ok(RunOutput {
        q_t: q,
        q_corr,
        policy,
        log,
    })
}

/// True iff `trace[i] <= trace[i-1] + lambda` for every consecutive pair, within 1e-12.
pub fn linf_growth_check(trace: &[f64], lambda: f64) -> bool {
    trace.windows(2).all(|w| w[1] <= w[0] + lambda + 1e-12)
}
