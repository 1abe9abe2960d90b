//! Lazy kernel `alpha * p + (1 - alpha) * stay` and the maps between the two Q-functions.

use crate::error::{Error, Result};
use crate::mdp::{Mdp, QTable};

/// Self-loop weight used by all learners: stay with probability one half.
pub const DEFAULT_ALPHA: f64 = 0.5;

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "alpha",
            value: alpha,
            reason: "must lie in (0, 1]",
        })
    }
}

/// Mixes every transition row with a self-loop of weight `1 - alpha`.
pub fn lazy_transform(mdp: &Mdp, alpha: f64) -> Result<Mdp> {
    check_alpha(alpha)?;
    let n = mdp.num_states();
    let m = mdp.num_actions();
    let mut transition = Vec::with_capacity(n * m * n);
    for s in 0..n {
        for a in 0..m {
            transition.extend(mdp.row(s, a).iter().enumerate().map(|(next, &p)| {
                let stay = if next == s { 1.0 - alpha } else { 0.0 };
                alpha * p + stay
            }));
        }
    }
    Mdp::new(n, m, transition, mdp.rewards().to_vec())
}

/// Maps an original solution to the lazy one: `Q + ((1-alpha)/alpha) * max_a Q(s, .)`, same gain.
pub fn lift_solution(q_star: &QTable, g_star: f64, alpha: f64) -> Result<(QTable, f64)> {
    check_alpha(alpha)?;
    let w = (1.0 - alpha) / alpha;
    let mut out = q_star.clone();
    for s in 0..q_star.num_states() {
        let shift = w * q_star.state_max(s);
        for a in 0..q_star.num_actions() {
            out.set(s, a, q_star.get(s, a) + shift);
        }
    }
    Ok((out, g_star))
}

/// Maps a lazy Q-estimate back: `q_bar - (1 - alpha) * max_a q_bar(s, .)`.
pub fn correct_q(q_bar: &QTable, alpha: f64) -> Result<QTable> {
    check_alpha(alpha)?;
    Ok(correct_unchecked(q_bar, alpha))
}

pub(crate) fn correct_unchecked(q_bar: &QTable, alpha: f64) -> QTable {
    let mut out = q_bar.clone();
    for s in 0..q_bar.num_states() {
        let shift = (1.0 - alpha) * q_bar.state_max(s);
        for a in 0..q_bar.num_actions() {
            out.set(s, a, q_bar.get(s, a) - shift);
        }
    }
    out
}
