//! Per-run error series and the bookkeeping shared by both learners.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::lazy::{correct_unchecked, DEFAULT_ALPHA};
use crate::mdp::{greedy, span_of, DeterministicPolicy, Mdp, QTable};
use crate::oracles::{gain_of_deterministic, AvgRewardSolution};

/// Explicit draws the lazy coin; implicit averages the stay and move branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Explicit,
    Implicit,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Explicit => "explicit",
            Variant::Implicit => "implicit",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "explicit" => Ok(Variant::Explicit),
            "implicit" => Ok(Variant::Implicit),
            other => Err(Error::Parse {
                line: 0,
                message: format!("unknown variant '{other}'"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEntry {
    pub samples_used: u64,
    pub span_error: f64,
    pub gain_gap: f64,
}

/// Error series of one run; sample counts strictly increase.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    entries: Vec<LogEntry>,
}

impl RunLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: LogEntry) -> Result<()> {
        if let Some(last) = self.entries.last() {
            if entry.samples_used <= last.samples_used {
                return Err(Error::InvalidParameter {
                    name: "samples_used",
                    value: entry.samples_used as f64,
                    reason: "log entries must have strictly increasing sample counts",
                });
            }
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn last(&self) -> Option<&LogEntry> {
        self.entries.last()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Final tables and error series of one learning run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    /// Raw iterate, an estimate of the lazy Q-function.
    pub q_t: QTable,
    /// Corrected estimate of the original Q-function.
    pub q_corr: QTable,
    pub policy: DeterministicPolicy,
    pub log: RunLog,
}

/// Scores iterates against an exact solution on a set of states.
pub(crate) struct ErrorTracker<'a> {
    mdp: &'a Mdp,
    gain: f64,
    states: Vec<usize>,
    truth_restricted: Vec<f64>,
    gains: HashMap<DeterministicPolicy, f64>,
}

impl<'a> ErrorTracker<'a> {
    pub(crate) fn new(mdp: &'a Mdp, truth: &AvgRewardSolution, states: Vec<usize>) -> Result<Self> {
        mdp.check_table(&truth.q)?;
        Ok(Self {
            mdp,
            gain: truth.gain,
            truth_restricted: truth.q.restrict(&states),
            states,
            gains: HashMap::new(),
        })
    }

    /// `sp(q_corr|C - Q*|C)` and `g* - g^pi` for the raw iterate `q`.
    pub(crate) fn score(&mut self, q: &QTable) -> Result<(f64, f64, QTable, DeterministicPolicy)> {
        let q_corr = correct_unchecked(q, DEFAULT_ALPHA);
        let diff: Vec<f64> = q_corr
            .restrict(&self.states)
            .iter()
            .zip(&self.truth_restricted)
            .map(|(a, b)| a - b)
            .collect();
        let span_error = span_of(&diff);
        let policy = greedy(&q_corr);
        let gain = match self.gains.get(&policy) {
            Some(&g) => g,
            None => {
                let g = gain_of_deterministic(self.mdp, &policy)?;
                self.gains.insert(policy.clone(), g);
                g
            }
        };
        Ok((span_error, self.gain - gain, q_corr, policy))
    }
}

/// Default logging stride: about 200 points per run.
pub fn default_record_every(iterations: usize) -> usize {
    (iterations / 200).max(1)
}
