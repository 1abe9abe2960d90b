//! Plain-text MDP files.
//!
//! ```text
//! # comment
//! states=2
//! actions=1
//! p 0 0 1 1.0
//! r 0 0 0.5
//! ```
//!
//! Entries not listed are zero. Listing the same entry twice is an error.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mdp::{Mdp, QTable};

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn header_value(line: usize, text: &str, key: &str) -> Result<Option<usize>> {
    let Some((k, v)) = text.split_once('=') else {
        return Ok(None);
    };
    if k.trim() != key {
        return Ok(None);
    }
    v.trim()
        .parse::<usize>()
        .map(Some)
        .map_err(|e| parse_err(line, format!("{key}: {e}")))
}

fn index(line: usize, token: Option<&str>, bound: usize, what: &str) -> Result<usize> {
    let token = token.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    let i: usize = token
        .parse()
        .map_err(|_| parse_err(line, format!("bad {what} '{token}'")))?;
    if i >= bound {
        return Err(parse_err(line, format!("{what} {i} out of range (< {bound})")));
    }
    Ok(i)
}

fn number(line: usize, token: Option<&str>) -> Result<f64> {
    let token = token.ok_or_else(|| parse_err(line, "missing value"))?;
    let v: f64 = token
        .parse()
        .map_err(|_| parse_err(line, format!("bad number '{token}'")))?;
    if !v.is_finite() {
        return Err(parse_err(line, "value must be finite"));
    }
    Ok(v)
}

/// Parses and validates an MDP from its text form.
pub fn parse_mdp(text: &str) -> Result<Mdp> {
    let mut num_states = None;
    let mut num_actions = None;
    let mut transition = Vec::new();
    let mut reward = Vec::new();
    let mut seen_p = HashSet::new();
    let mut seen_r = HashSet::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if body.contains('=') {
            if let Some(n) = header_value(line, body, "states")? {
                if num_states.replace(n).is_some() {
                    return Err(parse_err(line, "duplicate states header"));
                }
            } else if let Some(m) = header_value(line, body, "actions")? {
                if num_actions.replace(m).is_some() {
                    return Err(parse_err(line, "duplicate actions header"));
                }
            } else {
                return Err(parse_err(line, format!("unknown key in '{body}'")));
            }
            if let (Some(n), Some(m)) = (num_states, num_actions) {
                if n == 0 || m == 0 {
                    return Err(Error::EmptySpace);
                }
                if transition.is_empty() {
                    transition = vec![0.0; n * m * n];
                    reward = vec![0.0; n * m];
                }
            }
            continue;
        }
        let (Some(n), Some(m)) = (num_states, num_actions) else {
            return Err(parse_err(line, "entries must follow states= and actions="));
        };
        let mut tokens = body.split_whitespace();
        match tokens.next() {
            Some("p") => {
                let s = index(line, tokens.next(), n, "state")?;
                let a = index(line, tokens.next(), m, "action")?;
                let next = index(line, tokens.next(), n, "next state")?;
                let v = number(line, tokens.next())?;
                if !seen_p.insert((s, a, next)) {
                    return Err(parse_err(line, format!("duplicate transition p {s} {a} {next}")));
                }
                transition[(s * m + a) * n + next] = v;
            }
            Some("r") => {
                let s = index(line, tokens.next(), n, "state")?;
                let a = index(line, tokens.next(), m, "action")?;
                let v = number(line, tokens.next())?;
                if !seen_r.insert((s, a)) {
                    return Err(parse_err(line, format!("duplicate reward r {s} {a}")));
                }
                reward[s * m + a] = v;
            }
            Some(other) => return Err(parse_err(line, format!("unknown record '{other}'"))),
            None => unreachable!("blank lines are skipped"),
        }
        if tokens.next().is_some() {
            return Err(parse_err(line, "trailing tokens"));
        }
    }

    let (Some(n), Some(m)) = (num_states, num_actions) else {
        return Err(parse_err(0, "missing states= or actions= header"));
    };
    Mdp::new(n, m, transition, reward)
}

/// Text form listing every nonzero entry; values use shortest round-trip formatting.
pub fn mdp_to_text(mdp: &Mdp) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "states={}", mdp.num_states());
    let _ = writeln!(out, "actions={}", mdp.num_actions());
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            for (next, &p) in mdp.row(s, a).iter().enumerate() {
                if p != 0.0 {
                    let _ = writeln!(out, "p {s} {a} {next} {p:?}");
                }
            }
        }
    }
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            let r = mdp.reward(s, a);
            if r != 0.0 {
                let _ = writeln!(out, "r {s} {a} {r:?}");
            }
        }
    }
    out
}

pub fn read_mdp(path: impl AsRef<Path>) -> Result<Mdp> {
    parse_mdp(&std::fs::read_to_string(path)?)
}

/// Q-table text: one state per line, whitespace-separated action values.
pub fn parse_qtable(text: &str) -> Result<QTable> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let row = body
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| number(i + 1, Some(t)))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Empty);
    }
    QTable::from_rows(&rows)
}
