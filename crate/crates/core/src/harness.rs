//! Convergence-rate experiment on the four-state benchmark MDP, random
//! instance generation, log-log slope fits and CSV output.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;

use crate::async_learner::{run_async, AsyncConfig, AsyncDiagnostics};
use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::oracles::{reachability_report, solve_average_reward, AvgRewardSolution, ORACLE_TOL};
use crate::rng::SeededRng;
use crate::runlog::{RunLog, Variant};
use crate::sync::{default_sync_stepsize, run_sync, SyncConfig};

/// Benchmark parameters used throughout the experiment defaults.
pub const PAPER_P: f64 = 0.3;
pub const PAPER_Q: f64 = 0.7;

/// Mass moved toward state 0 in every row of a random instance.
pub const REACH_MIX: f64 = 0.05;

/// Environment variable capping worker threads (0 or unset means automatic).
pub const THREADS_ENV: &str = "LAZYQ_THREADS";

fn check_open_unit(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must lie in (0, 1)",
        })
    }
}

/// Four-state, two-action MDP: a bipartite diamond where `p` and `q` set the
/// crossing probabilities of the two actions and only state 0 pays reward.
pub fn build_paper_mdp(p: f64, q: f64) -> Result<Mdp> {
    check_open_unit("p", p)?;
    check_open_unit("q", q)?;
    let mut t = vec![vec![vec![0.0; 4]; 2]; 4];
    for (a, x) in [p, q].into_iter().enumerate() {
        t[0][a][2] = x;
        t[0][a][3] = 1.0 - x;
        t[1][a][3] = x;
        t[1][a][2] = 1.0 - x;
        t[2][a][0] = x;
        t[2][a][1] = 1.0 - x;
        t[3][a][0] = 1.0 - x;
        t[3][a][1] = x;
    }
    let mut r = vec![vec![0.0; 2]; 4];
    r[0] = vec![1.0, 1.0];
    Mdp::from_nested(&t, &r)
}

/// Random MDP whose rows are flat-Dirichlet draws mixed with
/// [`REACH_MIX`] mass on state 0; rewards are uniform on `[0, 1)`.
pub fn random_reachable_mdp(
    num_states: usize,
    num_actions: usize,
    rng: &mut SeededRng,
) -> Result<Mdp> {
    if num_states == 0 || num_actions == 0 {
        return Err(Error::EmptySpace);
    }
    let mut transition = Vec::with_capacity(num_states * num_actions * num_states);
    for _ in 0..num_states * num_actions {
        let draws: Vec<f64> = (0..num_states)
            .map(|_| {
                let e: f64 = Exp1.sample(rng.inner_mut());
                e + f64::MIN_POSITIVE
            })
            .collect();
        let total: f64 = draws.iter().sum();
        let mut row: Vec<f64> = draws.iter().map(|d| (1.0 - REACH_MIX) * d / total).collect();
        row[0] += REACH_MIX;
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= sum);
        transition.extend(row);
    }
    let reward = (0..num_states * num_actions).map(|_| rng.uniform()).collect();
    Mdp::new(num_states, num_actions, transition, reward)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    SyncExplicit,
    SyncImplicit,
    AsyncExplicit,
    AsyncImplicit,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::SyncExplicit,
        Algorithm::SyncImplicit,
        Algorithm::AsyncExplicit,
        Algorithm::AsyncImplicit,
    ];

    pub fn variant(self) -> Variant {
        match self {
            Algorithm::SyncExplicit | Algorithm::AsyncExplicit => Variant::Explicit,
            Algorithm::SyncImplicit | Algorithm::AsyncImplicit => Variant::Implicit,
        }
    }

    pub fn is_sync(self) -> bool {
        matches!(self, Algorithm::SyncExplicit | Algorithm::SyncImplicit)
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::SyncExplicit => "sync-explicit",
            Algorithm::SyncImplicit => "sync-implicit",
            Algorithm::AsyncExplicit => "async-explicit",
            Algorithm::AsyncImplicit => "async-implicit",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("unknown algorithm '{s}'"),
            })
    }
}

/// Experiment description; `Default` gives the standard benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub p: f64,
    pub q: f64,
    /// Total sample budgets, strictly increasing.
    pub sample_grid: Vec<u64>,
    pub seeds: Vec<u64>,
    pub algorithms: Vec<Algorithm>,
    pub output_path: Option<PathBuf>,
    /// Constant stepsize for the synchronous learners; derived per budget when absent.
    pub sync_stepsize: Option<f64>,
    pub lambda_star: Option<f64>,
    pub h: Option<f64>,
}

/// `round(10^(4 + k/2))` for `k = 0..=6`.
pub fn default_sample_grid() -> Vec<u64> {
    (0..=6)
        .map(|k| 10f64.powf(4.0 + 0.5 * k as f64).round() as u64)
        .collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            p: PAPER_P,
            q: PAPER_Q,
            sample_grid: default_sample_grid(),
            seeds: (0..10).collect(),
            algorithms: Algorithm::ALL.to_vec(),
            output_path: None,
            sync_stepsize: None,
            lambda_star: None,
            h: None,
        }
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse().map_err(|_| Error::Parse {
                line: 0,
                message: format!("{key}: bad entry '{t}'"),
            })
        })
        .collect()
}

fn parse_scalar<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Parse {
        line: 0,
        message: format!("{key}: bad value '{value}'"),
    })
}

impl ExperimentConfig {
    /// Reads `key = value` lines on top of the defaults; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected key=value, found '{body}'"),
            })?;
            cfg.set(key.trim(), value.trim()).map_err(|e| match e {
                Error::Parse { message, .. } => Error::Parse {
                    line: i + 1,
                    message,
                },
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Overrides one key. Seeds accept a list or a half-open range `a..b`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "p" => self.p = parse_scalar(key, value)?,
            "q" => self.q = parse_scalar(key, value)?,
            "sample_grid" => self.sample_grid = parse_list(key, value)?,
            "seeds" => {
                self.seeds = match value.split_once("..") {
                    Some((a, b)) => {
                        let a: u64 = parse_scalar(key, a)?;
                        let b: u64 = parse_scalar(key, b)?;
                        (a..b).collect()
                    }
                    None => parse_list(key, value)?,
                }
            }
            "algorithms" => self.algorithms = parse_list(key, value)?,
            "output_path" => self.output_path = Some(PathBuf::from(value)),
            "sync_stepsize" => self.sync_stepsize = Some(parse_scalar(key, value)?),
            "lambda_star" => self.lambda_star = Some(parse_scalar(key, value)?),
            "h" => self.h = Some(parse_scalar(key, value)?),
            other => {
                return Err(Error::Parse {
                    line: 0,
                    message: format!("unknown key '{other}'"),
                })
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        check_open_unit("p", self.p)?;
        check_open_unit("q", self.q)?;
        if self.sample_grid.is_empty() || self.seeds.is_empty() || self.algorithms.is_empty() {
            return Err(Error::Empty);
        }
        if self.sample_grid.windows(2).any(|w| w[0] >= w[1]) || self.sample_grid[0] == 0 {
            return Err(Error::InvalidParameter {
                name: "sample_grid",
                value: self.sample_grid[0] as f64,
                reason: "must be positive and strictly increasing",
            });
        }
        Ok(())
    }
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_loglog(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 2 {
        return Err(Error::Empty);
    }
    if let Some(&(x, y)) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(Error::InvalidParameter {
            name: "point",
            value: if x > 0.0 { y } else { x },
            reason: "log-log fit needs positive coordinates",
        });
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = logs.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter {
            name: "x",
            value: points[0].0,
            reason: "log-log fit needs at least two distinct x values",
        });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy <= f64::EPSILON * f64::EPSILON * n {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(SlopeFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Final state of one (algorithm, seed, budget) run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub budget: u64,
    pub log: RunLog,
    pub async_diagnostics: Option<AsyncDiagnostics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub mdp: Mdp,
    pub truth: AvgRewardSolution,
    pub horizon: usize,
    /// Sorted by (algorithm, seed, budget).
    pub records: Vec<RunRecord>,
    /// Seed-averaged final span error per budget, `(samples, error)`.
    pub mean_errors: Vec<(Algorithm, Vec<(u64, f64)>)>,
    pub fits: Vec<(Algorithm, SlopeFit)>,
}

impl ExperimentResult {
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        self.records
            .iter()
            .flat_map(|r| {
                r.log.entries().iter().map(move |e| CsvRow {
                    algorithm: r.algorithm.name().to_string(),
                    seed: r.seed,
                    samples: e.samples_used,
                    span_error: e.span_error,
                    gain_gap: e.gain_gap,
                })
            })
            .collect()
    }
}

/// Worker count from [`THREADS_ENV`]; `None` means let rayon decide.
pub fn configured_threads() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

fn run_one(
    mdp: &Mdp,
    truth: &AvgRewardSolution,
    horizon: usize,
    cfg: &ExperimentConfig,
    algorithm: Algorithm,
    seed: u64,
    budget: u64,
) -> Result<RunRecord> {
    let variant = algorithm.variant();
    if algorithm.is_sync() {
        let iterations = (budget / mdp.num_pairs() as u64) as usize;
        let stepsize = match cfg.sync_stepsize {
            Some(s) => s,
            None => default_sync_stepsize(horizon, iterations.max(2))?,
        };
        let sync_cfg =
            SyncConfig::new(variant, iterations, stepsize, seed)?.with_record_every(iterations);
        let out = run_sync(mdp, &sync_cfg, truth)?;
        Ok(RunRecord {
            algorithm,
            seed,
            budget,
            log: out.log,
            async_diagnostics: None,
        })
    } else {
        let iterations = budget as usize;
        let mut async_cfg = AsyncConfig::with_defaults(mdp, variant, iterations, horizon, seed)?;
        if let Some(l) = cfg.lambda_star {
            async_cfg.lambda_star = l;
            async_cfg.h = l;
        }
        if let Some(h) = cfg.h {
            async_cfg.h = h;
        }
        async_cfg.record_every = iterations.max(1);
        let out = run_async(mdp, &async_cfg, truth)?;
        Ok(RunRecord {
            algorithm,
            seed,
            budget,
            log: out.run.log,
            async_diagnostics: Some(out.diagnostics),
        })
    }
}

/// Runs every (algorithm, seed, budget) combination in parallel, fits slopes
/// to the seed-averaged final errors and writes the CSV when a path is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let mdp = build_paper_mdp(cfg.p, cfg.q)?;
    let report = reachability_report(&mdp, 0)?;
    let horizon = report.horizon.ok_or(Error::Unreachable { state: 0 })?;
    let truth = solve_average_reward(&mdp, 0, ORACLE_TOL)?;

    let mut tasks = Vec::new();
    for &algorithm in &cfg.algorithms {
        for &seed in &cfg.seeds {
            for &budget in &cfg.sample_grid {
                tasks.push((algorithm, seed, budget));
            }
        }
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = configured_threads() {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let mut records = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(alg, seed, budget)| run_one(&mdp, &truth, horizon, cfg, alg, seed, budget))
            .collect::<Result<Vec<_>>>()
    })?;
    records.sort_by_key(|r| (r.algorithm, r.seed, r.budget));

    let mut mean_errors = Vec::new();
    let mut fits = Vec::new();
    let mut algorithms = cfg.algorithms.clone();
    algorithms.sort();
    algorithms.dedup();
    for algorithm in algorithms {
        let mut series = Vec::new();
        for &budget in &cfg.sample_grid {
            let finals: Vec<(u64, f64)> = records
                .iter()
                .filter(|r| r.algorithm == algorithm && r.budget == budget)
                .filter_map(|r| r.log.last().map(|e| (e.samples_used, e.span_error)))
                .collect();
            if finals.is_empty() {
                continue;
            }
            let mean = finals.iter().map(|f| f.1).sum::<f64>() / finals.len() as f64;
            series.push((finals[0].0, mean));
        }
        let points: Vec<(f64, f64)> = series.iter().map(|&(n, e)| (n as f64, e)).collect();
        if let Ok(fit) = fit_loglog(&points) {
            fits.push((algorithm, fit));
        }
        mean_errors.push((algorithm, series));
    }

    let result = ExperimentResult {
        mdp,
        truth,
        horizon,
        records,
        mean_errors,
        fits,
    };
    if let Some(path) = &cfg.output_path {
        write_csv(&result.csv_rows(), path)?;
    }
    Ok(result)
}

/// One CSV line.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub algorithm: String,
    pub seed: u64,
    pub samples: u64,
    pub span_error: f64,
    pub gain_gap: f64,
}

pub const CSV_HEADER: [&str; 5] = ["algorithm", "seed", "samples", "span_error", "gain_gap"];

/// Writes rows with 17 significant digits per float.
pub fn write_csv_to<W: std::io::Write>(rows: &[CsvRow], out: W) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    writer.write_record(CSV_HEADER)?;
    for row in rows {
        writer.write_record([
            row.algorithm.clone(),
            row.seed.to_string(),
            row.samples.to_string(),
            format!("{:.16e}", row.span_error),
            format!("{:.16e}", row.gain_gap),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_csv(rows: &[CsvRow], path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv_to(rows, std::io::BufWriter::new(file))
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<CsvRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.iter().ne(CSV_HEADER) {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected header {headers:?}"),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let field = |k: usize| record.get(k).unwrap_or("");
        let bad = |what: &str| Error::Parse {
            line: i + 2,
            message: format!("bad {what}"),
        };
        rows.push(CsvRow {
            algorithm: field(0).to_string(),
            seed: field(1).parse().map_err(|_| bad("seed"))?,
            samples: field(2).parse().map_err(|_| bad("samples"))?,
            span_error: field(3).parse().map_err(|_| bad("span_error"))?,
            gain_gap: field(4).parse().map_err(|_| bad("gain_gap"))?,
        });
    }
    Ok(rows)
}
