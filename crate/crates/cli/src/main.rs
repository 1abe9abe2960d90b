use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lazyq::harness::{PAPER_P, PAPER_Q};
use lazyq::*;

const EXIT_VALIDATION: u8 = 1;
const EXIT_PROPERTY: u8 = 2;
const EXIT_USAGE: u8 = 64;

/// Names the bundled benchmark MDP wherever a file path is expected.
const PAPER_ALIAS: &str = "@paper";
const ENUMERATION_LIMIT: usize = 4096;

#[derive(Parser)]
#[command(name = "lazyq", version, about = "Lazy Q-learning for average-reward MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an MDP exactly and print g*, sp(Q*), K and beta.
    Solve {
        mdp: String,
        #[arg(long, default_value_t = 0)]
        sdagger: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Run the reachability, hitting-time, equivalence and contraction suites.
    Check {
        mdp: String,
        #[arg(long, default_value_t = 0)]
        sdagger: usize,
        /// Random tables for the equivalence suite.
        #[arg(long, default_value_t = 200)]
        tables: usize,
        /// Random table pairs for the contraction suite.
        #[arg(long, default_value_t = 200)]
        pairs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the synchronous learner.
    TrainSync {
        #[command(flatten)]
        common: TrainArgs,
        /// Constant stepsize; derived from the horizon and iteration count when omitted.
        #[arg(long)]
        stepsize: Option<f64>,
    },
    /// Run the asynchronous learner along one trajectory.
    TrainAsync {
        #[command(flatten)]
        common: TrainArgs,
        #[arg(long)]
        lambda_star: Option<f64>,
        #[arg(long)]
        h: Option<f64>,
        #[arg(long, default_value = "uniform", value_parser = ["uniform"])]
        behavior: String,
        #[arg(long, default_value_t = 0)]
        start: usize,
    },
    /// Run the benchmark experiment and print the fitted slope per algorithm.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override one config key, as `key=value`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print sp and sp~ of a Q-table.
    Seminorm {
        mdp: String,
        #[arg(long)]
        q_file: PathBuf,
        #[arg(long, default_value_t = 0)]
        sdagger: usize,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value = PAPER_ALIAS)]
    mdp: String,
    #[arg(long, default_value = "implicit")]
    variant: Variant,
    #[arg(long)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV file for the error log.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    record_every: Option<usize>,
    #[arg(long, default_value_t = 0)]
    sdagger: usize,
}

enum Failure {
    Validation(Error),
    Property,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Validation(e)
    }
}

type Outcome = std::result::Result<(), Failure>;

fn load_mdp(source: &str) -> Result<Mdp> {
    if source == PAPER_ALIAS {
        build_paper_mdp(PAPER_P, PAPER_Q)
    } else {
        read_mdp(source)
    }
}

fn horizon_for(mdp: &Mdp, sdagger: usize) -> Result<(f64, usize)> {
    let report = reachability_report(mdp, sdagger)?;
    match (report.hitting_constant, report.horizon) {
        (Some(k), Some(h)) => Ok((k, h)),
        _ => Err(Error::Unreachable { state: sdagger }),
    }
}

fn solve(source: &str, sdagger: usize, tol: f64) -> Outcome {
    let mdp = load_mdp(source)?;
    let (k, horizon) = horizon_for(&mdp, sdagger)?;
    let sol = solve_average_reward(&mdp, sdagger, tol)?;
    println!("gain      {:.10}", sol.gain);
    println!("span      {:.10}", sol.q.span());
    println!("hitting   {:.10}", k);
    println!("beta      {:.10}", contraction_beta(horizon)?);
    Ok(())
}

fn report(name: &str, pass: bool, detail: &str) -> bool {
    println!("{:<14} {}  {detail}", name, if pass { "pass" } else { "FAIL" });
    pass
}

fn random_table(rng: &mut SeededRng, n: usize, m: usize) -> Result<QTable> {
    QTable::from_vec(n, m, (0..n * m).map(|_| 2.0 * rng.uniform() - 1.0).collect())
}

fn check(source: &str, sdagger: usize, tables: usize, pairs: usize, seed: u64) -> Outcome {
    let mdp = load_mdp(source)?;
    let (n, m) = (mdp.num_states(), mdp.num_actions());
    let reachable = check_reachability(&mdp, sdagger)?;
    if !report("reachability", reachable, &format!("s† = {sdagger}")) {
        return Err(Failure::Property);
    }
    let (k, horizon) = horizon_for(&mdp, sdagger)?;
    let mut ok = true;

    let policies = (m as f64).powi(n as i32);
    if policies <= ENUMERATION_LIMIT as f64 {
        let brute = DeterministicPolicy::enumerate(n, m)
            .iter()
            .map(|pi| {
                expected_hitting_time(&mdp, pi, sdagger)
                    .map(|times| times.into_iter().fold(0.0, f64::max))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        let pass = (k - brute).abs() <= 1e-8;
        ok &= report("hitting-time", pass, &format!("K = {k:.8}, enumeration {brute:.8}"));
    } else {
        report("hitting-time", true, &format!("K = {k:.8}, enumeration skipped ({policies} policies)"));
    }

    let lazy = lazy_transform(&mdp, DEFAULT_ALPHA)?;
    let cfg = SeminormConfig::new(horizon)?;
    let mut rng = SeededRng::new(seed);
    let mut inside = 0;
    for _ in 0..tables {
        let q = random_table(&mut rng, n, m)?;
        let value = sp_tilde(&lazy, &cfg, &q)?;
        if value >= q.span() - 1e-9 && value <= 2.0 * q.span() + 1e-9 {
            inside += 1;
        }
    }
    ok &= report("equivalence", inside == tables, &format!("{inside}/{tables} tables"));

    let mut holds = 0;
    for _ in 0..pairs {
        let q1 = random_table(&mut rng, n, m)?;
        let q2 = random_table(&mut rng, n, m)?;
        if check_contraction(&lazy, &cfg, &q1, &q2)?.holds {
            holds += 1;
        }
    }
    ok &= report(
        "contraction",
        holds == pairs,
        &format!("{holds}/{pairs} pairs, beta = {:.8}", cfg.beta),
    );
    if ok {
        Ok(())
    } else {
        Err(Failure::Property)
    }
}

fn write_log(path: &Path, algorithm: Algorithm, seed: u64, log: &RunLog) -> Result<()> {
    let rows: Vec<CsvRow> = log
        .entries()
        .iter()
        .map(|e| CsvRow {
            algorithm: algorithm.name().to_string(),
            seed,
            samples: e.samples_used,
            span_error: e.span_error,
            gain_gap: e.gain_gap,
        })
        .collect();
    write_csv(&rows, path)
}

fn summarize(run: &RunOutput) {
    if let Some(last) = run.log.last() {
        println!("samples     {}", last.samples_used);
        println!("span_error  {:.10}", last.span_error);
        println!("gain_gap    {:.10}", last.gain_gap);
    }
    let actions: Vec<String> = run.policy.actions().iter().map(|a| a.to_string()).collect();
    println!("policy      {}", actions.join(" "));
}

fn algorithm_for(variant: Variant, sync: bool) -> Algorithm {
    match (variant, sync) {
        (Variant::Explicit, true) => Algorithm::SyncExplicit,
        (Variant::Implicit, true) => Algorithm::SyncImplicit,
        (Variant::Explicit, false) => Algorithm::AsyncExplicit,
        (Variant::Implicit, false) => Algorithm::AsyncImplicit,
    }
}

fn train_sync(args: &TrainArgs, stepsize: Option<f64>) -> Outcome {
    let mdp = load_mdp(&args.mdp)?;
    let (_, horizon) = horizon_for(&mdp, args.sdagger)?;
    let truth = solve_average_reward(&mdp, args.sdagger, 1e-10)?;
    let stepsize = match stepsize {
        Some(s) => s,
        None => default_sync_stepsize(horizon, args.iterations)?,
    };
    let mut cfg = SyncConfig::new(args.variant, args.iterations, stepsize, args.seed)?;
    if let Some(every) = args.record_every {
        cfg = cfg.with_record_every(every);
    }
    let out = run_sync(&mdp, &cfg, &truth)?;
    println!("stepsize    {stepsize:.6e}");
    summarize(&out);
    if let Some(path) = &args.out {
        write_log(path, algorithm_for(args.variant, true), args.seed, &out.log)?;
    }
    Ok(())
}

fn train_async(args: &TrainArgs, lambda_star: Option<f64>, h: Option<f64>, start: usize) -> Outcome {
    let mdp = load_mdp(&args.mdp)?;
    let (_, horizon) = horizon_for(&mdp, args.sdagger)?;
    let truth = solve_average_reward(&mdp, args.sdagger, 1e-10)?;
    let mut cfg = AsyncConfig::with_defaults(&mdp, args.variant, args.iterations, horizon, args.seed)?;
    if let Some(l) = lambda_star {
        cfg.lambda_star = l;
        cfg.h = l;
    }
    if let Some(h) = h {
        cfg.h = h;
    }
    cfg.start_state = start;
    if let Some(every) = args.record_every {
        cfg.record_every = every;
    }
    let out = run_async(&mdp, &cfg, &truth)?;
    println!("lambda_star {:.6e}", cfg.lambda_star);
    println!("h           {:.6e}", cfg.h);
    summarize(&out.run);
    let d = out.diagnostics;
    println!(
        "invariants  stepsizes {} span-growth {} span-ceiling {}",
        d.stepsizes_valid, d.span_growth_ok, d.span_ceiling_ok
    );
    if let Some(path) = &args.out {
        write_log(path, algorithm_for(args.variant, false), args.seed, &out.run.log)?;
    }
    Ok(())
}

fn bench(config: Option<&Path>, overrides: &[String], out: Option<&Path>) -> Outcome {
    let mut cfg = match config {
        Some(path) => ExperimentConfig::read(path)?,
        None => ExperimentConfig::default(),
    };
    for item in overrides {
        let (key, value) = item.split_once('=').ok_or_else(|| Error::Parse {
            line: 0,
            message: format!("expected key=value, found '{item}'"),
        })?;
        cfg.set(key.trim(), value.trim())?;
    }
    if let Some(path) = out {
        cfg.output_path = Some(path.to_path_buf());
    }
    cfg.validate()?;
    let result = run_experiment(&cfg)?;
    for (algorithm, series) in &result.mean_errors {
        let points: Vec<String> = series.iter().map(|(n, e)| format!("{n}:{e:.4}")).collect();
        println!("{algorithm:<15} {}", points.join(" "));
    }
    for (algorithm, fit) in &result.fits {
        println!(
            "{algorithm:<15} slope {:.4}  intercept {:.4}  r2 {:.4}",
            fit.slope, fit.intercept, fit.r_squared
        );
    }
    Ok(())
}

fn seminorm(source: &str, q_file: &Path, sdagger: usize) -> Outcome {
    let mdp = load_mdp(source)?;
    let q = parse_qtable(&std::fs::read_to_string(q_file).map_err(Error::from)?)?;
    if (q.num_states(), q.num_actions()) != (mdp.num_states(), mdp.num_actions()) {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", mdp.num_states(), mdp.num_actions()),
            found: format!("{}x{}", q.num_states(), q.num_actions()),
        }
        .into());
    }
    let (_, horizon) = horizon_for(&mdp, sdagger)?;
    let lazy = lazy_transform(&mdp, DEFAULT_ALPHA)?;
    println!("sp        {:.10}", q.span());
    println!("sp_tilde  {:.10}", sp_tilde(&lazy, &SeminormConfig::new(horizon)?, &q)?);
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Solve { mdp, sdagger, tol } => solve(&mdp, sdagger, tol),
        Command::Check {
            mdp,
            sdagger,
            tables,
            pairs,
            seed,
        } => check(&mdp, sdagger, tables, pairs, seed),
        Command::TrainSync { common, stepsize } => train_sync(&common, stepsize),
        Command::TrainAsync {
            common,
            lambda_star,
            h,
            behavior: _,
            start,
        } => train_async(&common, lambda_star, h, start),
        Command::Bench {
            config,
            overrides,
            out,
        } => bench(config.as_deref(), &overrides, out.as_deref()),
        Command::Seminorm {
            mdp,
            q_file,
            sdagger,
        } => seminorm(&mdp, &q_file, sdagger),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Property) => ExitCode::from(EXIT_PROPERTY),
    }
}
