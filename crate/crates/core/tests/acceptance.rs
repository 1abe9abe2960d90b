//! Acceptance gate. Each test prints one `PASS`/`FAIL` line and then asserts.
//!
//! Run with `cargo test -p lazyq --test acceptance -- --nocapture` to see the lines.

use std::sync::OnceLock;
use std::time::Instant;

use lazyq::harness::{write_csv_to, ExperimentResult};
use lazyq::mdp::greedy;
use lazyq::oracles::ORACLE_TOL;
use lazyq::seminorm::{search_span_expansion, CHECK_TOL};
use lazyq::sync::{empirical_bellman_explicit, empirical_bellman_implicit};
use lazyq::*;

const FAMILY_SIZE: usize = 100;
const PAIRS_PER_INSTANCE: usize = 20;
const EQUIVALENCE_TABLES: usize = 1000;
const WITNESS_BUDGET: usize = 10_000;
const HITTING_TOL: f64 = 1e-8;
const DOUBLING_TOL: f64 = 1e-6;
const ROUNDTRIP_TOL: f64 = 1e-12;
const MC_DRAWS: usize = 100_000;
const MC_SIGMAS: f64 = 5.0;
const ROUNDING_TOL: f64 = 1e-9;
const SLOPE_LOW: f64 = -0.65;
const SLOPE_HIGH: f64 = -0.35;

fn verdict(id: u32, name: &str, pass: bool, detail: &str) -> bool {
    println!(
        "[{}] criterion {id:>2} {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

struct Instance {
    mdp: Mdp,
    lazy: Mdp,
    cfg: SeminormConfig,
}

/// Random reachable instances with `|S| <= 4`, `|A| <= 3`.
fn family() -> &'static Vec<Instance> {
    static FAMILY: OnceLock<Vec<Instance>> = OnceLock::new();
    FAMILY.get_or_init(|| {
        let mut rng = SeededRng::new(20_240_601);
        (0..FAMILY_SIZE)
            .map(|i| {
                let n = 1 + i % 4;
                let m = 1 + (i / 4) % 3;
                let mdp = random_reachable_mdp(n, m, &mut rng).unwrap();
                let report = reachability_report(&mdp, 0).unwrap();
                Instance {
                    lazy: lazy_transform(&mdp, 0.5).unwrap(),
                    cfg: SeminormConfig::new(report.horizon.unwrap()).unwrap(),
                    mdp,
                }
            })
            .collect()
    })
}

fn random_table(rng: &mut SeededRng, n: usize, m: usize) -> QTable {
    QTable::from_vec(n, m, (0..n * m).map(|_| rng.uniform() * 2.0 - 1.0).collect()).unwrap()
}

fn experiment() -> &'static ExperimentResult {
    static RESULT: OnceLock<ExperimentResult> = OnceLock::new();
    RESULT.get_or_init(|| {
        let start = Instant::now();
        let result = run_experiment(&ExperimentConfig::default()).unwrap();
        println!("experiment finished in {:.1}s", start.elapsed().as_secs_f64());
        result
    })
}

fn csv_bytes(result: &ExperimentResult) -> Vec<u8> {
    let mut buf = Vec::new();
    write_csv_to(&result.csv_rows(), &mut buf).unwrap();
    buf
}

#[test]
fn criterion_01_contraction_suite() {
    let start = Instant::now();
    let mut rng = SeededRng::new(1);
    let mut holds = 0;
    let mut total = 0;
    let mut worst: f64 = 0.0;
    for inst in family() {
        let (n, m) = (inst.mdp.num_states(), inst.mdp.num_actions());
        for _ in 0..PAIRS_PER_INSTANCE {
            let q1 = random_table(&mut rng, n, m);
            let q2 = random_table(&mut rng, n, m);
            let r = check_contraction(&inst.lazy, &inst.cfg, &q1, &q2).unwrap();
            total += 1;
            if r.holds {
                holds += 1;
            }
            if r.rhs > 0.0 {
                worst = worst.max(r.lhs / r.rhs);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = holds == total && total == FAMILY_SIZE * PAIRS_PER_INSTANCE && secs < 120.0;
    let detail = format!("{holds}/{total} hold, max lhs/rhs {worst:.6}, {secs:.2}s");
    assert!(verdict(1, "one-step contraction under sp~", pass, &detail));
}

#[test]
fn criterion_02_span_contraction_failure_witness() {
    let start = Instant::now();
    let mdp = build_paper_mdp(0.3, 0.7).unwrap();
    let lazy = lazy_transform(&mdp, 0.5).unwrap();
    let horizon = reachability_report(&mdp, 0).unwrap().horizon.unwrap();
    let beta = contraction_beta(horizon).unwrap();
    let lazy_search = search_span_expansion(&lazy, beta, WITNESS_BUDGET, &mut SeededRng::new(2)).unwrap();
    let original_search = search_span_expansion(&mdp, beta, WITNESS_BUDGET, &mut SeededRng::new(2)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pass = lazy_search.witness.is_some() && secs < 10.0;
    let detail = format!(
        "lazy operator: witness {} after {} pairs, best ratio {:.4} vs beta {:.6}; original operator: witness {} after {} pairs; {secs:.2}s",
        lazy_search.witness.is_some(),
        lazy_search.pairs_tried,
        lazy_search.best_ratio,
        beta,
        original_search.witness.is_some(),
        original_search.pairs_tried,
    );
    assert!(verdict(2, "span-contraction failure witness", pass, &detail));
}

#[test]
fn criterion_03_seminorm_equivalence() {
    let mut rng = SeededRng::new(3);
    let per = EQUIVALENCE_TABLES / FAMILY_SIZE;
    let mut ok = 0;
    let mut total = 0;
    for inst in family() {
        for _ in 0..per {
            let q = random_table(&mut rng, inst.mdp.num_states(), inst.mdp.num_actions());
            let v = sp_tilde(&inst.lazy, &inst.cfg, &q).unwrap();
            let sp = q.span();
            total += 1;
            if v >= sp - CHECK_TOL && v <= 2.0 * sp + CHECK_TOL {
                ok += 1;
            }
        }
    }
    let pass = ok == total && total == EQUIVALENCE_TABLES;
    let detail = format!("{ok}/{total} tables satisfy sp <= sp~ <= 2 sp");
    assert!(verdict(3, "seminorm equivalence band", pass, &detail));
}

#[test]
fn criterion_04_oracle_cross_checks() {
    let mut enum_ok = 0;
    let mut doubling_ok = 0;
    let mut bound_ok = 0;
    let mut worst_doubling: f64 = 0.0;
    let instances: Vec<&Mdp> = family().iter().map(|i| &i.mdp).collect();
    let bench = build_paper_mdp(0.3, 0.7).unwrap();
    let all: Vec<&Mdp> = instances.into_iter().chain(std::iter::once(&bench)).collect();
    for mdp in &all {
        let (n, m) = (mdp.num_states(), mdp.num_actions());
        assert!(m.pow(n as u32) <= 81);
        let k = max_hitting_time(mdp, 0).unwrap();
        let brute = DeterministicPolicy::enumerate(n, m)
            .iter()
            .map(|pi| {
                expected_hitting_time(mdp, pi, 0)
                    .unwrap()
                    .into_iter()
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if (k - brute).abs() <= HITTING_TOL {
            enum_ok += 1;
        }
        let k_lazy = max_hitting_time(&lazy_transform(mdp, 0.5).unwrap(), 0).unwrap();
        let gap = (k_lazy - 2.0 * k).abs();
        worst_doubling = worst_doubling.max(gap);
        if gap <= DOUBLING_TOL {
            doubling_ok += 1;
        }
        let sol = solve_average_reward(mdp, 0, ORACLE_TOL).unwrap();
        if sol.q.span() <= 2.0 * k + 1.0 {
            bound_ok += 1;
        }
    }
    let total = all.len();
    let pass = enum_ok == total && doubling_ok == total && bound_ok == total;
    let detail = format!(
        "enumeration {enum_ok}/{total}, lazy doubling {doubling_ok}/{total} (worst |K_lazy - 2K| = {worst_doubling:.4}), sp(Q*) <= 2K+1 {bound_ok}/{total}"
    );
    assert!(verdict(4, "oracle cross-checks", pass, &detail));
}

fn argmax_set(row: &[f64]) -> Vec<usize> {
    let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12 * (1.0 + best.abs());
    (0..row.len()).filter(|&a| row[a] >= best - tol).collect()
}

#[test]
fn criterion_05_lift_and_correct() {
    let bench = build_paper_mdp(0.3, 0.7).unwrap();
    let mut instances: Vec<Mdp> = family().iter().map(|i| i.mdp.clone()).collect();
    instances.push(bench);
    let mut residual_ok = 0;
    let mut roundtrip_ok = 0;
    let mut greedy_ok = 0;
    let mut worst_residual: f64 = 0.0;
    for mdp in &instances {
        let sol = solve_average_reward(mdp, 0, ORACLE_TOL).unwrap();
        let lazy = lazy_transform(mdp, 0.5).unwrap();
        let (lifted, gain) = lift_solution(&sol.q, sol.gain, 0.5).unwrap();
        let residual = bellman(&lazy, &lifted)
            .unwrap()
            .sub(&lifted)
            .unwrap()
            .add_scalar(-gain)
            .span();
        worst_residual = worst_residual.max(residual);
        if residual <= 10.0 * ORACLE_TOL {
            residual_ok += 1;
        }
        let back = correct_q(&lifted, 0.5).unwrap();
        let err = back
            .as_slice()
            .iter()
            .zip(sol.q.as_slice())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        if err <= ROUNDTRIP_TOL {
            roundtrip_ok += 1;
        }
        let same = (0..mdp.num_states())
            .all(|s| argmax_set(lifted.row(s)) == argmax_set(sol.q.row(s)))
            && greedy(&lifted) == greedy(&sol.q);
        if same {
            greedy_ok += 1;
        }
    }
    let total = instances.len();
    let pass = residual_ok == total && roundtrip_ok == total && greedy_ok == total;
    let detail = format!(
        "lazy residual {residual_ok}/{total} (worst {worst_residual:.2e}), roundtrip {roundtrip_ok}/{total}, greedy sets {greedy_ok}/{total}"
    );
    assert!(verdict(5, "lift/correct identities", pass, &detail));
}

#[test]
fn criterion_06_unbiasedness() {
    let mdp = build_paper_mdp(0.3, 0.7).unwrap();
    let lazy = lazy_transform(&mdp, 0.5).unwrap();
    let sol = solve_average_reward(&mdp, 0, ORACLE_TOL).unwrap();
    let mut rng = SeededRng::new(6);
    let mut tables = vec![sol.q.clone(), QTable::zeros(4, 2), sol.q.scale(-1.0)];
    tables.push(random_table(&mut rng, 4, 2));
    tables.push(random_table(&mut rng, 4, 2).scale(10.0));
    let mut worst_z: f64 = 0.0;
    let mut ok = true;
    for (i, q) in tables.iter().enumerate() {
        let target = bellman(&lazy, q).unwrap();
        for explicit in [true, false] {
            let mut draw_rng = SeededRng::for_run(60, (2 * i + explicit as usize) as u64);
            let mut sum = [0.0; 8];
            let mut sq = [0.0; 8];
            for _ in 0..MC_DRAWS {
                let x = if explicit {
                    empirical_bellman_explicit(&mdp, q, &mut draw_rng).unwrap()
                } else {
                    empirical_bellman_implicit(&mdp, q, &mut draw_rng).unwrap()
                };
                for k in 0..8 {
                    sum[k] += x.as_slice()[k];
                    sq[k] += x.as_slice()[k].powi(2);
                }
            }
            let n = MC_DRAWS as f64;
            for k in 0..8 {
                let mean = sum[k] / n;
                let se = ((sq[k] / n - mean * mean).max(0.0) / n).sqrt();
                let gap = (mean - target.as_slice()[k]).abs();
                if se > 0.0 {
                    worst_z = worst_z.max(gap / se);
                }
                ok &= gap <= MC_SIGMAS * se + ROUNDING_TOL * (1.0 + target.as_slice()[k].abs());
            }
        }
    }
    let detail = format!("5 tables x 2 operators x 8 entries, worst |z| = {worst_z:.2}");
    assert!(verdict(6, "empirical operators unbiased", ok, &detail));
}

fn slope_detail(result: &ExperimentResult, alg: Algorithm) -> (f64, Vec<(u64, f64)>) {
    let slope = result
        .fits
        .iter()
        .find(|(a, _)| *a == alg)
        .map(|(_, f)| f.slope)
        .unwrap_or(f64::NAN);
    let series = result
        .mean_errors
        .iter()
        .find(|(a, _)| *a == alg)
        .map(|(_, s)| s.clone())
        .unwrap_or_default();
    (slope, series)
}

fn format_series(series: &[(u64, f64)]) -> String {
    series
        .iter()
        .map(|(n, e)| format!("{n}:{e:.4}"))
        .collect::<Vec<_>>()
        .join(" ")
}

#[test]
fn criterion_07_sync_rate() {
    let result = experiment();
    let mut pass = true;
    let mut parts = Vec::new();
    for alg in [Algorithm::SyncExplicit, Algorithm::SyncImplicit] {
        let (slope, series) = slope_detail(result, alg);
        let decreasing = series.windows(2).all(|w| w[1].1 < w[0].1);
        pass &= (SLOPE_LOW..=SLOPE_HIGH).contains(&slope) && decreasing && series.len() == 7;
        parts.push(format!(
            "{alg} slope {slope:.3} decreasing {decreasing} [{}]",
            format_series(&series)
        ));
    }
    assert!(verdict(7, "synchronous convergence rate", pass, &parts.join("; ")));
}

#[test]
fn criterion_08_async_rate_and_invariants() {
    let result = experiment();
    let mut pass = true;
    let mut parts = Vec::new();
    for alg in [Algorithm::AsyncExplicit, Algorithm::AsyncImplicit] {
        let (slope, series) = slope_detail(result, alg);
        let runs: Vec<_> = result.records.iter().filter(|r| r.algorithm == alg).collect();
        let invariants = runs.iter().all(|r| {
            let d = r.async_diagnostics.unwrap();
            d.stepsizes_valid && d.span_growth_ok && d.span_ceiling_ok
        });
        pass &= (SLOPE_LOW..=SLOPE_HIGH).contains(&slope) && invariants && series.len() == 7;
        parts.push(format!(
            "{alg} slope {slope:.3} invariants {invariants} over {} runs [{}]",
            runs.len(),
            format_series(&series)
        ));
    }
    assert!(verdict(8, "asynchronous convergence rate", pass, &parts.join("; ")));
}

#[test]
fn criterion_09_gain_gap_soundness() {
    let result = experiment();
    let mut ok = 0;
    let mut total = 0;
    let mut tightest = f64::INFINITY;
    for r in &result.records {
        let e = r.log.last().unwrap();
        total += 1;
        if e.gain_gap >= -CHECK_TOL && e.gain_gap <= e.span_error + CHECK_TOL {
            ok += 1;
        }
        tightest = tightest.min(e.span_error - e.gain_gap);
    }
    let pass = ok == total && total == 4 * 7 * 10;
    let detail = format!("{ok}/{total} final iterates satisfy 0 <= gap <= sp error (min slack {tightest:.3e})");
    assert!(verdict(9, "gain-gap soundness", pass, &detail));
}

#[test]
fn criterion_10_determinism() {
    let first = csv_bytes(experiment());
    let second = csv_bytes(&run_experiment(&ExperimentConfig::default()).unwrap());
    let rows = first.iter().filter(|&&b| b == b'\n').count() - 1;
    let pass = first == second && rows == 4 * 7 * 10;
    let detail = format!("two full runs, {rows} rows, {} bytes, identical {}", first.len(), first == second);
    assert!(verdict(10, "byte-identical CSV", pass, &detail));
}
