use lazyq::seminorm::{
    dobrushin_coefficient, relaxed_beta, search_span_expansion, sequence_span, CHECK_TOL,
};
use lazyq::*;

fn bench_lazy() -> (Mdp, Mdp, SeminormConfig) {
    let m = build_paper_mdp(0.3, 0.7).unwrap();
    let lazy = lazy_transform(&m, 0.5).unwrap();
    let h = reachability_report(&m, 0).unwrap().horizon.unwrap();
    (m, lazy, SeminormConfig::new(h).unwrap())
}

fn random_table(rng: &mut SeededRng, n: usize, m: usize) -> QTable {
    QTable::from_vec(n, m, (0..n * m).map(|_| rng.uniform() * 2.0 - 1.0).collect()).unwrap()
}

fn normalized(q: QTable) -> QTable {
    let sp = q.span();
    q.scale(1.0 / sp)
}

/// Max over every deterministic sequence of length <= depth, by brute force.
fn naive_sp_tilde(lazy: &Mdp, beta: f64, depth: usize, q: &QTable) -> f64 {
    let policies: Vec<StochasticPolicy> =
        DeterministicPolicy::enumerate(lazy.num_states(), lazy.num_actions())
            .iter()
            .map(|p| StochasticPolicy::from_deterministic(p, lazy.num_actions()))
            .collect();
    let mut best = q.span();
    let mut sequences: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..depth {
        sequences = sequences
            .iter()
            .flat_map(|s| {
                (0..policies.len()).map(move |i| {
                    let mut next = s.clone();
                    next.push(i);
                    next
                })
            })
            .collect();
        for seq in &sequences {
            let chosen: Vec<StochasticPolicy> = seq.iter().map(|&i| policies[i].clone()).collect();
            best = best.max(sequence_span(lazy, beta, &chosen, q).unwrap());
        }
    }
    best
}

#[test]
fn matches_naive_enumeration_at_small_depth() {
    let (_, lazy, cfg) = bench_lazy();
    let mut rng = SeededRng::new(4);
    for depth in 0..=2 {
        let shallow = SeminormConfig {
            horizon: depth,
            ..cfg
        };
        for _ in 0..10 {
            let q = normalized(random_table(&mut rng, 4, 2));
            let fast = sp_tilde(&lazy, &shallow, &q).unwrap();
            let slow = naive_sp_tilde(&lazy, cfg.beta, depth, &q);
            assert!((fast - slow).abs() < 1e-10, "depth {depth}: {fast} vs {slow}");
        }
    }
}

#[test]
fn stochastic_sequences_never_exceed_vertex_value() {
    let (_, lazy, cfg) = bench_lazy();
    let mut rng = SeededRng::new(21);
    for _ in 0..20 {
        let q = random_table(&mut rng, 4, 2);
        let value = sp_tilde(&lazy, &cfg, &q).unwrap();
        for _ in 0..20 {
            let k = 1 + (rng.uniform() * cfg.horizon as f64) as usize % cfg.horizon;
            let seq: Vec<StochasticPolicy> = (0..k)
                .map(|_| {
                    let rows: Vec<Vec<f64>> = (0..4)
                        .map(|_| {
                            let w = rng.uniform();
                            vec![w, 1.0 - w]
                        })
                        .collect();
                    StochasticPolicy::new(&rows).unwrap()
                })
                .collect();
            assert!(sequence_span(&lazy, cfg.beta, &seq, &q).unwrap() <= value + CHECK_TOL);
        }
    }
}

#[test]
fn seminorm_axioms() {
    let (_, lazy, cfg) = bench_lazy();
    let mut rng = SeededRng::new(9);
    for _ in 0..30 {
        let q1 = random_table(&mut rng, 4, 2);
        let q2 = random_table(&mut rng, 4, 2);
        let c = rng.uniform() * 6.0 - 3.0;
        let a = sp_tilde(&lazy, &cfg, &q1).unwrap();
        let b = sp_tilde(&lazy, &cfg, &q2).unwrap();
        let scaled = sp_tilde(&lazy, &cfg, &q1.scale(c)).unwrap();
        assert!((scaled - c.abs() * a).abs() < 1e-9);
        let sum = sp_tilde(&lazy, &cfg, &q1.add(&q2).unwrap()).unwrap();
        assert!(sum <= a + b + 1e-9);
        let shifted = sp_tilde(&lazy, &cfg, &q1.add_scalar(c)).unwrap();
        assert!((shifted - a).abs() < 1e-9);
        assert!(a >= q1.span() - 1e-12 && a <= 2.0 * q1.span() + 1e-9);
        assert!(a > 0.0);
    }
}

#[test]
fn contraction_on_benchmark_and_shift_pairs() {
    let (_, lazy, cfg) = bench_lazy();
    let mut rng = SeededRng::new(31);
    for _ in 0..50 {
        let q1 = random_table(&mut rng, 4, 2);
        let q2 = random_table(&mut rng, 4, 2);
        assert!(check_contraction(&lazy, &cfg, &q1, &q2).unwrap().holds);
        let shifted = check_contraction(&lazy, &cfg, &q1, &q1.add_scalar(2.5)).unwrap();
        assert!(shifted.lhs.abs() < 1e-12 && shifted.rhs.abs() < 1e-12 && shifted.holds);
    }
}

#[test]
fn policy_contraction_and_relaxed_factor() {
    let (_, lazy, cfg) = bench_lazy();
    let mut rng = SeededRng::new(12);
    let constant = check_policy_contraction(
        &lazy,
        &cfg,
        &StochasticPolicy::uniform(4, 2),
        &QTable::constant(4, 2, 3.0),
    )
    .unwrap();
    assert_eq!((constant.lhs, constant.rhs), (0.0, 0.0));
    assert!(relaxed_beta(cfg.horizon).unwrap() >= cfg.beta);
    for _ in 0..40 {
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let w = rng.uniform();
                vec![w, 1.0 - w]
            })
            .collect();
        let pi = StochasticPolicy::new(&rows).unwrap();
        let q = random_table(&mut rng, 4, 2);
        let report = check_policy_contraction(&lazy, &cfg, &pi, &q).unwrap();
        assert!(report.holds && report.holds_relaxed);
    }
}

#[test]
fn original_operator_expands_span_on_benchmark() {
    let (m, lazy, cfg) = bench_lazy();
    assert!((dobrushin_coefficient(&m) - 1.0).abs() < 1e-15);
    assert!((dobrushin_coefficient(&lazy) - 0.7).abs() < 1e-12);
    let mut rng = SeededRng::new(1);
    let found = search_span_expansion(&m, cfg.beta, 10_000, &mut rng).unwrap();
    let (q1, q2) = found.witness.expect("witness for the original operator");
    let lhs = bellman(&m, &q1).unwrap().sub(&bellman(&m, &q2).unwrap()).unwrap().span();
    assert!(lhs > cfg.beta * q1.sub(&q2).unwrap().span());
}

#[test]
fn search_is_reproducible() {
    let (m, _, cfg) = bench_lazy();
    let a = search_span_expansion(&m, cfg.beta, 500, &mut SeededRng::new(3)).unwrap();
    let b = search_span_expansion(&m, cfg.beta, 500, &mut SeededRng::new(3)).unwrap();
    assert_eq!(a, b);
}
