use lazyq::harness::CsvRow;
use lazyq::*;
use proptest::prelude::*;

fn instance(seed: u64, n: usize, m: usize) -> Mdp {
    random_reachable_mdp(n, m, &mut SeededRng::new(seed)).unwrap()
}

fn table(n: usize, m: usize, values: &[f64]) -> QTable {
    QTable::from_vec(n, m, values[..n * m].to_vec()).unwrap()
}

fn values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, 12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn bellman_is_span_nonexpansive(seed in any::<u64>(), n in 1usize..5, m in 1usize..4,
                                    a in values(), b in values()) {
        let mdp = instance(seed, n, m);
        let (q1, q2) = (table(n, m, &a), table(n, m, &b));
        let lhs = bellman(&mdp, &q1).unwrap().sub(&bellman(&mdp, &q2).unwrap()).unwrap().span();
        prop_assert!(lhs <= q1.sub(&q2).unwrap().span() + 1e-12);
    }

    #[test]
    fn bellman_commutes_with_shift(seed in any::<u64>(), n in 1usize..5, m in 1usize..4,
                                   a in values(), c in -10.0f64..10.0) {
        let mdp = instance(seed, n, m);
        let q = table(n, m, &a);
        let shifted = bellman(&mdp, &q.add_scalar(c)).unwrap();
        let expected = bellman(&mdp, &q).unwrap().add_scalar(c);
        for (x, y) in shifted.as_slice().iter().zip(expected.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn greedy_ignores_shift_and_correction(n in 1usize..5, m in 1usize..4, a in values(),
                                           c in -10.0f64..10.0, alpha in 0.01f64..=1.0) {
        let q = table(n, m, &a);
        prop_assert_eq!(greedy(&q), greedy(&q.add_scalar(c)));
        prop_assert_eq!(greedy(&correct_q(&q, alpha).unwrap()), greedy(&q));
    }

    #[test]
    fn policy_matrix_is_stochastic(seed in any::<u64>(), n in 1usize..5, m in 1usize..4,
                                   w in prop::collection::vec(0.01f64..1.0, 12)) {
        let mdp = instance(seed, n, m);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|s| {
                let raw = &w[s * m..s * m + m];
                let total: f64 = raw.iter().sum();
                raw.iter().map(|x| x / total).collect()
            })
            .collect();
        if let Ok(pi) = StochasticPolicy::new(&rows) {
            let p = policy_matrix(&mdp, &pi).unwrap();
            for s in 0..n {
                prop_assert!((p.row(s).sum() - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn lift_then_correct_roundtrips(n in 1usize..5, m in 1usize..4, a in values(),
                                    g in -1.0f64..1.0, alpha in 0.01f64..=1.0) {
        let q = table(n, m, &a);
        let (lifted, gain) = lift_solution(&q, g, alpha).unwrap();
        prop_assert_eq!(gain, g);
        let back = correct_q(&lifted, alpha).unwrap();
        for (x, y) in back.as_slice().iter().zip(q.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs() / alpha));
        }
        prop_assert_eq!(greedy(&lifted), greedy(&q));
    }

    #[test]
    fn residual_transports_to_lazy_kernel(seed in any::<u64>(), n in 1usize..5, m in 1usize..4,
                                          alpha in 0.05f64..=1.0) {
        let mdp = instance(seed, n, m);
        let sol = solve_average_reward(&mdp, 0, 1e-10).unwrap();
        let eps = bellman(&mdp, &sol.q).unwrap().sub(&sol.q).unwrap().span();
        let lazy = lazy_transform(&mdp, alpha).unwrap();
        let (lifted, _) = lift_solution(&sol.q, sol.gain, alpha).unwrap();
        let lazy_eps = bellman(&lazy, &lifted).unwrap().sub(&lifted).unwrap().span();
        prop_assert!(lazy_eps <= eps / alpha + 1e-12 * (1.0 + lifted.linf()));
    }

    #[test]
    fn seminorm_equivalence_band(seed in any::<u64>(), n in 1usize..5, m in 1usize..4, a in values()) {
        let mdp = instance(seed, n, m);
        let h = reachability_report(&mdp, 0).unwrap().horizon.unwrap();
        let lazy = lazy_transform(&mdp, 0.5).unwrap();
        let cfg = SeminormConfig::new(h).unwrap();
        let q = table(n, m, &a);
        let v = sp_tilde(&lazy, &cfg, &q).unwrap();
        prop_assert!(v >= q.span() - 1e-9 && v <= 2.0 * q.span() + 1e-9);
    }

    #[test]
    fn text_format_roundtrips(seed in any::<u64>(), n in 1usize..6, m in 1usize..4) {
        let mdp = instance(seed, n, m);
        prop_assert_eq!(parse_mdp(&mdp_to_text(&mdp)).unwrap(), mdp);
    }

    #[test]
    fn csv_roundtrips(rows in prop::collection::vec((any::<u64>(), any::<u64>(), -1e6f64..1e6, -1.0f64..1.0), 0..20)) {
        let rows: Vec<CsvRow> = rows
            .into_iter()
            .map(|(seed, samples, e, g)| CsvRow {
                algorithm: "async-implicit".into(),
                seed,
                samples,
                span_error: e,
                gain_gap: g,
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.csv");
        write_csv(&rows, &path).unwrap();
        let back = read_csv(&path).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        for (x, y) in back.iter().zip(&rows) {
            prop_assert_eq!(x.span_error.to_bits(), y.span_error.to_bits());
            prop_assert_eq!(x.gain_gap.to_bits(), y.gain_gap.to_bits());
            prop_assert_eq!((x.seed, x.samples), (y.seed, y.samples));
        }
    }

    #[test]
    fn seeded_streams_repeat(seed in any::<u64>()) {
        let mut a = SeededRng::new(seed);
        let mut b = SeededRng::new(seed);
        for _ in 0..16 {
            prop_assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
    }
}

#[test]
fn empty_csv_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    write_csv(&[], &path).unwrap();
    assert_eq!(
        std::fs::read_to_string(&path).unwrap(),
        "algorithm,seed,samples,span_error,gain_gap\n"
    );
}
