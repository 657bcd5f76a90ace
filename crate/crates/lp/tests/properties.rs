use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robusthedge_lp::*;

fn random_lp(rng: &mut ChaCha8Rng) -> LinearProgram<Rational> {
    let n = rng.gen_range(1..=5);
    let m = rng.gen_range(1..=5);
    let direction = if rng.gen_bool(0.5) { Direction::Minimize } else { Direction::Maximize };
    let mut lp = LinearProgram::<Rational>::new(direction, n);
    let small = |rng: &mut ChaCha8Rng| rat(rng.gen_range(-6..=6), rng.gen_range(1..=4));
    lp.objective = (0..n).map(|_| small(rng)).collect();
    for j in 0..n {
        lp.bounds[j] = match rng.gen_range(0..4) {
            0 => Bounds::nonneg(),
            1 => Bounds::between(rat(-2, 1), rat(3, 1)),
            2 => Bounds::free(),
            _ => Bounds { lower: None, upper: Some(rat(2, 1)) },
        };
    }
    for _ in 0..m {
        let coeffs = (0..n).map(|_| if rng.gen_bool(0.3) { rat(0, 1) } else { small(rng) }).collect();
        let sense = match rng.gen_range(0..3) {
            0 => Sense::Le,
            1 => Sense::Ge,
            _ => Sense::Eq,
        };
        lp.add_row(coeffs, sense, small(rng));
    }
    lp
}

#[test]
fn exact_and_float_agree_on_random_programs() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut seen = [0usize; 3];
    for _ in 0..1000 {
        let lp = random_lp(&mut rng);
        let exact = solve_lp(&lp, Arithmetic::Exact).unwrap();
        let float = solve_lp(&lp, Arithmetic::Float).unwrap();
        assert_eq!(exact.status, float.status, "{lp:?}");
        seen[exact.status as usize] += 1;
        match exact.status {
            Status::Optimal => {
                assert!((exact.objective.to_f64() - float.objective.to_f64()).abs() < 1e-7);
                assert_eq!(lp.max_violation(&exact.x), rat(0, 1));
                assert_eq!(lp.objective_value(&exact.x), exact.objective);
                let y = exact.duals.as_ref().unwrap();
                assert_eq!(dual_objective(&lp, y), Some(exact.objective.clone()), "{lp:?}");
            }
            Status::Infeasible => assert!(verify_farkas(&lp, exact.farkas.as_ref().unwrap(), 0.0)),
            Status::Unbounded => {
                assert!(verify_ray(&lp, exact.ray.as_ref().unwrap(), 0.0));
                assert_eq!(lp.max_violation(&exact.x), rat(0, 1));
            }
        }
    }
    assert!(seen.iter().all(|&c| c > 20), "status mix too narrow: {seen:?}");
}

#[test]
fn optimum_is_attained_at_an_enumerated_vertex() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let n = rng.gen_range(1..=3);
        let mut lp = LinearProgram::<Rational>::new(Direction::Maximize, n);
        lp.objective = (0..n).map(|_| rat(rng.gen_range(-5..=5), 1)).collect();
        lp.bounds = vec![Bounds::between(rat(0, 1), rat(1, 1)); n];
        for _ in 0..rng.gen_range(0..3) {
            let coeffs = (0..n).map(|_| rat(rng.gen_range(-3..=3), 1)).collect();
            lp.add_row(coeffs, Sense::Le, rat(rng.gen_range(0..=3), 2));
        }
        let out = solve(&lp).unwrap();
        let verts = vertex_enumerate(&lp, DEFAULT_VERTEX_DIM_CAP).unwrap();
        assert_eq!(out.status, Status::Optimal);
        let best = verts.iter().map(|v| lp.objective_value(v)).max().unwrap();
        assert_eq!(best, out.objective);
        for v in &verts {
            assert_eq!(lp.max_violation(v), rat(0, 1));
        }
    }
}

mod prop {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn box_lp_value_is_sum_of_best_corners(c in proptest::collection::vec(-20i64..20, 1..6)) {
            let n = c.len();
            let mut lp = LinearProgram::<Rational>::new(Direction::Maximize, n);
            lp.objective = c.iter().map(|&v| rat(v, 3)).collect();
            lp.bounds = vec![Bounds::between(rat(-1, 2), rat(1, 1)); n];
            let out = solve(&lp).unwrap();
            let expect = c.iter().fold(rat(0, 1), |acc, &v| {
                acc + if v > 0 { rat(v, 3) } else { rat(-v, 6) }
            });
            prop_assert_eq!(out.objective, expect);
        }

        #[test]
        fn parse_format_round_trip(n in -10_000i64..10_000, d in 1i64..500) {
            let r = rat(n, d);
            prop_assert_eq!(parse_rational(&format_rational(&r)).unwrap(), r);
        }
    }
}
