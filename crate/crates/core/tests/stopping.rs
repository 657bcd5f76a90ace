mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use robusthedge_core::oracle::{enumerate_stopping_times, oracle_min_over_stops};
use robusthedge_core::stopping::{evaluate_stopping, extract_optimal_stop, snell, verify_supermartingale, Mode};
use robusthedge_core::{count_stopping_times, rat, AmericanPayoff, Config, Market, Rational};

fn market(seed: u64, horizon: usize, values: &[i64]) -> Market {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tree = common::random_tree(&mut rng, horizon, 3);
    let values = (0..tree.len()).map(|v| rat(values[v % values.len()], 3)).collect();
    Market::new(tree, AmericanPayoff { values, rule: None }, Vec::new())
}

const MODES: [Mode; 3] = [Mode::SupSup, Mode::SupInf, Mode::InfSup];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn envelope_properties(seed in 0u64..10_000, horizon in 1usize..=3, values in prop::collection::vec(-6i64..9, 1..12)) {
        let m = market(seed, horizon, &values);
        let num = m.numeric::<Rational>();
        let phi = &m.payoff.values;
        let mut roots = Vec::new();
        for mode in MODES {
            let env = snell(&num, phi, mode, &[], 0.0).unwrap();
            for v in 0..m.tree.len() {
                let dominates = if mode.maximizes() { env.values[v] >= phi[v] } else { env.values[v] <= phi[v] };
                prop_assert!(dominates);
            }
            if mode == Mode::SupSup {
                prop_assert!(verify_supermartingale(&env, &num, 0.0).unwrap().ok);
            }
            let tau = extract_optimal_stop(&env, &m.tree, 0.0);
            prop_assert!(tau.validate(&m.tree).is_ok());
            let again = evaluate_stopping(&num, phi, &tau, mode.upper(), &[], 0.0).unwrap();
            prop_assert_eq!(again.root(), env.root());
            roots.push(env.root().clone());
        }
        prop_assert!(roots[0] >= roots[1]);
        prop_assert!(roots[0] >= roots[2]);
    }

    #[test]
    fn envelope_is_monotone_and_translation_equivariant(seed in 0u64..10_000, values in prop::collection::vec(-6i64..9, 1..12), bump in 0i64..5) {
        let m = market(seed, 2, &values);
        let num = m.numeric::<Rational>();
        let phi = &m.payoff.values;
        let up: Vec<Rational> = phi.iter().map(|x| x.clone() + rat(bump, 7)).collect();
        for mode in MODES {
            let a = snell(&num, phi, mode, &[], 0.0).unwrap();
            let b = snell(&num, &up, mode, &[], 0.0).unwrap();
            prop_assert_eq!(b.root().clone(), a.root().clone() + rat(bump, 7));
        }
    }
}

#[test]
fn stopping_time_enumeration_matches_count() {
    let cfg = Config::default();
    for seed in 0..20 {
        let m = market(seed, 1 + (seed as usize) % 3, &[1, 0, 2]);
        let taus = enumerate_stopping_times(&m.tree, cfg.max_stopping_times).unwrap();
        assert_eq!(taus.len() as u64, count_stopping_times(&m.tree));
        for t in &taus {
            assert!(t.validate(&m.tree).is_ok());
        }
    }
}

#[test]
fn fixed_measure_recursion_matches_enumeration() {
    let cfg = Config::default();
    let mut rng = ChaCha8Rng::seed_from_u64(common::SEED + 5);
    for seed in 0..15 {
        let m = market(seed, 2, &[3, -1, 4, 1, -5, 9, 2, 6]);
        let kernel = common::random_kernels(&mut rng, &m.tree);
        let brute = oracle_min_over_stops(&m, &kernel, &cfg).unwrap();
        // the lower Snell envelope under a single measure
        let mut val = vec![rat(0, 1); m.tree.len()];
        for t in (0..=m.tree.horizon).rev() {
            for &v in &m.tree.levels[t] {
                let phi = m.payoff.values[v].clone();
                val[v] = if m.tree.is_terminal(v) {
                    phi
                } else {
                    let cont = m.tree.children(v).iter().zip(&kernel[v]).fold(rat(0, 1), |a, (&c, p)| a + p.clone() * &val[c]);
                    phi.min(cont)
                };
            }
        }
        assert_eq!(brute, val[0]);
    }
}
