mod common;

use proptest::prelude::*;

use robusthedge_core::discretization::{
    check_convex_order, construct_cn, convergence_experiment, discretize_marginal, na_threshold, round_path, Marginal,
};
use robusthedge_core::document::{grid_setup, parse_document};
use robusthedge_core::market::{Vanilla, VanillaKind};
use robusthedge_core::{rat, Arithmetic, Config, Rational};

fn setup(name: &str) -> robusthedge_core::discretization::ConvergenceSetup {
    let path = format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    grid_setup(&parse_document(&std::fs::read_to_string(path).unwrap()).unwrap()).unwrap()
}

fn dyadic(k: i64, n: u32) -> Rational {
    rat(k, 1 << n)
}

fn arb_marginal() -> impl Strategy<Value = Marginal> {
    let atoms = prop::collection::vec((0i64..400, 1i64..9), 0..5);
    let pieces = prop::collection::vec((0i64..300, 1i64..100, 1i64..9), 0..3);
    (atoms, pieces)
        .prop_filter("needs mass", |(a, p)| !a.is_empty() || !p.is_empty())
        .prop_map(|(atoms, pieces)| {
            let total = atoms.iter().map(|a| a.1).sum::<i64>() + pieces.iter().map(|p| p.2).sum::<i64>();
            Marginal::new(
                atoms.into_iter().map(|(x, w)| (rat(x, 97), rat(w, total))).collect(),
                pieces.into_iter().map(|(l, len, w)| (rat(l, 89), rat(l + len, 89), rat(w, total))).collect(),
            )
            .unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn rounding_floors_onto_the_grid(xs in prop::collection::vec((0i64..5000, 1i64..700), 1..5), n in 0u32..8) {
        let path: Vec<Rational> = std::iter::once(rat(1, 1)).chain(xs.iter().map(|&(a, b)| rat(a, b))).collect();
        let r = round_path(&path, n);
        prop_assert_eq!(&r[0], &path[0]);
        let step = dyadic(1, n);
        for (x, y) in path.iter().zip(&r).skip(1) {
            prop_assert!(y <= x && x.clone() - y < step);
            prop_assert!((y.clone() / &step).is_integer());
        }
        prop_assert_eq!(round_path(&r, n), r);
    }

    #[test]
    fn discretization_keeps_mass_and_mean(mu in arb_marginal(), n in 0u32..7) {
        let d = discretize_marginal(&mu, n).unwrap();
        prop_assert_eq!(d.mass(), rat(1, 1));
        prop_assert_eq!(d.mean(), mu.mean());
        prop_assert!(d.weights.values().all(|w| *w >= rat(0, 1)));
        let same = discretize_marginal(&Marginal::from_grid(&d), n).unwrap();
        prop_assert_eq!(same, d);
    }

    #[test]
    fn lipschitz_panel_error(mu in arb_marginal(), n in 0u32..7, k in 0i64..16) {
        let d = discretize_marginal(&mu, n).unwrap();
        let bound = dyadic(1, n);
        let kink = rat(k, 5);
        // 1-Lipschitz test functions with a single kink
        let panel: [(Box<dyn Fn(&Rational) -> Rational>, Vec<Rational>); 3] = [
            (Box::new(|x: &Rational| if *x > kink { x.clone() - &kink } else { rat(0, 1) }), vec![kink.clone()]),
            (Box::new(|x: &Rational| if *x > kink { x.clone() - &kink } else { kink.clone() - x }), vec![kink.clone()]),
            (Box::new(|x: &Rational| if *x < kink { x.clone() } else { kink.clone() }), vec![kink.clone()]),
        ];
        for (f, kinks) in &panel {
            let exact = mu.integrate_piecewise_linear(f, kinks);
            let approx = d.expect(f);
            let diff = if approx > exact { approx - &exact } else { exact.clone() - approx };
            prop_assert!(diff <= bound);
        }
    }

    #[test]
    fn halving_the_scale_shifts_the_level(mu in arb_marginal(), n in 0u32..6) {
        let scaled = Marginal::new(
            mu.atoms.iter().map(|(x, w)| (x.clone() * rat(2, 1), w.clone())).collect(),
            mu.uniform.iter().map(|(l, r, w)| (l.clone() * rat(2, 1), r.clone() * rat(2, 1), w.clone())).collect(),
        )
        .unwrap();
        let a = discretize_marginal(&scaled, n).unwrap();
        let b = discretize_marginal(&mu, n + 1).unwrap();
        prop_assert_eq!(a.weights, b.weights);
    }
}

#[test]
fn rounding_examples() {
    let p = vec![rat(1, 1), rat(13, 10), rat(7, 10)];
    assert_eq!(round_path(&p, 1), vec![rat(1, 1), rat(1, 1), rat(1, 2)]);
    assert_eq!(round_path(&p, 3), vec![rat(1, 1), rat(5, 4), rat(5, 8)]);
}

#[test]
fn grid_supported_marginal_is_fixed() {
    let mu = Marginal::new(vec![(rat(1, 2), rat(1, 2)), (rat(3, 2), rat(1, 2))], Vec::new()).unwrap();
    let call = Vanilla { maturity: 1, strike: rat(1, 1), kind: VanillaKind::Call };
    for n in 1..5 {
        let cn = construct_cn(std::slice::from_ref(&mu), &rat(1, 1), std::slice::from_ref(&call), n, &Config::default()).unwrap();
        assert_eq!(cn.c, vec![rat(0, 1)]);
        assert!(cn.witness.is_some());
    }
}

#[test]
fn identical_measures_are_ordered() {
    let mu = Marginal::new(Vec::new(), vec![(rat(1, 3), rat(5, 3), rat(1, 1))]).unwrap();
    let d = discretize_marginal(&mu, 3).unwrap();
    assert!(check_convex_order(&[d.clone(), d.clone(), d]).unwrap().ok);
}

#[test]
fn convex_order_refusal() {
    let wide = Marginal::new(Vec::new(), vec![(rat(0, 1), rat(2, 1), rat(1, 1))]).unwrap();
    let narrow = Marginal::new(Vec::new(), vec![(rat(1, 2), rat(3, 2), rat(1, 1))]).unwrap();
    let call = Vanilla { maturity: 2, strike: rat(1, 1), kind: VanillaKind::Call };
    assert!(construct_cn(&[wide, narrow], &rat(1, 1), &[call], 3, &Config::default()).is_err());
}

#[test]
fn grid_aligned_fixture_has_zero_error() {
    let table = convergence_experiment(&setup("grid_exact.json"), 4..=7, &Config::default(), Arithmetic::Exact).unwrap();
    for r in &table.rows {
        assert!(r.error.is_none());
        assert_eq!(r.err_sub, Some(0.0), "n = {}", r.n);
        assert_eq!(r.err_super, Some(0.0), "n = {}", r.n);
        assert_eq!(r.cn_max, Some(0.0));
    }
    assert!(table.to_csv().unwrap().starts_with("n,price_sub,price_super,err,log2_err"));
}

#[test]
fn na_sets_in_early() {
    let cfg = Config::default();
    for name in ["continuum_a.json", "continuum_b.json"] {
        let n = na_threshold(&setup(name), 2..=6, &cfg).unwrap();
        assert!(n.is_some_and(|n| n <= 4), "{name}: {n:?}");
    }
}
