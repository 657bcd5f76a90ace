use robusthedge_core::arbitrage::{check_na, check_no_redundant, NaWitness};
use robusthedge_core::document::load_market;
use robusthedge_core::pricing::{duality_gap_report, hat_price, sub_hedge_price, super_hedge_price, tilde_price};
use robusthedge_core::stopping::{extract_optimal_stop, snell, Mode};
use robusthedge_core::{count_stopping_times, rat, validate_reasonable, Arithmetic, Config, Market, Rational};

fn fixture(name: &str) -> Market {
    let path = format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    load_market(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn m2_prices() {
    let m = fixture("m2.json");
    let cfg = Config::default();
    assert_eq!(m.tree.len(), 9);
    let sub = sub_hedge_price(&m, &cfg, Arithmetic::Exact).unwrap();
    assert_eq!(sub.price, rat(11, 24));
    assert_eq!(sub.h_star, vec![rat(0, 1)]);
    assert!(sub.replay.as_ref().unwrap().ok);
    let sup = super_hedge_price(&m, &cfg, Arithmetic::Exact).unwrap();
    assert_eq!(sup.price, rat(2, 3));
    assert_eq!(sup.h_star, vec![rat(1, 2)]);
    assert!(sup.replay.as_ref().unwrap().ok);
    let gap = duality_gap_report(&m, &cfg, Arithmetic::Exact).unwrap();
    assert_eq!(gap.sup_inf, Some(rat(11, 24)));
    assert_eq!(gap.inf_sup, rat(1, 2));
    assert_eq!(tilde_price(&m, &cfg, Arithmetic::Exact).unwrap().price, rat(41, 48));
    assert_eq!(hat_price(&m, &cfg, Arithmetic::Exact).unwrap().price, rat(5, 8));
}

#[test]
fn m2_structure() {
    let m = fixture("m2.json");
    let cfg = Config::default();
    assert!(validate_reasonable(&m.tree).0);
    assert_eq!(count_stopping_times(&m.tree), 5);
    let na = check_na(&m, &cfg).unwrap();
    assert!(na.holds);
    assert!(matches!(na.witness, Some(NaWitness::PathMeasure { .. })));
    assert!(check_no_redundant(&m, &cfg).unwrap().holds);
    let num = m.numeric::<Rational>();
    let r = snell(&num, &m.payoff.values, Mode::SupInf, &[rat(0, 1)], 0.0).unwrap();
    assert_eq!(r.root(), &rat(11, 24));
    let tau = extract_optimal_stop(&r, &m.tree, 0.0);
    assert_eq!(tau.nodes(), vec![1, 2]);
    let r = snell(&num, &m.payoff.values, Mode::SupSup, &[rat(0, 1)], 0.0).unwrap();
    assert_eq!(r.root(), &rat(3, 4));
}

#[test]
fn m1_prices() {
    let m = fixture("m1.json");
    let cfg = Config::default();
    assert_eq!(count_stopping_times(&m.tree), 2);
    for p in [
        sub_hedge_price(&m, &cfg, Arithmetic::Exact).unwrap().price,
        super_hedge_price(&m, &cfg, Arithmetic::Exact).unwrap().price,
        hat_price(&m, &cfg, Arithmetic::Exact).unwrap().price,
        tilde_price(&m, &cfg, Arithmetic::Exact).unwrap().price,
    ] {
        assert_eq!(p, rat(1, 4));
    }
}

#[test]
fn redundant_option_detected() {
    let m = fixture("redundant.json");
    let cfg = Config::default();
    let r = check_no_redundant(&m, &cfg).unwrap();
    assert!(!r.holds);
    assert!(r.violations.iter().any(|v| v.option == 1));
}

#[test]
fn spanned_option_is_priced_without_it() {
    let m = fixture("redundant.json");
    let cfg = Config::default();
    let sub = sub_hedge_price(&m, &cfg, Arithmetic::Exact).unwrap();
    assert_eq!(sub.price, rat(11, 24));
    assert_eq!(sub.h_star, vec![rat(0, 1), rat(0, 1)]);
    let sup = super_hedge_price(&m, &cfg, Arithmetic::Exact).unwrap();
    assert_eq!(sup.price, rat(2, 3));
    assert_eq!(sup.h_star, vec![rat(1, 2), rat(0, 1)]);
    assert!(sup.replay.unwrap().ok);
}
