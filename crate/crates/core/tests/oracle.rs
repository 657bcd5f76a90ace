mod common;

use robusthedge_core::oracle::{oracle_game_value, oracle_sub_price, oracle_super_primal};
use robusthedge_core::pricing::{sub_hedge_price, super_hedge_price};
use robusthedge_core::stopping::{snell, Mode};
use robusthedge_core::{rat, Arithmetic, Config, Rational};

#[test]
fn m2_oracles() {
    let m = common::fixture("m2.json");
    let cfg = Config::default();
    let sub = oracle_sub_price(&m, &cfg).unwrap();
    assert_eq!(sub.value, rat(11, 24));
    assert_eq!(sub.tau.nodes(), vec![1, 2]);
    let sup = oracle_super_primal(&m, &cfg).unwrap();
    assert_eq!(sup.value, rat(2, 3));
    assert_eq!(sup.h, vec![rat(1, 2)]);
}

#[test]
fn oracle_budgets_are_enforced() {
    let m = common::fixture("m2.json");
    let cfg = Config { max_stopping_times: 4, max_lp_vars: 5, ..Config::default() };
    assert!(oracle_sub_price(&m, &cfg).is_err());
    assert!(oracle_super_primal(&m, &cfg).is_err());
}

#[test]
fn small_suite_matches_dual_prices() {
    let cfg = Config::default();
    for (k, m) in common::suite(24).iter().enumerate() {
        let sub = sub_hedge_price(m, &cfg, Arithmetic::Exact).unwrap();
        assert_eq!(sub.price, oracle_sub_price(m, &cfg).unwrap().value, "market {k}");
        let sup = super_hedge_price(m, &cfg, Arithmetic::Exact).unwrap();
        assert_eq!(sup.price, oracle_super_primal(m, &cfg).unwrap().value, "market {k}");
    }
}

#[test]
fn game_value_matches_inf_sup_envelope() {
    let cfg = Config::default();
    for m in common::option_free_suite(20) {
        if m.tree.len() > 12 {
            continue;
        }
        let env = snell(&m.numeric::<Rational>(), &m.payoff.values, Mode::InfSup, &[], 0.0).unwrap();
        assert_eq!(env.root(), &oracle_game_value(&m, &cfg).unwrap());
    }
}
