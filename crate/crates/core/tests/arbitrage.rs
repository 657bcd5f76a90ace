mod common;

use robusthedge_core::arbitrage::{check_na, check_no_redundant, one_step_polytope, verify_arbitrage, verify_witness};
use robusthedge_core::market::{Vanilla, VanillaKind};
use robusthedge_core::{rat, validate_reasonable, AmericanPayoff, Config, Market, MarketTree, StaticOption};

fn one_step(s0: i64, children: &[i64]) -> MarketTree {
    let mut records = vec![("r".to_string(), 0, None, rat(s0, 1))];
    for (k, &c) in children.iter().enumerate() {
        records.push((format!("c{k}"), 1, Some("r".to_string()), rat(c, 1)));
    }
    MarketTree::from_records(1, records).unwrap()
}

fn zero_payoff(tree: &MarketTree) -> AmericanPayoff {
    AmericanPayoff { values: vec![rat(0, 1); tree.len()], rule: None }
}

#[test]
fn unreasonable_node_is_reported() {
    let tree = one_step(4, &[5, 6]);
    let (ok, bad) = validate_reasonable(&tree);
    assert!(!ok);
    assert_eq!(bad, vec![MarketTree::ROOT]);
}

#[test]
fn empty_polytope_fails_structurally() {
    let tree = one_step(1, &[2, 3]);
    assert!(!one_step_polytope(&tree, 0).unwrap().nonempty);
    let m = Market::new(tree.clone(), zero_payoff(&tree), Vec::new());
    let na = check_na(&m, &Config::default()).unwrap();
    assert!(!na.holds);
    assert_eq!(na.empty_node, Some(0));
}

#[test]
fn m2_polytope_is_symmetric_segment() {
    let m = common::fixture("m2.json");
    let u = m.tree.find("u").unwrap();
    let p = one_step_polytope(&m.tree, u).unwrap();
    let mut verts = p.vertices();
    verts.sort();
    assert_eq!(verts, vec![vec![rat(0, 1), rat(1, 1), rat(0, 1)], vec![rat(1, 2), rat(0, 1), rat(1, 2)]]);
    assert!(p.contains(&[rat(1, 3), rat(1, 3), rat(1, 3)]));
    assert!(!p.contains(&[rat(1, 2), rat(1, 4), rat(1, 4)]));
}

#[test]
fn duplicate_quote_is_an_arbitrage() {
    let m = common::fixture("m2.json");
    let cfg = Config::default();
    let mut dear = m.options[0].clone();
    dear.price += rat(1, 10);
    let bad = m.with_options(vec![m.options[0].clone(), dear]);
    let na = check_na(&bad, &cfg).unwrap();
    assert!(!na.holds);
    let arb = na.arbitrage.unwrap();
    assert!(verify_arbitrage(&bad, &arb));
    // buy the cheap copy, sell the dear one
    assert!(arb.h[0] > rat(0, 1));
    assert_eq!(arb.h[0], -arb.h[1].clone());
}

#[test]
fn forward_is_redundant() {
    let tree = one_step(2, &[1, 2, 3]);
    let fwd = Vanilla { maturity: 1, strike: rat(2, 1), kind: VanillaKind::Forward };
    let opt = StaticOption::from_vanilla(&tree, fwd, rat(0, 1)).unwrap();
    let m = Market::new(tree.clone(), zero_payoff(&tree), vec![opt]);
    let cfg = Config::default();
    assert!(check_na(&m, &cfg).unwrap().holds);
    let r = check_no_redundant(&m, &cfg).unwrap();
    assert!(!r.holds);
    let v = &r.violations[0];
    assert_eq!(v.h, vec![rat(v.sign as i64, 1)]);
    assert_eq!(v.holdings[0], rat(-(v.sign as i64), 1));
}

#[test]
fn witnesses_verify_on_suite() {
    let cfg = Config::default();
    for m in common::suite(30) {
        let na = check_na(&m, &cfg).unwrap();
        assert!(na.holds);
        assert!(verify_witness(&m, na.witness.as_ref().unwrap(), &cfg));
    }
}

#[test]
fn mispriced_call_breaks_na() {
    let tree = one_step(2, &[1, 2, 3]);
    let call = Vanilla { maturity: 1, strike: rat(2, 1), kind: VanillaKind::Call };
    let cfg = Config::default();
    // the call pays 0, 0, 1: any quote outside (0, 1/2) admits arbitrage
    for (price, holds) in [(rat(1, 4), true), (rat(1, 2), false), (rat(0, 1), false), (rat(3, 5), false)] {
        let opt = StaticOption::from_vanilla(&tree, call.clone(), price.clone()).unwrap();
        let m = Market::new(tree.clone(), zero_payoff(&tree), vec![opt]);
        let na = check_na(&m, &cfg).unwrap();
        assert_eq!(na.holds, holds, "quote {price}");
        if let Some(a) = &na.arbitrage {
            assert!(verify_arbitrage(&m, a));
        }
    }
}
