#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use robusthedge_core::arbitrage::{check_na, check_no_redundant, one_step_polytope};
use robusthedge_core::document::load_market;
use robusthedge_core::{rat, AmericanPayoff, Config, Market, MarketTree, Rational, StaticOption};

pub const SEED: u64 = 2024;

pub fn fixture(name: &str) -> Market {
    let path = format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    load_market(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const FACTORS: [(i64, i64); 7] = [(1, 2), (2, 3), (3, 4), (1, 1), (5, 4), (4, 3), (3, 2)];

/// Random reasonable tree: each node has 2 or 3 children with at least one
/// strictly up and one strictly down move.
pub fn random_tree(rng: &mut ChaCha8Rng, horizon: usize, max_children: usize) -> MarketTree {
    let mut records = vec![("n0".to_string(), 0usize, None, rat(rng.gen_range(2..=6), 1))];
    let mut frontier = vec![0usize];
    for t in 1..=horizon {
        let mut next = Vec::new();
        for &p in &frontier {
            let price = records[p].3.clone();
            let k = rng.gen_range(2..=max_children);
            let mut picks = vec![FACTORS[rng.gen_range(0..3)], FACTORS[rng.gen_range(4..7)]];
            while picks.len() < k {
                let f = *FACTORS.choose(rng).unwrap();
                if !picks.contains(&f) {
                    picks.push(f);
                }
            }
            for (a, b) in picks {
                let label = format!("n{}", records.len());
                let parent = records[p].0.clone();
                records.push((label, t, Some(parent), price.clone() * rat(a, b)));
                next.push(records.len() - 1);
            }
        }
        frontier = next;
    }
    MarketTree::from_records(horizon, records).unwrap()
}

fn random_value(rng: &mut ChaCha8Rng) -> Rational {
    rat(rng.gen_range(0..=8), rng.gen_range(1..=3))
}

/// Full-support martingale transition kernels: a random positive mixture of
/// the one-step polytope vertices at every node.
pub fn random_kernels(rng: &mut ChaCha8Rng, tree: &MarketTree) -> Vec<Vec<Rational>> {
    (0..tree.len())
        .map(|v| {
            if tree.is_terminal(v) {
                return Vec::new();
            }
            let verts = one_step_polytope(tree, v).unwrap().vertices();
            let w: Vec<Rational> = verts.iter().map(|_| rat(rng.gen_range(1..=4), 1)).collect();
            let total = w.iter().fold(rat(0, 1), |a, x| a + x);
            let mut k = vec![rat(0, 1); tree.children(v).len()];
            for (vert, wi) in verts.iter().zip(&w) {
                for (kj, p) in k.iter_mut().zip(vert) {
                    *kj += p.clone() * wi / &total;
                }
            }
            k
        })
        .collect()
}

pub fn node_masses(tree: &MarketTree, kernels: &[Vec<Rational>]) -> Vec<Rational> {
    let mut mass = vec![rat(0, 1); tree.len()];
    mass[MarketTree::ROOT] = rat(1, 1);
    for t in 0..tree.horizon {
        for &v in &tree.levels[t] {
            for (&c, p) in tree.children(v).iter().zip(&kernels[v]) {
                mass[c] = mass[v].clone() * p;
            }
        }
    }
    mass
}

/// Random market with `e` options priced by a full-support martingale
/// measure, so that no-arbitrage holds; redundant draws are rejected.
pub fn random_market(rng: &mut ChaCha8Rng, horizon: usize, max_children: usize, e: usize) -> Market {
    let cfg = Config::default();
    for _ in 0..10_000 {
        let tree = random_tree(rng, horizon, max_children);
        let payoff = AmericanPayoff { values: (0..tree.len()).map(|_| random_value(rng)).collect(), rule: None };
        let mass = node_masses(&tree, &random_kernels(rng, &tree));
        let mut options = Vec::new();
        for _ in 0..e {
            let maturity = rng.gen_range(1..=horizon);
            let values: Vec<Rational> = (0..tree.len())
                .map(|v| if tree.time(v) == maturity { rat(rng.gen_range(-3..=4), rng.gen_range(1..=2)) } else { rat(0, 1) })
                .collect();
            let price = values.iter().zip(&mass).fold(rat(0, 1), |a, (g, m)| a + g.clone() * m);
            options.push(StaticOption { maturity, values, price, vanilla: None });
        }
        let m = Market::new(tree, payoff, options);
        if e > 0 && !check_no_redundant(&m, &cfg).unwrap().holds {
            continue;
        }
        debug_assert!(check_na(&m, &cfg).unwrap().holds);
        return m;
    }
    panic!("no non-redundant market drawn for T = {horizon}, e = {e}");
}

/// The seeded randomized suite: horizons 1 to 3, at most 3 children, at
/// most 2 options.
pub fn suite(count: usize) -> Vec<Market> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    (0..count)
        .map(|i| {
            let horizon = 1 + i % 3;
            // a one-period market leaves room for one non-replicable claim
            let e = ((i / 3) % 3).min(if horizon == 1 { 1 } else { 2 });
            // binary trees are complete, so they only carry option-free markets
            let max_children = if horizon == 3 && e == 0 { 2 } else { 3 };
            random_market(&mut rng, horizon, max_children, e)
        })
        .collect()
}

pub fn option_free_suite(count: usize) -> Vec<Market> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    (0..count).map(|i| random_market(&mut rng, 1 + i % 3, 3, 0)).collect()
}
