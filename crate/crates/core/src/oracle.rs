//! Brute-force references for small tree markets, all in exact arithmetic.

use rayon::prelude::*;

use robusthedge_lp::{solve_lp, Arithmetic, Bounds, Direction, LinearProgram, Rational, Sense, Zero};

use crate::arbitrage::{one_step_polytope, PathSpace};
use crate::market::{count_stopping_times, Layout, Market, MarketTree, StoppingTime};
use crate::{rat, Config, CoreError};

/// Every stopping time of a tree: stop at a node, or choose independently
/// in each child subtree.
pub fn enumerate_stopping_times(tree: &MarketTree, budget: u64) -> Result<Vec<StoppingTime>, CoreError> {
    if tree.layout != Layout::Tree {
        return Err(CoreError::Invalid("stopping-time enumeration needs a tree layout; unfold the lattice first".into()));
    }
    let count = count_stopping_times(tree);
    if count > budget {
        return Err(CoreError::Budget(format!("{count} stopping times exceed the budget of {budget}")));
    }
    let mut sets: Vec<Vec<Vec<usize>>> = vec![Vec::new(); tree.len()];
    for t in (0..=tree.horizon).rev() {
        for &v in &tree.levels[t] {
            let mut out = vec![vec![v]];
            if !tree.is_terminal(v) {
                let mut acc: Vec<Vec<usize>> = vec![Vec::new()];
                for &c in tree.children(v) {
                    let mut next = Vec::with_capacity(acc.len() * sets[c].len());
                    for a in &acc {
                        for s in &sets[c] {
                            let mut r = a.clone();
                            r.extend_from_slice(s);
                            next.push(r);
                        }
                    }
                    acc = next;
                }
                out.extend(acc);
            }
            sets[v] = out;
        }
    }
    Ok(sets[MarketTree::ROOT]
        .iter()
        .map(|nodes| {
            let mut region = vec![false; tree.len()];
            for &v in nodes {
                region[v] = true;
            }
            StoppingTime { region }
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct OracleSub {
    pub value: Rational,
    pub tau: StoppingTime,
    /// Minimizing pricing measure at `tau`, as path probabilities.
    pub measure: Vec<Rational>,
}

fn check_tree(market: &Market) -> Result<(), CoreError> {
    if market.tree.layout != Layout::Tree {
        return Err(CoreError::Invalid("the oracle works on tree layouts only".into()));
    }
    Ok(())
}

/// `max_tau min_{Q in Q} E_Q[Phi_tau]`, one LP per stopping time.
pub fn oracle_sub_price(market: &Market, cfg: &Config) -> Result<OracleSub, CoreError> {
    check_tree(market)?;
    let taus = enumerate_stopping_times(&market.tree, cfg.max_stopping_times)?;
    let ps = PathSpace::new(&market.tree, cfg.path_budget)?;
    let results: Vec<(Rational, Vec<Rational>)> = taus
        .par_iter()
        .map(|tau| {
            let obj = ps.paths.iter().map(|p| market.payoff.values[tau.stop_on_path(p).unwrap()].clone()).collect();
            let out = solve_lp(&ps.pricing_lp(market, obj, Direction::Minimize, true), Arithmetic::Exact)?;
            if !out.is_optimal() {
                return Err(CoreError::Arbitrage("the pricing set is empty; run the no-arbitrage check".into()));
            }
            Ok((out.objective, out.x))
        })
        .collect::<Result<_, CoreError>>()?;
    let (k, _) = results
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.0.cmp(&a.0)))
        .expect("a tree has at least one stopping time");
    Ok(OracleSub { value: results[k].0.clone(), tau: taus[k].clone(), measure: results[k].1.clone() })
}

#[derive(Debug, Clone)]
pub struct OracleSuper {
    pub value: Rational,
    pub h: Vec<Rational>,
    pub pre_stop: Vec<Rational>,
    /// `post_stop[v][k]`: holding at `v` after exercise at date `k <= time(v)`.
    pub post_stop: Vec<Vec<Rational>>,
}

/// Primal super-hedging LP over non-anticipative strategies: one
/// constraint per (path, stop node).
pub fn oracle_super_primal(market: &Market, cfg: &Config) -> Result<OracleSuper, CoreError> {
    check_tree(market)?;
    let tree = &market.tree;
    let ps = PathSpace::new(tree, cfg.path_budget)?;
    let e = market.num_options();
    let inner: Vec<usize> = (0..tree.len()).filter(|&v| !tree.is_terminal(v)).collect();
    let mut pre_col = vec![usize::MAX; tree.len()];
    let mut post_col = vec![Vec::new(); tree.len()];
    let mut next = 1 + e;
    for &v in &inner {
        pre_col[v] = next;
        next += 1;
    }
    for &v in &inner {
        for _ in 0..=tree.time(v) {
            post_col[v].push(next);
            next += 1;
        }
    }
    if next > cfg.max_lp_vars {
        return Err(CoreError::Budget(format!("{next} LP variables exceed the budget of {}", cfg.max_lp_vars)));
    }
    let mut lp = LinearProgram::new(Direction::Minimize, next);
    lp.objective[0] = rat(1, 1);
    for b in lp.bounds.iter_mut() {
        *b = Bounds::free();
    }
    for (k, p) in ps.paths.iter().enumerate() {
        let mut opt = vec![(0usize, rat(1, 1))];
        for i in 0..e {
            opt.push((1 + i, ps.net(market, i, k)));
        }
        for (stop, &u) in p.iter().enumerate() {
            let mut row = opt.clone();
            for t in 0..tree.horizon {
                let d = tree.price(p[t + 1]).clone() - tree.price(p[t]);
                if d.is_zero() {
                    continue;
                }
                let col = if t < stop { pre_col[p[t]] } else { post_col[p[t]][stop] };
                row.push((col, d));
            }
            lp.add_sparse_row(&row, Sense::Ge, market.payoff.values[u].clone());
        }
    }
    let out = solve_lp(&lp, Arithmetic::Exact)?;
    if !out.is_optimal() {
        return Err(CoreError::Arbitrage(format!("super-hedging primal is {:?}; run the no-arbitrage check", out.status)));
    }
    let pre_stop = (0..tree.len())
        .map(|v| if pre_col[v] == usize::MAX { Rational::zero() } else { out.x[pre_col[v]].clone() })
        .collect();
    let post_stop = (0..tree.len()).map(|v| post_col[v].iter().map(|&c| out.x[c].clone()).collect()).collect();
    Ok(OracleSuper { value: out.objective, h: out.x[1..1 + e].to_vec(), pre_stop, post_stop })
}

/// `max` over products of one-step polytope vertices of
/// `min_tau E_Q[Phi_tau]`, for markets without options.
pub fn oracle_game_value(market: &Market, cfg: &Config) -> Result<Rational, CoreError> {
    check_tree(market)?;
    let tree = &market.tree;
    let inner: Vec<usize> = (0..tree.len()).filter(|&v| !tree.is_terminal(v)).collect();
    let mut choices = Vec::new();
    let mut total: u128 = 1;
    for &v in &inner {
        let verts = one_step_polytope(tree, v)?.vertices();
        if verts.is_empty() {
            return Err(CoreError::EmptyPolytope(tree.nodes[v].label.clone()));
        }
        total = total.saturating_mul(verts.len() as u128);
        choices.push(verts);
    }
    if total > cfg.max_stopping_times as u128 {
        return Err(CoreError::Budget(format!("{total} vertex measures exceed the budget")));
    }
    let phi = &market.payoff.values;
    let mut best: Option<Rational> = None;
    let mut idx = vec![0usize; inner.len()];
    loop {
        let mut kernel = vec![Vec::new(); tree.len()];
        for (k, &v) in inner.iter().enumerate() {
            kernel[v] = choices[k][idx[k]].clone();
        }
        // min over stopping times under a fixed measure is a linear recursion
        let mut val = vec![Rational::zero(); tree.len()];
        for t in (0..=tree.horizon).rev() {
            for &v in &tree.levels[t] {
                val[v] = if tree.is_terminal(v) {
                    phi[v].clone()
                } else {
                    let cont = tree
                        .children(v)
                        .iter()
                        .zip(&kernel[v])
                        .fold(Rational::zero(), |a, (&c, w)| a + w.clone() * &val[c]);
                    if phi[v] < cont { phi[v].clone() } else { cont }
                };
            }
        }
        let root = val[MarketTree::ROOT].clone();
        if best.as_ref().is_none_or(|b| root > *b) {
            best = Some(root);
        }
        let mut k = 0;
        loop {
            if k == idx.len() {
                return Ok(best.unwrap());
            }
            idx[k] += 1;
            if idx[k] < choices[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// `min_tau` by enumeration for a fixed measure would equal the recursion
/// above; this brute-force variant is kept for cross-checks in tests.
pub fn oracle_min_over_stops(market: &Market, kernel: &[Vec<Rational>], cfg: &Config) -> Result<Rational, CoreError> {
    check_tree(market)?;
    let tree = &market.tree;
    let ps = PathSpace::new(tree, cfg.path_budget)?;
    let probs: Vec<Rational> = ps
        .paths
        .iter()
        .map(|p| {
            (0..tree.horizon).fold(rat(1, 1), |a, t| {
                let pos = tree.children(p[t]).iter().position(|&c| c == p[t + 1]).unwrap();
                a * &kernel[p[t]][pos]
            })
        })
        .collect();
    let taus = enumerate_stopping_times(tree, cfg.max_stopping_times)?;
    Ok(taus
        .iter()
        .map(|tau| {
            ps.paths
                .iter()
                .zip(&probs)
                .fold(Rational::zero(), |a, (p, q)| a + q.clone() * &market.payoff.values[tau.stop_on_path(p).unwrap()])
        })
        .min()
        .unwrap())
}
