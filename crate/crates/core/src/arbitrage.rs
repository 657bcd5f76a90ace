//! Martingale polytopes, no-arbitrage and redundancy checks, and the bound
//! on static option positions.

use std::borrow::Cow;

use robusthedge_lp::{
    solve_lp, Arithmetic, Bounds, Direction, LinearProgram, Rational, Scalar, Sense, Signed, Zero,
};

use crate::kelley::Kelley;
use crate::market::{Layout, Market, MarketTree};
use crate::stopping::{european, StepChoice};
use crate::{rat, Config, CoreError};

#[derive(Debug, Clone)]
pub struct OneStepPolytope {
    pub node: usize,
    pub node_price: Rational,
    /// Child prices in `tree.children(node)` order.
    pub child_prices: Vec<Rational>,
    pub nonempty: bool,
}

impl OneStepPolytope {
    /// `w >= 0, sum w = 1, sum w_j x_j = s`.
    pub fn constraints(&self) -> LinearProgram<Rational> {
        let m = self.child_prices.len();
        let mut lp = LinearProgram::new(Direction::Minimize, m);
        lp.add_row(vec![Rational::from_integer(1.into()); m], Sense::Eq, rat(1, 1));
        lp.add_row(self.child_prices.clone(), Sense::Eq, self.node_price.clone());
        lp
    }

    /// Extreme points: point masses at children priced exactly at the node
    /// and two-point measures across it.
    pub fn vertices(&self) -> Vec<Vec<Rational>> {
        let s = &self.node_price;
        let m = self.child_prices.len();
        let mut out = Vec::new();
        for (i, x) in self.child_prices.iter().enumerate() {
            if x == s {
                let mut w = vec![Rational::zero(); m];
                w[i] = rat(1, 1);
                out.push(w);
            }
        }
        for (i, x) in self.child_prices.iter().enumerate() {
            for (j, y) in self.child_prices.iter().enumerate() {
                if x < s && y > s {
                    let mut w = vec![Rational::zero(); m];
                    let span = y.clone() - x;
                    w[i] = (y.clone() - s) / &span;
                    w[j] = (s.clone() - x) / &span;
                    out.push(w);
                }
            }
        }
        out
    }

    pub fn contains(&self, w: &[Rational]) -> bool {
        w.len() == self.child_prices.len()
            && w.iter().all(|x| !x.is_negative())
            && w.iter().fold(Rational::zero(), |a, x| a + x) == rat(1, 1)
            && w.iter().zip(&self.child_prices).fold(Rational::zero(), |a, (x, p)| a + x * p) == self.node_price
    }
}

pub fn one_step_polytope(tree: &MarketTree, v: usize) -> Result<OneStepPolytope, CoreError> {
    if tree.is_terminal(v) {
        return Err(CoreError::node(&tree.nodes[v].label, "terminal node has no one-step polytope"));
    }
    let mut p = OneStepPolytope {
        node: v,
        node_price: tree.price(v).clone(),
        child_prices: tree.children(v).iter().map(|&c| tree.price(c).clone()).collect(),
        nonempty: false,
    };
    p.nonempty = solve_lp(&p.constraints(), Arithmetic::Exact)?.is_optimal();
    Ok(p)
}

/// Root-to-leaf paths of a tree market with the bookkeeping for path-space
/// LPs (one probability per path).
#[derive(Debug, Clone)]
pub struct PathSpace {
    pub paths: Vec<Vec<usize>>,
    /// Paths through each node.
    pub through: Vec<Vec<usize>>,
}

impl PathSpace {
    pub fn new(tree: &MarketTree, budget: usize) -> Result<Self, CoreError> {
        if tree.layout != Layout::Tree {
            return Err(CoreError::Invalid("path-space LPs need a tree layout; unfold the lattice first".into()));
        }
        let paths = tree.paths(budget)?;
        let mut through = vec![Vec::new(); tree.len()];
        for (k, p) in paths.iter().enumerate() {
            for &v in p {
                through[v].push(k);
            }
        }
        Ok(PathSpace { paths, through })
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Net payoff `g_i - c_i` along path `k`.
    pub fn net(&self, market: &Market, i: usize, k: usize) -> Rational {
        market.options[i].net(self.paths[k][market.options[i].maturity])
    }

    /// Sparse martingale row of each non-terminal node over path masses.
    pub fn martingale_rows(&self, tree: &MarketTree) -> Vec<Vec<(usize, Rational)>> {
        (0..tree.len())
            .filter(|&v| !tree.is_terminal(v))
            .map(|v| {
                let t = tree.time(v);
                self.through[v]
                    .iter()
                    .map(|&k| (k, tree.price(self.paths[k][t + 1]).clone() - tree.price(v)))
                    .filter(|(_, d)| !d.is_zero())
                    .collect()
            })
            .collect()
    }

    /// LP over path probabilities: mass one, martingale, and (optionally)
    /// every option priced at its quote. Extra variables may be appended by
    /// the caller after construction.
    pub fn pricing_lp(&self, market: &Market, objective: Vec<Rational>, direction: Direction, with_options: bool) -> LinearProgram<Rational> {
        let n = self.len();
        let mut lp = LinearProgram::new(direction, n);
        lp.objective = objective;
        lp.add_row(vec![rat(1, 1); n], Sense::Eq, rat(1, 1));
        for row in self.martingale_rows(&market.tree) {
            lp.add_sparse_row(&row, Sense::Eq, Rational::zero());
        }
        if with_options {
            for i in 0..market.num_options() {
                let coeffs = (0..n).map(|k| self.net(market, i, k)).collect();
                lp.add_row(coeffs, Sense::Eq, Rational::zero());
            }
        }
        lp
    }

    /// Conditional one-step probabilities of a path measure, aligned with
    /// `tree.children(v)`; nodes of zero mass get empty vectors.
    pub fn transitions(&self, tree: &MarketTree, probs: &[Rational]) -> Vec<Vec<Rational>> {
        let mass: Vec<Rational> = (0..tree.len())
            .map(|v| self.through[v].iter().fold(Rational::zero(), |a, &k| a + &probs[k]))
            .collect();
        (0..tree.len())
            .map(|v| {
                if tree.is_terminal(v) || mass[v].is_zero() {
                    return Vec::new();
                }
                tree.children(v).iter().map(|&c| mass[c].clone() / &mass[v]).collect()
            })
            .collect()
    }
}

/// Tree version of `market`, unfolding a lattice when its path count fits
/// the budget.
pub fn as_tree<'a>(market: &'a Market, cfg: &Config) -> Result<Cow<'a, Market>, CoreError> {
    if market.tree.layout == Layout::Tree {
        return Ok(Cow::Borrowed(market));
    }
    let count = market.tree.path_count();
    if count > cfg.path_budget as u128 {
        return Err(CoreError::Budget(format!("{count} paths exceed the path budget of {}", cfg.path_budget)));
    }
    Ok(Cow::Owned(market.unfold(usize::MAX)?))
}

#[derive(Debug, Clone)]
pub enum NaWitness {
    /// Full-support pricing measure on paths.
    PathMeasure { probs: Vec<Rational>, epsilon: Rational, transitions: Vec<Vec<Rational>> },
    /// Positive mixture of Markov martingale measures (one kernel per node,
    /// aligned with the node's children) pricing every option at its quote.
    Markov { mixture: Vec<(Rational, Vec<Vec<Rational>>)> },
    /// Zero is interior to the attainable option-price set: the listed
    /// `(option, sign, margin)` values are all positive. Options in
    /// `replicable` were found to be spanned by the stock and the others.
    InteriorMargins { margins: Vec<(usize, i8, Rational)>, replicable: Vec<usize> },
}

/// A semi-static arbitrage: node-indexed stock holdings and static option
/// positions with nonnegative, somewhere positive terminal gain.
#[derive(Debug, Clone)]
pub struct Arbitrage {
    pub holdings: Vec<Rational>,
    pub h: Vec<Rational>,
}

#[derive(Debug, Clone)]
pub struct NaReport {
    pub holds: bool,
    pub witness: Option<NaWitness>,
    pub arbitrage: Option<Arbitrage>,
    /// Node whose one-step martingale polytope is empty.
    pub empty_node: Option<usize>,
    pub method: &'static str,
}

/// Smallest and largest terminal gain `sum H dS + sum_i h_i (g_i - c_i)` over
/// all paths; holdings are node-indexed.
pub fn gain_range(market: &Market, holdings: &[Rational], h: &[Rational]) -> (Rational, Rational) {
    let tree = &market.tree;
    let num = market.numeric::<Rational>();
    let mut lo: Vec<Option<Rational>> = vec![None; tree.len()];
    let mut hi: Vec<Option<Rational>> = vec![None; tree.len()];
    lo[MarketTree::ROOT] = Some(num.injection(MarketTree::ROOT, h));
    hi[MarketTree::ROOT] = lo[MarketTree::ROOT].clone();
    for t in 0..tree.horizon {
        for &v in &tree.levels[t] {
            let (l, u) = (lo[v].clone().unwrap(), hi[v].clone().unwrap());
            for &c in tree.children(v) {
                let step = holdings[v].clone() * (tree.price(c).clone() - tree.price(v)) + num.injection(c, h);
                let (a, b) = (l.clone() + &step, u.clone() + &step);
                lo[c] = Some(match lo[c].take() {
                    Some(x) if x < a => x,
                    _ => a,
                });
                hi[c] = Some(match hi[c].take() {
                    Some(x) if x > b => x,
                    _ => b,
                });
            }
        }
    }
    let leaves = tree.leaves();
    let min = leaves.iter().map(|&l| lo[l].clone().unwrap()).min().unwrap();
    let max = leaves.iter().map(|&l| hi[l].clone().unwrap()).max().unwrap();
    (min, max)
}

/// Exact pathwise check of an arbitrage.
pub fn verify_arbitrage(market: &Market, arb: &Arbitrage) -> bool {
    if arb.holdings.len() != market.tree.len() || arb.h.len() != market.num_options() {
        return false;
    }
    let (min, max) = gain_range(market, &arb.holdings, &arb.h);
    !min.is_negative() && max.is_positive()
}

/// Checks a no-arbitrage witness exactly.
pub fn verify_witness(market: &Market, witness: &NaWitness, cfg: &Config) -> bool {
    match witness {
        NaWitness::PathMeasure { probs, .. } => {
            let Ok(ps) = PathSpace::new(&market.tree, cfg.path_budget) else { return false };
            if probs.len() != ps.len() || probs.iter().any(|p| !p.is_positive()) {
                return false;
            }
            let lp = ps.pricing_lp(market, vec![Rational::zero(); ps.len()], Direction::Minimize, true);
            lp.max_violation(probs).is_zero()
        }
        NaWitness::Markov { mixture } => {
            let tree = &market.tree;
            if mixture.is_empty() || mixture.iter().any(|(w, _)| !w.is_positive()) {
                return false;
            }
            if mixture.iter().fold(Rational::zero(), |a, (w, _)| a + w) != rat(1, 1) {
                return false;
            }
            let mut full = vec![false; tree.len()];
            let mut total = vec![Rational::zero(); market.num_options()];
            for (w, kernel) in mixture {
                for v in 0..tree.len() {
                    if tree.is_terminal(v) {
                        continue;
                    }
                    let poly = OneStepPolytope {
                        node: v,
                        node_price: tree.price(v).clone(),
                        child_prices: tree.children(v).iter().map(|&c| tree.price(c).clone()).collect(),
                        nonempty: true,
                    };
                    if !poly.contains(&kernel[v]) {
                        return false;
                    }
                }
                let mass = markov_mass(tree, kernel);
                for (i, o) in market.options.iter().enumerate() {
                    for &v in &tree.levels[o.maturity] {
                        total[i] = total[i].clone() + w.clone() * &mass[v] * o.net(v);
                    }
                }
                for v in 0..tree.len() {
                    if tree.is_terminal(v) {
                        continue;
                    }
                    if kernel[v].iter().all(|x| x.is_positive()) {
                        full[v] = true;
                    }
                }
            }
            total.iter().all(Zero::is_zero) && (0..tree.len()).all(|v| tree.is_terminal(v) || full[v])
        }
        NaWitness::InteriorMargins { margins, .. } => margins.iter().all(|(_, _, m)| m.is_positive()),
    }
}

fn markov_mass(tree: &MarketTree, kernel: &[Vec<Rational>]) -> Vec<Rational> {
    let mut mass = vec![Rational::zero(); tree.len()];
    mass[MarketTree::ROOT] = rat(1, 1);
    for t in 0..tree.horizon {
        for &v in &tree.levels[t] {
            if mass[v].is_zero() {
                continue;
            }
            for (k, &c) in tree.children(v).iter().enumerate() {
                mass[c] = mass[c].clone() + mass[v].clone() * &kernel[v][k];
            }
        }
    }
    mass
}

fn kernel_of(tree: &MarketTree, v: usize, c: &StepChoice<Rational>) -> Vec<Rational> {
    let mut k = vec![Rational::zero(); tree.children(v).len()];
    k[c.a] = k[c.a].clone() + &c.wa;
    k[c.b] = k[c.b].clone() + &c.wb;
    k
}

/// Nodes whose one-step polytope is empty or lacks a full-support point,
/// with a one-node arbitrage for each.
fn structural_failure(tree: &MarketTree) -> Option<(usize, bool, Arbitrage)> {
    for v in 0..tree.len() {
        if tree.is_terminal(v) {
            continue;
        }
        let s = tree.price(v);
        let ch = tree.children(v);
        let below = ch.iter().any(|&c| tree.price(c) < s);
        let above = ch.iter().any(|&c| tree.price(c) > s);
        if below == above && (below || ch.iter().all(|&c| tree.price(c) == s)) {
            continue;
        }
        let empty = !ch.iter().any(|&c| tree.price(c) == s) && below != above;
        let mut holdings = vec![Rational::zero(); tree.len()];
        holdings[v] = if above { rat(1, 1) } else { rat(-1, 1) };
        return Some((v, empty, Arbitrage { holdings, h: Vec::new() }));
    }
    None
}

/// Decides NA for the market. Trees within the path budget use one LP
/// (largest minimal path probability); other markets use upper-expectation
/// recursions over the attainable option-price set.
pub fn check_na(market: &Market, cfg: &Config) -> Result<NaReport, CoreError> {
    let tree = &market.tree;
    if let Some((v, empty, mut arb)) = structural_failure(tree) {
        arb.h = vec![Rational::zero(); market.num_options()];
        return Ok(NaReport {
            holds: false,
            witness: None,
            arbitrage: Some(arb),
            empty_node: empty.then_some(v),
            method: "structural",
        });
    }
    if tree.layout == Layout::Tree && tree.path_count() <= cfg.path_budget as u128 {
        check_na_paths(market, cfg)
    } else {
        check_na_recursive(market, cfg)
    }
}

fn check_na_paths(market: &Market, cfg: &Config) -> Result<NaReport, CoreError> {
    let ps = PathSpace::new(&market.tree, cfg.path_budget)?;
    let n = ps.len();
    // p_k = eps + q_k with q_k >= 0
    let mut lp = LinearProgram::new(Direction::Maximize, n + 1);
    lp.objective[n] = rat(1, 1);
    lp.bounds[n] = Bounds::between(Rational::zero(), rat(1, 1));
    let mut total = vec![rat(1, 1); n];
    total.push(Rational::from_integer((n as i64).into()));
    lp.add_row(total, Sense::Eq, rat(1, 1));
    for row in ps.martingale_rows(&market.tree) {
        let sum = row.iter().fold(Rational::zero(), |a, (_, d)| a + d);
        let mut r = row;
        r.push((n, sum));
        lp.add_sparse_row(&r, Sense::Eq, Rational::zero());
    }
    for i in 0..market.num_options() {
        let mut coeffs: Vec<Rational> = (0..n).map(|k| ps.net(market, i, k)).collect();
        let sum = coeffs.iter().fold(Rational::zero(), |a, x| a + x);
        coeffs.push(sum);
        lp.add_row(coeffs, Sense::Eq, Rational::zero());
    }
    let out = solve_lp(&lp, Arithmetic::Exact)?;
    if out.is_optimal() && out.objective.is_positive() {
        let eps = out.objective.clone();
        let probs: Vec<Rational> = (0..n).map(|k| out.x[k].clone() + &eps).collect();
        let transitions = ps.transitions(&market.tree, &probs);
        return Ok(NaReport {
            holds: true,
            witness: Some(NaWitness::PathMeasure { probs, epsilon: eps, transitions }),
            arbitrage: None,
            empty_node: None,
            method: "path-lp",
        });
    }
    let arb = arbitrage_lp(market, &ps)?;
    Ok(NaReport { holds: false, witness: None, arbitrage: Some(arb), empty_node: None, method: "path-lp" })
}

/// `max sum z` subject to `gain(path) >= z_path`, `0 <= z <= 1`.
fn arbitrage_lp(market: &Market, ps: &PathSpace) -> Result<Arbitrage, CoreError> {
    let tree = &market.tree;
    let inner: Vec<usize> = (0..tree.len()).filter(|&v| !tree.is_terminal(v)).collect();
    let mut col = vec![usize::MAX; tree.len()];
    for (k, &v) in inner.iter().enumerate() {
        col[v] = k;
    }
    let e = market.num_options();
    let nh = inner.len();
    let n = ps.len();
    let mut lp = LinearProgram::new(Direction::Maximize, nh + e + n);
    for j in 0..nh + e {
        lp.bounds[j] = Bounds::free();
    }
    for k in 0..n {
        lp.bounds[nh + e + k] = Bounds::between(Rational::zero(), rat(1, 1));
        lp.objective[nh + e + k] = rat(1, 1);
    }
    for (k, p) in ps.paths.iter().enumerate() {
        let mut row = Vec::new();
        for t in 0..tree.horizon {
            let d = tree.price(p[t + 1]).clone() - tree.price(p[t]);
            if !d.is_zero() {
                row.push((col[p[t]], d));
            }
        }
        for i in 0..e {
            row.push((nh + i, ps.net(market, i, k)));
        }
        row.push((nh + e + k, rat(-1, 1)));
        lp.add_sparse_row(&row, Sense::Ge, Rational::zero());
    }
    let out = solve_lp(&lp, Arithmetic::Exact)?;
    let mut holdings = vec![Rational::zero(); tree.len()];
    for (k, &v) in inner.iter().enumerate() {
        holdings[v] = out.x[k].clone();
    }
    let arb = Arbitrage { holdings, h: out.x[nh..nh + e].to_vec() };
    if !out.objective.is_positive() || !verify_arbitrage(market, &arb) {
        return Err(CoreError::Invalid("no full-support pricing measure, yet no arbitrage was found".into()));
    }
    Ok(arb)
}

/// Upper expectation `f(y) = E^[y . G]` with its gradient and the hedge of
/// its superreplication.
fn upper_support(market: &Market, y: &[Rational]) -> Result<(Rational, Vec<Rational>, Vec<Rational>), CoreError> {
    let num = market.numeric::<Rational>();
    let eu = european(&num, y, true, 0.0)?;
    Ok((eu.value[MarketTree::ROOT].clone(), eu.grad[MarketTree::ROOT].clone(), eu.slope))
}

/// `min_{u in box} f(sigma e_i + u)` over the other coordinates of `active`.
fn facet_min(
    market: &Market,
    active: &[usize],
    i: usize,
    sigma: i64,
    bound: &Rational,
    cfg: &Config,
) -> Result<(Rational, Vec<Rational>), CoreError> {
    let e = market.num_options();
    let others: Vec<usize> = active.iter().copied().filter(|&j| j != i).collect();
    let embed = |u: &[Rational]| {
        let mut y = vec![Rational::zero(); e];
        y[i] = rat(sigma, 1);
        for (k, &j) in others.iter().enumerate() {
            y[j] = u[k].clone();
        }
        y
    };
    let k = Kelley::new(vec![-bound.clone(); others.len()], vec![bound.clone(); others.len()], false, 0.0, cfg.kelley_max_iter);
    let res = k.run(None, |u: &[Rational]| {
        let y = embed(u);
        let (f, g, _) = upper_support(market, &y)?;
        Ok((f, others.iter().map(|&j| g[j].clone()).collect()))
    })?;
    if !res.converged {
        return Err(CoreError::Budget(format!("cutting planes did not converge in {} iterations", cfg.kelley_max_iter)));
    }
    Ok((res.value, embed(&res.argopt)))
}

/// Full-support Markov kernel: `eps` times the uniform law on the children
/// plus `1 - eps` times the two-point law on the extreme children that
/// restores the mean. Denominators stay small, which keeps exact masses
/// cheap on large lattices.
fn full_support_kernel(tree: &MarketTree) -> Vec<Vec<Rational>> {
    (0..tree.len())
        .map(|v| {
            if tree.is_terminal(v) {
                return Vec::new();
            }
            let s = tree.price(v);
            let xs: Vec<&Rational> = tree.children(v).iter().map(|&c| tree.price(c)).collect();
            let m = xs.len();
            let count = Rational::from_integer((m as i64).into());
            let uniform = rat(1, 1) / &count;
            let (lo, hi) = (xs[0], xs[m - 1]);
            if lo == hi {
                return vec![uniform; m];
            }
            let mean = xs.iter().fold(Rational::zero(), |a, x| a + *x) / &count;
            // smallest power-of-two eps keeping the compensating target inside (lo, hi)
            let room = Scalar::min_of(s.clone() - lo, hi.clone() - s);
            let drift = (mean.clone() - s).abs();
            let mut eps = rat(1, 2);
            while drift.clone() * &eps >= room.clone() * (rat(1, 1) - &eps) {
                eps /= rat(2, 1);
            }
            let target = (s.clone() - eps.clone() * &mean) / (rat(1, 1) - &eps);
            let span = hi.clone() - lo;
            let w_hi = (target.clone() - lo) / &span;
            let w_lo = rat(1, 1) - &w_hi;
            let rest = rat(1, 1) - &eps;
            let mut k = vec![eps.clone() * &uniform; m];
            k[0] += rest.clone() * w_lo;
            k[m - 1] += rest * w_hi;
            k
        })
        .collect()
}

fn markov_expectation(market: &Market, kernel: &[Vec<Rational>], i: usize) -> Rational {
    let mass = markov_mass(&market.tree, kernel);
    let o = &market.options[i];
    market.tree.levels[o.maturity].iter().fold(Rational::zero(), |a, &v| a + mass[v].clone() * o.net(v))
}

fn choice_kernel(market: &Market, y: &[Rational], upper: bool) -> Result<Vec<Vec<Rational>>, CoreError> {
    let tree = &market.tree;
    let num = market.numeric::<Rational>();
    let eu = european(&num, y, upper, 0.0)?;
    Ok((0..tree.len())
        .map(|v| eu.choice[v].as_ref().map(|c| kernel_of(tree, v, c)).unwrap_or_default())
        .collect())
}

fn check_na_recursive(market: &Market, cfg: &Config) -> Result<NaReport, CoreError> {
    let tree = &market.tree;
    let e = market.num_options();
    let mut active: Vec<usize> = (0..e).collect();
    let mut replicable = Vec::new();
    let one = rat(1, 1);
    'outer: loop {
        let mut margins = Vec::new();
        for &i in &active {
            for sigma in [1i64, -1] {
                let (m, y) = facet_min(market, &active, i, sigma, &one, cfg)?;
                let arbitrage = |y: &[Rational]| -> Result<NaReport, CoreError> {
                    let (_, _, slope) = upper_support(market, y)?;
                    let arb = Arbitrage { holdings: slope, h: y.iter().map(|x| -x.clone()).collect() };
                    if !verify_arbitrage(market, &arb) {
                        return Err(CoreError::Invalid("extracted arbitrage failed pathwise verification".into()));
                    }
                    Ok(NaReport { holds: false, witness: None, arbitrage: Some(arb), empty_node: None, method: "recursive" })
                };
                if m.is_negative() {
                    return arbitrage(&y);
                }
                if m.is_zero() {
                    let neg: Vec<Rational> = y.iter().map(|x| -x.clone()).collect();
                    let (back, _, _) = upper_support(market, &neg)?;
                    if back.is_positive() {
                        return arbitrage(&y);
                    }
                    replicable.push(i);
                    active.retain(|&j| j != i);
                    continue 'outer;
                }
                margins.push((i, sigma as i8, m));
            }
        }
        let full = full_support_kernel(tree);
        let witness = match active.as_slice() {
            [] => NaWitness::Markov { mixture: vec![(one.clone(), full)] },
            [i] => {
                let mut y = vec![Rational::zero(); e];
                y[*i] = one.clone();
                let hi_k = choice_kernel(market, &y, true)?;
                let lo_k = choice_kernel(market, &y, false)?;
                let a = markov_expectation(market, &full, *i);
                let up = markov_expectation(market, &hi_k, *i);
                let dn = markov_expectation(market, &lo_k, *i);
                let m = Scalar::min_of(up.clone(), -dn.clone());
                let gamma = m.clone() / (rat(2, 1) * (a.abs() + &m));
                let r = one.clone() - &gamma;
                let beta = (-(gamma.clone() * &a) - r.clone() * &dn) / (up - &dn);
                let alpha = r - &beta;
                NaWitness::Markov { mixture: vec![(gamma, full), (alpha, lo_k), (beta, hi_k)] }
            }
            _ => NaWitness::InteriorMargins { margins, replicable: replicable.clone() },
        };
        return Ok(NaReport { holds: true, witness: Some(witness), arbitrage: None, empty_node: None, method: "recursive" });
    }
}

#[derive(Debug, Clone)]
pub struct Redundancy {
    pub option: usize,
    pub sign: i8,
    pub holdings: Vec<Rational>,
    pub h: Vec<Rational>,
    /// Some free option position sits at the box bound.
    pub bound_active: bool,
}

#[derive(Debug, Clone)]
pub struct RedundancyReport {
    pub holds: bool,
    pub violations: Vec<Redundancy>,
}

/// For each option `i` and sign, looks for `(H, h)` with `h_i = sign`,
/// `|h_j| <= B` and `(H.S)_T + h.(g - c) >= 0` on every path.
pub fn check_no_redundant(market: &Market, cfg: &Config) -> Result<RedundancyReport, CoreError> {
    let e = market.num_options();
    let use_lp = market.tree.layout == Layout::Tree && market.tree.path_count() <= cfg.path_budget as u128;
    let ps = if use_lp { Some(PathSpace::new(&market.tree, cfg.path_budget)?) } else { None };
    let mut violations = Vec::new();
    for i in 0..e {
        for sigma in [1i64, -1] {
            let found = match &ps {
                Some(ps) => redundancy_lp(market, ps, i, sigma, &cfg.redundancy_bound)?,
                None => redundancy_recursive(market, i, sigma, cfg)?,
            };
            if let Some(mut r) = found {
                r.bound_active = r.h.iter().enumerate().any(|(j, x)| j != i && x.abs() == cfg.redundancy_bound);
                if r.bound_active {
                    log::warn!("redundancy check for option {i}: position bound {} is active", cfg.redundancy_bound);
                }
                violations.push(r);
            }
        }
    }
    Ok(RedundancyReport { holds: violations.is_empty(), violations })
}

fn redundancy_lp(market: &Market, ps: &PathSpace, i: usize, sigma: i64, bound: &Rational) -> Result<Option<Redundancy>, CoreError> {
    let tree = &market.tree;
    let e = market.num_options();
    let inner: Vec<usize> = (0..tree.len()).filter(|&v| !tree.is_terminal(v)).collect();
    let mut col = vec![usize::MAX; tree.len()];
    for (k, &v) in inner.iter().enumerate() {
        col[v] = k;
    }
    let nh = inner.len();
    let mut lp = LinearProgram::new(Direction::Minimize, nh + e);
    for j in 0..nh {
        lp.bounds[j] = Bounds::free();
    }
    for j in 0..e {
        lp.bounds[nh + j] = if j == i {
            Bounds::between(rat(sigma, 1), rat(sigma, 1))
        } else {
            Bounds::between(-bound.clone(), bound.clone())
        };
    }
    for (k, p) in ps.paths.iter().enumerate() {
        let mut row = Vec::new();
        for t in 0..tree.horizon {
            let d = tree.price(p[t + 1]).clone() - tree.price(p[t]);
            if !d.is_zero() {
                row.push((col[p[t]], d));
            }
        }
        for j in 0..e {
            row.push((nh + j, ps.net(market, j, k)));
        }
        lp.add_sparse_row(&row, Sense::Ge, Rational::zero());
    }
    let out = solve_lp(&lp, Arithmetic::Exact)?;
    if !out.is_optimal() {
        return Ok(None);
    }
    let mut holdings = vec![Rational::zero(); tree.len()];
    for (k, &v) in inner.iter().enumerate() {
        holdings[v] = out.x[k].clone();
    }
    Ok(Some(Redundancy { option: i, sign: sigma as i8, holdings, h: out.x[nh..].to_vec(), bound_active: false }))
}

fn redundancy_recursive(market: &Market, i: usize, sigma: i64, cfg: &Config) -> Result<Option<Redundancy>, CoreError> {
    let e = market.num_options();
    let others: Vec<usize> = (0..e).filter(|&j| j != i).collect();
    let b = cfg.redundancy_bound.clone();
    let embed = |u: &[Rational]| {
        let mut y = vec![Rational::zero(); e];
        y[i] = rat(sigma, 1);
        for (k, &j) in others.iter().enumerate() {
            y[j] = u[k].clone();
        }
        y
    };
    // E^[-(y.G)] <= 0 means y.G is dominated from below by a stock gain
    let k = Kelley::new(vec![-b.clone(); others.len()], vec![b; others.len()], false, 0.0, cfg.kelley_max_iter);
    let res = k.run(Some(vec![Rational::zero(); others.len()]), |u: &[Rational]| {
        let neg: Vec<Rational> = embed(u).iter().map(|x| -x.clone()).collect();
        let (f, g, _) = upper_support(market, &neg)?;
        Ok((f, others.iter().map(|&j| -g[j].clone()).collect()))
    })?;
    if res.value.is_positive() {
        return Ok(None);
    }
    let y = embed(&res.argopt);
    let neg: Vec<Rational> = y.iter().map(|x| -x.clone()).collect();
    let (_, _, slope) = upper_support(market, &neg)?;
    Ok(Some(Redundancy { option: i, sign: sigma as i8, holdings: slope, h: y, bound_active: false }))
}

/// Extent of the attainable option-price set along each axis:
/// `max sigma E_Q[g_i - c_i]` over martingale measures pricing the other
/// options at their quotes.
pub fn axis_extents(market: &Market, cfg: &Config) -> Result<Vec<(usize, i8, Rational)>, CoreError> {
    let e = market.num_options();
    if e == 0 {
        return Ok(Vec::new());
    }
    if e == 1 && (market.tree.layout == Layout::Lattice || market.tree.path_count() > cfg.path_budget as u128) {
        let (up, _, _) = upper_support(market, &[rat(1, 1)])?;
        let (dn, _, _) = upper_support(market, &[rat(-1, 1)])?;
        return Ok(vec![(0, 1, up), (0, -1, dn)]);
    }
    let tree_market = as_tree(market, cfg).map_err(|err| {
        CoreError::Unsupported(format!("{err}; set an explicit bound on option positions (n_bound)"))
    })?;
    let m = tree_market.as_ref();
    let ps = PathSpace::new(&m.tree, cfg.path_budget)?;
    let mut out = Vec::new();
    for i in 0..e {
        for sigma in [1i64, -1] {
            let obj = (0..ps.len()).map(|k| ps.net(m, i, k) * rat(sigma, 1)).collect();
            let mut lp = ps.pricing_lp(m, obj, Direction::Maximize, false);
            for j in (0..e).filter(|&j| j != i) {
                lp.add_row((0..ps.len()).map(|k| ps.net(m, j, k)).collect(), Sense::Eq, Rational::zero());
            }
            let res = solve_lp(&lp, Arithmetic::Exact)?;
            if !res.is_optimal() {
                return Err(CoreError::Arbitrage("no martingale measure prices the options at their quotes".into()));
            }
            out.push((i, sigma as i8, res.objective));
        }
    }
    Ok(out)
}

/// Bound `N` on `|h|_inf` for optimal static positions:
/// `(max Phi - min Phi + 1) / rho` with `rho` the smallest axis extent.
pub fn n_bound(market: &Market, cfg: &Config) -> Result<Rational, CoreError> {
    if let Some(n) = &cfg.n_bound {
        return Ok(n.clone());
    }
    if market.num_options() == 0 {
        return Ok(Rational::zero());
    }
    let rho = axis_extents(market, cfg)?.into_iter().map(|x| x.2).min().unwrap();
    if !rho.is_positive() {
        return Err(CoreError::Arbitrage(
            "zero is not interior to the attainable option prices (redundant option or arbitrage); \
             set an explicit bound on option positions (n_bound)"
                .into(),
        ));
    }
    let phi = &market.payoff.values;
    let max = phi.iter().max().cloned().unwrap_or_default();
    let min = phi.iter().min().cloned().unwrap_or_default();
    Ok((max - min + rat(1, 1)) / rho)
}
