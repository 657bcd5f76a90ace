//! Sub- and super-hedging prices with their hedges, the two alternative
//! seller prices, and the sup-inf / inf-sup gap.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};

use robusthedge_lp::{solve_lp, Arithmetic, Bounds, Direction, Rational, Scalar, Sense, Signed, Zero};

use crate::arbitrage::{as_tree, check_na, check_no_redundant, n_bound, PathSpace};
use crate::hull::Hull;
use crate::kelley::Kelley;
use crate::market::{Market, MarketTree, Numeric, StoppingTime};
use crate::oracle::enumerate_stopping_times;
use crate::stopping::{evaluate_stopping, snell, verify_supermartingale, Mode, SnellResult, StepChoice};
use crate::{rat, Config, CoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Sub,
    Super,
    Hat,
    Tilde,
}

impl std::str::FromStr for Side {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sub" => Ok(Side::Sub),
            "super" => Ok(Side::Super),
            "hat" => Ok(Side::Hat),
            "tilde" => Ok(Side::Tilde),
            other => Err(format!("unknown side '{other}'")),
        }
    }
}

/// Stock holdings before and after the exercise date. `post_stop[v]` is
/// used at `v` whenever the option was exercised at or before `v`; the
/// holding does not depend on the exercise date itself.
#[derive(Debug, Clone, PartialEq)]
pub struct NonAnticipativeStrategy {
    pub pre_stop: Vec<Rational>,
    pub post_stop: Vec<Rational>,
}

impl NonAnticipativeStrategy {
    /// Holding at `v` when exercise happened at date `k <= time(v)`.
    pub fn post(&self, v: usize, _k: usize) -> &Rational {
        &self.post_stop[v]
    }

    /// Single node-indexed strategy for a fixed stopping time on a tree.
    pub fn flatten(&self, tree: &MarketTree, tau: &StoppingTime) -> Vec<Rational> {
        let mut stopped = vec![false; tree.len()];
        let mut out = vec![Rational::zero(); tree.len()];
        for t in 0..=tree.horizon {
            for &v in &tree.levels[t] {
                let s = stopped[v] || tau.region[v];
                out[v] = if s { self.post_stop[v].clone() } else { self.pre_stop[v].clone() };
                for &c in tree.children(v) {
                    stopped[c] = stopped[c] || s;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub enum DualWitness {
    /// Node kernels (aligned with each node's children) used before and
    /// after the stopping time.
    Kernels { tau: StoppingTime, pre: Vec<Vec<Rational>>, post: Vec<Vec<Rational>> },
    PathMeasure { tau: Option<StoppingTime>, probs: Vec<Rational> },
}

#[derive(Debug, Clone, Default)]
pub struct Replay {
    pub ok: bool,
    pub min_slack: Rational,
    /// Nodes (stop nodes on the sub side, candidate stop nodes on the super
    /// side) where some path violates the inequality.
    pub violations: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    pub iterations: usize,
    pub cells: usize,
    pub n_bound: Option<Rational>,
    /// Certified enclosure when the search budget ran out.
    pub interval: Option<(Rational, Rational)>,
    pub supermartingale_checks: usize,
    pub supermartingale_failures: usize,
}

#[derive(Debug, Clone)]
pub struct PriceReport {
    pub side: Side,
    pub exact: bool,
    pub price: Rational,
    pub h_star: Vec<Rational>,
    pub tau_star: Option<StoppingTime>,
    pub strategy: Option<NonAnticipativeStrategy>,
    pub witness: Option<DualWitness>,
    pub replay: Option<Replay>,
    pub diagnostics: Diagnostics,
}

fn require_na(market: &Market, cfg: &Config) -> Result<(), CoreError> {
    let na = check_na(market, cfg)?;
    if na.holds {
        return Ok(());
    }
    let detail = match (na.empty_node, &na.arbitrage) {
        (Some(v), _) => format!("one-step polytope empty at node '{}'", market.tree.nodes[v].label),
        (None, Some(a)) => format!("arbitrage with option positions {:?}", a.h.iter().map(crate::format_rational).collect::<Vec<_>>()),
        _ => "no full-support pricing measure".into(),
    };
    Err(CoreError::Arbitrage(detail))
}

fn to_rats<S: Scalar>(xs: &[S]) -> Vec<Rational> {
    xs.iter().map(Scalar::to_rational).collect()
}

fn kernels<S: Scalar>(tree: &MarketTree, choices: &[Option<StepChoice<S>>]) -> Vec<Vec<Rational>> {
    (0..tree.len())
        .map(|v| match &choices[v] {
            None => Vec::new(),
            Some(c) => {
                let mut k = vec![Rational::zero(); tree.children(v).len()];
                k[c.a] = k[c.a].clone() + c.wa.to_rational();
                k[c.b] = k[c.b].clone() + c.wb.to_rational();
                k
            }
        })
        .collect()
}

fn slopes<S: Scalar>(choices: &[Option<StepChoice<S>>], negate: bool) -> Vec<Rational> {
    choices
        .iter()
        .map(|c| match c {
            None => Rational::zero(),
            Some(c) if negate => -c.slope.to_rational(),
            Some(c) => c.slope.to_rational(),
        })
        .collect()
}

fn neg<S: Scalar>(h: &[S]) -> Vec<S> {
    h.iter().map(|x| -x.clone()).collect()
}

/// Seller's price `inf_h sup_tau sup_Q E_Q[Phi_tau - h.(g - c)]`, minimized
/// over the position box by cutting planes, with the non-anticipative hedge
/// read off the hull tangents of `V` (before exercise) and `W` (after).
pub fn super_hedge_price(market: &Market, cfg: &Config, arith: Arithmetic) -> Result<PriceReport, CoreError> {
    require_na(market, cfg)?;
    with_spanning_options(market, cfg, |m, c| match arith {
        Arithmetic::Exact => super_impl::<Rational>(m, c),
        Arithmetic::Float => super_impl::<f64>(m, c),
    })
}

/// Runs `price` with the position bound fixed. When no bound exists because
/// some options are spanned by the stock and the others, those options are
/// dropped first (under no-arbitrage this changes no price) and reported
/// with a zero position.
fn with_spanning_options(
    market: &Market,
    cfg: &Config,
    price: impl Fn(&Market, &Config) -> Result<PriceReport, CoreError>,
) -> Result<PriceReport, CoreError> {
    let err = match n_bound(market, cfg) {
        Ok(nb) => return price(market, &Config { n_bound: Some(nb), ..cfg.clone() }),
        Err(CoreError::Arbitrage(msg)) => msg,
        Err(e) => return Err(e),
    };
    let mut kept: Vec<usize> = (0..market.num_options()).collect();
    let mut reduced = market.clone();
    loop {
        let r = check_no_redundant(&reduced, cfg)?;
        let Some(v) = r.violations.first() else { break };
        log::info!("option {} is spanned by the others; priced without it", kept[v.option]);
        kept.remove(v.option);
        reduced = market.with_options(kept.iter().map(|&i| market.options[i].clone()).collect());
    }
    if kept.len() == market.num_options() {
        return Err(CoreError::Arbitrage(err));
    }
    let nb = n_bound(&reduced, cfg)?;
    let mut report = price(&reduced, &Config { n_bound: Some(nb), ..cfg.clone() })?;
    let mut h = vec![Rational::zero(); market.num_options()];
    for (x, &i) in report.h_star.iter().zip(&kept) {
        h[i] = x.clone();
    }
    report.h_star = h;
    Ok(report)
}

fn super_impl<S: Scalar>(market: &Market, cfg: &Config) -> Result<PriceReport, CoreError> {
    let tol = if S::EXACT { 0.0 } else { cfg.tol };
    let num = market.numeric::<S>();
    let e = num.e;
    let nb = n_bound(market, cfg)?;
    let big = S::from_rational(&nb);
    let mut checks = 0usize;
    let mut failures = 0usize;
    let mut eval = |h: &[S]| -> Result<SnellResult<S>, CoreError> {
        let r = snell(&num, &num.phi, Mode::SupSup, &neg(h), tol)?;
        checks += 1;
        if !verify_supermartingale(&r, &num, tol)?.ok {
            failures += 1;
        }
        Ok(r)
    };
    let kelley = Kelley::new(vec![-big.clone(); e], vec![big; e], false, cfg.tol, cfg.kelley_max_iter);
    let res = kelley.run(Some(vec![S::zero(); e]), |h| {
        let r = eval(h)?;
        Ok((r.root().clone(), neg(r.root_grad())))
    })?;
    if !res.converged {
        log::warn!("cutting planes stopped after {} iterations without closing the gap", res.iterations);
    }
    let h = res.argopt;
    let r = eval(&h)?;
    let tree = &market.tree;
    let strategy = NonAnticipativeStrategy { pre_stop: slopes(&r.value_choice, false), post_stop: slopes(&r.w_choice, false) };
    let witness = DualWitness::Kernels {
        tau: r.tau_star.clone(),
        pre: kernels(tree, &r.value_choice),
        post: kernels(tree, &r.w_choice),
    };
    let price = r.root().to_rational();
    let h_star = to_rats(&h);
    let replay = replay_super(market, &price, &h_star, &strategy, cfg, S::EXACT);
    Ok(PriceReport {
        side: Side::Super,
        exact: S::EXACT,
        price,
        h_star,
        tau_star: Some(r.tau_star.clone()),
        strategy: Some(strategy),
        witness: Some(witness),
        replay: Some(replay),
        diagnostics: Diagnostics {
            iterations: res.iterations,
            n_bound: Some(nb),
            interval: (!res.converged).then(|| (res.bound.to_rational(), res.value.to_rational())),
            supermartingale_checks: checks,
            supermartingale_failures: failures,
            ..Default::default()
        },
    })
}

struct Cell<S> {
    ub: S,
    lo: Vec<S>,
    hi: Vec<S>,
}

impl<S: PartialOrd> PartialEq for Cell<S> {
    fn eq(&self, other: &Self) -> bool {
        self.ub.partial_cmp(&other.ub) == Some(Ordering::Equal)
    }
}
impl<S: PartialOrd> Eq for Cell<S> {}
impl<S: PartialOrd> PartialOrd for Cell<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<S: PartialOrd> Ord for Cell<S> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.ub.partial_cmp(&other.ub).unwrap_or(Ordering::Equal)
    }
}

/// Sup-inf recursion with node addends bracketing `h.(g - c)` over a cell:
/// returns the root bound and the stop decisions that are the same for
/// every `h` in the cell (`Some(true)` stop, `Some(false)` continue).
struct IntervalPass<S> {
    ub: S,
    forced: Vec<Option<bool>>,
}

fn interval_pass<S: Scalar>(num: &Numeric<S>, lo: &[S], hi: &[S], tol: f64) -> Result<IntervalPass<S>, CoreError> {
    let tree = num.tree;
    let n = tree.len();
    let mut inj_lo = vec![S::zero(); n];
    let mut inj_hi = vec![S::zero(); n];
    for v in 0..n {
        for (i, g) in &num.claims[v] {
            let (a, b) = (lo[*i].clone() * g, hi[*i].clone() * g);
            let (mn, mx) = if a < b { (a, b) } else { (b, a) };
            inj_lo[v] = inj_lo[v].clone() + mn;
            inj_hi[v] = inj_hi[v].clone() + mx;
        }
    }
    let pass = |inj: &[S]| -> Result<(Vec<S>, Vec<S>, Vec<Option<S>>), CoreError> {
        let mut val = vec![S::zero(); n];
        let mut w = vec![S::zero(); n];
        let mut stop = vec![S::zero(); n];
        let mut cont: Vec<Option<S>> = vec![None; n];
        for t in (0..=tree.horizon).rev() {
            let mut cached: Option<(usize, Hull<S>, Hull<S>)> = None;
            for &v in &tree.levels[t] {
                match tree.nodes[v].group {
                    None => {
                        w[v] = inj[v].clone();
                        stop[v] = num.phi[v].clone();
                        val[v] = num.phi[v].clone() + &inj[v];
                    }
                    Some(g) => {
                        let ch = &tree.groups[g];
                        if cached.as_ref().map(|c| c.0) != Some(g) {
                            let xs: Vec<S> = ch.iter().map(|&c| num.prices[c].clone()).collect();
                            let vy: Vec<S> = ch.iter().map(|&c| val[c].clone()).collect();
                            let wy: Vec<S> = ch.iter().map(|&c| w[c].clone()).collect();
                            cached = Some((g, Hull::build(&xs, &vy, false, tol), Hull::build(&xs, &wy, false, tol)));
                        }
                        let (_, vh, wh) = cached.as_ref().unwrap();
                        let empty = || CoreError::EmptyPolytope(tree.nodes[v].label.clone());
                        let c = vh.eval(&num.prices[v], tol).ok_or_else(empty)?.0;
                        let wp = wh.eval(&num.prices[v], tol).ok_or_else(empty)?.0;
                        stop[v] = num.phi[v].clone() + &wp;
                        w[v] = wp + &inj[v];
                        val[v] = S::max_of(stop[v].clone(), c.clone()) + &inj[v];
                        cont[v] = Some(c);
                    }
                }
            }
        }
        Ok((val, stop, cont))
    };
    let (_, stop_lo, cont_lo) = pass(&inj_lo)?;
    let (val_hi, stop_hi, cont_hi) = pass(&inj_hi)?;
    let forced = (0..n)
        .map(|v| match (&cont_lo[v], &cont_hi[v]) {
            (Some(cl), Some(ch)) => {
                if stop_lo[v].cmp_tol(ch, tol) != Ordering::Less {
                    Some(true)
                } else if stop_hi[v].cmp_tol(cl, tol) == Ordering::Less {
                    Some(false)
                } else {
                    None
                }
            }
            _ => Some(true),
        })
        .collect();
    Ok(IntervalPass { ub: val_hi[MarketTree::ROOT].clone(), forced })
}

/// Stopping times compatible with the forced decisions: every assignment
/// of the undetermined nodes reachable before a forced stop.
fn candidate_stops(tree: &MarketTree, forced: &[Option<bool>], cap: usize) -> Option<Vec<StoppingTime>> {
    let mut reach = vec![false; tree.len()];
    reach[MarketTree::ROOT] = true;
    let mut open = Vec::new();
    for t in 0..=tree.horizon {
        for &v in &tree.levels[t] {
            if !reach[v] || forced[v] == Some(true) {
                continue;
            }
            if forced[v].is_none() {
                open.push(v);
            }
            for &c in tree.children(v) {
                reach[c] = true;
            }
        }
    }
    if open.len() > cap {
        return None;
    }
    let base: Vec<bool> = (0..tree.len()).map(|v| forced[v] != Some(false)).collect();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for mask in 0u64..(1u64 << open.len()) {
        let mut flags = base.clone();
        for (k, &v) in open.iter().enumerate() {
            flags[v] = mask >> k & 1 == 1;
        }
        let tau = StoppingTime::first_hit(tree, &flags);
        if seen.insert(tau.region.clone()) {
            out.push(tau);
        }
    }
    Some(out)
}

/// Buyer's price `sup_h sup_tau inf_Q E_Q[Phi_tau + h.(g - c)]`.
///
/// `V(h)` is a maximum of concave functions, one per stopping time, so the
/// search is a branch and bound over cells of the position box: a cell is
/// closed once the stopping times that can be optimal on it are few enough
/// to maximize each concave piece over the whole box by cutting planes.
pub fn sub_hedge_price(market: &Market, cfg: &Config, arith: Arithmetic) -> Result<PriceReport, CoreError> {
    require_na(market, cfg)?;
    with_spanning_options(market, cfg, |m, c| match arith {
        Arithmetic::Exact => sub_impl::<Rational>(m, c),
        Arithmetic::Float => sub_impl::<f64>(m, c),
    })
}

fn sub_impl<S: Scalar>(market: &Market, cfg: &Config) -> Result<PriceReport, CoreError> {
    let tol = if S::EXACT { 0.0 } else { cfg.tol };
    let num = market.numeric::<S>();
    let e = num.e;
    let nb = n_bound(market, cfg)?;
    let big = S::from_rational(&nb);
    let box_lo = vec![-big.clone(); e];
    let box_hi = vec![big; e];
    let kelley = Kelley::new(box_lo.clone(), box_hi.clone(), true, cfg.tol, cfg.kelley_max_iter);
    let mut iterations = 0usize;
    let mut cache: HashMap<Vec<bool>, (S, Vec<S>)> = HashMap::new();
    let mut best: Option<(S, Vec<S>, StoppingTime)> = None;

    let mut maximize_tau = |tau: &StoppingTime, start: &[S], best: &mut Option<(S, Vec<S>, StoppingTime)>| -> Result<(), CoreError> {
        if !cache.contains_key(&tau.region) {
            let res = kelley.run(Some(start.to_vec()), |h| {
                let r = evaluate_stopping(&num, &num.phi, tau, false, h, tol)?;
                Ok((r.root().clone(), r.root_grad().to_vec()))
            })?;
            iterations += res.iterations;
            cache.insert(tau.region.clone(), (res.value, res.argopt));
        }
        let (val, h) = &cache[&tau.region];
        if best.as_ref().is_none_or(|b| *val > b.0) {
            *best = Some((val.clone(), h.clone(), tau.clone()));
        }
        Ok(())
    };
    let closed = |ub: &S, lb: &S| {
        if S::EXACT {
            ub <= lb
        } else {
            (ub.clone() - lb).to_f64() <= cfg.tol * 10.0 * (1.0 + lb.to_f64().abs())
        }
    };

    let zero = vec![S::zero(); e];
    let r0 = snell(&num, &num.phi, Mode::SupInf, &zero, tol)?;
    maximize_tau(&r0.tau_star, &zero, &mut best)?;
    let root = interval_pass(&num, &box_lo, &box_hi, tol)?;
    let mut heap = BinaryHeap::new();
    heap.push(Cell { ub: root.ub, lo: box_lo.clone(), hi: box_hi.clone() });
    let mut cells = 0usize;
    let mut interval = None;
    let two = S::from_i64(2);
    while let Some(cell) = heap.pop() {
        let lb = best.as_ref().unwrap().0.clone();
        if closed(&cell.ub, &lb) {
            break;
        }
        if cells >= cfg.max_cells {
            log::warn!("sub-hedging search stopped after {cells} cells");
            interval = Some((lb.to_rational(), cell.ub.to_rational()));
            break;
        }
        cells += 1;
        let pass = interval_pass(&num, &cell.lo, &cell.hi, tol)?;
        if closed(&pass.ub, &lb) {
            continue;
        }
        let center: Vec<S> = cell.lo.iter().zip(&cell.hi).map(|(a, b)| (a.clone() + b) / &two).collect();
        if let Some(cands) = candidate_stops(&market.tree, &pass.forced, cfg.max_ambiguous) {
            for tau in &cands {
                maximize_tau(tau, &center, &mut best)?;
            }
            continue;
        }
        let rc = snell(&num, &num.phi, Mode::SupInf, &center, tol)?;
        maximize_tau(&rc.tau_star, &center, &mut best)?;
        let k = (0..e)
            .max_by(|&a, &b| {
                let wa = cell.hi[a].clone() - &cell.lo[a];
                let wb = cell.hi[b].clone() - &cell.lo[b];
                wa.partial_cmp(&wb).unwrap_or(Ordering::Equal)
            })
            .expect("ambiguous stop decisions on a zero-dimensional cell");
        let mid = center[k].clone();
        let mut left_hi = cell.hi.clone();
        left_hi[k] = mid.clone();
        let mut right_lo = cell.lo.clone();
        right_lo[k] = mid;
        let lb = best.as_ref().unwrap().0.clone();
        for (lo, hi) in [(cell.lo.clone(), left_hi), (right_lo, cell.hi.clone())] {
            let p = interval_pass(&num, &lo, &hi, tol)?;
            if !closed(&p.ub, &lb) {
                heap.push(Cell { ub: p.ub, lo, hi });
            }
        }
    }

    let (mut value, h, _) = best.unwrap();
    // exercise rule read off the envelope at the optimal position
    let rh = snell(&num, &num.phi, Mode::SupInf, &h, tol)?;
    if rh.root() > &value {
        value = rh.root().clone();
    }
    let tau = rh.tau_star.clone();
    let y = evaluate_stopping(&num, &num.phi, &tau, false, &h, tol)?;
    let tree = &market.tree;
    let strategy = NonAnticipativeStrategy { pre_stop: slopes(&y.value_choice, true), post_stop: slopes(&y.w_choice, true) };
    let witness = DualWitness::Kernels { tau: tau.clone(), pre: kernels(tree, &y.value_choice), post: kernels(tree, &y.w_choice) };
    let price = value.to_rational();
    let h_star = to_rats(&h);
    let certified = y.root().to_rational();
    let replay = replay_sub(market, &certified, &h_star, &tau, &strategy, cfg, S::EXACT);
    if let Some((lo, hi)) = &mut interval {
        *lo = price.clone().max(lo.clone());
        if *hi < *lo {
            *hi = lo.clone();
        }
    }
    Ok(PriceReport {
        side: Side::Sub,
        exact: S::EXACT,
        price,
        h_star,
        tau_star: Some(tau),
        strategy: Some(strategy),
        witness: Some(witness),
        replay: Some(replay),
        diagnostics: Diagnostics { iterations, cells, n_bound: Some(nb), interval, ..Default::default() },
    })
}

fn injections(market: &Market, h: &[Rational]) -> Vec<Rational> {
    let num = market.numeric::<Rational>();
    (0..market.tree.len()).map(|v| num.injection(v, h)).collect()
}

/// Smallest suffix gain from `v` to a leaf under `holdings`, counting the
/// option payments strictly after `v`.
fn suffix_min(market: &Market, holdings: &[Rational], inj: &[Rational]) -> Vec<Rational> {
    let tree = &market.tree;
    let mut b = vec![Rational::zero(); tree.len()];
    for t in (0..tree.horizon).rev() {
        for &v in &tree.levels[t] {
            b[v] = tree
                .children(v)
                .iter()
                .map(|&c| holdings[v].clone() * (tree.price(c).clone() - tree.price(v)) + &inj[c] + &b[c])
                .min()
                .unwrap();
        }
    }
    b
}

fn finish_replay(slacks: Vec<Rational>, cfg: &Config, exact: bool) -> Replay {
    let band = if exact { Rational::zero() } else { Rational::from_float(cfg.cert_tol).unwrap_or_default() };
    let violations = slacks.iter().filter(|s| **s < -band.clone()).count();
    let min_slack = slacks.into_iter().min().unwrap_or_default();
    Replay { ok: violations == 0, min_slack, violations }
}

/// Checks `x + (H.S)_T + h.(g - c) >= Phi_v` for every path and every node
/// `v` on it, where `H` switches from the pre-stop to the post-stop
/// holdings at `v`.
pub fn replay_super(market: &Market, x: &Rational, h: &[Rational], strat: &NonAnticipativeStrategy, cfg: &Config, exact: bool) -> Replay {
    let tree = &market.tree;
    let inj = injections(market, h);
    let b = suffix_min(market, &strat.post_stop, &inj);
    let mut a: Vec<Option<Rational>> = vec![None; tree.len()];
    a[MarketTree::ROOT] = Some(inj[MarketTree::ROOT].clone());
    for t in 0..tree.horizon {
        for &v in &tree.levels[t] {
            let av = a[v].clone().unwrap();
            for &c in tree.children(v) {
                let cand = av.clone() + strat.pre_stop[v].clone() * (tree.price(c).clone() - tree.price(v)) + &inj[c];
                if a[c].as_ref().is_none_or(|cur| cand < *cur) {
                    a[c] = Some(cand);
                }
            }
        }
    }
    let slacks = (0..tree.len())
        .map(|v| x.clone() + a[v].as_ref().unwrap() + &b[v] - &market.payoff.values[v])
        .collect();
    finish_replay(slacks, cfg, exact)
}

/// Checks `Phi_tau + (H.S)_T + h.(g - c) >= x` on every path.
pub fn replay_sub(
    market: &Market,
    x: &Rational,
    h: &[Rational],
    tau: &StoppingTime,
    strat: &NonAnticipativeStrategy,
    cfg: &Config,
    exact: bool,
) -> Replay {
    let tree = &market.tree;
    let inj = injections(market, h);
    let b = suffix_min(market, &strat.post_stop, &inj);
    let mut a: Vec<Option<Rational>> = vec![None; tree.len()];
    a[MarketTree::ROOT] = Some(inj[MarketTree::ROOT].clone());
    let mut slacks = Vec::new();
    for t in 0..=tree.horizon {
        for &v in &tree.levels[t] {
            let Some(av) = a[v].clone() else { continue };
            if tau.region[v] {
                slacks.push(av + &b[v] + &market.payoff.values[v] - x);
                continue;
            }
            for &c in tree.children(v) {
                let cand = av.clone() + strat.pre_stop[v].clone() * (tree.price(c).clone() - tree.price(v)) + &inj[c];
                if a[c].as_ref().is_none_or(|cur| cand < *cur) {
                    a[c] = Some(cand);
                }
            }
        }
    }
    finish_replay(slacks, cfg, exact)
}

/// Per-path replay of a super certificate on a tree: number of violated
/// (path, stop node) pairs.
pub fn replay_super_paths(market: &Market, x: &Rational, h: &[Rational], strat: &NonAnticipativeStrategy, budget: usize) -> Result<usize, CoreError> {
    let tree = &market.tree;
    let inj = injections(market, h);
    let mut bad = 0;
    for p in tree.paths(budget)? {
        for (k, &u) in p.iter().enumerate() {
            let mut total = x.clone() - &market.payoff.values[u];
            for t in 0..tree.horizon {
                let hold = if t < k { &strat.pre_stop[p[t]] } else { &strat.post_stop[p[t]] };
                total += hold.clone() * (tree.price(p[t + 1]).clone() - tree.price(p[t]));
            }
            for &v in &p {
                total += &inj[v];
            }
            if total.is_negative() {
                bad += 1;
            }
        }
    }
    Ok(bad)
}

/// Per-path replay of a sub certificate on a tree: number of violated paths.
pub fn replay_sub_paths(
    market: &Market,
    x: &Rational,
    h: &[Rational],
    tau: &StoppingTime,
    strat: &NonAnticipativeStrategy,
    budget: usize,
) -> Result<usize, CoreError> {
    let tree = &market.tree;
    let inj = injections(market, h);
    let mut bad = 0;
    for p in tree.paths(budget)? {
        let k = p.iter().position(|&v| tau.region[v]).ok_or_else(|| CoreError::Invalid("path never stops".into()))?;
        let mut total = market.payoff.values[p[k]].clone() - x;
        for t in 0..tree.horizon {
            let hold = if t < k { &strat.pre_stop[p[t]] } else { &strat.post_stop[p[t]] };
            total += hold.clone() * (tree.price(p[t + 1]).clone() - tree.price(p[t]));
        }
        for &v in &p {
            total += &inj[v];
        }
        if total.is_negative() {
            bad += 1;
        }
    }
    Ok(bad)
}

fn stopped_payoff(market: &Market, ps: &PathSpace, tau: &StoppingTime) -> Vec<Rational> {
    ps.paths
        .iter()
        .map(|p| market.payoff.values[tau.stop_on_path(p).expect("stopping time misses a path")].clone())
        .collect()
}

fn path_report(side: Side, price: Rational, tau: Option<StoppingTime>, probs: Vec<Rational>, exact: bool) -> PriceReport {
    PriceReport {
        side,
        exact,
        price,
        h_star: Vec::new(),
        tau_star: tau.clone(),
        strategy: None,
        witness: Some(DualWitness::PathMeasure { tau, probs }),
        replay: None,
        diagnostics: Diagnostics::default(),
    }
}

/// `sup_tau sup_{Q in Q} E_Q[Phi_tau]`: the seller knows the exercise rule.
pub fn hat_price(market: &Market, cfg: &Config, arith: Arithmetic) -> Result<PriceReport, CoreError> {
    let m = as_tree(market, cfg)?;
    let m = m.as_ref();
    let taus = enumerate_stopping_times(&m.tree, cfg.max_stopping_times)?;
    let ps = PathSpace::new(&m.tree, cfg.path_budget)?;
    let mut best: Option<(Rational, StoppingTime, Vec<Rational>)> = None;
    for tau in taus {
        let lp = ps.pricing_lp(m, stopped_payoff(m, &ps, &tau), Direction::Maximize, true);
        let out = solve_lp(&lp, arith)?;
        if !out.is_optimal() {
            return Err(CoreError::Arbitrage("no martingale measure prices the options at their quotes".into()));
        }
        if best.as_ref().is_none_or(|b| out.objective > b.0) {
            best = Some((out.objective, tau, out.x));
        }
    }
    let (price, tau, probs) = best.unwrap();
    Ok(path_report(Side::Hat, price, Some(tau), probs, arith == Arithmetic::Exact))
}

/// `sup_{Q in Q} E_Q[max_t Phi_t]`: super-hedging the running maximum.
pub fn tilde_price(market: &Market, cfg: &Config, arith: Arithmetic) -> Result<PriceReport, CoreError> {
    require_na(market, cfg)?;
    let m = as_tree(market, cfg)?;
    let m = m.as_ref();
    let ps = PathSpace::new(&m.tree, cfg.path_budget)?;
    let obj = ps.paths.iter().map(|p| p.iter().map(|&v| m.payoff.values[v].clone()).max().unwrap()).collect();
    let out = solve_lp(&ps.pricing_lp(m, obj, Direction::Maximize, true), arith)?;
    if !out.is_optimal() {
        return Err(CoreError::Arbitrage("no martingale measure prices the options at their quotes".into()));
    }
    Ok(path_report(Side::Tilde, out.objective, None, out.x, arith == Arithmetic::Exact))
}

#[derive(Debug, Clone)]
pub struct GapReport {
    pub sup_inf: Option<Rational>,
    pub inf_sup: Rational,
    pub gap: Option<Rational>,
    pub best_tau: Option<StoppingTime>,
    /// Measure attaining the inf-sup value, as path probabilities.
    pub inf_sup_measure: Vec<Rational>,
    pub generated: usize,
}

/// `sup_tau inf_Q E_Q[Phi_tau]` against `inf_Q sup_tau E_Q[Phi_tau]`; the
/// second by constraint generation over stopping times.
pub fn duality_gap_report(market: &Market, cfg: &Config, arith: Arithmetic) -> Result<GapReport, CoreError> {
    let m = as_tree(market, cfg)?;
    let m = m.as_ref();
    let ps = PathSpace::new(&m.tree, cfg.path_budget)?;
    let tree = &m.tree;
    let (sup_inf, best_tau) = match enumerate_stopping_times(tree, cfg.max_stopping_times) {
        Ok(taus) => {
            let mut best: Option<(Rational, StoppingTime)> = None;
            for tau in taus {
                let out = solve_lp(&ps.pricing_lp(m, stopped_payoff(m, &ps, &tau), Direction::Minimize, true), arith)?;
                if !out.is_optimal() {
                    return Err(CoreError::Arbitrage("no martingale measure prices the options at their quotes".into()));
                }
                if best.as_ref().is_none_or(|b| out.objective > b.0) {
                    best = Some((out.objective, tau));
                }
            }
            let (v, t) = best.unwrap();
            (Some(v), Some(t))
        }
        Err(CoreError::Budget(msg)) => {
            log::warn!("sup-inf side skipped: {msg}");
            (None, None)
        }
        Err(err) => return Err(err),
    };

    let n = ps.len();
    let mut lp = ps.pricing_lp(m, vec![Rational::zero(); n], Direction::Minimize, true);
    lp.add_var(rat(1, 1), Bounds::free());
    let add_cut = |lp: &mut robusthedge_lp::LinearProgram<Rational>, tau: &StoppingTime| {
        let mut coeffs: Vec<Rational> = stopped_payoff(m, &ps, tau).into_iter().map(|x| -x).collect();
        coeffs.push(rat(1, 1));
        lp.add_row(coeffs, Sense::Ge, Rational::zero());
    };
    let first = best_tau.clone().unwrap_or_else(|| StoppingTime::at_time(tree, 0));
    add_cut(&mut lp, &first);
    let mut generated = 1;
    loop {
        let out = solve_lp(&lp, arith)?;
        if !out.is_optimal() {
            return Err(CoreError::Arbitrage("no martingale measure prices the options at their quotes".into()));
        }
        let z = out.objective.clone();
        let probs = out.x[..n].to_vec();
        let (best, tau) = best_response(m, &ps, &probs);
        let improves = if arith == Arithmetic::Exact {
            best > z
        } else {
            (best.clone() - &z) > Rational::from_float(cfg.tol * (1.0 + z.abs().to_f64())).unwrap_or_default()
        };
        if !improves || generated > cfg.max_stopping_times as usize {
            let gap = sup_inf.as_ref().map(|s| z.clone() - s);
            return Ok(GapReport { sup_inf, inf_sup: z, gap, best_tau, inf_sup_measure: probs, generated });
        }
        add_cut(&mut lp, &tau);
        generated += 1;
    }
}

/// Optimal stopping against a fixed path measure: linear Snell recursion on
/// node masses.
fn best_response(market: &Market, ps: &PathSpace, probs: &[Rational]) -> (Rational, StoppingTime) {
    let tree = &market.tree;
    let mass: Vec<Rational> =
        (0..tree.len()).map(|v| ps.through[v].iter().fold(Rational::zero(), |a, &k| a + &probs[k])).collect();
    let mut val = vec![Rational::zero(); tree.len()];
    let mut flags = vec![true; tree.len()];
    for t in (0..=tree.horizon).rev() {
        for &v in &tree.levels[t] {
            let stop = market.payoff.values[v].clone() * &mass[v];
            if tree.is_terminal(v) {
                val[v] = stop;
                continue;
            }
            let cont = tree.children(v).iter().fold(Rational::zero(), |a, &c| a + &val[c]);
            flags[v] = stop >= cont;
            val[v] = if flags[v] { stop } else { cont };
        }
    }
    (val[MarketTree::ROOT].clone(), StoppingTime::first_hit(tree, &flags))
}

/// Convenience used by the CLI and tests.
pub fn price(market: &Market, side: Side, cfg: &Config, arith: Arithmetic) -> Result<PriceReport, CoreError> {
    match side {
        Side::Sub => sub_hedge_price(market, cfg, arith),
        Side::Super => super_hedge_price(market, cfg, arith),
        Side::Hat => hat_price(market, cfg, arith),
        Side::Tilde => tilde_price(market, cfg, arith),
    }
}

