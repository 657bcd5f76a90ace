//! Dyadic grid markets, marginal discretization and convergence sweeps.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::Serialize;

use robusthedge_lp::{solve_lp, Arithmetic, Direction, LinearProgram, One, Rational, Scalar, Sense, Signed, Zero};

use crate::arbitrage::check_na;
use crate::market::{AmericanPayoff, Layout, Market, MarketTree, PayoffRule, StaticOption, Vanilla};
use crate::pricing::{sub_hedge_price, super_hedge_price};
use crate::{format_rational, rat, Config, CoreError};

fn pow2(n: u32) -> Rational {
    Rational::from_integer(robusthedge_lp::BigInt::from(1u8) << n as usize)
}

fn is_dyadic(x: &Rational) -> bool {
    let d = x.denom();
    d.magnitude().count_ones() == 1
}

fn to_i64(x: &Rational) -> i64 {
    x.to_integer().try_into().expect("grid index fits in i64")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSpec {
    /// `[a_t, b_t]` for dates `1..=T`.
    pub bounds: Vec<(Rational, Rational)>,
    pub s0: Rational,
}

impl GridSpec {
    pub fn new(bounds: Vec<(Rational, Rational)>, s0: Rational) -> Result<Self, CoreError> {
        if bounds.is_empty() {
            return Err(CoreError::Schema("grid needs at least one date".into()));
        }
        for (t, (a, b)) in bounds.iter().enumerate() {
            for x in [a, b] {
                if !is_dyadic(x) {
                    return Err(CoreError::Schema(format!(
                        "grid bound {} at date {} is not dyadic",
                        format_rational(x),
                        t + 1
                    )));
                }
            }
            if a.is_negative() {
                return Err(CoreError::Schema(format!("negative lower bound at date {}", t + 1)));
            }
        }
        if !is_dyadic(&s0) {
            return Err(CoreError::Schema("s0 must be dyadic".into()));
        }
        let (a1, b1) = &bounds[0];
        if !(*a1 < s0 && s0 < *b1) {
            return Err(CoreError::Schema("date-1 bounds must enclose s0 strictly".into()));
        }
        for t in 1..bounds.len() {
            if !(bounds[t].0 < bounds[t - 1].0 && bounds[t - 1].1 < bounds[t].1) {
                return Err(CoreError::Schema(format!("bounds at date {} do not widen strictly", t + 1)));
            }
        }
        Ok(GridSpec { bounds, s0 })
    }

    pub fn horizon(&self) -> usize {
        self.bounds.len()
    }

    /// Level-`n` grid points of `[a_t, b_t]`; `{s0}` at date 0.
    pub fn grid_points(&self, t: usize, n: u32) -> Vec<Rational> {
        if t == 0 {
            return vec![self.s0.clone()];
        }
        let (a, b) = &self.bounds[t - 1];
        let scale = pow2(n);
        let lo = to_i64(&(a.clone() * &scale).ceil());
        let hi = to_i64(&(b.clone() * &scale).floor());
        (lo..=hi).map(|k| Rational::from_integer(k.into()) / &scale).collect()
    }

    pub fn path_count(&self, n: u32) -> u128 {
        (1..=self.horizon()).fold(1u128, |acc, t| acc.saturating_mul(self.grid_points(t, n).len() as u128))
    }
}

/// Grid market at level `n`. A lattice is built for [`Layout::Lattice`];
/// the full product tree otherwise, refused above `budget` nodes.
pub fn build_grid_market(
    spec: &GridSpec,
    n: u32,
    rule: &PayoffRule,
    vanillas: &[(Vanilla, Rational)],
    layout: Layout,
    budget: usize,
) -> Result<Market, CoreError> {
    let levels: Vec<Vec<Rational>> = (0..=spec.horizon()).map(|t| spec.grid_points(t, n)).collect();
    if let Some(t) = levels.iter().position(|l| l.is_empty()) {
        return Err(CoreError::Invalid(format!("no level-{n} grid point inside the date-{t} bounds")));
    }
    let tree = match layout {
        Layout::Lattice => MarketTree::lattice(levels)?,
        Layout::Tree => {
            let mut count: u128 = 0;
            let mut width: u128 = 1;
            for l in &levels {
                width = width.saturating_mul(l.len() as u128);
                count = count.saturating_add(width);
            }
            if count > budget as u128 {
                return Err(CoreError::Budget(format!(
                    "the level-{n} product tree has {count} nodes (budget {budget}); use the recombining lattice layout"
                )));
            }
            let mut records = vec![("r".to_string(), 0usize, None, levels[0][0].clone())];
            let mut frontier = vec!["r".to_string()];
            for (t, l) in levels.iter().enumerate().skip(1) {
                let mut next = Vec::with_capacity(frontier.len() * l.len());
                for parent in &frontier {
                    for (k, s) in l.iter().enumerate() {
                        let label = format!("{parent}.{k}");
                        records.push((label.clone(), t, Some(parent.clone()), s.clone()));
                        next.push(label);
                    }
                }
                frontier = next;
            }
            MarketTree::from_records(spec.horizon(), records)?
        }
    };
    let payoff = AmericanPayoff::from_rule(&tree, rule.clone())?;
    let options = vanillas
        .iter()
        .map(|(v, p)| StaticOption::from_vanilla(&tree, v.clone(), p.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Market::new(tree, payoff, options))
}

/// Floors every coordinate after the first to the level-`n` grid.
pub fn round_path(path: &[Rational], n: u32) -> Vec<Rational> {
    let scale = pow2(n);
    path.iter()
        .enumerate()
        .map(|(t, s)| if t == 0 { s.clone() } else { (s.clone() * &scale).floor() / &scale })
        .collect()
}

/// A probability measure on `[0, inf)` made of atoms and uniform pieces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Marginal {
    pub atoms: Vec<(Rational, Rational)>,
    /// `(left, right, mass)`: `mass` spread uniformly over `[left, right]`.
    pub uniform: Vec<(Rational, Rational, Rational)>,
}

impl Marginal {
    pub fn new(
        atoms: Vec<(Rational, Rational)>,
        uniform: Vec<(Rational, Rational, Rational)>,
    ) -> Result<Self, CoreError> {
        let mut total = Rational::zero();
        for (x, w) in &atoms {
            if w.is_negative() {
                return Err(CoreError::Invalid(format!("negative weight on atom {}", format_rational(x))));
            }
            if x.is_negative() {
                return Err(CoreError::Invalid("marginal support must lie in [0, inf)".into()));
            }
            total += w;
        }
        for (l, r, w) in &uniform {
            if w.is_negative() {
                return Err(CoreError::Invalid("negative weight on a uniform piece".into()));
            }
            if l.is_negative() || l >= r {
                return Err(CoreError::Invalid("uniform piece needs 0 <= left < right".into()));
            }
            total += w;
        }
        if !total.is_one() {
            return Err(CoreError::Invalid(format!("marginal mass is {}, not 1", format_rational(&total))));
        }
        Ok(Marginal { atoms, uniform })
    }

    pub fn dirac(x: Rational) -> Self {
        Marginal { atoms: vec![(x, Rational::one())], uniform: Vec::new() }
    }

    pub fn from_grid(m: &GridMeasure) -> Self {
        Marginal { atoms: m.weights.iter().map(|(&k, w)| (m.point(k), w.clone())).collect(), uniform: Vec::new() }
    }

    /// Exact integral of a function that is linear between consecutive
    /// `kinks`.
    pub fn integrate_piecewise_linear(&self, f: impl Fn(&Rational) -> Rational, kinks: &[Rational]) -> Rational {
        let mut acc = Rational::zero();
        for (x, w) in &self.atoms {
            acc += f(x) * w;
        }
        let two = rat(2, 1);
        for (l, r, w) in &self.uniform {
            let mut cuts = vec![l.clone()];
            cuts.extend(kinks.iter().filter(|k| *k > l && *k < r).cloned());
            cuts.push(r.clone());
            cuts.sort();
            let density = w.clone() / (r.clone() - l);
            for seg in cuts.windows(2) {
                acc += (f(&seg[0]) + f(&seg[1])) / &two * (seg[1].clone() - &seg[0]) * &density;
            }
        }
        acc
    }

    pub fn mean(&self) -> Rational {
        self.integrate_piecewise_linear(|x| x.clone(), &[])
    }

    pub fn expect_vanilla(&self, v: &Vanilla) -> Rational {
        self.integrate_piecewise_linear(|x| v.eval(x), std::slice::from_ref(&v.strike))
    }
}

/// Finite measure on the level-`level` grid; key `k` is the point `k / 2^level`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GridMeasure {
    pub level: u32,
    #[serde(serialize_with = "ser_weights")]
    pub weights: BTreeMap<i64, Rational>,
}

fn ser_weights<S: serde::Serializer>(w: &BTreeMap<i64, Rational>, s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut m = s.serialize_map(Some(w.len()))?;
    for (k, v) in w {
        m.serialize_entry(k, &format_rational(v))?;
    }
    m.end()
}

impl GridMeasure {
    pub fn point(&self, k: i64) -> Rational {
        Rational::from_integer(k.into()) / pow2(self.level)
    }

    pub fn mass(&self) -> Rational {
        self.weights.values().fold(Rational::zero(), |a, w| a + w)
    }

    pub fn expect(&self, f: impl Fn(&Rational) -> Rational) -> Rational {
        self.weights.iter().fold(Rational::zero(), |a, (&k, w)| a + f(&self.point(k)) * w)
    }

    pub fn mean(&self) -> Rational {
        self.expect(|x| x.clone())
    }

    pub fn call(&self, strike: &Rational) -> Rational {
        self.expect(|x| crate::market::positive_part(x.clone() - strike))
    }

    pub fn support(&self) -> Vec<Rational> {
        self.weights.keys().map(|&k| self.point(k)).collect()
    }
}

/// Hat-function discretization: the mass of `mu` near a grid point is
/// split between the two neighbouring level-`n` points, linearly in the
/// distance.
pub fn discretize_marginal(mu: &Marginal, n: u32) -> Result<GridMeasure, CoreError> {
    let scale = pow2(n);
    let mut weights: BTreeMap<i64, Rational> = BTreeMap::new();
    let mut add = |k: i64, w: Rational| {
        if !w.is_zero() {
            *weights.entry(k).or_insert_with(Rational::zero) += w;
        }
    };
    for (x, w) in &mu.atoms {
        if w.is_negative() {
            return Err(CoreError::Invalid("negative weight in marginal".into()));
        }
        let y = x.clone() * &scale;
        let k = y.floor();
        let frac = y - &k;
        let k = to_i64(&k);
        add(k, (Rational::one() - &frac) * w);
        add(k + 1, frac * w);
    }
    let two = rat(2, 1);
    for (l, r, w) in &mu.uniform {
        if w.is_negative() {
            return Err(CoreError::Invalid("negative weight in marginal".into()));
        }
        let density = w.clone() / (r.clone() - l);
        let (ly, ry) = (l.clone() * &scale, r.clone() * &scale);
        let first = to_i64(&ly.floor());
        let last = to_i64(&ry.ceil());
        for j in first..last {
            let jr = Rational::from_integer(j.into());
            let u = std::cmp::max(ly.clone(), jr.clone());
            let v = std::cmp::min(ry.clone(), jr.clone() + Rational::one());
            if u >= v {
                continue;
            }
            // in scaled units: mass = density * (v - u) / 2^n; right share is the mean offset
            let mass = density.clone() * (v.clone() - &u) / &scale;
            let right = ((u + v) / &two - &jr) * &mass;
            add(j, mass - &right);
            add(j + 1, right);
        }
    }
    Ok(GridMeasure { level: n, weights })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConvexOrderViolation {
    /// Call price at `strike` drops from measure `index - 1` to `index`.
    Call { index: usize, strike: String },
    Mean { index: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvexOrderReport {
    pub ok: bool,
    pub violations: Vec<ConvexOrderViolation>,
}

/// Checks `nu_0 <=_c nu_1 <=_c ...` through equal means and call prices
/// at every grid strike.
pub fn check_convex_order(measures: &[GridMeasure]) -> Result<ConvexOrderReport, CoreError> {
    let Some(first) = measures.first() else {
        return Ok(ConvexOrderReport { ok: true, violations: Vec::new() });
    };
    if measures.iter().any(|m| m.level != first.level) {
        return Err(CoreError::Invalid("convex-order check needs measures on one grid level".into()));
    }
    let lo = measures.iter().filter_map(|m| m.weights.keys().next().copied()).min().unwrap_or(0);
    let hi = measures.iter().filter_map(|m| m.weights.keys().next_back().copied()).max().unwrap_or(0);
    let mut violations = Vec::new();
    for i in 1..measures.len() {
        if measures[i].mean() != measures[i - 1].mean() {
            violations.push(ConvexOrderViolation::Mean { index: i });
        }
        for k in lo..=hi {
            let strike = first.point(k);
            if measures[i].call(&strike) < measures[i - 1].call(&strike) {
                violations.push(ConvexOrderViolation::Call { index: i, strike: format_rational(&strike) });
            }
        }
    }
    Ok(ConvexOrderReport { ok: violations.is_empty(), violations })
}

/// Martingale coupling of discretized marginals, as path probabilities.
#[derive(Debug, Clone)]
pub struct Coupling {
    pub paths: Vec<Vec<Rational>>,
    pub probs: Vec<Rational>,
}

#[derive(Debug, Clone)]
pub struct CnResult {
    pub c: Vec<Rational>,
    /// `mu^n_t` for dates `1..=T`.
    pub discretized: Vec<GridMeasure>,
    pub convex_order: ConvexOrderReport,
    /// `None` when the coupling LP is over budget.
    pub witness: Option<Coupling>,
}

/// Quote corrections `c_i = E_{mu^n}[g_i] - E_mu[g_i]` at the option
/// maturities.
pub fn construct_cn(
    marginals: &[Marginal],
    s0: &Rational,
    vanillas: &[Vanilla],
    n: u32,
    cfg: &Config,
) -> Result<CnResult, CoreError> {
    let mut discretized = vec![discretize_marginal(&Marginal::dirac(s0.clone()), n)?];
    for m in marginals {
        discretized.push(discretize_marginal(m, n)?);
    }
    let convex_order = check_convex_order(&discretized)?;
    if !convex_order.ok {
        return Err(CoreError::Invalid(format!(
            "discretized marginals are not in convex order: {:?}",
            convex_order.violations
        )));
    }
    let mut c = Vec::with_capacity(vanillas.len());
    for v in vanillas {
        if v.maturity == 0 {
            c.push(Rational::zero());
            continue;
        }
        let mu = marginals.get(v.maturity - 1).ok_or_else(|| {
            CoreError::Invalid(format!("no reference marginal at maturity {}", v.maturity))
        })?;
        c.push(discretized[v.maturity].expect(|x| v.eval(x)) - mu.expect_vanilla(v));
    }
    let witness = coupling(&discretized, cfg)?;
    discretized.remove(0);
    Ok(CnResult { c, discretized, convex_order, witness })
}

fn coupling(measures: &[GridMeasure], cfg: &Config) -> Result<Option<Coupling>, CoreError> {
    let supports: Vec<Vec<Rational>> = measures.iter().map(|m| m.support()).collect();
    let count = supports.iter().fold(1u128, |a, s| a.saturating_mul(s.len() as u128));
    if count > cfg.max_lp_vars as u128 {
        return Ok(None);
    }
    let mut paths: Vec<Vec<usize>> = vec![Vec::new()];
    for s in &supports {
        paths = paths.iter().flat_map(|p| (0..s.len()).map(move |k| [p.as_slice(), &[k]].concat())).collect();
    }
    let mut lp = LinearProgram::<Rational>::new(Direction::Minimize, paths.len());
    for (t, m) in measures.iter().enumerate().skip(1) {
        for (k, (_, w)) in m.weights.iter().enumerate() {
            let row: Vec<(usize, Rational)> =
                paths.iter().enumerate().filter(|(_, p)| p[t] == k).map(|(j, _)| (j, Rational::one())).collect();
            lp.add_sparse_row(&row, Sense::Eq, w.clone());
        }
        // martingale increments, one row per prefix
        let mut prefixes: BTreeMap<&[usize], Vec<(usize, Rational)>> = BTreeMap::new();
        for (j, p) in paths.iter().enumerate() {
            let d = supports[t][p[t]].clone() - &supports[t - 1][p[t - 1]];
            if !d.is_zero() {
                prefixes.entry(&p[..t]).or_default().push((j, d));
            }
        }
        for row in prefixes.values() {
            lp.add_sparse_row(row, Sense::Eq, Rational::zero());
        }
    }
    let out = solve_lp(&lp, Arithmetic::Exact)?;
    if !out.is_optimal() {
        return Err(CoreError::Invalid("no martingale coupling of the discretized marginals".into()));
    }
    Ok(Some(Coupling {
        paths: paths.iter().map(|p| p.iter().enumerate().map(|(t, &k)| supports[t][k].clone()).collect()).collect(),
        probs: out.x,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// The last level of the range stands in for the continuum price.
    Finest,
}

#[derive(Debug, Clone)]
pub enum Quotes {
    /// Quoted prices as given, at every level.
    Fixed,
    /// Quotes shifted by `c^n` from these reference marginals.
    Marginals(Vec<Marginal>),
}

#[derive(Debug, Clone)]
pub struct ConvergenceSetup {
    pub spec: GridSpec,
    pub rule: PayoffRule,
    pub vanillas: Vec<(Vanilla, Rational)>,
    pub quotes: Quotes,
    pub layout: Layout,
    /// Analytic `(sub, super)` reference; the finest level otherwise.
    pub analytic: Option<(Option<f64>, Option<f64>)>,
    pub sub: bool,
    pub sup: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ConvergenceRow {
    pub n: u32,
    pub price_sub: Option<f64>,
    pub price_super: Option<f64>,
    pub err_sub: Option<f64>,
    pub err_super: Option<f64>,
    pub cn_max: Option<f64>,
    pub h_sub: Option<f64>,
    pub h_super: Option<f64>,
    pub error: Option<String>,
}

impl ConvergenceRow {
    /// Larger of the two side errors.
    pub fn err(&self) -> Option<f64> {
        match (self.err_sub, self.err_super) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
    pub n_used: Vec<u32>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub reference_n: Option<u32>,
    pub reference_sub: Option<f64>,
    pub reference_super: Option<f64>,
    pub slope_sub: Option<SlopeFit>,
    pub slope_super: Option<SlopeFit>,
}

fn log2(x: Option<f64>) -> Option<f64> {
    x.filter(|e| *e > 0.0).map(f64::log2)
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> Result<String, CoreError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CoreError::Invalid(format!("csv: {e}"));
        w.write_record([
            "n", "price_sub", "price_super", "err", "log2_err", "err_sub", "err_super", "log2_err_sub",
            "log2_err_super", "cn_max", "error",
        ])
        .map_err(io)?;
        let f = |x: Option<f64>| x.map(|v| format!("{v:.12e}")).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                f(r.price_sub),
                f(r.price_super),
                f(r.err()),
                f(log2(r.err())),
                f(r.err_sub),
                f(r.err_super),
                f(log2(r.err_sub)),
                f(log2(r.err_super)),
                f(r.cn_max),
                r.error.clone().unwrap_or_default(),
            ])
            .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| CoreError::Invalid(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Least-squares line through `(n, log2 err)`, skipping zero errors.
pub fn fit_slope(points: &[(u32, f64)]) -> Option<SlopeFit> {
    let pts: Vec<(u32, f64)> = points.iter().filter(|p| p.1 > 0.0).map(|&(n, e)| (n, e.log2())).collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0 as f64).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 as f64 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 as f64 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts.iter().map(|p| (p.1 - intercept - slope * p.0 as f64).powi(2)).sum::<f64>() / m).sqrt();
    Some(SlopeFit { slope, intercept, residual, n_used: pts.iter().map(|p| p.0).collect() })
}

/// Market of level `n` with quotes adjusted per `setup.quotes`; returns the
/// corrections applied.
pub fn level_market(setup: &ConvergenceSetup, n: u32, cfg: &Config) -> Result<(Market, Vec<Rational>), CoreError> {
    let c = match &setup.quotes {
        Quotes::Fixed => vec![Rational::zero(); setup.vanillas.len()],
        Quotes::Marginals(ms) => {
            let mut small = cfg.clone();
            small.max_lp_vars = 0;
            let vs: Vec<Vanilla> = setup.vanillas.iter().map(|v| v.0.clone()).collect();
            construct_cn(ms, &setup.spec.s0, &vs, n, &small)?.c
        }
    };
    let quoted: Vec<(Vanilla, Rational)> =
        setup.vanillas.iter().zip(&c).map(|((v, p), ci)| (v.clone(), p.clone() + ci)).collect();
    let market = build_grid_market(&setup.spec, n, &setup.rule, &quoted, setup.layout, cfg.path_budget.max(100_000))?;
    Ok((market, c))
}

struct LevelPrices {
    sub: Option<(f64, f64)>,
    sup: Option<(f64, f64)>,
    cn_max: f64,
}

fn price_level(setup: &ConvergenceSetup, n: u32, cfg: &Config, arith: Arithmetic) -> Result<LevelPrices, CoreError> {
    let (market, c) = level_market(setup, n, cfg)?;
    let hmax = |h: &[Rational]| h.iter().map(|x| x.abs().to_f64()).fold(0.0, f64::max);
    let sub = if setup.sub {
        let r = sub_hedge_price(&market, cfg, arith)?;
        Some((r.price.to_f64(), hmax(&r.h_star)))
    } else {
        None
    };
    let sup = if setup.sup {
        let r = super_hedge_price(&market, cfg, arith)?;
        Some((r.price.to_f64(), hmax(&r.h_star)))
    } else {
        None
    };
    Ok(LevelPrices { sub, sup, cn_max: hmax(&c) })
}

/// Prices every level of `n_range` concurrently and measures the errors
/// against the finest level (or the analytic reference).
pub fn convergence_experiment(
    setup: &ConvergenceSetup,
    n_range: RangeInclusive<u32>,
    cfg: &Config,
    arith: Arithmetic,
) -> Result<ConvergenceTable, CoreError> {
    let levels: Vec<u32> = n_range.clone().collect();
    if levels.is_empty() {
        return Err(CoreError::Invalid("empty level range".into()));
    }
    let results: Vec<(u32, Result<LevelPrices, CoreError>)> =
        levels.par_iter().map(|&n| (n, price_level(setup, n, cfg, arith))).collect();
    let finest = *n_range.end();
    let (ref_n, ref_sub, ref_sup) = match setup.analytic {
        Some((s, p)) => (None, s, p),
        None => match &results.last().unwrap().1 {
            Ok(p) => (Some(finest), p.sub.map(|x| x.0), p.sup.map(|x| x.0)),
            Err(e) => return Err(CoreError::Invalid(format!("reference level {finest} failed: {e}"))),
        },
    };
    let mut rows = Vec::new();
    for (n, r) in results {
        let row = match r {
            Ok(p) => ConvergenceRow {
                n,
                price_sub: p.sub.map(|x| x.0),
                price_super: p.sup.map(|x| x.0),
                err_sub: p.sub.zip(ref_sub).map(|(x, r)| (x.0 - r).abs()),
                err_super: p.sup.zip(ref_sup).map(|(x, r)| (x.0 - r).abs()),
                cn_max: Some(p.cn_max),
                h_sub: p.sub.map(|x| x.1),
                h_super: p.sup.map(|x| x.1),
                error: None,
            },
            Err(e) => ConvergenceRow { n, error: Some(e.to_string()), ..Default::default() },
        };
        rows.push(row);
    }
    let fit = |get: fn(&ConvergenceRow) -> Option<f64>| {
        let pts: Vec<(u32, f64)> =
            rows.iter().filter(|r| Some(r.n) != ref_n).filter_map(|r| get(r).map(|e| (r.n, e))).collect();
        fit_slope(&pts)
    };
    let slope_sub = fit(|r| r.err_sub);
    let slope_super = fit(|r| r.err_super);
    Ok(ConvergenceTable { rows, reference_n: ref_n, reference_sub: ref_sub, reference_super: ref_sup, slope_sub, slope_super })
}

/// Smallest `n` in `range` from which `check_na` holds at every later level
/// of the range.
pub fn na_threshold(setup: &ConvergenceSetup, range: RangeInclusive<u32>, cfg: &Config) -> Result<Option<u32>, CoreError> {
    let levels: Vec<u32> = range.collect();
    let holds: Vec<bool> = levels
        .par_iter()
        .map(|&n| {
            let (m, _) = level_market(setup, n, cfg)?;
            Ok(check_na(&m, cfg)?.holds)
        })
        .collect::<Result<_, CoreError>>()?;
    let mut first = None;
    for (i, &ok) in holds.iter().enumerate().rev() {
        if !ok {
            break;
        }
        first = Some(levels[i]);
    }
    Ok(first)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{PayoffKind, VanillaKind};

    fn spec2() -> GridSpec {
        GridSpec::new(vec![(rat(1, 2), rat(3, 2)), (rat(1, 4), rat(7, 4))], rat(1, 1)).unwrap()
    }

    #[test]
    fn grid_counts() {
        let s1 = GridSpec::new(vec![(rat(1, 2), rat(3, 2))], rat(1, 1)).unwrap();
        assert_eq!(s1.grid_points(1, 1), vec![rat(1, 2), rat(1, 1), rat(3, 2)]);
        assert_eq!(s1.grid_points(1, 2).len(), 5);
        let s = spec2();
        // 1/4 and 7/4 join the grid only from level 2
        assert_eq!(s.path_count(1), 9);
        assert_eq!(s.path_count(2), 35);
        let rule = PayoffRule { kind: PayoffKind::Put { strike: rat(1, 1) }, weights: None };
        let tree = build_grid_market(&s, 2, &rule, &[], Layout::Tree, 1000).unwrap();
        assert_eq!(tree.tree.leaves().len(), 35);
        let lat = build_grid_market(&s, 2, &rule, &[], Layout::Lattice, 1000).unwrap();
        assert_eq!(lat.tree.levels[2].len(), 7);
        assert!(matches!(build_grid_market(&s, 2, &rule, &[], Layout::Tree, 10), Err(CoreError::Budget(_))));
    }

    #[test]
    fn rejects_non_dyadic_bounds() {
        assert!(GridSpec::new(vec![(rat(1, 3), rat(3, 2))], rat(1, 1)).is_err());
        assert!(GridSpec::new(vec![(rat(1, 2), rat(3, 2)), (rat(1, 2), rat(2, 1))], rat(1, 1)).is_err());
    }

    #[test]
    fn rounding() {
        let p = vec![rat(1, 1), rat(13, 10), rat(7, 10)];
        assert_eq!(round_path(&p, 1), vec![rat(1, 1), rat(1, 1), rat(1, 2)]);
        assert_eq!(round_path(&p, 3), vec![rat(1, 1), rat(5, 4), rat(5, 8)]);
        let g = vec![rat(1, 1), rat(5, 4), rat(5, 8)];
        assert_eq!(round_path(&g, 3), g);
    }

    #[test]
    fn hat_discretization() {
        let u = Marginal::new(vec![], vec![(rat(0, 1), rat(1, 1), rat(1, 1))]).unwrap();
        let d = discretize_marginal(&u, 0).unwrap();
        assert_eq!(d.weights.get(&0), Some(&rat(1, 2)));
        assert_eq!(d.weights.get(&1), Some(&rat(1, 2)));
        let a = Marginal::dirac(rat(3, 4));
        let d = discretize_marginal(&a, 2).unwrap();
        assert_eq!(d.weights.len(), 1);
        assert_eq!(d.weights.get(&3), Some(&rat(1, 1)));
        let m = Marginal::new(vec![(rat(1, 3), rat(1, 2))], vec![(rat(1, 5), rat(9, 7), rat(1, 2))]).unwrap();
        for n in 0..5 {
            let d = discretize_marginal(&m, n).unwrap();
            assert_eq!(d.mass(), rat(1, 1));
            assert_eq!(d.mean(), m.mean());
        }
    }

    #[test]
    fn cn_examples() {
        let call = Vanilla { maturity: 1, strike: rat(1, 1), kind: VanillaKind::Call };
        let cfg = Config::default();
        let two = Marginal::new(vec![(rat(1, 2), rat(1, 2)), (rat(3, 2), rat(1, 2))], vec![]).unwrap();
        let r = construct_cn(&[two], &rat(1, 1), std::slice::from_ref(&call), 1, &cfg).unwrap();
        assert_eq!(r.c, vec![rat(0, 1)]);
        assert!(r.witness.is_some());
        let u = Marginal::new(vec![], vec![(rat(0, 1), rat(2, 1), rat(1, 1))]).unwrap();
        let d = discretize_marginal(&u, 0).unwrap();
        assert_eq!(d.weights.values().cloned().collect::<Vec<_>>(), vec![rat(1, 4), rat(1, 2), rat(1, 4)]);
        let r = construct_cn(&[u], &rat(1, 1), &[call], 0, &cfg).unwrap();
        assert_eq!(r.c, vec![rat(0, 1)]);
    }

    #[test]
    fn convex_order_detects_reversal() {
        let a = discretize_marginal(&Marginal::new(vec![], vec![(rat(3, 4), rat(5, 4), rat(1, 1))]).unwrap(), 3).unwrap();
        let b = discretize_marginal(&Marginal::new(vec![], vec![(rat(1, 2), rat(3, 2), rat(1, 1))]).unwrap(), 3).unwrap();
        assert!(check_convex_order(&[a.clone(), b.clone()]).unwrap().ok);
        assert!(!check_convex_order(&[b.clone(), a.clone()]).unwrap().ok);
        assert!(check_convex_order(&[a.clone(), a]).unwrap().ok);
    }

    #[test]
    fn slope_of_exact_halving() {
        let pts: Vec<(u32, f64)> = (4..10).map(|n| (n, 3.0 * 0.5f64.powi(n as i32))).collect();
        let f = fit_slope(&pts).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12);
        assert!(f.residual < 1e-12);
    }
}
