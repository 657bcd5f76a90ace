//! Optimal stopping under upper and lower expectations over one-step
//! martingale polytopes.
//!
//! Static option positions enter as an addend `sum_i w_i (g_i - c_i)` paid at
//! each option's maturity. `W` is the (upper or lower) value of the addend
//! alone; stopping at `v` is worth `Phi_v + W_v`, and the addend paid at `v`
//! itself is booked whether or not the holder stops there.

use std::cmp::Ordering;

use robusthedge_lp::Scalar;

use crate::hull::Hull;
pub use crate::hull::StepChoice;
use crate::market::{MarketTree, Numeric, StoppingTime};
use crate::CoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// `sup_tau sup_Q`
    SupSup,
    /// `sup_tau inf_Q`
    SupInf,
    /// `inf_tau sup_Q`
    InfSup,
}

impl Mode {
    pub fn upper(self) -> bool {
        !matches!(self, Mode::SupInf)
    }

    pub fn maximizes(self) -> bool {
        !matches!(self, Mode::InfSup)
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sup_sup" => Ok(Mode::SupSup),
            "sup_inf" => Ok(Mode::SupInf),
            "inf_sup" => Ok(Mode::InfSup),
            other => Err(format!("unknown mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Rule<'a> {
    Snell(Mode),
    Frozen { stop: &'a [bool], upper: bool },
}

#[derive(Debug, Clone)]
pub struct SnellResult<S> {
    pub mode: Option<Mode>,
    pub upper: bool,
    /// Envelope at every node.
    pub values: Vec<S>,
    /// Value of the option addend alone, including the part paid at the node.
    pub w: Vec<S>,
    /// `Phi_v + W_v` before the addend paid at `v`.
    pub stop_value: Vec<S>,
    /// One-step expectation of the children's envelope; `None` at leaves.
    pub cont_value: Vec<Option<S>>,
    pub injection: Vec<S>,
    /// Node-wise stop decision (stopping preferred on ties).
    pub stop_flags: Vec<bool>,
    pub tau_star: StoppingTime,
    pub value_choice: Vec<Option<StepChoice<S>>>,
    pub w_choice: Vec<Option<StepChoice<S>>>,
    /// Derivatives of `values` and `w` with respect to the addend weights.
    pub grad: Vec<Vec<S>>,
    pub w_grad: Vec<Vec<S>>,
    pub weights: Vec<S>,
}

impl<S: Scalar> SnellResult<S> {
    pub fn root(&self) -> &S {
        &self.values[MarketTree::ROOT]
    }

    pub fn root_grad(&self) -> &[S] {
        &self.grad[MarketTree::ROOT]
    }
}

fn node_label(tree: &MarketTree, v: usize) -> String {
    tree.nodes[v].label.clone()
}

fn child_prices<S: Scalar>(num: &Numeric<S>, v: usize) -> Vec<S> {
    num.tree.children(v).iter().map(|&c| num.prices[c].clone()).collect()
}

fn step<S: Scalar>(num: &Numeric<S>, v: usize, child_values: &[S], upper: bool, tol: f64) -> Result<S, CoreError> {
    let ch = num.tree.children(v);
    if ch.is_empty() {
        return Err(CoreError::node(&node_label(num.tree, v), "terminal node has no one-step expectation"));
    }
    if child_values.len() != ch.len() {
        return Err(CoreError::node(
            &node_label(num.tree, v),
            format!("{} child values for {} children", child_values.len(), ch.len()),
        ));
    }
    let hull = Hull::build(&child_prices(num, v), child_values, upper, tol);
    hull.eval(&num.prices[v], tol)
        .map(|(value, _)| value)
        .ok_or_else(|| CoreError::EmptyPolytope(node_label(num.tree, v)))
}

/// Largest expectation of `child_values` (ordered as `tree.children(v)`)
/// over the node's one-step martingale polytope.
pub fn upper_step<S: Scalar>(num: &Numeric<S>, v: usize, child_values: &[S], tol: f64) -> Result<S, CoreError> {
    step(num, v, child_values, true, tol)
}

/// Smallest expectation over the one-step martingale polytope.
pub fn lower_step<S: Scalar>(num: &Numeric<S>, v: usize, child_values: &[S], tol: f64) -> Result<S, CoreError> {
    step(num, v, child_values, false, tol)
}

/// Backward induction for the given mode. `weights` scales the option
/// addend (empty means no options).
pub fn snell<S: Scalar>(
    num: &Numeric<S>,
    phi: &[S],
    mode: Mode,
    weights: &[S],
    tol: f64,
) -> Result<SnellResult<S>, CoreError> {
    recurse(num, phi, Rule::Snell(mode), weights, tol)
}

/// Value of stopping at `tau` under the upper (or lower) expectation.
pub fn evaluate_stopping<S: Scalar>(
    num: &Numeric<S>,
    phi: &[S],
    tau: &StoppingTime,
    upper: bool,
    weights: &[S],
    tol: f64,
) -> Result<SnellResult<S>, CoreError> {
    recurse(num, phi, Rule::Frozen { stop: &tau.region, upper }, weights, tol)
}

/// Earliest nodes where the stop value attains the envelope.
pub fn extract_optimal_stop<S: Scalar>(result: &SnellResult<S>, tree: &MarketTree, tol: f64) -> StoppingTime {
    let flags: Vec<bool> = (0..tree.len())
        .map(|v| {
            let stop = result.stop_value[v].clone() + &result.injection[v];
            stop.cmp_tol(&result.values[v], tol) == Ordering::Equal
        })
        .collect();
    StoppingTime::first_hit(tree, &flags)
}

pub(crate) fn recurse<S: Scalar>(
    num: &Numeric<S>,
    phi: &[S],
    rule: Rule<'_>,
    weights: &[S],
    tol: f64,
) -> Result<SnellResult<S>, CoreError> {
    let tree = num.tree;
    let n = tree.len();
    let e = weights.len();
    let (mode, upper) = match rule {
        Rule::Snell(m) => (Some(m), m.upper()),
        Rule::Frozen { upper, .. } => (None, upper),
    };
    let zero_grad = vec![S::zero(); e];
    let mut values = vec![S::zero(); n];
    let mut w = vec![S::zero(); n];
    let mut stop_value = vec![S::zero(); n];
    let mut cont_value: Vec<Option<S>> = vec![None; n];
    let mut injection = vec![S::zero(); n];
    let mut stop_flags = vec![true; n];
    let mut value_choice: Vec<Option<StepChoice<S>>> = vec![None; n];
    let mut w_choice: Vec<Option<StepChoice<S>>> = vec![None; n];
    let mut grad = vec![zero_grad.clone(); n];
    let mut w_grad = vec![zero_grad.clone(); n];

    let inj_grad = |v: usize| {
        let mut g = zero_grad.clone();
        for (i, x) in &num.claims[v] {
            if *i < e {
                g[*i] = g[*i].clone() + x;
            }
        }
        g
    };
    let mix = |grads: &[Vec<S>], ch: &[usize], c: &StepChoice<S>| -> Vec<S> {
        let (ga, gb) = (&grads[ch[c.a]], &grads[ch[c.b]]);
        ga.iter().zip(gb).map(|(x, y)| c.wa.clone() * x + c.wb.clone() * y).collect()
    };

    for &v in tree.leaves() {
        let inj = num.injection(v, weights);
        injection[v] = inj.clone();
        stop_value[v] = phi[v].clone();
        w[v] = inj.clone();
        values[v] = phi[v].clone() + &inj;
        if e > 0 {
            grad[v] = inj_grad(v);
            w_grad[v] = grad[v].clone();
        }
    }

    for t in (0..tree.horizon).rev() {
        let mut cached: Option<(usize, Hull<S>, Hull<S>)> = None;
        for &v in &tree.levels[t] {
            let g = tree.nodes[v].group.expect("non-terminal node without children");
            let ch = &tree.groups[g];
            if cached.as_ref().map(|c| c.0) != Some(g) {
                let xs: Vec<S> = ch.iter().map(|&c| num.prices[c].clone()).collect();
                let vy: Vec<S> = ch.iter().map(|&c| values[c].clone()).collect();
                let wy: Vec<S> = ch.iter().map(|&c| w[c].clone()).collect();
                cached = Some((g, Hull::build(&xs, &vy, upper, tol), Hull::build(&xs, &wy, upper, tol)));
            }
            let (_, vh, wh) = cached.as_ref().unwrap();
            let empty = || CoreError::EmptyPolytope(node_label(tree, v));
            let (cont, vc) = vh.eval(&num.prices[v], tol).ok_or_else(empty)?;
            let (wpre, wc) = wh.eval(&num.prices[v], tol).ok_or_else(empty)?;
            let inj = num.injection(v, weights);
            let stop_val = phi[v].clone() + &wpre;
            let stop = match rule {
                Rule::Snell(m) if m.maximizes() => stop_val.cmp_tol(&cont, tol) != Ordering::Less,
                Rule::Snell(_) => stop_val.cmp_tol(&cont, tol) != Ordering::Greater,
                Rule::Frozen { stop, .. } => stop[v],
            };
            values[v] = if stop { stop_val.clone() } else { cont.clone() } + &inj;
            w[v] = wpre + &inj;
            if e > 0 {
                let ig = inj_grad(v);
                let wg = mix(&w_grad, ch, &wc);
                let vg = if stop { wg.clone() } else { mix(&grad, ch, &vc) };
                w_grad[v] = wg.iter().zip(&ig).map(|(a, b)| a.clone() + b).collect();
                grad[v] = vg.iter().zip(&ig).map(|(a, b)| a.clone() + b).collect();
            }
            injection[v] = inj;
            stop_value[v] = stop_val;
            cont_value[v] = Some(cont);
            stop_flags[v] = stop;
            value_choice[v] = Some(vc);
            w_choice[v] = Some(wc);
        }
    }

    let tau_star = StoppingTime::first_hit(tree, &stop_flags);
    Ok(SnellResult {
        mode,
        upper,
        values,
        w,
        stop_value,
        cont_value,
        injection,
        stop_flags,
        tau_star,
        value_choice,
        w_choice,
        grad,
        w_grad,
        weights: weights.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// Envelope below the one-step expectation of its successors.
    NotSupermartingale,
    /// Envelope below the stop value.
    BelowPayoff,
}

#[derive(Debug, Clone)]
pub struct SupermartingaleCheck {
    pub ok: bool,
    pub violations: Vec<(usize, ViolationKind)>,
}

/// Checks that the envelope dominates the stop value everywhere and is a
/// supermartingale for the result's one-step expectation (after removing the
/// option addend paid at each node). Exact in exact mode.
pub fn verify_supermartingale<S: Scalar>(
    result: &SnellResult<S>,
    num: &Numeric<S>,
    tol: f64,
) -> Result<SupermartingaleCheck, CoreError> {
    let tree = num.tree;
    let mut violations = Vec::new();
    for v in 0..tree.len() {
        let stop = result.stop_value[v].clone() + &result.injection[v];
        if result.values[v].cmp_tol(&stop, tol) == Ordering::Less {
            violations.push((v, ViolationKind::BelowPayoff));
            continue;
        }
        if tree.is_terminal(v) {
            continue;
        }
        let cv: Vec<S> = tree.children(v).iter().map(|&c| result.values[c].clone()).collect();
        let next = step(num, v, &cv, result.upper, tol)?;
        let own = result.values[v].clone() - &result.injection[v];
        if own.cmp_tol(&next, tol) == Ordering::Less {
            violations.push((v, ViolationKind::NotSupermartingale));
        }
    }
    Ok(SupermartingaleCheck { ok: violations.is_empty(), violations })
}

/// Upper (or lower) expectation of the option addend alone, with the hull
/// slope at every node: `pre_v + slope_v (s_c - s_v)` dominates (or is
/// dominated by) `value_c` for every child `c`.
#[derive(Debug, Clone)]
pub struct European<S> {
    pub value: Vec<S>,
    pub pre: Vec<S>,
    pub slope: Vec<S>,
    pub choice: Vec<Option<StepChoice<S>>>,
    pub grad: Vec<Vec<S>>,
}

pub fn european<S: Scalar>(num: &Numeric<S>, weights: &[S], upper: bool, tol: f64) -> Result<European<S>, CoreError> {
    let tree = num.tree;
    let n = tree.len();
    let e = weights.len();
    let mut value = vec![S::zero(); n];
    let mut pre = vec![S::zero(); n];
    let mut slope = vec![S::zero(); n];
    let mut choice: Vec<Option<StepChoice<S>>> = vec![None; n];
    let mut grad = vec![vec![S::zero(); e]; n];
    let add_inj = |g: &mut Vec<S>, v: usize| {
        for (i, x) in &num.claims[v] {
            if *i < e {
                g[*i] = g[*i].clone() + x;
            }
        }
    };
    for t in (0..=tree.horizon).rev() {
        let mut cached: Option<(usize, Hull<S>)> = None;
        for &v in &tree.levels[t] {
            let mut g = vec![S::zero(); e];
            if let Some(grp) = tree.nodes[v].group {
                let ch = &tree.groups[grp];
                if cached.as_ref().map(|c| c.0) != Some(grp) {
                    let xs: Vec<S> = ch.iter().map(|&c| num.prices[c].clone()).collect();
                    let ys: Vec<S> = ch.iter().map(|&c| value[c].clone()).collect();
                    cached = Some((grp, Hull::build(&xs, &ys, upper, tol)));
                }
                let (val, c) = cached
                    .as_ref()
                    .unwrap()
                    .1
                    .eval(&num.prices[v], tol)
                    .ok_or_else(|| CoreError::EmptyPolytope(node_label(tree, v)))?;
                for j in 0..e {
                    g[j] = c.wa.clone() * &grad[ch[c.a]][j] + c.wb.clone() * &grad[ch[c.b]][j];
                }
                pre[v] = val;
                slope[v] = c.slope.clone();
                choice[v] = Some(c);
            }
            add_inj(&mut g, v);
            value[v] = pre[v].clone() + num.injection(v, weights);
            grad[v] = g;
        }
    }
    Ok(European { value, pre, slope, choice, grad })
}
