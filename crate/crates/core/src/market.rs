//! Finite path spaces, payoffs, static options and stopping times.
//!
//! A market is a layered DAG. In [`Layout::Tree`] every node has one parent,
//! so a node is a path prefix. In [`Layout::Lattice`] nodes are (time, price)
//! states shared by many path prefixes; only path-independent payoffs and
//! vanilla options can be put on a lattice, and every path-space quantity is
//! then a function of the state.

use std::collections::HashMap;

use robusthedge_lp::{Rational, Scalar, Signed, Zero};

use crate::document::MarketDoc;
use crate::CoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Tree,
    Lattice,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub label: String,
    pub time: usize,
    pub price: Rational,
    pub parents: Vec<usize>,
    /// Index into [`MarketTree::groups`]; `None` at the horizon.
    pub group: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct MarketTree {
    pub horizon: usize,
    pub layout: Layout,
    pub nodes: Vec<Node>,
    /// Child sets, each sorted by ascending price. Lattice nodes at the same
    /// time share one group.
    pub groups: Vec<Vec<usize>>,
    /// Nodes using each group.
    pub group_users: Vec<Vec<usize>>,
    pub levels: Vec<Vec<usize>>,
}

impl MarketTree {
    pub const ROOT: usize = 0;

    /// Builds a tree from `(label, time, parent, price)` records in any order.
    pub fn from_records(
        horizon: usize,
        records: Vec<(String, usize, Option<String>, Rational)>,
    ) -> Result<Self, CoreError> {
        if horizon == 0 {
            return Err(CoreError::Schema("horizon must be at least 1".into()));
        }
        let mut index: HashMap<String, usize> = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            if index.insert(r.0.clone(), i).is_some() {
                return Err(CoreError::node(&r.0, "duplicate node id"));
            }
        }
        let mut roots = Vec::new();
        let mut kids: Vec<Vec<usize>> = vec![Vec::new(); records.len()];
        for (i, (label, time, parent, price)) in records.iter().enumerate() {
            if price.is_negative() {
                return Err(CoreError::node(label, "negative stock price"));
            }
            if *time > horizon {
                return Err(CoreError::node(label, format!("time {time} beyond horizon {horizon}")));
            }
            match parent {
                None => roots.push(i),
                Some(p) => {
                    let &pi = index
                        .get(p)
                        .ok_or_else(|| CoreError::node(label, format!("dangling parent reference '{p}'")))?;
                    if records[pi].1 + 1 != *time {
                        return Err(CoreError::node(label, "time is not parent time + 1"));
                    }
                    kids[pi].push(i);
                }
            }
        }
        let root = match roots.as_slice() {
            [r] => *r,
            [] => return Err(CoreError::Schema("no root node (node without parent)".into())),
            _ => {
                return Err(CoreError::Schema(format!(
                    "several root nodes: {}",
                    roots.iter().map(|&r| records[r].0.as_str()).collect::<Vec<_>>().join(", ")
                )))
            }
        };
        if records[root].1 != 0 {
            return Err(CoreError::node(&records[root].0, "root must sit at time 0"));
        }
        for (i, r) in records.iter().enumerate() {
            if kids[i].is_empty() && r.1 < horizon {
                return Err(CoreError::node(&r.0, "leaf at wrong depth"));
            }
        }

        // breadth-first renumbering, children sorted by price
        let mut order = vec![root];
        let mut new_id = vec![usize::MAX; records.len()];
        new_id[root] = 0;
        let mut head = 0;
        while head < order.len() {
            let v = order[head];
            head += 1;
            let mut ch = kids[v].clone();
            ch.sort_by(|&a, &b| records[a].3.cmp(&records[b].3));
            for c in ch {
                new_id[c] = order.len();
                order.push(c);
            }
        }
        if order.len() != records.len() {
            let orphan = (0..records.len()).find(|&i| new_id[i] == usize::MAX).unwrap();
            return Err(CoreError::node(&records[orphan].0, "node not connected to the root"));
        }
        let mut nodes = Vec::with_capacity(order.len());
        let mut groups = Vec::new();
        let mut group_users = Vec::new();
        for &old in &order {
            let (label, time, parent, price) = &records[old];
            let parents = parent.as_ref().map(|p| vec![new_id[index[p]]]).unwrap_or_default();
            let group = if kids[old].is_empty() {
                None
            } else {
                let mut ch: Vec<usize> = kids[old].iter().map(|&c| new_id[c]).collect();
                ch.sort_unstable();
                groups.push(ch);
                group_users.push(vec![nodes.len()]);
                Some(groups.len() - 1)
            };
            nodes.push(Node { label: label.clone(), time: *time, price: price.clone(), parents, group });
        }
        Ok(Self::finish(horizon, Layout::Tree, nodes, groups, group_users))
    }

    /// Recombining lattice: level `t` holds the given prices, and every node at
    /// level `t` has all nodes of level `t + 1` as children.
    pub fn lattice(levels: Vec<Vec<Rational>>) -> Result<Self, CoreError> {
        if levels.len() < 2 || levels[0].len() != 1 {
            return Err(CoreError::Schema("a lattice needs a single root and at least one period".into()));
        }
        let horizon = levels.len() - 1;
        let mut nodes = Vec::new();
        let mut ids: Vec<Vec<usize>> = Vec::new();
        for (t, prices) in levels.iter().enumerate() {
            let mut sorted = prices.clone();
            sorted.sort();
            sorted.dedup();
            let mut row = Vec::new();
            for p in sorted {
                if p.is_negative() {
                    return Err(CoreError::Schema(format!("negative price at time {t}")));
                }
                row.push(nodes.len());
                nodes.push(Node {
                    label: format!("{t}@{}", robusthedge_lp::format_rational(&p)),
                    time: t,
                    price: p,
                    parents: Vec::new(),
                    group: None,
                });
            }
            ids.push(row);
        }
        let mut groups = Vec::new();
        let mut group_users = Vec::new();
        for t in 0..horizon {
            groups.push(ids[t + 1].clone());
            group_users.push(ids[t].clone());
            for &v in &ids[t] {
                nodes[v].group = Some(t);
            }
            for &c in &ids[t + 1] {
                nodes[c].parents = ids[t].clone();
            }
        }
        Ok(Self::finish(horizon, Layout::Lattice, nodes, groups, group_users))
    }

    fn finish(
        horizon: usize,
        layout: Layout,
        nodes: Vec<Node>,
        groups: Vec<Vec<usize>>,
        group_users: Vec<Vec<usize>>,
    ) -> Self {
        let mut levels = vec![Vec::new(); horizon + 1];
        for (i, n) in nodes.iter().enumerate() {
            levels[n.time].push(i);
        }
        MarketTree { horizon, layout, nodes, groups, group_users, levels }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn children(&self, v: usize) -> &[usize] {
        match self.nodes[v].group {
            Some(g) => &self.groups[g],
            None => &[],
        }
    }

    pub fn is_terminal(&self, v: usize) -> bool {
        self.nodes[v].group.is_none()
    }

    pub fn time(&self, v: usize) -> usize {
        self.nodes[v].time
    }

    pub fn price(&self, v: usize) -> &Rational {
        &self.nodes[v].price
    }

    pub fn find(&self, label: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.label == label)
    }

    pub fn leaves(&self) -> &[usize] {
        &self.levels[self.horizon]
    }

    /// Number of root-to-leaf paths, saturating at `u128::MAX`.
    pub fn path_count(&self) -> u128 {
        let mut count = vec![0u128; self.len()];
        count[Self::ROOT] = 1;
        for t in 0..self.horizon {
            for &v in &self.levels[t] {
                for &c in self.children(v) {
                    count[c] = count[c].saturating_add(count[v]);
                }
            }
        }
        self.leaves().iter().fold(0u128, |a, &l| a.saturating_add(count[l]))
    }

    /// Root-to-leaf node sequences; refuses above `budget` paths.
    pub fn paths(&self, budget: usize) -> Result<Vec<Vec<usize>>, CoreError> {
        let count = self.path_count();
        if count > budget as u128 {
            return Err(CoreError::Budget(format!("{count} paths exceed the budget of {budget}")));
        }
        let mut out = Vec::with_capacity(count as usize);
        let mut stack = vec![vec![Self::ROOT]];
        while let Some(p) = stack.pop() {
            let v = *p.last().unwrap();
            if self.is_terminal(v) {
                out.push(p);
                continue;
            }
            for &c in self.children(v).iter().rev() {
                let mut q = p.clone();
                q.push(c);
                stack.push(q);
            }
        }
        Ok(out)
    }
}

/// Checks the reasonable-path-space conditions node by node: every
/// positive-price node before the horizon has a child strictly below and a
/// child strictly above, and zero is absorbing.
pub fn validate_reasonable(tree: &MarketTree) -> (bool, Vec<usize>) {
    let mut violations = Vec::new();
    for v in 0..tree.len() {
        if tree.is_terminal(v) {
            continue;
        }
        let s = tree.price(v);
        let ch = tree.children(v);
        let ok = if s.is_zero() {
            ch.iter().all(|&c| tree.price(c).is_zero())
        } else {
            ch.iter().any(|&c| tree.price(c) < s) && ch.iter().any(|&c| tree.price(c) > s)
        };
        if !ok {
            violations.push(v);
        }
    }
    (violations.is_empty(), violations)
}

/// Saturation marker returned by [`count_stopping_times`].
pub const STOPPING_COUNT_SATURATED: u64 = 1 << 62;

/// Number of stopping times on the path space: `N(leaf) = 1`,
/// `N(v) = 1 + prod N(children)`. Saturates at [`STOPPING_COUNT_SATURATED`].
pub fn count_stopping_times(tree: &MarketTree) -> u64 {
    let mut n = vec![0u64; tree.len()];
    for t in (0..=tree.horizon).rev() {
        for &v in &tree.levels[t] {
            n[v] = if tree.is_terminal(v) {
                1
            } else {
                let prod = tree
                    .children(v)
                    .iter()
                    .fold(1u64, |acc, &c| acc.saturating_mul(n[c]).min(STOPPING_COUNT_SATURATED));
                (1 + prod).min(STOPPING_COUNT_SATURATED)
            };
        }
    }
    n[MarketTree::ROOT]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PayoffKind {
    Call { strike: Rational },
    Put { strike: Rational },
    /// `(time or any, price, value)`; unmatched states pay `default`.
    Table { entries: Vec<(Option<usize>, Rational, Rational)>, default: Option<Rational> },
}

/// Path-independent payoff `w_t * f(s)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PayoffRule {
    pub kind: PayoffKind,
    pub weights: Option<Vec<Rational>>,
}

impl PayoffRule {
    pub fn eval(&self, t: usize, s: &Rational) -> Option<Rational> {
        let base = match &self.kind {
            PayoffKind::Call { strike } => positive_part(s.clone() - strike),
            PayoffKind::Put { strike } => positive_part(strike.clone() - s),
            PayoffKind::Table { entries, default } => entries
                .iter()
                .find(|(time, p, _)| p == s && time.is_none_or(|x| x == t))
                .map(|e| e.2.clone())
                .or_else(|| default.clone())?,
        };
        Some(match &self.weights {
            Some(w) => w.get(t)?.clone() * base,
            None => base,
        })
    }
}

#[derive(Debug, Clone)]
pub struct AmericanPayoff {
    pub values: Vec<Rational>,
    pub rule: Option<PayoffRule>,
}

impl AmericanPayoff {
    pub fn from_rule(tree: &MarketTree, rule: PayoffRule) -> Result<Self, CoreError> {
        let mut values = Vec::with_capacity(tree.len());
        for n in &tree.nodes {
            let v = rule
                .eval(n.time, &n.price)
                .ok_or_else(|| CoreError::node(&n.label, "payoff missing on node"))?;
            values.push(v);
        }
        Ok(AmericanPayoff { values, rule: Some(rule) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VanillaKind {
    Call,
    Put,
    Forward,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vanilla {
    pub maturity: usize,
    pub strike: Rational,
    pub kind: VanillaKind,
}

impl Vanilla {
    pub fn eval(&self, s: &Rational) -> Rational {
        match self.kind {
            VanillaKind::Call => positive_part(s.clone() - &self.strike),
            VanillaKind::Put => positive_part(self.strike.clone() - s),
            VanillaKind::Forward => s.clone() - &self.strike,
        }
    }
}

/// A statically traded option: pays `values[v]` at nodes `v` of its
/// maturity date and costs `price` at time 0.
#[derive(Debug, Clone)]
pub struct StaticOption {
    pub maturity: usize,
    pub values: Vec<Rational>,
    pub price: Rational,
    pub vanilla: Option<Vanilla>,
}

impl StaticOption {
    pub fn from_vanilla(tree: &MarketTree, vanilla: Vanilla, price: Rational) -> Result<Self, CoreError> {
        if vanilla.maturity > tree.horizon {
            return Err(CoreError::Schema(format!(
                "option maturity {} beyond horizon {}",
                vanilla.maturity, tree.horizon
            )));
        }
        let values = tree
            .nodes
            .iter()
            .map(|n| if n.time == vanilla.maturity { vanilla.eval(&n.price) } else { Rational::zero() })
            .collect();
        Ok(StaticOption { maturity: vanilla.maturity, values, price, vanilla: Some(vanilla) })
    }

    /// Net payoff `g(v) - c` at a maturity node.
    pub fn net(&self, v: usize) -> Rational {
        self.values[v].clone() - &self.price
    }
}

/// A stopping time given by its stop region.
///
/// On a tree the canonical region holds exactly one node per path. On a
/// lattice the region is read with first-hit semantics: a path stops at the
/// first region node it meets.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StoppingTime {
    pub region: Vec<bool>,
}

impl StoppingTime {
    /// First-hit region of a node-wise stop rule (`flags[v]` = stop if
    /// reached). Terminal nodes always stop.
    pub fn first_hit(tree: &MarketTree, flags: &[bool]) -> Self {
        let mut reached = vec![false; tree.len()];
        let mut region = vec![false; tree.len()];
        reached[MarketTree::ROOT] = true;
        for t in 0..=tree.horizon {
            for &v in &tree.levels[t] {
                if !reached[v] {
                    continue;
                }
                if flags[v] || tree.is_terminal(v) {
                    region[v] = true;
                } else {
                    for &c in tree.children(v) {
                        reached[c] = true;
                    }
                }
            }
        }
        StoppingTime { region }
    }

    pub fn at_time(tree: &MarketTree, k: usize) -> Self {
        let region = tree.nodes.iter().map(|n| n.time == k).collect();
        StoppingTime { region }
    }

    pub fn nodes(&self) -> Vec<usize> {
        (0..self.region.len()).filter(|&v| self.region[v]).collect()
    }

    /// Tree layout: every root-to-leaf path meets the region exactly once.
    /// Lattice layout: every path meets it at least once and the region
    /// equals its own first-hit normalization.
    pub fn validate(&self, tree: &MarketTree) -> Result<(), String> {
        if self.region.len() != tree.len() {
            return Err(format!("region has {} entries for {} nodes", self.region.len(), tree.len()));
        }
        let canon = StoppingTime::first_hit(tree, &self.region);
        // first_hit forces leaves; a missing leaf means some path never stops
        for v in 0..tree.len() {
            if canon.region[v] && !self.region[v] {
                return Err(format!("path through node '{}' never stops", tree.nodes[v].label));
            }
        }
        if tree.layout == Layout::Tree && canon != *self {
            let v = (0..tree.len()).find(|&v| canon.region[v] != self.region[v]).unwrap();
            return Err(format!("node '{}' lies below another stop node", tree.nodes[v].label));
        }
        Ok(())
    }

    /// Stop node on a root-to-leaf path.
    pub fn stop_on_path(&self, path: &[usize]) -> Option<usize> {
        path.iter().copied().find(|&v| self.region[v])
    }
}

/// A loaded market: path space, American payoff and static options.
#[derive(Debug, Clone)]
pub struct Market {
    pub tree: MarketTree,
    pub payoff: AmericanPayoff,
    pub options: Vec<StaticOption>,
    /// Source document, kept for lossless serialization.
    pub doc: Option<MarketDoc>,
}

impl Market {
    pub fn new(tree: MarketTree, payoff: AmericanPayoff, options: Vec<StaticOption>) -> Self {
        Market { tree, payoff, options, doc: None }
    }

    pub fn num_options(&self) -> usize {
        self.options.len()
    }

    pub fn with_options(&self, options: Vec<StaticOption>) -> Market {
        Market { tree: self.tree.clone(), payoff: self.payoff.clone(), options, doc: None }
    }

    pub fn with_payoff(&self, values: Vec<Rational>) -> Market {
        Market {
            tree: self.tree.clone(),
            payoff: AmericanPayoff { values, rule: None },
            options: self.options.clone(),
            doc: None,
        }
    }

    /// Scalar view used by every numerical routine.
    pub fn numeric<S: Scalar>(&self) -> Numeric<'_, S> {
        Numeric::new(self)
    }

    /// Expands a lattice into the equivalent non-recombining tree.
    pub fn unfold(&self, max_nodes: usize) -> Result<Market, CoreError> {
        if self.tree.layout == Layout::Tree {
            return Ok(self.clone());
        }
        let mut records = Vec::new();
        let mut origin = Vec::new();
        let mut stack = vec![(MarketTree::ROOT, None::<String>, String::from("r"))];
        while let Some((v, parent, label)) = stack.pop() {
            if records.len() >= max_nodes {
                return Err(CoreError::Budget(format!("unfolding exceeds {max_nodes} nodes")));
            }
            for (k, &c) in self.tree.children(v).iter().enumerate() {
                stack.push((c, Some(label.clone()), format!("{label}.{k}")));
            }
            records.push((label, self.tree.time(v), parent, self.tree.price(v).clone()));
            origin.push(v);
        }
        let by_label: HashMap<String, usize> =
            records.iter().zip(&origin).map(|(r, &o)| (r.0.clone(), o)).collect();
        let tree = MarketTree::from_records(self.tree.horizon, records)?;
        let map: Vec<usize> = tree.nodes.iter().map(|n| by_label[&n.label]).collect();
        let payoff = AmericanPayoff {
            values: map.iter().map(|&o| self.payoff.values[o].clone()).collect(),
            rule: self.payoff.rule.clone(),
        };
        let options = self
            .options
            .iter()
            .map(|o| StaticOption {
                maturity: o.maturity,
                values: map.iter().map(|&x| o.values[x].clone()).collect(),
                price: o.price.clone(),
                vanilla: o.vanilla.clone(),
            })
            .collect();
        Ok(Market::new(tree, payoff, options))
    }
}

/// Market data converted to a scalar backend.
pub struct Numeric<'a, S> {
    pub tree: &'a MarketTree,
    pub prices: Vec<S>,
    pub phi: Vec<S>,
    /// Per node: `(option index, g_i(v) - c_i)` for options maturing there.
    pub claims: Vec<Vec<(usize, S)>>,
    pub e: usize,
}

impl<'a, S: Scalar> Numeric<'a, S> {
    pub fn new(market: &'a Market) -> Self {
        let tree = &market.tree;
        let prices = tree.nodes.iter().map(|n| S::from_rational(&n.price)).collect();
        let phi = market.payoff.values.iter().map(S::from_rational).collect();
        let mut claims = vec![Vec::new(); tree.len()];
        for (i, o) in market.options.iter().enumerate() {
            for &v in &tree.levels[o.maturity] {
                claims[v].push((i, S::from_rational(&o.net(v))));
            }
        }
        Numeric { tree, prices, phi, claims, e: market.options.len() }
    }

    /// `sum_i w_i (g_i(v) - c_i)` over options maturing at `v`.
    pub fn injection(&self, v: usize, weights: &[S]) -> S {
        let mut acc = S::zero();
        for (i, g) in &self.claims[v] {
            if let Some(w) = weights.get(*i) {
                acc = acc + w.clone() * g;
            }
        }
        acc
    }
}

pub(crate) fn positive_part(x: Rational) -> Rational {
    if x.is_negative() {
        Rational::zero()
    } else {
        x
    }
}
