//! JSON market documents.
//!
//! Numbers may be JSON numbers or strings such as `"11/24"`; the literal
//! text is kept so that a loaded document serializes back unchanged.

use std::collections::BTreeMap;
use std::fmt;

use robusthedge_lp::{format_rational, parse_rational, Rational};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::discretization::{build_grid_market, ConvergenceSetup, GridSpec, Marginal, Quotes};
use crate::market::{
    AmericanPayoff, Layout, Market, MarketTree, PayoffKind, PayoffRule, StaticOption, Vanilla, VanillaKind,
};
use crate::CoreError;

/// A numeric literal together with its exact value.
#[derive(Clone, PartialEq, Eq)]
pub struct Num {
    pub value: Rational,
    text: String,
    quoted: bool,
}

impl Num {
    pub fn new(value: Rational) -> Self {
        let text = format_rational(&value);
        let quoted = text.contains('/');
        Num { value, text, quoted }
    }
}

impl fmt::Debug for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.text)
    }
}

impl From<Rational> for Num {
    fn from(r: Rational) -> Self {
        Num::new(r)
    }
}

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.quoted {
            s.serialize_str(&self.text)
        } else {
            let n: serde_json::Number = self.text.parse().map_err(serde::ser::Error::custom)?;
            n.serialize(s)
        }
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        let (text, quoted) = match v {
            serde_json::Value::Number(n) => (n.to_string(), false),
            serde_json::Value::String(s) => (s, true),
            other => return Err(D::Error::custom(format!("expected a number, found {other}"))),
        };
        let value = parse_rational(&text).map_err(D::Error::custom)?;
        Ok(Num { value, text, quoted })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeId {
    Int(u64),
    Str(String),
}

impl NodeId {
    pub fn label(&self) -> String {
        match self {
            NodeId::Int(i) => i.to_string(),
            NodeId::Str(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub id: NodeId,
    pub time: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<NodeId>,
    pub price: Num,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeDoc {
    pub nodes: Vec<NodeDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDoc {
    pub bounds: Vec<[Num; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
    pub s0: Num,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceValueDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<usize>,
    pub price: Num,
    pub value: Num,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleDoc {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strike: Option<Num>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<PriceValueDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Num>,
    /// Per-date multipliers `w_t`; the payoff is `w_t * f(s)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<Num>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<BTreeMap<String, Num>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<RuleDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VanillaDoc {
    pub maturity: usize,
    pub strike: Num,
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vanilla: Option<VanillaDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaf_table: Option<BTreeMap<String, Num>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price: Option<Num>,
}

/// A reference marginal: point masses plus uniformly spread pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginalDoc {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub atoms: Vec<[Num; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub uniform: Vec<[Num; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketDoc {
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<TreeDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridDoc>,
    pub payoff: PayoffDoc,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<OptionDoc>,
    /// Marginals at dates `1..=T` of a reference pricing measure; used only
    /// by continuum descriptions of grid markets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginals: Option<Vec<MarginalDoc>>,
}

pub fn parse_document(text: &str) -> Result<MarketDoc, CoreError> {
    serde_json::from_str(text).map_err(|e| CoreError::Schema(e.to_string()))
}

/// Parses and validates a market document.
pub fn load_market(text: &str) -> Result<Market, CoreError> {
    let doc = parse_document(text)?;
    market_from_doc(&doc)
}

pub fn serialize_market(market: &Market) -> Result<String, CoreError> {
    let doc = match &market.doc {
        Some(d) => d.clone(),
        None => document_of(market),
    };
    serde_json::to_string_pretty(&doc).map_err(|e| CoreError::Schema(e.to_string()))
}

pub fn market_from_doc(doc: &MarketDoc) -> Result<Market, CoreError> {
    let mut market = match (&doc.tree, &doc.grid) {
        (Some(tree), None) => tree_market(doc, tree)?,
        (None, Some(grid)) => {
            let spec = grid_spec(doc, grid)?;
            let n = grid
                .n
                .ok_or_else(|| CoreError::Schema("grid.n is required to build a market (use a level override)".into()))?;
            grid_market(doc, &spec, n, grid.layout.as_deref())?
        }
        (Some(_), Some(_)) => return Err(CoreError::Schema("give either \"tree\" or \"grid\", not both".into())),
        (None, None) => return Err(CoreError::Schema("missing \"tree\" or \"grid\"".into())),
    };
    market.doc = Some(doc.clone());
    Ok(market)
}

fn tree_market(doc: &MarketDoc, tree_doc: &TreeDoc) -> Result<Market, CoreError> {
    let records = tree_doc
        .nodes
        .iter()
        .map(|n| (n.id.label(), n.time, n.parent.as_ref().map(NodeId::label), n.price.value.clone()))
        .collect();
    let tree = MarketTree::from_records(doc.horizon, records)?;
    let payoff = match (&doc.payoff.table, &doc.payoff.rule) {
        (Some(table), None) => {
            for key in table.keys() {
                if tree.find(key).is_none() {
                    return Err(CoreError::node(key, "payoff given for unknown node"));
                }
            }
            let mut values = Vec::with_capacity(tree.len());
            for n in &tree.nodes {
                let v = table.get(&n.label).ok_or_else(|| CoreError::node(&n.label, "payoff missing on node"))?;
                values.push(v.value.clone());
            }
            AmericanPayoff { values, rule: None }
        }
        (None, Some(rule)) => AmericanPayoff::from_rule(&tree, payoff_rule(rule)?)?,
        _ => return Err(CoreError::Schema("payoff needs exactly one of \"table\" or \"rule\"".into())),
    };
    let mut options = Vec::new();
    for (i, o) in doc.options.iter().enumerate() {
        options.push(option_from_doc(&tree, o, i)?);
    }
    Ok(Market::new(tree, payoff, options))
}

fn option_from_doc(tree: &MarketTree, o: &OptionDoc, i: usize) -> Result<StaticOption, CoreError> {
    let price = o
        .price
        .as_ref()
        .map(|p| p.value.clone())
        .ok_or_else(|| CoreError::Schema(format!("option {i}: missing price")))?;
    let from_vanilla = match &o.vanilla {
        Some(v) => Some(StaticOption::from_vanilla(tree, vanilla(v)?, price.clone())?),
        None => None,
    };
    let from_table = match &o.leaf_table {
        Some(table) => {
            let mut values = vec![Rational::from_integer(0.into()); tree.len()];
            for (key, v) in table {
                let id = tree.find(key).ok_or_else(|| CoreError::node(key, format!("option {i}: unknown node")))?;
                if !tree.is_terminal(id) {
                    return Err(CoreError::node(key, format!("option {i}: leaf_table entry on a non-leaf")));
                }
                values[id] = v.value.clone();
            }
            for &l in tree.leaves() {
                if !table.contains_key(&tree.nodes[l].label) {
                    return Err(CoreError::node(&tree.nodes[l].label, format!("option {i}: leaf payoff missing")));
                }
            }
            Some(StaticOption { maturity: tree.horizon, values, price, vanilla: None })
        }
        None => None,
    };
    match (from_vanilla, from_table) {
        (Some(v), Some(t)) => {
            if v.maturity != tree.horizon || tree.leaves().iter().any(|&l| v.values[l] != t.values[l]) {
                return Err(CoreError::Schema(format!("option {i}: vanilla descriptor and leaf_table disagree")));
            }
            Ok(v)
        }
        (Some(v), None) => Ok(v),
        (None, Some(t)) => Ok(t),
        (None, None) => Err(CoreError::Schema(format!("option {i}: needs \"vanilla\" or \"leaf_table\""))),
    }
}

pub fn vanilla(v: &VanillaDoc) -> Result<Vanilla, CoreError> {
    let kind = match v.kind.as_str() {
        "call" => VanillaKind::Call,
        "put" => VanillaKind::Put,
        "forward" => VanillaKind::Forward,
        other => return Err(CoreError::Schema(format!("unknown vanilla kind '{other}'"))),
    };
    Ok(Vanilla { maturity: v.maturity, strike: v.strike.value.clone(), kind })
}

pub fn payoff_rule(r: &RuleDoc) -> Result<PayoffRule, CoreError> {
    let strike = || {
        r.strike
            .as_ref()
            .map(|s| s.value.clone())
            .ok_or_else(|| CoreError::Schema(format!("payoff rule '{}' needs a strike", r.kind)))
    };
    let kind = match r.kind.as_str() {
        "call" => PayoffKind::Call { strike: strike()? },
        "put" => PayoffKind::Put { strike: strike()? },
        "table-by-price" => PayoffKind::Table {
            entries: r
                .values
                .as_ref()
                .ok_or_else(|| CoreError::Schema("table-by-price needs \"values\"".into()))?
                .iter()
                .map(|e| (e.time, e.price.value.clone(), e.value.value.clone()))
                .collect(),
            default: r.default.as_ref().map(|d| d.value.clone()),
        },
        other => return Err(CoreError::Schema(format!("unknown payoff rule '{other}'"))),
    };
    let weights = r.weights.as_ref().map(|w| w.iter().map(|x| x.value.clone()).collect());
    Ok(PayoffRule { kind, weights })
}

pub fn grid_spec(doc: &MarketDoc, grid: &GridDoc) -> Result<GridSpec, CoreError> {
    if grid.bounds.len() != doc.horizon {
        return Err(CoreError::Schema(format!(
            "grid has {} bound pairs for horizon {}",
            grid.bounds.len(),
            doc.horizon
        )));
    }
    GridSpec::new(grid.bounds.iter().map(|[a, b]| (a.value.clone(), b.value.clone())).collect(), grid.s0.value.clone())
}

fn grid_parts(doc: &MarketDoc) -> Result<(PayoffRule, Vec<(Vanilla, Rational)>), CoreError> {
    let rule = match (&doc.payoff.rule, &doc.payoff.table) {
        (Some(r), None) => payoff_rule(r)?,
        _ => return Err(CoreError::Schema("grid markets need a payoff \"rule\"".into())),
    };
    let mut vanillas = Vec::new();
    for (i, o) in doc.options.iter().enumerate() {
        let v = o
            .vanilla
            .as_ref()
            .ok_or_else(|| CoreError::Schema(format!("option {i}: grid markets take vanilla options only")))?;
        let price = o
            .price
            .as_ref()
            .map(|p| p.value.clone())
            .ok_or_else(|| CoreError::Schema(format!("option {i}: missing price")))?;
        vanillas.push((vanilla(v)?, price));
    }
    Ok((rule, vanillas))
}

fn layout_of(layout: Option<&str>) -> Result<Layout, CoreError> {
    match layout {
        None | Some("lattice") => Ok(Layout::Lattice),
        Some("tree") => Ok(Layout::Tree),
        Some(other) => Err(CoreError::Schema(format!("unknown layout '{other}'"))),
    }
}

/// Builds the level-`n` market of a grid document. Option quotes are taken
/// from the document as they stand.
pub fn grid_market(doc: &MarketDoc, spec: &GridSpec, n: u32, layout: Option<&str>) -> Result<Market, CoreError> {
    let (rule, vanillas) = grid_parts(doc)?;
    build_grid_market(spec, n, &rule, &vanillas, layout_of(layout)?, usize::MAX)
}

/// Sweep setup of a grid document; quotes follow the reference marginals
/// when the document has them.
pub fn grid_setup(doc: &MarketDoc) -> Result<ConvergenceSetup, CoreError> {
    let grid = doc.grid.as_ref().ok_or_else(|| CoreError::Schema("not a grid document".into()))?;
    let spec = grid_spec(doc, grid)?;
    let (rule, vanillas) = grid_parts(doc)?;
    let quotes = match marginals(doc)? {
        Some(ms) => {
            if ms.len() != doc.horizon {
                return Err(CoreError::Schema(format!("{} marginals for horizon {}", ms.len(), doc.horizon)));
            }
            Quotes::Marginals(ms)
        }
        None => Quotes::Fixed,
    };
    Ok(ConvergenceSetup {
        spec,
        rule,
        vanillas,
        quotes,
        layout: layout_of(grid.layout.as_deref())?,
        analytic: None,
        sub: true,
        sup: true,
    })
}

pub fn marginals(doc: &MarketDoc) -> Result<Option<Vec<Marginal>>, CoreError> {
    let Some(ms) = &doc.marginals else { return Ok(None) };
    ms.iter()
        .map(|m| {
            Marginal::new(
                m.atoms.iter().map(|[x, w]| (x.value.clone(), w.value.clone())).collect(),
                m.uniform.iter().map(|[l, r, w]| (l.value.clone(), r.value.clone(), w.value.clone())).collect(),
            )
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
}

/// Tree document for a market without a source document.
pub fn document_of(market: &Market) -> MarketDoc {
    let tree = &market.tree;
    let unfolded;
    let (tree, market) = if tree.layout == Layout::Lattice {
        unfolded = market.unfold(usize::MAX).expect("unbounded unfold");
        (&unfolded.tree, &unfolded)
    } else {
        (tree, market)
    };
    let nodes = tree
        .nodes
        .iter()
        .map(|n| NodeDoc {
            id: NodeId::Str(n.label.clone()),
            time: n.time,
            parent: n.parents.first().map(|&p| NodeId::Str(tree.nodes[p].label.clone())),
            price: Num::new(n.price.clone()),
        })
        .collect();
    let table = tree
        .nodes
        .iter()
        .zip(&market.payoff.values)
        .map(|(n, v)| (n.label.clone(), Num::new(v.clone())))
        .collect();
    let options = market
        .options
        .iter()
        .map(|o| {
            let leaf_table = if o.maturity == tree.horizon {
                Some(tree.leaves().iter().map(|&l| (tree.nodes[l].label.clone(), Num::new(o.values[l].clone()))).collect())
            } else {
                None
            };
            OptionDoc {
                vanilla: o.vanilla.as_ref().map(|v| VanillaDoc {
                    maturity: v.maturity,
                    strike: Num::new(v.strike.clone()),
                    kind: match v.kind {
                        VanillaKind::Call => "call",
                        VanillaKind::Put => "put",
                        VanillaKind::Forward => "forward",
                    }
                    .into(),
                }),
                leaf_table,
                price: Some(Num::new(o.price.clone())),
            }
        })
        .collect();
    MarketDoc {
        horizon: tree.horizon,
        tree: Some(TreeDoc { nodes }),
        grid: None,
        payoff: PayoffDoc { table: Some(table), rule: None },
        options,
        marginals: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use robusthedge_lp::rat;

    const M1: &str = r#"{
        "horizon": 1,
        "tree": {"nodes": [
            {"id": "r", "time": 0, "price": 1},
            {"id": "u", "time": 1, "parent": "r", "price": "3/2"},
            {"id": "d", "time": 1, "parent": "r", "price": 0.5}
        ]},
        "payoff": {"table": {"r": 0, "u": "1/2", "d": 0}}
    }"#;

    #[test]
    fn loads_small_tree() {
        let m = load_market(M1).unwrap();
        assert_eq!(m.tree.len(), 3);
        assert_eq!(m.tree.price(1), &rat(1, 2));
        assert_eq!(m.payoff.values[2], rat(1, 2));
        assert!(m.options.is_empty());
    }

    #[test]
    fn round_trip_preserves_literals() {
        let m = load_market(M1).unwrap();
        let out = serialize_market(&m).unwrap();
        let a: serde_json::Value = serde_json::from_str(M1).unwrap();
        let b: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(a, b);
        assert!(out.contains("0.5") && out.contains("\"3/2\""));
    }

    #[test]
    fn missing_payoff_names_node() {
        let bad = M1.replace(r#", "d": 0}"#, "}");
        let err = load_market(&bad).unwrap_err().to_string();
        assert!(err.contains("'d'") && err.contains("payoff missing"), "{err}");
    }

    #[test]
    fn unknown_field_is_schema_error() {
        let bad = M1.replace("\"horizon\"", "\"horizonx\"");
        assert!(matches!(load_market(&bad), Err(CoreError::Schema(_))));
    }

    #[test]
    fn generated_document_reloads() {
        let m = load_market(M1).unwrap();
        let plain = Market::new(m.tree.clone(), m.payoff.clone(), vec![]);
        let again = load_market(&serialize_market(&plain).unwrap()).unwrap();
        assert_eq!(again.payoff.values, m.payoff.values);
    }
}
