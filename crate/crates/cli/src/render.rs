use serde_json::{json, Map, Value};

use robusthedge_core::arbitrage::{NaReport, NaWitness, RedundancyReport};
use robusthedge_core::discretization::ConvergenceTable;
use robusthedge_core::pricing::{GapReport, PriceReport};
use robusthedge_core::{format_rational, Market, Rational, Scalar, StoppingTime};

use crate::Format;

#[derive(Clone, Copy)]
pub struct Fmt {
    pub exact: bool,
}

impl Fmt {
    /// Exact values print as "a/b" strings, float values as JSON numbers.
    pub fn num(self, r: &Rational) -> Value {
        if self.exact {
            Value::String(format_rational(r))
        } else {
            json!(to_f64(r))
        }
    }

    fn nums(self, xs: &[Rational]) -> Value {
        Value::Array(xs.iter().map(|x| self.num(x)).collect())
    }
}

pub fn to_f64(r: &Rational) -> f64 {
    Scalar::to_f64(r)
}

pub fn from_f64(x: f64) -> Rational {
    Scalar::to_rational(&x)
}

fn label(m: &Market, v: usize) -> String {
    m.tree.nodes[v].label.clone()
}

fn stop_nodes(m: &Market, tau: &StoppingTime) -> Value {
    json!(tau.nodes().into_iter().map(|v| label(m, v)).collect::<Vec<_>>())
}

/// Node-keyed map over the non-terminal nodes.
fn by_inner_node(m: &Market, f: impl Fn(usize) -> Value) -> Value {
    let mut out = Map::new();
    for v in 0..m.tree.len() {
        if !m.tree.is_terminal(v) {
            out.insert(label(m, v), f(v));
        }
    }
    Value::Object(out)
}

pub fn price(m: &Market, r: &PriceReport, fmt: Fmt) -> Value {
    let d = &r.diagnostics;
    json!({
        "side": format!("{:?}", r.side).to_lowercase(),
        "arith": if r.exact { "exact" } else { "f64" },
        "price": fmt.num(&r.price),
        "h_star": fmt.nums(&r.h_star),
        "tau_star": r.tau_star.as_ref().map(|t| stop_nodes(m, t)),
        "strategy": r.strategy.as_ref().map(|s| json!({
            "pre_stop": by_inner_node(m, |v| fmt.num(&s.pre_stop[v])),
            "post_stop": by_inner_node(m, |v| fmt.num(&s.post_stop[v])),
        })),
        "replay": r.replay.as_ref().map(|p| json!({
            "ok": p.ok,
            "min_slack": fmt.num(&p.min_slack),
            "violations": p.violations,
        })),
        "diagnostics": {
            "iterations": d.iterations,
            "cells": d.cells,
            "n_bound": d.n_bound.as_ref().map(|x| fmt.num(x)),
            "interval": d.interval.as_ref().map(|(a, b)| json!([fmt.num(a), fmt.num(b)])),
            "supermartingale_checks": d.supermartingale_checks,
            "supermartingale_failures": d.supermartingale_failures,
        },
    })
}

pub fn na(m: &Market, r: &NaReport, fmt: Fmt) -> Value {
    let witness = r.witness.as_ref().map(|w| match w {
        NaWitness::PathMeasure { epsilon, transitions, .. } => json!({
            "kind": "path_measure",
            "epsilon": fmt.num(epsilon),
            "transitions": by_inner_node(m, |v| fmt.nums(&transitions[v])),
        }),
        NaWitness::Markov { mixture } => json!({
            "kind": "markov",
            "mixture": mixture.iter().map(|(w, k)| json!({
                "weight": fmt.num(w),
                "kernels": by_inner_node(m, |v| fmt.nums(&k[v])),
            })).collect::<Vec<_>>(),
        }),
        NaWitness::InteriorMargins { margins, replicable } => json!({
            "kind": "interior_margins",
            "margins": margins.iter().map(|(i, s, x)| json!({ "option": i, "sign": s, "margin": fmt.num(x) })).collect::<Vec<_>>(),
            "replicable": replicable,
        }),
    });
    json!({
        "check": "na",
        "holds": r.holds,
        "method": r.method,
        "empty_node": r.empty_node.map(|v| label(m, v)),
        "witness": witness,
        "arbitrage": r.arbitrage.as_ref().map(|a| json!({
            "h": fmt.nums(&a.h),
            "holdings": by_inner_node(m, |v| fmt.num(&a.holdings[v])),
        })),
    })
}

pub fn redundancy(m: &Market, r: &RedundancyReport, fmt: Fmt) -> Value {
    json!({
        "check": "redundancy",
        "holds": r.holds,
        "violations": r.violations.iter().map(|x| json!({
            "option": x.option,
            "sign": x.sign,
            "h": fmt.nums(&x.h),
            "holdings": by_inner_node(m, |v| fmt.num(&x.holdings[v])),
            "bound_active": x.bound_active,
        })).collect::<Vec<_>>(),
    })
}

pub fn gap(m: &Market, g: &GapReport, fmt: Fmt) -> Value {
    json!({
        "check": "gap",
        "sup_inf": g.sup_inf.as_ref().map(|x| fmt.num(x)),
        "inf_sup": fmt.num(&g.inf_sup),
        "gap": g.gap.as_ref().map(|x| fmt.num(x)),
        "best_tau": g.best_tau.as_ref().map(|t| stop_nodes(m, t)),
        "generated": g.generated,
    })
}

pub fn stopping(m: &Market, root: &Rational, tau: &StoppingTime, fmt: Fmt) -> Value {
    json!({ "value": fmt.num(root), "tau_star": stop_nodes(m, tau) })
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "-".into(),
        other => other.to_string(),
    }
}

pub fn emit(v: &Value, format: Format) -> String {
    match format {
        Format::Json => serde_json::to_string_pretty(v).unwrap(),
        Format::Text => match v {
            Value::Object(map) => map.iter().map(|(k, x)| format!("{k}: {}", scalar_text(x))).collect::<Vec<_>>().join("\n"),
            other => scalar_text(other),
        },
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["key", "value"]).unwrap();
            if let Value::Object(map) = v {
                for (k, x) in map {
                    w.write_record([k.as_str(), scalar_text(x).as_str()]).unwrap();
                }
            }
            String::from_utf8(w.into_inner().unwrap()).unwrap().trim_end().to_string()
        }
    }
}

pub fn table_text(t: &ConvergenceTable) -> String {
    let opt = |x: Option<f64>| x.map_or("-".to_string(), |x| format!("{x:.6e}"));
    let mut out = vec![format!("{:>4} {:>14} {:>14} {:>14} {:>14}", "n", "price_sub", "price_super", "err_sub", "err_super")];
    for r in &t.rows {
        match &r.error {
            Some(e) => out.push(format!("{:>4} error: {e}", r.n)),
            None => out.push(format!(
                "{:>4} {:>14} {:>14} {:>14} {:>14}",
                r.n,
                opt(r.price_sub),
                opt(r.price_super),
                opt(r.err_sub),
                opt(r.err_super)
            )),
        }
    }
    for (name, s) in [("sub", &t.slope_sub), ("super", &t.slope_super)] {
        if let Some(s) = s {
            out.push(format!("slope {name}: {:.4} (residual {:.3e}, {} levels)", s.slope, s.residual, s.n_used.len()));
        }
    }
    out.join("\n")
}
