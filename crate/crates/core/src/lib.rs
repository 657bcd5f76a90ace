//! Robust pricing of American options with semi-static hedges on finite
//! path spaces.
//!
//! The buyer's (sub-hedging) and seller's (super-hedging) prices are computed
//! through their dual representations over martingale measures, with exact
//! rational arithmetic by default, and every reported price comes with a
//! hedge that can be replayed path by path.

pub mod arbitrage;
pub mod config;
pub mod discretization;
pub mod document;
mod hull;
mod kelley;
pub mod market;
pub mod oracle;
pub mod pricing;
pub mod stopping;

pub use config::Config;
pub use market::{
    count_stopping_times, validate_reasonable, AmericanPayoff, Layout, Market, MarketTree, Numeric, StaticOption,
    StoppingTime,
};
pub use robusthedge_lp::{format_rational, parse_rational, rat, Arithmetic, LpError, Rational, Scalar};

#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("node '{node}': {msg}")]
    Node { node: String, msg: String },
    #[error("node '{0}': one-step martingale polytope is empty")]
    EmptyPolytope(String),
    #[error("no-arbitrage fails: {0}")]
    Arbitrage(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Lp(#[from] LpError),
}

impl CoreError {
    pub(crate) fn node(label: &str, msg: impl Into<String>) -> Self {
        CoreError::Node { node: label.to_string(), msg: msg.into() }
    }
}
