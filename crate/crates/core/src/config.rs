use robusthedge_lp::{rat, Rational};

/// Tolerances, budgets and overrides shared by all pricing routines.
#[derive(Debug, Clone)]
pub struct Config {
    /// Zero band for float comparisons.
    pub tol: f64,
    /// Slack allowed when replaying float certificates.
    pub cert_tol: f64,
    /// Overrides the automatic bound on static option positions.
    pub n_bound: Option<Rational>,
    /// Cell budget of the sub-hedging branch and bound.
    pub max_cells: usize,
    /// A cell is resolved by enumeration when at most this many stop
    /// decisions are undetermined on it.
    pub max_ambiguous: usize,
    pub kelley_max_iter: usize,
    pub max_stopping_times: u64,
    pub max_lp_vars: usize,
    /// Largest path count for which path-space LPs are built.
    pub path_budget: usize,
    /// Box bound on the free option positions in the redundancy check.
    pub redundancy_bound: Rational,
    pub threads: Option<usize>,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            tol: 1e-9,
            cert_tol: 1e-8,
            n_bound: None,
            max_cells: 20_000,
            max_ambiguous: 8,
            kelley_max_iter: 2_000,
            max_stopping_times: 100_000,
            max_lp_vars: 20_000,
            path_budget: 5_000,
            redundancy_bound: rat(1_000_000, 1),
            threads: None,
            seed: 2024,
        }
    }
}
