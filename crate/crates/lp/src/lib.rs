//! Dense linear programming over exact rationals or `f64`.
//!
//! ```
//! use robusthedge_lp::{rat, solve, Direction, LinearProgram, Rational, Sense};
//!
//! let mut lp = LinearProgram::<Rational>::new(Direction::Maximize, 1);
//! lp.objective[0] = rat(1, 1);
//! lp.add_row(vec![rat(1, 1)], Sense::Le, rat(3, 1));
//! assert_eq!(solve(&lp).unwrap().objective, rat(3, 1));
//! ```

mod program;
mod scalar;
mod simplex;
mod vertex;

pub use program::{Bounds, Direction, LinearProgram, Row, Sense};
pub use scalar::{format_rational, parse_rational, rat, Arithmetic, Rational, Scalar};
pub use simplex::{
    dual_objective, solve, solve_lp, verify_farkas, verify_ray, LpOutcome, Solver, SolverOptions, Status,
};
pub use vertex::{vertex_enumerate, DEFAULT_VERTEX_DIM_CAP};

pub use num_bigint::BigInt;
pub use num_traits::{One, Signed, Zero};

#[derive(Debug, thiserror::Error)]
pub enum LpError {
    #[error("malformed program: {0}")]
    Dimension(String),
    #[error("cannot parse number '{0}'")]
    Parse(String),
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("simplex hit the iteration limit ({0})")]
    IterationLimit(usize),
    #[error("{0}")]
    TooLarge(String),
}
