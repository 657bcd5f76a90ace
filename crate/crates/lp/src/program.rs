use crate::{LpError, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone)]
pub struct Row<T> {
    pub coeffs: Vec<T>,
    pub sense: Sense,
    pub rhs: T,
}

/// Per-variable bounds; `None` means unbounded on that side.
#[derive(Debug, Clone)]
pub struct Bounds<T> {
    pub lower: Option<T>,
    pub upper: Option<T>,
}

impl<T> Bounds<T> {
    pub fn free() -> Self {
        Bounds { lower: None, upper: None }
    }
}

impl<T: Scalar> Bounds<T> {
    pub fn nonneg() -> Self {
        Bounds { lower: Some(T::zero()), upper: None }
    }

    pub fn between(lower: T, upper: T) -> Self {
        Bounds { lower: Some(lower), upper: Some(upper) }
    }
}

/// A dense linear program. Immutable once handed to a solver.
#[derive(Debug, Clone)]
pub struct LinearProgram<T> {
    pub direction: Direction,
    pub objective: Vec<T>,
    pub rows: Vec<Row<T>>,
    pub bounds: Vec<Bounds<T>>,
}

impl<T: Scalar> LinearProgram<T> {
    /// New program over `n` variables, all nonnegative, zero objective.
    pub fn new(direction: Direction, n: usize) -> Self {
        LinearProgram {
            direction,
            objective: vec![T::zero(); n],
            rows: Vec::new(),
            bounds: (0..n).map(|_| Bounds::nonneg()).collect(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    /// Appends a variable and returns its index.
    pub fn add_var(&mut self, cost: T, bounds: Bounds<T>) -> usize {
        self.objective.push(cost);
        self.bounds.push(bounds);
        for row in &mut self.rows {
            row.coeffs.push(T::zero());
        }
        self.objective.len() - 1
    }

    pub fn add_row(&mut self, coeffs: Vec<T>, sense: Sense, rhs: T) {
        self.rows.push(Row { coeffs, sense, rhs });
    }

    /// Adds a row from `(index, coefficient)` pairs.
    pub fn add_sparse_row(&mut self, entries: &[(usize, T)], sense: Sense, rhs: T) {
        let mut coeffs = vec![T::zero(); self.num_vars()];
        for (j, a) in entries {
            coeffs[*j] = coeffs[*j].clone() + a;
        }
        self.add_row(coeffs, sense, rhs);
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.bounds.len() != n {
            return Err(LpError::Dimension(format!(
                "{} bounds for {} variables",
                self.bounds.len(),
                n
            )));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.coeffs.len() != n {
                return Err(LpError::Dimension(format!(
                    "row {i} has {} coefficients, expected {n}",
                    row.coeffs.len()
                )));
            }
        }
        for (j, b) in self.bounds.iter().enumerate() {
            if let (Some(l), Some(u)) = (&b.lower, &b.upper) {
                if l > u {
                    return Err(LpError::Dimension(format!("variable {j} has lower bound above upper bound")));
                }
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[T]) -> T {
        dot(&self.objective, x)
    }

    /// Largest violation of any row or bound at `x` (zero when feasible).
    pub fn max_violation(&self, x: &[T]) -> T {
        let mut worst = T::zero();
        for row in &self.rows {
            let lhs = dot(&row.coeffs, x);
            let v = match row.sense {
                Sense::Le => lhs - &row.rhs,
                Sense::Ge => row.rhs.clone() - lhs,
                Sense::Eq => (lhs - &row.rhs).abs(),
            };
            worst = T::max_of(worst, v);
        }
        for (xj, b) in x.iter().zip(&self.bounds) {
            if let Some(l) = &b.lower {
                worst = T::max_of(worst, l.clone() - xj);
            }
            if let Some(u) = &b.upper {
                worst = T::max_of(worst, xj.clone() - u);
            }
        }
        worst
    }
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        if !x.is_zero() && !y.is_zero() {
            acc = acc + x.clone() * y;
        }
    }
    acc
}
