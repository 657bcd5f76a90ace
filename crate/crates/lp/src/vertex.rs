use itertools::Itertools;

use crate::program::{dot, LinearProgram, Sense};
use crate::{LpError, Rational};
use num_traits::{One, Zero};

pub const DEFAULT_VERTEX_DIM_CAP: usize = 12;

/// Every vertex of the bounded polytope described by the rows and bounds of
/// `lp` (the objective is ignored). Returns an empty list when infeasible.
///
/// Brute force over active sets: equality rows are always active, and each
/// choice of `n - rank` inequalities that pins a unique point is tested for
/// feasibility.
pub fn vertex_enumerate(lp: &LinearProgram<Rational>, dim_cap: usize) -> Result<Vec<Vec<Rational>>, LpError> {
    lp.validate()?;
    let n = lp.num_vars();
    if n > dim_cap {
        return Err(LpError::TooLarge(format!(
            "vertex enumeration over {n} variables exceeds the cap of {dim_cap}"
        )));
    }
    let mut equalities = Vec::new();
    let mut inequalities = Vec::new();
    for row in &lp.rows {
        let entry = (row.coeffs.clone(), row.rhs.clone());
        if row.sense == Sense::Eq {
            equalities.push(entry);
        } else {
            inequalities.push(entry);
        }
    }
    for (j, b) in lp.bounds.iter().enumerate() {
        for v in [&b.lower, &b.upper].into_iter().flatten() {
            let mut e = vec![Rational::zero(); n];
            e[j] = Rational::one();
            inequalities.push((e, v.clone()));
        }
    }
    let eq_basis = independent_rows(&equalities);
    if eq_basis.len() > n {
        return Ok(Vec::new());
    }
    let free = n - eq_basis.len();
    let mut out: Vec<Vec<Rational>> = Vec::new();
    for pick in (0..inequalities.len()).combinations(free) {
        let system: Vec<(Vec<Rational>, Rational)> = eq_basis
            .iter()
            .cloned()
            .chain(pick.iter().map(|&i| inequalities[i].clone()))
            .collect();
        let Some(x) = solve_square(system) else { continue };
        if lp.max_violation(&x) > Rational::zero() {
            continue;
        }
        // equality rows that were dropped as dependent must still hold
        if equalities.iter().any(|(a, b)| &dot(a, &x) != b) {
            continue;
        }
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out.sort();
    Ok(out)
}

fn independent_rows(rows: &[(Vec<Rational>, Rational)]) -> Vec<(Vec<Rational>, Rational)> {
    let mut kept: Vec<(Vec<Rational>, Rational)> = Vec::new();
    let mut reduced: Vec<(Vec<Rational>, usize)> = Vec::new();
    for row in rows {
        let mut r = row.0.clone();
        for (basis, p) in &reduced {
            if !r[*p].is_zero() {
                let f = r[*p].clone() / &basis[*p];
                for (x, y) in r.iter_mut().zip(basis) {
                    *x = x.clone() - f.clone() * y;
                }
            }
        }
        if let Some(p) = r.iter().position(|x| !x.is_zero()) {
            reduced.push((r, p));
            kept.push(row.clone());
        }
    }
    kept
}

/// Unique solution of a square system, or `None` if singular.
fn solve_square(mut rows: Vec<(Vec<Rational>, Rational)>) -> Option<Vec<Rational>> {
    let n = rows.len();
    for col in 0..n {
        let p = (col..n).find(|&r| !rows[r].0[col].is_zero())?;
        rows.swap(col, p);
        let piv = rows[col].0[col].clone();
        let (prow, prhs) = rows[col].clone();
        for (r, (a, b)) in rows.iter_mut().enumerate() {
            if r == col || a[col].is_zero() {
                continue;
            }
            let f = a[col].clone() / &piv;
            for (x, y) in a.iter_mut().zip(&prow) {
                *x = x.clone() - f.clone() * y;
            }
            *b = b.clone() - f * &prhs;
        }
    }
    Some(rows.into_iter().enumerate().map(|(i, (a, b))| b / &a[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{rat, Bounds, Direction};

    #[test]
    fn simplex_corners() {
        let mut lp = LinearProgram::<Rational>::new(Direction::Minimize, 3);
        lp.add_row(vec![rat(1, 1); 3], Sense::Eq, rat(1, 1));
        let v = vertex_enumerate(&lp, DEFAULT_VERTEX_DIM_CAP).unwrap();
        assert_eq!(v.len(), 3);
        for k in 0..3 {
            let mut e = vec![rat(0, 1); 3];
            e[k] = rat(1, 1);
            assert!(v.contains(&e));
        }
    }

    #[test]
    fn line_through_box() {
        let mut lp = LinearProgram::<Rational>::new(Direction::Minimize, 2);
        lp.bounds = vec![Bounds::between(rat(0, 1), rat(1, 2)); 2];
        lp.add_row(vec![rat(1, 1), rat(1, 1)], Sense::Eq, rat(2, 3));
        let v = vertex_enumerate(&lp, DEFAULT_VERTEX_DIM_CAP).unwrap();
        assert_eq!(v, vec![vec![rat(1, 6), rat(1, 2)], vec![rat(1, 2), rat(1, 6)]]);
    }

    #[test]
    fn box_corners() {
        let mut lp = LinearProgram::<Rational>::new(Direction::Minimize, 2);
        lp.bounds = vec![Bounds::between(rat(0, 1), rat(1, 2)); 2];
        assert_eq!(vertex_enumerate(&lp, DEFAULT_VERTEX_DIM_CAP).unwrap().len(), 4);
    }

    #[test]
    fn infeasible_is_empty() {
        let mut lp = LinearProgram::<Rational>::new(Direction::Minimize, 1);
        lp.bounds = vec![Bounds::between(rat(0, 1), rat(1, 1))];
        lp.add_row(vec![rat(1, 1)], Sense::Ge, rat(2, 1));
        assert!(vertex_enumerate(&lp, DEFAULT_VERTEX_DIM_CAP).unwrap().is_empty());
    }

    #[test]
    fn refuses_above_cap() {
        let lp = LinearProgram::<Rational>::new(Direction::Minimize, 13);
        assert!(matches!(vertex_enumerate(&lp, 12), Err(LpError::TooLarge(_))));
    }
}
