//! Two-phase revised simplex with an explicit dense basis inverse.
//!
//! Entering and leaving choices both follow Bland's smallest-index rule,
//! so the method terminates on degenerate programs without perturbation.

use std::cmp::Ordering;

use crate::program::{dot, Direction, LinearProgram, Sense};
use crate::{Arithmetic, LpError, Rational, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Result of a solve.
///
/// `duals` is set only for `Optimal`, `ray` only for `Unbounded`, and
/// `farkas` only for `Infeasible`. Row multipliers follow the Lagrangian
/// sign convention of [`dual_objective`].
#[derive(Debug, Clone)]
pub struct LpOutcome<T> {
    pub status: Status,
    pub x: Vec<T>,
    pub objective: T,
    pub duals: Option<Vec<T>>,
    pub ray: Option<Vec<T>>,
    pub farkas: Option<Vec<T>>,
    pub iterations: usize,
}

impl<T> LpOutcome<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Zero band for float mode; ignored by the exact backend.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-9, max_iter: 200_000 }
    }
}

/// Solves `lp` with default options.
pub fn solve<T: Scalar>(lp: &LinearProgram<T>) -> Result<LpOutcome<T>, LpError> {
    Solver::new(SolverOptions::default()).solve(lp)
}

/// Solves a rational program in the requested arithmetic. Float results
/// are converted back to rationals (so they carry the float rounding).
pub fn solve_lp(lp: &LinearProgram<Rational>, arithmetic: Arithmetic) -> Result<LpOutcome<Rational>, LpError> {
    match arithmetic {
        Arithmetic::Exact => solve(lp),
        Arithmetic::Float => {
            let flp = LinearProgram::<f64> {
                direction: lp.direction,
                objective: lp.objective.iter().map(f64::from_rational).collect(),
                rows: lp
                    .rows
                    .iter()
                    .map(|r| crate::program::Row {
                        coeffs: r.coeffs.iter().map(f64::from_rational).collect(),
                        sense: r.sense,
                        rhs: f64::from_rational(&r.rhs),
                    })
                    .collect(),
                bounds: lp
                    .bounds
                    .iter()
                    .map(|b| crate::program::Bounds {
                        lower: b.lower.as_ref().map(f64::from_rational),
                        upper: b.upper.as_ref().map(f64::from_rational),
                    })
                    .collect(),
            };
            let out = solve(&flp)?;
            let conv = |v: Vec<f64>| v.iter().map(Scalar::to_rational).collect::<Vec<_>>();
            Ok(LpOutcome {
                status: out.status,
                x: conv(out.x),
                objective: out.objective.to_rational(),
                duals: out.duals.map(conv),
                ray: out.ray.map(conv),
                farkas: out.farkas.map(conv),
                iterations: out.iterations,
            })
        }
    }
}

/// Lagrangian dual value of `lp` at row multipliers `y`.
///
/// For minimization the multipliers satisfy `y >= 0` on `Ge` rows and
/// `y <= 0` on `Le` rows; maximization flips both. Returns `None` when the
/// Lagrangian is unbounded over the variable box (infinite dual value).
pub fn dual_objective<T: Scalar>(lp: &LinearProgram<T>, y: &[T]) -> Option<T> {
    let mut value = T::zero();
    for (row, yr) in lp.rows.iter().zip(y) {
        value = value + yr.clone() * &row.rhs;
    }
    for j in 0..lp.num_vars() {
        let mut d = lp.objective[j].clone();
        for (row, yr) in lp.rows.iter().zip(y) {
            if !row.coeffs[j].is_zero() {
                d = d - yr.clone() * &row.coeffs[j];
            }
        }
        if d.is_zero() {
            continue;
        }
        // minimize: pick the bound that makes d*x smallest; maximize: largest.
        let want_low = (lp.direction == Direction::Minimize) == d.is_positive();
        let b = &lp.bounds[j];
        let bound = if want_low { b.lower.as_ref() } else { b.upper.as_ref() };
        value = value + d * bound?;
    }
    Some(value)
}

/// Checks a Farkas certificate: every feasible `x` satisfies
/// `sum_r y_r a_r x >= sum_r y_r b_r`, yet the left side is bounded above
/// by something smaller over the variable box.
pub fn verify_farkas<T: Scalar>(lp: &LinearProgram<T>, y: &[T], tol: f64) -> bool {
    if y.len() != lp.rows.len() {
        return false;
    }
    let mut rhs = T::zero();
    let mut combined = vec![T::zero(); lp.num_vars()];
    for (row, yr) in lp.rows.iter().zip(y) {
        let ok = match row.sense {
            Sense::Le => !yr.is_pos(tol),
            Sense::Ge => !yr.is_neg(tol),
            Sense::Eq => true,
        };
        if !ok {
            return false;
        }
        rhs = rhs + yr.clone() * &row.rhs;
        for (c, a) in combined.iter_mut().zip(&row.coeffs) {
            if !a.is_zero() {
                *c = c.clone() + yr.clone() * a;
            }
        }
    }
    let mut max_lhs = T::zero();
    for (c, b) in combined.iter().zip(&lp.bounds) {
        match c.sign(tol) {
            Ordering::Equal => {}
            Ordering::Greater => match &b.upper {
                Some(u) => max_lhs = max_lhs + c.clone() * u,
                None => return false,
            },
            Ordering::Less => match &b.lower {
                Some(l) => max_lhs = max_lhs + c.clone() * l,
                None => return false,
            },
        }
    }
    max_lhs.cmp_tol(&rhs, tol) == Ordering::Less
}

/// Checks an unbounded ray: it keeps every row and bound satisfied when
/// added to a feasible point, and strictly improves the objective.
pub fn verify_ray<T: Scalar>(lp: &LinearProgram<T>, r: &[T], tol: f64) -> bool {
    if r.len() != lp.num_vars() {
        return false;
    }
    for row in &lp.rows {
        let a = dot(&row.coeffs, r);
        let ok = match row.sense {
            Sense::Le => !a.is_pos(tol),
            Sense::Ge => !a.is_neg(tol),
            Sense::Eq => a.is_zero_tol(tol),
        };
        if !ok {
            return false;
        }
    }
    for (rj, b) in r.iter().zip(&lp.bounds) {
        if b.lower.is_some() && rj.is_neg(tol) {
            return false;
        }
        if b.upper.is_some() && rj.is_pos(tol) {
            return false;
        }
    }
    let gain = dot(&lp.objective, r);
    match lp.direction {
        Direction::Minimize => gain.is_neg(tol),
        Direction::Maximize => gain.is_pos(tol),
    }
}

#[derive(Debug, Clone)]
enum VarMap<T> {
    /// x = lower + col
    Shift { col: usize, lower: T },
    /// x = upper - col
    Reflect { col: usize, upper: T },
    /// x = pos - neg
    Split { pos: usize, neg: usize },
}

/// Simplex driver. Each call to [`Solver::solve`] builds its own working
/// state, so one `Solver` may be reused sequentially.
#[derive(Debug, Clone, Default)]
pub struct Solver {
    pub options: SolverOptions,
}

struct StandardForm<T> {
    cols: Vec<Vec<(usize, T)>>,
    b: Vec<T>,
    cost: Vec<T>,
    n_real: usize,
    /// Original row r sits at standard row r with this sign.
    row_sign: Vec<bool>,
    var_map: Vec<VarMap<T>>,
    /// Slack column that can start basic in each row, if any.
    unit_slack: Vec<Option<usize>>,
}

impl Solver {
    pub fn new(options: SolverOptions) -> Self {
        Solver { options }
    }

    pub fn solve<T: Scalar>(&self, lp: &LinearProgram<T>) -> Result<LpOutcome<T>, LpError> {
        lp.validate()?;
        let tol = self.options.tol;
        let sf = standard_form(lp);
        let m = sf.b.len();
        let mut cols = sf.cols.clone();
        let mut basis = Vec::with_capacity(m);
        let mut art_rows = Vec::new();
        for i in 0..m {
            match sf.unit_slack[i] {
                Some(c) => basis.push(c),
                None => {
                    cols.push(vec![(i, T::one())]);
                    basis.push(cols.len() - 1);
                    art_rows.push(i);
                }
            }
        }
        let n_total = cols.len();
        let mut tab = Tableau::new(cols, sf.b.clone(), basis, tol);
        let mut iterations = 0usize;

        if !art_rows.is_empty() {
            let mut c1 = vec![T::zero(); n_total];
            for c in c1.iter_mut().skip(sf.n_real) {
                *c = T::one();
            }
            let end = tab.run(&c1, n_total, self.options.max_iter, &mut iterations)?;
            debug_assert!(matches!(end, PhaseEnd::Optimal));
            let phase1: T = tab.objective(&c1);
            if phase1.is_pos(tol) {
                let y = tab.duals(&c1);
                let farkas = (0..lp.rows.len())
                    .map(|r| if sf.row_sign[r] { y[r].clone() } else { -y[r].clone() })
                    .collect();
                return Ok(LpOutcome {
                    status: Status::Infeasible,
                    x: Vec::new(),
                    objective: T::zero(),
                    duals: None,
                    ray: None,
                    farkas: Some(farkas),
                    iterations,
                });
            }
            tab.drive_out_artificials(sf.n_real, &mut iterations);
        }

        let mut c2 = sf.cost.clone();
        c2.resize(n_total, T::zero());
        let end = tab.run(&c2, sf.n_real, self.options.max_iter, &mut iterations)?;
        let xs = tab.primal();
        let x = map_back(&sf.var_map, &xs);
        let objective = lp.objective_value(&x);

        if !T::EXACT {
            let viol = lp.max_violation(&x).to_f64();
            let scale = 1.0 + lp.rows.iter().map(|r| r.rhs.to_f64().abs()).fold(0.0, f64::max);
            if !viol.is_finite() || viol > 1e3 * tol * scale {
                return Err(LpError::NumericalBreakdown(format!(
                    "float solve left a residual of {viol:e}; rerun in exact mode"
                )));
            }
        }

        match end {
            PhaseEnd::Optimal => {
                let y = tab.duals(&c2);
                let flip = lp.direction == Direction::Maximize;
                let duals = (0..lp.rows.len())
                    .map(|r| {
                        let v = if sf.row_sign[r] { y[r].clone() } else { -y[r].clone() };
                        if flip {
                            -v
                        } else {
                            v
                        }
                    })
                    .collect();
                Ok(LpOutcome {
                    status: Status::Optimal,
                    x,
                    objective,
                    duals: Some(duals),
                    ray: None,
                    farkas: None,
                    iterations,
                })
            }
            PhaseEnd::Unbounded { entering, direction } => {
                let mut rs = vec![T::zero(); n_total];
                rs[entering] = T::one();
                for (k, dk) in direction.iter().enumerate() {
                    if !dk.is_zero() {
                        rs[tab.basis[k]] = -dk.clone();
                    }
                }
                let ray = map_ray(&sf.var_map, &rs);
                Ok(LpOutcome {
                    status: Status::Unbounded,
                    x,
                    objective,
                    duals: None,
                    ray: Some(ray),
                    farkas: None,
                    iterations,
                })
            }
        }
    }
}

fn standard_form<T: Scalar>(lp: &LinearProgram<T>) -> StandardForm<T> {
    let n = lp.num_vars();
    let sign = match lp.direction {
        Direction::Minimize => T::one(),
        Direction::Maximize => -T::one(),
    };
    let mut var_map = Vec::with_capacity(n);
    let mut n_struct = 0usize;
    let mut bound_rows: Vec<(usize, T)> = Vec::new();
    for b in &lp.bounds {
        match (&b.lower, &b.upper) {
            (Some(l), u) => {
                let col = n_struct;
                n_struct += 1;
                if let Some(u) = u {
                    bound_rows.push((col, u.clone() - l));
                }
                var_map.push(VarMap::Shift { col, lower: l.clone() });
            }
            (None, Some(u)) => {
                var_map.push(VarMap::Reflect { col: n_struct, upper: u.clone() });
                n_struct += 1;
            }
            (None, None) => {
                var_map.push(VarMap::Split { pos: n_struct, neg: n_struct + 1 });
                n_struct += 2;
            }
        }
    }

    let m = lp.rows.len() + bound_rows.len();
    let mut cols: Vec<Vec<(usize, T)>> = vec![Vec::new(); n_struct];
    let mut cost = vec![T::zero(); n_struct];
    let mut b = Vec::with_capacity(m);
    let mut row_sign = Vec::with_capacity(m);
    let mut senses = Vec::with_capacity(m);

    for (j, vm) in var_map.iter().enumerate() {
        let c = sign.clone() * &lp.objective[j];
        match vm {
            VarMap::Shift { col, .. } => cost[*col] = c,
            VarMap::Reflect { col, .. } => cost[*col] = -c,
            VarMap::Split { pos, neg } => {
                cost[*neg] = -c.clone();
                cost[*pos] = c;
            }
        }
    }

    for (i, row) in lp.rows.iter().enumerate() {
        let mut rhs = row.rhs.clone();
        let mut entries: Vec<(usize, T)> = Vec::new();
        for (j, a) in row.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            match &var_map[j] {
                VarMap::Shift { col, lower } => {
                    rhs = rhs - a.clone() * lower;
                    entries.push((*col, a.clone()));
                }
                VarMap::Reflect { col, upper } => {
                    rhs = rhs - a.clone() * upper;
                    entries.push((*col, -a.clone()));
                }
                VarMap::Split { pos, neg } => {
                    entries.push((*pos, a.clone()));
                    entries.push((*neg, -a.clone()));
                }
            }
        }
        let positive = !rhs.is_negative();
        for (col, a) in entries {
            cols[col].push((i, if positive { a } else { -a }));
        }
        b.push(if positive { rhs } else { -rhs });
        row_sign.push(positive);
        senses.push(row.sense);
    }
    for (k, (col, width)) in bound_rows.into_iter().enumerate() {
        let i = lp.rows.len() + k;
        cols[col].push((i, T::one()));
        b.push(width);
        row_sign.push(true);
        senses.push(Sense::Le);
    }

    let mut unit_slack = vec![None; m];
    for i in 0..m {
        let coef = match senses[i] {
            Sense::Le => T::one(),
            Sense::Ge => -T::one(),
            Sense::Eq => continue,
        };
        let coef = if row_sign[i] { coef } else { -coef };
        let is_unit = coef.is_positive();
        cols.push(vec![(i, coef)]);
        cost.push(T::zero());
        if is_unit {
            unit_slack[i] = Some(cols.len() - 1);
        }
    }
    let n_real = cols.len();
    StandardForm { cols, b, cost, n_real, row_sign, var_map, unit_slack }
}

fn map_back<T: Scalar>(var_map: &[VarMap<T>], xs: &[T]) -> Vec<T> {
    var_map
        .iter()
        .map(|vm| match vm {
            VarMap::Shift { col, lower } => lower.clone() + &xs[*col],
            VarMap::Reflect { col, upper } => upper.clone() - &xs[*col],
            VarMap::Split { pos, neg } => xs[*pos].clone() - &xs[*neg],
        })
        .collect()
}

fn map_ray<T: Scalar>(var_map: &[VarMap<T>], rs: &[T]) -> Vec<T> {
    var_map
        .iter()
        .map(|vm| match vm {
            VarMap::Shift { col, .. } => rs[*col].clone(),
            VarMap::Reflect { col, .. } => -rs[*col].clone(),
            VarMap::Split { pos, neg } => rs[*pos].clone() - &rs[*neg],
        })
        .collect()
}

enum PhaseEnd<T> {
    Optimal,
    Unbounded { entering: usize, direction: Vec<T> },
}

struct Tableau<T> {
    cols: Vec<Vec<(usize, T)>>,
    b: Vec<T>,
    basis: Vec<usize>,
    /// Position of each column in the basis.
    pos: Vec<Option<usize>>,
    binv: Vec<Vec<T>>,
    xb: Vec<T>,
    tol: f64,
    pivots_since_refactor: usize,
}

impl<T: Scalar> Tableau<T> {
    fn new(cols: Vec<Vec<(usize, T)>>, b: Vec<T>, basis: Vec<usize>, tol: f64) -> Self {
        let m = b.len();
        let mut pos = vec![None; cols.len()];
        let mut binv = vec![vec![T::zero(); m]; m];
        // Initial basis columns are +/- unit vectors with +1 on their row.
        for (k, &c) in basis.iter().enumerate() {
            pos[c] = Some(k);
            binv[k][k] = T::one();
        }
        let xb = b.clone();
        Tableau { cols, b, basis, pos, binv, xb, tol, pivots_since_refactor: 0 }
    }

    fn objective(&self, costs: &[T]) -> T {
        let mut v = T::zero();
        for (k, &c) in self.basis.iter().enumerate() {
            if !costs[c].is_zero() {
                v = v + costs[c].clone() * &self.xb[k];
            }
        }
        v
    }

    fn duals(&self, costs: &[T]) -> Vec<T> {
        let m = self.b.len();
        let mut y = vec![T::zero(); m];
        for (k, &c) in self.basis.iter().enumerate() {
            let ck = &costs[c];
            if ck.is_zero() {
                continue;
            }
            for (yi, bki) in y.iter_mut().zip(&self.binv[k]) {
                if !bki.is_zero() {
                    *yi = yi.clone() + ck.clone() * bki;
                }
            }
        }
        y
    }

    fn column(&self, j: usize) -> Vec<T> {
        let m = self.b.len();
        let mut d = vec![T::zero(); m];
        for (k, dk) in d.iter_mut().enumerate() {
            let row = &self.binv[k];
            let mut acc = T::zero();
            for (i, a) in &self.cols[j] {
                if !row[*i].is_zero() {
                    acc = acc + row[*i].clone() * a;
                }
            }
            *dk = acc;
        }
        d
    }

    fn reduced_cost(&self, j: usize, costs: &[T], y: &[T]) -> T {
        let mut r = costs[j].clone();
        for (i, a) in &self.cols[j] {
            if !y[*i].is_zero() {
                r = r - y[*i].clone() * a;
            }
        }
        r
    }

    fn pivot(&mut self, r: usize, j: usize, d: &[T]) {
        let piv = d[r].clone();
        for v in self.binv[r].iter_mut() {
            if !v.is_zero() {
                *v = v.clone() / &piv;
            }
        }
        self.xb[r] = self.xb[r].clone() / &piv;
        let pivot_row = self.binv[r].clone();
        let xr = self.xb[r].clone();
        for (k, dk) in d.iter().enumerate() {
            if k == r || dk.is_zero() {
                continue;
            }
            for (v, p) in self.binv[k].iter_mut().zip(&pivot_row) {
                if !p.is_zero() {
                    *v = v.clone() - dk.clone() * p;
                }
            }
            self.xb[k] = self.xb[k].clone() - dk.clone() * &xr;
        }
        let leaving = self.basis[r];
        self.pos[leaving] = None;
        self.pos[j] = Some(r);
        self.basis[r] = j;
        self.pivots_since_refactor += 1;
        if !T::EXACT && self.pivots_since_refactor >= 64 {
            self.refactor();
        }
    }

    /// Recomputes the inverse from scratch (float mode only).
    fn refactor(&mut self) {
        let m = self.b.len();
        let mut a = vec![vec![T::zero(); 2 * m]; m];
        for (k, &c) in self.basis.iter().enumerate() {
            for (i, v) in &self.cols[c] {
                a[*i][k] = v.clone();
            }
        }
        for (i, row) in a.iter_mut().enumerate() {
            row[m + i] = T::one();
        }
        for col in 0..m {
            let p = (col..m)
                .max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap_or(Ordering::Equal))
                .unwrap_or(col);
            if a[p][col].is_zero() {
                return; // singular; keep the updated inverse
            }
            a.swap(col, p);
            let piv = a[col][col].clone();
            for v in a[col].iter_mut() {
                *v = v.clone() / &piv;
            }
            let prow = a[col].clone();
            for (i, row) in a.iter_mut().enumerate() {
                if i == col || row[col].is_zero() {
                    continue;
                }
                let f = row[col].clone();
                for (v, p) in row.iter_mut().zip(&prow) {
                    *v = v.clone() - f.clone() * p;
                }
            }
        }
        // a = [I | B^{-1}] with rows in basis order
        for (k, row) in a.into_iter().enumerate() {
            self.binv[k] = row[m..].to_vec();
        }
        self.xb = (0..m).map(|k| dot(&self.binv[k], &self.b)).collect();
        self.pivots_since_refactor = 0;
    }

    fn run(
        &mut self,
        costs: &[T],
        allowed: usize,
        max_iter: usize,
        iterations: &mut usize,
    ) -> Result<PhaseEnd<T>, LpError> {
        let tol = self.tol;
        loop {
            if *iterations >= max_iter {
                return Err(LpError::IterationLimit(max_iter));
            }
            let y = self.duals(costs);
            let entering = (0..allowed).find(|&j| self.pos[j].is_none() && self.reduced_cost(j, costs, &y).is_neg(tol));
            let Some(j) = entering else {
                return Ok(PhaseEnd::Optimal);
            };
            let d = self.column(j);
            let mut leave: Option<(usize, T)> = None;
            for (k, dk) in d.iter().enumerate() {
                if !dk.is_pos(tol) {
                    continue;
                }
                let ratio = self.xb[k].clone() / dk;
                leave = match leave {
                    None => Some((k, ratio)),
                    Some((bk, best)) => match ratio.cmp_tol(&best, tol) {
                        Ordering::Less => Some((k, ratio)),
                        Ordering::Equal if self.basis[k] < self.basis[bk] => Some((k, ratio)),
                        _ => Some((bk, best)),
                    },
                };
            }
            let Some((r, _)) = leave else {
                return Ok(PhaseEnd::Unbounded { entering: j, direction: d });
            };
            self.pivot(r, j, &d);
            if !T::EXACT {
                for v in self.xb.iter_mut() {
                    if v.is_neg(0.0) && v.is_zero_tol(tol) {
                        *v = T::zero();
                    }
                }
            }
            *iterations += 1;
        }
    }

    /// Pivots zero-level artificial columns out of the basis where possible.
    fn drive_out_artificials(&mut self, n_real: usize, iterations: &mut usize) {
        for r in 0..self.basis.len() {
            if self.basis[r] < n_real {
                continue;
            }
            let row = self.binv[r].clone();
            let candidate = (0..n_real).find(|&j| {
                if self.pos[j].is_some() {
                    return false;
                }
                let mut acc = T::zero();
                for (i, a) in &self.cols[j] {
                    acc = acc + row[*i].clone() * a;
                }
                !acc.is_zero_tol(self.tol)
            });
            if let Some(j) = candidate {
                let d = self.column(j);
                self.pivot(r, j, &d);
                *iterations += 1;
            }
        }
    }

    fn primal(&self) -> Vec<T> {
        let mut x = vec![T::zero(); self.cols.len()];
        for (k, &c) in self.basis.iter().enumerate() {
            x[c] = self.xb[k].clone();
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::Bounds;
    use crate::rat;

    fn r(n: i64, d: i64) -> Rational {
        rat(n, d)
    }

    #[test]
    fn single_bound_active() {
        let mut lp = LinearProgram::<Rational>::new(Direction::Maximize, 1);
        lp.objective[0] = r(1, 1);
        lp.add_row(vec![r(1, 1)], Sense::Le, r(3, 1));
        let out = solve(&lp).unwrap();
        assert_eq!(out.status, Status::Optimal);
        assert_eq!(out.objective, r(3, 1));
        assert_eq!(out.x, vec![r(3, 1)]);
    }

    #[test]
    fn martingale_equation_forces_half() {
        let mut lp = LinearProgram::<Rational>::new(Direction::Minimize, 1);
        lp.bounds[0] = Bounds::between(r(0, 1), r(1, 1));
        // 1.5 q + 0.5 (1 - q) = 1  <=>  q = 1/2
        lp.add_row(vec![r(1, 1)], Sense::Eq, r(1, 2));
        let out = solve(&lp).unwrap();
        assert_eq!(out.x, vec![r(1, 2)]);
    }

    #[test]
    fn segment_minimum_at_vertex() {
        let mut lp = LinearProgram::<Rational>::new(Direction::Minimize, 2);
        lp.objective = vec![r(1, 2), r(1, 1)];
        lp.bounds = vec![Bounds::between(r(0, 1), r(1, 2)), Bounds::between(r(0, 1), r(1, 2))];
        lp.add_row(vec![r(1, 1), r(1, 1)], Sense::Eq, r(2, 3));
        let out = solve(&lp).unwrap();
        assert_eq!(out.objective, r(5, 12));
        assert_eq!(out.x, vec![r(1, 2), r(1, 6)]);
        let y = out.duals.unwrap();
        assert_eq!(dual_objective(&lp, &y), Some(r(5, 12)));
    }

    #[test]
    fn infeasible_has_farkas() {
        let mut lp = LinearProgram::<Rational>::new(Direction::Minimize, 2);
        lp.add_row(vec![r(1, 1), r(1, 1)], Sense::Le, r(1, 1));
        lp.add_row(vec![r(1, 1), r(0, 1)], Sense::Ge, r(2, 1));
        let out = solve(&lp).unwrap();
        assert_eq!(out.status, Status::Infeasible);
        assert!(verify_farkas(&lp, out.farkas.as_ref().unwrap(), 0.0));
    }

    #[test]
    fn infeasible_against_box() {
        let mut lp = LinearProgram::<Rational>::new(Direction::Maximize, 2);
        lp.bounds = vec![Bounds::between(r(-1, 1), r(1, 1)), Bounds::free()];
        lp.add_row(vec![r(2, 1), r(0, 1)], Sense::Ge, r(3, 1));
        lp.add_row(vec![r(0, 1), r(1, 1)], Sense::Eq, r(-4, 1));
        let out = solve(&lp).unwrap();
        assert_eq!(out.status, Status::Infeasible);
        assert!(verify_farkas(&lp, out.farkas.as_ref().unwrap(), 0.0));
    }

    #[test]
    fn unbounded_has_ray() {
        let mut lp = LinearProgram::<Rational>::new(Direction::Maximize, 2);
        lp.objective = vec![r(1, 1), r(1, 1)];
        lp.bounds[1] = Bounds::free();
        lp.add_row(vec![r(1, 1), r(-1, 1)], Sense::Le, r(1, 1));
        let out = solve(&lp).unwrap();
        assert_eq!(out.status, Status::Unbounded);
        assert!(verify_ray(&lp, out.ray.as_ref().unwrap(), 0.0));
    }

    #[test]
    fn dimension_mismatch_is_structural() {
        let mut lp = LinearProgram::<Rational>::new(Direction::Minimize, 2);
        lp.rows.push(crate::program::Row { coeffs: vec![r(1, 1)], sense: Sense::Le, rhs: r(1, 1) });
        assert!(matches!(solve(&lp), Err(LpError::Dimension(_))));
    }

    #[test]
    fn float_backend_matches() {
        let mut lp = LinearProgram::<Rational>::new(Direction::Minimize, 2);
        lp.objective = vec![r(1, 2), r(1, 1)];
        lp.bounds = vec![Bounds::between(r(0, 1), r(1, 2)), Bounds::between(r(0, 1), r(1, 2))];
        lp.add_row(vec![r(1, 1), r(1, 1)], Sense::Eq, r(2, 3));
        let out = solve_lp(&lp, Arithmetic::Float).unwrap();
        assert!((out.objective.to_f64() - 5.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's classic cycling instance.
        let mut lp = LinearProgram::<Rational>::new(Direction::Minimize, 4);
        lp.objective = vec![r(-3, 4), r(150, 1), r(-1, 50), r(6, 1)];
        lp.add_row(vec![r(1, 4), r(-60, 1), r(-1, 25), r(9, 1)], Sense::Le, r(0, 1));
        lp.add_row(vec![r(1, 2), r(-90, 1), r(-1, 50), r(3, 1)], Sense::Le, r(0, 1));
        lp.add_row(vec![r(0, 1), r(0, 1), r(1, 1), r(0, 1)], Sense::Le, r(1, 1));
        let out = solve(&lp).unwrap();
        assert_eq!(out.status, Status::Optimal);
        assert_eq!(out.objective, r(-1, 20));
    }
}
