//! One-step expectations as hull evaluations.
//!
//! Over the martingale polytope `{w >= 0, sum w = 1, sum w_j x_j = s}` the
//! maximum of `sum w_j y_j` is the upper concave envelope of the points
//! `(x_j, y_j)` evaluated at `s`, attained by the two hull vertices that
//! bracket `s`. The minimum is the lower convex envelope.

use std::cmp::Ordering;

use robusthedge_lp::Scalar;

/// Optimal one-step weights: mass `wa` on child position `a` and `wb` on
/// `b`, plus the hull slope at the evaluation point (a hedge ratio).
#[derive(Debug, Clone)]
pub struct StepChoice<S> {
    pub a: usize,
    pub b: usize,
    pub wa: S,
    pub wb: S,
    pub slope: S,
}

#[derive(Debug, Clone)]
pub(crate) struct Hull<S> {
    xs: Vec<S>,
    ys: Vec<S>,
    pos: Vec<usize>,
}

impl<S: Scalar> Hull<S> {
    /// `xs` must be sorted ascending. `upper` selects the concave envelope.
    pub fn build(xs: &[S], ys: &[S], upper: bool, tol: f64) -> Self {
        let mut hx: Vec<S> = Vec::with_capacity(xs.len());
        let mut hy: Vec<S> = Vec::with_capacity(xs.len());
        let mut hp: Vec<usize> = Vec::with_capacity(xs.len());
        let better = |a: &S, b: &S| if upper { a.cmp_tol(b, tol) == Ordering::Greater } else { a.cmp_tol(b, tol) == Ordering::Less };
        for (j, (x, y)) in xs.iter().zip(ys).enumerate() {
            if let Some(lx) = hx.last() {
                if x.cmp_tol(lx, tol) == Ordering::Equal {
                    if better(y, hy.last().unwrap()) {
                        hx.pop();
                        hy.pop();
                        hp.pop();
                    } else {
                        continue;
                    }
                }
            }
            while hx.len() >= 2 {
                let k = hx.len();
                let cross = (hx[k - 1].clone() - &hx[k - 2]) * (y.clone() - &hy[k - 2])
                    - (hy[k - 1].clone() - &hy[k - 2]) * (x.clone() - &hx[k - 2]);
                let drop = if upper { !cross.is_neg(tol) } else { !cross.is_pos(tol) };
                if !drop {
                    break;
                }
                hx.pop();
                hy.pop();
                hp.pop();
            }
            hx.push(x.clone());
            hy.push(y.clone());
            hp.push(j);
        }
        Hull { xs: hx, ys: hy, pos: hp }
    }

    /// Envelope value at `s`, or `None` if `s` lies outside the price range
    /// (empty polytope).
    pub fn eval(&self, s: &S, tol: f64) -> Option<(S, StepChoice<S>)> {
        let n = self.xs.len();
        if n == 0 || s.cmp_tol(&self.xs[0], tol) == Ordering::Less || s.cmp_tol(&self.xs[n - 1], tol) == Ordering::Greater {
            return None;
        }
        // first vertex with x >= s
        let k = self.xs.partition_point(|x| x.cmp_tol(s, tol) == Ordering::Less);
        if k < n && self.xs[k].cmp_tol(s, tol) == Ordering::Equal {
            let slope = if k + 1 < n {
                self.slope(k)
            } else if k > 0 {
                self.slope(k - 1)
            } else {
                S::zero()
            };
            let c = StepChoice { a: self.pos[k], b: self.pos[k], wa: S::one(), wb: S::zero(), slope };
            return Some((self.ys[k].clone(), c));
        }
        let (i, j) = (k - 1, k);
        let span = self.xs[j].clone() - &self.xs[i];
        let wb = (s.clone() - &self.xs[i]) / &span;
        let wa = S::one() - &wb;
        let value = wa.clone() * &self.ys[i] + wb.clone() * &self.ys[j];
        let slope = self.slope(i);
        Some((value, StepChoice { a: self.pos[i], b: self.pos[j], wa, wb, slope }))
    }

    fn slope(&self, i: usize) -> S {
        (self.ys[i + 1].clone() - &self.ys[i]) / (self.xs[i + 1].clone() - &self.xs[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use robusthedge_lp::{rat, Rational};

    fn h(xs: &[i64], ys: &[i64], upper: bool) -> Hull<Rational> {
        let xs: Vec<_> = xs.iter().map(|&x| rat(x, 1)).collect();
        let ys: Vec<_> = ys.iter().map(|&y| rat(y, 1)).collect();
        Hull::build(&xs, &ys, upper, 0.0)
    }

    #[test]
    fn upper_envelope_of_three_points() {
        // children 2, 4, 6 with values 0, 0, 1 at s = 4: max over p of p = 1/2
        let (v, c) = h(&[2, 4, 6], &[0, 0, 1], true).eval(&rat(4, 1), 0.0).unwrap();
        assert_eq!(v, rat(1, 2));
        assert_eq!((c.a, c.b), (0, 2));
        assert_eq!(c.slope, rat(1, 4));
    }

    #[test]
    fn lower_envelope_picks_middle() {
        // children 0, 2, 4 with values 2, 0, 0 at s = 2: min is 0
        let (v, c) = h(&[0, 2, 4], &[2, 0, 0], false).eval(&rat(2, 1), 0.0).unwrap();
        assert_eq!(v, rat(0, 1));
        assert_eq!(c.a, 1);
    }

    #[test]
    fn outside_range_is_empty() {
        assert!(h(&[2, 3], &[0, 0], true).eval(&rat(1, 1), 0.0).is_none());
    }

    #[test]
    fn duplicate_prices_keep_extreme_value() {
        let up = h(&[1, 1, 3], &[5, 7, 0], true);
        assert_eq!(up.eval(&rat(1, 1), 0.0).unwrap().0, rat(7, 1));
        let lo = h(&[1, 1, 3], &[5, 7, 0], false);
        assert_eq!(lo.eval(&rat(1, 1), 0.0).unwrap().0, rat(5, 1));
    }
}
