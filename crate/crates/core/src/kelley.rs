//! Kelley's cutting-plane method for piecewise-linear convex (or concave)
//! functions over a box.
//!
//! The oracle must return the value together with the gradient of an
//! affine piece active at the query point. In exact arithmetic the method
//! then terminates after finitely many cuts with the exact optimum.

use std::cmp::Ordering;

use robusthedge_lp::{Bounds, Direction, LinearProgram, Scalar, Sense, Solver, SolverOptions};

use crate::CoreError;

#[derive(Debug, Clone)]
pub(crate) struct KelleyResult<S> {
    /// Best oracle value found.
    pub value: S,
    pub argopt: Vec<S>,
    /// Bound from the cutting-plane model (below `value` when minimizing).
    pub bound: S,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) struct Kelley<S> {
    pub lo: Vec<S>,
    pub hi: Vec<S>,
    pub maximize: bool,
    pub tol: f64,
    pub max_iter: usize,
}

impl<S: Scalar> Kelley<S> {
    pub fn new(lo: Vec<S>, hi: Vec<S>, maximize: bool, tol: f64, max_iter: usize) -> Self {
        Kelley { lo, hi, maximize, tol, max_iter }
    }

    fn better(&self, a: &S, b: &S) -> bool {
        if self.maximize {
            a > b
        } else {
            a < b
        }
    }

    fn gap_closed(&self, best: &S, bound: &S) -> bool {
        let gap = if self.maximize { bound.clone() - best } else { best.clone() - bound };
        if S::EXACT {
            !gap.is_positive()
        } else {
            gap.to_f64() <= self.tol * (1.0 + best.to_f64().abs()).max(1.0) * 10.0
        }
    }

    /// Runs from `start` (or the box center).
    pub fn run<F>(&self, start: Option<Vec<S>>, mut oracle: F) -> Result<KelleyResult<S>, CoreError>
    where
        F: FnMut(&[S]) -> Result<(S, Vec<S>), CoreError>,
    {
        let e = self.lo.len();
        let two = S::from_i64(2);
        let mut h = start.unwrap_or_else(|| {
            self.lo.iter().zip(&self.hi).map(|(a, b)| (a.clone() + b) / &two).collect()
        });
        let (f0, g0) = oracle(&h)?;
        if e == 0 {
            return Ok(KelleyResult { bound: f0.clone(), value: f0, argopt: h, iterations: 1, converged: true });
        }
        let mut best = f0.clone();
        let mut best_h = h.clone();
        let mut lp = LinearProgram::<S>::new(if self.maximize { Direction::Maximize } else { Direction::Minimize }, e + 1);
        for j in 0..e {
            lp.bounds[j] = Bounds::between(self.lo[j].clone(), self.hi[j].clone());
        }
        lp.bounds[e] = Bounds::free();
        lp.objective[e] = S::one();
        let sense = if self.maximize { Sense::Le } else { Sense::Ge };
        let cut = |lp: &mut LinearProgram<S>, f: &S, g: &[S], h: &[S]| {
            let mut coeffs: Vec<S> = g.iter().map(|x| -x.clone()).collect();
            coeffs.push(S::one());
            let mut rhs = f.clone();
            for (gi, hi) in g.iter().zip(h) {
                rhs = rhs - gi.clone() * hi;
            }
            lp.add_row(coeffs, sense, rhs);
        };
        cut(&mut lp, &f0, &g0, &h);
        let solver = Solver::new(SolverOptions { tol: self.tol.min(1e-9), max_iter: 200_000 });
        let mut bound = f0.clone();
        for it in 1..=self.max_iter {
            let out = solver.solve(&lp)?;
            if !out.is_optimal() {
                return Err(CoreError::Invalid(format!("cutting-plane model is {:?}", out.status)));
            }
            bound = out.objective.clone();
            if self.gap_closed(&best, &bound) {
                return Ok(KelleyResult { value: best, argopt: best_h, bound, iterations: it, converged: true });
            }
            h = out.x[..e].to_vec();
            let (f, g) = oracle(&h)?;
            if self.better(&f, &best) {
                best = f.clone();
                best_h = h.clone();
            }
            // a cut that does not move the model at h means no progress is possible
            let model_at_h = out.x[e].clone();
            let stalled = f.cmp_tol(&model_at_h, if S::EXACT { 0.0 } else { self.tol }) == Ordering::Equal;
            if stalled {
                let converged = S::EXACT || self.gap_closed(&f, &bound);
                return Ok(KelleyResult { value: best, argopt: best_h, bound, iterations: it, converged });
            }
            cut(&mut lp, &f, &g, &h);
        }
        Ok(KelleyResult { value: best, argopt: best_h, bound, iterations: self.max_iter, converged: false })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use robusthedge_lp::{rat, Rational, Signed};

    #[test]
    fn minimizes_abs_sum_exactly() {
        // f(h) = |h0 - 1/3| + |h1 + 2|
        let k = Kelley::new(vec![rat(-5, 1); 2], vec![rat(5, 1); 2], false, 0.0, 100);
        let r = k
            .run(None, |h: &[Rational]| {
                let a = h[0].clone() - rat(1, 3);
                let b = h[1].clone() + rat(2, 1);
                let sg = |x: &Rational| if x.is_negative() { rat(-1, 1) } else { rat(1, 1) };
                Ok((a.abs() + b.abs(), vec![sg(&a), sg(&b)]))
            })
            .unwrap();
        assert!(r.converged);
        assert_eq!(r.value, rat(0, 1));
        assert_eq!(r.argopt, vec![rat(1, 3), rat(-2, 1)]);
    }

    #[test]
    fn maximizes_concave_in_float() {
        let k = Kelley::new(vec![-4.0], vec![4.0], true, 1e-9, 100);
        let r = k.run(None, |h: &[f64]| Ok((1.0 - (h[0] - 0.5).abs(), vec![if h[0] < 0.5 { 1.0 } else { -1.0 }]))).unwrap();
        assert!((r.value - 1.0).abs() < 1e-7);
    }
}
