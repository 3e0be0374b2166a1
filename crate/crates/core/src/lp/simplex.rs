//! Dense bounded-variable primal simplex with Bland's rule.
//!
//! Variables are shifted so every lower bound is zero. Finite upper bounds are
//! handled by bound flips instead of extra rows, so the tableau has one row per
//! inequality. Rows whose shifted right-hand side is negative get an
//! artificial variable for phase one; after phase one the artificials are
//! fixed at zero.

use super::{LinearProgram, LpSolution, LpStatus};
use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-10;
const PHASE1_TOL: f64 = 1e-9;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Status {
    Basic,
    AtLower,
    AtUpper,
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// `rows x cols`, row-major: `B^-1 [A | S | Art]`.
    t: Vec<f64>,
    /// Current values of the basic variables.
    beta: Vec<f64>,
    basis: Vec<usize>,
    status: Vec<Status>,
    upper: Vec<f64>,
    iterations: usize,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, k: usize) -> f64 {
        self.t[i * self.cols + k]
    }

    fn value(&self, k: usize) -> f64 {
        match self.status[k] {
            Status::AtLower => 0.0,
            Status::AtUpper => self.upper[k],
            Status::Basic => {
                let row = self.basis.iter().position(|&b| b == k).unwrap();
                self.beta[row]
            }
        }
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for i in 0..self.rows {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * self.cols..(i + 1) * self.cols];
                for (dk, &a) in d.iter_mut().zip(row) {
                    *dk -= cb * a;
                }
            }
        }
        d
    }

    fn pivot(&mut self, r: usize, k: usize) {
        let cols = self.cols;
        let p = self.t[r * cols + k];
        for v in &mut self.t[r * cols..(r + 1) * cols] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.t[r * cols..(r + 1) * cols].to_vec();
        for i in (0..self.rows).filter(|&i| i != r) {
            let f = self.t[i * cols + k];
            if f != 0.0 {
                for (v, &pr) in self.t[i * cols..(i + 1) * cols].iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
                self.t[i * cols + k] = 0.0;
            }
        }
    }

    /// Maximizes `cost . y`. Returns false when unbounded.
    fn optimize(&mut self, cost: &[f64], max_iter: usize) -> Result<bool> {
        loop {
            if self.iterations >= max_iter {
                return Err(Error::Convergence {
                    iterations: self.iterations,
                    residual: f64::NAN,
                });
            }
            let d = self.reduced_costs(cost);
            // Bland: lowest-index improving variable
            let entering = (0..self.cols).find(|&k| match self.status[k] {
                Status::AtLower => d[k] > COST_TOL && self.upper[k] > 0.0,
                Status::AtUpper => d[k] < -COST_TOL,
                Status::Basic => false,
            });
            let Some(k) = entering else {
                return Ok(true);
            };
            self.iterations += 1;
            let dir = if self.status[k] == Status::AtLower { 1.0 } else { -1.0 };

            // basic value i moves by -dir * t[i][k] * step
            let mut step = self.upper[k];
            let mut leave: Option<(usize, Status)> = None;
            for i in 0..self.rows {
                let coef = -dir * self.at(i, k);
                let limit = if coef < -PIVOT_TOL {
                    Some((self.beta[i].max(0.0) / -coef, Status::AtLower))
                } else if coef > PIVOT_TOL && self.upper[self.basis[i]].is_finite() {
                    let room = (self.upper[self.basis[i]] - self.beta[i]).max(0.0);
                    Some((room / coef, Status::AtUpper))
                } else {
                    None
                };
                if let Some((lim, st)) = limit {
                    let better = match leave {
                        None => lim < step || (lim == step && step.is_finite()),
                        Some((r, _)) => {
                            lim < step || (lim == step && self.basis[i] < self.basis[r])
                        }
                    };
                    if better {
                        step = lim;
                        leave = Some((i, st));
                    }
                }
            }
            if step == f64::INFINITY {
                return Ok(false);
            }
            for i in 0..self.rows {
                let coef = -dir * self.at(i, k);
                self.beta[i] += coef * step;
            }
            match leave {
                None => {
                    self.status[k] = if dir > 0.0 { Status::AtUpper } else { Status::AtLower };
                }
                Some((r, st)) => {
                    let entering_value = if dir > 0.0 { step } else { self.upper[k] - step };
                    let out = self.basis[r];
                    self.status[out] = st;
                    self.pivot(r, k);
                    self.basis[r] = k;
                    self.status[k] = Status::Basic;
                    self.beta[r] = entering_value;
                }
            }
        }
    }
}

/// Solves `max c.x  s.t.  A x <= b,  l <= x <= u`.
pub fn simplex_solve(lp: &LinearProgram) -> Result<LpSolution> {
    lp.check()?;
    let nv = lp.objective.len();
    let nr = lp.rhs.len();

    if lp.lower.iter().zip(&lp.upper).any(|(l, u)| l > u) {
        return Ok(LpSolution::status_only(LpStatus::Infeasible));
    }
    // shift: x = l + y
    let rhs: Vec<f64> = (0..nr)
        .map(|i| {
            lp.rhs[i]
                - lp.matrix[i]
                    .iter()
                    .zip(&lp.lower)
                    .map(|(a, l)| a * l)
                    .sum::<f64>()
        })
        .collect();
    let flipped: Vec<bool> = rhs.iter().map(|&b| b < 0.0).collect();
    let n_art = flipped.iter().filter(|&&f| f).count();
    let cols = nv + nr + n_art;

    let mut t = vec![0.0; nr * cols];
    let mut basis = vec![0; nr];
    let mut status = vec![Status::AtLower; cols];
    let mut upper = vec![f64::INFINITY; cols];
    for k in 0..nv {
        upper[k] = lp.upper[k] - lp.lower[k];
    }
    let mut beta = vec![0.0; nr];
    let mut art = nv + nr;
    for i in 0..nr {
        let sign = if flipped[i] { -1.0 } else { 1.0 };
        for k in 0..nv {
            t[i * cols + k] = sign * lp.matrix[i][k];
        }
        t[i * cols + nv + i] = sign;
        beta[i] = sign * rhs[i];
        if flipped[i] {
            t[i * cols + art] = 1.0;
            basis[i] = art;
            status[art] = Status::Basic;
            art += 1;
        } else {
            basis[i] = nv + i;
            status[nv + i] = Status::Basic;
        }
    }
    let mut tab = Tableau {
        rows: nr,
        cols,
        t,
        beta,
        basis,
        status,
        upper,
        iterations: 0,
    };
    let max_iter = 50 * (cols + nr) + 1000;

    if n_art > 0 {
        let mut cost1 = vec![0.0; cols];
        cost1[nv + nr..].iter_mut().for_each(|c| *c = -1.0);
        tab.optimize(&cost1, max_iter)?;
        let infeas: f64 = (nv + nr..cols).map(|k| tab.value(k)).sum();
        if infeas > PHASE1_TOL * (1.0 + rhs.iter().map(|b| b.abs()).fold(0.0, f64::max)) {
            return Ok(LpSolution::status_only(LpStatus::Infeasible));
        }
        for k in nv + nr..cols {
            tab.upper[k] = 0.0;
        }
        for i in 0..nr {
            if tab.basis[i] >= nv + nr {
                tab.beta[i] = 0.0;
            }
        }
    }

    let mut cost = vec![0.0; cols];
    cost[..nv].copy_from_slice(&lp.objective);
    if !tab.optimize(&cost, max_iter)? {
        return Ok(LpSolution::status_only(LpStatus::Unbounded));
    }

    let x: Vec<f64> = (0..nv).map(|k| lp.lower[k] + tab.value(k).clamp(0.0, tab.upper[k])).collect();
    let d = tab.reduced_costs(&cost);
    let duals: Vec<f64> = (0..nr).map(|i| (-d[nv + i]).max(0.0)).collect();
    let value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        value,
        x,
        duals,
        iterations: tab.iterations,
    })
}
