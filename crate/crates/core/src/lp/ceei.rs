//! Proportional fairness (CEEI with bounds): maximize `sum log x_i` subject
//! to capacity and `x_i <= B_i`.
//!
//! Solved in the dual. For resource prices `lambda >= 0` each user picks
//! `x_i = min(B_i', 1 / (lambda . r_i))`, where `B_i'` also caps the user at
//! what a single resource could hold. The dual has one variable per resource,
//! so a projected Newton method with backtracking is cheap.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ensure_valid, Allocation, Instance};

pub const CEEI_MAX_ITER: usize = 500;

const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct CeeiSolution {
    pub allocation: Allocation,
    /// Resource prices.
    pub prices: Vec<f64>,
    pub iterations: usize,
    /// Projected dual gradient, i.e. the largest violation of feasibility or
    /// of complementary slackness between prices and leftover capacity.
    pub residual: f64,
}

struct Dual<'a> {
    inst: &'a Instance,
    cap: Vec<f64>,
}

impl Dual<'_> {
    fn tasks(&self, lambda: &[f64]) -> Vec<f64> {
        (0..self.inst.n())
            .map(|i| {
                let s: f64 = self.inst.demand_row(i).iter().zip(lambda).map(|(r, l)| r * l).sum();
                if s * self.cap[i] <= 1.0 {
                    self.cap[i]
                } else {
                    (1.0 / s).max(LOG_FLOOR)
                }
            })
            .collect()
    }

    fn consumption(&self, x: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; self.inst.m()];
        for (i, &xi) in x.iter().enumerate() {
            for (cj, &r) in c.iter_mut().zip(self.inst.demand_row(i)) {
                *cj += r * xi;
            }
        }
        c
    }

    /// Dual objective (to be minimized) and its gradient.
    fn eval(&self, lambda: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let x = self.tasks(lambda);
        let c = self.consumption(&x);
        let mut g: f64 = lambda.iter().sum();
        for (i, &xi) in x.iter().enumerate() {
            let s: f64 = self.inst.demand_row(i).iter().zip(lambda).map(|(r, l)| r * l).sum();
            g += xi.ln() - xi * s;
        }
        let grad = c.iter().map(|cj| 1.0 - cj).collect();
        (g, grad, x)
    }

    fn hessian(&self, lambda: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
        let m = self.inst.m();
        let mut h = vec![vec![0.0; m]; m];
        for (i, &xi) in x.iter().enumerate() {
            if xi >= self.cap[i] {
                continue;
            }
            let r = self.inst.demand_row(i);
            let s: f64 = r.iter().zip(lambda).map(|(a, l)| a * l).sum();
            let w = 1.0 / (s * s);
            for a in 0..m {
                for b in 0..m {
                    h[a][b] += w * r[a] * r[b];
                }
            }
        }
        h
    }
}

fn projected_gradient(lambda: &[f64], grad: &[f64]) -> f64 {
    lambda
        .iter()
        .zip(grad)
        .map(|(&l, &g)| if l > 0.0 { g.abs() } else { (-g).max(0.0) })
        .fold(0.0, f64::max)
}

/// Gaussian elimination with partial pivoting; `None` if singular.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Proportionally fair allocation, accurate to `tol` in the projected dual
/// gradient. The returned allocation is scaled into the feasible set.
pub fn solve_ceei(inst: &Instance, tol: f64) -> Result<CeeiSolution> {
    ensure_valid(inst)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let (n, m) = (inst.n(), inst.m());
    let cap: Vec<f64> = (0..n)
        .map(|i| {
            let single = inst
                .demand_row(i)
                .iter()
                .filter(|&&r| r > 0.0)
                .map(|&r| 1.0 / r)
                .fold(f64::INFINITY, f64::min);
            inst.bound(i).min(single)
        })
        .collect();
    let dual = Dual { inst, cap };

    let mut lambda = vec![n as f64; m];
    let (mut g, mut grad, mut x) = dual.eval(&lambda);
    let mut iterations = 0;
    let mut residual = projected_gradient(&lambda, &grad);
    while residual > tol {
        if iterations >= CEEI_MAX_ITER {
            return Err(Error::Convergence { iterations, residual });
        }
        iterations += 1;

        let free: Vec<usize> = (0..m).filter(|&j| lambda[j] > 0.0 || grad[j] < 0.0).collect();
        let h = dual.hessian(&lambda, &x);
        let mut dir = vec![0.0; m];
        let scale = free.iter().map(|&j| h[j][j]).fold(0.0, f64::max);
        if scale > 0.0 {
            let sub: Vec<Vec<f64>> = free
                .iter()
                .map(|&a| {
                    free.iter()
                        .map(|&b| h[a][b] + if a == b { 1e-12 * scale } else { 0.0 })
                        .collect()
                })
                .collect();
            let rhs: Vec<f64> = free.iter().map(|&j| -grad[j]).collect();
            if let Some(d) = solve_dense(sub, rhs) {
                for (k, &j) in free.iter().enumerate() {
                    dir[j] = d[k];
                }
            }
        }
        let newton_ok = dir.iter().zip(&grad).map(|(d, g)| d * g).sum::<f64>() < 0.0;
        if !newton_ok {
            for &j in &free {
                dir[j] = -grad[j];
            }
        }

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..200 {
            let trial: Vec<f64> = lambda.iter().zip(&dir).map(|(l, d)| (l + step * d).max(0.0)).collect();
            let (gt, gradt, xt) = dual.eval(&trial);
            let decrease: f64 = grad.iter().zip(trial.iter().zip(&lambda)).map(|(g, (t, l))| g * (t - l)).sum();
            if gt <= g + 1e-4 * decrease || (gt - g).abs() <= 1e-15 * g.abs().max(1.0) && projected_gradient(&trial, &gradt) < residual {
                lambda = trial;
                g = gt;
                grad = gradt;
                x = xt;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        residual = projected_gradient(&lambda, &grad);
        if !accepted {
            return Err(Error::Convergence { iterations, residual });
        }
    }

    let c = dual.consumption(&x);
    let over = c.iter().copied().fold(1.0, f64::max);
    let tasks: Vec<f64> = x.iter().map(|v| v / over).collect();
    Ok(CeeiSolution {
        allocation: Allocation::from_tasks(inst, tasks),
        prices: lambda,
        iterations,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Norm;

    #[test]
    fn two_user_symmetric_point() {
        let inst = Instance::new(vec![vec![0.5, 1.0], vec![1.0, 0.5]], None, vec![f64::INFINITY; 2], Norm::Infinity)
            .unwrap();
        let s = solve_ceei(&inst, 1e-12).unwrap();
        for &x in &s.allocation.tasks {
            assert!((x - 2.0 / 3.0).abs() < 1e-9, "{x}");
        }
        for &p in &s.prices {
            assert!((p - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn misreport_from_the_gsp_counterexample() {
        let inst = Instance::new(vec![vec![2.0 / 3.0, 1.0], vec![1.0, 0.5]], None, vec![f64::INFINITY; 2], Norm::Infinity)
            .unwrap();
        let s = solve_ceei(&inst, 1e-12).unwrap();
        assert!((s.allocation.tasks[0] - 0.75).abs() < 1e-9);
        assert!((s.allocation.tasks[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn identical_users_split_equally() {
        let n = 5;
        let inst = Instance::new(vec![vec![0.3, 0.1]; n], None, vec![f64::INFINITY; n], Norm::L1).unwrap();
        let s = solve_ceei(&inst, 1e-12).unwrap();
        for &x in &s.allocation.tasks {
            assert!((x - 1.0 / (n as f64 * 0.3)).abs() < 1e-9);
        }
        let capped = Instance::new(vec![vec![0.3, 0.1]; n], None, vec![0.5; n], Norm::L1).unwrap();
        let s = solve_ceei(&capped, 1e-12).unwrap();
        assert!(s.allocation.tasks.iter().all(|&x| (x - 0.5).abs() < 1e-12));
        assert!(s.prices.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn zero_demand_entries() {
        let inst = Instance::new(
            vec![vec![0.1, 0.0], vec![0.0, 0.1], vec![0.1, 0.1]],
            None,
            vec![10.0, 5.0, 10.0],
            Norm::L1,
        )
        .unwrap();
        let s = solve_ceei(&inst, 1e-11).unwrap();
        // user 2 balances the two resources against the capped user 1
        let x = &s.allocation.tasks;
        assert!((x[1] - 5.0).abs() < 1e-9);
        assert!(s.allocation.consumption.iter().all(|&c| c <= 1.0 + 1e-12));
    }

    #[test]
    fn bad_tolerance() {
        let inst = Instance::new(vec![vec![0.5]], None, vec![1.0], Norm::L1).unwrap();
        assert!(solve_ceei(&inst, 0.0).is_err());
    }
}
