//! Linear programming oracles and the proportional-fairness baseline.
//!
//! [`simplex_solve`] handles `max c.x` subject to `A x <= b` and box bounds.
//! Every optimum can be checked independently with [`certify`], which rebuilds
//! the dual slacks from the row prices alone.

mod ceei;
mod simplex;

pub use ceei::{solve_ceei, CeeiSolution, CEEI_MAX_ITER};
pub use simplex::simplex_solve;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::filling::si_floors;
use crate::model::{ensure_valid, Allocation, Instance};

/// `max objective . x` s.t. `matrix x <= rhs`, `lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub matrix: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    /// May contain `f64::INFINITY`.
    pub upper: Vec<f64>,
}

impl LinearProgram {
    pub fn check(&self) -> Result<()> {
        let nv = self.objective.len();
        if self.matrix.len() != self.rhs.len() {
            return Err(Error::InvalidArgument(format!(
                "{} constraint rows but {} right-hand sides",
                self.matrix.len(),
                self.rhs.len()
            )));
        }
        if let Some(i) = self.matrix.iter().position(|row| row.len() != nv) {
            return Err(Error::InvalidArgument(format!(
                "constraint row {i} has {} coefficients, expected {nv}",
                self.matrix[i].len()
            )));
        }
        if self.lower.len() != nv || self.upper.len() != nv {
            return Err(Error::InvalidArgument(format!(
                "bounds have lengths {} and {}, expected {nv}",
                self.lower.len(),
                self.upper.len()
            )));
        }
        let finite = self.objective.iter().chain(&self.rhs).chain(&self.lower).all(|v| v.is_finite())
            && self.matrix.iter().flatten().all(|v| v.is_finite())
            && self.upper.iter().all(|v| !v.is_nan() && *v > f64::NEG_INFINITY);
        if !finite {
            return Err(Error::InvalidArgument(
                "linear program has non-finite data (only upper bounds may be infinite)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub value: f64,
    pub x: Vec<f64>,
    /// Row prices, one per inequality.
    pub duals: Vec<f64>,
    pub iterations: usize,
}

impl LpSolution {
    fn status_only(status: LpStatus) -> Self {
        LpSolution {
            status,
            value: f64::NAN,
            x: Vec::new(),
            duals: Vec::new(),
            iterations: 0,
        }
    }
}

/// Optimality evidence for a primal point and row prices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Certificate {
    /// Largest violation of a row or a bound.
    pub primal_residual: f64,
    /// Largest negative price, or positive reduced cost on an unbounded variable.
    pub dual_infeasibility: f64,
    /// Largest product of a dual slack with its primal slack.
    pub complementarity: f64,
    /// Dual objective minus primal objective.
    pub gap: f64,
}

impl Certificate {
    pub const PRIMAL_TOL: f64 = 1e-8;
    pub const DUAL_TOL: f64 = 1e-8;
    pub const GAP_TOL: f64 = 1e-6;

    pub fn passes(&self) -> bool {
        self.primal_residual <= Self::PRIMAL_TOL
            && self.dual_infeasibility <= Self::DUAL_TOL
            && self.complementarity <= Self::GAP_TOL
            && self.gap.abs() <= Self::GAP_TOL
    }
}

/// Recomputes primal feasibility, dual feasibility, complementary slackness
/// and the duality gap for `x` and row prices `duals`.
pub fn certify(lp: &LinearProgram, x: &[f64], duals: &[f64]) -> Result<Certificate> {
    lp.check()?;
    if x.len() != lp.objective.len() || duals.len() != lp.rhs.len() {
        return Err(Error::InvalidArgument("certificate vectors have the wrong length".into()));
    }
    let mut primal: f64 = 0.0;
    let mut compl: f64 = 0.0;
    let mut dual_obj = 0.0;
    for (i, row) in lp.matrix.iter().enumerate() {
        let ax: f64 = row.iter().zip(x).map(|(a, v)| a * v).sum();
        let slack = lp.rhs[i] - ax;
        primal = primal.max(-slack);
        compl = compl.max((duals[i] * slack).abs());
        dual_obj += duals[i] * lp.rhs[i];
    }
    let mut dual_inf = duals.iter().fold(0.0_f64, |a, &l| a.max(-l));
    for k in 0..x.len() {
        let (l, u) = (lp.lower[k], lp.upper[k]);
        primal = primal.max(l - x[k]).max(x[k] - u);
        let d = lp.objective[k]
            - lp.matrix.iter().zip(duals).map(|(row, y)| row[k] * y).sum::<f64>();
        if d > 0.0 {
            if u.is_finite() {
                dual_obj += u * d;
                compl = compl.max((d * (u - x[k])).abs());
            } else {
                dual_inf = dual_inf.max(d);
            }
        } else {
            dual_obj += l * d;
            compl = compl.max((d * (x[k] - l)).abs());
        }
    }
    let primal_obj: f64 = lp.objective.iter().zip(x).map(|(c, v)| c * v).sum();
    Ok(Certificate {
        primal_residual: primal.max(0.0),
        dual_infeasibility: dual_inf,
        complementarity: compl,
        gap: dual_obj - primal_obj,
    })
}

/// An oracle optimum mapped back to an allocation.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub allocation: Allocation,
    /// Welfare or utilization, depending on the oracle.
    pub value: f64,
    pub certificate: Certificate,
    pub program: LinearProgram,
    pub solution: LpSolution,
}

fn lower_bounds(inst: &Instance, require_si: bool) -> Result<Vec<f64>> {
    if !require_si {
        return Ok(vec![0.0; inst.n()]);
    }
    if !inst.has_equal_weights() {
        return Err(Error::InvalidArgument(
            "sharing-incentive rows are defined for equal weights 1/n only".into(),
        ));
    }
    let floors = si_floors(inst);
    if let Some(i) = (0..inst.n()).find(|&i| floors[i] > inst.bound(i)) {
        return Err(Error::Infeasible(format!(
            "user {i}: sharing-incentive floor {} exceeds task bound {}",
            floors[i],
            inst.bound(i)
        )));
    }
    Ok(floors)
}

/// `max sum x_i` over feasible allocations, optionally with `r_{ij_i} x_i >= 1/n`.
pub fn welfare_program(inst: &Instance, require_si: bool) -> Result<LinearProgram> {
    ensure_valid(inst)?;
    let (n, m) = (inst.n(), inst.m());
    Ok(LinearProgram {
        objective: vec![1.0; n],
        matrix: (0..m).map(|j| (0..n).map(|i| inst.demand(i, j)).collect()).collect(),
        rhs: vec![1.0; m],
        lower: lower_bounds(inst, require_si)?,
        upper: inst.bounds().to_vec(),
    })
}

/// `max c` with `c <= sum_i r_ij x_i <= 1` for every resource. The last
/// variable is `c`.
pub fn utilization_program(inst: &Instance, require_si: bool) -> Result<LinearProgram> {
    ensure_valid(inst)?;
    let (n, m) = (inst.n(), inst.m());
    let mut objective = vec![0.0; n + 1];
    objective[n] = 1.0;
    let mut matrix = Vec::with_capacity(2 * m);
    for j in 0..m {
        let mut row: Vec<f64> = (0..n).map(|i| -inst.demand(i, j)).collect();
        row.push(1.0);
        matrix.push(row);
    }
    for j in 0..m {
        let mut row: Vec<f64> = (0..n).map(|i| inst.demand(i, j)).collect();
        row.push(0.0);
        matrix.push(row);
    }
    let mut rhs = vec![0.0; m];
    rhs.extend(std::iter::repeat(1.0).take(m));
    let mut lower = lower_bounds(inst, require_si)?;
    lower.push(0.0);
    let mut upper = inst.bounds().to_vec();
    upper.push(f64::INFINITY);
    Ok(LinearProgram {
        objective,
        matrix,
        rhs,
        lower,
        upper,
    })
}

fn solve_oracle(inst: &Instance, lp: LinearProgram, what: &str) -> Result<OracleSolution> {
    let sol = simplex_solve(&lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Err(Error::Infeasible(format!("{what} program has no feasible point")))
        }
        LpStatus::Unbounded => return Err(Error::Unbounded(format!("{what} program is unbounded"))),
    }
    let certificate = certify(&lp, &sol.x, &sol.duals)?;
    let tasks = sol.x[..inst.n()].to_vec();
    Ok(OracleSolution {
        allocation: Allocation::from_tasks(inst, tasks),
        value: sol.value,
        certificate,
        program: lp,
        solution: sol,
    })
}

/// Welfare-maximizing allocation.
pub fn welfare_lp(inst: &Instance, require_si: bool) -> Result<OracleSolution> {
    let lp = welfare_program(inst, require_si)?;
    solve_oracle(inst, lp, "welfare")
}

/// Allocation maximizing the least-consumed resource.
pub fn utilization_lp(inst: &Instance, require_si: bool) -> Result<OracleSolution> {
    let lp = utilization_program(inst, require_si)?;
    solve_oracle(inst, lp, "utilization")
}
