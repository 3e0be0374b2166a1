//! Share arithmetic: weighted shares, their p-norms, dominant shares and
//! per-user normalized-share ceilings.

use crate::error::{Error, Result};
use crate::model::{Allocation, Instance, Norm};

/// Weighted shares of every user together with the per-task norms.
#[derive(Debug, Clone, PartialEq)]
pub struct ShareProfile {
    m: usize,
    /// Row-major `n x m`, `ws[i][j] = r[i][j] / w[i][j]`.
    pub weighted_shares: Vec<f64>,
    /// `||ws_i||_p` for one task.
    pub norm_per_task: Vec<f64>,
    /// `argmax_j ws[i][j]`, lowest index on ties.
    pub dominant_resource: Vec<usize>,
    /// `||ws_i||_p * B_i`; infinite for unbounded users.
    pub ns_max: Vec<f64>,
}

impl ShareProfile {
    pub fn weighted_share(&self, user: usize, resource: usize) -> f64 {
        self.weighted_shares[user * self.m + resource]
    }

    pub fn weighted_row(&self, user: usize) -> &[f64] {
        &self.weighted_shares[user * self.m..(user + 1) * self.m]
    }
}

/// Computes the full [`ShareProfile`] of an instance.
pub fn weighted_shares(inst: &Instance) -> ShareProfile {
    let (n, m) = (inst.n(), inst.m());
    let mut ws = Vec::with_capacity(n * m);
    let mut norm_per_task = Vec::with_capacity(n);
    let mut dominant_resource = Vec::with_capacity(n);
    let mut ns_max = Vec::with_capacity(n);
    for i in 0..n {
        let start = ws.len();
        ws.extend(
            inst.demand_row(i)
                .iter()
                .zip(inst.weight_row(i))
                .map(|(&r, &w)| r / w),
        );
        let row = &ws[start..];
        let nrm = norm_of(row.iter().copied(), inst.norm());
        norm_per_task.push(nrm);
        dominant_resource.push(argmax_lowest(row));
        ns_max.push(scale_bound(nrm, inst.bound(i)));
    }
    ShareProfile {
        m,
        weighted_shares: ws,
        norm_per_task,
        dominant_resource,
        ns_max,
    }
}

/// `norm * bound`, with an infinite bound always giving an infinite ceiling.
#[inline]
pub(crate) fn scale_bound(norm: f64, bound: f64) -> f64 {
    if bound == f64::INFINITY {
        f64::INFINITY
    } else {
        norm * bound
    }
}

fn argmax_lowest(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// The p-norm of a nonnegative vector.
pub fn p_norm(values: &[f64], norm: Norm) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("p-norm of an empty vector".into()));
    }
    if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "p-norm expects nonnegative entries, got {v}"
        )));
    }
    Ok(norm_of(values.iter().copied(), norm))
}

/// p-norm over an iterator of nonnegative values. Finite `p` is evaluated as
/// `max * (sum (v/max)^p)^(1/p)` so large `p` neither overflows nor underflows.
pub(crate) fn norm_of<I>(values: I, norm: Norm) -> f64
where
    I: Iterator<Item = f64> + Clone,
{
    let max = values.clone().fold(0.0_f64, f64::max);
    match norm {
        Norm::Infinity => max,
        Norm::Finite(p) => {
            if max == 0.0 {
                return 0.0;
            }
            if p == 1.0 {
                return values.sum();
            }
            let s: f64 = values.map(|v| (v / max).powf(p)).sum();
            max * s.powf(1.0 / p)
        }
    }
}

/// `||ws_i||_p` of one task of `user`.
pub fn task_norm(inst: &Instance, user: usize) -> f64 {
    let ws = inst
        .demand_row(user)
        .iter()
        .zip(inst.weight_row(user))
        .map(|(&r, &w)| r / w);
    norm_of(ws, inst.norm())
}

/// `max_j r[i][j] / w[i][j]` for one task.
pub fn max_weighted_share(inst: &Instance, user: usize) -> f64 {
    inst.demand_row(user)
        .iter()
        .zip(inst.weight_row(user))
        .map(|(&r, &w)| r / w)
        .fold(0.0, f64::max)
}

fn check_user(inst: &Instance, alloc: &Allocation, user: usize) -> Result<()> {
    if user >= inst.n() || user >= alloc.tasks.len() {
        return Err(Error::InvalidArgument(format!(
            "user index {user} out of range for {} users",
            inst.n()
        )));
    }
    Ok(())
}

/// `DS_i = x_i * max_j ws_ij`.
pub fn dominant_share(inst: &Instance, alloc: &Allocation, user: usize) -> Result<f64> {
    check_user(inst, alloc, user)?;
    Ok(alloc.tasks[user] * max_weighted_share(inst, user))
}

/// `x_i * max_j r_ij`: the largest fraction of any resource the user holds.
pub fn raw_dominant_share(inst: &Instance, alloc: &Allocation, user: usize) -> Result<f64> {
    check_user(inst, alloc, user)?;
    let r = inst.demand_row(user).iter().copied().fold(0.0, f64::max);
    Ok(alloc.tasks[user] * r)
}

/// `x_i * r_ij`.
pub fn raw_share(inst: &Instance, alloc: &Allocation, user: usize, resource: usize) -> Result<f64> {
    check_user(inst, alloc, user)?;
    if resource >= inst.m() {
        return Err(Error::InvalidArgument(format!("resource index {resource} out of range")));
    }
    Ok(alloc.tasks[user] * inst.demand(user, resource))
}
