//! The LMMNS solver.
//!
//! The optimal normalized-share vector has the form `NS_i = min(NS_i^max, T)`
//! for a single threshold `T`. [`solve_lmmns`] finds `T` by repeatedly
//! testing the median of the remaining ceilings: a feasible median caps every
//! user at or below it, an infeasible one merges every user at or above it
//! into one aggregated "dummy" user whose consumption is linear in `T`. Each
//! test halves the candidate set, so the whole search is `O(nm)`. Once no
//! candidates remain `T` follows in closed form from the residual capacity.
//!
//! Zero demands break the single-threshold structure: a user that does not
//! touch the first saturated resource can keep growing. [`solve_lmmns_general`]
//! runs the threshold search in rounds, freezing after each round the users
//! that touch a saturated resource. [`oracle_binary_search`] reaches the same
//! answer by bisection and serves as an independent check.

use crate::error::{Error, Result};
use crate::model::{ensure_valid, Allocation, Instance};
use crate::norms::{self, ShareProfile};
use crate::select;

/// Absolute tolerance on capacity comparisons inside the solver.
pub const SOLVER_TOL: f64 = 1e-9;

/// Working state of one threshold search.
#[derive(Debug, Clone)]
struct SolverState {
    active: Vec<usize>,
    remaining: Vec<f64>,
    mu: Vec<f64>,
    dummy: Vec<usize>,
    capped: Vec<usize>,
}

/// Result of one threshold search over a subset of users.
#[derive(Debug, Clone)]
pub(crate) struct Threshold {
    /// Common normalized share of the dummy users; `None` when every user was capped.
    pub level: Option<f64>,
    pub capped: Vec<usize>,
    pub dummy: Vec<usize>,
    pub mu: Vec<f64>,
    /// Capacity left after the capped users.
    pub remaining: Vec<f64>,
}

/// Tasks of `user` when its normalized share is capped at `level`.
#[inline]
fn tasks_at(inst: &Instance, prof: &ShareProfile, user: usize, level: f64) -> f64 {
    if prof.ns_max[user] <= level {
        inst.bound(user)
    } else {
        level / prof.norm_per_task[user]
    }
}

/// Runs the median-pruning threshold search for `users` against `capacity`.
pub(crate) fn threshold_search(
    inst: &Instance,
    prof: &ShareProfile,
    users: &[usize],
    capacity: &[f64],
) -> Result<Threshold> {
    let m = inst.m();
    let mut st = SolverState {
        active: users.to_vec(),
        remaining: capacity.to_vec(),
        mu: vec![0.0; m],
        dummy: Vec::new(),
        capped: Vec::new(),
    };
    let mut scratch = Vec::with_capacity(users.len());
    let mut load = vec![0.0; m];

    while !st.active.is_empty() {
        scratch.clear();
        scratch.extend(st.active.iter().map(|&i| prof.ns_max[i]));
        let level = select::lower_median(&mut scratch);

        // consumption if every active user sat at min(level, ceiling)
        for (l, &mu) in load.iter_mut().zip(&st.mu) {
            *l = if mu > 0.0 { level * mu } else { 0.0 };
        }
        for &i in &st.active {
            let x = tasks_at(inst, prof, i, level);
            for (l, &r) in load.iter_mut().zip(inst.demand_row(i)) {
                if r > 0.0 {
                    *l += r * x;
                }
            }
        }
        let feasible = load
            .iter()
            .zip(&st.remaining)
            .all(|(&l, &rc)| l <= rc + SOLVER_TOL);

        if feasible {
            if level == f64::INFINITY {
                return Err(Error::Unbounded(
                    "users with unbounded task counts consume no capacity".into(),
                ));
            }
            // threshold >= level: everyone capped at or below level is final
            let mut keep = Vec::with_capacity(st.active.len() / 2 + 1);
            for &i in &st.active {
                if prof.ns_max[i] <= level {
                    let b = inst.bound(i);
                    for (rc, &r) in st.remaining.iter_mut().zip(inst.demand_row(i)) {
                        *rc -= r * b;
                    }
                    st.capped.push(i);
                } else {
                    keep.push(i);
                }
            }
            st.active = keep;
        } else {
            // threshold < level: everyone at or above level joins the dummy user
            let mut keep = Vec::with_capacity(st.active.len() / 2 + 1);
            for &i in &st.active {
                if prof.ns_max[i] >= level {
                    let nrm = prof.norm_per_task[i];
                    for (mu, &r) in st.mu.iter_mut().zip(inst.demand_row(i)) {
                        *mu += r / nrm;
                    }
                    st.dummy.push(i);
                } else {
                    keep.push(i);
                }
            }
            st.active = keep;
        }
    }

    let level = if st.dummy.is_empty() {
        None
    } else {
        match min_ratio(&st.remaining, &st.mu) {
            Some(t) => Some(t),
            None => {
                return Err(Error::Unbounded(
                    "aggregated users consume no resource".into(),
                ))
            }
        }
    };
    Ok(Threshold {
        level,
        capped: st.capped,
        dummy: st.dummy,
        mu: st.mu,
        remaining: st.remaining,
    })
}

/// `min_j max(rc_j, 0) / mu_j` over resources with `mu_j > 0`.
fn min_ratio(remaining: &[f64], mu: &[f64]) -> Option<f64> {
    remaining
        .iter()
        .zip(mu)
        .filter(|(_, &mu)| mu > 0.0)
        .map(|(&rc, &mu)| rc.max(0.0) / mu)
        .reduce(f64::min)
}

/// Computes the LMM-optimal allocation of an instance with strictly positive
/// demands.
pub fn solve_lmmns(inst: &Instance) -> Result<Allocation> {
    ensure_valid(inst)?;
    if let Some(k) = (0..inst.n() * inst.m()).find(|&k| inst.demand(k / inst.m(), k % inst.m()) == 0.0) {
        return Err(Error::ZeroDemand {
            user: k / inst.m(),
            resource: k % inst.m(),
        });
    }
    let prof = norms::weighted_shares(inst);
    let users: Vec<usize> = (0..inst.n()).collect();
    let out = threshold_search(inst, &prof, &users, &vec![1.0; inst.m()])?;
    let mut x = vec![0.0; inst.n()];
    for &i in &out.capped {
        x[i] = inst.bound(i);
    }
    if let Some(level) = out.level {
        for &i in &out.dummy {
            x[i] = tasks_at(inst, &prof, i, level);
        }
    }
    Ok(Allocation::from_tasks(inst, x))
}

/// LMM-optimal allocation for instances that may contain zero demands.
///
/// Runs at most `m` threshold rounds. After each round the users touching a
/// saturated resource are frozen; the others keep growing on the residual
/// capacity in the next round.
pub fn solve_lmmns_general(inst: &Instance) -> Result<Allocation> {
    ensure_valid(inst)?;
    let prof = norms::weighted_shares(inst);
    let (n, m) = (inst.n(), inst.m());
    let mut frozen = vec![false; n];
    let mut x = vec![0.0; n];

    for _round in 0..=m {
        let active: Vec<usize> = (0..n).filter(|&i| !frozen[i]).collect();
        if active.is_empty() {
            break;
        }
        let capacity = residual_capacity(inst, &frozen, &x);
        let out = threshold_search(inst, &prof, &active, &capacity)?;
        for &i in &out.capped {
            x[i] = inst.bound(i);
            frozen[i] = true;
        }
        let Some(level) = out.level else { break };
        for &i in &out.dummy {
            x[i] = tasks_at(inst, &prof, i, level);
        }

        let binding: Vec<bool> = (0..m)
            .map(|j| {
                out.mu[j] > 0.0
                    && out.remaining[j].max(0.0) / out.mu[j] <= level * (1.0 + 1e-12) + 1e-15
            })
            .collect();
        let saturated = saturated_resources(inst, &x, &binding);
        let mut progressed = false;
        for &i in &out.dummy {
            if touches(inst, i, &saturated) {
                frozen[i] = true;
                progressed = true;
            }
        }
        if !progressed {
            out.dummy.iter().for_each(|&i| frozen[i] = true);
        }
    }
    Ok(Allocation::from_tasks(inst, x))
}

fn residual_capacity(inst: &Instance, frozen: &[bool], x: &[f64]) -> Vec<f64> {
    let mut rc = vec![1.0; inst.m()];
    for i in (0..inst.n()).filter(|&i| frozen[i]) {
        for (c, &r) in rc.iter_mut().zip(inst.demand_row(i)) {
            *c -= r * x[i];
        }
    }
    rc.iter_mut().for_each(|c| *c = c.max(0.0));
    rc
}

fn saturated_resources(inst: &Instance, x: &[f64], binding: &[bool]) -> Vec<bool> {
    let alloc = Allocation::from_tasks(inst, x.to_vec());
    alloc
        .consumption
        .iter()
        .zip(binding)
        .map(|(&c, &b)| b || c >= 1.0 - SOLVER_TOL)
        .collect()
}

fn touches(inst: &Instance, user: usize, resources: &[bool]) -> bool {
    inst.demand_row(user)
        .iter()
        .zip(resources)
        .any(|(&r, &s)| s && r > 0.0)
}

/// Closed-form threshold for the dummy users once the capped set is known:
/// `min_j (1 - sum_{capped} r_ij B_i) / mu_j`.
pub fn closed_form_ns(inst: &Instance, dummy_set: &[usize], capped_set: &[usize]) -> Result<f64> {
    let n = inst.n();
    if dummy_set.is_empty() {
        return Err(Error::InvalidArgument("dummy set is empty".into()));
    }
    let mut seen = vec![0u8; n];
    for (&i, tag) in dummy_set.iter().map(|i| (i, 1u8)).chain(capped_set.iter().map(|i| (i, 2u8))) {
        if i >= n {
            return Err(Error::InvalidArgument(format!("user index {i} out of range")));
        }
        if seen[i] != 0 {
            return Err(Error::InvalidArgument(format!(
                "user {i} appears twice in the dummy/capped sets"
            )));
        }
        seen[i] = tag;
    }
    let m = inst.m();
    let mut numer = vec![1.0; m];
    for &i in capped_set {
        let b = inst.bound(i);
        if b == f64::INFINITY {
            return Err(Error::InvalidArgument(format!(
                "user {i} has no task bound and cannot be capped"
            )));
        }
        for (c, &r) in numer.iter_mut().zip(inst.demand_row(i)) {
            *c -= r * b;
        }
    }
    if let Some(j) = numer.iter().position(|&c| c < -SOLVER_TOL) {
        return Err(Error::Infeasible(format!(
            "capped users alone overload resource {j} ({:.6})",
            1.0 - numer[j]
        )));
    }
    let mut mu = vec![0.0; m];
    for &i in dummy_set {
        let nrm = norms::task_norm(inst, i);
        for (u, &r) in mu.iter_mut().zip(inst.demand_row(i)) {
            *u += r / nrm;
        }
    }
    min_ratio(&numer, &mu).ok_or_else(|| {
        Error::Unbounded("dummy users consume no resource; cap them at their ceilings".into())
    })
}

/// Independent oracle: bisection on the common threshold, with the same
/// round structure as [`solve_lmmns_general`].
///
/// Each round bisects until the bracket is narrower than `tol`, then tries
/// the closed form on the partition the bracket implies and keeps it when it
/// is consistent with the bracket.
pub fn oracle_binary_search(inst: &Instance, tol: f64) -> Result<Allocation> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    ensure_valid(inst)?;
    let (n, m) = (inst.n(), inst.m());
    let prof = norms::weighted_shares(inst);
    let mut frozen = vec![false; n];
    let mut x = vec![0.0; n];

    let load = |active: &[usize], level: f64| -> Vec<f64> {
        let mut l = vec![0.0; m];
        for &i in active {
            let xi = prof.ns_max[i].min(level) / prof.norm_per_task[i];
            for (lj, &r) in l.iter_mut().zip(inst.demand_row(i)) {
                if r > 0.0 {
                    *lj += r * xi;
                }
            }
        }
        l
    };
    let fits = |l: &[f64], rc: &[f64]| l.iter().zip(rc).all(|(&a, &b)| a <= b + 1e-12);

    for _round in 0..=m {
        let active: Vec<usize> = (0..n).filter(|&i| !frozen[i]).collect();
        if active.is_empty() {
            break;
        }
        let rc = residual_capacity(inst, &frozen, &x);

        // a level past which nothing changes
        let mut hi = 0.0_f64;
        for &i in &active {
            let solo = inst
                .demand_row(i)
                .iter()
                .zip(&rc)
                .filter(|(&r, _)| r > 0.0)
                .map(|(&r, &c)| c / r)
                .fold(f64::INFINITY, f64::min)
                * prof.norm_per_task[i];
            hi = hi.max(prof.ns_max[i].min(solo));
        }
        let level;
        let binding: Vec<bool>;
        if fits(&load(&active, hi), &rc) {
            level = hi;
            binding = vec![false; m];
        } else {
            let mut lo = 0.0;
            let mut it = 0;
            while hi - lo > 0.5 * tol && it < 400 {
                let mid = 0.5 * (lo + hi);
                if fits(&load(&active, mid), &rc) {
                    lo = mid;
                } else {
                    hi = mid;
                }
                it += 1;
            }
            let lhi = load(&active, hi);
            binding = lhi.iter().zip(&rc).map(|(&a, &b)| a > b + 1e-12).collect();
            level = refine(inst, &prof, &active, &rc, lo, hi, tol).unwrap_or(lo);
        }

        let mut grew = Vec::new();
        for &i in &active {
            if prof.ns_max[i] <= level {
                x[i] = inst.bound(i);
                frozen[i] = true;
            } else {
                x[i] = level / prof.norm_per_task[i];
                grew.push(i);
            }
        }
        if grew.is_empty() {
            break;
        }
        let saturated = saturated_resources(inst, &x, &binding);
        let mut progressed = false;
        for &i in &grew {
            if touches(inst, i, &saturated) {
                frozen[i] = true;
                progressed = true;
            }
        }
        if !progressed {
            grew.iter().for_each(|&i| frozen[i] = true);
        }
    }
    Ok(Allocation::from_tasks(inst, x))
}

/// Closed-form level for the partition implied by the bracket `[lo, hi]`.
fn refine(
    inst: &Instance,
    prof: &ShareProfile,
    active: &[usize],
    rc: &[f64],
    lo: f64,
    hi: f64,
    tol: f64,
) -> Option<f64> {
    let m = inst.m();
    let mut numer = rc.to_vec();
    let mut mu = vec![0.0; m];
    let mut min_free_ceiling = f64::INFINITY;
    for &i in active {
        if prof.ns_max[i] <= lo {
            let b = inst.bound(i);
            for (c, &r) in numer.iter_mut().zip(inst.demand_row(i)) {
                *c -= r * b;
            }
        } else {
            min_free_ceiling = min_free_ceiling.min(prof.ns_max[i]);
            let nrm = prof.norm_per_task[i];
            for (u, &r) in mu.iter_mut().zip(inst.demand_row(i)) {
                *u += r / nrm;
            }
        }
    }
    let t = min_ratio(&numer, &mu)?;
    let consistent = t >= lo - tol && t <= hi + tol && t <= min_free_ceiling;
    consistent.then_some(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Norm;

    fn two_users(norm: Norm) -> Instance {
        Instance::new(
            vec![vec![1.0 / 18.0, 1.0 / 9.0], vec![1.0 / 6.0, 1.0 / 36.0]],
            None,
            vec![5.0, 3.0],
            norm,
        )
        .unwrap()
    }

    fn three_users(norm: Norm) -> Instance {
        Instance::new(
            vec![vec![0.1, 0.0], vec![0.0, 0.1], vec![0.1, 0.1]],
            None,
            vec![10.0, 5.0, 10.0],
            norm,
        )
        .unwrap()
    }

    #[test]
    fn two_user_bounded_caps_both() {
        for norm in [Norm::Infinity, Norm::L1, Norm::L2] {
            let a = solve_lmmns(&two_users(norm)).unwrap();
            assert!((a.tasks[0] - 5.0).abs() < 1e-9);
            assert!((a.tasks[1] - 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn single_user_without_contention() {
        let inst = Instance::new(vec![vec![0.1, 0.2]], None, vec![4.0], Norm::L2).unwrap();
        assert_eq!(solve_lmmns(&inst).unwrap().tasks, vec![4.0]);
        let inst = Instance::new(vec![vec![0.1, 0.2]], None, vec![40.0], Norm::L2).unwrap();
        assert!((solve_lmmns(&inst).unwrap().tasks[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn zero_demands_rejected_by_single_round() {
        match solve_lmmns(&three_users(Norm::L1)) {
            Err(Error::ZeroDemand { user: 0, resource: 1 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn equal_totals_across_norms() {
        for norm in [Norm::L1, Norm::L2, Norm::Infinity] {
            let a = solve_lmmns_general(&three_users(norm)).unwrap();
            assert!((a.welfare() - 15.0).abs() < 1e-9, "{norm}: {:?}", a.tasks);
        }
        let a = solve_lmmns_general(&three_users(Norm::Infinity)).unwrap();
        for x in &a.tasks {
            assert!((x - 5.0).abs() < 1e-9);
        }
    }

    #[test]
    fn multi_round_keeps_growing_untouched_users() {
        // user 1 does not touch resource 0, which saturates first
        let inst = Instance::new(
            vec![vec![0.5, 0.0], vec![0.0, 0.1], vec![0.5, 0.1]],
            None,
            vec![100.0; 3],
            Norm::Infinity,
        )
        .unwrap();
        let a = solve_lmmns_general(&inst).unwrap();
        assert!((a.consumption[0] - 1.0).abs() < 1e-9);
        assert!((a.consumption[1] - 1.0).abs() < 1e-9);
        assert!(a.tasks[1] > a.tasks[0]);
        let b = oracle_binary_search(&inst, 1e-10).unwrap();
        for (p, q) in a.tasks.iter().zip(&b.tasks) {
            assert!((p - q).abs() < 1e-6);
        }
    }

    #[test]
    fn closed_form_two_users_p1() {
        let inst = Instance::new(
            vec![vec![1.0 / 18.0, 1.0 / 18.0], vec![1.0 / 18.0, 0.0]],
            None,
            vec![18.0, 18.0],
            Norm::L1,
        )
        .unwrap();
        let t = closed_form_ns(&inst, &[0, 1], &[]).unwrap();
        let x1 = t / norms::task_norm(&inst, 0);
        assert!((x1 / 18.0 - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_exhausted_capacity() {
        let inst = Instance::new(
            vec![vec![0.5, 0.5], vec![0.25, 0.25]],
            None,
            vec![2.0, 10.0],
            Norm::Infinity,
        )
        .unwrap();
        assert_eq!(closed_form_ns(&inst, &[1], &[0]).unwrap(), 0.0);
        assert!(closed_form_ns(&inst, &[0], &[0]).is_err());
        assert!(closed_form_ns(&inst, &[], &[0]).is_err());
        assert!(closed_form_ns(&inst, &[7], &[]).is_err());
    }

    #[test]
    fn oracle_rejects_bad_tolerance() {
        assert!(oracle_binary_search(&two_users(Norm::L1), 0.0).is_err());
        assert!(oracle_binary_search(&two_users(Norm::L1), -1.0).is_err());
    }

    #[test]
    fn oracle_two_users() {
        let a = oracle_binary_search(&two_users(Norm::Infinity), 1e-9).unwrap();
        assert!((a.tasks[0] - 5.0).abs() < 1e-9 && (a.tasks[1] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn unbounded_users_share_by_dominant_share() {
        // the two-user instance without bounds is classic DRF: 6 and 4 tasks
        let inst = Instance::new(
            vec![vec![1.0 / 18.0, 1.0 / 9.0], vec![1.0 / 6.0, 1.0 / 36.0]],
            None,
            vec![f64::INFINITY; 2],
            Norm::Infinity,
        )
        .unwrap();
        let a = solve_lmmns(&inst).unwrap();
        assert!((a.tasks[0] - 6.0).abs() < 1e-9);
        assert!((a.tasks[1] - 4.0).abs() < 1e-9);
    }
}
