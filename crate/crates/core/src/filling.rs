//! Progressive-filling solvers.
//!
//! [`solve_waterfilling`] raises the common normalized share of all unfrozen
//! users and jumps straight to the next event (a user reaching its ceiling or
//! a resource saturating) instead of stepping. Users touching a saturated
//! resource freeze; the rest keep rising, so zero demands are handled the same
//! way as in the multi-round LMMNS solver.
//!
//! [`solve_modified_lmmns`] adds per-user floors `x_i >= 1/max_j ws_ij`, which
//! is what sharing incentive requires, and returns the single-threshold
//! solution `NS_i = max(NS_i^min, min(NS_i^max, T))`.

use crate::error::{Error, Result};
use crate::lmmns::SOLVER_TOL;
use crate::model::{ensure_valid, Allocation, Instance};
use crate::norms::{self, ShareProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreezeReason {
    HitCeiling,
    Saturated,
    PinnedAtFloor,
}

/// Progress of one water-filling run.
#[derive(Debug, Clone)]
pub struct FillState {
    pub level: f64,
    pub frozen: Vec<Option<(f64, FreezeReason)>>,
    pub growing: Vec<usize>,
    /// Number of events processed so far.
    pub events: usize,
}

impl FillState {
    fn new(n: usize) -> Self {
        FillState {
            level: 0.0,
            frozen: vec![None; n],
            growing: (0..n).collect(),
            events: 0,
        }
    }

    fn freeze(&mut self, user: usize, ns: f64, why: FreezeReason) {
        debug_assert!(self.frozen[user].is_none());
        self.frozen[user] = Some((ns, why));
    }
}

/// Plain LMMNS by event-driven water filling.
pub fn solve_waterfilling(inst: &Instance) -> Result<Allocation> {
    Ok(waterfill(inst)?.1)
}

/// Water filling that also returns the final [`FillState`].
pub fn waterfill(inst: &Instance) -> Result<(FillState, Allocation)> {
    ensure_valid(inst)?;
    let prof = norms::weighted_shares(inst);
    let (n, m) = (inst.n(), inst.m());
    let mut st = FillState::new(n);
    let mut x = vec![0.0; n];

    while !st.growing.is_empty() {
        let mut base = vec![0.0; m];
        for i in (0..n).filter(|&i| st.frozen[i].is_some()) {
            for (b, &r) in base.iter_mut().zip(inst.demand_row(i)) {
                *b += r * x[i];
            }
        }
        let mut mu = vec![0.0; m];
        for &i in &st.growing {
            let nrm = prof.norm_per_task[i];
            for (u, &r) in mu.iter_mut().zip(inst.demand_row(i)) {
                *u += r / nrm;
            }
        }
        let ceiling = st
            .growing
            .iter()
            .map(|&i| prof.ns_max[i])
            .fold(f64::INFINITY, f64::min);
        let ratio: Vec<f64> = (0..m)
            .map(|j| {
                if mu[j] > 0.0 {
                    (1.0 - base[j]).max(0.0) / mu[j]
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        let saturation = ratio.iter().copied().fold(f64::INFINITY, f64::min);
        let next = ceiling.min(saturation);
        if next == f64::INFINITY {
            return Err(Error::Unbounded("growing users consume nothing".into()));
        }
        st.level = st.level.max(next);
        st.events += 1;

        let close = |v: f64| v <= next * (1.0 + 1e-12) + 1e-15;
        let saturated: Vec<bool> = ratio.iter().map(|&r| close(r)).collect();
        let mut still = Vec::with_capacity(st.growing.len());
        for i in std::mem::take(&mut st.growing) {
            if close(prof.ns_max[i]) {
                x[i] = inst.bound(i);
                st.freeze(i, prof.ns_max[i], FreezeReason::HitCeiling);
            } else if inst
                .demand_row(i)
                .iter()
                .zip(&saturated)
                .any(|(&r, &s)| s && r > 0.0)
            {
                let level = st.level;
                x[i] = level / prof.norm_per_task[i];
                st.freeze(i, level, FreezeReason::Saturated);
            } else {
                still.push(i);
            }
        }
        st.growing = still;
    }
    let alloc = Allocation::from_tasks(inst, x);
    Ok((st, alloc))
}

/// Task floors `1 / max_j ws_ij`: the fewest tasks that give a user its
/// entitlement on some resource. Equals `1/(n r_{i j_i})` under equal weights.
pub fn si_floors(inst: &Instance) -> Vec<f64> {
    (0..inst.n())
        .map(|i| 1.0 / norms::max_weighted_share(inst, i))
        .collect()
}

/// Modified LMMNS: LMM-optimal subject to every user receiving its
/// sharing-incentive floor.
pub fn solve_modified_lmmns(inst: &Instance) -> Result<Allocation> {
    ensure_valid(inst)?;
    let floors = si_floors(inst);
    for (i, &f) in floors.iter().enumerate() {
        if f > inst.bound(i) * (1.0 + 1e-12) {
            return Err(Error::Infeasible(format!(
                "user {i}: sharing-incentive floor {f} exceeds task bound {}",
                inst.bound(i)
            )));
        }
    }
    let base = Allocation::from_tasks(inst, floors.clone());
    if let Some(j) = base.consumption.iter().position(|&c| c > 1.0 + SOLVER_TOL) {
        return Err(Error::Infeasible(format!(
            "resource {j} over capacity at the sharing-incentive floors ({})",
            base.consumption[j]
        )));
    }
    let prof = norms::weighted_shares(inst);
    let floors_ns: Vec<f64> = floors
        .iter()
        .zip(&prof.norm_per_task)
        .zip(&prof.ns_max)
        .map(|((&f, &nrm), &cap)| (f * nrm).min(cap))
        .collect();
    threshold_fill(inst, &prof, &floors_ns)
}

/// Single-threshold filling with arbitrary normalized-share floors.
/// Zero floors give plain LMMNS on instances with positive demands.
pub fn solve_with_floors(inst: &Instance, floors_ns: &[f64]) -> Result<Allocation> {
    ensure_valid(inst)?;
    if floors_ns.len() != inst.n() {
        return Err(Error::InvalidArgument(format!(
            "{} floors for {} users",
            floors_ns.len(),
            inst.n()
        )));
    }
    let prof = norms::weighted_shares(inst);
    if let Some(i) = (0..inst.n()).find(|&i| !(floors_ns[i] >= 0.0) || floors_ns[i] > prof.ns_max[i]) {
        return Err(Error::Infeasible(format!(
            "user {i}: floor {} outside [0, {}]",
            floors_ns[i], prof.ns_max[i]
        )));
    }
    threshold_fill(inst, &prof, floors_ns)
}

/// Largest `T` such that `max(floor_i, min(ceiling_i, T))` is feasible,
/// found by walking the sorted breakpoints of the piecewise-linear load.
fn threshold_fill(inst: &Instance, prof: &ShareProfile, floors: &[f64]) -> Result<Allocation> {
    let (n, m) = (inst.n(), inst.m());
    let share_at = |i: usize, t: f64| floors[i].max(prof.ns_max[i].min(t));
    let tasks_at = |i: usize, t: f64| {
        if prof.ns_max[i] <= t {
            inst.bound(i)
        } else {
            share_at(i, t) / prof.norm_per_task[i]
        }
    };

    // (level, user, starts growing?)
    let mut events: Vec<(f64, usize, bool)> = Vec::with_capacity(2 * n);
    for i in 0..n {
        if floors[i] < prof.ns_max[i] {
            events.push((floors[i], i, true));
            if prof.ns_max[i].is_finite() {
                events.push((prof.ns_max[i], i, false));
            }
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.2.cmp(&a.2)));

    let mut load = vec![0.0; m];
    for i in 0..n {
        let x = floors[i] / prof.norm_per_task[i];
        for (l, &r) in load.iter_mut().zip(inst.demand_row(i)) {
            *l += r * x;
        }
    }
    let mut slope = vec![0.0; m];
    let mut level = 0.0_f64;
    let mut k = 0;
    let threshold = loop {
        // advance through events at or below the current level
        while k < events.len() && events[k].0 <= level {
            let (_, i, starts) = events[k];
            let sign = if starts { 1.0 } else { -1.0 };
            let nrm = prof.norm_per_task[i];
            for (s, &r) in slope.iter_mut().zip(inst.demand_row(i)) {
                *s += sign * r / nrm;
            }
            k += 1;
        }
        let next = events.get(k).map_or(f64::INFINITY, |e| e.0);
        // first saturation within [level, next]
        let hit = (0..m)
            .filter(|&j| slope[j] > 1e-300)
            .map(|j| level + (1.0 - load[j]).max(0.0) / slope[j])
            .fold(f64::INFINITY, f64::min);
        if hit <= next && hit < f64::INFINITY {
            break hit;
        }
        if next == f64::INFINITY {
            // nobody is growing any more
            break level;
        }
        for (l, &s) in load.iter_mut().zip(&slope) {
            *l += s.max(0.0) * (next - level);
        }
        level = next;
    };
    let x = (0..n).map(|i| tasks_at(i, threshold)).collect();
    Ok(Allocation::from_tasks(inst, x))
}
