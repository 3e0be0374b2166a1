//! Executable checks of the fairness properties an allocation may have.
//!
//! Every check returns a [`PropertyReport`]. A failing report carries a
//! [`Witness`] with the offending users and the inequality that broke, so the
//! failure can be recomputed by hand.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Allocation, Instance};

/// Tolerance used by the property checks.
pub const PROPERTY_TOL: f64 = 1e-7;

/// Tolerance for comparing sorted normalized-share vectors.
pub const LEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub users: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resource: Option<usize>,
    pub lhs: f64,
    pub rhs: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub property: String,
    pub holds: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    pub tolerance: f64,
    /// Number of scenarios examined, for sampling-based checks.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
}

impl PropertyReport {
    fn pass(property: &str) -> Self {
        PropertyReport {
            property: property.into(),
            holds: true,
            witness: None,
            tolerance: PROPERTY_TOL,
            samples: None,
        }
    }

    fn fail(property: &str, witness: Witness) -> Self {
        PropertyReport {
            property: property.into(),
            holds: false,
            witness: Some(witness),
            tolerance: PROPERTY_TOL,
            samples: None,
        }
    }
}

/// The checkable properties.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Property {
    Pe,
    Si,
    Ef,
    Bbf,
}

impl std::str::FromStr for Property {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pe" => Ok(Property::Pe),
            "si" => Ok(Property::Si),
            "ef" => Ok(Property::Ef),
            "bbf" => Ok(Property::Bbf),
            other => Err(Error::InvalidArgument(format!("unknown property `{other}`"))),
        }
    }
}

pub fn check(property: Property, inst: &Instance, alloc: &Allocation) -> Result<PropertyReport> {
    match property {
        Property::Pe => check_pe(inst, alloc),
        Property::Si => check_si(inst, alloc),
        Property::Ef => check_ef(inst, alloc),
        Property::Bbf => check_bbf(inst, alloc),
    }
}

#[inline]
fn scaled(tol: f64, v: f64) -> f64 {
    tol * v.abs().max(1.0)
}

/// Recomputes consumption and rejects allocations outside the feasible set.
fn feasible_consumption(inst: &Instance, alloc: &Allocation) -> Result<Vec<f64>> {
    if alloc.tasks.len() != inst.n() {
        return Err(Error::InvalidArgument(format!(
            "allocation has {} users, instance has {}",
            alloc.tasks.len(),
            inst.n()
        )));
    }
    for (i, &x) in alloc.tasks.iter().enumerate() {
        if !(x >= -PROPERTY_TOL) || x > inst.bound(i) + scaled(PROPERTY_TOL, inst.bound(i)) {
            return Err(Error::InvalidArgument(format!(
                "user {i}: task count {x} outside [0, {}]",
                inst.bound(i)
            )));
        }
    }
    let fresh = Allocation::from_tasks(inst, alloc.tasks.clone());
    if let Some(j) = fresh.consumption.iter().position(|&c| c > 1.0 + PROPERTY_TOL) {
        return Err(Error::InvalidArgument(format!(
            "resource {j} over capacity: {}",
            fresh.consumption[j]
        )));
    }
    Ok(fresh.consumption)
}

fn at_bound(inst: &Instance, alloc: &Allocation, i: usize) -> bool {
    let b = inst.bound(i);
    b.is_finite() && alloc.tasks[i] >= b - scaled(PROPERTY_TOL, b)
}

/// Pareto efficiency: every user below its bound touches a saturated resource.
pub fn check_pe(inst: &Instance, alloc: &Allocation) -> Result<PropertyReport> {
    let c = feasible_consumption(inst, alloc)?;
    for i in 0..inst.n() {
        if at_bound(inst, alloc, i) {
            continue;
        }
        let blocked = inst
            .demand_row(i)
            .iter()
            .zip(&c)
            .any(|(&r, &cj)| r > 0.0 && cj >= 1.0 - PROPERTY_TOL);
        if !blocked {
            let (j, cmax) = inst
                .demand_row(i)
                .iter()
                .zip(&c)
                .enumerate()
                .filter(|(_, (&r, _))| r > 0.0)
                .map(|(j, (_, &cj))| (j, cj))
                .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
            return Ok(PropertyReport::fail(
                "pe",
                Witness {
                    users: vec![i],
                    resource: Some(j),
                    lhs: cmax,
                    rhs: 1.0,
                    detail: format!(
                        "user {i} is below its bound and every resource it uses has slack"
                    ),
                },
            ));
        }
    }
    Ok(PropertyReport::pass("pe"))
}

/// Sharing incentive: `x_i = B_i` or `r_ij x_i >= w_ij` for some `j`.
pub fn check_si(inst: &Instance, alloc: &Allocation) -> Result<PropertyReport> {
    feasible_consumption(inst, alloc)?;
    for i in 0..inst.n() {
        if at_bound(inst, alloc, i) {
            continue;
        }
        let x = alloc.tasks[i];
        let ok = (0..inst.m()).any(|j| inst.demand(i, j) * x >= inst.weight(i, j) - PROPERTY_TOL);
        if !ok {
            let j = (0..inst.m())
                .max_by(|&a, &b| {
                    let ra = inst.demand(i, a) / inst.weight(i, a);
                    let rb = inst.demand(i, b) / inst.weight(i, b);
                    ra.total_cmp(&rb).then(b.cmp(&a))
                })
                .unwrap_or(0);
            return Ok(PropertyReport::fail(
                "si",
                Witness {
                    users: vec![i],
                    resource: Some(j),
                    lhs: inst.demand(i, j) * x,
                    rhs: inst.weight(i, j),
                    detail: format!(
                        "user {i} is below its bound and receives less than its entitlement on every resource"
                    ),
                },
            ));
        }
    }
    Ok(PropertyReport::pass("si"))
}

/// Envy-freeness: a user below its bound weakly prefers its own bundle on
/// some resource, compared with every other user's bundle rescaled by weights.
pub fn check_ef(inst: &Instance, alloc: &Allocation) -> Result<PropertyReport> {
    feasible_consumption(inst, alloc)?;
    let n = inst.n();
    let ws = |i: usize, j: usize| inst.demand(i, j) * alloc.tasks[i] / inst.weight(i, j);
    for i in 0..n {
        if at_bound(inst, alloc, i) {
            continue;
        }
        for k in (0..n).filter(|&k| k != i) {
            let mut best = (0, f64::NEG_INFINITY);
            for j in 0..inst.m() {
                let gap = ws(i, j) - ws(k, j);
                if gap > best.1 {
                    best = (j, gap);
                }
            }
            if best.1 < -PROPERTY_TOL {
                let j = best.0;
                return Ok(PropertyReport::fail(
                    "ef",
                    Witness {
                        users: vec![i, k],
                        resource: Some(j),
                        lhs: ws(i, j),
                        rhs: ws(k, j),
                        detail: format!(
                            "user {i} envies user {k}: smaller weighted share on every resource"
                        ),
                    },
                ));
            }
        }
    }
    Ok(PropertyReport::pass("ef"))
}

/// Bottleneck-based fairness: every user is at its bound or holds its
/// entitlement of some saturated resource.
pub fn check_bbf(inst: &Instance, alloc: &Allocation) -> Result<PropertyReport> {
    let c = feasible_consumption(inst, alloc)?;
    let saturated: Vec<bool> = c.iter().map(|&cj| cj >= 1.0 - PROPERTY_TOL).collect();
    for i in 0..inst.n() {
        if at_bound(inst, alloc, i) {
            continue;
        }
        let x = alloc.tasks[i];
        let ok = (0..inst.m())
            .any(|j| saturated[j] && inst.demand(i, j) * x >= inst.weight(i, j) - PROPERTY_TOL);
        if !ok {
            let any_sat = saturated.iter().any(|&s| s);
            return Ok(PropertyReport::fail(
                "bbf",
                Witness {
                    users: vec![i],
                    resource: None,
                    lhs: x,
                    rhs: inst.bound(i),
                    detail: if any_sat {
                        format!("user {i} is below its bound and short of its entitlement on every bottleneck")
                    } else {
                        format!("user {i} is below its bound and no resource is saturated")
                    },
                },
            ));
        }
    }
    Ok(PropertyReport::pass("bbf"))
}

/// Compares two normalized-share vectors after sorting each ascending.
pub fn lexicographic_compare(a: &[f64], b: &[f64]) -> Result<Ordering> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot compare vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    for (x, y) in sa.iter().zip(&sb) {
        if (x - y).abs() > LEX_TOL * x.abs().max(y.abs()).max(1.0) {
            return Ok(x.total_cmp(y));
        }
    }
    Ok(Ordering::Equal)
}

/// Sampling plan for [`probe_gsp`].
#[derive(Debug, Clone)]
pub struct ProbeConfig {
    /// Multipliers applied to one report coordinate at a time (and to the
    /// whole demand vector).
    pub grid: Vec<f64>,
    /// Random log-uniform multiplier vectors per coalition.
    pub random_per_scenario: usize,
    /// Range of the random multipliers is `[1/spread, spread]`.
    pub spread: f64,
    pub max_coalition: usize,
    /// Coalitions sampled per size above one; all of them if there are fewer.
    pub coalitions_per_size: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            grid: vec![0.25, 0.5, 0.9, 1.1, 2.0, 4.0, 10.0],
            random_per_scenario: 50,
            spread: 10.0,
            max_coalition: 3,
            coalitions_per_size: 8,
            seed: 0,
        }
    }
}

/// One user's false report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub user: usize,
    pub demands: Vec<f64>,
    pub bound: f64,
}

/// A misreport under which every coalition member strictly gains.
#[derive(Debug, Clone, PartialEq)]
pub struct Deviation {
    pub reports: Vec<Report>,
    /// Truthful task counts of the members.
    pub truthful_tasks: Vec<f64>,
    /// Task counts granted under the misreport.
    pub misreport_tasks: Vec<f64>,
}

/// Solves the instance with `reports` substituted and tests whether every
/// reporting user receives strictly more of every resource it truly needs
/// than under `truth`.
pub fn evaluate_misreport<F>(
    inst: &Instance,
    solver: &F,
    truth: &Allocation,
    reports: &[Report],
) -> Result<Option<Deviation>>
where
    F: Fn(&Instance) -> Result<Allocation>,
{
    let mut fake = inst.clone();
    for rep in reports {
        fake = fake.with_report(rep.user, &rep.demands, rep.bound);
    }
    let alloc = solver(&fake)?;
    let gains = reports.iter().all(|rep| {
        let k = rep.user;
        let x_true = truth.tasks[k];
        if at_bound(inst, truth, k) {
            return false;
        }
        let x_fake = alloc.tasks[k];
        inst.demand_row(k)
            .iter()
            .zip(&rep.demands)
            .filter(|(&r, _)| r > 0.0)
            .all(|(&r, &rf)| {
                let before = r * x_true;
                rf * x_fake > before + scaled(PROPERTY_TOL, before)
            })
    });
    Ok(gains.then(|| Deviation {
        reports: reports.to_vec(),
        truthful_tasks: reports.iter().map(|r| truth.tasks[r.user]).collect(),
        misreport_tasks: reports.iter().map(|r| alloc.tasks[r.user]).collect(),
    }))
}

/// Searches sampled coalitions and misreports for a profitable deviation.
///
/// This is a falsification probe: a passing report means no sampled deviation
/// was profitable, not that none exists.
pub fn probe_gsp<F>(inst: &Instance, solver: &F, cfg: &ProbeConfig) -> Result<PropertyReport>
where
    F: Fn(&Instance) -> Result<Allocation>,
{
    let truth = solver(inst)?;
    let again = solver(inst)?;
    if truth.tasks != again.tasks {
        return Err(Error::InvalidArgument(
            "mechanism is not deterministic; the probe needs a pure solver".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = inst.n();
    let m = inst.m();

    let mut coalitions: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for size in 2..=cfg.max_coalition.min(n) {
        coalitions.extend(sample_coalitions(n, size, cfg.coalitions_per_size, &mut rng));
    }

    let mut samples = 0;
    for coalition in &coalitions {
        let mut plans: Vec<Vec<Vec<f64>>> = Vec::new();
        // grid: one coordinate (m demands + bound) or the whole demand vector
        for &g in &cfg.grid {
            for coord in 0..=m + 1 {
                let mut mult = vec![1.0; m + 1];
                if coord <= m {
                    mult[coord] = g;
                } else {
                    mult[..m].iter_mut().for_each(|v| *v = g);
                }
                plans.push(vec![mult; coalition.len()]);
            }
        }
        let log_spread = cfg.spread.ln();
        for _ in 0..cfg.random_per_scenario {
            plans.push(
                coalition
                    .iter()
                    .map(|_| {
                        (0..=m)
                            .map(|_| (rng.gen_range(-log_spread..=log_spread)).exp())
                            .collect()
                    })
                    .collect(),
            );
        }
        for plan in plans {
            let reports: Vec<Report> = coalition
                .iter()
                .zip(&plan)
                .map(|(&k, mult)| Report {
                    user: k,
                    demands: inst
                        .demand_row(k)
                        .iter()
                        .zip(mult)
                        .map(|(&r, &f)| (r * f).min(1.0))
                        .collect(),
                    bound: inst.bound(k) * mult[m],
                })
                .collect();
            samples += 1;
            // misreports the mechanism refuses are not deviations
            let Ok(found) = evaluate_misreport(inst, solver, &truth, &reports) else {
                continue;
            };
            if let Some(dev) = found {
                let users: Vec<usize> = coalition.clone();
                let detail = format!(
                    "coalition {:?} gains by reporting {:?}: tasks {:?} -> {:?}",
                    users,
                    dev.reports.iter().map(|r| (&r.demands, r.bound)).collect::<Vec<_>>(),
                    dev.truthful_tasks,
                    dev.misreport_tasks
                );
                let mut rep = PropertyReport::fail(
                    "gsp",
                    Witness {
                        users,
                        resource: None,
                        lhs: dev.misreport_tasks[0],
                        rhs: dev.truthful_tasks[0],
                        detail,
                    },
                );
                rep.samples = Some(samples);
                return Ok(rep);
            }
        }
    }
    let mut rep = PropertyReport::pass("gsp");
    rep.samples = Some(samples);
    Ok(rep)
}

fn sample_coalitions(n: usize, size: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let total = binomial(n, size);
    if total <= count as u128 {
        let mut out = Vec::new();
        let mut cur = Vec::with_capacity(size);
        combinations(n, size, 0, &mut cur, &mut out);
        return out;
    }
    let mut out: Vec<Vec<usize>> = Vec::with_capacity(count);
    while out.len() < count {
        let mut c: Vec<usize> = rand::seq::index::sample(rng, n, size).into_vec();
        c.sort_unstable();
        if !out.contains(&c) {
            out.push(c);
        }
    }
    out
}

fn binomial(n: usize, k: usize) -> u128 {
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r
}

fn combinations(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if cur.len() == k {
        out.push(cur.clone());
        return;
    }
    for i in start..n {
        cur.push(i);
        combinations(n, k, i + 1, cur, out);
        cur.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Norm;

    fn bbf_instance() -> Instance {
        Instance::new(
            vec![vec![1.0 / 3.0, 1.0 / 6.0], vec![0.5, 1.0 / 3.0], vec![1.0 / 6.0, 0.5]],
            None,
            vec![2.0; 3],
            Norm::Infinity,
        )
        .unwrap()
    }

    #[test]
    fn bbf_without_ef() {
        let inst = bbf_instance();
        let a = Allocation::from_tasks(&inst, vec![1.0; 3]);
        assert!(check_bbf(&inst, &a).unwrap().holds);
        let ef = check_ef(&inst, &a).unwrap();
        assert!(!ef.holds);
        assert_eq!(ef.witness.unwrap().users, vec![0, 1]);
    }

    #[test]
    fn halved_allocation_is_not_pe() {
        let inst = bbf_instance();
        let a = Allocation::from_tasks(&inst, vec![0.5; 3]);
        let r = check_pe(&inst, &a).unwrap();
        assert!(!r.holds);
        assert_eq!(r.witness.as_ref().unwrap().users, vec![0]);
        assert!(!check_bbf(&inst, &a).unwrap().holds);
    }

    #[test]
    fn everyone_capped_passes_si() {
        let inst = Instance::new(vec![vec![0.1, 0.1], vec![0.2, 0.1]], None, vec![1.0, 1.0], Norm::L1)
            .unwrap();
        let a = Allocation::from_tasks(&inst, vec![1.0, 1.0]);
        assert!(check_si(&inst, &a).unwrap().holds);
        assert!(check_pe(&inst, &a).unwrap().holds);
    }

    #[test]
    fn single_user_is_envy_free() {
        let inst = Instance::new(vec![vec![0.3, 0.1]], None, vec![1.0], Norm::L1).unwrap();
        let a = Allocation::from_tasks(&inst, vec![0.5]);
        assert!(check_ef(&inst, &a).unwrap().holds);
    }

    #[test]
    fn infeasible_allocation_rejected() {
        let inst = bbf_instance();
        let a = Allocation::from_tasks(&inst, vec![3.0; 3]);
        assert!(check_pe(&inst, &a).is_err());
        let short = Allocation {
            tasks: vec![1.0],
            consumption: vec![],
            normalized_shares: vec![],
        };
        assert!(check_si(&inst, &short).is_err());
    }

    #[test]
    fn lexicographic_examples() {
        let a = [0.8, 0.9, 0.4];
        let b = [0.6, 0.7, 0.5];
        assert_eq!(lexicographic_compare(&a, &b).unwrap(), Ordering::Less);
        assert_eq!(lexicographic_compare(&b, &a).unwrap(), Ordering::Greater);
        assert_eq!(lexicographic_compare(&a, &a).unwrap(), Ordering::Equal);
        assert_eq!(lexicographic_compare(&a, &[0.4, 0.8, 0.9]).unwrap(), Ordering::Equal);
        assert!(lexicographic_compare(&a, &b[..2]).is_err());
    }

    #[test]
    fn identity_report_never_profitable() {
        let inst = bbf_instance();
        let solver = |i: &Instance| crate::solve_lmmns(i);
        let truth = solver(&inst).unwrap();
        let reports = vec![Report {
            user: 0,
            demands: inst.demand_row(0).to_vec(),
            bound: inst.bound(0),
        }];
        assert!(evaluate_misreport(&inst, &solver, &truth, &reports).unwrap().is_none());
    }

    #[test]
    fn non_deterministic_solver_rejected() {
        use std::cell::Cell;
        let inst = bbf_instance();
        let calls = Cell::new(0.0);
        let solver = |i: &Instance| {
            calls.set(calls.get() + 1.0);
            Ok(Allocation::from_tasks(i, vec![calls.get() * 0.1; 3]))
        };
        assert!(probe_gsp(&inst, &solver, &ProbeConfig::default()).is_err());
    }

    #[test]
    fn coalition_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_coalitions(4, 2, 10, &mut rng).len(), 6);
        let s = sample_coalitions(20, 3, 5, &mut rng);
        assert_eq!(s.len(), 5);
        assert!(s.iter().all(|c| c.len() == 3 && c.windows(2).all(|w| w[0] < w[1])));
    }
}
