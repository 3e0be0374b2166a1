//! Allocation-problem instances and allocations.
//!
//! An [`Instance`] describes one server shared by `n` users over `m` resource
//! types. Resource capacities are normalized to 1, so a demand `r[i][j]` is the
//! fraction of resource `j` one task of user `i` consumes. Weights `w[i][j]`
//! are the entitlements each user contributed; every weight column sums to 1.
//! Task counts are real-valued and capped per user by `B[i]`, which may be
//! `f64::INFINITY`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::norms;

/// Absolute tolerance for the weight column-sum check.
pub const WEIGHT_SUM_TOL: f64 = 1e-6;

/// Slack allowed on capacity and bound constraints of an [`Allocation`].
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// The norm used to collapse a weighted-share vector into a scalar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Norm {
    /// `(sum_j v_j^p)^(1/p)` with `p >= 1`.
    Finite(f64),
    /// `max_j v_j`. Never approximated by a large finite `p`.
    Infinity,
}

impl Norm {
    pub const L1: Norm = Norm::Finite(1.0);
    pub const L2: Norm = Norm::Finite(2.0);

    pub fn is_infinity(self) -> bool {
        matches!(self, Norm::Infinity)
    }

    /// `m^(1/p)`, the ratio between the norm of an all-ones vector of length
    /// `m` and its max entry.
    pub fn ones_factor(self, m: usize) -> f64 {
        match self {
            Norm::Finite(p) => (m as f64).powf(1.0 / p),
            Norm::Infinity => 1.0,
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Norm::Finite(p) => write!(f, "{p}"),
            Norm::Infinity => f.write_str("inf"),
        }
    }
}

impl FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if is_inf_token(t) {
            return Ok(Norm::Infinity);
        }
        let p: f64 = t
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("cannot parse norm `{s}`")))?;
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "norm parameter must be >= 1 or inf, got {s}"
            )));
        }
        Ok(Norm::Finite(p))
    }
}

fn is_inf_token(t: &str) -> bool {
    matches!(
        t.to_ascii_lowercase().as_str(),
        "inf" | "infinity" | "+inf" | "∞"
    )
}

/// A number that may be written as `"inf"` in JSON.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaybeInf(pub f64);

impl Serialize for MaybeInf {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0 == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for MaybeInf {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(MaybeInf(v)),
            Raw::Str(s) if is_inf_token(&s) => Ok(MaybeInf(f64::INFINITY)),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"inf\", got \"{s}\""
            ))),
        }
    }
}

impl From<Norm> for MaybeInf {
    fn from(n: Norm) -> Self {
        match n {
            Norm::Finite(p) => MaybeInf(p),
            Norm::Infinity => MaybeInf(f64::INFINITY),
        }
    }
}

impl From<MaybeInf> for Norm {
    fn from(v: MaybeInf) -> Self {
        if v.0 == f64::INFINITY {
            Norm::Infinity
        } else {
            Norm::Finite(v.0)
        }
    }
}

/// One reason an instance is rejected.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Shape(String),
    NegativeDemand { user: usize, resource: usize, value: f64 },
    DemandAboveOne { user: usize, resource: usize, value: f64 },
    ZeroDemandRow { user: usize },
    WeightOutOfRange { user: usize, resource: usize, value: f64 },
    WeightsNotNormalized { resource: usize, sum: f64 },
    InvalidBound { user: usize, value: f64 },
    InvalidNorm { p: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape(msg) => write!(f, "shape mismatch: {msg}"),
            Violation::NegativeDemand { user, resource, value } => write!(
                f,
                "negative demand r[{user}][{resource}] = {value}"
            ),
            Violation::DemandAboveOne { user, resource, value } => write!(
                f,
                "demand r[{user}][{resource}] = {value} is not a fraction in [0, 1]"
            ),
            Violation::ZeroDemandRow { user } => {
                write!(f, "all-zero demand row for user {user}")
            }
            Violation::WeightOutOfRange { user, resource, value } => write!(
                f,
                "weight w[{user}][{resource}] = {value} outside (0, 1]"
            ),
            Violation::WeightsNotNormalized { resource, sum } => write!(
                f,
                "weights not normalized: column {resource} sums to {sum}"
            ),
            Violation::InvalidBound { user, value } => {
                write!(f, "task bound B[{user}] = {value} must be positive")
            }
            Violation::InvalidNorm { p } => write!(f, "norm parameter p = {p} is below 1"),
        }
    }
}

/// What to do with weight columns that do not sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightPolicy {
    #[default]
    Reject,
    Renormalize,
}

/// A single-server allocation problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    n: usize,
    m: usize,
    demands: Vec<f64>,
    weights: Vec<f64>,
    bounds: Vec<f64>,
    norm: Norm,
}

impl Instance {
    /// Builds and validates an instance. `weights = None` means equal weights `1/n`.
    pub fn new(
        demands: Vec<Vec<f64>>,
        weights: Option<Vec<Vec<f64>>>,
        bounds: Vec<f64>,
        norm: Norm,
    ) -> Result<Self> {
        Self::with_policy(demands, weights, bounds, norm, WeightPolicy::Reject)
    }

    pub fn with_policy(
        demands: Vec<Vec<f64>>,
        weights: Option<Vec<Vec<f64>>>,
        bounds: Vec<f64>,
        norm: Norm,
        policy: WeightPolicy,
    ) -> Result<Self> {
        let mut inst = Self::new_unchecked(demands, weights, bounds, norm)?;
        if policy == WeightPolicy::Renormalize {
            inst.renormalize_weights();
        }
        validate(&inst).map_err(Error::Invalid)?;
        Ok(inst)
    }

    /// Builds an instance checking only that the dimensions agree.
    pub fn new_unchecked(
        demands: Vec<Vec<f64>>,
        weights: Option<Vec<Vec<f64>>>,
        bounds: Vec<f64>,
        norm: Norm,
    ) -> Result<Self> {
        let n = demands.len();
        let shape = |msg: String| Error::Invalid(vec![Violation::Shape(msg)]);
        if n == 0 {
            return Err(shape("instance has no users".into()));
        }
        let m = demands[0].len();
        if m == 0 {
            return Err(shape("instance has no resources".into()));
        }
        if let Some(i) = demands.iter().position(|row| row.len() != m) {
            return Err(shape(format!(
                "demand row {i} has {} entries, expected {m}",
                demands[i].len()
            )));
        }
        if bounds.len() != n {
            return Err(shape(format!("{} bounds for {n} users", bounds.len())));
        }
        let weights = match weights {
            Some(w) => {
                if w.len() != n {
                    return Err(shape(format!("{} weight rows for {n} users", w.len())));
                }
                if let Some(i) = w.iter().position(|row| row.len() != m) {
                    return Err(shape(format!(
                        "weight row {i} has {} entries, expected {m}",
                        w[i].len()
                    )));
                }
                w.into_iter().flatten().collect()
            }
            None => vec![1.0 / n as f64; n * m],
        };
        Ok(Instance {
            n,
            m,
            demands: demands.into_iter().flatten().collect(),
            weights,
            bounds,
            norm,
        })
    }

    /// Builds from a row-major demand buffer with equal weights, without validation.
    /// Used by generators that already guarantee validity.
    pub(crate) fn from_flat_equal_weights(
        n: usize,
        m: usize,
        demands: Vec<f64>,
        bounds: Vec<f64>,
        norm: Norm,
    ) -> Self {
        debug_assert_eq!(demands.len(), n * m);
        debug_assert_eq!(bounds.len(), n);
        Instance {
            n,
            m,
            demands,
            weights: vec![1.0 / n as f64; n * m],
            bounds,
            norm,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn norm(&self) -> Norm {
        self.norm
    }

    #[inline]
    pub fn demand(&self, user: usize, resource: usize) -> f64 {
        self.demands[user * self.m + resource]
    }

    #[inline]
    pub fn demand_row(&self, user: usize) -> &[f64] {
        &self.demands[user * self.m..(user + 1) * self.m]
    }

    #[inline]
    pub fn weight(&self, user: usize, resource: usize) -> f64 {
        self.weights[user * self.m + resource]
    }

    #[inline]
    pub fn weight_row(&self, user: usize) -> &[f64] {
        &self.weights[user * self.m..(user + 1) * self.m]
    }

    #[inline]
    pub fn bound(&self, user: usize) -> f64 {
        self.bounds[user]
    }

    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    pub fn demand_rows(&self) -> Vec<Vec<f64>> {
        self.demands.chunks(self.m).map(<[f64]>::to_vec).collect()
    }

    pub fn weight_rows(&self) -> Vec<Vec<f64>> {
        self.weights.chunks(self.m).map(<[f64]>::to_vec).collect()
    }

    pub fn has_zero_demand(&self) -> bool {
        self.demands.iter().any(|&r| r == 0.0)
    }

    /// True when every weight equals `1/n` (within 1e-12).
    pub fn has_equal_weights(&self) -> bool {
        let w = 1.0 / self.n as f64;
        self.weights.iter().all(|&x| (x - w).abs() <= 1e-12)
    }

    pub fn with_norm(&self, norm: Norm) -> Instance {
        Instance { norm, ..self.clone() }
    }

    /// A copy in which `user` reports a different demand vector and bound.
    pub fn with_report(&self, user: usize, demands: &[f64], bound: f64) -> Instance {
        assert_eq!(demands.len(), self.m, "report has wrong length");
        let mut out = self.clone();
        out.demands[user * self.m..(user + 1) * self.m].copy_from_slice(demands);
        out.bounds[user] = bound;
        out
    }

    fn renormalize_weights(&mut self) {
        for j in 0..self.m {
            let sum: f64 = (0..self.n).map(|i| self.weight(i, j)).sum();
            if sum > 0.0 && sum.is_finite() {
                for i in 0..self.n {
                    self.weights[i * self.m + j] /= sum;
                }
            }
        }
    }
}

/// Checks every instance invariant and reports all violations found.
pub fn validate(inst: &Instance) -> std::result::Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    if let Norm::Finite(p) = inst.norm {
        if !(p >= 1.0) || !p.is_finite() {
            out.push(Violation::InvalidNorm { p });
        }
    }
    for i in 0..inst.n {
        let row = inst.demand_row(i);
        for (j, &r) in row.iter().enumerate() {
            if r < 0.0 {
                out.push(Violation::NegativeDemand { user: i, resource: j, value: r });
            } else if !(r <= 1.0) {
                out.push(Violation::DemandAboveOne { user: i, resource: j, value: r });
            }
        }
        if row.iter().all(|&r| r == 0.0) {
            out.push(Violation::ZeroDemandRow { user: i });
        }
        for (j, &w) in inst.weight_row(i).iter().enumerate() {
            if !(w > 0.0 && w <= 1.0) {
                out.push(Violation::WeightOutOfRange { user: i, resource: j, value: w });
            }
        }
        let b = inst.bound(i);
        if !(b > 0.0) {
            out.push(Violation::InvalidBound { user: i, value: b });
        }
    }
    for j in 0..inst.m {
        let sum: f64 = (0..inst.n).map(|i| inst.weight(i, j)).sum();
        if !((sum - 1.0).abs() <= WEIGHT_SUM_TOL) {
            out.push(Violation::WeightsNotNormalized { resource: j, sum });
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

pub(crate) fn ensure_valid(inst: &Instance) -> Result<()> {
    validate(inst).map_err(Error::Invalid)
}

/// The `n x m` weight matrix with every entry `1/n`.
pub fn equal_weights(n: usize, m: usize) -> Result<Vec<Vec<f64>>> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument(format!(
            "equal weights need n >= 1 and m >= 1, got n = {n}, m = {m}"
        )));
    }
    Ok(vec![vec![1.0 / n as f64; m]; n])
}

/// Per-user task counts together with the quantities derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub tasks: Vec<f64>,
    pub consumption: Vec<f64>,
    pub normalized_shares: Vec<f64>,
}

impl Allocation {
    pub fn from_tasks(inst: &Instance, tasks: Vec<f64>) -> Self {
        assert_eq!(tasks.len(), inst.n(), "task vector has wrong length");
        let mut consumption = vec![0.0; inst.m()];
        for (i, &x) in tasks.iter().enumerate() {
            for (c, &r) in consumption.iter_mut().zip(inst.demand_row(i)) {
                *c += r * x;
            }
        }
        let normalized_shares = tasks
            .iter()
            .enumerate()
            .map(|(i, &x)| norms::task_norm(inst, i) * x)
            .collect();
        Allocation {
            tasks,
            consumption,
            normalized_shares,
        }
    }

    pub fn welfare(&self) -> f64 {
        self.tasks.iter().sum()
    }

    /// `min_j c_j`.
    pub fn utilization(&self) -> f64 {
        self.consumption.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Returns a description of every broken allocation invariant.
    pub fn check_invariants(&self, inst: &Instance) -> std::result::Result<(), Vec<String>> {
        let mut out = Vec::new();
        if self.tasks.len() != inst.n() || self.consumption.len() != inst.m() {
            out.push(format!(
                "allocation has {} users and {} resources, instance has {} and {}",
                self.tasks.len(),
                self.consumption.len(),
                inst.n(),
                inst.m()
            ));
            return Err(out);
        }
        let fresh = Allocation::from_tasks(inst, self.tasks.clone());
        for (j, &c) in fresh.consumption.iter().enumerate() {
            if c > 1.0 + FEASIBILITY_TOL {
                out.push(format!("resource {j} over capacity: {c}"));
            }
        }
        for (i, &x) in self.tasks.iter().enumerate() {
            if !(x >= 0.0) {
                out.push(format!("user {i} has negative task count {x}"));
            }
            if x > inst.bound(i) + FEASIBILITY_TOL {
                out.push(format!("user {i} exceeds its bound: {x} > {}", inst.bound(i)));
            }
        }
        for (i, (&a, &b)) in self
            .normalized_shares
            .iter()
            .zip(&fresh.normalized_shares)
            .enumerate()
        {
            if (a - b).abs() > FEASIBILITY_TOL * b.abs().max(1.0) {
                out.push(format!("user {i} normalized share {a} != {b}"));
            }
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }
}

/// The on-disk instance format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    #[serde(default = "schema_version")]
    pub schema: u32,
    pub users: usize,
    pub resources: usize,
    pub demands: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<Vec<f64>>>,
    pub bounds: Vec<MaybeInf>,
    pub p: MaybeInf,
}

pub(crate) fn schema_version() -> u32 {
    1
}

impl InstanceFile {
    pub fn into_instance(self, policy: WeightPolicy) -> Result<Instance> {
        if self.schema != 1 {
            return Err(Error::Parse(format!("unsupported schema version {}", self.schema)));
        }
        if self.demands.len() != self.users {
            return Err(Error::Invalid(vec![Violation::Shape(format!(
                "\"users\" is {} but there are {} demand rows",
                self.users,
                self.demands.len()
            ))]));
        }
        if let Some(i) = self.demands.iter().position(|r| r.len() != self.resources) {
            return Err(Error::Invalid(vec![Violation::Shape(format!(
                "\"resources\" is {} but demand row {i} has {} entries",
                self.resources,
                self.demands[i].len()
            ))]));
        }
        Instance::with_policy(
            self.demands,
            self.weights,
            self.bounds.into_iter().map(|b| b.0).collect(),
            self.p.into(),
            policy,
        )
    }
}

impl From<&Instance> for InstanceFile {
    fn from(inst: &Instance) -> Self {
        InstanceFile {
            schema: 1,
            users: inst.n,
            resources: inst.m,
            demands: inst.demand_rows(),
            weights: if inst.has_equal_weights() {
                None
            } else {
                Some(inst.weight_rows())
            },
            bounds: inst.bounds.iter().map(|&b| MaybeInf(b)).collect(),
            p: inst.norm.into(),
        }
    }
}

impl Serialize for Instance {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        InstanceFile::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Instance {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        InstanceFile::deserialize(d)?
            .into_instance(WeightPolicy::Reject)
            .map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_users() -> Instance {
        Instance::new(
            vec![vec![1.0 / 18.0, 1.0 / 9.0], vec![1.0 / 6.0, 1.0 / 36.0]],
            None,
            vec![5.0, 3.0],
            Norm::Infinity,
        )
        .unwrap()
    }

    #[test]
    fn two_user_instance_is_valid() {
        assert_eq!(validate(&two_users()), Ok(()));
    }

    #[test]
    fn zero_row_rejected() {
        let inst = Instance::new_unchecked(
            vec![vec![0.0, 0.0], vec![0.5, 0.5]],
            None,
            vec![1.0, 1.0],
            Norm::L1,
        )
        .unwrap();
        let v = validate(&inst).unwrap_err();
        assert_eq!(v, vec![Violation::ZeroDemandRow { user: 0 }]);
        assert!(v[0].to_string().contains("all-zero demand row"));
    }

    #[test]
    fn unnormalized_weights_rejected_or_renormalized() {
        let demands = vec![vec![0.1], vec![0.2]];
        let weights = Some(vec![vec![0.45], vec![0.45]]);
        let err = Instance::new(demands.clone(), weights.clone(), vec![1.0, 1.0], Norm::L1)
            .unwrap_err();
        match err {
            Error::Invalid(v) => {
                assert!(matches!(v[0], Violation::WeightsNotNormalized { resource: 0, .. }));
                assert!(v[0].to_string().contains("weights not normalized"));
            }
            e => panic!("unexpected {e}"),
        }
        let inst = Instance::with_policy(
            demands,
            weights,
            vec![1.0, 1.0],
            Norm::L1,
            WeightPolicy::Renormalize,
        )
        .unwrap();
        assert!((inst.weight(0, 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn reports_every_violation() {
        let inst = Instance::new_unchecked(
            vec![vec![-0.1, 2.0], vec![0.0, 0.0]],
            Some(vec![vec![0.5, 0.0], vec![0.5, 0.5]]),
            vec![0.0, f64::INFINITY],
            Norm::Finite(0.5),
        )
        .unwrap();
        let v = validate(&inst).unwrap_err();
        assert!(v.contains(&Violation::InvalidNorm { p: 0.5 }));
        assert!(v.contains(&Violation::NegativeDemand { user: 0, resource: 0, value: -0.1 }));
        assert!(v.contains(&Violation::DemandAboveOne { user: 0, resource: 1, value: 2.0 }));
        assert!(v.contains(&Violation::ZeroDemandRow { user: 1 }));
        assert!(v.contains(&Violation::WeightOutOfRange { user: 0, resource: 1, value: 0.0 }));
        assert!(v.contains(&Violation::InvalidBound { user: 0, value: 0.0 }));
        // validate has no side effects and is repeatable
        assert_eq!(validate(&inst).unwrap_err(), v);
    }

    #[test]
    fn shape_errors() {
        assert!(Instance::new_unchecked(vec![vec![0.1], vec![0.1, 0.2]], None, vec![1.0; 2], Norm::L1).is_err());
        assert!(Instance::new_unchecked(vec![vec![0.1]], None, vec![1.0; 2], Norm::L1).is_err());
        assert!(Instance::new_unchecked(vec![], None, vec![], Norm::L1).is_err());
    }

    #[test]
    fn equal_weights_entries() {
        for (n, m, w) in [(2, 2, 0.5), (100, 3, 0.01), (4, 2, 0.25)] {
            let ws = equal_weights(n, m).unwrap();
            assert_eq!(ws.len(), n);
            assert!(ws.iter().flatten().all(|&x| x == w));
            for j in 0..m {
                let s: f64 = ws.iter().map(|r| r[j]).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
        assert!(equal_weights(0, 2).is_err());
        assert!(equal_weights(2, 0).is_err());
    }

    #[test]
    fn json_round_trip_with_inf() {
        let text = r#"{"users": 2, "resources": 2,
            "demands": [[0.1, 0.2], [0.3, 0.05]],
            "bounds": [3, "inf"], "p": "inf"}"#;
        let inst: Instance = serde_json::from_str(text).unwrap();
        assert_eq!(inst.bound(1), f64::INFINITY);
        assert_eq!(inst.norm(), Norm::Infinity);
        assert!(inst.has_equal_weights());
        let back: Instance = serde_json::from_str(&serde_json::to_string(&inst).unwrap()).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn norm_parsing() {
        assert_eq!("inf".parse::<Norm>().unwrap(), Norm::Infinity);
        assert_eq!("2".parse::<Norm>().unwrap(), Norm::L2);
        assert!("0.5".parse::<Norm>().is_err());
        assert!("abc".parse::<Norm>().is_err());
    }

    #[test]
    fn allocation_invariants() {
        let inst = two_users();
        let a = Allocation::from_tasks(&inst, vec![5.0, 3.0]);
        assert!(a.check_invariants(&inst).is_ok());
        let bad = Allocation::from_tasks(&inst, vec![6.0, 3.0]);
        assert!(bad.check_invariants(&inst).is_err());
    }
}
