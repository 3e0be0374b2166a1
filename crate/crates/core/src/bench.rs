//! Random instances and quality sweeps.
//!
//! Quality is the mechanism's welfare (or utilization) divided by the LP
//! optimum on the same instance, so it lies in `(0, 1]`.
//!
//! Instances are drawn from `ChaCha8Rng::seed_from_u64(seed)` with the stream
//! set to the trial index. Within a trial the draws are made user by user:
//! the `m` demands of a user (redrawn together while all of them are below
//! `1e-9`), then its bound.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lp::{solve_ceei, utilization_lp, welfare_lp};
use crate::model::{Allocation, Instance, Norm};

/// Rows whose entries are all below this are redrawn.
pub const ZERO_ROW_EPS: f64 = 1e-9;

/// Tolerance handed to the CEEI solver inside sweeps.
pub const CEEI_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub n: usize,
    pub m: usize,
    pub p_sweep: Vec<Norm>,
    pub seed: u64,
    pub trials: usize,
}

impl GenConfig {
    pub fn new(n: usize, m: usize, seed: u64) -> Self {
        GenConfig {
            n,
            m,
            p_sweep: vec![Norm::Infinity],
            seed,
            trials: 50,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::InvalidArgument("n and m must be positive".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        if self.p_sweep.is_empty() {
            return Err(Error::InvalidArgument("p sweep is empty".into()));
        }
        Ok(())
    }
}

/// Parses `1:40`, `1,2,inf` or a single value.
pub fn parse_p_sweep(s: &str) -> Result<Vec<Norm>> {
    if let Some((a, b)) = s.split_once(':') {
        let lo: u32 = a.trim().parse().map_err(|_| Error::InvalidArgument(format!("bad p range `{s}`")))?;
        let hi: u32 = b.trim().parse().map_err(|_| Error::InvalidArgument(format!("bad p range `{s}`")))?;
        if lo < 1 || hi < lo {
            return Err(Error::InvalidArgument(format!("bad p range `{s}`")));
        }
        return Ok((lo..=hi).map(|p| Norm::Finite(p as f64)).collect());
    }
    s.split(',').map(|t| t.trim().parse()).collect()
}

/// Draws instance `trial` of the corpus described by `cfg`, with `p = inf`.
pub fn gen_instance(cfg: &GenConfig, trial: usize) -> Instance {
    let (n, m) = (cfg.n, cfg.m);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(trial as u64);
    let mut demands = Vec::with_capacity(n * m);
    let mut bounds = Vec::with_capacity(n);
    let mut row = vec![0.0; m];
    for _ in 0..n {
        loop {
            row.iter_mut().for_each(|r| *r = rng.gen::<f64>());
            if row.iter().any(|&r| r >= ZERO_ROW_EPS) {
                break;
            }
        }
        let top = row.iter().copied().fold(0.0, f64::max);
        let lo = 1.0 / (n as f64 * top);
        let hi = 1.0 / top;
        bounds.push(if lo < hi { rng.gen_range(lo..=hi) } else { hi });
        demands.extend_from_slice(&row);
    }
    Instance::from_flat_equal_weights(n, m, demands, bounds, Norm::Infinity)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mechanism {
    Lmmns,
    Modified,
    Waterfill,
    Ceei,
}

impl Mechanism {
    pub fn solve(self, inst: &Instance) -> Result<Allocation> {
        match self {
            Mechanism::Lmmns => crate::solve_lmmns_general(inst),
            Mechanism::Modified => crate::solve_modified_lmmns(inst),
            Mechanism::Waterfill => crate::solve_waterfilling(inst),
            Mechanism::Ceei => Ok(solve_ceei(inst, CEEI_TOL)?.allocation),
        }
    }

    fn uses_p(self) -> bool {
        !matches!(self, Mechanism::Ceei)
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mechanism::Lmmns => "lmmns",
            Mechanism::Modified => "modified",
            Mechanism::Waterfill => "waterfill",
            Mechanism::Ceei => "ceei",
        })
    }
}

impl FromStr for Mechanism {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lmmns" => Ok(Mechanism::Lmmns),
            "modified" => Ok(Mechanism::Modified),
            "waterfill" => Ok(Mechanism::Waterfill),
            "ceei" => Ok(Mechanism::Ceei),
            _ => Err(Error::InvalidArgument(format!("unknown mechanism `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Welfare,
    Utilization,
}

impl Objective {
    pub fn value(self, alloc: &Allocation) -> f64 {
        match self {
            Objective::Welfare => alloc.welfare(),
            Objective::Utilization => alloc.utilization(),
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Welfare => "welfare",
            Objective::Utilization => "utilization",
        })
    }
}

impl FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "welfare" => Ok(Objective::Welfare),
            "utilization" => Ok(Objective::Utilization),
            _ => Err(Error::InvalidArgument(format!("unknown objective `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleVariant {
    Plain,
    Si,
}

impl fmt::Display for OracleVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OracleVariant::Plain => "plain",
            OracleVariant::Si => "si",
        })
    }
}

impl FromStr for OracleVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(OracleVariant::Plain),
            "si" => Ok(OracleVariant::Si),
            _ => Err(Error::InvalidArgument(format!("unknown oracle `{s}`"))),
        }
    }
}

/// Optimum of the chosen LP on `inst`.
pub fn oracle_value(inst: &Instance, objective: Objective, oracle: OracleVariant) -> Result<f64> {
    let si = oracle == OracleVariant::Si;
    let sol = match objective {
        Objective::Welfare => welfare_lp(inst, si)?,
        Objective::Utilization => utilization_lp(inst, si)?,
    };
    Ok(sol.value)
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityRecord {
    pub mechanism: String,
    pub objective: String,
    pub oracle: String,
    pub n: usize,
    pub m: usize,
    pub p: String,
    pub seed: u64,
    pub trial: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub records: Vec<QualityRecord>,
    /// Mean ratio for every `p` of the sweep, in sweep order.
    pub means: Vec<(Norm, f64)>,
    /// Trials skipped because the oracle had no feasible point.
    pub excluded: usize,
}

/// Solves the mechanism for every `p` and trial and divides by the oracle.
pub fn run_quality_sweep(
    cfg: &GenConfig,
    mechanism: Mechanism,
    objective: Objective,
    oracle: OracleVariant,
) -> Result<SweepResult> {
    cfg.check()?;
    let norms: Vec<Norm> = if mechanism.uses_p() {
        cfg.p_sweep.clone()
    } else {
        vec![Norm::Infinity]
    };
    let per_trial: Vec<Result<Option<Vec<QualityRecord>>>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let inst = gen_instance(cfg, trial);
            let best = match oracle_value(&inst, objective, oracle) {
                Ok(v) => v,
                Err(Error::Infeasible(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            norms
                .iter()
                .map(|&p| {
                    let alloc = mechanism.solve(&inst.with_norm(p))?;
                    Ok(QualityRecord {
                        mechanism: mechanism.to_string(),
                        objective: objective.to_string(),
                        oracle: oracle.to_string(),
                        n: cfg.n,
                        m: cfg.m,
                        p: p.to_string(),
                        seed: cfg.seed,
                        trial,
                        ratio: objective.value(&alloc) / best,
                    })
                })
                .collect::<Result<Vec<_>>>()
                .map(Some)
        })
        .collect();

    let mut records = Vec::with_capacity(cfg.trials * norms.len());
    let mut excluded = 0;
    for t in per_trial {
        match t? {
            Some(rs) => records.extend(rs),
            None => excluded += 1,
        }
    }
    let kept = cfg.trials - excluded;
    let means = norms
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let sum: f64 = records.iter().skip(k).step_by(norms.len()).map(|r| r.ratio).sum();
            (p, if kept > 0 { sum / kept as f64 } else { f64::NAN })
        })
        .collect();
    Ok(SweepResult {
        records,
        means,
        excluded,
    })
}

/// Writes records with the fixed header
/// `mechanism,objective,oracle,n,m,p,seed,trial,ratio`.
pub fn write_csv<W: Write>(records: &[QualityRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        w.write_record(["mechanism", "objective", "oracle", "n", "m", "p", "seed", "trial", "ratio"])
            .map_err(csv_err)?;
    }
    for r in records {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::new(std::io::ErrorKind::Other, e.to_string()))
}
