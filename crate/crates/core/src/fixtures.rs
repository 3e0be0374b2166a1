//! Worked examples and counterexamples with their expected outcomes.
//!
//! Each fixture is a pair of JSON files compiled into the binary:
//! `<name>.instance.json` holds one or more labelled instances and
//! `<name>.expected.json` lists cases. A case names an instance, optionally
//! overrides `p`, picks a mechanism (or supplies an allocation under
//! `"given"`) and states partial expectations.

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::lp::{solve_ceei, utilization_lp, welfare_lp};
use crate::model::{Allocation, Instance, InstanceFile, MaybeInf, Norm, WeightPolicy};
use crate::properties::{check, Property};

macro_rules! catalog {
    ($($name:literal),* $(,)?) => {
        const FILES: &[(&str, &str, &str)] = &[
            $((
                $name,
                include_str!(concat!("../fixtures/", $name, ".instance.json")),
                include_str!(concat!("../fixtures/", $name, ".expected.json")),
            )),*
        ];
    };
}

catalog!(
    "example1",
    "table1",
    "table2",
    "table3",
    "thm1_si_violation",
    "thm4_welfare",
    "thm5_ef_pe_si",
    "thm6_utilization",
    "thm7",
    "thm10_bbf_ef",
    "thm11_bbf_gsp",
    "sec7_figure4",
    "thm14_welfare_counterexamples",
);

/// CEEI accuracy used when a fixture case asks for it.
const CEEI_TOL: f64 = 1e-12;

pub fn fixture_names() -> Vec<&'static str> {
    FILES.iter().map(|f| f.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureMechanism {
    Lmmns,
    LmmnsGeneral,
    Modified,
    Waterfill,
    Ceei,
    WelfareLp,
    UtilizationLp,
    Given,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expect {
    #[serde(default)]
    pub tasks: Option<Vec<f64>>,
    #[serde(default)]
    pub welfare: Option<f64>,
    #[serde(default)]
    pub utilization: Option<f64>,
    #[serde(default)]
    pub consumption: Option<Vec<f64>>,
    #[serde(default)]
    pub saturated: Vec<usize>,
    #[serde(default)]
    pub unsaturated: Vec<usize>,
    #[serde(default)]
    pub raw_dominant_shares: Option<Vec<f64>>,
    /// `(user, resource, r_ij x_i)` triples.
    #[serde(default)]
    pub raw_shares: Vec<(usize, usize, f64)>,
    #[serde(default)]
    pub properties: BTreeMap<String, bool>,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Case {
    pub label: String,
    pub instance: String,
    pub mechanism: FixtureMechanism,
    #[serde(default)]
    p: Option<MaybeInf>,
    #[serde(default)]
    pub given: Option<Vec<f64>>,
    pub expect: Expect,
    pub provenance: String,
}

impl Case {
    pub fn norm(&self) -> Option<Norm> {
        self.p.map(Norm::from)
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: String,
    pub description: String,
    pub instances: BTreeMap<String, Instance>,
    pub cases: Vec<Case>,
}

#[derive(Deserialize)]
struct InstancesFile {
    schema: u32,
    instances: BTreeMap<String, InstanceFile>,
}

#[derive(Deserialize)]
struct ExpectedFile {
    schema: u32,
    name: String,
    description: String,
    cases: Vec<Case>,
}

pub fn load_fixture(name: &str) -> Result<Fixture> {
    let (_, inst_src, exp_src) = FILES
        .iter()
        .find(|f| f.0 == name)
        .ok_or_else(|| Error::UnknownFixture(name.to_string()))?;
    let parse = |e: serde_json::Error| Error::Parse(format!("fixture {name}: {e}"));
    let inst: InstancesFile = serde_json::from_str(inst_src).map_err(parse)?;
    let exp: ExpectedFile = serde_json::from_str(exp_src).map_err(parse)?;
    if inst.schema != 1 || exp.schema != 1 {
        return Err(Error::Parse(format!("fixture {name}: unsupported schema")));
    }
    let instances = inst
        .instances
        .into_iter()
        .map(|(k, v)| Ok((k, v.into_instance(WeightPolicy::Reject)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    if let Some(c) = exp.cases.iter().find(|c| !instances.contains_key(&c.instance)) {
        return Err(Error::Parse(format!(
            "fixture {name}: case {} refers to unknown instance {}",
            c.label, c.instance
        )));
    }
    Ok(Fixture {
        name: exp.name,
        description: exp.description,
        instances,
        cases: exp.cases,
    })
}

impl Fixture {
    pub fn case(&self, label: &str) -> Result<&Case> {
        self.cases
            .iter()
            .find(|c| c.label == label)
            .ok_or_else(|| Error::InvalidArgument(format!("fixture {} has no case {label}", self.name)))
    }

    /// The case's instance with its `p` override applied.
    pub fn instance_for(&self, case: &Case) -> Instance {
        let inst = &self.instances[&case.instance];
        match case.norm() {
            Some(p) => inst.with_norm(p),
            None => inst.clone(),
        }
    }

    /// Runs the case's mechanism.
    pub fn run(&self, case: &Case) -> Result<Allocation> {
        let inst = self.instance_for(case);
        match case.mechanism {
            FixtureMechanism::Lmmns => crate::solve_lmmns(&inst),
            FixtureMechanism::LmmnsGeneral => crate::solve_lmmns_general(&inst),
            FixtureMechanism::Modified => crate::solve_modified_lmmns(&inst),
            FixtureMechanism::Waterfill => crate::solve_waterfilling(&inst),
            FixtureMechanism::Ceei => Ok(solve_ceei(&inst, CEEI_TOL)?.allocation),
            FixtureMechanism::WelfareLp => Ok(welfare_lp(&inst, false)?.allocation),
            FixtureMechanism::UtilizationLp => Ok(utilization_lp(&inst, false)?.allocation),
            FixtureMechanism::Given => {
                let x = case.given.clone().ok_or_else(|| {
                    Error::Parse(format!("case {} has no given allocation", case.label))
                })?;
                if x.len() != inst.n() {
                    return Err(Error::InvalidArgument(format!(
                        "case {}: {} tasks for {} users",
                        case.label,
                        x.len(),
                        inst.n()
                    )));
                }
                Ok(Allocation::from_tasks(&inst, x))
            }
        }
    }

    /// Runs the case and lists every expectation it misses.
    pub fn verify(&self, case: &Case) -> Result<Vec<String>> {
        let inst = self.instance_for(case);
        let alloc = self.run(case)?;
        let e = &case.expect;
        let tol = e.tolerance;
        let mut out = Vec::new();
        let mut near = |what: String, got: f64, want: f64| {
            if !((got - want).abs() <= tol * want.abs().max(1.0)) {
                out.push(format!("{what}: got {got}, expected {want}"));
            }
        };
        if let Some(x) = &e.tasks {
            for (i, (&g, &w)) in alloc.tasks.iter().zip(x).enumerate() {
                near(format!("x[{i}]"), g, w);
            }
        }
        if let Some(w) = e.welfare {
            near("welfare".into(), alloc.welfare(), w);
        }
        if let Some(u) = e.utilization {
            near("utilization".into(), alloc.utilization(), u);
        }
        if let Some(c) = &e.consumption {
            for (j, (&g, &w)) in alloc.consumption.iter().zip(c).enumerate() {
                near(format!("c[{j}]"), g, w);
            }
        }
        if let Some(ds) = &e.raw_dominant_shares {
            for (i, &w) in ds.iter().enumerate() {
                near(format!("raw dominant share {i}"), crate::norms::raw_dominant_share(&inst, &alloc, i)?, w);
            }
        }
        for &(i, j, w) in &e.raw_shares {
            near(format!("r[{i}][{j}] x[{i}]"), crate::norms::raw_share(&inst, &alloc, i, j)?, w);
        }
        for &j in &e.saturated {
            if alloc.consumption[j] < 1.0 - tol {
                out.push(format!("resource {j} should be saturated, c = {}", alloc.consumption[j]));
            }
        }
        for &j in &e.unsaturated {
            if alloc.consumption[j] >= 1.0 - tol {
                out.push(format!("resource {j} should have slack, c = {}", alloc.consumption[j]));
            }
        }
        for (name, &want) in &e.properties {
            let prop: Property = name.parse()?;
            let rep = check(prop, &inst, &alloc)?;
            if rep.holds != want {
                out.push(format!("{name}: holds = {}, expected {want}", rep.holds));
            }
        }
        Ok(out)
    }
}
