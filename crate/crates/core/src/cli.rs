//! Command-line front end. [`run`] returns the process exit code:
//! 0 success, 1 a checked property fails, 2 bad input, 3 infeasible or
//! unbounded, 4 no convergence.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bench::{self, GenConfig, Mechanism, Objective, OracleVariant};
use crate::error::{Error, Result};
use crate::lp::{solve_ceei, utilization_lp, welfare_lp};
use crate::model::{Allocation, Instance, InstanceFile, MaybeInf, Norm, WeightPolicy};
use crate::properties::{self, lexicographic_compare, Property, PropertyReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PROPERTY: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_CONVERGENCE: i32 = 4;

const CEEI_TOL: f64 = 1e-10;

#[derive(Parser, Debug)]
#[command(name = "lmmns", version, about = "Multi-resource fair allocation with bounded task counts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve an instance with one mechanism and write the allocation.
    Solve {
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = SolveMechanism::Lmmns)]
        mechanism: SolveMechanism,
        /// Override the instance norm (a number >= 1 or `inf`).
        #[arg(long)]
        p: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Rescale weights that do not sum to 1 instead of rejecting them.
        #[arg(long)]
        renormalize: bool,
    },
    /// Check fairness properties of an allocation.
    Check {
        instance: PathBuf,
        allocation: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "pe,si,ef,bbf")]
        properties: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a random instance.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        trial: usize,
        #[arg(long, default_value = "inf")]
        p: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Quality sweep against an LP oracle.
    Bench {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        m: usize,
        /// `1:40`, `1,2,inf`, or a single value.
        #[arg(long, default_value = "inf")]
        p_sweep: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value = "welfare")]
        objective: String,
        #[arg(long, default_value = "plain")]
        oracle: String,
        #[arg(long, default_value = "lmmns")]
        mechanism: String,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run every mechanism on one instance and compare them.
    Compare {
        instance: PathBuf,
        #[arg(long)]
        p: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SolveMechanism {
    Lmmns,
    Modified,
    Waterfill,
    Ceei,
    WelfareLp,
    UtilLp,
}

impl SolveMechanism {
    fn name(self) -> &'static str {
        match self {
            SolveMechanism::Lmmns => "lmmns",
            SolveMechanism::Modified => "modified",
            SolveMechanism::Waterfill => "waterfill",
            SolveMechanism::Ceei => "ceei",
            SolveMechanism::WelfareLp => "welfare-lp",
            SolveMechanism::UtilLp => "util-lp",
        }
    }

    fn solve(self, inst: &Instance) -> Result<Allocation> {
        match self {
            SolveMechanism::Lmmns => crate::solve_lmmns_general(inst),
            SolveMechanism::Modified => crate::solve_modified_lmmns(inst),
            SolveMechanism::Waterfill => crate::solve_waterfilling(inst),
            SolveMechanism::Ceei => Ok(solve_ceei(inst, CEEI_TOL)?.allocation),
            SolveMechanism::WelfareLp => Ok(welfare_lp(inst, false)?.allocation),
            SolveMechanism::UtilLp => Ok(utilization_lp(inst, false)?.allocation),
        }
    }
}

/// The allocation file format. Only `tasks` is read back by `check`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AllocationFile {
    #[serde(default = "one")]
    pub schema: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mechanism: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<MaybeInf>,
    pub tasks: Vec<f64>,
    #[serde(default)]
    pub normalized_shares: Vec<f64>,
    #[serde(default)]
    pub consumption: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub welfare: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utilization: Option<f64>,
}

fn one() -> u32 {
    1
}

impl AllocationFile {
    pub fn new(mechanism: &str, norm: Norm, alloc: &Allocation) -> Self {
        AllocationFile {
            schema: 1,
            mechanism: Some(mechanism.into()),
            p: Some(norm.into()),
            tasks: alloc.tasks.clone(),
            normalized_shares: alloc.normalized_shares.clone(),
            consumption: alloc.consumption.clone(),
            welfare: Some(alloc.welfare()),
            utilization: Some(alloc.utilization()),
        }
    }
}

#[derive(Serialize)]
struct MechanismSummary {
    mechanism: String,
    tasks: Vec<f64>,
    welfare: f64,
    utilization: f64,
    properties: Vec<PropertyReport>,
    /// Sorted normalized shares compared with LMMNS: `less`, `equal` or `greater`.
    lex_vs_lmmns: String,
}

#[derive(Serialize)]
struct Comparison {
    schema: u32,
    p: MaybeInf,
    mechanisms: Vec<MechanismSummary>,
    /// Mechanisms that failed on this instance, with the reason.
    errors: Vec<(String, String)>,
}

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Infeasible(_) | Error::Unbounded(_) => EXIT_INFEASIBLE,
        Error::Convergence { .. } => EXIT_CONVERGENCE,
        _ => EXIT_INPUT,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(stderr, "{}", e.render())
            } else {
                write!(stdout, "{}", e.render())
            };
            return code;
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn read_instance(path: &Path, policy: WeightPolicy) -> Result<Instance> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let file: InstanceFile = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    file.into_instance(policy)
}

fn read_allocation(path: &Path) -> Result<AllocationFile> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let file: AllocationFile = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    if file.schema != 1 {
        return Err(Error::Parse(format!("unsupported schema version {}", file.schema)));
    }
    Ok(file)
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    match out {
        Some(path) => fs::write(path, text + "\n")?,
        None => writeln!(stdout, "{text}")?,
    }
    Ok(())
}

fn with_p(inst: Instance, p: Option<&str>) -> Result<Instance> {
    Ok(match p {
        Some(s) => inst.with_norm(s.parse()?),
        None => inst,
    })
}

fn dispatch(cmd: Command, stdout: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Solve {
            instance,
            mechanism,
            p,
            out,
            renormalize,
        } => {
            let policy = if renormalize {
                WeightPolicy::Renormalize
            } else {
                WeightPolicy::Reject
            };
            let inst = with_p(read_instance(&instance, policy)?, p.as_deref())?;
            let alloc = mechanism.solve(&inst)?;
            emit(&AllocationFile::new(mechanism.name(), inst.norm(), &alloc), out.as_deref(), stdout)?;
            Ok(EXIT_OK)
        }
        Command::Check {
            instance,
            allocation,
            properties,
            out,
        } => {
            let inst = read_instance(&instance, WeightPolicy::Reject)?;
            let file = read_allocation(&allocation)?;
            if file.tasks.len() != inst.n() {
                return Err(Error::InvalidArgument(format!(
                    "allocation has {} users, instance has {}",
                    file.tasks.len(),
                    inst.n()
                )));
            }
            let alloc = Allocation::from_tasks(&inst, file.tasks);
            let reports = properties
                .iter()
                .map(|s| properties::check(s.parse::<Property>()?, &inst, &alloc))
                .collect::<Result<Vec<_>>>()?;
            emit(&reports, out.as_deref(), stdout)?;
            Ok(if reports.iter().all(|r| r.holds) {
                EXIT_OK
            } else {
                EXIT_PROPERTY
            })
        }
        Command::Gen {
            n,
            m,
            seed,
            trial,
            p,
            out,
        } => {
            let cfg = GenConfig::new(n, m, seed);
            cfg.check()?;
            let inst = bench::gen_instance(&cfg, trial).with_norm(p.parse()?);
            emit(&inst, out.as_deref(), stdout)?;
            Ok(EXIT_OK)
        }
        Command::Bench {
            n,
            m,
            p_sweep,
            seed,
            trials,
            objective,
            oracle,
            mechanism,
            csv,
        } => {
            let cfg = GenConfig {
                n,
                m,
                p_sweep: bench::parse_p_sweep(&p_sweep)?,
                seed,
                trials,
            };
            let objective: Objective = objective.parse()?;
            let oracle: OracleVariant = oracle.parse()?;
            let mechanism: Mechanism = mechanism.parse()?;
            let res = bench::run_quality_sweep(&cfg, mechanism, objective, oracle)?;
            if let Some(path) = csv {
                bench::write_csv(&res.records, fs::File::create(path)?)?;
            }
            writeln!(stdout, "p,mean_ratio")?;
            for (p, mean) in &res.means {
                writeln!(stdout, "{p},{mean:.6}")?;
            }
            if res.excluded > 0 {
                writeln!(stdout, "# {} trials excluded: oracle infeasible", res.excluded)?;
            }
            Ok(EXIT_OK)
        }
        Command::Compare { instance, p, out } => {
            let inst = with_p(read_instance(&instance, WeightPolicy::Reject)?, p.as_deref())?;
            let reference = crate::solve_lmmns_general(&inst)?;
            let mut mechanisms = Vec::new();
            let mut errors = Vec::new();
            for mech in [
                SolveMechanism::Lmmns,
                SolveMechanism::Modified,
                SolveMechanism::Ceei,
                SolveMechanism::WelfareLp,
                SolveMechanism::UtilLp,
            ] {
                let alloc = match mech.solve(&inst) {
                    Ok(a) => a,
                    Err(e) => {
                        errors.push((mech.name().to_string(), e.to_string()));
                        continue;
                    }
                };
                let props = [Property::Pe, Property::Si, Property::Ef, Property::Bbf]
                    .into_iter()
                    .map(|p| properties::check(p, &inst, &alloc))
                    .collect::<Result<Vec<_>>>()?;
                let lex = match lexicographic_compare(&alloc.normalized_shares, &reference.normalized_shares)? {
                    std::cmp::Ordering::Less => "less",
                    std::cmp::Ordering::Equal => "equal",
                    std::cmp::Ordering::Greater => "greater",
                };
                mechanisms.push(MechanismSummary {
                    mechanism: mech.name().into(),
                    welfare: alloc.welfare(),
                    utilization: alloc.utilization(),
                    tasks: alloc.tasks,
                    properties: props,
                    lex_vs_lmmns: lex.into(),
                });
            }
            let report = Comparison {
                schema: 1,
                p: inst.norm().into(),
                mechanisms,
                errors,
            };
            emit(&report, out.as_deref(), stdout)?;
            Ok(EXIT_OK)
        }
    }
}
