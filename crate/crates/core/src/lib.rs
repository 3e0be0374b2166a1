//! Multi-resource fair allocation with bounded task counts.
//!
//! The central mechanism is LMMNS: pick the feasible task vector whose
//! normalized shares `||ws_i||_p * x_i`, sorted ascending, are
//! lexicographically largest. With `p = inf` this is DRF generalized to
//! bounded task counts (LMMDS).
//!
//! - [`model`]: instances, allocations, JSON schema
//! - [`norms`]: weighted shares and p-norms
//! - [`lmmns`]: the linear-time threshold solver and its bisection oracle
//! - [`filling`]: water filling and the sharing-incentive variant
//! - [`properties`]: PE / SI / EF / BBF checkers and a GSP probe
//! - [`lp`]: a dense simplex, the benchmark LPs and a proportional-fairness baseline
//! - [`bench`]: random instances and quality sweeps
//! - [`fixtures`]: worked examples with expected outcomes

pub mod bench;
pub mod cli;
pub mod error;
pub mod filling;
pub mod fixtures;
pub mod lmmns;
pub mod lp;
pub mod model;
pub mod norms;
pub mod properties;
pub mod select;

pub use error::{Error, Result};
pub use filling::{solve_modified_lmmns, solve_waterfilling};
pub use lmmns::{oracle_binary_search, solve_lmmns, solve_lmmns_general};
pub use model::{validate, Allocation, Instance, Norm};
