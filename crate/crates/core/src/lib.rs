//! Proactive content download and demand shaping for cellular networks.
//!
//! The crate models users who request catalog items slot by slot over a
//! periodic cycle, evaluates the expected delivery cost under a convex cost
//! function, optimizes prefetch allocations and reshapes demand within an
//! entropy ball.

pub mod catalog;
pub mod cost;
pub mod cube;
pub mod demand;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod instance;
pub mod optim;
pub mod proactive;
pub mod recommend;
pub mod report;
pub mod scenario;
pub mod shaping;
pub mod stream;

pub use catalog::ItemCatalog;
pub use cost::{CostKind, CostModel, Moment};
pub use cube::Cube;
pub use demand::{ConditionalProfile, DemandProfile};
pub use error::{Error, Result};
pub use eval::{Engine, EvalConfig, ProactiveAllocation};
pub use instance::Instance;
