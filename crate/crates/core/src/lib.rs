//! Exact construction and verification of counting-operator counterexample
//! systems over dyadic rotations.

pub mod analog;
pub mod base;
pub mod counting;
pub mod error;
pub mod harness;
pub mod interval_set;
pub mod level;
pub mod pblock;
pub mod rational;
pub mod report;
pub mod step;

pub use harness::{run, RunConfig};
pub use base::{build_base, BaseParams, BaseSystem, LifeFunction, SamplingPolicy};
pub use counting::OrbitSpec;
pub use error::{Error, Result};
pub use interval_set::{Constraint, Family, PeriodicIntervalSet, Piece};
pub use rational::{DyadicRational, ExactRational, GridInterval};
pub use report::{Claim, ClaimKind, Relation, Status, VerificationReport, Witness};
pub use step::StepFunction;
