//! Probabilistic gathering and scattering of oblivious robots in the ATOM model.
//!
//! The crate has two halves that are meant to be checked against each other:
//!
//! * a seeded simulator ([`engine`], [`schedulers`], [`programs`], [`faults`]) that runs
//!   robot programs step by step under a chosen activation policy and fault plan, and
//! * analytic oracles ([`markov`]) giving exact expected hitting times of the birth-death
//!   chains that bound those programs, plus the closed-form convergence bounds.
//!
//! [`harness`] ties the two together: Monte Carlo batches, CSV/JSON reports, theory
//! comparisons and the scripted adversarial replays.

pub mod coins;
pub mod engine;
pub mod error;
pub mod faults;
pub mod geometry;
pub mod harness;
pub mod markov;
pub mod programs;
pub mod schedulers;

pub use coins::Coins;
pub use engine::{Configuration, Execution, Predicate, RobotId, RobotStatus, TrialRecord};
pub use error::{Error, Result};
pub use faults::{ByzantineStrategy, CrashMode, CrashTrigger, FaultPlan};
pub use geometry::{OccupancyMap, Point};
pub use markov::{BirthDeathChain, HittingTimeResult};
pub use programs::{Program, RobotProgram};
pub use schedulers::{ActivationPolicy, PolicyKind};
