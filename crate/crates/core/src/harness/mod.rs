//! Experiment configuration, the Monte Carlo trial runner, theory comparisons and scripted
//! scenario replays.

pub mod config;
pub mod runner;
pub mod scenarios;
pub mod theory;

pub use config::{ExperimentConfig, InitialLayout, Overrides};
pub use runner::{derive_seed, run_experiment, run_trial, write_outputs, ExperimentResult, Summary, TrialRow, TrialStats};
pub use scenarios::{replay_counterexample, replay_flip_flop, CounterexampleReport, FlipFlopReport};
pub use theory::{compare_to_theory, Metric, Oracle, TheoryReport, Verdict, DEFAULT_BAND};
