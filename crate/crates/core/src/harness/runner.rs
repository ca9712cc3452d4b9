use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::engine::{run, RunOptions, TrialRecord};
use crate::error::{Error, Result};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Seed of trial `trial` in a batch seeded with `base`.
///
/// The splitmix64 finalizer is a bijection on `u64`, so distinct trial indices of one batch
/// never share a seed.
pub fn derive_seed(base: u64, trial: u64) -> u64 {
    let mut z = base.wrapping_add(GOLDEN.wrapping_mul(trial.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs trial `trial` of `cfg` with the given options (seed is filled in).
pub fn run_trial(cfg: &ExperimentConfig, trial: u64, mut opts: RunOptions) -> Result<TrialRecord> {
    let seed = derive_seed(cfg.seed, trial);
    opts.seed = seed;
    opts.max_steps = cfg.max_steps;
    let mut policy = cfg.policy.build()?;
    run(cfg.initial_configuration(seed), &mut policy, &cfg.program, &cfg.faults, cfg.predicate, opts)
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial_id: u64,
    pub seed: u64,
    pub converged: bool,
    pub steps: u64,
    pub rounds: u64,
    pub completed_rounds: u64,
    /// Engine error that ended the trial, empty otherwise.
    pub error: Option<String>,
}

impl TrialRow {
    fn from_outcome(trial_id: u64, seed: u64, outcome: Result<TrialRecord>) -> Self {
        match outcome {
            Ok(r) => Self {
                trial_id,
                seed,
                converged: r.converged,
                steps: r.steps,
                rounds: r.rounds,
                completed_rounds: r.completed_rounds,
                error: None,
            },
            Err(e) => Self {
                trial_id,
                seed,
                converged: false,
                steps: 0,
                rounds: 0,
                completed_rounds: 0,
                error: Some(e.to_string()),
            },
        }
    }
}

/// Mean, sample standard deviation and normal 95% interval of the mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
    pub ci95: [f64; 2],
}

impl Moments {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let half = 1.96 * std / n.sqrt();
        Some(Self { mean, std, ci95: [mean - half, mean + half] })
    }
}

/// Batch statistics. Step and round moments cover converged trials only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub trials: u64,
    pub converged: u64,
    pub failed: u64,
    pub converged_fraction: f64,
    pub steps: Option<Moments>,
    pub rounds: Option<Moments>,
    pub rounds_histogram: BTreeMap<u64, u64>,
}

impl TrialStats {
    pub fn from_rows(rows: &[TrialRow]) -> Self {
        let mut sorted: Vec<&TrialRow> = rows.iter().collect();
        sorted.sort_by_key(|r| r.trial_id);
        let done: Vec<&TrialRow> = sorted.iter().copied().filter(|r| r.converged).collect();
        let steps: Vec<f64> = done.iter().map(|r| r.steps as f64).collect();
        let rounds: Vec<f64> = done.iter().map(|r| r.rounds as f64).collect();
        let mut rounds_histogram = BTreeMap::new();
        for r in &done {
            *rounds_histogram.entry(r.rounds).or_insert(0) += 1;
        }
        let trials = rows.len() as u64;
        Self {
            trials,
            converged: done.len() as u64,
            failed: rows.iter().filter(|r| r.error.is_some()).count() as u64,
            converged_fraction: if trials == 0 { 0.0 } else { done.len() as f64 / trials as f64 },
            steps: Moments::of(&steps),
            rounds: Moments::of(&rounds),
            rounds_histogram,
        }
    }

    pub fn mean_steps(&self) -> Option<f64> {
        self.steps.as_ref().map(|m| m.mean)
    }

    pub fn mean_rounds(&self) -> Option<f64> {
        self.rounds.as_ref().map(|m| m.mean)
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub rows: Vec<TrialRow>,
    pub stats: TrialStats,
}

/// Runs every trial of `cfg` on `workers` threads. Trial errors are recorded in their row.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentResult> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let rows: Vec<TrialRow> = pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                let outcome = run_trial(cfg, t, RunOptions::new(cfg.max_steps, 0));
                TrialRow::from_outcome(t, derive_seed(cfg.seed, t), outcome)
            })
            .collect()
    });
    let stats = TrialStats::from_rows(&rows);
    Ok(ExperimentResult { rows, stats })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub stats: TrialStats,
}

pub fn write_trials_csv(path: &Path, rows: &[TrialRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trials_csv(path: &Path) -> Result<Vec<TrialRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Writes `trials.csv` and `summary.json` into `dir`, creating it if needed.
pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, result: &ExperimentResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_trials_csv(&dir.join("trials.csv"), &result.rows)?;
    let summary = Summary { config: cfg.clone(), stats: result.stats.clone() };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Predicate;
    use crate::harness::config::InitialLayout;
    use crate::programs::RobotProgram;
    use crate::schedulers::PolicyKind;
    use std::collections::BTreeSet;

    fn gather(n: usize) -> ExperimentConfig {
        ExperimentConfig::new(
            n,
            InitialLayout::Singletons,
            RobotProgram::multiplicity_gather(),
            PolicyKind::Probabilistic,
            Predicate::Gathering { weak: false },
        )
        .with_trials(50)
        .with_seed(11)
    }

    #[test]
    fn seeds_are_distinct() {
        let seeds: BTreeSet<u64> = (0..100_000).map(|t| derive_seed(42, t)).collect();
        assert_eq!(seeds.len(), 100_000);
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
    }

    #[test]
    fn single_robot_converges_immediately() {
        for program in [RobotProgram::BaselineGather, RobotProgram::voronoi_scatter(), RobotProgram::BarycenterConverge] {
            let mut cfg = gather(1).with_trials(20);
            cfg.program = program;
            let res = run_experiment(&cfg, 2).unwrap();
            assert_eq!(res.stats.converged_fraction, 1.0);
            assert_eq!(res.stats.mean_steps(), Some(0.0));
        }
    }

    #[test]
    fn two_robot_baseline_takes_two_steps() {
        let mut cfg = gather(2).with_trials(20_000);
        cfg.program = RobotProgram::BaselineGather;
        cfg.policy = PolicyKind::CentralizedFair;
        let s = run_experiment(&cfg, 4).unwrap().stats;
        let m = s.steps.unwrap();
        assert!((m.mean - 2.0).abs() < 0.05, "{m:?}");
        assert!(m.ci95[0] < 2.0 && 2.0 < m.ci95[1] + 0.02);
    }

    #[test]
    fn rows_are_ordered_and_worker_independent() {
        let cfg = gather(6);
        let a = run_experiment(&cfg, 1).unwrap();
        let b = run_experiment(&cfg, 8).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.stats, b.stats);
        assert!(a.rows.iter().enumerate().all(|(i, r)| r.trial_id == i as u64));
    }

    #[test]
    fn errors_are_recorded_per_trial() {
        let mut cfg = gather(3).with_trials(5);
        cfg.policy = PolicyKind::Scripted { script: Default::default() };
        let res = run_experiment(&cfg, 2).unwrap();
        assert_eq!(res.rows.len(), 5);
        assert_eq!(res.stats.failed, 5);
        assert_eq!(res.stats.converged_fraction, 0.0);
        assert!(res.stats.steps.is_none());
    }

    #[test]
    fn stats_exclude_unconverged_trials() {
        let row = |id, converged, steps| TrialRow {
            trial_id: id,
            seed: id,
            converged,
            steps,
            rounds: steps,
            completed_rounds: steps,
            error: None,
        };
        let s = TrialStats::from_rows(&[row(0, true, 2), row(1, false, 100), row(2, true, 4)]);
        assert_eq!(s.converged, 2);
        assert!((s.converged_fraction - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.mean_steps(), Some(3.0));
        assert!((s.steps.unwrap().std - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(s.rounds_histogram, BTreeMap::from([(2, 1), (4, 1)]));
    }

    #[test]
    fn outputs_are_byte_identical_on_rerun() {
        let cfg = gather(5);
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        for (d, workers) in dirs.iter().zip([1, 3]) {
            write_outputs(d.path(), &cfg, &run_experiment(&cfg, workers).unwrap()).unwrap();
        }
        for f in ["trials.csv", "summary.json"] {
            assert_eq!(fs::read(dirs[0].path().join(f)).unwrap(), fs::read(dirs[1].path().join(f)).unwrap());
        }
        let rows = read_trials_csv(&dirs[0].path().join("trials.csv")).unwrap();
        assert_eq!(rows.len(), 50);
        let header = fs::read_to_string(dirs[0].path().join("trials.csv")).unwrap();
        assert!(header.starts_with("trial_id,seed,converged,steps,rounds"));
    }
}
