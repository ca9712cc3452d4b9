//! Scripted adversarial replays and their unscripted companions.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, InitialLayout};
use crate::engine::{is_gathered, is_scattered, Configuration, Execution, Predicate, RobotId, RunOptions};
use crate::error::Result;
use crate::faults::{ByzantineStrategy, FaultPlan};
use crate::geometry::Point;
use crate::programs::{GatherFallback, RadiusPolicy, RobotProgram};
use crate::schedulers::{audit, ActivationPolicy, ActivationScript, CoinOverride, PolicyKind};

const LEFT: Point = Point::ORIGIN;

fn right() -> Point {
    Point::new(1.0, 0.0)
}

/// Robot 0 is the Byzantine oscillator.
pub const OSCILLATOR: RobotId = RobotId(0);

/// Two stacks of two; the oscillator shares the right stack with robot 3.
pub fn counterexample_initial() -> Vec<Point> {
    vec![right(), LEFT, LEFT, right()]
}

/// Four activations per cycle. With correct robots `a, b` on the left and `c` next to the
/// oscillator on the right:
///
/// 1. `{a, b, c}`: `a` crosses to the right, `b` and `c` stay.
/// 2. `{osc, a, c}`: the oscillator joins the lone `b`.
/// 3. `{a, b, c}`: `c` crosses to the left, `a` and `b` stay.
/// 4. `{osc, b, c}`: the oscillator joins the lone `a`.
///
/// The result is the starting picture with roles `(a, b, c)` renamed to `(b, c, a)`.
pub fn counterexample_script(cycles: usize) -> ActivationScript {
    let set = |ids: &[RobotId]| ids.to_vec();
    let coin = |step: usize, robot: RobotId, bit: u32| CoinOverride { step: step as u64, robot, bits: vec![bit] };
    let (mut a, mut b, mut c) = (RobotId(1), RobotId(2), RobotId(3));
    let mut activations = Vec::with_capacity(4 * cycles);
    let mut coins = Vec::new();
    for cycle in 0..cycles {
        let s = 4 * cycle;
        activations.push(set(&[a, b, c]));
        coins.extend([coin(s, a, 1), coin(s, b, 0), coin(s, c, 0)]);
        activations.push(set(&[OSCILLATOR, a, c]));
        activations.push(set(&[a, b, c]));
        coins.extend([coin(s + 2, c, 1), coin(s + 2, b, 0), coin(s + 2, a, 0)]);
        activations.push(set(&[OSCILLATOR, b, c]));
        (a, b, c) = (b, c, a);
    }
    ActivationScript { activations, coins }
}

/// Two occupied points holding two robots each, the oscillator sharing with one correct robot.
fn matches_initial_shape(config: &Configuration) -> bool {
    let occ = config.occupancy();
    let counts: Vec<usize> = occ.iter().map(|(_, c)| c).collect();
    let Some(osc) = config.position(OSCILLATOR) else { return false };
    counts == [2, 2]
        && config
            .robots()
            .filter(|(id, r)| *id != OSCILLATOR && r.position == osc)
            .count()
            == 1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub cycles: usize,
    pub steps: u64,
    /// Steps after which every correct robot stood on one point.
    pub gathered_steps: u64,
    pub isomorphic_cycles: usize,
    /// First step index whose configuration broke the pattern.
    pub first_divergence: Option<u64>,
    pub fairness_window: usize,
    pub fair: bool,
    /// Smallest `k <= 3` for which the activation sequence is k-bounded.
    pub k_bound: Option<u32>,
    pub passed: bool,
}

/// Replays [`counterexample_script`] with multiplicity gathering and an oscillator.
pub fn replay_counterexample(cycles: usize) -> Result<CounterexampleReport> {
    let script = counterexample_script(cycles);
    let history = script.history();
    let mut policy = ActivationPolicy::scripted(script);
    let program = RobotProgram::multiplicity_gather();
    let plan = FaultPlan::byzantine(OSCILLATOR, ByzantineStrategy::Oscillator);
    let opts = RunOptions::new(4 * cycles as u64, 0);
    let mut exec = Execution::new(Configuration::new(counterexample_initial()), &mut policy, &program, &plan, &opts)?;

    let mut gathered_steps = 0;
    let mut isomorphic_cycles = 0;
    let mut first_divergence = (!matches_initial_shape(exec.config())).then_some(0);
    for _ in 0..4 * cycles {
        exec.advance()?;
        let config = exec.config();
        if is_gathered(config, true) {
            gathered_steps += 1;
            first_divergence.get_or_insert(config.step_index());
        }
        if config.step_index() % 4 == 0 {
            if matches_initial_shape(config) {
                isomorphic_cycles += 1;
            } else {
                first_divergence.get_or_insert(config.step_index());
            }
        }
    }
    let steps = exec.config().step_index();

    let population: BTreeSet<RobotId> = (0..4).map(RobotId).collect();
    let window = 4;
    let fair = audit(&history, &population, None, Some(window)).fair;
    let k_bound = (1..=3).find(|&k| audit(&history, &population, Some(k), Some(window)).k_compliant == Some(true));
    let passed = gathered_steps == 0 && isomorphic_cycles == cycles && fair && k_bound.is_some();
    Ok(CounterexampleReport {
        cycles,
        steps,
        gathered_steps,
        isomorphic_cycles,
        first_divergence,
        fairness_window: window,
        fair,
        k_bound,
        passed,
    })
}

/// The counter-example start under the probabilistic scheduler, oscillator included.
pub fn counterexample_probabilistic(trials: u64, horizon: u64, seed: u64) -> ExperimentConfig {
    ExperimentConfig::new(
        4,
        InitialLayout::Explicit { positions: counterexample_initial() },
        RobotProgram::multiplicity_gather(),
        PolicyKind::Probabilistic,
        Predicate::Gathering { weak: true },
    )
    .with_faults(FaultPlan::byzantine(OSCILLATOR, ByzantineStrategy::Oscillator))
    .with_trials(trials)
    .with_max_steps(horizon)
    .with_seed(seed)
}

/// The scripted activations with every robot correct and coins left to chance.
pub fn counterexample_honest(cycles: usize, trials: u64, seed: u64) -> ExperimentConfig {
    let mut script = counterexample_script(cycles);
    script.coins.clear();
    ExperimentConfig::new(
        4,
        InitialLayout::Explicit { positions: counterexample_initial() },
        RobotProgram::multiplicity_gather(),
        PolicyKind::Scripted { script },
        Predicate::Gathering { weak: false },
    )
    .with_trials(trials)
    .with_max_steps(4 * cycles as u64)
    .with_seed(seed)
}

/// Two far-apart pairs of singletons.
pub fn flip_flop_initial() -> Vec<Point> {
    vec![Point::ORIGIN, Point::new(1.0, 0.0), Point::new(10.0, 0.0), Point::new(11.0, 0.0)]
}

/// Flip/flop that, on all-singleton views, walks to the nearest other robot.
pub fn flip_flop_witness_program() -> RobotProgram {
    RobotProgram::FlipFlop { radius: RadiusPolicy::Fixed(0.5), fallback: GatherFallback::Nearest }
}

/// Alternates `{0, 2}` (each joins its partner, leaving two pairs) with everyone (one robot
/// of each pair leaves, one stays).
pub fn flip_flop_script(oscillations: usize) -> ActivationScript {
    let mut activations = Vec::with_capacity(2 * oscillations);
    let mut coins = Vec::new();
    for i in 0..oscillations {
        let scatter = (2 * i + 1) as u64;
        activations.push(vec![RobotId(0), RobotId(2)]);
        activations.push((0..4).map(RobotId).collect());
        coins.extend((0..4).map(|r| CoinOverride { step: scatter, robot: RobotId(r), bits: vec![u32::from(r % 2 == 1)] }));
    }
    ActivationScript { activations, coins }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlipFlopReport {
    pub steps: u64,
    /// Returns to an all-singleton configuration after a clustered one.
    pub oscillations: usize,
    pub ever_gathered: bool,
    pub passed: bool,
}

pub fn replay_flip_flop(program: &RobotProgram, oscillations: usize, seed: u64) -> Result<FlipFlopReport> {
    let mut policy = ActivationPolicy::scripted(flip_flop_script(oscillations));
    let plan = FaultPlan::none();
    let opts = RunOptions::new(2 * oscillations as u64, seed);
    let mut exec = Execution::new(Configuration::new(flip_flop_initial()), &mut policy, program, &plan, &opts)?;
    let mut count = 0;
    let mut ever_gathered = is_gathered(exec.config(), false);
    let mut was_scattered = is_scattered(exec.config(), false);
    for _ in 0..2 * oscillations {
        exec.advance()?;
        let config = exec.config();
        ever_gathered |= is_gathered(config, false);
        let scattered = is_scattered(config, false);
        if scattered && !was_scattered {
            count += 1;
        }
        was_scattered = scattered;
    }
    Ok(FlipFlopReport {
        steps: exec.config().step_index(),
        oscillations: count,
        ever_gathered,
        passed: !ever_gathered && count >= 3,
    })
}

/// The witness start and program under honest coins and the probabilistic scheduler.
pub fn flip_flop_honest(trials: u64, horizon: u64, seed: u64) -> ExperimentConfig {
    ExperimentConfig::new(
        4,
        InitialLayout::Explicit { positions: flip_flop_initial() },
        flip_flop_witness_program(),
        PolicyKind::Probabilistic,
        Predicate::Gathering { weak: false },
    )
    .with_trials(trials)
    .with_max_steps(horizon)
    .with_seed(seed)
}
