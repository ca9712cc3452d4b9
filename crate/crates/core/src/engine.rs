//! ATOM execution: every activated robot observes the same pre-step snapshot, computes a
//! destination and is placed there before the next step starts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coins::Coins;
use crate::error::{Error, Result};
use crate::faults::{ByzantineStrategy, FaultPlan, FaultState};
use crate::geometry::{OccupancyMap, Point};
use crate::programs::Program;
use crate::schedulers::{ActivationPolicy, CoinScript};

/// Harness-side label of a robot. Programs never see it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RobotId(pub usize);

impl fmt::Display for RobotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotStatus {
    Correct,
    /// Halted but still visible at its last position.
    CrashedFrozen,
    /// Gone from every observation.
    CrashedRemoved,
    Byzantine,
}

impl RobotStatus {
    pub fn is_visible(self) -> bool {
        self != RobotStatus::CrashedRemoved
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Robot {
    pub position: Point,
    pub status: RobotStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    robots: Vec<Robot>,
    step_index: u64,
}

impl Configuration {
    /// All robots correct; robot `i` starts at `positions[i]`.
    pub fn new(positions: Vec<Point>) -> Self {
        let robots = positions
            .into_iter()
            .map(|position| Robot { position, status: RobotStatus::Correct })
            .collect();
        Self { robots, step_index: 0 }
    }

    pub fn from_robots(robots: Vec<Robot>) -> Self {
        Self { robots, step_index: 0 }
    }

    pub fn with_status(mut self, id: RobotId, status: RobotStatus) -> Self {
        self.robots[id.0].status = status;
        self
    }

    pub fn with_step_index(mut self, step_index: u64) -> Self {
        self.step_index = step_index;
        self
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn len(&self) -> usize {
        self.robots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.robots.is_empty()
    }

    pub fn robot(&self, id: RobotId) -> Option<&Robot> {
        self.robots.get(id.0)
    }

    pub fn position(&self, id: RobotId) -> Option<Point> {
        self.robot(id).map(|r| r.position)
    }

    pub fn status(&self, id: RobotId) -> Option<RobotStatus> {
        self.robot(id).map(|r| r.status)
    }

    pub fn robots(&self) -> impl Iterator<Item = (RobotId, &Robot)> + '_ {
        self.robots.iter().enumerate().map(|(i, r)| (RobotId(i), r))
    }

    /// Robots that have not been removed.
    pub fn visible_ids(&self) -> BTreeSet<RobotId> {
        self.robots()
            .filter(|(_, r)| r.status.is_visible())
            .map(|(id, _)| id)
            .collect()
    }

    pub fn ids_with_status(&self, status: RobotStatus) -> impl Iterator<Item = RobotId> + '_ {
        self.robots().filter(move |(_, r)| r.status == status).map(|(id, _)| id)
    }

    pub fn observation(&self) -> Observation {
        Observation::new(
            self.robots
                .iter()
                .filter(|r| r.status.is_visible())
                .map(|r| r.position)
                .collect(),
        )
    }

    /// Multiplicities over every visible robot, faulty ones included.
    pub fn occupancy(&self) -> OccupancyMap {
        self.robots
            .iter()
            .filter(|r| r.status.is_visible())
            .map(|r| r.position)
            .collect()
    }

    /// Multiplicities over correct robots only.
    pub fn correct_occupancy(&self) -> OccupancyMap {
        self.robots
            .iter()
            .filter(|r| r.status == RobotStatus::Correct)
            .map(|r| r.position)
            .collect()
    }

    pub(crate) fn set_status(&mut self, id: RobotId, status: RobotStatus) {
        self.robots[id.0].status = status;
    }
}

/// What an activated robot sees: every visible position, itself included, without ids.
/// Stored sorted so that no order information leaks into programs.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    positions: Vec<Point>,
}

impl Observation {
    pub fn new(mut positions: Vec<Point>) -> Self {
        positions.sort();
        Self { positions }
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn occupancy(&self) -> OccupancyMap {
        self.positions.iter().copied().collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predicate {
    Gathering {
        #[serde(default)]
        weak: bool,
    },
    Scattering {
        #[serde(default)]
        weak: bool,
    },
}

impl Predicate {
    pub fn holds(&self, config: &Configuration) -> bool {
        match *self {
            Predicate::Gathering { weak } => is_gathered(config, weak),
            Predicate::Scattering { weak } => is_scattered(config, weak),
        }
    }
}

/// Strong: every visible robot on one point. Weak: every correct robot on one point.
pub fn is_gathered(config: &Configuration, weak: bool) -> bool {
    let occ = if weak { config.correct_occupancy() } else { config.occupancy() };
    occ.len() <= 1
}

/// Strong: visible robots pairwise apart. Weak: no correct robot shares its point with any
/// other visible robot, faulty or correct; faulty robots may share among themselves.
pub fn is_scattered(config: &Configuration, weak: bool) -> bool {
    let occ = config.occupancy();
    if weak {
        config
            .robots()
            .filter(|(_, r)| r.status == RobotStatus::Correct)
            .all(|(_, r)| occ.count(&r.position) == 1)
    } else {
        occ.max_count() <= 1
    }
}

/// Counts rounds: minimal fragments in which every robot of the population is activated
/// at least once.
#[derive(Clone, Debug, Default)]
pub struct RoundTracker {
    seen: BTreeSet<RobotId>,
    completed: u64,
    partial: bool,
}

impl RoundTracker {
    pub fn observe(&mut self, activated: &BTreeSet<RobotId>, population: &BTreeSet<RobotId>) {
        self.seen.extend(activated.iter().copied());
        self.partial = true;
        if population.iter().all(|r| self.seen.contains(r)) {
            self.completed += 1;
            self.seen.clear();
            self.partial = false;
        }
    }

    pub fn completed(&self) -> u64 {
        self.completed
    }

    /// Completed rounds plus the round in progress, if any activation belongs to it.
    pub fn begun(&self) -> u64 {
        self.completed + u64::from(self.partial)
    }
}

/// Number of completed rounds in `history` for a fixed population.
pub fn rounds_elapsed(history: &[BTreeSet<RobotId>], population: &BTreeSet<RobotId>) -> u64 {
    let mut tracker = RoundTracker::default();
    for activated in history {
        tracker.observe(activated, population);
    }
    tracker.completed()
}

/// One atomic step. All destinations are computed against `config` before any robot moves.
pub fn step(
    config: &Configuration,
    activated: &BTreeSet<RobotId>,
    program: &dyn Program,
    byzantine: &BTreeMap<RobotId, ByzantineStrategy>,
    coin_script: Option<&CoinScript>,
    rng: &mut dyn RngCore,
) -> Result<Configuration> {
    if activated.is_empty() {
        return Err(Error::SchedulerContract("empty activation set".into()));
    }
    for id in activated {
        match config.status(*id) {
            None => {
                return Err(Error::SchedulerContract(format!("unknown robot {id}")));
            }
            Some(RobotStatus::CrashedRemoved) => {
                return Err(Error::SchedulerContract(format!("activated removed robot {id}")));
            }
            Some(_) => {}
        }
    }

    let snapshot = config.observation();
    let mut moves = Vec::with_capacity(activated.len());
    for &id in activated {
        let robot = config.robots[id.0];
        let dest = match robot.status {
            RobotStatus::Correct => {
                let script = coin_script
                    .and_then(|s| s.get(&(config.step_index, id)))
                    .map(Vec::as_slice)
                    .unwrap_or(&[]);
                let mut coins = Coins::scripted(rng, script);
                program.destination(&snapshot, robot.position, &mut coins)?
            }
            RobotStatus::Byzantine => byzantine
                .get(&id)
                .unwrap_or(&ByzantineStrategy::StayPut)
                .destination(config, id),
            RobotStatus::CrashedFrozen | RobotStatus::CrashedRemoved => robot.position,
        };
        moves.push((id, dest));
    }

    let mut next = config.clone();
    for (id, dest) in moves {
        next.robots[id.0].position = dest;
    }
    next.step_index += 1;
    Ok(next)
}

/// One line of the JSONL trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub step: u64,
    pub activated: Vec<RobotId>,
    pub positions: BTreeMap<RobotId, Point>,
    pub statuses: BTreeMap<RobotId, RobotStatus>,
}

impl TraceEvent {
    fn capture(config: &Configuration, activated: &BTreeSet<RobotId>) -> Self {
        Self {
            step: config.step_index,
            activated: activated.iter().copied().collect(),
            positions: config.robots().map(|(id, r)| (id, r.position)).collect(),
            statuses: config.robots().map(|(id, r)| (id, r.status)).collect(),
        }
    }
}

pub fn write_trace<W: Write>(events: &[TraceEvent], mut out: W) -> Result<()> {
    for event in events {
        serde_json::to_writer(&mut out, event)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub converged: bool,
    /// Scheduler activations consumed.
    pub steps: u64,
    /// Rounds begun up to termination: completed rounds plus the one in progress.
    pub rounds: u64,
    pub completed_rounds: u64,
    pub final_config: Configuration,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation_history: Option<Vec<BTreeSet<RobotId>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceEvent>>,
}

#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    pub max_steps: u64,
    pub seed: u64,
    pub keep_history: bool,
    pub keep_trace: bool,
}

impl RunOptions {
    pub fn new(max_steps: u64, seed: u64) -> Self {
        Self { max_steps, seed, keep_history: false, keep_trace: false }
    }

    pub fn with_history(mut self) -> Self {
        self.keep_history = true;
        self
    }

    pub fn with_trace(mut self) -> Self {
        self.keep_trace = true;
        self
    }
}

/// Randomness stream for scheduler decisions.
const SCHEDULER_STREAM: u64 = 0;
/// Randomness stream for robot coins.
const COIN_STREAM: u64 = 1;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// A seeded execution that can be advanced one scheduler activation at a time.
pub struct Execution<'a> {
    config: Configuration,
    policy: &'a mut ActivationPolicy,
    program: &'a dyn Program,
    plan: &'a FaultPlan,
    faults: FaultState,
    scheduler_rng: ChaCha8Rng,
    coin_rng: ChaCha8Rng,
    rounds: RoundTracker,
    history: Option<Vec<BTreeSet<RobotId>>>,
    trace: Option<Vec<TraceEvent>>,
}

impl<'a> Execution<'a> {
    /// Marks Byzantine robots and fires crashes due at step 0.
    pub fn new(
        initial: Configuration,
        policy: &'a mut ActivationPolicy,
        program: &'a dyn Program,
        plan: &'a FaultPlan,
        opts: &RunOptions,
    ) -> Result<Self> {
        plan.validate(initial.len())?;
        let mut faults = FaultState::new(plan);
        let prepared = faults.apply(&plan.mark_byzantine(initial), plan)?;
        let trace = opts
            .keep_trace
            .then(|| vec![TraceEvent::capture(&prepared, &BTreeSet::new())]);
        Ok(Self {
            config: prepared,
            policy,
            program,
            plan,
            faults,
            scheduler_rng: stream(opts.seed, SCHEDULER_STREAM),
            coin_rng: stream(opts.seed, COIN_STREAM),
            rounds: RoundTracker::default(),
            history: opts.keep_history.then(Vec::new),
            trace,
        })
    }

    pub fn config(&self) -> &Configuration {
        &self.config
    }

    pub fn rounds(&self) -> &RoundTracker {
        &self.rounds
    }

    pub fn faults_fired(&self) -> usize {
        self.faults.fired()
    }

    /// Queries the policy, performs one atomic step, then fires due crashes.
    pub fn advance(&mut self) -> Result<BTreeSet<RobotId>> {
        let eligible = self.config.visible_ids();
        let activated = self.policy.next_activation(&eligible, &mut self.scheduler_rng)?;
        let stepped = step(
            &self.config,
            &activated,
            self.program,
            &self.plan.byzantine,
            self.policy.coin_script(),
            &mut self.coin_rng,
        )?;
        self.rounds.observe(&activated, &eligible);
        self.config = self.faults.apply(&stepped, self.plan)?;
        if let Some(h) = self.history.as_mut() {
            h.push(activated.clone());
        }
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceEvent::capture(&self.config, &activated));
        }
        Ok(activated)
    }

    fn finish(self, converged: bool) -> TrialRecord {
        TrialRecord {
            converged,
            steps: self.config.step_index,
            rounds: self.rounds.begun(),
            completed_rounds: self.rounds.completed(),
            final_config: self.config,
            activation_history: self.history,
            trace: self.trace,
        }
    }
}

/// Runs until `predicate` holds (checked after every step, and once before the first) or
/// `max_steps` activations have been consumed.
pub fn run(
    initial: Configuration,
    policy: &mut ActivationPolicy,
    program: &dyn Program,
    plan: &FaultPlan,
    predicate: Predicate,
    opts: RunOptions,
) -> Result<TrialRecord> {
    if opts.max_steps == 0 {
        return Err(Error::Config("max_steps must be positive".into()));
    }
    let mut exec = Execution::new(initial, policy, program, plan, &opts)?;
    let mut converged = predicate.holds(exec.config());
    while !converged && exec.config().step_index() < opts.max_steps {
        exec.advance()?;
        converged = predicate.holds(exec.config());
    }
    Ok(exec.finish(converged))
}
