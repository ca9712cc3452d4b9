//! Crash schedules and Byzantine strategies.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::engine::{Configuration, RobotId, RobotStatus};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::markov::alpha;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrashMode {
    Freeze,
    Remove,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrashTrigger {
    /// Fires once `step_index` reaches the value (0 = before the first activation).
    AtStep(u64),
    /// Fires when the largest group of correct robots reaches `⌊n/2⌋ + 1`.
    MaxGroupReachesAlpha,
}

/// One crash. For condition triggers `robot` may be omitted; the victim is then the
/// lowest-id correct robot of the largest correct group.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawCrash", into = "RawCrash")]
pub struct CrashSpec {
    pub robot: Option<RobotId>,
    pub mode: CrashMode,
    pub trigger: CrashTrigger,
}

#[derive(Serialize, Deserialize)]
struct RawCrash {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    robot: Option<RobotId>,
    mode: CrashMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    at: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    when: Option<String>,
}

const WHEN_ALPHA: &str = "max_group_reaches_alpha";

impl TryFrom<RawCrash> for CrashSpec {
    type Error = Error;

    fn try_from(raw: RawCrash) -> Result<Self> {
        let trigger = match (raw.at, raw.when.as_deref()) {
            (Some(at), None) => CrashTrigger::AtStep(at),
            (None, Some(WHEN_ALPHA)) => CrashTrigger::MaxGroupReachesAlpha,
            (None, Some(other)) => return Err(Error::Config(format!("unknown crash condition {other:?}"))),
            _ => return Err(Error::Config("a crash needs exactly one of \"at\" or \"when\"".into())),
        };
        if raw.robot.is_none() && matches!(trigger, CrashTrigger::AtStep(_)) {
            return Err(Error::Config("a crash at a fixed step needs a robot".into()));
        }
        Ok(CrashSpec { robot: raw.robot, mode: raw.mode, trigger })
    }
}

impl From<CrashSpec> for RawCrash {
    fn from(c: CrashSpec) -> Self {
        let (at, when) = match c.trigger {
            CrashTrigger::AtStep(s) => (Some(s), None),
            CrashTrigger::MaxGroupReachesAlpha => (None, Some(WHEN_ALPHA.to_string())),
        };
        RawCrash { robot: c.robot, mode: c.mode, at, when }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum ByzantineStrategy {
    /// Migrates to the less crowded of exactly two occupied points.
    Oscillator,
    /// Teleports to the given point when activated at the given step index.
    Scripted { moves: BTreeMap<u64, Point> },
    #[default]
    StayPut,
}

impl ByzantineStrategy {
    pub fn destination(&self, config: &Configuration, me: RobotId) -> Point {
        let own = config.position(me).expect("byzantine robot exists");
        match self {
            ByzantineStrategy::Oscillator => oscillator_move(config, me),
            ByzantineStrategy::Scripted { moves } => {
                moves.get(&config.step_index()).copied().unwrap_or(own)
            }
            ByzantineStrategy::StayPut => own,
        }
    }
}

/// In a two-group configuration, the position holding fewer robots (ties: the position
/// farther from `me`). Any other shape: stay.
pub fn oscillator_move(config: &Configuration, me: RobotId) -> Point {
    let own = config.position(me).expect("byzantine robot exists");
    let occ = config.occupancy();
    if occ.len() != 2 {
        return own;
    }
    let groups: Vec<(Point, usize)> = occ.iter().collect();
    let (a, b) = (groups[0], groups[1]);
    match a.1.cmp(&b.1) {
        std::cmp::Ordering::Less => a.0,
        std::cmp::Ordering::Greater => b.0,
        std::cmp::Ordering::Equal => {
            if a.0.dist_sq(&own) >= b.0.dist_sq(&own) {
                a.0
            } else {
                b.0
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RawByzantine {
    robot: RobotId,
    #[serde(flatten)]
    strategy: ByzantineStrategy,
}

#[derive(Serialize, Deserialize)]
struct RawPlan {
    #[serde(default)]
    f: usize,
    #[serde(default)]
    crashes: Vec<CrashSpec>,
    #[serde(default)]
    byzantine: Vec<RawByzantine>,
}

/// Crash schedule plus Byzantine assignments, bounded by the fault budget `f`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPlan", into = "RawPlan")]
pub struct FaultPlan {
    pub f: usize,
    pub crashes: Vec<CrashSpec>,
    pub byzantine: BTreeMap<RobotId, ByzantineStrategy>,
}

impl TryFrom<RawPlan> for FaultPlan {
    type Error = Error;

    fn try_from(raw: RawPlan) -> Result<Self> {
        let mut byzantine = BTreeMap::new();
        for b in raw.byzantine {
            if byzantine.insert(b.robot, b.strategy).is_some() {
                return Err(Error::Config(format!("robot {} listed twice as byzantine", b.robot)));
            }
        }
        Ok(FaultPlan { f: raw.f, crashes: raw.crashes, byzantine })
    }
}

impl From<FaultPlan> for RawPlan {
    fn from(p: FaultPlan) -> Self {
        RawPlan {
            f: p.f,
            crashes: p.crashes,
            byzantine: p
                .byzantine
                .into_iter()
                .map(|(robot, strategy)| RawByzantine { robot, strategy })
                .collect(),
        }
    }
}

impl FaultPlan {
    pub fn none() -> Self {
        Self::default()
    }

    /// `count` adversarial freezes at the majority threshold.
    pub fn worst_case_crashes(count: usize) -> Self {
        Self {
            f: count,
            crashes: (0..count)
                .map(|_| CrashSpec {
                    robot: None,
                    mode: CrashMode::Freeze,
                    trigger: CrashTrigger::MaxGroupReachesAlpha,
                })
                .collect(),
            byzantine: BTreeMap::new(),
        }
    }

    pub fn byzantine(robot: RobotId, strategy: ByzantineStrategy) -> Self {
        Self { f: 1, crashes: Vec::new(), byzantine: BTreeMap::from([(robot, strategy)]) }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let entries = self.crashes.len() + self.byzantine.len();
        if entries > self.f {
            return Err(Error::FaultBudget(format!("{entries} fault entries exceed f = {}", self.f)));
        }
        let mut named = BTreeSet::new();
        let explicit = self
            .crashes
            .iter()
            .filter_map(|c| c.robot)
            .chain(self.byzantine.keys().copied());
        for id in explicit {
            if id.0 >= n {
                return Err(Error::Config(format!("fault names unknown robot {id}")));
            }
            if !named.insert(id) {
                return Err(Error::FaultBudget(format!("robot {id} appears in more than one fault entry")));
            }
        }
        Ok(())
    }

    /// Sets the Byzantine status of every assigned robot.
    pub fn mark_byzantine(&self, mut config: Configuration) -> Configuration {
        for id in self.byzantine.keys() {
            config.set_status(*id, RobotStatus::Byzantine);
        }
        config
    }
}

/// Whether the largest group of correct robots has reached `⌊n/2⌋ + 1`, `n` counting every
/// robot of the configuration.
pub fn worst_case_crash_trigger(config: &Configuration) -> bool {
    config.correct_occupancy().max_count() >= alpha(config.len())
}

fn adversarial_victim(config: &Configuration) -> Option<RobotId> {
    let occ = config.correct_occupancy();
    let max = occ.max_count();
    config
        .ids_with_status(RobotStatus::Correct)
        .find(|id| occ.count(&config.position(*id).expect("id exists")) == max)
}

/// Per-execution firing state of a plan.
#[derive(Clone, Debug)]
pub struct FaultState {
    fired: Vec<bool>,
}

impl FaultState {
    pub fn new(plan: &FaultPlan) -> Self {
        Self { fired: vec![false; plan.crashes.len()] }
    }

    pub fn fired(&self) -> usize {
        self.fired.iter().filter(|f| **f).count()
    }

    /// Fires every due crash, in plan order, each against the configuration left by the
    /// previous one.
    pub fn apply(&mut self, config: &Configuration, plan: &FaultPlan) -> Result<Configuration> {
        let mut next = config.clone();
        for (i, crash) in plan.crashes.iter().enumerate() {
            if self.fired[i] || self.fired() >= plan.f {
                continue;
            }
            let due = match crash.trigger {
                CrashTrigger::AtStep(s) => next.step_index() >= s,
                CrashTrigger::MaxGroupReachesAlpha => worst_case_crash_trigger(&next),
            };
            if !due {
                continue;
            }
            let victim = match crash.robot {
                Some(id) => id,
                None => match adversarial_victim(&next) {
                    Some(id) => id,
                    None => continue,
                },
            };
            if next.status(victim) != Some(RobotStatus::Correct) {
                return Err(Error::FaultBudget(format!("robot {victim} is already faulty")));
            }
            next.set_status(
                victim,
                match crash.mode {
                    CrashMode::Freeze => RobotStatus::CrashedFrozen,
                    CrashMode::Remove => RobotStatus::CrashedRemoved,
                },
            );
            self.fired[i] = true;
        }
        Ok(next)
    }
}

/// Applies `plan` to `config` with fresh firing state.
pub fn apply_crashes(config: &Configuration, plan: &FaultPlan) -> Result<Configuration> {
    FaultState::new(plan).apply(config, plan)
}
