//! Activation policies and finite-trace auditing of fairness and k-boundedness.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::engine::RobotId;
use crate::error::{Error, Result};

/// Coin overrides keyed by (step index before the step, robot).
pub type CoinScript = BTreeMap<(u64, RobotId), Vec<u32>>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoinOverride {
    pub step: u64,
    pub robot: RobotId,
    pub bits: Vec<u32>,
}

/// A fixed activation sequence plus per-activation coin overrides.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivationScript {
    pub activations: Vec<Vec<RobotId>>,
    #[serde(default)]
    pub coins: Vec<CoinOverride>,
}

impl ActivationScript {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn history(&self) -> Vec<BTreeSet<RobotId>> {
        self.activations.iter().map(|s| s.iter().copied().collect()).collect()
    }

    pub fn coin_script(&self) -> CoinScript {
        self.coins
            .iter()
            .map(|c| ((c.step, c.robot), c.bits.clone()))
            .collect()
    }
}

/// Serializable description of a policy, as used in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PolicyKind {
    /// One robot per step, round-robin by id.
    CentralizedFair,
    /// Uniform over the nonempty subsets of the eligible robots.
    Probabilistic,
    /// Each eligible robot joins independently with probability `p`; empty draws are redrawn.
    IndependentCoins { p: f64 },
    KBounded { k: u32 },
    Scripted { script: ActivationScript },
}

impl PolicyKind {
    pub fn build(&self) -> Result<ActivationPolicy> {
        Ok(match self {
            PolicyKind::CentralizedFair => ActivationPolicy::centralized_fair(),
            PolicyKind::Probabilistic => ActivationPolicy::probabilistic(),
            PolicyKind::IndependentCoins { p } => ActivationPolicy::independent_coins(*p)?,
            PolicyKind::KBounded { k } => ActivationPolicy::k_bounded(*k)?,
            PolicyKind::Scripted { script } => ActivationPolicy::scripted(script.clone()),
        })
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::CentralizedFair => f.write_str("centralized_fair"),
            PolicyKind::Probabilistic => f.write_str("probabilistic"),
            PolicyKind::IndependentCoins { p } => write!(f, "independent_coins:{p}"),
            PolicyKind::KBounded { k } => write!(f, "k_bounded:{k}"),
            PolicyKind::Scripted { script } => write!(f, "scripted({} steps)", script.activations.len()),
        }
    }
}

/// Accepts `centralized_fair`, `probabilistic`, `independent_coins:<p>`, `k_bounded:<k>`
/// and `scripted:<path to JSON script>`.
impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let bad = || Error::Config(format!("invalid scheduler {s:?}"));
        match (name, arg) {
            ("centralized_fair" | "centralized", None) => Ok(PolicyKind::CentralizedFair),
            ("probabilistic", None) => Ok(PolicyKind::Probabilistic),
            ("independent_coins", Some(a)) => Ok(PolicyKind::IndependentCoins { p: a.parse().map_err(|_| bad())? }),
            ("k_bounded", Some(a)) => Ok(PolicyKind::KBounded { k: a.parse().map_err(|_| bad())? }),
            ("scripted", Some(path)) => Ok(PolicyKind::Scripted { script: ActivationScript::load(Path::new(path))? }),
            _ => Err(bad()),
        }
    }
}

#[derive(Clone, Debug)]
enum Inner {
    CentralizedFair { last: Option<RobotId> },
    Probabilistic,
    IndependentCoins { p: f64 },
    KBounded { k: u32, waiting: BTreeMap<RobotId, BTreeMap<RobotId, u32>> },
    Scripted { sets: Vec<BTreeSet<RobotId>>, coins: CoinScript, cursor: usize },
}

/// A scheduler instance. Owned by one execution; holds its own counters.
#[derive(Clone, Debug)]
pub struct ActivationPolicy {
    inner: Inner,
}

impl ActivationPolicy {
    pub fn centralized_fair() -> Self {
        Self { inner: Inner::CentralizedFair { last: None } }
    }

    pub fn probabilistic() -> Self {
        Self { inner: Inner::Probabilistic }
    }

    pub fn independent_coins(p: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Config(format!("activation probability must be in (0, 1], got {p}")));
        }
        Ok(Self { inner: Inner::IndependentCoins { p } })
    }

    pub fn k_bounded(k: u32) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        Ok(Self { inner: Inner::KBounded { k, waiting: BTreeMap::new() } })
    }

    pub fn scripted(script: ActivationScript) -> Self {
        let coins = script.coin_script();
        Self { inner: Inner::Scripted { sets: script.history(), coins, cursor: 0 } }
    }

    pub fn coin_script(&self) -> Option<&CoinScript> {
        match &self.inner {
            Inner::Scripted { coins, .. } => Some(coins),
            _ => None,
        }
    }

    /// Next activated set: nonempty and a subset of `eligible`.
    pub fn next_activation(
        &mut self,
        eligible: &BTreeSet<RobotId>,
        rng: &mut dyn RngCore,
    ) -> Result<BTreeSet<RobotId>> {
        if eligible.is_empty() {
            return Err(Error::NoEligible);
        }
        match &mut self.inner {
            Inner::CentralizedFair { last } => {
                let next = match *last {
                    Some(prev) => eligible.range(prev..).find(|id| **id > prev),
                    None => None,
                }
                .or_else(|| eligible.first())
                .copied()
                .expect("eligible is nonempty");
                *last = Some(next);
                Ok(BTreeSet::from([next]))
            }
            Inner::Probabilistic => Ok(uniform_nonempty_subset(eligible, rng)),
            Inner::IndependentCoins { p } => loop {
                let set: BTreeSet<RobotId> =
                    eligible.iter().copied().filter(|_| rng.gen_bool(*p)).collect();
                if !set.is_empty() {
                    return Ok(set);
                }
            },
            Inner::KBounded { k, waiting } => {
                waiting.retain(|id, _| eligible.contains(id));
                for id in eligible {
                    waiting.entry(*id).or_default().retain(|other, _| eligible.contains(other));
                }
                let candidates: Vec<RobotId> = eligible
                    .iter()
                    .copied()
                    .filter(|c| {
                        waiting
                            .iter()
                            .filter(|(w, _)| *w != c)
                            .all(|(_, seen)| seen.get(c).copied().unwrap_or(0) < *k)
                    })
                    .collect();
                // The least recently activated robot is always a candidate.
                let chosen = candidates[rng.gen_range(0..candidates.len())];
                for (w, seen) in waiting.iter_mut() {
                    if *w == chosen {
                        seen.clear();
                    } else {
                        *seen.entry(chosen).or_insert(0) += 1;
                    }
                }
                Ok(BTreeSet::from([chosen]))
            }
            Inner::Scripted { sets, cursor, .. } => {
                let index = *cursor;
                let set = sets.get(index).ok_or(Error::ScriptExhausted(index))?;
                if set.is_empty() || !set.is_subset(eligible) {
                    return Err(Error::ScriptNotEligible { index });
                }
                *cursor += 1;
                Ok(set.clone())
            }
        }
    }
}

fn uniform_nonempty_subset(eligible: &BTreeSet<RobotId>, rng: &mut dyn RngCore) -> BTreeSet<RobotId> {
    let ids: Vec<RobotId> = eligible.iter().copied().collect();
    if ids.len() < 64 {
        let mask = rng.gen_range(1..(1u64 << ids.len()));
        return ids
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, id)| *id)
            .collect();
    }
    loop {
        let set: BTreeSet<RobotId> = ids.iter().copied().filter(|_| rng.gen::<bool>()).collect();
        if !set.is_empty() {
            return set;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// `robot` was not activated in the window starting at `index`.
    Unfair { index: usize, robot: RobotId },
    /// While `waiting` waited, `other` was activated `count > k` times; detected at `index`.
    KBound { index: usize, waiting: RobotId, other: RobotId, count: u32 },
}

impl Violation {
    pub fn index(&self) -> usize {
        match self {
            Violation::Unfair { index, .. } | Violation::KBound { index, .. } => *index,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    /// Every robot appears in every `window` consecutive steps. Traces shorter than the
    /// window are vacuously fair.
    pub fair: bool,
    pub window: usize,
    pub k: Option<u32>,
    pub k_compliant: Option<bool>,
    pub first_violation: Option<usize>,
    pub violations: Vec<Violation>,
}

pub fn default_window(population: usize, k: Option<u32>) -> usize {
    population.max(1) * k.unwrap_or(1).max(1) as usize * 4
}

/// Audits a finite activation history. `window` defaults to `population × k × 4`.
pub fn audit(
    history: &[BTreeSet<RobotId>],
    population: &BTreeSet<RobotId>,
    k: Option<u32>,
    window: Option<usize>,
) -> AuditReport {
    let window = window.unwrap_or_else(|| default_window(population.len(), k)).max(1);
    let mut violations = Vec::new();

    if history.len() >= window {
        for &robot in population {
            // A window misses the robot iff two consecutive occurrences (with sentinels
            // at -1 and len) are more than `window` apart.
            let mut prev: isize = -1;
            let hits = history
                .iter()
                .enumerate()
                .filter(|(_, s)| s.contains(&robot))
                .map(|(i, _)| i as isize)
                .chain(std::iter::once(history.len() as isize));
            for next in hits {
                if next - prev > window as isize {
                    violations.push(Violation::Unfair { index: (prev + 1) as usize, robot });
                    break;
                }
                prev = next;
            }
        }
    }
    let fair = violations.is_empty();

    let k_compliant = k.map(|k| {
        let mut waiting: BTreeMap<RobotId, BTreeMap<RobotId, u32>> =
            population.iter().map(|r| (*r, BTreeMap::new())).collect();
        let mut ok = true;
        for (index, set) in history.iter().enumerate() {
            for (w, seen) in waiting.iter_mut() {
                if set.contains(w) {
                    seen.clear();
                    continue;
                }
                for other in set.iter().filter(|o| population.contains(o)) {
                    let count = seen.entry(*other).or_insert(0);
                    *count += 1;
                    if *count == k + 1 {
                        ok = false;
                        violations.push(Violation::KBound { index, waiting: *w, other: *other, count: *count });
                    }
                }
            }
        }
        ok
    });

    violations.sort_by_key(Violation::index);
    AuditReport {
        fair,
        window,
        k,
        k_compliant,
        first_violation: violations.first().map(Violation::index),
        violations,
    }
}
