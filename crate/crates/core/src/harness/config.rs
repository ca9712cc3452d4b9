use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{Configuration, Predicate};
use crate::error::{Error, Result};
use crate::faults::FaultPlan;
use crate::geometry::Point;
use crate::programs::RobotProgram;
use crate::schedulers::PolicyKind;

/// Randomness stream of a trial seed used for random initial layouts.
const LAYOUT_STREAM: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialLayout {
    /// Every robot at the origin.
    AllAtOnePoint,
    /// Every robot on its own point, no three collinear: robot `i` at `(i, i²)`.
    Singletons,
    /// Two stacks, at `(0, 0)` and `(1, 0)`.
    TwoGroups { sizes: [usize; 2] },
    /// Independent uniform draws in the box `[min, max]`.
    RandomUniform { min: [f64; 2], max: [f64; 2] },
    Explicit { positions: Vec<Point> },
}

impl InitialLayout {
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            InitialLayout::TwoGroups { sizes } if sizes[0] + sizes[1] != n => Err(Error::Config(format!(
                "group sizes {} + {} do not add up to n = {n}",
                sizes[0], sizes[1]
            ))),
            InitialLayout::RandomUniform { min, max } => {
                let ok = min.iter().chain(max).all(|v| v.is_finite()) && min[0] < max[0] && min[1] < max[1];
                if ok {
                    Ok(())
                } else {
                    Err(Error::Config(format!("invalid box {min:?}..{max:?}")))
                }
            }
            InitialLayout::Explicit { positions } if positions.len() != n => Err(Error::Config(format!(
                "{} explicit positions for n = {n}",
                positions.len()
            ))),
            _ => Ok(()),
        }
    }

    /// Robot positions for one trial; only `RandomUniform` depends on `trial_seed`.
    pub fn positions(&self, n: usize, trial_seed: u64) -> Vec<Point> {
        match self {
            InitialLayout::AllAtOnePoint => vec![Point::new(0.0, 0.0); n],
            InitialLayout::Singletons => (0..n).map(|i| Point::new(i as f64, (i * i) as f64)).collect(),
            InitialLayout::TwoGroups { sizes } => {
                let mut v = vec![Point::new(0.0, 0.0); sizes[0]];
                v.extend(vec![Point::new(1.0, 0.0); sizes[1]]);
                v
            }
            InitialLayout::RandomUniform { min, max } => {
                let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
                rng.set_stream(LAYOUT_STREAM);
                (0..n)
                    .map(|_| Point::new(rng.gen_range(min[0]..max[0]), rng.gen_range(min[1]..max[1])))
                    .collect()
            }
            InitialLayout::Explicit { positions } => positions.clone(),
        }
    }
}

/// One batch of independent trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub initial: InitialLayout,
    pub program: RobotProgram,
    pub policy: PolicyKind,
    #[serde(default)]
    pub faults: FaultPlan,
    pub predicate: Predicate,
    pub trials: u64,
    pub max_steps: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(
        n: usize,
        initial: InitialLayout,
        program: RobotProgram,
        policy: PolicyKind,
        predicate: Predicate,
    ) -> Self {
        Self {
            n,
            initial,
            program,
            policy,
            faults: FaultPlan::none(),
            predicate,
            trials: 1,
            max_steps: 100_000,
            seed: 0,
            out: None,
        }
    }

    pub fn with_faults(mut self, faults: FaultPlan) -> Self {
        self.faults = faults;
        self
    }

    pub fn with_trials(mut self, trials: u64) -> Self {
        self.trials = trials;
        self
    }

    pub fn with_max_steps(mut self, max_steps: u64) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be positive".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        self.initial.validate(self.n)?;
        self.faults.validate(self.n)?;
        self.policy.build()?;
        Ok(())
    }

    pub fn initial_configuration(&self, trial_seed: u64) -> Configuration {
        Configuration::new(self.initial.positions(self.n, trial_seed))
    }
}

/// Command-line replacements for config fields; `None` keeps the file's value.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub n: Option<usize>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub program: Option<RobotProgram>,
    pub policy: Option<PolicyKind>,
    /// `gathering` or `scattering`.
    pub predicate: Option<String>,
    pub weak: Option<bool>,
    pub max_steps: Option<u64>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, mut cfg: ExperimentConfig) -> Result<ExperimentConfig> {
        if let Some(n) = self.n {
            cfg.n = n;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(p) = &self.program {
            cfg.program = p.clone();
        }
        if let Some(p) = &self.policy {
            cfg.policy = p.clone();
        }
        if let Some(m) = self.max_steps {
            cfg.max_steps = m;
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        let mut weak = match cfg.predicate {
            Predicate::Gathering { weak } | Predicate::Scattering { weak } => weak,
        };
        if let Some(w) = self.weak {
            weak = w;
        }
        cfg.predicate = match self.predicate.as_deref() {
            None => match cfg.predicate {
                Predicate::Gathering { .. } => Predicate::Gathering { weak },
                Predicate::Scattering { .. } => Predicate::Scattering { weak },
            },
            Some("gathering") => Predicate::Gathering { weak },
            Some("scattering") => Predicate::Scattering { weak },
            Some(other) => return Err(Error::Config(format!("unknown predicate {other:?}"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ExperimentConfig {
        ExperimentConfig::new(
            4,
            InitialLayout::Singletons,
            RobotProgram::multiplicity_gather(),
            PolicyKind::CentralizedFair,
            Predicate::Gathering { weak: false },
        )
    }

    #[test]
    fn validation() {
        assert!(base().validate().is_ok());
        assert!(base().with_trials(0).validate().is_err());
        assert!(base().with_max_steps(0).validate().is_err());
        let mut c = base();
        c.initial = InitialLayout::Explicit { positions: vec![Point::new(0.0, 0.0); 3] };
        assert!(c.validate().is_err());
        c.initial = InitialLayout::TwoGroups { sizes: [2, 1] };
        assert!(c.validate().is_err());
        c.initial = InitialLayout::RandomUniform { min: [0.0, 0.0], max: [0.0, 1.0] };
        assert!(c.validate().is_err());
        c.initial = InitialLayout::TwoGroups { sizes: [2, 2] };
        assert!(c.validate().is_ok());
        c.n = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn layouts() {
        let s = InitialLayout::Singletons.positions(5, 0);
        let distinct: std::collections::BTreeSet<_> = s.iter().collect();
        assert_eq!(distinct.len(), 5);
        let g = InitialLayout::TwoGroups { sizes: [3, 1] }.positions(4, 0);
        assert_eq!(g.iter().filter(|p| **p == Point::new(0.0, 0.0)).count(), 3);
        let r = InitialLayout::RandomUniform { min: [-1.0, 2.0], max: [1.0, 3.0] };
        let a = r.positions(20, 7);
        assert_eq!(a, r.positions(20, 7));
        assert_ne!(a, r.positions(20, 8));
        assert!(a.iter().all(|p| (-1.0..1.0).contains(&p.x()) && (2.0..3.0).contains(&p.y())));
    }

    #[test]
    fn json_round_trip() {
        let json = r#"{
            "n": 3,
            "initial": {"kind": "explicit", "positions": [[0, 0], [1, 0], [0, 1]]},
            "program": {"type": "voronoi_scatter"},
            "policy": {"type": "k_bounded", "k": 2},
            "faults": {"f": 1, "crashes": [{"robot": 0, "mode": "freeze", "at": 0}]},
            "predicate": {"kind": "scattering", "weak": true},
            "trials": 10,
            "max_steps": 50,
            "seed": 9
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.policy, PolicyKind::KBounded { k: 2 });
        let again: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn overrides() {
        let o = Overrides {
            n: Some(6),
            trials: Some(3),
            predicate: Some("scattering".into()),
            weak: Some(true),
            ..Default::default()
        };
        let c = o.apply(base()).unwrap();
        assert_eq!((c.n, c.trials), (6, 3));
        assert_eq!(c.predicate, Predicate::Scattering { weak: true });
        let keep_kind = Overrides { weak: Some(true), ..Default::default() }.apply(base()).unwrap();
        assert_eq!(keep_kind.predicate, Predicate::Gathering { weak: true });
        assert!(Overrides { predicate: Some("sorting".into()), ..Default::default() }.apply(base()).is_err());
        assert!(Overrides { trials: Some(0), ..Default::default() }.apply(base()).is_err());
    }
}
