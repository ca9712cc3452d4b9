//! Oblivious robot programs.
//!
//! Each program is a pure rule from the current observation, the robot's own position and
//! fresh coins to a destination. Nothing persists between activations. Observations are
//! canonicalised (lexicographically sorted) before any coin is consumed, so the output
//! distribution never depends on the order in which positions were reported.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::coins::Coins;
use crate::engine::Observation;
use crate::error::{Error, Result};
use crate::geometry::{self, max_multiplicity_positions, Point};

/// A robot's decision rule.
pub trait Program {
    fn destination(&self, obs: &Observation, own: Point, coins: &mut Coins<'_>) -> Result<Point>;
}

/// How large a disk cell sampling draws from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusPolicy {
    /// Half the distance to the nearest other occupied point (1.0 when alone). The disk
    /// then lies inside the cell, so no sample is ever rejected for membership.
    #[default]
    HalfNearest,
    Fixed(f64),
}

impl RadiusPolicy {
    pub fn radius(&self, site: Point, sites: &[Point]) -> f64 {
        match *self {
            RadiusPolicy::HalfNearest => geometry::half_nearest_distance(site, sites).unwrap_or(1.0),
            RadiusPolicy::Fixed(r) => r,
        }
    }
}

/// What the coin denominator of multiplicity gathering counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxGroupCount {
    /// Number of distinct positions holding the maximal multiplicity.
    #[default]
    Positions,
    /// Number of robots standing on those positions.
    Robots,
}

/// Deterministic gathering target used by flip/flop when no unique multiplicity point
/// exists (every position is a singleton).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatherFallback {
    /// Lexicographically smallest observed position.
    #[default]
    LexSmallest,
    /// Nearest other observed position, ties to the lexicographically smallest.
    Nearest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RobotProgram {
    BaselineGather,
    MultiplicityGather {
        #[serde(default)]
        count: MaxGroupCount,
    },
    VoronoiScatter {
        #[serde(default)]
        radius: RadiusPolicy,
    },
    BarycenterConverge,
    FlipFlop {
        #[serde(default)]
        radius: RadiusPolicy,
        #[serde(default)]
        fallback: GatherFallback,
    },
}

impl RobotProgram {
    pub fn multiplicity_gather() -> Self {
        RobotProgram::MultiplicityGather { count: MaxGroupCount::Positions }
    }

    pub fn voronoi_scatter() -> Self {
        RobotProgram::VoronoiScatter { radius: RadiusPolicy::HalfNearest }
    }

    pub fn flip_flop(fallback: GatherFallback) -> Self {
        RobotProgram::FlipFlop { radius: RadiusPolicy::HalfNearest, fallback }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RobotProgram::BaselineGather => "baseline_gather",
            RobotProgram::MultiplicityGather { .. } => "multiplicity_gather",
            RobotProgram::VoronoiScatter { .. } => "voronoi_scatter",
            RobotProgram::BarycenterConverge => "barycenter_converge",
            RobotProgram::FlipFlop { .. } => "flip_flop",
        }
    }
}

impl fmt::Display for RobotProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RobotProgram {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline_gather" | "baseline" => Ok(RobotProgram::BaselineGather),
            "multiplicity_gather" | "multiplicity" => Ok(RobotProgram::multiplicity_gather()),
            "voronoi_scatter" | "scatter" => Ok(RobotProgram::voronoi_scatter()),
            "barycenter_converge" | "barycenter" => Ok(RobotProgram::BarycenterConverge),
            "flip_flop" => Ok(RobotProgram::flip_flop(GatherFallback::LexSmallest)),
            other => Err(Error::Config(format!("unknown program {other:?}"))),
        }
    }
}

impl Program for RobotProgram {
    fn destination(&self, obs: &Observation, own: Point, coins: &mut Coins<'_>) -> Result<Point> {
        match self {
            RobotProgram::BaselineGather => Ok(baseline_gather_step(obs, own, coins)),
            RobotProgram::MultiplicityGather { count } => {
                multiplicity_gather_step(obs, own, *count, coins)
            }
            RobotProgram::VoronoiScatter { radius } => voronoi_scatter_step(obs, own, *radius, coins),
            RobotProgram::BarycenterConverge => barycenter_converge_step(obs),
            RobotProgram::FlipFlop { radius, fallback } => {
                flip_flop_step(obs, own, *radius, *fallback, coins)
            }
        }
    }
}

/// `0` with probability 3/4, `1` with probability 1/4.
pub fn random_bit(coins: &mut Coins<'_>) -> u8 {
    coins.random_bit()
}

/// Picks one of the other observed robots uniformly and moves onto it with probability
/// `1/n`, `n` being the number of observed robots.
pub fn baseline_gather_step(obs: &Observation, own: Point, coins: &mut Coins<'_>) -> Point {
    let mut others = obs.positions().to_vec();
    match others.iter().position(|p| *p == own) {
        Some(i) => {
            others.remove(i);
        }
        None => debug_assert!(false, "observation must contain the observer"),
    }
    if others.is_empty() {
        return own;
    }
    let target = others[coins.index(others.len())];
    if coins.bernoulli(1.0 / obs.len() as f64) {
        target
    } else {
        own
    }
}

/// Gathering with multiplicity knowledge.
///
/// A robot standing on one of several tied maximal groups leaves for another of them with
/// probability `1/|M|`; every other robot joins a maximal group (the unique one, or a
/// uniformly chosen one among ties).
pub fn multiplicity_gather_step(
    obs: &Observation,
    own: Point,
    count: MaxGroupCount,
    coins: &mut Coins<'_>,
) -> Result<Point> {
    let occ = obs.occupancy();
    let max_positions = max_multiplicity_positions(&occ)?;
    let on_max = max_positions.contains(&own);

    match count {
        MaxGroupCount::Positions => {
            if on_max && max_positions.len() > 1 {
                if coins.bernoulli(1.0 / max_positions.len() as f64) {
                    let others: Vec<Point> =
                        max_positions.iter().copied().filter(|p| *p != own).collect();
                    return Ok(others[coins.index(others.len())]);
                }
                return Ok(own);
            }
            if on_max {
                return Ok(own);
            }
            Ok(max_positions[coins.index(max_positions.len())])
        }
        MaxGroupCount::Robots => {
            let robots = max_positions.len() * occ.max_count();
            if on_max && robots > 1 {
                if coins.bernoulli(1.0 / robots as f64) {
                    // Pick a robot of another maximal group; none exists at a unique maximum.
                    let others: Vec<Point> =
                        max_positions.iter().copied().filter(|p| *p != own).collect();
                    if others.is_empty() {
                        return Ok(own);
                    }
                    return Ok(others[coins.index(others.len())]);
                }
                return Ok(own);
            }
            if on_max {
                return Ok(own);
            }
            Ok(max_positions[coins.index(max_positions.len())])
        }
    }
}

/// On bit `0` moves to a random point of its own Voronoi cell, on `1` stays. Robots that
/// are already alone still move on `0`.
pub fn voronoi_scatter_step(
    obs: &Observation,
    own: Point,
    radius: RadiusPolicy,
    coins: &mut Coins<'_>,
) -> Result<Point> {
    if coins.random_bit() == 1 {
        return Ok(own);
    }
    let sites: Vec<Point> = obs.occupancy().positions().collect();
    let r = radius.radius(own, &sites);
    geometry::sample_point_in_cell(own, &sites, r, coins.rng())
}

pub fn barycenter_converge_step(obs: &Observation) -> Result<Point> {
    geometry::barycenter(obs.positions())
}

/// Scatter while at least two points hold several robots, otherwise gather
/// deterministically on the multiplicity point (or the fallback target).
pub fn flip_flop_step(
    obs: &Observation,
    own: Point,
    radius: RadiusPolicy,
    fallback: GatherFallback,
    coins: &mut Coins<'_>,
) -> Result<Point> {
    let occ = obs.occupancy();
    let strict = occ.iter().filter(|&(_, c)| c >= 2).count();
    if strict >= 2 {
        return voronoi_scatter_step(obs, own, radius, coins);
    }
    let max_positions = max_multiplicity_positions(&occ)?;
    if max_positions.len() == 1 {
        return Ok(max_positions[0]);
    }
    Ok(match fallback {
        GatherFallback::LexSmallest => max_positions[0],
        GatherFallback::Nearest => occ
            .positions()
            .filter(|p| *p != own)
            .fold(None::<Point>, |best, p| match best {
                Some(b) if b.dist_sq(&own) <= p.dist_sq(&own) => Some(b),
                _ => Some(p),
            })
            .unwrap_or(own),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    fn obs(points: &[Point]) -> Observation {
        Observation::new(points.to_vec())
    }

    fn frequency(draws: usize, seed: u64, mut hit: impl FnMut(&mut Coins<'_>) -> bool) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hits = 0;
        for _ in 0..draws {
            let mut coins = Coins::new(&mut rng);
            if hit(&mut coins) {
                hits += 1;
            }
        }
        hits as f64 / draws as f64
    }

    #[test]
    fn baseline_two_robots_moves_half_the_time() {
        let (a, b) = (p(0.0, 0.0), p(1.0, 0.0));
        let o = obs(&[a, b]);
        let f = frequency(100_000, 1, |c| baseline_gather_step(&o, a, c) == b);
        assert!((f - 0.5).abs() < 0.01, "{f}");
    }

    #[test]
    fn baseline_alone_stays() {
        let a = p(3.0, 4.0);
        let o = obs(&[a]);
        let f = frequency(1000, 2, |c| baseline_gather_step(&o, a, c) == a);
        assert_eq!(f, 1.0);
    }

    #[test]
    fn baseline_four_robots_moves_a_quarter_of_the_time() {
        let pts = [p(0.0, 0.0), p(1.0, 0.0), p(0.0, 1.0), p(1.0, 1.0)];
        let o = obs(&pts);
        let f = frequency(100_000, 3, |c| baseline_gather_step(&o, pts[0], c) != pts[0]);
        assert!((f - 0.25).abs() < 0.01, "{f}");
    }

    #[test]
    fn multiplicity_joins_the_unique_maximum() {
        let (a, b) = (p(0.0, 0.0), p(1.0, 0.0));
        let o = obs(&[a, a, b]);
        let f = frequency(1000, 4, |c| {
            multiplicity_gather_step(&o, b, MaxGroupCount::Positions, c).unwrap() == a
        });
        assert_eq!(f, 1.0);
        let gathered = obs(&[a, a, a]);
        let f = frequency(1000, 4, |c| {
            multiplicity_gather_step(&gathered, a, MaxGroupCount::Positions, c).unwrap() == a
        });
        assert_eq!(f, 1.0);
    }

    #[test]
    fn multiplicity_tie_flips_a_fair_coin() {
        let (a, b) = (p(0.0, 0.0), p(1.0, 0.0));
        let o = obs(&[a, a, b, b]);
        let f = frequency(100_000, 5, |c| {
            multiplicity_gather_step(&o, a, MaxGroupCount::Positions, c).unwrap() == b
        });
        assert!((f - 0.5).abs() < 0.01, "{f}");
    }

    #[test]
    fn multiplicity_outside_tie_picks_a_maximum_uniformly() {
        let (a, b, c) = (p(0.0, 0.0), p(1.0, 0.0), p(5.0, 5.0));
        let o = obs(&[a, a, b, b, c]);
        let f = frequency(100_000, 6, |k| {
            multiplicity_gather_step(&o, c, MaxGroupCount::Positions, k).unwrap() == a
        });
        assert!((f - 0.5).abs() < 0.01, "{f}");
    }

    #[test]
    fn robots_count_variant_uses_the_robot_denominator() {
        let (a, b) = (p(0.0, 0.0), p(1.0, 0.0));
        let o = obs(&[a, a, b, b]);
        let f = frequency(100_000, 7, |c| {
            multiplicity_gather_step(&o, a, MaxGroupCount::Robots, c).unwrap() == b
        });
        assert!((f - 0.25).abs() < 0.01, "{f}");
        let gathered = obs(&[a, a, a]);
        let f = frequency(1000, 7, |c| {
            multiplicity_gather_step(&gathered, a, MaxGroupCount::Robots, c).unwrap() == a
        });
        assert_eq!(f, 1.0);
    }

    #[test]
    fn scatter_moves_three_quarters_of_the_time() {
        let a = p(0.0, 0.0);
        let o = obs(&[a, a, p(2.0, 0.0)]);
        let f = frequency(100_000, 8, |c| {
            voronoi_scatter_step(&o, a, RadiusPolicy::HalfNearest, c).unwrap() != a
        });
        assert!((f - 0.75).abs() < 0.01, "{f}");
    }

    #[test]
    fn scatter_bit_one_stays_and_bit_zero_moves() {
        let a = p(0.0, 0.0);
        let o = obs(&[a]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut coins = Coins::scripted(&mut rng, &[1]);
        assert_eq!(voronoi_scatter_step(&o, a, RadiusPolicy::HalfNearest, &mut coins).unwrap(), a);
        let mut coins = Coins::scripted(&mut rng, &[0]);
        let q = voronoi_scatter_step(&o, a, RadiusPolicy::HalfNearest, &mut coins).unwrap();
        assert_ne!(q, a);
        assert!(q.dist(&a) < 1.0);
    }

    #[test]
    fn barycenter_program() {
        assert_eq!(barycenter_converge_step(&obs(&[p(0.0, 0.0), p(2.0, 0.0)])).unwrap(), p(1.0, 0.0));
        let q = p(2.5, -1.0);
        assert_eq!(barycenter_converge_step(&obs(&[q, q, q])).unwrap(), q);
        assert_eq!(
            barycenter_converge_step(&obs(&[p(0.0, 0.0), p(0.0, 3.0), p(3.0, 0.0)])).unwrap(),
            p(1.0, 1.0)
        );
    }

    #[test]
    fn flip_flop_branches() {
        let (a, b, c) = (p(0.0, 0.0), p(4.0, 0.0), p(0.0, 4.0));
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        // Two strict multiplicity points: scattering, so bit 1 keeps the robot in place
        // and bit 0 sends it into its cell.
        let o = obs(&[a, a, b, b, c]);
        let mut coins = Coins::scripted(&mut rng, &[0]);
        let moved = flip_flop_step(&o, a, RadiusPolicy::HalfNearest, GatherFallback::LexSmallest, &mut coins)
            .unwrap();
        assert!(moved != a && moved != b);
        // Unique maximum: deterministic gathering.
        let o = obs(&[a, a, a, b]);
        let mut coins = Coins::new(&mut rng);
        assert_eq!(
            flip_flop_step(&o, b, RadiusPolicy::HalfNearest, GatherFallback::LexSmallest, &mut coins).unwrap(),
            a
        );
        // All singletons.
        let o = obs(&[b, c, p(1.0, 0.0)]);
        assert_eq!(
            flip_flop_step(&o, b, RadiusPolicy::HalfNearest, GatherFallback::LexSmallest, &mut coins).unwrap(),
            c
        );
        assert_eq!(
            flip_flop_step(&o, b, RadiusPolicy::HalfNearest, GatherFallback::Nearest, &mut coins).unwrap(),
            p(1.0, 0.0)
        );
    }

    #[test]
    fn program_names_round_trip() {
        for name in ["baseline_gather", "multiplicity_gather", "voronoi_scatter", "barycenter_converge", "flip_flop"] {
            assert_eq!(name.parse::<RobotProgram>().unwrap().name(), name);
        }
        assert!("teleport".parse::<RobotProgram>().is_err());
        let json = r#"{"type":"flip_flop","fallback":"nearest","radius":{"fixed":0.5}}"#;
        let parsed: RobotProgram = serde_json::from_str(json).unwrap();
        assert_eq!(
            parsed,
            RobotProgram::FlipFlop { radius: RadiusPolicy::Fixed(0.5), fallback: GatherFallback::Nearest }
        );
    }

    fn programs() -> Vec<RobotProgram> {
        vec![
            RobotProgram::BaselineGather,
            RobotProgram::multiplicity_gather(),
            RobotProgram::MultiplicityGather { count: MaxGroupCount::Robots },
            RobotProgram::voronoi_scatter(),
            RobotProgram::BarycenterConverge,
            RobotProgram::flip_flop(GatherFallback::LexSmallest),
            RobotProgram::flip_flop(GatherFallback::Nearest),
        ]
    }

    fn config_strategy() -> impl Strategy<Value = (Vec<(i8, i8)>, usize, u64)> {
        prop::collection::vec((-3i8..3, -3i8..3), 1..10)
            .prop_flat_map(|pts| {
                let n = pts.len();
                (Just(pts), 0..n, any::<u64>())
            })
    }

    proptest! {
        #[test]
        fn programs_are_pure_and_order_insensitive((raw, who, seed) in config_strategy()) {
            let pts: Vec<Point> = raw.iter().map(|&(x, y)| p(x as f64, y as f64)).collect();
            let own = pts[who];
            let mut shuffled = pts.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
            for prog in programs() {
                let run = |points: &[Point]| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let mut coins = Coins::new(&mut rng);
                    prog.destination(&obs(points), own, &mut coins).unwrap()
                };
                let first = run(&pts);
                prop_assert_eq!(first, run(&pts));
                prop_assert_eq!(first, run(&shuffled));
            }
        }

        #[test]
        fn multiplicity_gather_stays_on_observed_points((raw, who, seed) in config_strategy()) {
            let pts: Vec<Point> = raw.iter().map(|&(x, y)| p(x as f64, y as f64)).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut coins = Coins::new(&mut rng);
            let d = multiplicity_gather_step(&obs(&pts), pts[who], MaxGroupCount::Positions, &mut coins).unwrap();
            prop_assert!(pts.contains(&d));
        }

        #[test]
        fn scatter_moves_stay_inside_the_cell((raw, who, seed) in config_strategy()) {
            let pts: Vec<Point> = raw.iter().map(|&(x, y)| p(x as f64, y as f64)).collect();
            let own = pts[who];
            let o = obs(&pts);
            let sites: Vec<Point> = o.occupancy().positions().collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut coins = Coins::new(&mut rng);
            let d = voronoi_scatter_step(&o, own, RadiusPolicy::Fixed(5.0), &mut coins).unwrap();
            if d != own {
                prop_assert!(geometry::voronoi_cell_contains(own, &sites, d).unwrap());
            }
        }
    }
}
