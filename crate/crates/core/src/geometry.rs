//! Planar points, multiplicity accounting and Voronoi-cell membership.
//!
//! Positions compare by exact coordinate equality. Robots that move "towards" an occupied
//! point adopt its exact coordinates, so co-location never needs an epsilon.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};

use rand::Rng;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Attempts per radius before the sampling disk is halved.
pub const SAMPLE_ATTEMPTS: usize = 1000;
/// Radius below which a cell is declared degenerate.
pub const MIN_SAMPLE_RADIUS: f64 = 1e-12;

/// A point of the plane with finite coordinates.
///
/// `-0.0` is normalised to `0.0` so that equality, ordering and hashing agree.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    x: f64,
    y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    /// Panics on non-finite input; use [`Point::try_new`] for untrusted data.
    pub fn new(x: f64, y: f64) -> Self {
        Self::try_new(x, y).expect("point coordinates must be finite")
    }

    pub fn try_new(x: f64, y: f64) -> Result<Self> {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(Self { x: x + 0.0, y: y + 0.0 })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn dist_sq(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn dist(&self, other: &Point) -> f64 {
        self.dist_sq(other).sqrt()
    }
}

impl PartialEq for Point {
    fn eq(&self, other: &Self) -> bool {
        self.x == other.x && self.y == other.y
    }
}

impl Eq for Point {}

impl PartialOrd for Point {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Lexicographic: first `x`, then `y`.
impl Ord for Point {
    fn cmp(&self, other: &Self) -> Ordering {
        self.x
            .total_cmp(&other.x)
            .then_with(|| self.y.total_cmp(&other.y))
    }
}

impl Hash for Point {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.x.to_bits().hash(state);
        self.y.to_bits().hash(state);
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

impl TryFrom<[f64; 2]> for Point {
    type Error = Error;

    fn try_from(v: [f64; 2]) -> Result<Self> {
        Point::try_new(v[0], v[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Distinct positions with the number of robots standing on each.
///
/// Keys iterate in lexicographic order, which doubles as the canonical order programs use
/// before consuming randomness.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OccupancyMap {
    entries: BTreeMap<Point, usize>,
}

impl OccupancyMap {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of distinct positions.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Number of robots counted.
    pub fn total(&self) -> usize {
        self.entries.values().sum()
    }

    pub fn count(&self, p: &Point) -> usize {
        self.entries.get(p).copied().unwrap_or(0)
    }

    pub fn max_count(&self) -> usize {
        self.entries.values().copied().max().unwrap_or(0)
    }

    pub fn positions(&self) -> impl Iterator<Item = Point> + '_ {
        self.entries.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Point, usize)> + '_ {
        self.entries.iter().map(|(p, c)| (*p, *c))
    }

    pub fn insert(&mut self, p: Point) {
        *self.entries.entry(p).or_insert(0) += 1;
    }
}

impl FromIterator<Point> for OccupancyMap {
    fn from_iter<I: IntoIterator<Item = Point>>(iter: I) -> Self {
        let mut occ = OccupancyMap::default();
        for p in iter {
            occ.insert(p);
        }
        occ
    }
}

pub fn multiplicities(positions: &[Point]) -> OccupancyMap {
    positions.iter().copied().collect()
}

/// Every position whose count equals the maximum count, in lexicographic order.
pub fn max_multiplicity_positions(occ: &OccupancyMap) -> Result<Vec<Point>> {
    let max = occ.max_count();
    if max == 0 {
        return Err(Error::NoRobots);
    }
    Ok(occ.iter().filter(|&(_, c)| c == max).map(|(p, _)| p).collect())
}

/// Strict Voronoi membership: `q` is in the cell of `site` iff it is strictly closer to
/// `site` than to every other site. Boundary points belong to no cell.
pub fn voronoi_cell_contains(site: Point, sites: &[Point], q: Point) -> Result<bool> {
    if !sites.contains(&site) {
        return Err(Error::SiteNotInSites(site));
    }
    let d = q.dist_sq(&site);
    Ok(sites.iter().filter(|s| **s != site).all(|s| d < q.dist_sq(s)))
}

/// Half the distance from `site` to the nearest other site, or `None` when `site` is alone.
pub fn half_nearest_distance(site: Point, sites: &[Point]) -> Option<f64> {
    sites
        .iter()
        .filter(|s| **s != site)
        .map(|s| s.dist(&site))
        .min_by(f64::total_cmp)
        .map(|d| d / 2.0)
}

fn uniform_in_disk(center: Point, radius: f64, rng: &mut dyn RngCore) -> Point {
    let r = radius * rng.gen::<f64>().sqrt();
    let theta = std::f64::consts::TAU * rng.gen::<f64>();
    Point::new(center.x + r * theta.cos(), center.y + r * theta.sin())
}

/// Rejection-samples a point of the open cell of `site`, uniform over the cell's
/// intersection with the disk of the given radius, excluding `site` itself.
///
/// After [`SAMPLE_ATTEMPTS`] rejections the radius is halved; once it falls below
/// [`MIN_SAMPLE_RADIUS`] the cell is reported as degenerate.
pub fn sample_point_in_cell(
    site: Point,
    sites: &[Point],
    radius: f64,
    rng: &mut dyn RngCore,
) -> Result<Point> {
    if !sites.contains(&site) {
        return Err(Error::SiteNotInSites(site));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Config(format!("sampling radius must be positive, got {radius}")));
    }
    let mut radius = radius;
    while radius >= MIN_SAMPLE_RADIUS {
        for _ in 0..SAMPLE_ATTEMPTS {
            let p = uniform_in_disk(site, radius, rng);
            if p != site && voronoi_cell_contains(site, sites, p)? {
                return Ok(p);
            }
        }
        radius /= 2.0;
    }
    Err(Error::DegenerateCell(site))
}

pub fn barycenter(positions: &[Point]) -> Result<Point> {
    if positions.is_empty() {
        return Err(Error::NoRobots);
    }
    let n = positions.len() as f64;
    let (sx, sy) = positions
        .iter()
        .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
    Point::try_new(sx / n, sy / n)
}
