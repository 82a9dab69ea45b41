//! Plane geometry under the maximum norm, windows `[-t, t)²`, unit cells,
//! marked configurations and the counting/density functionals on them.
//!
//! Spins are stored as fixed-point fractions of a full turn (`u64`, wrapping).
//! Rotations are then exact modular additions: rotating by `a` and back by
//! `-a` restores the original spin bit for bit, and spin differences are
//! unaffected by a global rotation.

use std::collections::HashSet;
use std::f64::consts::TAU;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the plane. All norms in this crate are the maximum norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    /// `max(|x|, |y|)`
    #[inline]
    pub fn norm(&self) -> f64 {
        self.x.abs().max(self.y.abs())
    }

    #[inline]
    pub fn sub(&self, other: &Point) -> Point {
        Point::new(self.x - other.x, self.y - other.y)
    }

    /// Sup-norm distance.
    #[inline]
    pub fn dist(&self, other: &Point) -> f64 {
        self.sub(other).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    fn key(&self) -> (u64, u64) {
        // +0.0 folds -0.0 onto 0.0 so that equal positions hash equally.
        ((self.x + 0.0).to_bits(), (self.y + 0.0).to_bits())
    }
}

const TURN: f64 = 18_446_744_073_709_551_616.0; // 2^64

/// An angle on the circle `ℝ / 2πℤ`, stored as a fraction of a turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Spin(u64);

impl Spin {
    pub const ZERO: Spin = Spin(0);

    /// Reduces `angle` (radians) modulo `2π`.
    pub fn new(angle: f64) -> Self {
        Spin(turn_units(angle))
    }

    pub fn from_units(units: u64) -> Self {
        Spin(units)
    }

    pub fn units(&self) -> u64 {
        self.0
    }

    /// Angle in `[0, 2π)`.
    pub fn angle(&self) -> f64 {
        self.0 as f64 / TURN * TAU
    }

    /// This spin rotated by `angle` radians.
    pub fn rotated(&self, angle: f64) -> Spin {
        Spin(self.0.wrapping_add(signed_turn_units(angle)))
    }

    /// The difference `self - other` as an angle in `[-π, π)`.
    #[inline]
    pub fn diff(&self, other: &Spin) -> f64 {
        let d = self.0.wrapping_sub(other.0) as i64;
        d as f64 / TURN * TAU
    }
}

fn turn_units(angle: f64) -> u64 {
    let turns = angle / TAU;
    let frac = turns - turns.floor();
    // frac * 2^64 may round up to exactly 2^64; the u128 cast then wraps to 0.
    (frac * TURN) as u128 as u64
}

/// Odd-symmetric conversion: `signed_turn_units(-a) == signed_turn_units(a).wrapping_neg()`.
fn signed_turn_units(angle: f64) -> u64 {
    let mag = turn_units(angle.abs());
    if angle < 0.0 {
        mag.wrapping_neg()
    } else {
        mag
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkedParticle {
    pub position: Point,
    pub spin: Spin,
}

impl MarkedParticle {
    pub fn new(position: Point, spin: Spin) -> Self {
        MarkedParticle { position, spin }
    }

    pub fn at(x: f64, y: f64, angle: f64) -> Self {
        MarkedParticle::new(Point::new(x, y), Spin::new(angle))
    }
}

/// A finite simple configuration. The index of a particle is its id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Configuration {
    particles: Vec<MarkedParticle>,
}

impl Configuration {
    pub fn empty() -> Self {
        Configuration::default()
    }

    /// Builds a configuration, rejecting non-finite or coincident positions.
    pub fn new(particles: Vec<MarkedParticle>) -> Result<Self> {
        let mut seen: HashSet<(u64, u64)> = HashSet::with_capacity(particles.len());
        let mut first = std::collections::HashMap::new();
        for (i, p) in particles.iter().enumerate() {
            if !p.position.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "particle {i} has a non-finite position"
                )));
            }
            let key = p.position.key();
            if !seen.insert(key) {
                return Err(Error::NotSimple(first[&key], i));
            }
            first.insert(key, i);
        }
        Ok(Configuration { particles })
    }

    /// Skips the simplicity check; callers guarantee distinct positions.
    pub(crate) fn from_vec_unchecked(particles: Vec<MarkedParticle>) -> Self {
        Configuration { particles }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[MarkedParticle] {
        &self.particles
    }

    pub fn get(&self, id: usize) -> Option<&MarkedParticle> {
        self.particles.get(id)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, MarkedParticle> {
        self.particles.iter()
    }

    pub fn positions(&self) -> Vec<Point> {
        self.particles.iter().map(|p| p.position).collect()
    }

    pub fn into_vec(self) -> Vec<MarkedParticle> {
        self.particles
    }

    /// Appends a particle, rejecting a duplicate position.
    pub fn push(&mut self, particle: MarkedParticle) -> Result<()> {
        if let Some(j) = self
            .particles
            .iter()
            .position(|q| q.position.key() == particle.position.key())
        {
            return Err(Error::NotSimple(j, self.particles.len()));
        }
        self.particles.push(particle);
        Ok(())
    }

    pub(crate) fn push_unchecked(&mut self, particle: MarkedParticle) {
        self.particles.push(particle);
    }

    pub(crate) fn swap_remove(&mut self, id: usize) -> MarkedParticle {
        self.particles.swap_remove(id)
    }

    pub(crate) fn set(&mut self, id: usize, particle: MarkedParticle) {
        self.particles[id] = particle;
    }

    /// Every spin rotated by the same angle.
    pub fn rotate_all(&self, angle: f64) -> Configuration {
        Configuration {
            particles: self
                .particles
                .iter()
                .map(|p| MarkedParticle::new(p.position, p.spin.rotated(angle)))
                .collect(),
        }
    }

    /// Union of two position-disjoint configurations (ids of `other` shift by `self.len()`).
    pub fn union(&self, other: &Configuration) -> Result<Configuration> {
        let mut all = self.particles.clone();
        all.extend_from_slice(&other.particles);
        Configuration::new(all)
    }

    /// Largest sup-norm among the particle positions (0 when empty).
    pub fn max_norm(&self) -> f64 {
        self.particles
            .iter()
            .map(|p| p.position.norm())
            .fold(0.0, f64::max)
    }

    /// Writes `id,x,y,spin` rows ordered by id; spins in radians.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["id", "x", "y", "spin"])?;
        for (id, p) in self.particles.iter().enumerate() {
            w.write_record([
                id.to_string(),
                format!("{:e}", p.position.x),
                format!("{:e}", p.position.y),
                format!("{:e}", p.spin.angle()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Configuration> {
        let mut r = csv::Reader::from_reader(reader);
        let mut rows: Vec<(usize, MarkedParticle)> = Vec::new();
        for record in r.deserialize() {
            let row: CsvRow = record?;
            rows.push((row.id, MarkedParticle::at(row.x, row.y, row.spin)));
        }
        rows.sort_by_key(|(id, _)| *id);
        for (expected, (id, _)) in rows.iter().enumerate() {
            if *id != expected {
                return Err(Error::InvalidParameter(format!(
                    "particle ids must be 0..n without gaps; found {id} at position {expected}"
                )));
            }
        }
        Configuration::new(rows.into_iter().map(|(_, p)| p).collect())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load_csv(path: &Path) -> Result<Configuration> {
        Configuration::read_csv(std::fs::File::open(path)?)
    }
}

#[derive(Deserialize)]
struct CsvRow {
    id: usize,
    x: f64,
    y: f64,
    spin: f64,
}

/// Anything with half-open membership semantics.
pub trait Region {
    fn contains(&self, p: &Point) -> bool;
}

/// The window `[-t, t)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    half_width: f64,
}

impl Window {
    pub fn new(half_width: f64) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "window half-width must be positive, got {half_width}"
            )));
        }
        Ok(Window { half_width })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn side(&self) -> f64 {
        2.0 * self.half_width
    }

    pub fn area(&self) -> f64 {
        self.side() * self.side()
    }
}

impl Region for Window {
    #[inline]
    fn contains(&self, p: &Point) -> bool {
        let t = self.half_width;
        -t <= p.x && p.x < t && -t <= p.y && p.y < t
    }
}

/// Index `r` of the unit cell `r + [-1/2, 1/2)²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub i: i64,
    pub j: i64,
}

impl CellIndex {
    pub fn new(i: i64, j: i64) -> Self {
        CellIndex { i, j }
    }

    /// Sup-norm distance between two lattice points.
    pub fn dist(&self, other: &CellIndex) -> u64 {
        (self.i - other.i)
            .unsigned_abs()
            .max((self.j - other.j).unsigned_abs())
    }
}

impl Region for CellIndex {
    #[inline]
    fn contains(&self, p: &Point) -> bool {
        cell_index(p) == *self
    }
}

/// The complement of a region.
#[derive(Debug, Clone, Copy)]
pub struct Outside<R>(pub R);

impl<R: Region> Region for Outside<R> {
    fn contains(&self, p: &Point) -> bool {
        !self.0.contains(p)
    }
}

/// The cell `C_r` holding `p`: `p - r ∈ [-1/2, 1/2)²`.
#[inline]
pub fn cell_index(p: &Point) -> CellIndex {
    CellIndex::new((p.x + 0.5).floor() as i64, (p.y + 0.5).floor() as i64)
}

pub fn count_in<R: Region + ?Sized>(cfg: &Configuration, region: &R) -> usize {
    cfg.iter().filter(|p| region.contains(&p.position)).count()
}

/// The particles of `cfg` inside `region`, in their original order.
pub fn restrict<R: Region + ?Sized>(cfg: &Configuration, region: &R) -> Configuration {
    Configuration::from_vec_unchecked(
        cfg.iter()
            .filter(|p| region.contains(&p.position))
            .copied()
            .collect(),
    )
}

/// Splits `cfg` into (inside, outside) with respect to `region`.
pub fn partition<R: Region + ?Sized>(cfg: &Configuration, region: &R) -> (Configuration, Configuration) {
    let (a, b): (Vec<_>, Vec<_>) = cfg.iter().partition(|p| region.contains(&p.position));
    (
        Configuration::from_vec_unchecked(a),
        Configuration::from_vec_unchecked(b),
    )
}

/// Occupation numbers of the non-empty unit cells.
pub fn cell_counts(cfg: &Configuration) -> std::collections::BTreeMap<CellIndex, usize> {
    let mut counts = std::collections::BTreeMap::new();
    for p in cfg.iter() {
        *counts.entry(cell_index(&p.position)).or_insert(0) += 1;
    }
    counts
}

/// Mean quadratic particle density per unit square over `Λ_{n+1/2}`:
/// `(2n+1)^{-2} Σ_{|r| ≤ n} N_{C_r}²`.
pub fn quadratic_density(cfg: &Configuration, n: u32) -> f64 {
    let n = n as i64;
    let sum: usize = cell_counts(cfg)
        .iter()
        .filter(|(r, _)| r.i.abs() <= n && r.j.abs() <= n)
        .map(|(_, c)| c * c)
        .sum();
    let side = (2 * n + 1) as f64;
    sum as f64 / (side * side)
}

/// Finite-data surrogate for the temperedness functional `sup_n s_n`:
/// `s_n` at the smallest `n` whose cells cover the whole configuration.
pub fn temperedness(cfg: &Configuration) -> f64 {
    let n = cell_counts(cfg)
        .keys()
        .map(|r| r.i.unsigned_abs().max(r.j.unsigned_abs()))
        .max()
        .unwrap_or(0);
    quadratic_density(cfg, n as u32)
}
