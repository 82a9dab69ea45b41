//! Pair potentials `U(x₁,σ₁; x₂,σ₂) = J(x₁−x₂) V(σ₁−σ₂) + K(x₁−x₂)` with a
//! radial envelope `ψ`, the derived integral constants, energies and
//! Hamiltonians with a fixed exterior configuration.
//!
//! All couplings have compact support (the Gaussian reference coupling is
//! truncated where it falls below `1e-14 · J₀`), so every pair sum in this
//! crate is exact once pairs beyond [`PairPotentialModel::interaction_range`]
//! are skipped.

use std::f64::consts::{PI, TAU};
use std::io::Read;
use std::ops::{Add, AddAssign};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config_space::{
    cell_counts, CellIndex, Configuration, MarkedParticle, Point, Region, Window,
};
use crate::error::{Error, Result};
use crate::quadrature::radial_integral;
use crate::smoothing::HermiteTable;
use crate::spatial::NeighborGrid;

/// Absolute tolerance of the radial quadratures behind `c_J`, `c(R)`, `ψ_s`.
pub const CONSTANT_QUADRATURE_TOL: f64 = 1e-9;

/// Relative level below which the Gaussian coupling is cut off.
pub const GAUSSIAN_TRUNCATION: f64 = 1e-14;

/// An energy in `(-∞, +∞]`. Addition saturates at `+∞`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ExtendedEnergy(f64);

impl ExtendedEnergy {
    pub const ZERO: ExtendedEnergy = ExtendedEnergy(0.0);
    pub const INFINITE: ExtendedEnergy = ExtendedEnergy(f64::INFINITY);

    /// Panics on NaN or `-∞`, which no potential in this crate produces.
    pub fn new(value: f64) -> Self {
        assert!(
            !value.is_nan() && value != f64::NEG_INFINITY,
            "energy must lie in (-inf, +inf], got {value}"
        );
        ExtendedEnergy(value)
    }

    pub fn value(&self) -> f64 {
        self.0
    }

    pub fn is_infinite(&self) -> bool {
        self.0 == f64::INFINITY
    }

    pub fn is_finite(&self) -> bool {
        self.0.is_finite()
    }

    /// `e^{-E}`, with `e^{-∞} = 0`.
    pub fn boltzmann(&self) -> f64 {
        (-self.0).exp()
    }
}

impl Add for ExtendedEnergy {
    type Output = ExtendedEnergy;
    fn add(self, rhs: Self) -> Self {
        ExtendedEnergy(self.0 + rhs.0)
    }
}

impl AddAssign for ExtendedEnergy {
    fn add_assign(&mut self, rhs: Self) {
        self.0 += rhs.0;
    }
}

impl std::iter::Sum for ExtendedEnergy {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(ExtendedEnergy::ZERO, Add::add)
    }
}

/// Piecewise-linear table `r ↦ value` on `[0, r_last]`, zero beyond.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialTable {
    radii: Vec<f64>,
    values: Vec<f64>,
}

impl RadialTable {
    pub fn new(radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if radii.len() != values.len() || radii.len() < 2 {
            return Err(Error::InvalidParameter(
                "radial table needs at least two (radius,value) rows".into(),
            ));
        }
        if radii[0] != 0.0 {
            return Err(Error::InvalidParameter(
                "radial table must start at radius 0".into(),
            ));
        }
        if radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "radial table radii must be strictly increasing".into(),
            ));
        }
        if values.iter().chain(&radii).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("radial table has non-finite entries".into()));
        }
        Ok(RadialTable { radii, values })
    }

    /// Reads `radius,value` rows (a header line is expected).
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let (a, b) = read_two_columns(reader)?;
        RadialTable::new(a, b)
    }

    pub fn support(&self) -> f64 {
        *self.radii.last().unwrap()
    }

    pub fn at(&self, r: f64) -> f64 {
        if r >= self.support() {
            return 0.0;
        }
        let k = self.radii.partition_point(|&x| x <= r) - 1;
        let (r0, r1) = (self.radii[k], self.radii[k + 1]);
        let (v0, v1) = (self.values[k], self.values[k + 1]);
        v0 + (v1 - v0) * (r - r0) / (r1 - r0)
    }

    /// Breakpoints of the piecewise-linear profile (for quadrature splitting).
    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Periodic piecewise-linear table `σ ↦ value` on the circle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicTable {
    angles: Vec<f64>,
    values: Vec<f64>,
}

impl PeriodicTable {
    /// Angles are reduced to `[0, 2π)` and sorted; duplicates are rejected.
    pub fn new(angles: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if angles.len() != values.len() || angles.len() < 2 {
            return Err(Error::InvalidParameter(
                "angle table needs at least two (angle,value) rows".into(),
            ));
        }
        let mut rows: Vec<(f64, f64)> = angles
            .into_iter()
            .map(|a| a.rem_euclid(TAU))
            .zip(values)
            .collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        if rows.windows(2).any(|w| w[1].0 - w[0].0 < 1e-12) {
            return Err(Error::InvalidParameter("angle table has duplicate angles".into()));
        }
        if rows.iter().any(|(a, v)| !a.is_finite() || !v.is_finite()) {
            return Err(Error::InvalidParameter("angle table has non-finite entries".into()));
        }
        let (angles, values) = rows.into_iter().unzip();
        Ok(PeriodicTable { angles, values })
    }

    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let (a, b) = read_two_columns(reader)?;
        PeriodicTable::new(a, b)
    }

    /// Samples `f` at `n` equally spaced angles.
    pub fn sampled<F: Fn(f64) -> f64>(f: F, n: usize) -> Result<Self> {
        let angles: Vec<f64> = (0..n).map(|k| TAU * k as f64 / n as f64).collect();
        let values = angles.iter().map(|&a| f(a)).collect();
        PeriodicTable::new(angles, values)
    }

    pub fn at(&self, sigma: f64) -> f64 {
        let s = sigma.rem_euclid(TAU);
        let n = self.angles.len();
        let k = self.angles.partition_point(|&a| a <= s);
        // segment from node k-1 to node k (cyclically)
        let (a0, v0, a1, v1) = if k == 0 {
            (self.angles[n - 1] - TAU, self.values[n - 1], self.angles[0], self.values[0])
        } else if k == n {
            (self.angles[n - 1], self.values[n - 1], self.angles[0] + TAU, self.values[0])
        } else {
            (self.angles[k - 1], self.values[k - 1], self.angles[k], self.values[k])
        };
        v0 + (v1 - v0) * (s - a0) / (a1 - a0)
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

fn read_two_columns<R: Read>(reader: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut a = Vec::new();
    let mut b = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(Error::InvalidParameter("table rows need two columns".into()));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::InvalidParameter(format!("bad number {s:?}: {e}")))
        };
        a.push(parse(&rec[0])?);
        b.push(parse(&rec[1])?);
    }
    Ok((a, b))
}

/// Radial coupling `J(x) = j(‖x‖)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Coupling {
    Zero,
    /// `J₀ e^{-‖x‖²}` for `‖x‖ < cutoff`, zero beyond.
    Gaussian { amplitude: f64, cutoff: f64 },
    Table(RadialTable),
}

impl Coupling {
    /// Gaussian coupling truncated at relative level [`GAUSSIAN_TRUNCATION`].
    pub fn gaussian(amplitude: f64) -> Self {
        let cutoff = (1.0 / GAUSSIAN_TRUNCATION).ln().sqrt();
        Coupling::Gaussian { amplitude, cutoff }
    }

    #[inline]
    pub fn at(&self, r: f64) -> f64 {
        match self {
            Coupling::Zero => 0.0,
            Coupling::Gaussian { amplitude, cutoff } => {
                if r < *cutoff {
                    amplitude * (-r * r).exp()
                } else {
                    0.0
                }
            }
            Coupling::Table(t) => t.at(r),
        }
    }

    /// `J` vanishes for `‖x‖ ≥ support()`.
    pub fn support(&self) -> f64 {
        match self {
            Coupling::Zero => 0.0,
            Coupling::Gaussian { cutoff, .. } => *cutoff,
            Coupling::Table(t) => t.support(),
        }
    }

    /// `sup |J|` over all displacements.
    pub fn sup_abs(&self) -> f64 {
        match self {
            Coupling::Zero => 0.0,
            Coupling::Gaussian { amplitude, .. } => amplitude.abs(),
            Coupling::Table(t) => t.values().iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        match self {
            Coupling::Zero => true,
            Coupling::Gaussian { amplitude, .. } => *amplitude >= 0.0,
            Coupling::Table(t) => t.values().iter().all(|v| *v >= 0.0),
        }
    }

    /// Kinks of the radial profile, used to split quadratures.
    fn breakpoints(&self) -> Vec<f64> {
        match self {
            Coupling::Zero => vec![0.0],
            Coupling::Gaussian { cutoff, .. } => vec![0.0, *cutoff],
            Coupling::Table(t) => t.radii().to_vec(),
        }
    }
}

/// Position-only part `K` of the potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CoreRepulsion {
    None,
    /// `K = +∞` for `‖x‖ < radius`, zero otherwise.
    HardCore { radius: f64 },
}

impl CoreRepulsion {
    #[inline]
    pub fn at(&self, r: f64) -> f64 {
        match self {
            CoreRepulsion::None => 0.0,
            CoreRepulsion::HardCore { radius } => {
                if r < *radius {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
        }
    }

    pub fn range(&self) -> f64 {
        match self {
            CoreRepulsion::None => 0.0,
            CoreRepulsion::HardCore { radius } => *radius,
        }
    }
}

/// Spin part `V` as a function of the spin difference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum SpinProfile {
    /// `-a cos σ`
    NegCos { amplitude: f64 },
    Constant(f64),
    Table(PeriodicTable),
    /// Smooth interpolant produced by the smoothing module.
    #[serde(skip)]
    Interpolated(Arc<HermiteTable>),
}

impl SpinProfile {
    #[inline]
    pub fn at(&self, sigma: f64) -> f64 {
        match self {
            SpinProfile::NegCos { amplitude } => -amplitude * sigma.cos(),
            SpinProfile::Constant(c) => *c,
            SpinProfile::Table(t) => t.at(sigma),
            SpinProfile::Interpolated(h) => h.value(sigma),
        }
    }

    /// Points where `V` may fail to be smooth, in `[0, 2π)`.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            SpinProfile::Table(t) => t.angles().to_vec(),
            _ => Vec::new(),
        }
    }

    /// `‖V‖ = sup |V|`.
    pub fn sup_abs(&self) -> f64 {
        match self {
            SpinProfile::NegCos { amplitude } => amplitude.abs(),
            SpinProfile::Constant(c) => c.abs(),
            SpinProfile::Table(t) => t.values().iter().fold(0.0, |m, v| m.max(v.abs())),
            SpinProfile::Interpolated(h) => h.sup_abs(),
        }
    }

    /// Largest `|V(σ) − V(−σ)|` over a grid of `n` angles.
    pub fn symmetry_defect(&self, n: usize) -> f64 {
        (0..n)
            .map(|k| {
                let s = TAU * k as f64 / n as f64;
                (self.at(s) - self.at(-s)).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Decreasing radial envelope `ψ` with `|J(x)|(1+‖x‖²) ≤ ψ(‖x‖)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PsiEnvelope {
    Zero,
    /// `J₀(1+r²)e^{-r²}`
    Gaussian { amplitude: f64 },
    /// Right-continuous step function: `ψ(r) = levels[k]` for `r < ends[k]`.
    Steps { ends: Vec<f64>, levels: Vec<f64> },
}

impl PsiEnvelope {
    fn for_coupling(c: &Coupling) -> Self {
        match c {
            Coupling::Zero => PsiEnvelope::Zero,
            Coupling::Gaussian { amplitude, .. } => PsiEnvelope::Gaussian {
                amplitude: amplitude.abs(),
            },
            Coupling::Table(t) => {
                // On [r_k, r_{k+1}] a linear J satisfies
                // |J|(1+s²) ≤ max(|J_k|,|J_{k+1}|)(1+r_{k+1}²); take suffix maxima.
                let r = t.radii();
                let v = t.values();
                let mut bounds: Vec<f64> = (0..r.len() - 1)
                    .map(|k| v[k].abs().max(v[k + 1].abs()) * (1.0 + r[k + 1] * r[k + 1]))
                    .collect();
                for k in (0..bounds.len().saturating_sub(1)).rev() {
                    bounds[k] = bounds[k].max(bounds[k + 1]);
                }
                PsiEnvelope::Steps {
                    ends: r[1..].to_vec(),
                    levels: bounds,
                }
            }
        }
    }

    pub fn at(&self, r: f64) -> f64 {
        match self {
            PsiEnvelope::Zero => 0.0,
            PsiEnvelope::Gaussian { amplitude } => amplitude * (1.0 + r * r) * (-r * r).exp(),
            PsiEnvelope::Steps { ends, levels } => {
                let k = ends.partition_point(|&e| e <= r);
                levels.get(k).copied().unwrap_or(0.0)
            }
        }
    }

    /// `ψ_s = ∫₀^∞ ψ(r) r dr`.
    pub fn psi_s(&self) -> f64 {
        match self {
            PsiEnvelope::Zero => 0.0,
            PsiEnvelope::Gaussian { amplitude } => *amplitude,
            PsiEnvelope::Steps { ends, levels } => {
                let mut prev = 0.0;
                let mut total = 0.0;
                for (e, l) in ends.iter().zip(levels) {
                    total += l * 0.5 * (e * e - prev * prev);
                    prev = *e;
                }
                total
            }
        }
    }
}

/// Constants `(A, B)` of the superstability bound `H ≥ Σ_r [A N_r² − B N_r]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Superstability {
    pub a: f64,
    pub b: f64,
}

/// A ψ-dominated pair potential together with its derived constants.
#[derive(Debug, Clone)]
pub struct PairPotentialModel {
    pub coupling: Coupling,
    pub core: CoreRepulsion,
    pub spin: SpinProfile,
    pub envelope: PsiEnvelope,
    /// Upper estimate of `1 + ψ(0) + ∫ |J(x)| (1+‖x‖²) dx`.
    pub c_j: f64,
    /// Certified for models with a hard core; `None` otherwise.
    pub superstability: Option<Superstability>,
}

impl PairPotentialModel {
    pub fn new(coupling: Coupling, core: CoreRepulsion, spin: SpinProfile) -> Result<Self> {
        if let CoreRepulsion::HardCore { radius } = core {
            if !(radius > 0.0 && radius.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "hard-core radius must be positive, got {radius}"
                )));
            }
        }
        let envelope = PsiEnvelope::for_coupling(&coupling);
        let bps = coupling.breakpoints();
        let mut moment = 0.0;
        for w in bps.windows(2) {
            moment += radial_integral(
                |t| coupling.at(t).abs() * (1.0 + t * t),
                w[0],
                w[1],
                CONSTANT_QUADRATURE_TOL / bps.len() as f64,
            );
        }
        let c_j = 1.0 + envelope.at(0.0) + moment + CONSTANT_QUADRATURE_TOL;
        let superstability = match core {
            CoreRepulsion::HardCore { radius } => {
                Some(hard_core_superstability(&coupling, &spin, radius))
            }
            CoreRepulsion::None => None,
        };
        Ok(PairPotentialModel {
            coupling,
            core,
            spin,
            envelope,
            c_j,
            superstability,
        })
    }

    /// `J(x) = J₀ e^{-‖x‖²}`, `V(σ) = -cos σ`, hard core of radius `r_hc`.
    pub fn reference(j0: f64, hardcore_radius: f64) -> Result<Self> {
        if !(j0 > 0.0) {
            return Err(Error::InvalidParameter(format!("J0 must be positive, got {j0}")));
        }
        PairPotentialModel::new(
            Coupling::gaussian(j0),
            CoreRepulsion::HardCore {
                radius: hardcore_radius,
            },
            SpinProfile::NegCos { amplitude: 1.0 },
        )
    }

    /// `J ≡ 0`, `K ≡ 0`: the Poisson process itself.
    pub fn ideal_gas() -> Self {
        PairPotentialModel::new(Coupling::Zero, CoreRepulsion::None, SpinProfile::Constant(0.0))
            .expect("ideal gas is a valid model")
    }

    /// Same `J` and `K` with a different spin part (used for the smooth potential).
    pub fn with_spin(&self, spin: SpinProfile) -> Self {
        PairPotentialModel {
            coupling: self.coupling.clone(),
            core: self.core,
            spin,
            envelope: self.envelope.clone(),
            c_j: self.c_j,
            superstability: self.superstability,
        }
    }

    /// Pairs farther apart than this do not interact.
    pub fn interaction_range(&self) -> f64 {
        self.coupling.support().max(self.core.range())
    }

    #[inline]
    pub fn coupling_between(&self, a: &Point, b: &Point) -> f64 {
        self.coupling.at(a.dist(b))
    }

    /// `U` for a displacement of sup-norm `r` and spin difference `dsigma`.
    /// No coincidence check.
    #[inline]
    pub fn pair_value(&self, r: f64, dsigma: f64) -> f64 {
        let k = self.core.at(r);
        if k == f64::INFINITY {
            return k;
        }
        let j = self.coupling.at(r);
        if j == 0.0 {
            k
        } else {
            j * self.spin.at(dsigma) + k
        }
    }

    #[inline]
    pub(crate) fn pair_value_particles(&self, a: &MarkedParticle, b: &MarkedParticle) -> f64 {
        self.pair_value(a.position.dist(&b.position), a.spin.diff(&b.spin))
    }

    /// `ψ_s`.
    pub fn psi_s(&self) -> f64 {
        self.envelope.psi_s()
    }

    /// Lower-regularity penalty `Ψ(k) = ‖V‖ ψ(max(k−1, 0))`.
    pub fn lower_regularity_penalty(&self, k: u64) -> f64 {
        self.spin.sup_abs() * self.envelope.at((k as f64 - 1.0).max(0.0))
    }

    /// Upper estimate of `∫_{‖x‖≥R} |J(x)| dx`.
    pub fn tail_constant(&self, radius: f64) -> Result<f64> {
        if !(radius >= 0.0) {
            return Err(Error::InvalidParameter(format!("R must be >= 0, got {radius}")));
        }
        let mut bps: Vec<f64> = self
            .coupling
            .breakpoints()
            .into_iter()
            .filter(|&b| b > radius)
            .collect();
        if bps.is_empty() {
            return Ok(0.0);
        }
        bps.insert(0, radius);
        let mut total = 0.0;
        for w in bps.windows(2) {
            total += radial_integral(
                |t| self.coupling.at(t).abs(),
                w[0],
                w[1],
                CONSTANT_QUADRATURE_TOL / bps.len() as f64,
            );
        }
        Ok(total + CONSTANT_QUADRATURE_TOL)
    }
}

/// Superstability constants for a hard core of sup-norm radius `h`.
///
/// Points at mutual sup-distance `≥ h` number at most `8(2k+1)` in the shell
/// `kh ≤ ‖y‖ < (k+1)h`, so each particle feels at most
/// `S = Σ_k 8(2k+1) sup_{t≥kh}|J(t)|`, giving `H ≥ −½‖V‖ S N`. A unit cell
/// holds at most `⌊(1+h)²/h²⌋` particles, hence `A N_r² ≤ A n_cell N_r`.
fn hard_core_superstability(coupling: &Coupling, spin: &SpinProfile, h: f64) -> Superstability {
    let support = coupling.support();
    let mut s = 0.0;
    let mut k = 1usize;
    while (k as f64) * h < support {
        let t = k as f64 * h;
        s += 8.0 * (2 * k + 1) as f64 * sup_abs_beyond(coupling, t);
        k += 1;
    }
    let n_cell = ((1.0 + h) * (1.0 + h) / (h * h)).floor();
    let a = 1.0;
    Superstability {
        a,
        b: 0.5 * spin.sup_abs() * s + a * n_cell,
    }
}

fn sup_abs_beyond(coupling: &Coupling, t: f64) -> f64 {
    match coupling {
        Coupling::Zero => 0.0,
        Coupling::Gaussian { amplitude, cutoff } => {
            if t < *cutoff {
                amplitude.abs() * (-t * t).exp()
            } else {
                0.0
            }
        }
        Coupling::Table(tab) => {
            let mut m = tab.at(t).abs();
            for (r, v) in tab.radii().iter().zip(tab.values()) {
                if *r > t {
                    m = m.max(v.abs());
                }
            }
            m
        }
    }
}

/// `U(y₁, y₂)`; coincident positions are rejected.
pub fn pair_energy(
    model: &PairPotentialModel,
    y1: &MarkedParticle,
    y2: &MarkedParticle,
) -> Result<ExtendedEnergy> {
    if y1.position == y2.position {
        return Err(Error::Precondition(
            "pair energy of two particles at the same position".into(),
        ));
    }
    Ok(ExtendedEnergy::new(model.pair_value_particles(y1, y2)))
}

/// `H^U(Y) = Σ_{pairs} U`.
pub fn energy(model: &PairPotentialModel, cfg: &Configuration) -> ExtendedEnergy {
    let range = model.interaction_range();
    if range == 0.0 || cfg.len() < 2 {
        return ExtendedEnergy::ZERO;
    }
    let grid = NeighborGrid::build(cfg.particles(), range);
    let ps = cfg.particles();
    let mut total = 0.0;
    grid.for_each_pair(ps, range, |i, j| {
        total += model.pair_value_particles(&ps[i], &ps[j]);
    });
    ExtendedEnergy::new(total)
}

/// `W^U(A, B) = Σ_{a∈A} Σ_{b∈B} U(a, b)`.
pub fn interaction(
    model: &PairPotentialModel,
    a: &Configuration,
    b: &Configuration,
) -> Result<ExtendedEnergy> {
    let range = model.interaction_range();
    if a.is_empty() || b.is_empty() {
        return Ok(ExtendedEnergy::ZERO);
    }
    let grid = NeighborGrid::build(b.particles(), range.max(1e-9));
    let mut total = 0.0;
    for p in a.iter() {
        let mut clash = None;
        grid.for_each_near(b.particles(), &p.position, range, |j| {
            let q = &b.particles()[j];
            if q.position == p.position {
                clash = Some(j);
            }
            total += model.pair_value_particles(p, q);
        });
        if let Some(j) = clash {
            return Err(Error::Precondition(format!(
                "configurations share the position of particle {j}"
            )));
        }
    }
    // Exact coincidences beyond `range` are impossible; within it they were caught above.
    Ok(ExtendedEnergy::new(total))
}

/// `H^U_Λ(Y_Λ Ȳ_{Λᶜ}) = H^U(Y_Λ) + W^U(Y_Λ, Ȳ_{Λᶜ})`.
pub fn hamiltonian(
    model: &PairPotentialModel,
    window: &Window,
    inside: &Configuration,
    boundary: &Configuration,
) -> Result<ExtendedEnergy> {
    check_placement(window, inside, boundary)?;
    Ok(energy(model, inside) + interaction(model, inside, boundary)?)
}

pub(crate) fn check_placement(
    window: &Window,
    inside: &Configuration,
    boundary: &Configuration,
) -> Result<()> {
    if let Some(i) = inside.iter().position(|p| !window.contains(&p.position)) {
        return Err(Error::Precondition(format!(
            "inside particle {i} lies outside the window"
        )));
    }
    if let Some(i) = boundary.iter().position(|p| window.contains(&p.position)) {
        return Err(Error::Precondition(format!(
            "boundary particle {i} lies inside the window"
        )));
    }
    Ok(())
}

/// `H^U(Y) − Σ_{r∈ℤ²(Y)} [A N_r² − B N_r]`; nonnegative certifies the
/// superstability inequality on this instance.
pub fn superstability_margin(model: &PairPotentialModel, cfg: &Configuration) -> Result<f64> {
    let ss = model.superstability.ok_or_else(|| {
        Error::Precondition("model has no certified superstability constants".into())
    })?;
    let bound: f64 = cell_counts(cfg)
        .values()
        .map(|&n| ss.a * (n * n) as f64 - ss.b * n as f64)
        .sum();
    Ok(energy(model, cfg).value() - bound)
}

/// `W^U(A,B) + Σ_r Σ_s Ψ(‖r−s‖)(½N_r(A)² + ½N_s(B)²)`; nonnegative certifies
/// lower regularity on this instance.
pub fn lower_regularity_margin(
    model: &PairPotentialModel,
    a: &Configuration,
    b: &Configuration,
) -> Result<f64> {
    let w = interaction(model, a, b)?.value();
    let ca = cell_counts(a);
    let cb = cell_counts(b);
    let mut bound = 0.0;
    for (r, &na) in &ca {
        for (s, &nb) in &cb {
            let k = CellIndex::dist(r, s);
            bound += model.lower_regularity_penalty(k)
                * (0.5 * (na * na) as f64 + 0.5 * (nb * nb) as f64);
        }
    }
    Ok(w + bound)
}

/// Largest `|J(x)|(1+‖x‖²) − ψ(‖x‖)` over a radial grid (≤ 0 when dominated).
pub fn psi_domination_defect(model: &PairPotentialModel, r_max: f64, n: usize) -> f64 {
    (0..=n)
        .map(|k| {
            let r = r_max * k as f64 / n as f64;
            model.coupling.at(r).abs() * (1.0 + r * r) - model.envelope.at(r)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Half-period used when reporting spin differences.
pub const HALF_TURN: f64 = PI;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config_space::Outside;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reference() -> PairPotentialModel {
        PairPotentialModel::reference(1.0, 0.2).unwrap()
    }

    fn brute_energy(model: &PairPotentialModel, cfg: &Configuration) -> f64 {
        let ps = cfg.particles();
        let mut e = 0.0;
        for i in 0..ps.len() {
            for j in i + 1..ps.len() {
                e += model.pair_value_particles(&ps[i], &ps[j]);
            }
        }
        e
    }

    fn random_cfg(rng: &mut ChaCha8Rng, n: usize, half: f64) -> Configuration {
        let mut v = Vec::new();
        for _ in 0..n {
            v.push(MarkedParticle::at(
                rng.random_range(-half..half),
                rng.random_range(-half..half),
                rng.random_range(0.0..TAU),
            ));
        }
        Configuration::new(v).unwrap()
    }

    #[test]
    fn pair_energy_examples() {
        let m = reference();
        let a = MarkedParticle::at(0.0, 0.0, 0.3);
        let b = MarkedParticle::at(1.0, 0.4, 0.3);
        let e = pair_energy(&m, &a, &b).unwrap().value();
        assert!((e - (-(-1.0f64).exp())).abs() < 1e-15);
        assert!((e + 0.3679).abs() < 1e-4);
        let c = MarkedParticle::at(0.1, 0.0, 2.0);
        assert!(pair_energy(&m, &a, &c).unwrap().is_infinite());
        let ideal = PairPotentialModel::ideal_gas();
        assert_eq!(pair_energy(&ideal, &a, &c).unwrap().value(), 0.0);
        assert!(pair_energy(&m, &a, &a).is_err());
    }

    #[test]
    fn energy_examples() {
        let m = reference();
        let one = Configuration::new(vec![MarkedParticle::at(0.0, 0.0, 1.0)]).unwrap();
        assert_eq!(energy(&m, &one).value(), 0.0);
        let a = MarkedParticle::at(0.0, 0.0, 0.3);
        let b = MarkedParticle::at(0.7, -0.2, 1.1);
        let c = MarkedParticle::at(-0.5, 0.9, 4.0);
        let two = Configuration::new(vec![a, b]).unwrap();
        assert_eq!(
            energy(&m, &two).value(),
            pair_energy(&m, &a, &b).unwrap().value()
        );
        let abc = Configuration::new(vec![a, b, c]).unwrap();
        let cab = Configuration::new(vec![c, a, b]).unwrap();
        let direct = pair_energy(&m, &a, &b).unwrap().value()
            + pair_energy(&m, &a, &c).unwrap().value()
            + pair_energy(&m, &b, &c).unwrap().value();
        assert!((energy(&m, &abc).value() - direct).abs() < 1e-15);
        assert!((energy(&m, &cab).value() - direct).abs() < 1e-15);
    }

    #[test]
    fn hamiltonian_examples() {
        let m = reference();
        let w = Window::new(1.0).unwrap();
        let inside = Configuration::new(vec![
            MarkedParticle::at(0.0, 0.0, 0.3),
            MarkedParticle::at(0.5, 0.5, 2.0),
        ])
        .unwrap();
        let outside = Configuration::new(vec![MarkedParticle::at(1.5, 0.0, 0.0)]).unwrap();
        let h0 = hamiltonian(&m, &w, &inside, &Configuration::empty()).unwrap();
        assert_eq!(h0, energy(&m, &inside));
        assert_eq!(
            hamiltonian(&m, &w, &Configuration::empty(), &outside).unwrap(),
            ExtendedEnergy::ZERO
        );
        assert!(hamiltonian(&m, &w, &outside, &inside).is_err());
    }

    #[test]
    fn hamiltonian_matches_endpoint_predicate_enumeration() {
        let m = reference();
        let w = Window::new(1.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let all = random_cfg(&mut rng, 14, 3.0);
            let inside = crate::config_space::restrict(&all, &w);
            let outside = crate::config_space::restrict(&all, &Outside(w));
            let h = hamiltonian(&m, &w, &inside, &outside).unwrap().value();
            let ps = all.particles();
            let mut brute = 0.0;
            for i in 0..ps.len() {
                for j in i + 1..ps.len() {
                    if w.contains(&ps[i].position) || w.contains(&ps[j].position) {
                        brute += m.pair_value_particles(&ps[i], &ps[j]);
                    }
                }
            }
            if brute.is_finite() {
                assert!((h - brute).abs() <= 1e-12 * (1.0 + brute.abs()));
            } else {
                assert!(h.is_infinite());
            }
            // additivity
            let e_all = energy(&m, &all).value();
            let split = energy(&m, &inside).value()
                + energy(&m, &outside).value()
                + interaction(&m, &inside, &outside).unwrap().value();
            if e_all.is_finite() {
                assert!((e_all - split).abs() <= 1e-12 * (1.0 + e_all.abs()));
            } else {
                assert!(split.is_infinite());
            }
        }
    }

    #[test]
    fn interaction_examples() {
        let m = reference();
        let a = MarkedParticle::at(0.0, 0.0, 0.3);
        let b = MarkedParticle::at(0.9, 0.1, 1.0);
        let ca = Configuration::new(vec![a]).unwrap();
        let cb = Configuration::new(vec![b]).unwrap();
        assert_eq!(interaction(&m, &ca, &Configuration::empty()).unwrap(), ExtendedEnergy::ZERO);
        assert_eq!(
            interaction(&m, &ca, &cb).unwrap(),
            pair_energy(&m, &a, &b).unwrap()
        );
        assert!(interaction(&m, &ca, &ca).is_err());
    }

    #[test]
    fn energy_matches_brute_force_and_is_rotation_invariant() {
        let m = reference();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..30 {
            let cfg = random_cfg(&mut rng, 30, 4.0);
            let e = energy(&m, &cfg).value();
            let b = brute_energy(&m, &cfg);
            if b.is_finite() {
                assert!((e - b).abs() < 1e-12 * (1.0 + b.abs()));
                let t: f64 = rng.random_range(0.0..TAU);
                // spin differences are exact under rotation
                assert_eq!(energy(&m, &cfg.rotate_all(t)).value(), e);
            }
        }
    }

    #[test]
    fn superstability_examples() {
        let m = reference();
        assert_eq!(superstability_margin(&m, &Configuration::empty()).unwrap(), 0.0);
        let ss = m.superstability.unwrap();
        let one = Configuration::new(vec![MarkedParticle::at(0.2, 0.1, 0.0)]).unwrap();
        assert!((superstability_margin(&m, &one).unwrap() - (ss.b - ss.a)).abs() < 1e-12);
        assert!(superstability_margin(&PairPotentialModel::ideal_gas(), &one).is_err());
    }

    #[test]
    fn superstability_holds_on_random_sweeps() {
        let m = reference();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut tested = 0;
        while tested < 200 {
            let half = rng.random_range(0.3..2.0);
            let cfg = random_cfg(&mut rng, 10, half);
            if energy(&m, &cfg).is_infinite() {
                continue;
            }
            tested += 1;
            assert!(superstability_margin(&m, &cfg).unwrap() >= 0.0);
        }
        // densely packed aligned square lattice, spacing = hard core
        let mut v = Vec::new();
        for i in 0..15 {
            for j in 0..15 {
                v.push(MarkedParticle::at(i as f64 * 0.2001, j as f64 * 0.2001, 0.0));
            }
        }
        let packed = Configuration::new(v).unwrap();
        assert!(energy(&m, &packed).is_finite());
        assert!(superstability_margin(&m, &packed).unwrap() >= 0.0);
    }

    #[test]
    fn lower_regularity_examples() {
        let m = reference();
        let a = Configuration::new(vec![MarkedParticle::at(0.0, 0.0, 0.0)]).unwrap();
        assert_eq!(lower_regularity_margin(&m, &a, &Configuration::empty()).unwrap(), 0.0);
        let b = Configuration::new(vec![MarkedParticle::at(1.0, 0.0, 0.0)]).unwrap();
        let w = interaction(&m, &a, &b).unwrap().value();
        let expected = w + m.lower_regularity_penalty(1) * (0.5 + 0.5);
        assert!((lower_regularity_margin(&m, &a, &b).unwrap() - expected).abs() < 1e-15);
        assert!(expected >= 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let x = random_cfg(&mut rng, 8, 2.0);
            let (p, q) = crate::config_space::partition(&x, &Window::new(1.0).unwrap());
            assert!(lower_regularity_margin(&m, &p, &q).unwrap() >= -1e-12);
        }
    }

    #[test]
    fn reference_constants() {
        let m = reference();
        // 1 + ψ(0) + ∫ J (1+‖x‖²) = 1 + 1 + 4 + 4 for J₀ = 1 in the sup norm
        assert!((m.c_j - 10.0).abs() < 1e-8, "c_J = {}", m.c_j);
        assert!(m.c_j >= 10.0 - 1e-12);
        assert!((m.psi_s() - 1.0).abs() < 1e-15);
        let full = m.tail_constant(0.0).unwrap();
        assert!((full - 4.0).abs() < 1e-8 && full <= m.c_j);
        // ∫_{‖x‖≥3} e^{-‖x‖²} dx = 4 e^{-9}
        let tail3 = m.tail_constant(3.0).unwrap();
        assert!((tail3 - 4.0 * (-9.0f64).exp()).abs() < 2e-9);
        let mut prev = f64::INFINITY;
        for k in 0..40 {
            let c = m.tail_constant(k as f64 * 0.25).unwrap();
            assert!(c <= prev);
            prev = c;
        }
        assert!(psi_domination_defect(&m, 10.0, 100_000) <= 0.0);
    }

    #[test]
    fn table_coupling_constants() {
        let table = RadialTable::new(vec![0.0, 1.0, 2.0], vec![1.0, 0.5, 0.0]).unwrap();
        let m = PairPotentialModel::new(
            Coupling::Table(table),
            CoreRepulsion::HardCore { radius: 0.1 },
            SpinProfile::NegCos { amplitude: 1.0 },
        )
        .unwrap();
        assert_eq!(m.tail_constant(2.0).unwrap(), 0.0);
        assert_eq!(m.tail_constant(5.0).unwrap(), 0.0);
        assert!(psi_domination_defect(&m, 3.0, 100_000) <= 0.0);
        // ∫ 8t j(t) dt with j = 1 - t/2 on [0,2]: 8(2 - 4/3) = 16/3
        assert!((m.tail_constant(0.0).unwrap() - 16.0 / 3.0).abs() < 1e-8);
        assert!(m.psi_s() > 0.0);
    }

    #[test]
    fn periodic_table_interpolates_cyclically() {
        let t = PeriodicTable::new(vec![0.0, PI], vec![1.0, -1.0]).unwrap();
        assert!((t.at(PI / 2.0) - 0.0).abs() < 1e-15);
        assert!((t.at(3.0 * PI / 2.0) - 0.0).abs() < 1e-15);
        assert!((t.at(-PI / 2.0) - 0.0).abs() < 1e-15);
        assert!((t.at(TAU) - 1.0).abs() < 1e-15);
        let csv = "angle,value\n0,2\n3.141592653589793,0\n";
        let t2 = PeriodicTable::from_csv(csv.as_bytes()).unwrap();
        assert!((t2.at(PI / 2.0) - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn pair_energy_symmetric(x1 in -3.0f64..3.0, y1 in -3.0f64..3.0, x2 in -3.0f64..3.0,
                                 y2 in -3.0f64..3.0, s1 in 0.0f64..TAU, s2 in 0.0f64..TAU) {
            prop_assume!((x1, y1) != (x2, y2));
            let m = reference();
            let a = MarkedParticle::at(x1, y1, s1);
            let b = MarkedParticle::at(x2, y2, s2);
            prop_assert_eq!(pair_energy(&m, &a, &b).unwrap(), pair_energy(&m, &b, &a).unwrap());
        }
    }
}
