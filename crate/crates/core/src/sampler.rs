//! Poisson sampling, a grand-canonical Metropolis–Hastings chain for the
//! finite-volume Gibbs kernel with a fixed exterior configuration, a
//! quadrature reference for tiny windows, and the correlation diagnostic.
//!
//! Random numbers come from ChaCha8 (`rand_chacha`), seeded from a 64-bit
//! seed; independent replicates use distinct ChaCha streams of that seed.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::config_space::{Configuration, MarkedParticle, Point, Region, Spin, Window};
use crate::error::{Error, Result};
use crate::potential::{check_placement, hamiltonian, ExtendedEnergy, PairPotentialModel};
use crate::spatial::{DynamicGrid, NeighborGrid};

/// Proposal probabilities of the four move types.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoveMix {
    pub birth: f64,
    pub death: f64,
    pub translate: f64,
    pub spin_rotate: f64,
}

impl Default for MoveMix {
    fn default() -> Self {
        MoveMix {
            birth: 0.25,
            death: 0.25,
            translate: 0.25,
            spin_rotate: 0.25,
        }
    }
}

impl MoveMix {
    fn validate(&self) -> Result<()> {
        let all = [self.birth, self.death, self.translate, self.spin_rotate];
        if all.iter().any(|p| !(*p >= 0.0)) || ((all.iter().sum::<f64>()) - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "move probabilities must be nonnegative and sum to 1, got {all:?}"
            )));
        }
        if (self.birth > 0.0) != (self.death > 0.0) {
            return Err(Error::InvalidParameter(
                "birth and death must both be enabled or both disabled".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MoveKind {
    Birth,
    Death,
    Translate,
    SpinRotate,
}

impl MoveKind {
    pub const ALL: [MoveKind; 4] = [
        MoveKind::Birth,
        MoveKind::Death,
        MoveKind::Translate,
        MoveKind::SpinRotate,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MoveKind::Birth => "birth",
            MoveKind::Death => "death",
            MoveKind::Translate => "translate",
            MoveKind::SpinRotate => "spin_rotate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerParams {
    /// Activity `z > 0`.
    pub z: f64,
    pub sweeps: usize,
    pub move_mix: MoveMix,
    /// Half-width of the uniform translation proposal.
    pub translate_scale: f64,
    /// Half-width of the uniform spin-rotation proposal (radians).
    pub rotate_scale: f64,
    pub seed: u64,
    /// Fraction of sweeps discarded before the first sample.
    pub burn_in: f64,
    /// Sweeps between consecutive samples.
    pub thin: usize,
    /// Sweeps between full recomputations of the cached energy.
    pub recompute_every: usize,
    /// Offset added to every birth spin. Two chains whose boundaries and
    /// frames differ by the same rotation make identical decisions.
    pub spin_frame: f64,
}

impl Default for SamplerParams {
    fn default() -> Self {
        SamplerParams {
            z: 1.0,
            sweeps: 100,
            move_mix: MoveMix::default(),
            translate_scale: 0.3,
            rotate_scale: 1.0,
            seed: 0,
            burn_in: 0.2,
            thin: 1,
            recompute_every: 50,
            spin_frame: 0.0,
        }
    }
}

impl SamplerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.z > 0.0 && self.z.is_finite()) {
            return Err(Error::InvalidParameter(format!("activity must be positive, got {}", self.z)));
        }
        self.move_mix.validate()?;
        if !(self.translate_scale > 0.0 && self.rotate_scale > 0.0) {
            return Err(Error::InvalidParameter("proposal scales must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(Error::InvalidParameter("burn-in fraction must lie in [0,1)".into()));
        }
        if self.thin == 0 || self.recompute_every == 0 {
            return Err(Error::InvalidParameter("thin and recompute_every must be positive".into()));
        }
        Ok(())
    }

    /// Steps per sweep: `max(1, ⌈z · area⌉)`.
    pub fn sweep_len(&self, window: &Window) -> usize {
        ((self.z * window.area()).ceil() as usize).max(1)
    }
}

/// Metropolis–Hastings acceptance probability of a move.
///
/// `volume` is the measure of the birth proposal region (the window area,
/// or the number of sites in a discretized model) and `n_before` the
/// particle count before the move. Translations and rotations use symmetric
/// proposals.
pub fn acceptance_probability(
    kind: MoveKind,
    delta_energy: f64,
    z: f64,
    volume: f64,
    n_before: usize,
    mix: &MoveMix,
) -> f64 {
    if delta_energy == f64::INFINITY {
        return 0.0;
    }
    let boltzmann = (-delta_energy).exp();
    let ratio = match kind {
        MoveKind::Birth => mix.death / mix.birth * z * volume / (n_before + 1) as f64 * boltzmann,
        MoveKind::Death => mix.birth / mix.death * n_before as f64 / (z * volume) * boltzmann,
        MoveKind::Translate | MoveKind::SpinRotate => boltzmann,
    };
    ratio.min(1.0)
}

/// A Poisson configuration in `window` with uniform spins.
pub fn sample_poisson(window: &Window, z: f64, seed: u64) -> Result<Configuration> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    poisson_with(window, z, &mut rng)
}

pub(crate) fn poisson_with<R: Rng>(window: &Window, z: f64, rng: &mut R) -> Result<Configuration> {
    if !(z >= 0.0 && z.is_finite()) {
        return Err(Error::InvalidParameter(format!("activity must be >= 0, got {z}")));
    }
    let mean = z * window.area();
    if mean == 0.0 {
        return Ok(Configuration::empty());
    }
    let count = Poisson::new(mean)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?
        .sample(rng) as usize;
    let t = window.half_width();
    let mut cfg = Configuration::empty();
    while cfg.len() < count {
        let p = MarkedParticle::new(
            Point::new(rng.random_range(-t..t), rng.random_range(-t..t)),
            Spin::new(rng.random_range(0.0..TAU)),
        );
        // a coincident draw has probability zero; redraw if it happens
        let _ = cfg.push(p);
    }
    Ok(cfg)
}

/// Accepted and proposed counts per move type.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MoveStats {
    pub proposed: BTreeMap<MoveKind, u64>,
    pub accepted: BTreeMap<MoveKind, u64>,
}

impl MoveStats {
    fn record(&mut self, kind: MoveKind, accepted: bool) {
        *self.proposed.entry(kind).or_default() += 1;
        if accepted {
            *self.accepted.entry(kind).or_default() += 1;
        }
    }

    pub fn rate(&self, kind: MoveKind) -> f64 {
        let p = self.proposed.get(&kind).copied().unwrap_or(0);
        if p == 0 {
            return 0.0;
        }
        self.accepted.get(&kind).copied().unwrap_or(0) as f64 / p as f64
    }
}

/// Outcome of one Metropolis–Hastings step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub kind: MoveKind,
    pub accepted: bool,
    pub acceptance: f64,
}

/// Interior configuration, fixed exterior and cached Hamiltonian.
#[derive(Debug, Clone)]
pub struct ChainState {
    window: Window,
    inside: Configuration,
    boundary: Configuration,
    boundary_grid: NeighborGrid,
    grid: DynamicGrid,
    range: f64,
    cached_energy: ExtendedEnergy,
}

impl ChainState {
    pub fn new(
        model: &PairPotentialModel,
        window: Window,
        inside: Configuration,
        boundary: Configuration,
    ) -> Result<Self> {
        check_placement(&window, &inside, &boundary)?;
        let range = model.interaction_range();
        let cached_energy = hamiltonian(model, &window, &inside, &boundary)?;
        if cached_energy.is_infinite() {
            return Err(Error::Precondition(
                "initial state has infinite energy".into(),
            ));
        }
        let t = window.half_width();
        let cell = range.max(1e-3 * t).max(1e-9);
        let mut grid = DynamicGrid::new(Point::new(-t, -t), Point::new(t, t), cell);
        for p in inside.iter() {
            grid.push(&p.position);
        }
        // exterior particles beyond the interaction range never matter
        let reach = t + range;
        let near: Vec<MarkedParticle> = boundary
            .iter()
            .filter(|p| p.position.x.abs() <= reach && p.position.y.abs() <= reach)
            .copied()
            .collect();
        let boundary_grid = NeighborGrid::build(&near, cell);
        Ok(ChainState {
            window,
            inside,
            boundary: Configuration::from_vec_unchecked(near),
            boundary_grid,
            grid,
            range,
            cached_energy,
        })
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn inside(&self) -> &Configuration {
        &self.inside
    }

    /// The exterior particles within interaction range of the window.
    pub fn boundary(&self) -> &Configuration {
        &self.boundary
    }

    pub fn energy(&self) -> ExtendedEnergy {
        self.cached_energy
    }

    /// Recomputes the Hamiltonian from scratch, returning the cache drift.
    pub fn revalidate(&mut self, model: &PairPotentialModel) -> Result<f64> {
        let fresh = hamiltonian(model, &self.window, &self.inside, &self.boundary)?;
        let drift = (fresh.value() - self.cached_energy.value()).abs();
        self.cached_energy = fresh;
        Ok(drift)
    }

    /// Energy of `p` with every interior particle except `skip` and the boundary.
    fn local_energy(&self, model: &PairPotentialModel, p: &MarkedParticle, skip: Option<usize>) -> f64 {
        let mut e = 0.0;
        let ps = self.inside.particles();
        let mut clash = false;
        self.grid.for_each_near(ps, &p.position, self.range, |j| {
            if Some(j) != skip {
                if ps[j].position == p.position {
                    clash = true;
                }
                e += model.pair_value_particles(p, &ps[j]);
            }
        });
        let bs = self.boundary.particles();
        self.boundary_grid
            .for_each_near(bs, &p.position, self.range, |j| {
                e += model.pair_value_particles(p, &bs[j]);
            });
        if clash {
            f64::INFINITY
        } else {
            e
        }
    }
}

/// One Metropolis–Hastings step.
pub fn mcmc_step<R: Rng>(
    state: &mut ChainState,
    model: &PairPotentialModel,
    params: &SamplerParams,
    rng: &mut R,
) -> StepRecord {
    let mix = &params.move_mix;
    let u: f64 = rng.random();
    let kind = if u < mix.birth {
        MoveKind::Birth
    } else if u < mix.birth + mix.death {
        MoveKind::Death
    } else if u < mix.birth + mix.death + mix.translate {
        MoveKind::Translate
    } else {
        MoveKind::SpinRotate
    };
    let n = state.inside.len();
    let volume = state.window.area();
    let t = state.window.half_width();
    let reject = StepRecord {
        kind,
        accepted: false,
        acceptance: 0.0,
    };
    match kind {
        MoveKind::Birth => {
            let p = MarkedParticle::new(
                Point::new(rng.random_range(-t..t), rng.random_range(-t..t)),
                Spin::new(rng.random_range(0.0..TAU)).rotated(params.spin_frame),
            );
            let de = state.local_energy(model, &p, None);
            let a = acceptance_probability(kind, de, params.z, volume, n, mix);
            let accepted = rng.random::<f64>() < a;
            if accepted {
                state.inside.push_unchecked(p);
                state.grid.push(&p.position);
                state.cached_energy += ExtendedEnergy::new(de);
            }
            StepRecord { kind, accepted, acceptance: a }
        }
        MoveKind::Death => {
            if n == 0 {
                return reject;
            }
            let id = rng.random_range(0..n);
            let p = state.inside.particles()[id];
            let de = -state.local_energy(model, &p, Some(id));
            let a = acceptance_probability(kind, de, params.z, volume, n, mix);
            let accepted = rng.random::<f64>() < a;
            if accepted {
                state.inside.swap_remove(id);
                state.grid.swap_remove(id);
                state.cached_energy = ExtendedEnergy::new(state.cached_energy.value() + de);
            }
            StepRecord { kind, accepted, acceptance: a }
        }
        MoveKind::Translate | MoveKind::SpinRotate => {
            if n == 0 {
                return reject;
            }
            let id = rng.random_range(0..n);
            let old = state.inside.particles()[id];
            let new = if kind == MoveKind::Translate {
                let s = params.translate_scale;
                let dx = rng.random_range(-s..s);
                let dy = rng.random_range(-s..s);
                MarkedParticle::new(Point::new(old.position.x + dx, old.position.y + dy), old.spin)
            } else {
                let r = params.rotate_scale;
                MarkedParticle::new(old.position, old.spin.rotated(rng.random_range(-r..r)))
            };
            // consume the acceptance draw on every branch to keep streams aligned
            let draw = rng.random::<f64>();
            if !state.window.contains(&new.position) {
                return reject;
            }
            let de = state.local_energy(model, &new, Some(id)) - state.local_energy(model, &old, Some(id));
            let a = acceptance_probability(kind, de, params.z, volume, n, mix);
            let accepted = draw < a;
            if accepted {
                state.inside.set(id, new);
                if kind == MoveKind::Translate {
                    state.grid.relocate(id, &new.position);
                }
                state.cached_energy = ExtendedEnergy::new(state.cached_energy.value() + de);
            }
            StepRecord { kind, accepted, acceptance: a }
        }
    }
}

/// Samples and diagnostics of one chain.
#[derive(Debug, Clone)]
pub struct GibbsRun {
    pub samples: Vec<Configuration>,
    pub stats: MoveStats,
    /// Cached energy after every sweep.
    pub energy_trace: Vec<f64>,
    /// Largest discrepancy seen between the cache and a full recomputation.
    pub max_cache_drift: f64,
}

/// Runs a chain from the empty interior for `params.sweeps` sweeps; after
/// the burn-in, one sample every `params.thin` sweeps. With zero sweeps the
/// initial state is the only sample.
pub fn sample_gibbs(
    model: &PairPotentialModel,
    window: &Window,
    boundary: &Configuration,
    params: &SamplerParams,
) -> Result<GibbsRun> {
    let rng = ChaCha8Rng::seed_from_u64(params.seed);
    sample_gibbs_with(model, window, boundary, params, Configuration::empty(), rng)
}

/// As [`sample_gibbs`], on ChaCha stream `stream` of the seed.
pub fn sample_gibbs_replicate(
    model: &PairPotentialModel,
    window: &Window,
    boundary: &Configuration,
    params: &SamplerParams,
    stream: u64,
) -> Result<GibbsRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(stream);
    sample_gibbs_with(model, window, boundary, params, Configuration::empty(), rng)
}

pub fn sample_gibbs_with<R: Rng>(
    model: &PairPotentialModel,
    window: &Window,
    boundary: &Configuration,
    params: &SamplerParams,
    initial: Configuration,
    mut rng: R,
) -> Result<GibbsRun> {
    params.validate()?;
    let mut state = ChainState::new(model, *window, initial, boundary.clone())?;
    let mut run = GibbsRun {
        samples: Vec::new(),
        stats: MoveStats::default(),
        energy_trace: Vec::with_capacity(params.sweeps),
        max_cache_drift: 0.0,
    };
    if params.sweeps == 0 {
        run.samples.push(state.inside.clone());
        return Ok(run);
    }
    let burn = (params.burn_in * params.sweeps as f64).floor() as usize;
    let steps = params.sweep_len(window);
    for sweep in 1..=params.sweeps {
        for _ in 0..steps {
            let rec = mcmc_step(&mut state, model, params, &mut rng);
            run.stats.record(rec.kind, rec.accepted);
        }
        if sweep % params.recompute_every == 0 {
            let drift = state.revalidate(model)?;
            let scale = 1.0 + state.cached_energy.value().abs();
            run.max_cache_drift = run.max_cache_drift.max(drift / scale);
        }
        run.energy_trace.push(state.cached_energy.value());
        if sweep > burn && (sweep - burn).is_multiple_of(params.thin) {
            run.samples.push(state.inside.clone());
        }
    }
    Ok(run)
}

/// Resolution of the grids in [`exact_reference`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceGrid {
    /// Midpoint nodes per axis (even, so quadrant edges fall between nodes).
    pub positions: usize,
    /// Spin nodes (a multiple of 4, so spin-quarter edges fall between nodes).
    pub spins: usize,
}

/// Coarse summary of a configuration: sorted (quadrant, spin quarter) codes,
/// one per particle. Its length is the particle count.
pub type ReferenceCategory = Vec<u8>;

/// Category of a configuration in a window centred at the origin.
pub fn reference_category(cfg: &Configuration) -> ReferenceCategory {
    let mut codes: Vec<u8> = cfg
        .iter()
        .map(|p| {
            let quadrant = (p.position.x >= 0.0) as u8 + 2 * (p.position.y >= 0.0) as u8;
            let quarter = ((p.spin.angle() / FRAC_PI_2).floor() as u8).min(3);
            quadrant * 4 + quarter
        })
        .collect();
    codes.sort_unstable();
    codes
}

/// Normalized law over [`ReferenceCategory`] values.
pub type CategoryLaw = BTreeMap<ReferenceCategory, f64>;

/// Poisson mass beyond `kmax` particles allowed by [`exact_reference`].
pub const REFERENCE_TAIL: f64 = 1e-6;

/// Quadrature of the truncated expansion `Σ_{k≤kmax} z^k/k! ∫ e^{−H}` of the
/// partition function, reported as the law of [`reference_category`].
///
/// Each particle ranges over midpoint position nodes × spin nodes. The
/// three-particle term uses grids halved in each direction (it carries a
/// mass of order `(z|Λ|)³/6`).
pub fn exact_reference(
    model: &PairPotentialModel,
    window: &Window,
    boundary: &Configuration,
    z: f64,
    kmax: usize,
    grid: ReferenceGrid,
) -> Result<CategoryLaw> {
    if kmax > 3 {
        return Err(Error::TooLarge(format!("kmax = {kmax} exceeds 3")));
    }
    if grid.positions == 0 || !grid.positions.is_multiple_of(2) || grid.spins == 0 || !grid.spins.is_multiple_of(4) {
        return Err(Error::InvalidParameter(
            "reference grid needs an even position count and a spin count divisible by 4".into(),
        ));
    }
    let mean = z * window.area();
    let mut tail = 1.0;
    let mut term = (-mean).exp();
    for k in 0..=kmax {
        if k > 0 {
            term *= mean / k as f64;
        }
        tail -= term;
    }
    if tail > REFERENCE_TAIL {
        return Err(Error::Precondition(format!(
            "Poisson mass beyond {kmax} particles is {tail:e} > {REFERENCE_TAIL:e}"
        )));
    }
    check_placement(window, &Configuration::empty(), boundary)?;

    let mut law = CategoryLaw::new();
    law.insert(Vec::new(), 1.0);
    for k in 1..=kmax {
        let g = if k == 3 {
            ReferenceGrid {
                positions: (grid.positions / 2).max(2) & !1,
                spins: (grid.spins / 2).max(4) / 4 * 4,
            }
        } else {
            grid
        };
        let states = reference_states(model, window, boundary, g);
        // each state carries weight (|Λ|/G²)(1/S): position cell times spin probability
        let w1 = window.area() / (g.positions * g.positions) as f64 / g.spins as f64;
        let scale = z.powi(k as i32) * w1.powi(k as i32) / factorial(k);
        accumulate(model, &states, k, scale, &mut law);
    }
    let total: f64 = law.values().sum();
    for v in law.values_mut() {
        *v /= total;
    }
    Ok(law)
}

struct RefState {
    particle: MarkedParticle,
    code: u8,
    boundary_energy: f64,
}

fn reference_states(
    model: &PairPotentialModel,
    window: &Window,
    boundary: &Configuration,
    g: ReferenceGrid,
) -> Vec<RefState> {
    let t = window.half_width();
    let h = 2.0 * t / g.positions as f64;
    let mut out = Vec::with_capacity(g.positions * g.positions * g.spins);
    for i in 0..g.positions {
        for j in 0..g.positions {
            let pos = Point::new(-t + (i as f64 + 0.5) * h, -t + (j as f64 + 0.5) * h);
            for s in 0..g.spins {
                let angle = TAU * (s as f64 + 0.5) / g.spins as f64;
                let particle = MarkedParticle::new(pos, Spin::new(angle));
                let boundary_energy: f64 = boundary
                    .iter()
                    .map(|b| model.pair_value_particles(&particle, b))
                    .sum();
                let one = Configuration::from_vec_unchecked(vec![particle]);
                out.push(RefState {
                    particle,
                    code: reference_category(&one)[0],
                    boundary_energy,
                });
            }
        }
    }
    out
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Adds `scale · Σ_{ordered k-tuples} e^{−H}` into `law`. Coincident nodes
/// are included with the pair value at zero displacement, so that the ideal
/// gas factorizes exactly and a hard core removes them.
fn accumulate(model: &PairPotentialModel, states: &[RefState], k: usize, scale: f64, law: &mut CategoryLaw) {
    let m = states.len();
    let pair = |a: &RefState, b: &RefState| {
        model.pair_value(
            a.particle.position.dist(&b.particle.position),
            a.particle.spin.diff(&b.particle.spin),
        )
    };
    let mut add = |codes: &mut Vec<u8>, energy: f64| {
        if energy < f64::INFINITY {
            codes.sort_unstable();
            *law.entry(codes.clone()).or_insert(0.0) += scale * (-energy).exp();
        }
    };
    match k {
        1 => {
            for a in states {
                add(&mut vec![a.code], a.boundary_energy);
            }
        }
        2 => {
            for a in states {
                for b in states {
                    let e = a.boundary_energy + b.boundary_energy + pair(a, b);
                    add(&mut vec![a.code, b.code], e);
                }
            }
        }
        3 => {
            for ia in 0..m {
                let a = &states[ia];
                for ib in 0..m {
                    let b = &states[ib];
                    let eab = a.boundary_energy + b.boundary_energy + pair(a, b);
                    if eab == f64::INFINITY {
                        continue;
                    }
                    for c in states {
                        let e = eab + c.boundary_energy + pair(a, c) + pair(b, c);
                        add(&mut vec![a.code, b.code, c.code], e);
                    }
                }
            }
        }
        _ => unreachable!(),
    }
}

/// Empirical law of [`reference_category`] over samples.
pub fn empirical_category_law(samples: &[Configuration]) -> CategoryLaw {
    let mut law = CategoryLaw::new();
    if samples.is_empty() {
        return law;
    }
    let w = 1.0 / samples.len() as f64;
    for s in samples {
        *law.entry(reference_category(s)).or_insert(0.0) += w;
    }
    law
}

/// `½ Σ |p − q|` over the union of supports.
pub fn total_variation(p: &CategoryLaw, q: &CategoryLaw) -> f64 {
    let mut keys: Vec<&ReferenceCategory> = p.keys().chain(q.keys()).collect();
    keys.sort();
    keys.dedup();
    0.5 * keys
        .into_iter()
        .map(|k| (p.get(k).copied().unwrap_or(0.0) - q.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuelleDiagnostics {
    /// Smallest `ξ` making `E Σ^≠ f ≤ (zξ)^m ∫ f` hold empirically.
    pub xi_hat: f64,
    pub m: usize,
}

/// Estimates `E Σ^≠_{x₁..x_m} f(x₁,…,x_m)` over samples and returns the
/// smallest `ξ̂` with `LHS ≤ (z ξ̂)^m ∫ f`. `integral` is `∫_{Λ^m} f`.
/// Orders `m ≤ 3` are supported (ordered tuples are enumerated).
pub fn correlation_diagnostic<F: Fn(&[Point]) -> f64>(
    samples: &[Configuration],
    z: f64,
    m: usize,
    f: F,
    integral: f64,
) -> Result<RuelleDiagnostics> {
    if m == 0 || m > 3 {
        return Err(Error::InvalidParameter(format!("order m must lie in 1..=3, got {m}")));
    }
    if samples.is_empty() {
        return Err(Error::Precondition("no samples".into()));
    }
    let mut total = 0.0;
    let mut buf = vec![Point::ORIGIN; m];
    for s in samples {
        let ps = s.positions();
        let n = ps.len();
        let mut idx = vec![0usize; m];
        // odometer over ordered tuples of distinct indices
        if n >= m {
            loop {
                let distinct = (0..m).all(|a| (a + 1..m).all(|b| idx[a] != idx[b]));
                if distinct {
                    for (slot, &i) in buf.iter_mut().zip(&idx) {
                        *slot = ps[i];
                    }
                    total += f(&buf);
                }
                let mut pos = 0;
                while pos < m {
                    idx[pos] += 1;
                    if idx[pos] < n {
                        break;
                    }
                    idx[pos] = 0;
                    pos += 1;
                }
                if pos == m {
                    break;
                }
            }
        }
    }
    let lhs = total / samples.len() as f64;
    let xi = if lhs > 0.0 && integral > 0.0 {
        (lhs / (z.powi(m as i32) * integral)).powf(1.0 / m as f64)
    } else {
        f64::MIN_POSITIVE
    };
    Ok(RuelleDiagnostics { xi_hat: xi.max(f64::MIN_POSITIVE), m })
}
