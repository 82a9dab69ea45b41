//! The graphical bond expansion, spin-conditional bond sampling, the
//! dominating Bernoulli measure with its verifiers, and percolation clusters.

use std::collections::VecDeque;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config_space::{Configuration, MarkedParticle, Point, Region, Spin, Window};
use crate::error::{Error, Result};
use crate::potential::PairPotentialModel;
use crate::smoothing::{Side, SignSplitDecomposition, SmoothDecomposition};
use crate::spatial::NeighborGrid;

/// Largest edge set accepted by the exhaustive subset enumerations.
pub const MAX_ENUMERATED_EDGES: usize = 20;
/// Largest edge set accepted by [`exhaustive_domination_check`].
pub const MAX_DOMINATION_EDGES: usize = 4;

/// An unordered pair of particle ids, stored with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Bond {
    pub i: usize,
    pub j: usize,
}

impl Bond {
    pub fn new(a: usize, b: usize) -> Result<Self> {
        if a == b {
            return Err(Error::InvalidParameter(format!("bond joins particle {a} to itself")));
        }
        Ok(Bond {
            i: a.min(b),
            j: a.max(b),
        })
    }
}

/// A set of bonds over a fixed configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BondSet {
    bonds: Vec<Bond>,
}

impl BondSet {
    /// Sorts and deduplicates.
    pub fn new(mut bonds: Vec<Bond>) -> Self {
        bonds.sort_unstable();
        bonds.dedup();
        BondSet { bonds }
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn len(&self) -> usize {
        self.bonds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bonds.is_empty()
    }

    pub fn contains(&self, b: &Bond) -> bool {
        self.bonds.binary_search(b).is_ok()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Bond> {
        self.bonds.iter()
    }
}

/// `E(X, n)`: pairs with `J ≠ 0` and at least one endpoint in the window.
pub fn bond_set(cfg: &Configuration, model: &PairPotentialModel, window: &Window) -> BondSet {
    let range = model.coupling.support();
    let ps = cfg.particles();
    let mut bonds = Vec::new();
    if range == 0.0 || ps.len() < 2 {
        return BondSet::new(bonds);
    }
    let grid = NeighborGrid::build(ps, range);
    grid.for_each_pair(ps, range, |i, j| {
        let touches = window.contains(&ps[i].position) || window.contains(&ps[j].position);
        if touches && model.coupling_between(&ps[i].position, &ps[j].position) != 0.0 {
            bonds.push(Bond { i, j });
        }
    });
    BondSet::new(bonds)
}

/// `p_e = 1 − e^{−|J| v(σ₁−σ₂)}` with the decomposition matching the sign of `J`.
pub fn conditional_bond_probability(
    model: &PairPotentialModel,
    decomp: &SmoothDecomposition,
    y1: &MarkedParticle,
    y2: &MarkedParticle,
) -> Result<f64> {
    let j = model.coupling_between(&y1.position, &y2.position);
    if j == 0.0 {
        return Ok(0.0);
    }
    let wanted = if j > 0.0 { Side::Above } else { Side::Below };
    if decomp.side != wanted {
        return Err(Error::Precondition(format!(
            "coupling {j} needs the {wanted:?} decomposition, got {:?}",
            decomp.side
        )));
    }
    Ok(edge_probability(j.abs() * decomp.v(y1.spin.diff(&y2.spin))))
}

#[inline]
fn edge_probability(w: f64) -> f64 {
    -(-w).exp_m1()
}

/// `Σ_{A⊂E} Π_{e∈A}(e^{w_e} − 1)` against `Π_e e^{w_e}`; returns the relative error.
pub fn expansion_identity_check(weights: &[f64]) -> Result<f64> {
    if weights.len() > MAX_ENUMERATED_EDGES {
        return Err(Error::TooLarge(format!(
            "{} edges exceed the enumeration limit {MAX_ENUMERATED_EDGES}",
            weights.len()
        )));
    }
    let factors: Vec<f64> = weights.iter().map(|w| w.exp_m1()).collect();
    let mut sum = 0.0;
    for mask in 0u32..(1u32 << weights.len()) {
        let mut prod = 1.0;
        for (k, f) in factors.iter().enumerate() {
            if mask & (1 << k) != 0 {
                prod *= f;
            }
        }
        sum += prod;
    }
    let product: f64 = weights.iter().map(|w| w.exp()).product();
    Ok((sum - product).abs() / product.abs())
}

/// Bonds of `E(X, n)` drawn independently with their conditional probabilities.
/// Every `J` must be nonnegative; see [`sample_bonds_signed`] otherwise.
pub fn sample_bonds(
    cfg: &Configuration,
    model: &PairPotentialModel,
    decomp: &SmoothDecomposition,
    window: &Window,
    seed: u64,
) -> Result<(BondSet, Vec<(Bond, f64)>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_bonds_with(cfg, model, window, &mut rng, |y1, y2| {
        conditional_bond_probability(model, decomp, y1, y2)
    })
}

/// As [`sample_bonds`], routing pairs with `J < 0` to the lower decomposition.
pub fn sample_bonds_signed(
    cfg: &Configuration,
    model: &PairPotentialModel,
    split: &SignSplitDecomposition,
    window: &Window,
    seed: u64,
) -> Result<(BondSet, Vec<(Bond, f64)>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_bonds_with(cfg, model, window, &mut rng, |y1, y2| {
        let j = model.coupling_between(&y1.position, &y2.position);
        let d = if j >= 0.0 { &split.plus } else { &split.minus };
        conditional_bond_probability(model, d, y1, y2)
    })
}

/// Draws each bond of `E(X, n)` with probability `prob(y_i, y_j)`; returns the
/// present bonds and every candidate with its probability.
pub fn sample_bonds_with<R: Rng, P>(
    cfg: &Configuration,
    model: &PairPotentialModel,
    window: &Window,
    rng: &mut R,
    prob: P,
) -> Result<(BondSet, Vec<(Bond, f64)>)>
where
    P: Fn(&MarkedParticle, &MarkedParticle) -> Result<f64>,
{
    let candidates = bond_set(cfg, model, window);
    let ps = cfg.particles();
    let mut present = Vec::new();
    let mut table = Vec::with_capacity(candidates.len());
    for b in candidates.iter() {
        let p = prob(&ps[b.i], &ps[b.j])?;
        if rng.random::<f64>() < p {
            present.push(*b);
        }
        table.push((*b, p));
    }
    Ok((BondSet::new(present), table))
}

/// Parameters of the dominating Bernoulli measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominationParams {
    pub epsilon: f64,
}

impl DominationParams {
    /// Checks `c_J ε < 2 c_J z ξ ε < 1`.
    pub fn new(epsilon: f64, c_j: f64, z: f64, xi: f64) -> Result<Self> {
        let lower = c_j * epsilon;
        let upper = 2.0 * c_j * z * xi * epsilon;
        if !(epsilon > 0.0 && epsilon < 1.0 && lower < upper && upper < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon {epsilon} violates c_J eps < 2 c_J z xi eps < 1 (c_J = {c_j}, z = {z}, xi = {xi})"
            )));
        }
        Ok(DominationParams { epsilon })
    }

    /// The largest admissible `ε`, reduced by 10%.
    pub fn default_for(c_j: f64, z: f64, xi: f64) -> Result<Self> {
        if !(2.0 * z * xi > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "need 2 z xi > 1, got z = {z}, xi = {xi}"
            )));
        }
        DominationParams::new(0.9 / (2.0 * c_j * z * xi), c_j, z, xi)
    }
}

/// `ε_e = |J(x₁ − x₂)| ε`.
pub fn bernoulli_probability(
    model: &PairPotentialModel,
    epsilon: f64,
    y1: &MarkedParticle,
    y2: &MarkedParticle,
) -> Result<f64> {
    let e = model.coupling_between(&y1.position, &y2.position).abs() * epsilon;
    if !(0.0..=1.0).contains(&e) {
        return Err(Error::Invariant(format!("bond probability {e} outside [0,1]")));
    }
    Ok(e)
}

/// `ε_e + (ε_e − 1)(e^{J v(σ)} − 1) ≥ 0` on a grid of `spin_grid` spin differences.
pub fn holley_single_bond_check(
    model: &PairPotentialModel,
    decomp: &SmoothDecomposition,
    epsilon: f64,
    pair: (&Point, &Point),
    spin_grid: usize,
) -> bool {
    let j = model.coupling_between(pair.0, pair.1).abs();
    let eps_e = j * epsilon;
    (0..spin_grid).all(|k| {
        let s = TAU * k as f64 / spin_grid as f64;
        eps_e + (eps_e - 1.0) * (j * decomp.v(s)).exp_m1() >= 0.0
    })
}

/// Result of [`exhaustive_domination_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominationVerdict {
    pub passed: bool,
    /// `min_F (π_ε(F) − π_n(F))` over all up-sets `F`.
    pub min_slack: f64,
    pub upsets: usize,
}

/// Tolerance on `π_n(F) ≤ π_ε(F)` for quadrature-based laws.
pub const DOMINATION_SLACK: f64 = -1e-9;

/// Checks `π_n(F) ≤ π_ε(F)` on every up-set `F` of the subset lattice of `E`.
/// `pi[mask]` is the probability of the bond set `mask`.
pub fn exhaustive_domination_check(pi: &[f64], epsilons: &[f64]) -> Result<DominationVerdict> {
    let m = epsilons.len();
    if m > MAX_DOMINATION_EDGES {
        return Err(Error::TooLarge(format!("{m} edges exceed {MAX_DOMINATION_EDGES}")));
    }
    if pi.len() != 1 << m {
        return Err(Error::InvalidParameter(format!(
            "expected {} subset weights, got {}",
            1 << m,
            pi.len()
        )));
    }
    let total: f64 = pi.iter().sum();
    if (total - 1.0).abs() > 1e-9 || pi.iter().any(|p| *p < 0.0) {
        return Err(Error::InvalidParameter(format!("weights are not normalized (sum {total})")));
    }
    let subsets = 1usize << m;
    let bern: Vec<f64> = (0..subsets)
        .map(|mask| {
            (0..m)
                .map(|k| if mask & (1 << k) != 0 { epsilons[k] } else { 1.0 - epsilons[k] })
                .product()
        })
        .collect();
    let mut min_slack = f64::INFINITY;
    let mut upsets = 0;
    for family in 0u64..(1u64 << subsets) {
        let upward = (0..subsets).all(|a| {
            family & (1 << a) == 0 || (0..m).all(|k| family & (1 << (a | (1 << k))) != 0)
        });
        if !upward {
            continue;
        }
        upsets += 1;
        let (mut pn, mut pe) = (0.0, 0.0);
        for a in 0..subsets {
            if family & (1 << a) != 0 {
                pn += pi[a];
                pe += bern[a];
            }
        }
        min_slack = min_slack.min(pe - pn);
    }
    Ok(DominationVerdict {
        passed: min_slack >= DOMINATION_SLACK,
        min_slack,
        upsets,
    })
}

/// `π_n(· | X, Ȳ)` over subsets of `E(X, n)` for a tiny system: the spins of
/// the particles in the window are integrated on a uniform grid of
/// `spin_grid` angles each, the others stay fixed. Returns the edge list
/// and the weights indexed by bitmask over it.
pub fn tiny_bond_law(
    cfg: &Configuration,
    model: &PairPotentialModel,
    decomp: &SmoothDecomposition,
    window: &Window,
    spin_grid: usize,
) -> Result<(Vec<Bond>, Vec<f64>)> {
    let edges = bond_set(cfg, model, window).bonds().to_vec();
    if edges.len() > MAX_DOMINATION_EDGES {
        return Err(Error::TooLarge(format!("{} bonds in a tiny system", edges.len())));
    }
    let free: Vec<usize> = (0..cfg.len())
        .filter(|&i| window.contains(&cfg.particles()[i].position))
        .collect();
    let mut law = vec![0.0; 1 << edges.len()];
    let mut total = 0.0;
    let mut ps = cfg.particles().to_vec();
    spin_grid_walk(&free, spin_grid, &mut ps, &mut |ps| {
        let energy = windowed_energy(model, ps, window);
        if energy == f64::INFINITY {
            return;
        }
        let weight = (-energy).exp();
        total += weight;
        let probs: Vec<f64> = edges
            .iter()
            .map(|b| {
                let j = model.coupling_between(&ps[b.i].position, &ps[b.j].position).abs();
                edge_probability(j * decomp.v(ps[b.i].spin.diff(&ps[b.j].spin)))
            })
            .collect();
        for (mask, slot) in law.iter_mut().enumerate() {
            let mut p = weight;
            for (k, q) in probs.iter().enumerate() {
                p *= if mask & (1 << k) != 0 { *q } else { 1.0 - q };
            }
            *slot += p;
        }
    });
    if total == 0.0 {
        return Err(Error::Precondition("tiny system has zero partition function".into()));
    }
    for v in &mut law {
        *v /= total;
    }
    Ok((edges, law))
}

/// Visits every assignment of grid spins to the particles in `free`.
fn spin_grid_walk<F: FnMut(&[MarkedParticle])>(
    free: &[usize],
    grid: usize,
    ps: &mut [MarkedParticle],
    f: &mut F,
) {
    let mut idx = vec![0usize; free.len()];
    loop {
        for (slot, &i) in idx.iter().zip(free) {
            ps[i].spin = Spin::new(TAU * *slot as f64 / grid as f64);
        }
        f(ps);
        let mut pos = 0;
        while pos < idx.len() {
            idx[pos] += 1;
            if idx[pos] < grid {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
        if pos == idx.len() {
            return;
        }
    }
}

/// Sum of `U` over pairs with an endpoint in the window.
fn windowed_energy(model: &PairPotentialModel, ps: &[MarkedParticle], window: &Window) -> f64 {
    let mut e = 0.0;
    for i in 0..ps.len() {
        for j in i + 1..ps.len() {
            if window.contains(&ps[i].position) || window.contains(&ps[j].position) {
                e += model.pair_value_particles(&ps[i], &ps[j]);
            }
        }
    }
    e
}

/// Union-find with path halving and union by rank.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Percolation clusters of `(X, A)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDecomposition {
    /// Cluster index of each particle; clusters are numbered by smallest member.
    pub labels: Vec<usize>,
    pub members: Vec<Vec<usize>>,
    /// Largest sup-norm over each cluster.
    pub max_norm: Vec<f64>,
}

impl ClusterDecomposition {
    /// `r_{A,X}(x)`: the largest norm in the cluster of particle `id`.
    pub fn range_of(&self, id: usize) -> f64 {
        self.max_norm[self.labels[id]]
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

pub fn clusters(cfg: &Configuration, bonds: &BondSet) -> Result<ClusterDecomposition> {
    let n = cfg.len();
    let mut uf = UnionFind::new(n);
    for b in bonds.iter() {
        if b.j >= n {
            return Err(Error::InvalidParameter(format!(
                "bond ({}, {}) references a particle outside 0..{n}",
                b.i, b.j
            )));
        }
        uf.union(b.i, b.j);
    }
    let mut label_of_root = vec![usize::MAX; n];
    let mut labels = vec![0; n];
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut max_norm: Vec<f64> = Vec::new();
    for (i, p) in cfg.iter().enumerate() {
        let r = uf.find(i);
        if label_of_root[r] == usize::MAX {
            label_of_root[r] = members.len();
            members.push(Vec::new());
            max_norm.push(0.0);
        }
        let l = label_of_root[r];
        labels[i] = l;
        members[l].push(i);
        max_norm[l] = max_norm[l].max(p.position.norm());
    }
    Ok(ClusterDecomposition {
        labels,
        members,
        max_norm,
    })
}

/// Breadth-first connected components, numbered by smallest member.
pub fn bfs_components(n: usize, bonds: &BondSet) -> Vec<usize> {
    let mut adj = vec![Vec::new(); n];
    for b in bonds.iter() {
        adj[b.i].push(b.j);
        adj[b.j].push(b.i);
    }
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        label[s] = next;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if label[v] == usize::MAX {
                    label[v] = next;
                    queue.push_back(v);
                }
            }
        }
        next += 1;
    }
    label
}

/// `r_{A,X}(Λ) = max { r_{A,X}(x) : x ∈ Λ ∩ X }`, zero if the window holds no particle.
pub fn cluster_range(cfg: &Configuration, clusters: &ClusterDecomposition, window: &Window) -> f64 {
    cfg.iter()
        .enumerate()
        .filter(|(_, p)| window.contains(&p.position))
        .map(|(i, _)| clusters.range_of(i))
        .fold(0.0, f64::max)
}

/// Truncated path sum bounding the Bernoulli connection probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainBound {
    /// `Σ_{m ≤ L} Σ^≠ ε^m Π J` over self-avoiding paths from `x₁` to `x₂`.
    pub truncated: f64,
    /// Bound on the paths longer than `L`: `s^{L+1}/(1−s)` with
    /// `s = ε max_i Σ_j |J_ij|`, or `+∞` when `s ≥ 1`.
    pub tail: f64,
}

impl ChainBound {
    pub fn total(&self) -> f64 {
        self.truncated + self.tail
    }
}

pub fn chain_bound(
    cfg: &Configuration,
    model: &PairPotentialModel,
    epsilon: f64,
    x1: usize,
    x2: usize,
    max_len: usize,
) -> Result<ChainBound> {
    let n = cfg.len();
    if x1 >= n || x2 >= n || x1 == x2 {
        return Err(Error::InvalidParameter(format!("bad endpoints {x1}, {x2}")));
    }
    let ps = cfg.particles();
    let w: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        epsilon * model.coupling_between(&ps[i].position, &ps[j].position).abs()
                    }
                })
                .collect()
        })
        .collect();
    let mut visited = vec![false; n];
    visited[x1] = true;
    let truncated = path_sum(&w, x1, x2, max_len, &mut visited);
    let s = w.iter().map(|row| row.iter().sum::<f64>()).fold(0.0, f64::max);
    let tail = if s < 1.0 {
        s.powi(max_len as i32 + 1) / (1.0 - s)
    } else {
        f64::INFINITY
    };
    Ok(ChainBound { truncated, tail })
}

fn path_sum(w: &[Vec<f64>], at: usize, target: usize, budget: usize, visited: &mut [bool]) -> f64 {
    if budget == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for next in 0..w.len() {
        if visited[next] || w[at][next] == 0.0 {
            continue;
        }
        if next == target {
            total += w[at][next];
            continue;
        }
        visited[next] = true;
        total += w[at][next] * path_sum(w, next, target, budget - 1, visited);
        visited[next] = false;
    }
    total
}

/// Exact probability that `x₁ ↔ x₂` under independent bonds with
/// probabilities `ε|J|` on all pairs with `J ≠ 0` (at most 20 such pairs).
pub fn bernoulli_connection_probability(
    cfg: &Configuration,
    model: &PairPotentialModel,
    epsilon: f64,
    x1: usize,
    x2: usize,
) -> Result<f64> {
    let ps = cfg.particles();
    let mut edges = Vec::new();
    for i in 0..ps.len() {
        for j in i + 1..ps.len() {
            let p = epsilon * model.coupling_between(&ps[i].position, &ps[j].position).abs();
            if p > 0.0 {
                edges.push((i, j, p));
            }
        }
    }
    if edges.len() > MAX_ENUMERATED_EDGES {
        return Err(Error::TooLarge(format!("{} edges", edges.len())));
    }
    let mut total = 0.0;
    for mask in 0u32..(1 << edges.len()) {
        let mut uf = UnionFind::new(ps.len());
        let mut prob = 1.0;
        for (k, &(i, j, p)) in edges.iter().enumerate() {
            if mask & (1 << k) != 0 {
                prob *= p;
                uf.union(i, j);
            } else {
                prob *= 1.0 - p;
            }
        }
        if uf.find(x1) == uf.find(x2) {
            total += prob;
        }
    }
    Ok(total)
}

/// `‖x_m − x_0‖² ≤ m Π_i (‖x_i − x_{i−1}‖² + 1)` for a chain of points.
pub fn path_inequality_holds(chain: &[Point]) -> bool {
    if chain.len() < 2 {
        return true;
    }
    let m = (chain.len() - 1) as f64;
    let lhs = chain[chain.len() - 1].dist(&chain[0]).powi(2);
    let rhs: f64 = chain
        .windows(2)
        .map(|w| w[1].dist(&w[0]).powi(2) + 1.0)
        .product::<f64>()
        * m;
    lhs <= rhs
}

/// An event on the spins and positions of the particles in the window.
pub type TinyEvent<'a> = &'a dyn Fn(&[MarkedParticle]) -> bool;

/// Poisson mass beyond two particles tolerated by [`decomposition_identity_check`].
pub const DOMINANCE_TAIL: f64 = 1e-3;

/// Grid resolution of [`decomposition_identity_check`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityGrid {
    pub positions: usize,
    pub spins: usize,
}

/// Both sides of the decomposition of the Gibbs law into position marginal,
/// bond law `π_n` and conditional spin law `α_n`, for configurations of at
/// most two particles in the window, evaluated on each event. Returns the
/// largest absolute discrepancy.
///
/// Left: `Σ_k z^k/k! ∫dx ∫dσ 1_D e^{−H}` / Z. Right: for every position
/// tuple, `Z_X/Z · Σ_A π_n(A|X) α_n(D|A,X)` with
/// `π_n(A|X) = ∫dσ 𝒱_n(A)/Z_X`, `α_n(D|A,X) = ∫dσ 1_D 𝒱_n(A) / ∫dσ 𝒱_n(A)`
/// and `𝒱_n(A) = e^{−H^Ū} Π_{e∈A}(e^{J v} − 1)`.
#[allow(clippy::too_many_arguments)]
pub fn decomposition_identity_check(
    model: &PairPotentialModel,
    decomp: &SmoothDecomposition,
    window: &Window,
    boundary: &Configuration,
    z: f64,
    grid: IdentityGrid,
    events: &[TinyEvent<'_>],
) -> Result<f64> {
    if !model.coupling.is_nonnegative() {
        return Err(Error::Precondition("identity check needs J >= 0".into()));
    }
    let mean = z * window.area();
    let kept = (-mean).exp() * (1.0 + mean + mean * mean / 2.0);
    if 1.0 - kept > DOMINANCE_TAIL {
        return Err(Error::Precondition(format!(
            "Poisson mass beyond two particles is {:e} > {DOMINANCE_TAIL:e}",
            1.0 - kept
        )));
    }
    if let Some(i) = boundary.iter().position(|p| window.contains(&p.position)) {
        return Err(Error::Precondition(format!("boundary particle {i} lies inside the window")));
    }
    let smooth = model.with_spin(decomp.smooth_profile());
    let t = window.half_width();
    let h = 2.0 * t / grid.positions as f64;
    let nodes: Vec<Point> = (0..grid.positions * grid.positions)
        .map(|k| {
            let (i, j) = (k % grid.positions, k / grid.positions);
            Point::new(-t + (i as f64 + 0.5) * h, -t + (j as f64 + 0.5) * h)
        })
        .collect();
    let cell = h * h;
    let spin_w = 1.0 / grid.spins as f64;

    let ne = events.len();
    let mut left = vec![0.0; ne];
    let mut right = vec![0.0; ne];
    let mut z_total = 0.0;
    let b = boundary.particles();

    let mut position_sets: Vec<(Vec<Point>, f64)> = vec![(Vec::new(), 1.0)];
    for p in &nodes {
        position_sets.push((vec![*p], z * cell));
    }
    for p in &nodes {
        for q in &nodes {
            // ordered pairs with the 1/2! of the expansion
            position_sets.push((vec![*p, *q], z * z * cell * cell / 2.0));
        }
    }

    for (positions, pos_weight) in &position_sets {
        let k = positions.len();
        let mut ps: Vec<MarkedParticle> = positions
            .iter()
            .map(|x| MarkedParticle::new(*x, Spin::new(0.0)))
            .chain(b.iter().copied())
            .collect();
        let cfg = Configuration::from_vec_unchecked(ps.clone());
        let edges = bond_set(&cfg, model, window).bonds().to_vec();
        if edges.len() > MAX_ENUMERATED_EDGES {
            return Err(Error::TooLarge(format!("{} bonds", edges.len())));
        }
        let nsub = 1usize << edges.len();
        // per bond set A: ∫ 𝒱_n(A) and ∫ 1_D 𝒱_n(A)
        let mut v_a = vec![0.0; nsub];
        let mut v_ad = vec![vec![0.0; ne]; nsub];
        let mut z_x = 0.0;
        let mut lx = vec![0.0; ne];
        let free: Vec<usize> = (0..k).collect();
        let sw = spin_w.powi(k as i32);
        spin_grid_walk(&free, grid.spins, &mut ps, &mut |ps| {
            let full = windowed_energy_unchecked(model, ps, k);
            if full == f64::INFINITY {
                return;
            }
            let gibbs = sw * (-full).exp();
            z_x += gibbs;
            let inside = &ps[..k];
            let hits: Vec<bool> = events.iter().map(|e| e(inside)).collect();
            for (d, hit) in hits.iter().enumerate() {
                if *hit {
                    lx[d] += gibbs;
                }
            }
            let base = sw * (-windowed_energy_unchecked(&smooth, ps, k)).exp();
            let factors: Vec<f64> = edges
                .iter()
                .map(|e| {
                    let j = model.coupling_between(&ps[e.i].position, &ps[e.j].position);
                    (j * decomp.v(ps[e.i].spin.diff(&ps[e.j].spin))).exp_m1()
                })
                .collect();
            for mask in 0..nsub {
                let mut w = base;
                for (kk, f) in factors.iter().enumerate() {
                    if mask & (1 << kk) != 0 {
                        w *= f;
                    }
                }
                v_a[mask] += w;
                for (d, hit) in hits.iter().enumerate() {
                    if *hit {
                        v_ad[mask][d] += w;
                    }
                }
            }
        });
        z_total += pos_weight * z_x;
        for d in 0..ne {
            left[d] += pos_weight * lx[d];
        }
        if z_x > 0.0 {
            for mask in 0..nsub {
                if v_a[mask] == 0.0 {
                    continue;
                }
                let pi = v_a[mask] / z_x;
                for d in 0..ne {
                    right[d] += pos_weight * z_x * pi * (v_ad[mask][d] / v_a[mask]);
                }
            }
        }
    }
    let mut worst = 0.0f64;
    for d in 0..ne {
        worst = worst.max((left[d] / z_total - right[d] / z_total).abs());
    }
    Ok(worst)
}

/// Windowed energy where the first `k` particles are the inside ones; pairs
/// of coincident inside nodes use the pair value at zero displacement.
fn windowed_energy_unchecked(model: &PairPotentialModel, ps: &[MarkedParticle], k: usize) -> f64 {
    let mut e = 0.0;
    for i in 0..k {
        for j in i + 1..ps.len() {
            e += model.pair_value_particles(&ps[i], &ps[j]);
        }
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smoothing::smooth_decompose;
    use crate::potential::SpinProfile;

    fn reference() -> PairPotentialModel {
        PairPotentialModel::reference(1.0, 0.2).unwrap()
    }

    #[test]
    fn bond_set_examples() {
        let m = reference();
        let w = Window::new(1.0).unwrap();
        let two_out = Configuration::new(vec![
            MarkedParticle::at(3.0, 3.0, 0.0),
            MarkedParticle::at(3.5, 3.0, 0.0),
        ])
        .unwrap();
        assert!(bond_set(&two_out, &m, &w).is_empty());
        let far = Configuration::new(vec![
            MarkedParticle::at(0.0, 0.0, 0.0),
            MarkedParticle::at(7.0, 0.0, 0.0),
        ])
        .unwrap();
        assert!(bond_set(&far, &m, &w).is_empty());
        let mixed = Configuration::new(vec![
            MarkedParticle::at(0.0, 0.0, 0.0),
            MarkedParticle::at(2.0, 0.0, 0.0),
        ])
        .unwrap();
        assert_eq!(bond_set(&mixed, &m, &w).bonds(), &[Bond { i: 0, j: 1 }]);
    }

    #[test]
    fn conditional_probability_examples() {
        assert!((edge_probability(0.05) - 0.048771).abs() < 1e-6);
        assert_eq!(edge_probability(0.0), 0.0);
        let m = reference();
        let d = smooth_decompose(&SpinProfile::NegCos { amplitude: 1.0 }, 0.1).unwrap();
        let a = MarkedParticle::at(0.0, 0.0, 0.0);
        let b = MarkedParticle::at(0.5, 0.0, 1.0);
        let p = conditional_bond_probability(&m, &d, &a, &b).unwrap();
        let jv = (-0.25f64).exp() * d.v(-1.0);
        assert!((p - (1.0 - (-jv).exp())).abs() < 1e-15);
        assert!(p <= bernoulli_probability(&m, 0.1, &a, &b).unwrap());
    }

    #[test]
    fn expansion_identity_examples() {
        assert_eq!(expansion_identity_check(&[]).unwrap(), 0.0);
        assert!(expansion_identity_check(&[0.3, 0.7]).unwrap() <= 1e-12);
        assert!(expansion_identity_check(&[0.1; 21]).is_err());
    }

    #[test]
    fn holley_examples() {
        let bracket = |e: f64, w: f64| e + (e - 1.0) * w.exp_m1();
        assert_eq!(bracket(1.0, 0.7), 1.0);
        assert!((bracket(0.5, 0.3) - 0.3250706).abs() < 1e-6);
        for k in 1..=1000 {
            let e = k as f64 / 1000.0;
            assert!(bracket(e, e) >= 0.0);
        }
    }

    #[test]
    fn domination_examples() {
        let eps = [0.3, 0.2];
        let bern: Vec<f64> = (0..4)
            .map(|m: usize| {
                (0..2)
                    .map(|k| if m & (1 << k) != 0 { eps[k] } else { 1.0 - eps[k] })
                    .product()
            })
            .collect();
        let v = exhaustive_domination_check(&bern, &eps).unwrap();
        assert!(v.passed && v.min_slack.abs() < 1e-15);
        assert_eq!(v.upsets, 6);
        let point = [1.0, 0.0, 0.0, 0.0];
        assert!(exhaustive_domination_check(&point, &eps).unwrap().passed);
        let top = [0.0, 0.0, 0.0, 1.0];
        assert!(!exhaustive_domination_check(&top, &eps).unwrap().passed);
        assert!(exhaustive_domination_check(&[0.5, 0.1, 0.0, 0.0], &eps).is_err());
        let four = vec![1.0 / 16.0; 16];
        assert_eq!(exhaustive_domination_check(&four, &[0.5; 4]).unwrap().upsets, 168);
    }

    #[test]
    fn cluster_examples() {
        let cfg = Configuration::new(vec![
            MarkedParticle::at(0.0, 0.0, 0.0),
            MarkedParticle::at(1.0, 0.0, 0.0),
            MarkedParticle::at(2.0, 0.0, 0.0),
        ])
        .unwrap();
        let none = clusters(&cfg, &BondSet::default()).unwrap();
        assert_eq!(none.len(), 3);
        let chain = BondSet::new(vec![Bond::new(0, 1).unwrap(), Bond::new(2, 1).unwrap()]);
        assert_eq!(clusters(&cfg, &chain).unwrap().len(), 1);
        let dangling = BondSet::new(vec![Bond::new(0, 5).unwrap()]);
        assert!(clusters(&cfg, &dangling).is_err());
    }

    #[test]
    fn cluster_range_examples() {
        let w = Window::new(1.5).unwrap();
        let outside = Configuration::new(vec![MarkedParticle::at(3.0, 0.0, 0.0)]).unwrap();
        let c = clusters(&outside, &BondSet::default()).unwrap();
        assert_eq!(cluster_range(&outside, &c, &w), 0.0);
        let single = Configuration::new(vec![MarkedParticle::at(0.5, -1.0, 0.0)]).unwrap();
        let c = clusters(&single, &BondSet::default()).unwrap();
        assert_eq!(cluster_range(&single, &c, &w), 1.0);
        let pair = Configuration::new(vec![
            MarkedParticle::at(1.0, 0.0, 0.0),
            MarkedParticle::at(0.0, 7.0, 0.0),
        ])
        .unwrap();
        let c = clusters(&pair, &BondSet::new(vec![Bond::new(0, 1).unwrap()])).unwrap();
        assert_eq!(cluster_range(&pair, &c, &w), 7.0);
    }

    #[test]
    fn chain_bound_examples() {
        let ideal = PairPotentialModel::ideal_gas();
        let cfg = Configuration::new(vec![
            MarkedParticle::at(0.0, 0.0, 0.0),
            MarkedParticle::at(1.0, 0.0, 0.0),
        ])
        .unwrap();
        assert_eq!(chain_bound(&cfg, &ideal, 0.1, 0, 1, 5).unwrap().total(), 0.0);
        let m = reference();
        let b = chain_bound(&cfg, &m, 0.1, 0, 1, 5).unwrap();
        assert!((b.truncated - 0.1 * (-1.0f64).exp()).abs() < 1e-15);
        let tri = Configuration::new(vec![
            MarkedParticle::at(0.0, 0.0, 0.0),
            MarkedParticle::at(1.0, 0.0, 0.0),
            MarkedParticle::at(0.5, 0.8, 0.0),
        ])
        .unwrap();
        let exact = bernoulli_connection_probability(&tri, &m, 0.5, 0, 1).unwrap();
        assert!(chain_bound(&tri, &m, 0.5, 0, 1, 2).unwrap().truncated >= exact);
    }

    #[test]
    fn path_inequality_examples() {
        let chain = [Point::new(0.0, 0.0), Point::new(3.0, 0.0), Point::new(6.0, 0.0)];
        assert!(path_inequality_holds(&chain));
    }
}
