//! Self-contained verifiers. Each returns a [`Check`]; the lemma suite and
//! the acceptance tests share them.

use std::f64::consts::{PI, TAU};

use mwgibbs_core::bonds::{
    bernoulli_connection_probability, bernoulli_probability, bfs_components, chain_bound, clusters,
    conditional_bond_probability, decomposition_identity_check, exhaustive_domination_check,
    expansion_identity_check, path_inequality_holds, tiny_bond_law, Bond, BondSet, IdentityGrid, TinyEvent,
    DOMINATION_SLACK,
};
use mwgibbs_core::config_space::{Configuration, MarkedParticle, Point, Window};
use mwgibbs_core::deformation::{q, q_primitive, tau_n, taper_square_integral, TaperParams};
use mwgibbs_core::potential::{Coupling, CoreRepulsion, PairPotentialModel, PeriodicTable, RadialTable, SpinProfile};
use mwgibbs_core::quadrature::adaptive_simpson;
use mwgibbs_core::sampler::{
    acceptance_probability, empirical_category_law, exact_reference, sample_gibbs, total_variation, MoveKind,
    MoveMix, ReferenceGrid, SamplerParams,
};
use mwgibbs_core::smoothing::{second_derivative_sup, smooth_decompose, SmoothDecomposition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

use crate::report::{timed, Check};
use crate::Result;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_cfg(rng: &mut ChaCha8Rng, n: usize, half: f64) -> Result<Configuration> {
    let ps = (0..n)
        .map(|_| {
            MarkedParticle::at(
                rng.random_range(-half..half),
                rng.random_range(-half..half),
                rng.random_range(0.0..TAU),
            )
        })
        .collect();
    Ok(Configuration::new(ps)?)
}

/// Subset sum against product for `vectors` random weight vectors of at most `max_edges` entries.
pub fn expansion_identity(seed: u64, vectors: usize, max_edges: usize) -> Check {
    const NAME: &str = "expansion identity";
    timed(NAME, || -> Result<Check> {
        let mut r = rng(seed);
        let mut worst = 0.0f64;
        for _ in 0..vectors {
            let k = r.random_range(0..=max_edges);
            let w: Vec<f64> = (0..k).map(|_| r.random_range(0.0..1.0)).collect();
            worst = worst.max(expansion_identity_check(&w)?);
        }
        Ok(Check::at_most(NAME, worst, 1e-10).with_details(json!({ "vectors": vectors, "max_edges": max_edges })))
    })
}

/// Violations of the smoothing contract on a 4096-point grid: exact
/// reconstruction, `0 < v < ε`, and `‖V̄″‖ ≤ 2δ‖f_δ″‖‖V‖`.
pub fn smoothing_contract(profiles: &[(&str, SpinProfile)], epsilon: f64) -> Check {
    const NAME: &str = "smoothing contract";
    timed(NAME, || -> Result<Check> {
        let mut violations = 0usize;
        let mut rows = Vec::new();
        for (label, v) in profiles {
            let d = smooth_decompose(v, epsilon)?;
            let (lo, hi, recon) = d.grid_summary(4096);
            let sup = second_derivative_sup(&d)?;
            let ok = [recon <= 1e-10, lo > 0.0, hi < epsilon, sup <= d.theoretical_bound + 1e-8];
            violations += ok.iter().filter(|b| !**b).count();
            rows.push(json!({
                "profile": label, "delta": d.delta, "min_v": lo, "max_v": hi, "reconstruction": recon,
                "vbar_second_sup": sup, "bound": d.theoretical_bound,
            }));
        }
        Ok(Check::at_most(NAME, violations as f64, 0.0).with_details(json!({ "epsilon": epsilon, "profiles": rows })))
    })
}

/// `−cos` and two continuous tabulated profiles.
pub fn standard_profiles() -> Result<Vec<(&'static str, SpinProfile)>> {
    let triangle = PeriodicTable::new(vec![0.0, PI], vec![-1.0, 1.0])?;
    let bumpy = PeriodicTable::sampled(|s| (s.sin() * 2.0).cos() - 0.3 * (3.0 * s).sin().abs(), 48)?;
    Ok(vec![
        ("negcos", SpinProfile::NegCos { amplitude: 1.0 }),
        ("triangle", SpinProfile::Table(triangle)),
        ("bumpy", SpinProfile::Table(bumpy)),
    ])
}

/// `p_e ≤ ε_e` on random pairs closer than `reach`.
pub fn pointwise_domination(
    model: &PairPotentialModel,
    decomp: &SmoothDecomposition,
    epsilon: f64,
    draws: usize,
    seed: u64,
) -> Check {
    const NAME: &str = "pointwise domination";
    timed(NAME, || -> Result<Check> {
        let mut r = rng(seed);
        let reach = model.coupling.support().clamp(0.5, 3.0);
        let mut violations = 0usize;
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..draws {
            let pair = random_cfg(&mut r, 2, reach / 2.0)?;
            let (a, b) = (&pair.particles()[0], &pair.particles()[1]);
            let p = conditional_bond_probability(model, decomp, a, b)?;
            let e = bernoulli_probability(model, epsilon, a, b)?;
            worst = worst.max(p - e);
            violations += (p > e || p < 0.0) as usize;
        }
        Ok(Check::at_most(NAME, violations as f64, 0.0).with_details(json!({ "draws": draws, "max_excess": worst })))
    })
}

/// A tiny system: model, configuration and window with at most four bonds.
pub type TinySystem = (PairPotentialModel, Configuration, Window);

/// Short-range table coupling, so that tiny systems have few bonds.
pub fn short_range_model() -> Result<PairPotentialModel> {
    let j = RadialTable::new(vec![0.0, 2.0, 4.0], vec![1.0, 0.6, 0.0])?;
    Ok(PairPotentialModel::new(
        Coupling::Table(j),
        CoreRepulsion::HardCore { radius: 0.2 },
        SpinProfile::NegCos { amplitude: 1.0 },
    )?)
}

/// Two- and three-particle systems for `model`, plus a four-bond system of
/// the short-range table model when `model` has the same spin profile.
pub fn tiny_systems(model: &PairPotentialModel) -> Result<Vec<TinySystem>> {
    let at = MarkedParticle::at;
    let w1 = Window::new(1.0)?;
    let mut out = vec![
        (model.clone(), Configuration::new(vec![at(0.0, 0.0, 0.0), at(0.5, 0.0, 0.0)])?, w1),
        (model.clone(), Configuration::new(vec![at(0.0, 0.0, 0.0), at(0.6, 0.0, 0.0), at(0.3, 0.5, 0.0)])?, w1),
        (model.clone(), Configuration::new(vec![at(-0.5, 0.0, 0.0), at(0.5, 0.0, 0.0), at(1.4, 0.0, 2.0)])?, w1),
    ];
    let short = short_range_model()?;
    if let (SpinProfile::NegCos { amplitude: a }, SpinProfile::NegCos { amplitude: 1.0 }) = (&model.spin, &short.spin) {
        if *a == 1.0 {
            let cfg = Configuration::new(vec![at(0.0, 0.0, 0.0), at(3.0, 0.0, 0.0), at(6.0, 0.0, 0.0), at(6.0, 3.0, 0.0)])?;
            out.push((short, cfg, Window::new(10.0)?));
        }
    }
    Ok(out)
}

/// `π_n ≤ π_ε` on every up-set of every tiny system, by spin quadrature.
pub fn exhaustive_domination(systems: &[TinySystem], decomp: &SmoothDecomposition, epsilon: f64) -> Check {
    const NAME: &str = "exhaustive domination";
    timed(NAME, || -> Result<Check> {
        let mut min_slack = f64::INFINITY;
        let mut upsets = 0usize;
        let mut edges_seen = Vec::new();
        for (model, cfg, w) in systems {
            let grid = if cfg.len() > 3 { 24 } else { 32 };
            let (edges, law) = tiny_bond_law(cfg, model, decomp, w, grid)?;
            let eps: Vec<f64> = edges
                .iter()
                .map(|b| bernoulli_probability(model, epsilon, &cfg.particles()[b.i], &cfg.particles()[b.j]))
                .collect::<std::result::Result<_, _>>()?;
            let v = exhaustive_domination_check(&law, &eps)?;
            min_slack = min_slack.min(v.min_slack);
            upsets += v.upsets;
            edges_seen.push(edges.len());
        }
        Ok(Check::at_least(NAME, min_slack, DOMINATION_SLACK)
            .with_details(json!({ "systems": systems.len(), "edges": edges_seen, "upsets": upsets })))
    })
}

/// Union-find labels against breadth-first search on random graphs.
pub fn union_find_matches_bfs(graphs: usize, seed: u64) -> Check {
    const NAME: &str = "union-find vs BFS";
    timed(NAME, || -> Result<Check> {
        let mut r = rng(seed);
        let mut mismatches = 0usize;
        for _ in 0..graphs {
            let n = r.random_range(1..40);
            let cfg = random_cfg(&mut r, n, 5.0)?;
            let p = r.random_range(0.0..0.2);
            let mut bonds = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if r.random::<f64>() < p {
                        bonds.push(Bond::new(i, j)?);
                    }
                }
            }
            let set = BondSet::new(bonds);
            mismatches += (clusters(&cfg, &set)?.labels != bfs_components(n, &set)) as usize;
        }
        Ok(Check::at_most(NAME, mismatches as f64, 0.0).with_details(json!({ "graphs": graphs })))
    })
}

/// The truncated path sum dominates the exact Bernoulli connection
/// probability on random instances with at most ten bonds.
pub fn chain_bound_dominates(models: &[PairPotentialModel], instances: usize, seed: u64) -> Check {
    const NAME: &str = "chain bound";
    timed(NAME, || -> Result<Check> {
        let mut r = rng(seed);
        let mut violations = 0usize;
        let mut checked = 0usize;
        let mut min_gap = f64::INFINITY;
        while checked < instances {
            let m = &models[checked % models.len()];
            let n = r.random_range(3..=5);
            let cfg = random_cfg(&mut r, n, 3.0)?;
            let ps = cfg.particles();
            let edges = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .filter(|&(i, j)| m.coupling_between(&ps[i].position, &ps[j].position) != 0.0)
                .count();
            if edges > 10 {
                continue;
            }
            let eps = r.random_range(0.01..0.09);
            let exact = bernoulli_connection_probability(&cfg, m, eps, 0, 1)?;
            let bound = chain_bound(&cfg, m, eps, 0, 1, n)?;
            min_gap = min_gap.min(bound.truncated - exact);
            violations += (bound.truncated < exact - 1e-15) as usize;
            checked += 1;
        }
        Ok(Check::at_most(NAME, violations as f64, 0.0).with_details(json!({ "instances": instances, "min_gap": min_gap })))
    })
}

/// `‖x_m − x_0‖² ≤ m Π(‖x_i − x_{i−1}‖² + 1)` on random chains.
pub fn path_inequality(chains: usize, seed: u64) -> Check {
    const NAME: &str = "path inequality";
    timed(NAME, || -> Result<Check> {
        let mut r = rng(seed);
        let mut violations = 0usize;
        for _ in 0..chains {
            let len = r.random_range(2..12);
            let scale = r.random_range(0.01..5.0);
            let chain: Vec<Point> = (0..len)
                .map(|_| Point::new(r.random_range(-scale..scale), r.random_range(-scale..scale)))
                .collect();
            violations += !path_inequality_holds(&chain) as usize;
        }
        Ok(Check::at_most(NAME, violations as f64, 0.0).with_details(json!({ "chains": chains })))
    })
}

/// `0 ≤ τ_n(x) − τ_n(x′) ≤ τ‖x − x′‖ q(‖x‖ − R)/Q(n − R)` for `‖x′‖ ≥ ‖x‖`.
pub fn taper_lipschitz(pairs: usize, seed: u64) -> Check {
    const NAME: &str = "taper Lipschitz bound";
    timed(NAME, || -> Result<Check> {
        let mut r = rng(seed);
        let mut violations = 0usize;
        for _ in 0..pairs {
            let big_r = r.random_range(2..8u32);
            let n = big_r + r.random_range(1..40u32);
            let p = TaperParams::new(r.random_range(0.01..3.1), big_r, n, 1)?;
            let reach = n as f64 + 2.0;
            let mut x = Point::new(r.random_range(-reach..reach), r.random_range(-reach..reach));
            let mut y = Point::new(r.random_range(-reach..reach), r.random_range(-reach..reach));
            if x.norm() > y.norm() {
                std::mem::swap(&mut x, &mut y);
            }
            let drop = tau_n(&x, &p) - tau_n(&y, &p);
            let bound = p.tau * x.dist(&y) * q(x.norm() - big_r as f64) / q_primitive((n - big_r) as f64)?;
            violations += !(drop >= 0.0 && drop <= bound + 1e-12) as usize;
        }
        Ok(Check::at_most(NAME, violations as f64, 0.0).with_details(json!({ "pairs": pairs })))
    })
}

/// Closed-form `Q` against adaptive quadrature of `q` on `k ∈ [0, 100]`.
pub fn q_closed_form() -> Check {
    const NAME: &str = "Q closed form";
    timed(NAME, || -> Result<Check> {
        let mut worst = 0.0f64;
        for i in 0..=400 {
            let k = i as f64 * 0.25;
            let numeric = adaptive_simpson(&q, 0.0, k.min(2.0), 1e-13)
                + if k > 2.0 { adaptive_simpson(&q, 2.0, k, 1e-13) } else { 0.0 };
            worst = worst.max((q_primitive(k)? - numeric).abs());
        }
        Ok(Check::at_most(NAME, worst, 1e-9))
    })
}

/// `τ_n = τ` on `‖x‖ ≤ R` and `τ_n = 0` on `‖x‖ ≥ n`, exactly.
pub fn taper_plateau_and_zero(seed: u64) -> Check {
    const NAME: &str = "taper plateau and zero";
    timed(NAME, || -> Result<Check> {
        let mut r = rng(seed);
        let mut violations = 0usize;
        for _ in 0..10_000 {
            let big_r = r.random_range(2..8u32);
            let n = big_r + r.random_range(1..40u32);
            let p = TaperParams::new(r.random_range(0.01..3.1), big_r, n, 1)?;
            let inner = r.random_range(0.0..=big_r as f64);
            let outer = r.random_range(n as f64..n as f64 + 10.0);
            let a = r.random_range(0.0..TAU);
            let on_square = |rad: f64| {
                // a point of sup-norm `rad`
                let (c, s) = (a.cos(), a.sin());
                let m = c.abs().max(s.abs());
                Point::new(rad * c / m, rad * s / m)
            };
            violations += (tau_n(&on_square(inner), &p) != p.tau) as usize;
            violations += (tau_n(&on_square(outer), &p) != 0.0) as usize;
        }
        let edge = TaperParams::new(0.5, 3, 9, 1)?;
        violations += (tau_n(&Point::new(3.0, 0.0), &edge) != 0.5) as usize;
        violations += (tau_n(&Point::new(0.0, -9.0), &edge) != 0.0) as usize;
        Ok(Check::at_most(NAME, violations as f64, 0.0))
    })
}

/// `∫_{Λ_n} q(‖x‖ − R)² dx ≤ 8(R+3)² + 8R·Q(n−R)` for `R ∈ 2..=6`, `n ∈ R+1..=40`,
/// with the integral by a 2-D midpoint rule (cells of side 1/8, edges on
/// the integer radii where `q` jumps) and the radial reduction as a cross-check.
pub fn taper_integral_bound() -> Check {
    const NAME: &str = "taper integral bound";
    timed(NAME, || -> Result<Check> {
        let mut worst_ratio = 0.0f64;
        let mut worst_disagreement = 0.0f64;
        let cells_per_unit = 8usize;
        for big_r in 2..=6u32 {
            for n in big_r + 1..=40 {
                let m = cells_per_unit * n as usize;
                let h = 1.0 / cells_per_unit as f64;
                let mut sum = 0.0;
                // one quadrant, by symmetry
                for i in 0..m {
                    for j in 0..m {
                        let x = Point::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
                        sum += q(x.norm() - big_r as f64).powi(2);
                    }
                }
                let grid = 4.0 * sum * h * h;
                let radial = taper_square_integral(big_r, n);
                let rhs = 8.0 * (big_r as f64 + 3.0).powi(2) + 8.0 * big_r as f64 * q_primitive((n - big_r) as f64)?;
                worst_ratio = worst_ratio.max(grid / rhs);
                worst_disagreement = worst_disagreement.max((grid - radial).abs() / radial);
            }
        }
        let pass_cross = worst_disagreement < 1e-2;
        let mut c = Check::at_most(NAME, worst_ratio, 1.0)
            .with_details(json!({ "max_relative_gap_to_radial": worst_disagreement }));
        c.pass &= pass_cross;
        Ok(c)
    })
}

// Two sites at distance `gap`, each empty or holding one particle with one
// of `TOY_SPINS` spins. State code per site: 0 = empty, 1 + s = spin s.
const TOY_SPINS: usize = 4;

fn toy_energy(model: &PairPotentialModel, gap: f64, a: usize, b: usize) -> f64 {
    if a == 0 || b == 0 {
        return 0.0;
    }
    model.pair_value(gap, TAU * (a as f64 - b as f64) / TOY_SPINS as f64)
}

/// `max_j |Σ_i π_i P_ij − π_j|` for the sampler's kernel on the two-site toy.
pub fn toy_stationarity_defect(model: &PairPotentialModel, gap: f64, z: f64, mix: &MoveMix) -> f64 {
    let s = TOY_SPINS;
    let states: Vec<(usize, usize)> = (0..=s).flat_map(|a| (0..=s).map(move |b| (a, b))).collect();
    let index = |st: (usize, usize)| st.0 * (s + 1) + st.1;
    let count = |st: (usize, usize)| (st.0 != 0) as usize + (st.1 != 0) as usize;
    let weight = |st: (usize, usize)| {
        let e = toy_energy(model, gap, st.0, st.1);
        if e == f64::INFINITY {
            0.0
        } else {
            (z / s as f64).powi(count(st) as i32) * (-e).exp()
        }
    };
    let ns = states.len();
    let mut p = vec![vec![0.0; ns]; ns];
    let volume = 2.0;
    for &st in &states {
        if weight(st) == 0.0 {
            continue;
        }
        let from = index(st);
        let n = count(st);
        let e0 = toy_energy(model, gap, st.0, st.1);
        let go = |p: &mut Vec<Vec<f64>>, t: (usize, usize), prob: f64, kind: MoveKind| {
            let de = toy_energy(model, gap, t.0, t.1) - e0;
            let a = acceptance_probability(kind, de, z, volume, n, mix);
            p[from][index(t)] += prob * a;
            p[from][from] += prob * (1.0 - a);
        };
        let sites = [st.0, st.1];
        let set = |site: usize, v: usize| if site == 0 { (v, st.1) } else { (st.0, v) };
        for site in 0..2 {
            for spin in 0..s {
                let prob = mix.birth / 2.0 / s as f64;
                if sites[site] != 0 {
                    p[from][from] += prob;
                } else {
                    go(&mut p, set(site, spin + 1), prob, MoveKind::Birth);
                }
            }
        }
        let occupied: Vec<usize> = (0..2).filter(|&k| sites[k] != 0).collect();
        if occupied.is_empty() {
            p[from][from] += mix.death + mix.translate + mix.spin_rotate;
            continue;
        }
        for &site in &occupied {
            let pick = 1.0 / n as f64;
            go(&mut p, set(site, 0), mix.death * pick, MoveKind::Death);
            for target in 0..2 {
                let prob = mix.translate * pick / 2.0;
                if target == site || sites[target] != 0 {
                    p[from][from] += prob;
                } else {
                    let moved = if site == 0 { (0, sites[0]) } else { (sites[1], 0) };
                    go(&mut p, moved, prob, MoveKind::Translate);
                }
            }
            for step in [1, s - 1] {
                let spin = (sites[site] - 1 + step) % s + 1;
                go(&mut p, set(site, spin), mix.spin_rotate * pick / 2.0, MoveKind::SpinRotate);
            }
        }
    }
    let total: f64 = states.iter().map(|&st| weight(st)).sum();
    let pi: Vec<f64> = states.iter().map(|&st| weight(st) / total).collect();
    (0..ns)
        .map(|j| ((0..ns).map(|i| pi[i] * p[i][j]).sum::<f64>() - pi[j]).abs())
        .fold(0.0, f64::max)
}

pub fn detailed_balance(model: &PairPotentialModel) -> Check {
    const NAME: &str = "sampler stationarity on the two-site toy";
    timed(NAME, || -> Result<Check> {
        let mixes = [MoveMix::default(), MoveMix { birth: 0.4, death: 0.3, translate: 0.2, spin_rotate: 0.1 }];
        let mut worst = 0.0f64;
        for mix in &mixes {
            for &z in &[0.3, 1.0, 4.0] {
                for &gap in &[0.1, 0.5, 2.0] {
                    worst = worst.max(toy_stationarity_defect(model, gap, z, mix));
                }
            }
        }
        Ok(Check::at_most(NAME, worst, 1e-10))
    })
}

/// χ² test of the ideal-gas count law in `Λ_1` at level 1%.
pub fn ideal_gas_count_law(seed: u64) -> Check {
    const NAME: &str = "ideal-gas count law";
    timed(NAME, || -> Result<Check> {
        let m = PairPotentialModel::ideal_gas();
        let w = Window::new(1.0)?;
        let z = 1.0;
        let params = SamplerParams { z, sweeps: 40_000, thin: 20, seed, ..SamplerParams::default() };
        let run = sample_gibbs(&m, &w, &Configuration::empty(), &params)?;
        let n = run.samples.len() as f64;
        let law = Poisson::new(z * w.area()).map_err(|e| crate::HarnessError::Usage(e.to_string()))?;
        let mut observed = vec![0.0; 10];
        for s in &run.samples {
            observed[s.len().min(9)] += 1.0;
        }
        let mut expected: Vec<f64> = (0..9).map(|k| law.pmf(k) * n).collect();
        expected.push(n - expected.iter().sum::<f64>());
        while *expected.last().unwrap() < 5.0 {
            let e = expected.pop().unwrap();
            let o = observed.pop().unwrap();
            *expected.last_mut().unwrap() += e;
            *observed.last_mut().unwrap() += o;
        }
        let stat: f64 = observed.iter().zip(&expected).map(|(o, e)| (o - e).powi(2) / e).sum();
        let crit = ChiSquared::new((expected.len() - 1) as f64)
            .map_err(|e| crate::HarnessError::Usage(e.to_string()))?
            .inverse_cdf(0.99);
        Ok(Check::at_most(NAME, stat, crit).with_details(json!({ "samples": n, "cells": expected.len() })))
    })
}

/// Total variation between the chain and quadrature on `Λ_{0.6}` with one
/// boundary particle, over at least `samples` thinned samples.
pub fn exact_reference_agreement(samples: usize, seed: u64) -> Check {
    const NAME: &str = "sampler vs exact reference";
    timed(NAME, || -> Result<Check> {
        let m = PairPotentialModel::reference(1.0, 0.2)?;
        let w = Window::new(0.6)?;
        let boundary = Configuration::new(vec![MarkedParticle::at(0.9, 0.2, 1.0)])?;
        let z = 0.04;
        let exact = exact_reference(&m, &w, &boundary, z, 3, ReferenceGrid { positions: 8, spins: 8 })?;
        let thin = 4;
        let sweeps = (samples as f64 * thin as f64 / 0.8).ceil() as usize + thin;
        let params = SamplerParams { z, sweeps, thin, seed, ..SamplerParams::default() };
        let run = sample_gibbs(&m, &w, &boundary, &params)?;
        let tv = total_variation(&empirical_category_law(&run.samples), &exact);
        let mut c = Check::at_most(NAME, tv, 0.05).with_details(json!({ "samples": run.samples.len() }));
        c.pass &= run.samples.len() >= samples;
        Ok(c)
    })
}

/// `γ_Λ(B)` directly against the bond-expansion mixture on a tiny window.
pub fn decomposition_identity(model: &PairPotentialModel, decomp: &SmoothDecomposition) -> Check {
    const NAME: &str = "decomposition identity";
    timed(NAME, || -> Result<Check> {
        let w = Window::new(0.5)?;
        let boundary = Configuration::new(vec![MarkedParticle::at(0.8, 0.1, 2.0)])?;
        let everything = |_: &[MarkedParticle]| true;
        let empty = |ps: &[MarkedParticle]| ps.is_empty();
        let half = |ps: &[MarkedParticle]| ps.len() == 1 && ps[0].spin.angle() < PI;
        let aligned = |ps: &[MarkedParticle]| ps.len() == 2 && ps[0].spin.diff(&ps[1].spin).abs() < 1.0;
        let events: [TinyEvent<'_>; 4] = [&everything, &empty, &half, &aligned];
        let grid = IdentityGrid { positions: 4, spins: 16 };
        let gap = decomposition_identity_check(model, decomp, &w, &boundary, 0.02, grid, &events)?;
        Ok(Check::at_most(NAME, gap, 1e-6).with_details(json!({ "events": events.len() })))
    })
}
