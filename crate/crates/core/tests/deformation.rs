use mwgibbs_core::bonds::{bond_set, clusters, sample_bonds, BondSet};
use mwgibbs_core::config_space::{Configuration, MarkedParticle, Point, Window};
use mwgibbs_core::deformation::{
    apply_deformation, cluster_taper, dirichlet_energy, good_set_verdict, intermediate_bound_holds, q,
    q_primitive, tau_n, taper_square_integral, taylor_margin, DeformationField, TaperParams,
};
use mwgibbs_core::potential::{hamiltonian, PairPotentialModel, SpinProfile};
use mwgibbs_core::quadrature::adaptive_simpson;
use mwgibbs_core::sampler::{sample_gibbs, sample_poisson, SamplerParams};
use mwgibbs_core::smoothing::smooth_decompose;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn primitive_matches_quadrature_of_q() {
    for i in 0..=400 {
        let k = i as f64 * 0.25;
        let numeric = adaptive_simpson(&q, 0.0, k.min(2.0), 1e-13)
            + if k > 2.0 { adaptive_simpson(&q, 2.0, k, 1e-13) } else { 0.0 };
        assert!((q_primitive(k).unwrap() - numeric).abs() <= 1e-9, "k = {k}");
    }
}

#[test]
fn taper_is_lipschitz_with_the_log_profile() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100_000 {
        let r = rng.random_range(2..8u32);
        let n = r + rng.random_range(1..40u32);
        let p = TaperParams::new(rng.random_range(0.01..3.1), r, n, 1).unwrap();
        let reach = n as f64 + 2.0;
        let mut x = Point::new(rng.random_range(-reach..reach), rng.random_range(-reach..reach));
        let mut y = Point::new(rng.random_range(-reach..reach), rng.random_range(-reach..reach));
        if x.norm() > y.norm() {
            std::mem::swap(&mut x, &mut y);
        }
        let drop = tau_n(&x, &p) - tau_n(&y, &p);
        let bound = p.tau * x.dist(&y) * q(x.norm() - r as f64) / q_primitive((n - r) as f64).unwrap();
        assert!(drop >= 0.0 && drop <= bound + 1e-12, "{drop} vs {bound}");
    }
}

#[test]
fn taper_square_integral_obeys_the_shell_bound() {
    for r in 2..=6u32 {
        for n in r + 1..=40 {
            let lhs = taper_square_integral(r, n);
            let rhs = 8.0 * (r as f64 + 3.0).powi(2) + 8.0 * r as f64 * q_primitive((n - r) as f64).unwrap();
            assert!(lhs <= rhs, "R = {r}, n = {n}: {lhs} > {rhs}");
        }
    }
    // plain 2-D midpoint rule against the shell reduction
    for &(r, n) in &[(2u32, 9u32), (4, 20)] {
        // cell edges on integer radii, where q jumps
        let m = 100 * n as usize;
        let h = 2.0 * n as f64 / m as f64;
        let mut sum = 0.0;
        for i in 0..m {
            for j in 0..m {
                let x = Point::new(-(n as f64) + (i as f64 + 0.5) * h, -(n as f64) + (j as f64 + 0.5) * h);
                sum += q(x.norm() - r as f64).powi(2);
            }
        }
        let grid = sum * h * h;
        assert!((grid - taper_square_integral(r, n)).abs() < 1e-4 * grid);
    }
}

fn random_instance(rng: &mut ChaCha8Rng, n: usize, half: f64) -> Configuration {
    Configuration::new(
        (0..n)
            .map(|_| {
                MarkedParticle::at(
                    rng.random_range(-half..half),
                    rng.random_range(-half..half),
                    rng.random_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect(),
    )
    .unwrap()
}

#[test]
fn cluster_field_is_constant_on_clusters_and_below_tau_n() {
    let m = PairPotentialModel::reference(1.0, 0.2).unwrap();
    let d = smooth_decompose(&SpinProfile::NegCos { amplitude: 1.0 }, 0.3).unwrap();
    let p = TaperParams::new(1.0, 2, 10, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for seed in 0..50 {
        let cfg = random_instance(&mut rng, 60, 11.0);
        let (bonds, _) = sample_bonds(&cfg, &m, &d, &p.window_n(), seed).unwrap();
        let cl = clusters(&cfg, &bonds).unwrap();
        let f = cluster_taper(&cfg, &cl, &p).unwrap();
        for (i, x) in cfg.iter().enumerate() {
            assert!(f.angle[i] <= tau_n(&x.position, &p));
            assert_eq!(f.angle[i], f.angle[cl.members[cl.labels[i]][0]]);
            let w = f.witness[i];
            assert_eq!(cl.labels[w], cl.labels[i]);
            assert_eq!(tau_n(&cfg.particles()[w].position, &p), f.angle[i]);
            assert!(cfg.particles()[w].position.norm() >= x.position.norm());
            if x.position.norm() >= 10.0 {
                assert_eq!(w, i);
            }
        }
        for b in bonds.iter() {
            assert_eq!(f.angle[b.i], f.angle[b.j]);
        }
    }
    // two-particle cluster at norms 3 and 5
    let pair = Configuration::new(vec![MarkedParticle::at(3.0, 0.0, 0.0), MarkedParticle::at(0.0, -5.0, 0.0)])
        .unwrap();
    let cl = clusters(&pair, &BondSet::new(vec![mwgibbs_core::bonds::Bond::new(0, 1).unwrap()])).unwrap();
    let f = cluster_taper(&pair, &cl, &p).unwrap();
    let at5 = tau_n(&Point::new(5.0, 0.0), &p);
    assert_eq!(f.angle, vec![at5, at5]);
    assert_eq!(f.witness, vec![1, 1]);
}

#[test]
fn deformation_round_trip_and_global_rotation() {
    let m = PairPotentialModel::reference(1.0, 0.2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = Configuration::new(
        (0..40)
            .map(|k| {
                let (i, j) = ((k % 8) as f64, (k / 8) as f64);
                MarkedParticle::at(
                    -4.5 + 1.2 * i + rng.random_range(-0.3..0.3),
                    -4.5 + 1.2 * j + rng.random_range(-0.3..0.3),
                    rng.random_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect(),
    )
    .unwrap();
    let field = DeformationField {
        angle: (0..40).map(|_| rng.random_range(0.0..3.0)).collect(),
        witness: (0..40).collect(),
    };
    let there = apply_deformation(&cfg, &field, 1).unwrap();
    assert_eq!(apply_deformation(&there, &field, -1).unwrap(), cfg);
    assert_eq!(apply_deformation(&cfg, &DeformationField::constant(0.0, 40), 1).unwrap(), cfg);
    let w = Window::new(5.0).unwrap();
    let e = |c: &Configuration| hamiltonian(&m, &w, c, &Configuration::empty()).unwrap().value();
    let rotated = apply_deformation(&cfg, &DeformationField::constant(1.1, 40), 1).unwrap();
    assert!(e(&cfg).is_finite());
    assert_eq!(e(&rotated), e(&cfg));
    let d = smooth_decompose(&SpinProfile::NegCos { amplitude: 1.0 }, 0.1).unwrap();
    let smooth = m.with_spin(d.smooth_profile());
    let margin = taylor_margin(&cfg, &smooth, &w, &DeformationField::constant(0.4, 40)).unwrap();
    assert!((margin.relative - (std::f64::consts::E - 1.0)).abs() < 1e-12);
}

#[test]
fn good_instances_have_nonnegative_taylor_margin() {
    let m = PairPotentialModel::reference(1.0, 0.2).unwrap();
    let eps = 0.075;
    let d = smooth_decompose(&SpinProfile::NegCos { amplitude: 1.0 }, eps).unwrap();
    let smooth = m.with_spin(d.smooth_profile());
    let mut good = 0;
    for &(tau, r, n) in &[(0.5, 3u32, 6u32), (1.0, 2, 8), (0.3, 2, 5)] {
        let p = TaperParams::new(tau, r, n, 1).unwrap();
        let w = p.window_n();
        let params = SamplerParams { z: 0.6, sweeps: 60, seed: r as u64 * 100 + n as u64, ..SamplerParams::default() };
        let run = sample_gibbs(&m, &w, &Configuration::empty(), &params).unwrap();
        for (k, x) in run.samples.iter().enumerate().step_by(4) {
            let (bonds, _) = sample_bonds(x, &m, &d, &w, k as u64).unwrap();
            let verdict = good_set_verdict(x, &m, &d, &bonds, &p).unwrap();
            let field = cluster_taper(x, &clusters(x, &bonds).unwrap(), &p).unwrap();
            let energy = dirichlet_energy(x, &m, &bond_set(x, &m, &w), &field).unwrap();
            assert_eq!(energy, verdict.energy);
            let margin = taylor_margin(x, &smooth, &w, &field).unwrap();
            let mass: f64 = bond_set(x, &m, &w)
                .iter()
                .map(|b| m.coupling_between(&x.particles()[b.i].position, &x.particles()[b.j].position))
                .sum();
            assert!(intermediate_bound_holds(&margin, d.vbar_second_sup, energy, mass));
            if verdict.energy_ok {
                assert!(margin.relative >= 0.0, "{margin:?}");
            }
            if verdict.is_good {
                good += 1;
            }
        }
    }
    assert!(good > 0);
}

#[test]
fn verdict_clauses_match_direct_evaluation() {
    let m = PairPotentialModel::reference(1.0, 0.2).unwrap();
    let d = smooth_decompose(&SpinProfile::NegCos { amplitude: 1.0 }, 0.075).unwrap();
    let p = TaperParams::new(1.0, 3, 8, 1).unwrap();
    let inner = Configuration::new(vec![MarkedParticle::at(0.5, 0.5, 0.0), MarkedParticle::at(2.0, 0.0, 1.0)])
        .unwrap();
    let v = good_set_verdict(&inner, &m, &d, &BondSet::default(), &p).unwrap();
    assert!(v.range_ok && v.energy_ok && v.is_good);
    assert_eq!(v.range, 0.5);
    // a long bonded chain from the origin out past R
    let chain = Configuration::new((0..10).map(|k| MarkedParticle::at(0.5 * k as f64, 0.0, 0.0)).collect()).unwrap();
    let bonds = BondSet::new((0..9).map(|k| mwgibbs_core::bonds::Bond::new(k, k + 1).unwrap()).collect());
    let v = good_set_verdict(&chain, &m, &d, &bonds, &p).unwrap();
    assert!(!v.range_ok && !v.is_good);
    assert_eq!(v.range, 4.5);
    // steep taper over a dense crowd: the energy clause fails
    let steep = TaperParams::new(3.1, 2, 3, 1).unwrap();
    let crowd = Configuration::new(
        (0..36)
            .flat_map(|i| (0..4).map(move |j| MarkedParticle::at(-3.0 + 0.25 * i as f64, 2.0 + 0.25 * j as f64, 0.0)))
            .collect(),
    )
    .unwrap();
    let v = good_set_verdict(&crowd, &m, &d, &BondSet::default(), &steep).unwrap();
    assert!(!v.energy_ok && !v.is_good);
    assert!((v.threshold - 2.0 / d.vbar_second_sup).abs() < 1e-15);
}

/// One-sided Mann–Whitney test that `b` tends to exceed `a`, at 5%.
fn significantly_larger(a: &[f64], b: &[f64]) -> bool {
    let mut u = 0.0;
    for x in b {
        for y in a {
            u += if x > y { 1.0 } else if x == y { 0.5 } else { 0.0 };
        }
    }
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let mean = n1 * n2 / 2.0;
    let sd = (n1 * n2 * (n1 + n2 + 1.0) / 12.0).sqrt();
    (u - mean) / sd > 1.645
}

#[test]
fn dirichlet_energy_decreases_with_the_outer_radius() {
    let m = PairPotentialModel::reference(1.0, 0.2).unwrap();
    let d = smooth_decompose(&SpinProfile::NegCos { amplitude: 1.0 }, 0.075).unwrap();
    let r = 2u32;
    let mut samples: Vec<Vec<f64>> = Vec::new();
    for &n in &[2 * r, 4 * r, 8 * r] {
        let p = TaperParams::new(1.0, r, n, 1).unwrap();
        let w = p.window_n();
        let outer = Window::new(n as f64 + 6.0).unwrap();
        let mut fs = Vec::new();
        for seed in 0..30 {
            let x = sample_poisson(&outer, 0.6, 1000 * n as u64 + seed).unwrap();
            let (bonds, _) = sample_bonds(&x, &m, &d, &w, seed).unwrap();
            let field = cluster_taper(&x, &clusters(&x, &bonds).unwrap(), &p).unwrap();
            fs.push(dirichlet_energy(&x, &m, &bond_set(&x, &m, &w), &field).unwrap());
        }
        samples.push(fs);
    }
    let median = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        0.5 * (s[s.len() / 2 - 1] + s[s.len() / 2])
    };
    for k in 1..samples.len() {
        assert!(!significantly_larger(&samples[k - 1], &samples[k]));
        assert!(median(&samples[k]) <= median(&samples[k - 1]));
    }
}
