use mwgibbs_core::bonds::{
    bernoulli_connection_probability, bernoulli_probability, bfs_components, bond_set, chain_bound,
    cluster_range, clusters, conditional_bond_probability, decomposition_identity_check,
    exhaustive_domination_check, expansion_identity_check, holley_single_bond_check,
    path_inequality_holds, sample_bonds, sample_bonds_with, tiny_bond_law, Bond, BondSet, DominationParams,
    IdentityGrid, TinyEvent,
};
use mwgibbs_core::config_space::{Configuration, MarkedParticle, Point, Region, Window};
use mwgibbs_core::potential::{Coupling, CoreRepulsion, PairPotentialModel, RadialTable, SpinProfile};
use mwgibbs_core::smoothing::smooth_decompose;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn reference() -> PairPotentialModel {
    PairPotentialModel::reference(1.0, 0.2).unwrap()
}

fn random_cfg(rng: &mut ChaCha8Rng, n: usize, half: f64) -> Configuration {
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

/// Short-range table coupling, so that tiny systems have few bonds.
fn short_range() -> PairPotentialModel {
    let j = RadialTable::new(vec![0.0, 2.0, 4.0], vec![1.0, 0.6, 0.0]).unwrap();
    PairPotentialModel::new(
        Coupling::Table(j),
        CoreRepulsion::HardCore { radius: 0.2 },
        SpinProfile::NegCos { amplitude: 1.0 },
    )
    .unwrap()
}

#[test]
fn bond_set_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let models = [reference(), short_range()];
    for trial in 0..200 {
        let m = &models[trial % 2];
        let cfg = random_cfg(&mut rng, 8, 6.0);
        let w = Window::new(rng.random_range(0.5..4.0)).unwrap();
        let ps = cfg.particles();
        let mut want = Vec::new();
        for i in 0..8 {
            for j in i + 1..8 {
                let touches = w.contains(&ps[i].position) || w.contains(&ps[j].position);
                if touches && m.coupling_between(&ps[i].position, &ps[j].position) != 0.0 {
                    want.push(Bond { i, j });
                }
            }
        }
        assert_eq!(bond_set(&cfg, m, &w).bonds(), want.as_slice());
    }
}

#[test]
fn conditional_probability_is_dominated_pointwise() {
    let m = reference();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for &eps in &[0.02, 0.075, 0.3] {
        let d = smooth_decompose(&SpinProfile::NegCos { amplitude: 1.0 }, eps).unwrap();
        for _ in 0..5000 {
            let cfg = random_cfg(&mut rng, 2, 2.0);
            let (a, b) = (&cfg.particles()[0], &cfg.particles()[1]);
            let p = conditional_bond_probability(&m, &d, a, b).unwrap();
            let e = bernoulli_probability(&m, eps, a, b).unwrap();
            assert!((0.0..=e).contains(&p));
        }
    }
    let origin = MarkedParticle::at(0.0, 0.0, 0.0);
    let twin = MarkedParticle::at(0.0, 0.0, 1.0);
    assert_eq!(bernoulli_probability(&m, 0.1, &origin, &twin).unwrap(), 0.1);
}

#[test]
fn expansion_identity_on_random_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let k = rng.random_range(0..=12);
        let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..0.2)).collect();
        assert!(expansion_identity_check(&w).unwrap() <= 1e-10);
    }
}

#[test]
fn sampled_bonds_follow_their_weights() {
    let m = reference();
    let w = Window::new(3.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = random_cfg(&mut rng, 30, 3.0);
    let small = smooth_decompose(&SpinProfile::NegCos { amplitude: 1.0 }, 0.01).unwrap();
    let large = smooth_decompose(&SpinProfile::NegCos { amplitude: 1.0 }, 0.5).unwrap();
    let (a, ta) = sample_bonds(&cfg, &m, &small, &w, 7).unwrap();
    let (b, _) = sample_bonds(&cfg, &m, &small, &w, 7).unwrap();
    assert_eq!(a, b);
    let (big, _) = sample_bonds(&cfg, &m, &large, &w, 7).unwrap();
    assert!(a.len() < big.len());
    assert!(ta.iter().all(|(_, p)| *p < 0.011));
    // with huge weights every bond is present
    let mut r = ChaCha8Rng::seed_from_u64(8);
    let (all, table) =
        sample_bonds_with(&cfg, &m, &w, &mut r, |_, _| Ok(-(-1e3f64).exp_m1())).unwrap();
    assert_eq!(all.len(), table.len());
    let mut counts = 0usize;
    let mut total = 0.0;
    for seed in 0..400 {
        let (s, table) = sample_bonds(&cfg, &m, &large, &w, seed).unwrap();
        counts += s.len();
        total += table.iter().map(|(_, p)| p).sum::<f64>();
    }
    let mean = total / 400.0;
    assert!((counts as f64 / 400.0 - mean).abs() < 4.0 * (mean / 400.0).sqrt() + 0.05);
}

#[test]
fn holley_bracket_holds_for_smoothed_profiles() {
    let m = reference();
    let d = smooth_decompose(&SpinProfile::NegCos { amplitude: 1.0 }, 0.075).unwrap();
    for &r in &[0.0, 0.3, 1.0, 3.0] {
        let pair = (Point::new(0.0, 0.0), Point::new(r, 0.0));
        assert!(holley_single_bond_check(&m, &d, 0.075, (&pair.0, &pair.1), 1024));
    }
    for k in 1..=1000 {
        let e = k as f64 / 1000.0;
        assert!(e + (e - 1.0) * e.exp_m1() >= 0.0);
    }
}

fn tiny_systems() -> Vec<(PairPotentialModel, Configuration, Window)> {
    let at = MarkedParticle::at;
    let w1 = Window::new(1.0).unwrap();
    let w10 = Window::new(10.0).unwrap();
    vec![
        (reference(), Configuration::new(vec![at(0.0, 0.0, 0.0), at(0.5, 0.0, 0.0)]).unwrap(), w1),
        (
            reference(),
            Configuration::new(vec![at(0.0, 0.0, 0.0), at(0.6, 0.0, 0.0), at(0.3, 0.5, 0.0)]).unwrap(),
            w1,
        ),
        (
            reference(),
            Configuration::new(vec![at(-0.5, 0.0, 0.0), at(0.5, 0.0, 0.0), at(1.4, 0.0, 2.0)]).unwrap(),
            w1,
        ),
        (
            short_range(),
            Configuration::new(vec![at(0.0, 0.0, 0.0), at(3.0, 0.0, 0.0), at(6.0, 0.0, 0.0), at(6.0, 3.0, 0.0)])
                .unwrap(),
            w10,
        ),
    ]
}

#[test]
fn tiny_bond_laws_are_dominated_on_all_upsets() {
    let eps = 0.075;
    let d = smooth_decompose(&SpinProfile::NegCos { amplitude: 1.0 }, eps).unwrap();
    for (model, cfg, w) in tiny_systems() {
        let grid = if cfg.len() > 3 { 24 } else { 32 };
        let (edges, law) = tiny_bond_law(&cfg, &model, &d, &w, grid).unwrap();
        assert!(!edges.is_empty());
        let epsilons: Vec<f64> = edges
            .iter()
            .map(|b| bernoulli_probability(&model, eps, &cfg.particles()[b.i], &cfg.particles()[b.j]).unwrap())
            .collect();
        let v = exhaustive_domination_check(&law, &epsilons).unwrap();
        assert!(v.passed, "slack {}", v.min_slack);
        if edges.len() == 1 {
            assert!(law[1] < epsilons[0]);
        }
    }
}

#[test]
fn domination_params_follow_the_activity_condition() {
    let c_j = reference().c_j;
    let p = DominationParams::default_for(c_j, 0.6, 1.0).unwrap();
    assert!((p.epsilon - 0.9 / (1.2 * c_j)).abs() < 1e-15);
    assert!(DominationParams::default_for(c_j, 0.4, 1.0).is_err());
    assert!(DominationParams::new(0.2, c_j, 0.6, 1.0).is_err());
}

#[test]
fn clusters_agree_with_breadth_first_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let n = rng.random_range(1..25);
        let cfg = random_cfg(&mut rng, n, 5.0);
        let p = rng.random_range(0.0..0.3);
        let mut bonds = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < p {
                    bonds.push(Bond::new(i, j).unwrap());
                }
            }
        }
        let set = BondSet::new(bonds);
        let c = clusters(&cfg, &set).unwrap();
        assert_eq!(c.labels, bfs_components(n, &set));
        let w = Window::new(rng.random_range(0.5..5.0)).unwrap();
        let r = cluster_range(&cfg, &c, &w);
        for (i, q) in cfg.iter().enumerate() {
            assert!(q.position.norm() <= c.range_of(i));
            if w.contains(&q.position) {
                assert!(r >= q.position.norm());
            }
        }
    }
}

#[test]
fn chain_bound_dominates_exact_connection_probability() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let models = [reference(), short_range()];
    let mut checked = 0;
    while checked < 150 {
        let m = &models[checked % 2];
        let n = rng.random_range(3..=5);
        let cfg = random_cfg(&mut rng, n, 3.0);
        let ps = cfg.particles();
        let edges = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| m.coupling_between(&ps[i].position, &ps[j].position) != 0.0)
            .count();
        if edges > 10 {
            continue;
        }
        let eps = rng.random_range(0.01..0.09);
        let exact = bernoulli_connection_probability(&cfg, m, eps, 0, 1).unwrap();
        let bound = chain_bound(&cfg, m, eps, 0, 1, n).unwrap();
        assert!(bound.truncated >= exact - 1e-15, "{} < {exact}", bound.truncated);
        checked += 1;
    }
}

#[test]
fn path_length_inequality_on_random_chains() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100_000 {
        let len = rng.random_range(2..12);
        let scale = rng.random_range(0.01..5.0);
        let chain: Vec<Point> = (0..len)
            .map(|_| Point::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale)))
            .collect();
        assert!(path_inequality_holds(&chain));
    }
}

#[test]
fn decomposition_identity_on_tiny_window() {
    let m = reference();
    let d = smooth_decompose(&SpinProfile::NegCos { amplitude: 1.0 }, 0.1).unwrap();
    let w = Window::new(0.5).unwrap();
    let boundary = Configuration::new(vec![MarkedParticle::at(0.8, 0.1, 2.0)]).unwrap();
    let everything = |_: &[MarkedParticle]| true;
    let empty = |ps: &[MarkedParticle]| ps.is_empty();
    let half = |ps: &[MarkedParticle]| ps.len() == 1 && ps[0].spin.angle() < std::f64::consts::PI;
    let aligned = |ps: &[MarkedParticle]| ps.len() == 2 && ps[0].spin.diff(&ps[1].spin).abs() < 1.0;
    let events: [TinyEvent<'_>; 4] = [&everything, &empty, &half, &aligned];
    let gap = decomposition_identity_check(
        &m,
        &d,
        &w,
        &boundary,
        0.02,
        IdentityGrid { positions: 4, spins: 16 },
        &events,
    )
    .unwrap();
    assert!(gap <= 1e-6, "{gap}");
    assert!(decomposition_identity_check(
        &m,
        &d,
        &w,
        &boundary,
        5.0,
        IdentityGrid { positions: 4, spins: 16 },
        &events
    )
    .is_err());
}
