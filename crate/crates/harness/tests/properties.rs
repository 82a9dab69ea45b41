use std::f64::consts::E;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mwgibbs_core::config_space::{Configuration, MarkedParticle, Window};
use mwgibbs_harness::config::Config;
use mwgibbs_harness::events::TestEvent;
use mwgibbs_harness::experiment::{run_main_inequality, run_symmetry_scan};
use mwgibbs_harness::plan::ExperimentPlan;
use mwgibbs_harness::suite::run_lemma_suite;

fn small(extra: &str) -> ExperimentPlan {
    let text = format!(
        "n = 6\nn_prime = 1\nr = 3\nreplicates = 4\nbond_draws = 2\nsweeps = 60\nthin = 4\n\
         scan_sizes = 4,6\nscan_replicates = 2\nscan_sweeps = 40\n{extra}"
    );
    ExperimentPlan::from_config(&Config::parse(&text).unwrap(), &PathBuf::from(".")).unwrap()
}

#[test]
fn same_seed_gives_identical_reports() {
    let plan = small("seed = 11\n");
    let a = run_lemma_suite(&plan);
    let b = run_lemma_suite(&plan);
    assert_eq!(a.canonical_json(), b.canonical_json());
    let other = run_lemma_suite(&small("seed = 12\n"));
    assert_ne!(a.canonical_json(), other.canonical_json());
}

#[test]
fn events_ignore_exterior_particles() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let window = Window::new(2.0).unwrap();
    let events: Vec<TestEvent> = ["half-plane", "half-plane:2.5", "sector", "sector:1:2:3", "count-band", "count-band:0:2"]
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
    let particle = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| {
        let r = rng.random_range(lo..hi);
        let side = rng.random_range(0..4);
        let t = rng.random_range(-r..r);
        let (x, y) = match side {
            0 => (r, t),
            1 => (-r, t),
            2 => (t, r),
            _ => (t, -r),
        };
        MarkedParticle::at(x, y, rng.random_range(0.0..std::f64::consts::TAU))
    };
    for _ in 0..1000 {
        let k = rng.random_range(0..12);
        let inside: Vec<MarkedParticle> = (0..k).map(|_| particle(&mut rng, 0.0, 1.99)).collect();
        let with_exterior = |rng: &mut ChaCha8Rng| {
            let m = rng.random_range(0..20);
            let mut ps = inside.clone();
            ps.extend((0..m).map(|_| particle(rng, 2.01, 8.0)));
            Configuration::new(ps).unwrap()
        };
        let a = with_exterior(&mut rng);
        let b = with_exterior(&mut rng);
        for e in &events {
            assert_eq!(e.holds(&a, &window), e.holds(&b, &window), "{e}");
        }
    }
}

#[test]
fn full_event_margin_is_e_minus_one_times_membership() {
    let plan = small("");
    let r = run_main_inequality(&plan, &TestEvent::Full);
    let c = r.get("main inequality [full]").unwrap();
    let good = c.details["good_fraction"].as_f64().unwrap();
    assert!((c.statistic - (E - 1.0) * good).abs() < 1e-12);
    assert!(c.pass);

    let r = run_main_inequality(&plan, &TestEvent::Impossible);
    let c = r.get("main inequality [impossible]").unwrap();
    assert_eq!(c.statistic, 0.0);
    assert!(c.pass);
}

#[test]
fn zero_rotation_changes_nothing() {
    let plan = small("scan_taus = 0\n");
    let r = run_symmetry_scan(&plan, &TestEvent::HalfPlane { angle: 0.0 });
    let c = r.get("rotation by zero").unwrap();
    assert_eq!(c.statistic, 0.0);
    assert!(c.pass);
}

#[test]
fn ideal_gas_suite_passes_with_no_bonds() {
    let plan = small("model = ideal\nboundary = empty\nxi = 1\n");
    let r = run_lemma_suite(&plan);
    for c in &r.checks {
        assert!(c.pass, "{}", c.summary());
    }
    let tail = r.get("cluster range tail").unwrap();
    assert_eq!(tail.statistic, 0.0);
    assert_eq!(tail.details["mean_bonds"].as_f64(), Some(0.0));
    let margin = r.get("taylor margin on good instances").unwrap();
    assert_eq!(margin.details["good_instances"], margin.details["instances"]);
}

#[test]
fn shipped_plans_load() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let desk = ExperimentPlan::load(&root.join("desk.cfg")).unwrap();
    assert_eq!(desk, ExperimentPlan { out: desk.out.clone(), ..ExperimentPlan::default() });
    ExperimentPlan::load(&root.join("ideal.cfg")).unwrap();
}
