//! The lemma suite: every verifier in order, then the sampled good-set statistics.

use rayon::prelude::*;
use serde_json::json;

use mwgibbs_core::bonds::{bond_set, cluster_range, clusters};
use mwgibbs_core::deformation::{cluster_taper, dirichlet_energy, TaperParams};
use mwgibbs_core::sampler::GibbsRun;

use crate::checks;
use crate::ensemble::{evaluate_sample, run_replicates, substream, tagged_samples, Instance, Setup};
use crate::plan::ExperimentPlan;
use crate::report::{Check, Report};
use crate::Result;

/// Random trials per property check.
pub const TRIALS: usize = 100_000;

pub fn run_lemma_suite(plan: &ExperimentPlan) -> Report {
    let mut report = Report::new("verify", plan.seed);
    let setup = match Setup::new(plan).and_then(|s| Ok((plan.domination(&s.model)?.epsilon, s))) {
        Ok(s) => s,
        Err(e) => {
            report.push(Check::failed("setup", e));
            return report;
        }
    };
    let (eps, setup) = setup;
    let seed = plan.seed;
    let decomp = setup.law.upper();
    report.push(checks::smoothing_contract(&[("model", setup.model.spin.clone())], decomp.epsilon));
    report.push(checks::expansion_identity(substream(seed, &[1]), 100, 12));
    report.push(checks::pointwise_domination(&setup.model, decomp, eps, TRIALS, substream(seed, &[2])));
    match checks::tiny_systems(&setup.model) {
        Ok(systems) => report.push(checks::exhaustive_domination(&systems, decomp, eps)),
        Err(e) => report.push(Check::failed("exhaustive domination", e)),
    }
    report.push(checks::union_find_matches_bfs(1000, substream(seed, &[3])));
    let mut models = vec![setup.model.clone()];
    if let Ok(m) = checks::short_range_model() {
        models.push(m);
    }
    report.push(checks::chain_bound_dominates(&models, 200, substream(seed, &[4])));
    report.push(checks::path_inequality(TRIALS, substream(seed, &[5])));
    report.push(checks::taper_lipschitz(TRIALS, substream(seed, &[6])));
    report.push(checks::q_closed_form());
    report.push(checks::taper_plateau_and_zero(substream(seed, &[7])));
    report.push(checks::taper_integral_bound());
    if setup.model.coupling.is_nonnegative() {
        report.push(checks::decomposition_identity(&setup.model, decomp));
    }
    report.extend(good_set_statistics(plan, &setup));
    report
}

/// Per-instance record for the tail and margin statistics.
struct Record {
    instances: Vec<Instance>,
    /// `(R, range, energy)` of one extra draw, for the R search.
    by_r: Vec<(u32, f64, f64)>,
}

/// Candidate plateau radii for the search at fixed `n`.
pub fn r_grid(plan: &ExperimentPlan) -> Vec<u32> {
    [2u32, 3, 4, 6, 8, 12, 16, 24]
        .into_iter()
        .filter(|&r| r > plan.n_prime && r < plan.n)
        .collect()
}

fn good_set_statistics(plan: &ExperimentPlan, setup: &Setup) -> Report {
    let mut report = Report::new("verify", plan.seed);
    let start = std::time::Instant::now();
    let runs = match run_replicates(&setup.model, &setup.window, &setup.boundary, &plan.sampler(plan.seed), plan.replicates) {
        Ok(r) => r,
        Err(e) => {
            report.push(Check::failed("good-set statistics", e));
            return report;
        }
    };
    report.push(chain_health(&runs, start.elapsed().as_secs_f64()));
    let grid = r_grid(plan);
    let start = std::time::Instant::now();
    let samples = tagged_samples(&runs);
    let records: Result<Vec<Record>> = samples
        .par_iter()
        .map(|&(rep, idx, s)| {
            let seed = substream(plan.seed, &[100, rep as u64, idx as u64]);
            let instances = evaluate_sample(setup, s, seed, plan.bond_draws, true)?;
            let by_r = r_search_row(plan, setup, s, seed, &grid)?;
            Ok(Record { instances, by_r })
        })
        .collect();
    let records = match records {
        Ok(r) => r,
        Err(e) => {
            report.push(Check::failed("good-set statistics", e));
            return report;
        }
    };
    let elapsed = start.elapsed().as_secs_f64();
    let all: Vec<&Instance> = records.iter().flat_map(|r| &r.instances).collect();
    let total = all.len() as f64;
    let r = plan.r as f64;
    let range_tail = all.iter().filter(|i| i.verdict.range >= r).count() as f64 / total;
    let energy_tail = all.iter().filter(|i| i.verdict.energy >= i.verdict.threshold).count() as f64 / total;
    let mean_bonds = all.iter().map(|i| i.bonds as f64).sum::<f64>() / total;
    let threshold = all.first().map_or(f64::INFINITY, |i| i.verdict.threshold);
    let mut c = Check::info("cluster range tail", range_tail, plan.delta).with_details(json!({
        "instances": all.len(), "R": plan.r, "below_delta": range_tail <= plan.delta, "mean_bonds": mean_bonds,
    }));
    c.runtime_s = elapsed;
    report.push(c);
    report.push(Check::info("dirichlet energy tail", energy_tail, plan.delta).with_details(json!({
        "instances": all.len(), "energy_threshold": if threshold.is_finite() { json!(threshold) } else { json!(null) },
        "below_delta": energy_tail <= plan.delta,
        "max_energy": all.iter().map(|i| i.verdict.energy).fold(0.0, f64::max),
    })));

    // first R on the grid whose two tails are both at most δ
    let mut first_passing = None;
    let mut rows = Vec::new();
    for (k, &rr) in grid.iter().enumerate() {
        let draws: Vec<(f64, f64)> = records.iter().map(|rec| (rec.by_r[k].1, rec.by_r[k].2)).collect();
        let n = draws.len() as f64;
        let rt = draws.iter().filter(|d| d.0 >= rr as f64).count() as f64 / n;
        let et = draws.iter().filter(|d| d.1 >= threshold).count() as f64 / n;
        if first_passing.is_none() && rt <= plan.delta && et <= plan.delta {
            first_passing = Some(rr);
        }
        rows.push(json!({ "R": rr, "range_tail": rt, "energy_tail": et }));
    }
    report.push(
        Check::info("plateau radius search", first_passing.map_or(f64::NAN, f64::from), plan.delta)
            .with_details(json!({ "n": plan.n, "grid": rows, "first_passing_R": first_passing })),
    );

    let good: Vec<&&Instance> = all.iter().filter(|i| i.verdict.is_good).collect();
    let margins: Vec<f64> = good.iter().filter_map(|i| i.margin).filter(|m| !m.saturated).map(|m| m.relative).collect();
    let violations = margins.iter().filter(|m| **m < 0.0).count();
    let min_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let mut c = Check::at_most("taylor margin on good instances", violations as f64, 0.0).with_details(json!({
        "good_instances": good.len(), "instances": all.len(),
        "min_relative_margin": if min_margin.is_finite() { json!(min_margin) } else { json!(null) },
    }));
    if good.is_empty() {
        c = c.flag();
    }
    report.push(c);
    let broken = good.iter().filter(|i| i.intermediate_ok == Some(false)).count();
    report.push(
        Check::at_most("intermediate energy bound", broken as f64, 0.0)
            .with_details(json!({ "good_instances": good.len() })),
    );
    report
}

/// Cluster range and Dirichlet energy of the first bond draw for every `R` on the grid.
fn r_search_row(
    plan: &ExperimentPlan,
    setup: &Setup,
    inside: &mwgibbs_core::config_space::Configuration,
    seed: u64,
    grid: &[u32],
) -> Result<Vec<(u32, f64, f64)>> {
    let full = setup.full(inside)?;
    let candidates = bond_set(&full, &setup.model, &setup.window);
    let bonds = setup.law.sample(&full, &setup.model, &setup.window, substream(seed, &[0]))?;
    let cl = clusters(&full, &bonds)?;
    let range = cluster_range(&full, &cl, &setup.test_window);
    grid.iter()
        .map(|&r| {
            let taper = TaperParams::new(plan.tau, r, plan.n, plan.n_prime)?;
            let field = cluster_taper(&full, &cl, &taper)?;
            Ok((r, range, dirichlet_energy(&full, &setup.model, &candidates, &field)?))
        })
        .collect()
}

fn chain_health(runs: &[GibbsRun], runtime: f64) -> Check {
    let drift = runs.iter().map(|r| r.max_cache_drift).fold(0.0, f64::max);
    let samples: usize = runs.iter().map(|r| r.samples.len()).sum();
    let rates: Vec<serde_json::Value> = runs
        .first()
        .map(|r| {
            mwgibbs_core::sampler::MoveKind::ALL
                .iter()
                .map(|k| json!({ "move": k.name(), "acceptance": r.stats.rate(*k) }))
                .collect()
        })
        .unwrap_or_default();
    let mut c = Check::at_most("energy cache drift", drift, 1e-9)
        .with_details(json!({ "replicates": runs.len(), "samples": samples, "first_chain_rates": rates }));
    c.runtime_s = runtime;
    c
}
