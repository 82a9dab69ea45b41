//! The main-inequality experiment and the symmetry scan.

use std::f64::consts::E;

use rayon::prelude::*;
use serde_json::json;
use statrs::distribution::{ContinuousCDF, StudentsT};

use mwgibbs_core::config_space::{Configuration, Region, Window};
use mwgibbs_core::potential::PairPotentialModel;
use mwgibbs_core::sampler::{sample_gibbs_replicate, GibbsRun, SamplerParams};

use crate::ensemble::{evaluate_sample, mean, run_replicates, substream, variance, Setup};
use crate::events::TestEvent;
use crate::plan::ExperimentPlan;
use crate::report::{timed, Check, Report};
use crate::Result;

/// Membership of every sample in the approximate good set: at least a
/// fraction `1 − 2δ` of its conditional bond draws are good.
pub fn good_membership(plan: &ExperimentPlan, setup: &Setup, runs: &[GibbsRun]) -> Result<Vec<Vec<bool>>> {
    runs.iter()
        .enumerate()
        .map(|(rep, run)| {
            run.samples
                .par_iter()
                .enumerate()
                .map(|(idx, s)| {
                    let seed = substream(plan.seed, &[100, rep as u64, idx as u64]);
                    let inst = evaluate_sample(setup, s, seed, plan.bond_draws, false)?;
                    let good = inst.iter().filter(|i| i.verdict.is_good).count() as f64;
                    Ok(good / inst.len() as f64 >= 1.0 - 2.0 * plan.delta)
                })
                .collect()
        })
        .collect()
}

/// Per-replicate estimates of the three probabilities of the inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginEstimate {
    /// `γ(B ∩ 𝒳_δ)`.
    pub p_b: f64,
    /// `γ(τ⁻¹B ∩ 𝒳_δ)`.
    pub p_minus: f64,
    /// `γ(τB ∩ 𝒳_δ)`.
    pub p_plus: f64,
    pub membership: f64,
}

impl MarginEstimate {
    /// `(e/2)γ(τ⁻¹B ∩ 𝒳_δ) + (e/2)γ(τB ∩ 𝒳_δ) − γ(B ∩ 𝒳_δ)`.
    pub fn margin(&self) -> f64 {
        E / 2.0 * (self.p_minus + self.p_plus) - self.p_b
    }
}

pub fn estimate(
    samples: &[Configuration],
    member: &[bool],
    event: &TestEvent,
    window: &Window,
    tau: f64,
) -> MarginEstimate {
    let n = samples.len().max(1) as f64;
    let (mut b, mut minus, mut plus, mut m) = (0.0, 0.0, 0.0, 0.0);
    for (s, &ok) in samples.iter().zip(member) {
        if !ok {
            continue;
        }
        m += 1.0;
        b += event.holds(s, window) as u8 as f64;
        // 1_{τ⁻¹B}(Y) = 1_B(τY)
        minus += event.holds_rotated(s, window, -tau) as u8 as f64;
        plus += event.holds_rotated(s, window, tau) as u8 as f64;
    }
    MarginEstimate { p_b: b / n, p_minus: minus / n, p_plus: plus / n, membership: m / n }
}

pub fn run_main_inequality(plan: &ExperimentPlan, event: &TestEvent) -> Report {
    main_inequality_report(plan, std::slice::from_ref(event))
}

/// The inequality for several events on one shared ensemble.
pub fn main_inequality_report(plan: &ExperimentPlan, events: &[TestEvent]) -> Report {
    let mut report = Report::new("experiment", plan.seed);
    let start = std::time::Instant::now();
    let prepared = Setup::new(plan).and_then(|setup| {
        let runs = run_replicates(&setup.model, &setup.window, &setup.boundary, &plan.sampler(plan.seed), plan.replicates)?;
        let member = good_membership(plan, &setup, &runs)?;
        Ok((setup, runs, member))
    });
    let (setup, runs, member) = match prepared {
        Ok(p) => p,
        Err(e) => {
            for ev in events {
                report.push(Check::failed(&format!("main inequality [{}]", ev.name()), e.to_string()));
            }
            return report;
        }
    };
    let shared = start.elapsed().as_secs_f64();
    for ev in events {
        let mut c = timed(&format!("main inequality [{}]", ev.name()), || -> Result<Check> {
            let per: Vec<MarginEstimate> = runs
                .iter()
                .zip(&member)
                .map(|(run, m)| estimate(&run.samples, m, ev, &setup.test_window, plan.tau))
                .collect();
            Ok(margin_check(&format!("main inequality [{}]", ev.name()), &per, plan.delta))
        });
        c.runtime_s += shared / events.len() as f64;
        report.push(c);
    }
    report
}

/// `margin ≥ −2δ − 3·SE` over replicates. Fewer than two replicates, or a
/// standard error above `δ`, flag the check.
pub fn margin_check(name: &str, per: &[MarginEstimate], delta: f64) -> Check {
    let margins: Vec<f64> = per.iter().map(MarginEstimate::margin).collect();
    let m = mean(&margins);
    let se = (variance(&margins) / margins.len() as f64).sqrt();
    let noisy = !se.is_finite() || se > delta;
    let threshold = -2.0 * delta - 3.0 * if se.is_finite() { se } else { 0.0 };
    let avg = |f: fn(&MarginEstimate) -> f64| mean(&per.iter().map(f).collect::<Vec<_>>());
    let c = Check::at_least(name, m, threshold).with_details(json!({
        "replicates": per.len(),
        "standard_error": if se.is_finite() { json!(se) } else { json!(null) },
        "p_b": avg(|e| e.p_b),
        "p_tau_inverse_b": avg(|e| e.p_minus),
        "p_tau_b": avg(|e| e.p_plus),
        "good_fraction": avg(|e| e.membership),
        "good_set": "samples whose conditional bond draws are good with frequency at least 1 - 2 delta",
    }));
    if noisy {
        c.flag()
    } else {
        c
    }
}

/// Time-averaged `|mean e^{iσ}|` over the particles of `window`, per run.
pub fn order_parameter(run: &GibbsRun, window: &Window) -> f64 {
    let (mut x, mut y, mut k) = (0.0, 0.0, 0usize);
    for s in &run.samples {
        for p in s.iter().filter(|p| window.contains(&p.position)) {
            let a = p.spin.angle();
            x += a.cos();
            y += a.sin();
            k += 1;
        }
    }
    if k == 0 {
        0.0
    } else {
        x.hypot(y) / k as f64
    }
}

/// One-sided Welch test p-value for `mean(b) > mean(a)`.
pub fn welch_increase_p_value(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (variance(a) / a.len() as f64, variance(b) / b.len() as f64);
    let s2 = va + vb;
    if !(s2 > 0.0) {
        return if mb > ma { 0.0 } else { 1.0 };
    }
    let t = (mb - ma) / s2.sqrt();
    let df = s2 * s2 / (va * va / (a.len() - 1) as f64 + vb * vb / (b.len() - 1) as f64);
    match StudentsT::new(0.0, 1.0, df) {
        Ok(dist) => 1.0 - dist.cdf(t),
        Err(_) => f64::NAN,
    }
}

fn scan_params(plan: &ExperimentPlan) -> SamplerParams {
    SamplerParams { sweeps: plan.scan_sweeps, ..plan.sampler(substream(plan.seed, &[200])) }
}

pub fn run_symmetry_scan(plan: &ExperimentPlan, event: &TestEvent) -> Report {
    let mut report = Report::new("experiment", plan.seed);
    let model = match plan.model.build() {
        Ok(m) => m,
        Err(e) => {
            report.push(Check::failed("symmetry scan", e));
            return report;
        }
    };
    let test_window = plan.test_window();
    let params = scan_params(plan);
    let mut order: Vec<(u32, Vec<f64>)> = Vec::new();
    let mut table = Vec::new();
    let mut zero_gap = 0.0f64;
    let mut max_gap = 0.0f64;
    let start = std::time::Instant::now();
    for &n in &plan.scan_sizes {
        let res = (|| -> Result<Vec<GibbsRun>> {
            let boundary = plan.boundary_for(&model, n)?;
            run_replicates(&model, &Window::new(n as f64)?, &boundary, &params, plan.scan_replicates)
        })();
        let runs = match res {
            Ok(r) => r,
            Err(e) => {
                report.push(Check::failed(&format!("symmetry scan n={n}"), e));
                return report;
            }
        };
        order.push((n, runs.iter().map(|r| order_parameter(r, &test_window)).collect()));
        let all: Vec<&Configuration> = runs.iter().flat_map(|r| &r.samples).collect();
        let p = |tau: f64| {
            all.iter().filter(|s| event.holds_rotated(s, &test_window, tau)).count() as f64 / all.len().max(1) as f64
        };
        let base = p(0.0);
        zero_gap = zero_gap.max((base - all.iter().filter(|s| event.holds(s, &test_window)).count() as f64 / all.len().max(1) as f64).abs());
        let row: Vec<serde_json::Value> = plan
            .scan_taus
            .iter()
            .map(|&t| {
                let d = (p(t) - base).abs();
                max_gap = max_gap.max(d);
                json!({ "tau": t, "abs_difference": d })
            })
            .collect();
        table.push(json!({ "n": n, "p_b": base, "rotations": row }));
    }
    let elapsed = start.elapsed().as_secs_f64();
    let mut c = Check::at_most("rotation by zero", zero_gap, 0.0);
    c.runtime_s = elapsed;
    report.push(c);
    report.push(
        Check::info(&format!("rotated event probabilities [{}]", event.name()), max_gap, 0.0)
            .with_details(json!({ "sizes": table })),
    );
    let mut p_min = 1.0f64;
    let mut steps = Vec::new();
    for w in order.windows(2) {
        let p = welch_increase_p_value(&w[0].1, &w[1].1);
        p_min = p_min.min(p);
        steps.push(json!({ "from": w[0].0, "to": w[1].0, "p_value": p }));
    }
    let curve: Vec<serde_json::Value> = order
        .iter()
        .map(|(n, v)| json!({ "n": n, "mean": mean(v), "standard_error": (variance(v) / v.len() as f64).sqrt() }))
        .collect();
    let mut c = Check::at_least("order parameter nonincreasing", p_min, 0.05)
        .with_details(json!({ "curve": curve, "tests": steps, "test": "one-sided Welch, increase at 5%" }));
    if order.len() < 2 || plan.scan_replicates < 2 {
        c = c.flag();
    }
    report.push(c);
    report.push(ideal_gas_invariance(plan, event));
    report
}

/// Matched seeds: the ideal-gas chain with birth frame `τ` reproduces the
/// frame-0 chain rotated by `τ`, so `P̂_τ(B) = P̂_0(τ⁻¹B)` exactly.
pub fn ideal_gas_invariance(plan: &ExperimentPlan, event: &TestEvent) -> Check {
    const NAME: &str = "ideal-gas matched-seed invariance";
    timed(NAME, || -> Result<Check> {
        let model = PairPotentialModel::ideal_gas();
        let n = plan.scan_sizes.first().copied().unwrap_or(plan.n);
        let window = Window::new(n as f64)?;
        let tw = plan.test_window();
        let base = scan_params(plan);
        let reps = plan.scan_replicates.min(2);
        let chains = |frame: f64| -> Result<Vec<GibbsRun>> {
            let params = SamplerParams { spin_frame: frame, ..base.clone() };
            (0..reps)
                .map(|k| Ok(sample_gibbs_replicate(&model, &window, &Configuration::empty(), &params, k as u64)?))
                .collect()
        };
        let reference = chains(0.0)?;
        let mut worst = 0.0f64;
        let mut mismatched = 0usize;
        let mut compared = 0usize;
        for &tau in &plan.scan_taus {
            let turned = chains(tau)?;
            let (mut a, mut b) = (0usize, 0usize);
            for (r0, rt) in reference.iter().zip(&turned) {
                for (s0, st) in r0.samples.iter().zip(&rt.samples) {
                    mismatched += (s0.rotate_all(tau) != *st) as usize;
                    a += event.holds_rotated(s0, &tw, -tau) as usize;
                    b += event.holds(st, &tw) as usize;
                    compared += 1;
                }
            }
            worst = worst.max((a as f64 - b as f64).abs() / compared.max(1) as f64);
        }
        Ok(Check::at_most(NAME, worst + mismatched as f64, 0.0)
            .with_details(json!({ "n": n, "samples_compared": compared, "mismatched_samples": mismatched })))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welch_detects_a_clear_increase() {
        let a = [0.1, 0.12, 0.09, 0.11];
        let b = [0.5, 0.52, 0.49, 0.51];
        assert!(welch_increase_p_value(&a, &b) < 1e-4);
        assert!(welch_increase_p_value(&b, &a) > 0.99);
        assert_eq!(welch_increase_p_value(&[1.0, 1.0], &[1.0, 1.0]), 1.0);
    }

    #[test]
    fn margin_of_full_event_is_e_minus_one_times_membership() {
        let per = vec![
            MarginEstimate { p_b: 0.5, p_minus: 0.5, p_plus: 0.5, membership: 0.5 },
            MarginEstimate { p_b: 0.7, p_minus: 0.7, p_plus: 0.7, membership: 0.7 },
        ];
        let c = margin_check("m", &per, 0.05);
        assert!((c.statistic - (E - 1.0) * 0.6).abs() < 1e-12);
        assert!(c.pass);
        let lone = margin_check("m", &per[..1], 0.05);
        assert!(lone.flagged && lone.pass);
    }
}
