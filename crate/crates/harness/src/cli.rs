//! The `mwgibbs` command line.

use std::ffi::OsString;
use std::f64::consts::TAU;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use serde_json::json;

use mwgibbs_core::bonds::{cluster_range, conditional_bond_probability, sample_bonds_with};
use mwgibbs_core::config_space::Configuration;
use mwgibbs_core::deformation::{good_set_verdict, taylor_margin};
use mwgibbs_core::sampler::sample_gibbs_replicate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checks;
use crate::ensemble::{field_for, run_replicates, substream, Setup};
use crate::events::TestEvent;
use crate::experiment::{run_main_inequality, run_symmetry_scan};
use crate::plan::ExperimentPlan;
use crate::report::{Check, Report};
use crate::suite::{run_lemma_suite, TRIALS};
use crate::{io_err, HarnessError, Result};

#[derive(Debug, Parser)]
#[command(name = "mwgibbs", version, about = "Continuous-symmetry experiments on marked Gibbs point processes")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// Master seed; overrides the plan's `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Plan file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides the plan's `out`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the replicated chains and write the final sample of each.
    Sample,
    /// Smooth the spin profile and tabulate `V̄` and `v`.
    Decompose {
        /// Grid points of the table.
        #[arg(long, default_value_t = 512)]
        points: usize,
    },
    /// Draw a conditional bond set on one configuration.
    Bonds {
        /// Interior configuration (`id,x,y,spin`); defaults to a fresh sample.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Also run the pointwise and exhaustive domination checks.
        #[arg(long)]
        verify_domination: bool,
    },
    /// Build the cluster-constant deformation for one bond draw.
    Deform {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Run the lemma suite.
    Verify,
    /// Run the main inequality for one event, then the symmetry scan.
    Experiment {
        /// `half-plane[:angle]`, `sector[:start:width:min]`, `count-band[:lo:hi]`, `full` or `impossible`.
        #[arg(long, default_value = "half-plane")]
        event: String,
        /// Skip the symmetry scan.
        #[arg(long)]
        no_scan: bool,
    },
    /// Print a stored report and exit with its verdict.
    Report {
        /// Report file; defaults to `report.json` in the output directory.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

/// Parses `args`, runs the command and returns the process exit code:
/// 0 when every check passes, 1 on a failed check, 2 on usage or plan errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    match execute(&cli) {
        Ok(report) => {
            for c in &report.checks {
                println!("{}", c.summary());
            }
            if report.all_pass {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

pub fn load_plan(cli: &Cli) -> Result<ExperimentPlan> {
    let mut plan = match &cli.config {
        Some(path) => ExperimentPlan::load(path)?,
        None => ExperimentPlan::default(),
    };
    if let Some(s) = cli.seed {
        plan.seed = s;
    }
    if let Some(o) = &cli.out {
        plan.out = o.clone();
    }
    plan.validate()?;
    Ok(plan)
}

pub fn execute(cli: &Cli) -> Result<Report> {
    if let Command::Report { input } = &cli.command {
        let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        let path = input.clone().unwrap_or_else(|| out.join("report.json"));
        return Report::read(&path).map_err(io_err(format!("reading {}", path.display())));
    }
    let plan = load_plan(cli)?;
    let report = match &cli.command {
        Command::Sample => sample(&plan)?,
        Command::Decompose { points } => decompose(&plan, *points)?,
        Command::Bonds { input, verify_domination } => bonds(&plan, input.as_deref(), *verify_domination)?,
        Command::Deform { input } => deform(&plan, input.as_deref())?,
        Command::Verify => run_lemma_suite(&plan),
        Command::Experiment { event, no_scan } => {
            let ev: TestEvent = event.parse().map_err(HarnessError::Usage)?;
            let mut r = run_main_inequality(&plan, &ev);
            if !no_scan {
                r.extend(run_symmetry_scan(&plan, &ev));
            }
            r
        }
        Command::Report { .. } => unreachable!(),
    };
    let path = plan.out.join("report.json");
    report.write(&path).map_err(io_err(format!("writing {}", path.display())))?;
    Ok(report)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(format!("creating {}", dir.display())))
}

fn sample(plan: &ExperimentPlan) -> Result<Report> {
    let setup = Setup::new(plan)?;
    let start = std::time::Instant::now();
    let runs = run_replicates(&setup.model, &setup.window, &setup.boundary, &plan.sampler(plan.seed), plan.replicates)?;
    let dir = plan.out.join("samples");
    create_dir(&dir)?;
    let mut counts = Vec::new();
    for (k, run) in runs.iter().enumerate() {
        if let Some(last) = run.samples.last() {
            last.save_csv(&dir.join(format!("replicate_{k:03}.csv")))?;
            counts.push(last.len());
        }
    }
    setup.boundary.save_csv(&dir.join("boundary.csv"))?;
    let drift = runs.iter().map(|r| r.max_cache_drift).fold(0.0, f64::max);
    let mut c = Check::at_most("energy cache drift", drift, 1e-9).with_details(json!({
        "replicates": runs.len(),
        "samples_per_replicate": runs.first().map_or(0, |r| r.samples.len()),
        "final_counts": counts,
    }));
    c.runtime_s = start.elapsed().as_secs_f64();
    let mut report = Report::new("sample", plan.seed);
    report.push(c);
    Ok(report)
}

fn decompose(plan: &ExperimentPlan, points: usize) -> Result<Report> {
    let setup = Setup::new(plan)?;
    let d = setup.law.upper();
    let path = plan.out.join("decomposition.csv");
    create_dir(&plan.out)?;
    let mut w = csv::Writer::from_path(&path).map_err(|e| HarnessError::Usage(e.to_string()))?;
    let write = |w: &mut csv::Writer<File>, rec: [String; 4]| w.write_record(rec).map_err(|e| HarnessError::Usage(e.to_string()));
    write(&mut w, ["sigma".into(), "v_profile".into(), "vbar".into(), "v".into()])?;
    for k in 0..points.max(1) {
        let s = TAU * k as f64 / points.max(1) as f64;
        write(&mut w, [format!("{s:e}"), format!("{:e}", d.base.at(s)), format!("{:e}", d.vbar(s)), format!("{:e}", d.v(s))])?;
    }
    w.flush().map_err(io_err(format!("writing {}", path.display())))?;
    let mut report = Report::new("decompose", plan.seed);
    report.push(checks::smoothing_contract(&[("model", setup.model.spin.clone())], d.epsilon));
    report.push(Check::info("smoothing delta", d.delta, d.epsilon).with_details(json!({
        "vbar_second_sup": d.vbar_second_sup, "energy_threshold": 2.0 / d.vbar_second_sup,
    })));
    Ok(report)
}

/// The given interior configuration, or the final sample of replicate 0.
fn configuration(plan: &ExperimentPlan, setup: &Setup, input: Option<&Path>) -> Result<Configuration> {
    match input {
        Some(p) => Ok(Configuration::load_csv(p)?),
        None => {
            let run = sample_gibbs_replicate(&setup.model, &setup.window, &setup.boundary, &plan.sampler(plan.seed), 0)?;
            Ok(run.samples.last().cloned().unwrap_or_default())
        }
    }
}

fn bonds(plan: &ExperimentPlan, input: Option<&Path>, verify: bool) -> Result<Report> {
    let setup = Setup::new(plan)?;
    let inside = configuration(plan, &setup, input)?;
    let full = setup.full(&inside)?;
    let mut rng = ChaCha8Rng::seed_from_u64(substream(plan.seed, &[300]));
    let d = setup.law.upper();
    let (present, table) = sample_bonds_with(&full, &setup.model, &setup.window, &mut rng, |a, b| {
        conditional_bond_probability(&setup.model, d, a, b)
    })?;
    let dir = plan.out.join("bonds");
    create_dir(&dir)?;
    let path = dir.join("bonds.csv");
    let mut f = File::create(&path).map_err(io_err(format!("creating {}", path.display())))?;
    let mut text = String::from("i,j,p_e,present\n");
    for (b, p) in &table {
        text += &format!("{},{},{:e},{}\n", b.i, b.j, p, present.contains(b) as u8);
    }
    f.write_all(text.as_bytes()).map_err(io_err(format!("writing {}", path.display())))?;
    full.save_csv(&dir.join("configuration.csv"))?;
    let (cl, _) = field_for(&full, &present, &setup.taper)?;
    let clusters_json = json!({
        "labels": cl.labels, "members": cl.members, "max_norm": cl.max_norm,
        "range_test_window": cluster_range(&full, &cl, &setup.test_window),
    });
    let path = dir.join("clusters.json");
    std::fs::write(&path, serde_json::to_string_pretty(&clusters_json).expect("json"))
        .map_err(io_err(format!("writing {}", path.display())))?;
    let mut report = Report::new("bonds", plan.seed);
    report.push(
        Check::info("bond draw", present.len() as f64, table.len() as f64)
            .with_details(json!({ "particles": full.len(), "clusters": cl.len() })),
    );
    if verify {
        let eps = plan.domination(&setup.model)?.epsilon;
        report.push(checks::pointwise_domination(&setup.model, d, eps, TRIALS, substream(plan.seed, &[2])));
        report.push(checks::exhaustive_domination(&checks::tiny_systems(&setup.model)?, d, eps));
    }
    Ok(report)
}

fn deform(plan: &ExperimentPlan, input: Option<&Path>) -> Result<Report> {
    let setup = Setup::new(plan)?;
    let inside = configuration(plan, &setup, input)?;
    let full = setup.full(&inside)?;
    let bonds = setup.law.sample(&full, &setup.model, &setup.window, substream(plan.seed, &[300]))?;
    let (_, field) = field_for(&full, &bonds, &setup.taper)?;
    let dir = plan.out.join("fields");
    create_dir(&dir)?;
    let path = dir.join("field.csv");
    let mut text = String::from("id,angle,witness\n");
    for (i, (a, w)) in field.angle.iter().zip(&field.witness).enumerate() {
        text += &format!("{i},{a:e},{w}\n");
    }
    std::fs::write(&path, text).map_err(io_err(format!("writing {}", path.display())))?;
    let verdict = good_set_verdict(&full, &setup.model, setup.law.upper(), &bonds, &setup.taper)?;
    let mut report = Report::new("deform", plan.seed);
    report.push(Check::info("good set", verdict.is_good as u8 as f64, 1.0).with_details(json!(verdict)));
    if verdict.is_good {
        let m = taylor_margin(&full, &setup.smooth, &setup.window, &field)?;
        report.push(Check::at_least("taylor margin", m.relative, 0.0).with_details(json!(m)));
    }
    Ok(report)
}
