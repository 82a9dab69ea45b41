//! Experiment plans: model choice, window sizes, taper, sampler settings.

use std::f64::consts::PI;
use std::fs::File;
use std::path::{Path, PathBuf};

use mwgibbs_core::bonds::DominationParams;
use mwgibbs_core::config_space::{Configuration, MarkedParticle, Region, Window};
use mwgibbs_core::deformation::TaperParams;
use mwgibbs_core::potential::{
    Coupling, CoreRepulsion, PairPotentialModel, PeriodicTable, RadialTable, SpinProfile,
};
use mwgibbs_core::sampler::SamplerParams;
use mwgibbs_core::smoothing::{smooth_decompose, SmoothDecomposition};

use crate::config::{Config, ConfigError};

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Reference { j0: f64, hard_core: f64 },
    IdealGas,
    /// A model file of flat keys, see [`ModelSpec::load_file`].
    File(PathBuf),
}

impl ModelSpec {
    pub fn build(&self) -> Result<PairPotentialModel, ConfigError> {
        match self {
            ModelSpec::Reference { j0, hard_core } => {
                PairPotentialModel::reference(*j0, *hard_core).map_err(invalid)
            }
            ModelSpec::IdealGas => Ok(PairPotentialModel::ideal_gas()),
            ModelSpec::File(path) => ModelSpec::load_file(path),
        }
    }

    /// Keys: `model.kind` (`xy`, `custom-table` or `ideal`), `model.j0`,
    /// `model.hardcore_radius` (0 for none), and for `custom-table` the CSV
    /// files `model.coupling_table` (`radius,value`) and `model.spin_table`
    /// (`angle,value`), each optional and relative to the model file.
    pub fn load_file(path: &Path) -> Result<PairPotentialModel, ConfigError> {
        let c = Config::load(path)?;
        c.check_keys(&["model.kind", "model.j0", "model.hardcore_radius", "model.coupling_table", "model.spin_table"])?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let open = |key: &str| -> Result<Option<File>, ConfigError> {
            let Some(rel) = c.raw(key) else { return Ok(None) };
            let p = dir.join(rel);
            File::open(&p).map(Some).map_err(|source| ConfigError::Io {
                path: p.display().to_string(),
                source,
            })
        };
        let j0: f64 = c.get_or("model.j0", 1.0)?;
        let r: f64 = c.get_or("model.hardcore_radius", 0.2)?;
        let core = if r > 0.0 {
            CoreRepulsion::HardCore { radius: r }
        } else {
            CoreRepulsion::None
        };
        let negcos = SpinProfile::NegCos { amplitude: 1.0 };
        match c.raw("model.kind").unwrap_or("xy") {
            "xy" => PairPotentialModel::new(Coupling::gaussian(j0), core, negcos).map_err(invalid),
            "ideal" => Ok(PairPotentialModel::ideal_gas()),
            "custom-table" => {
                let coupling = match open("model.coupling_table")? {
                    Some(f) => Coupling::Table(RadialTable::from_csv(f).map_err(invalid)?),
                    None => Coupling::gaussian(j0),
                };
                let spin = match open("model.spin_table")? {
                    Some(f) => SpinProfile::Table(PeriodicTable::from_csv(f).map_err(invalid)?),
                    None => negcos,
                };
                PairPotentialModel::new(coupling, core, spin).map_err(invalid)
            }
            other => Err(ConfigError::Invalid(format!("unknown model kind `{other}`"))),
        }
    }
}

fn invalid(e: mwgibbs_core::Error) -> ConfigError {
    ConfigError::Invalid(e.to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundarySpec {
    Empty,
    /// Lattice of spacing `spacing` filling the shell of interaction width
    /// around `Λ_n`, all spins at `angle`.
    AlignedRing { spacing: f64, angle: f64 },
    Csv(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub model: ModelSpec,
    pub n: u32,
    pub n_prime: u32,
    pub r: u32,
    pub tau: f64,
    pub z: f64,
    pub xi: f64,
    /// Defaults to the domination `ε`.
    pub smoothing_epsilon: Option<f64>,
    /// Defaults to 90% of the largest admissible value.
    pub domination_epsilon: Option<f64>,
    pub delta: f64,
    pub replicates: usize,
    pub bond_draws: usize,
    pub sweeps: usize,
    pub burn_in: f64,
    pub thin: usize,
    pub translate_scale: f64,
    pub rotate_scale: f64,
    pub recompute_every: usize,
    pub boundary: BoundarySpec,
    pub scan_sizes: Vec<u32>,
    pub scan_replicates: usize,
    pub scan_sweeps: usize,
    pub scan_taus: Vec<f64>,
    pub seed: u64,
    pub out: PathBuf,
}

/// Coupling strength of the desk plan. At `J₀ = 1` the reference model
/// condenses into a dense aligned phase at every activity tried.
pub const DESK_J0: f64 = 0.25;

pub const PLAN_KEYS: &[&str] = &[
    "model", "j0", "hardcore_radius", "n", "n_prime", "r", "tau", "z", "xi", "smoothing_epsilon",
    "domination_epsilon", "delta", "replicates", "bond_draws", "sweeps", "burn_in", "thin",
    "translate_scale", "rotate_scale", "recompute_every", "boundary", "ring_spacing", "ring_angle",
    "scan_sizes", "scan_replicates", "scan_sweeps", "scan_taus", "seed", "out",
];

impl Default for ExperimentPlan {
    /// The desk plan.
    fn default() -> Self {
        ExperimentPlan {
            model: ModelSpec::Reference { j0: DESK_J0, hard_core: 0.2 },
            n: 16,
            n_prime: 2,
            r: 4,
            tau: 0.4,
            z: 0.6,
            xi: 1.5,
            smoothing_epsilon: None,
            domination_epsilon: None,
            delta: 0.05,
            replicates: 32,
            bond_draws: 4,
            sweeps: 300,
            burn_in: 0.2,
            thin: 8,
            translate_scale: 0.4,
            rotate_scale: 1.0,
            recompute_every: 25,
            boundary: BoundarySpec::AlignedRing { spacing: 1.25, angle: 0.0 },
            scan_sizes: vec![8, 16, 32],
            scan_replicates: 8,
            scan_sweeps: 300,
            scan_taus: vec![0.0, 0.4, 0.8, 1.6],
            seed: 1,
            out: PathBuf::from("out"),
        }
    }
}

impl ExperimentPlan {
    /// Reads a plan; missing keys keep their desk values.
    pub fn from_config(c: &Config, base_dir: &Path) -> Result<Self, ConfigError> {
        c.check_keys(PLAN_KEYS)?;
        let d = ExperimentPlan::default();
        let model = match c.raw("model").unwrap_or("reference") {
            "reference" => ModelSpec::Reference {
                j0: c.get_or("j0", DESK_J0)?,
                hard_core: c.get_or("hardcore_radius", 0.2)?,
            },
            "ideal" | "ideal-gas" => ModelSpec::IdealGas,
            path => ModelSpec::File(base_dir.join(path)),
        };
        let boundary = match c.raw("boundary").unwrap_or("ring") {
            "ring" => BoundarySpec::AlignedRing {
                spacing: c.get_or("ring_spacing", 1.25)?,
                angle: c.get_or("ring_angle", 0.0)?,
            },
            "empty" => BoundarySpec::Empty,
            path => BoundarySpec::Csv(base_dir.join(path)),
        };
        let plan = ExperimentPlan {
            model,
            n: c.get_or("n", d.n)?,
            n_prime: c.get_or("n_prime", d.n_prime)?,
            r: c.get_or("r", d.r)?,
            tau: c.get_or("tau", d.tau)?,
            z: c.get_or("z", d.z)?,
            xi: c.get_or("xi", d.xi)?,
            smoothing_epsilon: c.get("smoothing_epsilon")?,
            domination_epsilon: c.get("domination_epsilon")?,
            delta: c.get_or("delta", d.delta)?,
            replicates: c.get_or("replicates", d.replicates)?,
            bond_draws: c.get_or("bond_draws", d.bond_draws)?,
            sweeps: c.get_or("sweeps", d.sweeps)?,
            burn_in: c.get_or("burn_in", d.burn_in)?,
            thin: c.get_or("thin", d.thin)?,
            translate_scale: c.get_or("translate_scale", d.translate_scale)?,
            rotate_scale: c.get_or("rotate_scale", d.rotate_scale)?,
            recompute_every: c.get_or("recompute_every", d.recompute_every)?,
            boundary,
            scan_sizes: c.get_list("scan_sizes")?.unwrap_or(d.scan_sizes),
            scan_replicates: c.get_or("scan_replicates", d.scan_replicates)?,
            scan_sweeps: c.get_or("scan_sweeps", d.scan_sweeps)?,
            scan_taus: c.get_list("scan_taus")?.unwrap_or(d.scan_taus),
            seed: c.get_or("seed", d.seed)?,
            out: c.raw("out").map(PathBuf::from).unwrap_or(d.out),
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let c = Config::load(path)?;
        ExperimentPlan::from_config(&c, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.taper().map_err(invalid)?;
        let bad = |m: &str| Err(ConfigError::Invalid(m.into()));
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta must lie in (0, 1)");
        }
        if self.replicates == 0 || self.bond_draws == 0 || self.scan_replicates == 0 {
            return bad("replicates, bond_draws and scan_replicates must be positive");
        }
        if self.scan_sizes.is_empty() || self.scan_sizes.iter().any(|&s| s <= self.n_prime) {
            return bad("scan sizes must exceed n'");
        }
        if self.scan_taus.iter().any(|t| !(0.0..PI).contains(t)) {
            return bad("scan angles must lie in [0, pi)");
        }
        self.sampler(self.seed).validate().map_err(invalid)?;
        if let Some(e) = self.smoothing_epsilon {
            if !(e > 0.0) {
                return bad("smoothing_epsilon must be positive");
            }
        }
        Ok(())
    }

    pub fn taper(&self) -> mwgibbs_core::Result<TaperParams> {
        TaperParams::new(self.tau, self.r, self.n, self.n_prime)
    }

    pub fn window(&self) -> Window {
        Window::new(self.n as f64).expect("validated")
    }

    pub fn test_window(&self) -> Window {
        Window::new(self.n_prime as f64).expect("validated")
    }

    pub fn sampler(&self, seed: u64) -> SamplerParams {
        SamplerParams {
            z: self.z,
            sweeps: self.sweeps,
            translate_scale: self.translate_scale,
            rotate_scale: self.rotate_scale,
            seed,
            burn_in: self.burn_in,
            thin: self.thin,
            recompute_every: self.recompute_every,
            ..SamplerParams::default()
        }
    }

    pub fn domination(&self, model: &PairPotentialModel) -> mwgibbs_core::Result<DominationParams> {
        match self.domination_epsilon {
            Some(e) => DominationParams::new(e, model.c_j, self.z, self.xi),
            None => DominationParams::default_for(model.c_j, self.z, self.xi),
        }
    }

    pub fn decomposition(&self, model: &PairPotentialModel) -> mwgibbs_core::Result<SmoothDecomposition> {
        let eps = match self.smoothing_epsilon {
            Some(e) => e,
            None => self.domination(model)?.epsilon,
        };
        smooth_decompose(&model.spin, eps)
    }

    /// The exterior condition for window half-width `n`.
    pub fn boundary_for(&self, model: &PairPotentialModel, n: u32) -> Result<Configuration, ConfigError> {
        match &self.boundary {
            BoundarySpec::Empty => Ok(Configuration::empty()),
            BoundarySpec::Csv(path) => {
                let c = Configuration::load_csv(path).map_err(invalid)?;
                let w = Window::new(n as f64).expect("positive");
                if c.iter().any(|p| w.contains(&p.position)) {
                    return Err(ConfigError::Invalid(format!(
                        "boundary file {} has particles inside the window",
                        path.display()
                    )));
                }
                Ok(c)
            }
            BoundarySpec::AlignedRing { spacing, angle } => {
                if !(*spacing > 0.0) {
                    return Err(ConfigError::Invalid("ring_spacing must be positive".into()));
                }
                let width = model.interaction_range();
                let outer = n as f64 + width;
                let w = Window::new(n as f64).expect("positive");
                let k = (2.0 * outer / spacing).ceil() as i64;
                let mut ps = Vec::new();
                for i in 0..k {
                    for j in 0..k {
                        let p = MarkedParticle::at(
                            -outer + (i as f64 + 0.5) * spacing,
                            -outer + (j as f64 + 0.5) * spacing,
                            *angle,
                        );
                        if !w.contains(&p.position) && p.position.norm() < outer {
                            ps.push(p);
                        }
                    }
                }
                Configuration::new(ps).map_err(invalid)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_plan_is_valid() {
        let p = ExperimentPlan::default();
        p.validate().unwrap();
        let m = p.model.build().unwrap();
        let eps = p.domination(&m).unwrap().epsilon;
        assert!((eps - 0.9 / (2.0 * 0.6 * 1.5 * m.c_j)).abs() < 1e-15);
        let b = p.boundary_for(&m, p.n).unwrap();
        assert!(!b.is_empty());
        assert!(b.iter().all(|q| !p.window().contains(&q.position)));
    }

    #[test]
    fn malformed_plans_fail_validation() {
        let c = Config::parse("n = 4\nr = 4").unwrap();
        assert!(ExperimentPlan::from_config(&c, Path::new(".")).is_err());
        let c = Config::parse("colour = red").unwrap();
        assert!(ExperimentPlan::from_config(&c, Path::new(".")).is_err());
        let c = Config::parse("model = ideal\nn = 10\nr = 3").unwrap();
        let p = ExperimentPlan::from_config(&c, Path::new(".")).unwrap();
        assert_eq!(p.model, ModelSpec::IdealGas);
        assert_eq!(p.n, 10);
    }
}
