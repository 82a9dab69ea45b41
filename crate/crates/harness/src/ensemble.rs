//! Replicated chains and per-sample bond draws.

use rayon::prelude::*;

use mwgibbs_core::bonds::{
    bond_set, clusters, conditional_bond_probability, sample_bonds_with, BondSet, ClusterDecomposition,
};
use mwgibbs_core::config_space::{Configuration, Window};
use mwgibbs_core::deformation::{
    cluster_taper, good_set_verdict, intermediate_bound_holds, taylor_margin, DeformationField,
    GoodSetVerdict, TaperParams, TaylorMargin,
};
use mwgibbs_core::potential::PairPotentialModel;
use mwgibbs_core::sampler::{sample_gibbs_replicate, GibbsRun, SamplerParams};
use mwgibbs_core::smoothing::{sign_split_decompose, SignSplitDecomposition, SmoothDecomposition};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::plan::ExperimentPlan;
use crate::Result;

/// Decomposition used for the conditional bond law. Models whose coupling
/// changes sign route negative pairs to the lower decomposition.
#[derive(Debug, Clone)]
pub enum BondLaw {
    Upper(SmoothDecomposition),
    Split(SignSplitDecomposition),
}

impl BondLaw {
    /// The decomposition whose `V̄` enters the smooth Hamiltonian.
    pub fn upper(&self) -> &SmoothDecomposition {
        match self {
            BondLaw::Upper(d) => d,
            BondLaw::Split(s) => &s.plus,
        }
    }

    pub fn sample(
        &self,
        cfg: &Configuration,
        model: &PairPotentialModel,
        window: &Window,
        seed: u64,
    ) -> Result<BondSet> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (set, _) = sample_bonds_with(cfg, model, window, &mut rng, |a, b| match self {
            BondLaw::Upper(d) => conditional_bond_probability(model, d, a, b),
            BondLaw::Split(s) => {
                let j = model.coupling_between(&a.position, &b.position);
                conditional_bond_probability(model, if j >= 0.0 { &s.plus } else { &s.minus }, a, b)
            }
        })?;
        Ok(set)
    }
}

/// Everything derived from a plan at its window `Λ_n`.
#[derive(Debug, Clone)]
pub struct Setup {
    pub model: PairPotentialModel,
    /// The model with `V` replaced by `V̄`.
    pub smooth: PairPotentialModel,
    pub law: BondLaw,
    pub taper: TaperParams,
    pub window: Window,
    pub test_window: Window,
    pub boundary: Configuration,
}

impl Setup {
    pub fn new(plan: &ExperimentPlan) -> Result<Self> {
        let model = plan.model.build()?;
        let decomp = plan.decomposition(&model)?;
        let law = if model.coupling.is_nonnegative() {
            BondLaw::Upper(decomp)
        } else {
            BondLaw::Split(sign_split_decompose(&model.spin, decomp.epsilon)?)
        };
        let smooth = model.with_spin(law.upper().smooth_profile());
        let boundary = plan.boundary_for(&model, plan.n)?;
        Ok(Setup {
            model,
            smooth,
            law,
            taper: plan.taper()?,
            window: plan.window(),
            test_window: plan.test_window(),
            boundary,
        })
    }

    /// Interior sample together with the boundary particles.
    pub fn full(&self, inside: &Configuration) -> Result<Configuration> {
        Ok(inside.union(&self.boundary)?)
    }
}

/// Mixes `tags` into `seed` (SplitMix64 finalizer per tag).
pub fn substream(seed: u64, tags: &[u64]) -> u64 {
    let mut x = seed;
    for &t in tags {
        x ^= t.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(x << 6).wrapping_add(x >> 2);
        x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
        x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        x ^= x >> 31;
    }
    x
}

/// Independent chains on ChaCha streams `0..count` of `params.seed`.
pub fn run_replicates(
    model: &PairPotentialModel,
    window: &Window,
    boundary: &Configuration,
    params: &SamplerParams,
    count: usize,
) -> Result<Vec<GibbsRun>> {
    (0..count)
        .into_par_iter()
        .map(|k| Ok(sample_gibbs_replicate(model, window, boundary, params, k as u64)?))
        .collect()
}

/// One conditional bond draw on a sample, with its verdict and, when
/// requested, the Taylor margin of the induced deformation.
#[derive(Debug, Clone)]
pub struct Instance {
    pub bonds: usize,
    pub verdict: GoodSetVerdict,
    pub margin: Option<TaylorMargin>,
    pub intermediate_ok: Option<bool>,
}

/// Draws `draws` bond sets on `inside ∪ boundary` and evaluates each.
pub fn evaluate_sample(
    setup: &Setup,
    inside: &Configuration,
    seed: u64,
    draws: usize,
    with_margin: bool,
) -> Result<Vec<Instance>> {
    let full = setup.full(inside)?;
    let candidates = bond_set(&full, &setup.model, &setup.window);
    let ps = full.particles();
    let coupling_mass: f64 = candidates
        .iter()
        .map(|b| setup.model.coupling_between(&ps[b.i].position, &ps[b.j].position).abs())
        .sum();
    (0..draws)
        .map(|k| {
            let bonds = setup.law.sample(&full, &setup.model, &setup.window, substream(seed, &[k as u64]))?;
            let verdict = good_set_verdict(&full, &setup.model, setup.law.upper(), &bonds, &setup.taper)?;
            let (margin, intermediate_ok) = if with_margin && verdict.is_good {
                let field = field_for(&full, &bonds, &setup.taper)?.1;
                let m = taylor_margin(&full, &setup.smooth, &setup.window, &field)?;
                let ok = intermediate_bound_holds(&m, setup.law.upper().vbar_second_sup, verdict.energy, coupling_mass);
                (Some(m), Some(ok))
            } else {
                (None, None)
            };
            Ok(Instance { bonds: bonds.len(), verdict, margin, intermediate_ok })
        })
        .collect()
}

pub fn field_for(
    full: &Configuration,
    bonds: &BondSet,
    taper: &TaperParams,
) -> Result<(ClusterDecomposition, DeformationField)> {
    let cl = clusters(full, bonds)?;
    let field = cluster_taper(full, &cl, taper)?;
    Ok((cl, field))
}

/// Samples of every run, tagged `(replicate, index)`.
pub fn tagged_samples(runs: &[GibbsRun]) -> Vec<(usize, usize, &Configuration)> {
    runs.iter()
        .enumerate()
        .flat_map(|(r, run)| run.samples.iter().enumerate().map(move |(i, s)| (r, i, s)))
        .collect()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance (denominator `len − 1`); NaN below two values.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substreams_differ_and_repeat() {
        let a = substream(1, &[0, 1]);
        assert_eq!(a, substream(1, &[0, 1]));
        assert_ne!(a, substream(1, &[1, 0]));
        assert_ne!(a, substream(2, &[0, 1]));
        assert_ne!(substream(0, &[0]), substream(0, &[0, 0]));
    }

    #[test]
    fn moments() {
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        assert_eq!(variance(&[1.0, 2.0, 3.0]), 1.0);
        assert!(variance(&[1.0]).is_nan());
    }
}
