//! The logarithmically tapered rotation field, its cluster-constant version,
//! the bond-set energy functional and the convexity check.

use serde::{Deserialize, Serialize};

use crate::bonds::{bond_set, cluster_range, clusters, BondSet, ClusterDecomposition};
use crate::config_space::{partition, Configuration, MarkedParticle, Point, Window};
use crate::error::{Error, Result};
use crate::potential::{hamiltonian, PairPotentialModel};
use crate::smoothing::SmoothDecomposition;

/// `q(s) = 1` for `s ≤ 2`, `1/(s ln s)` beyond.
pub fn q(s: f64) -> f64 {
    if s <= 2.0 {
        1.0
    } else {
        1.0 / (s * s.ln())
    }
}

/// `Q(k) = ∫₀^k q`.
pub fn q_primitive(k: f64) -> Result<f64> {
    if !(k >= 0.0) {
        return Err(Error::InvalidParameter(format!("Q needs k >= 0, got {k}")));
    }
    Ok(if k <= 2.0 {
        k
    } else {
        2.0 + k.ln().ln() - 2f64.ln().ln()
    })
}

fn big_q(k: f64) -> f64 {
    q_primitive(k.max(0.0)).unwrap_or(0.0)
}

/// `r(s, k)`: 1 for `s ≤ 0`, `(Q(k) − Q(s))/Q(k)` on `(0, k)`, 0 from `k` on.
pub fn taper(s: f64, k: f64) -> f64 {
    if s <= 0.0 {
        1.0
    } else if s >= k {
        0.0
    } else {
        let qk = big_q(k);
        (qk - big_q(s)) / qk
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaperParams {
    /// Global rotation angle in `(0, π)`.
    pub tau: f64,
    /// Inner plateau radius.
    pub r: u32,
    /// Outer zero radius.
    pub n: u32,
    /// Radius of the test window.
    pub n_prime: u32,
}

impl TaperParams {
    pub fn new(tau: f64, r: u32, n: u32, n_prime: u32) -> Result<Self> {
        let p = TaperParams { tau, r, n, n_prime };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < std::f64::consts::PI) {
            return Err(Error::InvalidParameter(format!("tau must lie in (0, pi), got {}", self.tau)));
        }
        if !(self.n > self.r && self.r > self.n_prime && self.n_prime >= 1) {
            return Err(Error::InvalidParameter(format!(
                "need n > R > n' >= 1, got n = {}, R = {}, n' = {}",
                self.n, self.r, self.n_prime
            )));
        }
        Ok(())
    }

    pub fn window_n(&self) -> Window {
        Window::new(self.n as f64).expect("validated radius")
    }

    pub fn window_n_prime(&self) -> Window {
        Window::new(self.n_prime as f64).expect("validated radius")
    }
}

/// `τ_n(x) = τ · r(‖x‖ − R, n − R)`.
pub fn tau_n(x: &Point, params: &TaperParams) -> f64 {
    let r = params.r as f64;
    params.tau * taper(x.norm() - r, params.n as f64 - r)
}

/// The cluster-constant field `τ_n^{X,A}` with its witnesses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformationField {
    pub angle: Vec<f64>,
    /// A cluster member attaining the minimum, with norm at least that of
    /// the particle itself.
    pub witness: Vec<usize>,
}

impl DeformationField {
    pub fn len(&self) -> usize {
        self.angle.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angle.is_empty()
    }

    pub fn constant(angle: f64, len: usize) -> Self {
        DeformationField {
            angle: vec![angle; len],
            witness: (0..len).collect(),
        }
    }
}

/// Minimum of `τ_n` over each cluster. The witness of `x` is `x` itself when
/// `x` attains the minimum, otherwise the smallest-id minimizer; either way
/// its norm is at least `‖x‖` since `τ_n` is nonincreasing in the norm.
pub fn cluster_taper(
    cfg: &Configuration,
    clusters: &ClusterDecomposition,
    params: &TaperParams,
) -> Result<DeformationField> {
    params.validate()?;
    if clusters.labels.len() != cfg.len() {
        return Err(Error::InvalidParameter(format!(
            "clusters cover {} particles, configuration has {}",
            clusters.labels.len(),
            cfg.len()
        )));
    }
    let own: Vec<f64> = cfg.iter().map(|p| tau_n(&p.position, params)).collect();
    let mut best: Vec<(f64, usize)> = vec![(f64::INFINITY, usize::MAX); clusters.len()];
    for (label, members) in clusters.members.iter().enumerate() {
        for &m in members {
            if own[m] < best[label].0 || (own[m] == best[label].0 && m < best[label].1) {
                best[label] = (own[m], m);
            }
        }
    }
    let mut angle = Vec::with_capacity(cfg.len());
    let mut witness = Vec::with_capacity(cfg.len());
    for (i, &l) in clusters.labels.iter().enumerate() {
        let (min, arg) = best[l];
        angle.push(min);
        witness.push(if own[i] == min { i } else { arg });
    }
    Ok(DeformationField { angle, witness })
}

/// `f = Σ_{xx′ ∈ E} J(x − x′)(τ(x) − τ(x′))²` over the candidate bonds `E(X, n)`.
pub fn dirichlet_energy(
    cfg: &Configuration,
    model: &PairPotentialModel,
    candidates: &BondSet,
    field: &DeformationField,
) -> Result<f64> {
    check_field(cfg, field)?;
    let ps = cfg.particles();
    Ok(candidates
        .iter()
        .map(|b| {
            let j = model.coupling_between(&ps[b.i].position, &ps[b.j].position);
            j * (field.angle[b.i] - field.angle[b.j]).powi(2)
        })
        .sum())
}

fn check_field(cfg: &Configuration, field: &DeformationField) -> Result<()> {
    if field.len() != cfg.len() {
        return Err(Error::InvalidParameter(format!(
            "field covers {} particles, configuration has {}",
            field.len(),
            cfg.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoodSetVerdict {
    /// `r_{A,X}(Λ_{n′}) < R`.
    pub range_ok: bool,
    /// `f_{n,X}(A) < 2/‖V̄″‖`.
    pub energy_ok: bool,
    pub is_good: bool,
    pub range: f64,
    pub energy: f64,
    /// `2/‖V̄″‖`, infinite when `‖V̄″‖ = 0`.
    pub threshold: f64,
}

/// Evaluates both clauses of the good-set definition for the bond set `bonds`.
pub fn good_set_verdict(
    cfg: &Configuration,
    model: &PairPotentialModel,
    decomp: &SmoothDecomposition,
    bonds: &BondSet,
    params: &TaperParams,
) -> Result<GoodSetVerdict> {
    let cl = clusters(cfg, bonds)?;
    let field = cluster_taper(cfg, &cl, params)?;
    let candidates = bond_set(cfg, model, &params.window_n());
    let energy = dirichlet_energy(cfg, model, &candidates, &field)?;
    let range = cluster_range(cfg, &cl, &params.window_n_prime());
    let threshold = if decomp.vbar_second_sup == 0.0 {
        f64::INFINITY
    } else {
        2.0 / decomp.vbar_second_sup
    };
    let range_ok = range < params.r as f64;
    let energy_ok = energy < threshold;
    Ok(GoodSetVerdict {
        range_ok,
        energy_ok,
        is_good: range_ok && energy_ok,
        range,
        energy,
        threshold,
    })
}

/// Rotates every spin by `direction · field(x)`; positions are unchanged.
pub fn apply_deformation(cfg: &Configuration, field: &DeformationField, direction: i8) -> Result<Configuration> {
    check_field(cfg, field)?;
    if direction != 1 && direction != -1 {
        return Err(Error::InvalidParameter(format!("direction must be +1 or -1, got {direction}")));
    }
    let s = direction as f64;
    let moved: Vec<MarkedParticle> = cfg
        .iter()
        .zip(&field.angle)
        .map(|(p, a)| MarkedParticle::new(p.position, p.spin.rotated(s * a)))
        .collect();
    Ok(Configuration::from_vec_unchecked(moved))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaylorMargin {
    /// `(e/2)e^{−H(τ⁻¹Y)} + (e/2)e^{−H(τY)} − e^{−H(Y)}`.
    pub absolute: f64,
    /// The same divided by `e^{−H(Y)}`; robust to underflow.
    pub relative: f64,
    /// `H(τ⁻¹Y) − H(Y)`.
    pub delta_minus: f64,
    /// `H(τY) − H(Y)`.
    pub delta_plus: f64,
    /// Set when `H(Y) = +∞`; the margin is then reported as 0.
    pub saturated: bool,
}

/// The convexity margin with the smooth Hamiltonian on `Λ_n`. `smooth` must
/// carry the smoothed spin profile; particles of `cfg` outside the window act
/// as the boundary condition.
pub fn taylor_margin(
    cfg: &Configuration,
    smooth: &PairPotentialModel,
    window: &Window,
    field: &DeformationField,
) -> Result<TaylorMargin> {
    let h = |c: &Configuration| -> Result<f64> {
        let (inside, outside) = partition(c, window);
        Ok(hamiltonian(smooth, window, &inside, &outside)?.value())
    };
    let h0 = h(cfg)?;
    if h0 == f64::INFINITY {
        return Ok(TaylorMargin {
            absolute: 0.0,
            relative: 0.0,
            delta_minus: 0.0,
            delta_plus: 0.0,
            saturated: true,
        });
    }
    let minus = h(&apply_deformation(cfg, field, -1)?)? - h0;
    let plus = h(&apply_deformation(cfg, field, 1)?)? - h0;
    let half_e = std::f64::consts::E / 2.0;
    let relative = half_e * (-minus).exp() + half_e * (-plus).exp() - 1.0;
    Ok(TaylorMargin {
        absolute: relative * (-h0).exp(),
        relative,
        delta_minus: minus,
        delta_plus: plus,
        saturated: false,
    })
}

/// Tolerance of [`intermediate_bound_holds`], scaled by `1 + Σ|J|`.
pub const INTERMEDIATE_SLACK: f64 = 1e-12;

/// `H(τ⁻¹Y) + H(τY) − 2H(Y) ≤ ‖V̄″‖ f` up to rounding.
pub fn intermediate_bound_holds(
    margin: &TaylorMargin,
    vbar_second_sup: f64,
    energy: f64,
    coupling_mass: f64,
) -> bool {
    margin.saturated
        || margin.delta_minus + margin.delta_plus
            <= vbar_second_sup * energy + INTERMEDIATE_SLACK * (1.0 + coupling_mass)
}

/// `∫_{Λ_n} q(‖x‖ − R)² dx`, reduced to the radial integral over sup-norm shells.
pub fn taper_square_integral(r: u32, n: u32) -> f64 {
    let r = r as f64;
    crate::quadrature::radial_integral(|t| q(t - r).powi(2), 0.0, n as f64, 1e-11)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric_q(k: f64) -> f64 {
        crate::quadrature::adaptive_simpson(&q, 0.0, 2.0, 1e-13)
            + crate::quadrature::adaptive_simpson(&q, 2.0, k.max(2.0), 1e-13)
    }

    #[test]
    fn q_examples() {
        assert_eq!(q(1.0), 1.0);
        assert_eq!(q(2.0), 1.0);
        assert!((q(std::f64::consts::E) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn primitive_examples() {
        assert_eq!(q_primitive(0.0).unwrap(), 0.0);
        assert_eq!(q_primitive(2.0).unwrap(), 2.0);
        assert!((q_primitive(10.0).unwrap() - numeric_q(10.0)).abs() < 1e-9);
        assert!((q_primitive(10.0).unwrap() - 3.2005).abs() < 5e-5);
        assert!(q_primitive(-1.0).is_err());
    }

    #[test]
    fn taper_examples() {
        assert_eq!(taper(-1.0, 5.0), 1.0);
        assert_eq!(taper(5.0, 5.0), 0.0);
        let q4 = q_primitive(4.0).unwrap();
        assert!((q4 - numeric_q(4.0)).abs() < 1e-9);
        assert!((taper(1.0, 4.0) - (numeric_q(4.0) - 1.0) / numeric_q(4.0)).abs() < 1e-9);
    }

    #[test]
    fn tau_n_examples() {
        let p = TaperParams::new(1.0, 2, 10, 1).unwrap();
        assert_eq!(tau_n(&Point::new(1.5, -2.0), &p), 1.0);
        assert_eq!(tau_n(&Point::new(10.0, 0.0), &p), 0.0);
        let q8 = numeric_q(8.0);
        assert!((tau_n(&Point::new(0.0, 3.0), &p) - (q8 - 1.0) / q8).abs() < 1e-9);
        assert!(TaperParams::new(1.0, 2, 2, 1).is_err());
        assert!(TaperParams::new(3.5, 3, 5, 1).is_err());
    }

    #[test]
    fn dirichlet_single_term() {
        use crate::potential::{Coupling, CoreRepulsion, RadialTable, SpinProfile};
        let j = RadialTable::new(vec![0.0, 5.0], vec![0.5, 0.5]).unwrap();
        let m = PairPotentialModel::new(Coupling::Table(j), CoreRepulsion::None, SpinProfile::Constant(0.0)).unwrap();
        let cfg = Configuration::new(vec![
            MarkedParticle::at(0.0, 0.0, 0.0),
            MarkedParticle::at(1.0, 0.0, 0.0),
        ])
        .unwrap();
        let e = bond_set(&cfg, &m, &Window::new(3.0).unwrap());
        let field = DeformationField { angle: vec![1.0, 0.0], witness: vec![0, 1] };
        assert_eq!(dirichlet_energy(&cfg, &m, &e, &field).unwrap(), 0.5);
        assert_eq!(dirichlet_energy(&cfg, &m, &e, &DeformationField::constant(0.7, 2)).unwrap(), 0.0);
    }
}
