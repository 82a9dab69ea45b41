//! Mollifier smoothing of the spin interaction: `V = V̄ − v` with smooth `V̄`
//! and `0 < v < ε`, and the mirrored split `V = V̄₋ + v₋` used on pairs
//! with negative coupling.

use std::f64::consts::{FRAC_PI_4, TAU};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::potential::SpinProfile;
use crate::quadrature::{adaptive_simpson, simpson};

/// Simpson intervals per smooth piece of a convolution.
pub const CONVOLUTION_INTERVALS: usize = 1 << 10;
/// Nodes of the periodic Hermite table that represents `V̄` on the hot path.
pub const TABLE_NODES: usize = 1 << 14;
/// Grid used by [`continuity_modulus`].
const MODULUS_GRID: usize = 1 << 13;
/// Fraction of `ε/2` the grid oscillation may use; the rest absorbs grid error.
const MODULUS_SAFETY: f64 = 0.9;
/// Step of the central differences that cross-check `V̄″`.
const FD_STEP: f64 = 5e-5;

/// `f_δ(t) = e^{-δ²/(δ²−t²)} / c` on `(−δ, δ)`, zero outside.
#[derive(Debug, Clone)]
pub struct SmoothingKernel {
    pub delta: f64,
    /// `1/c` with `c = ∫ e^{-δ²/(δ²−t²)} dt`.
    pub normalizer: f64,
    /// `‖f_δ″‖` by grid maximization.
    pub second_derivative_sup: f64,
}

impl SmoothingKernel {
    #[inline]
    fn bump(&self, t: f64) -> f64 {
        let d2 = self.delta * self.delta;
        let u = d2 - t * t;
        if u <= 0.0 {
            0.0
        } else {
            (-d2 / u).exp()
        }
    }

    #[inline]
    pub fn density(&self, t: f64) -> f64 {
        self.normalizer * self.bump(t)
    }

    #[inline]
    pub fn first_derivative(&self, t: f64) -> f64 {
        let d2 = self.delta * self.delta;
        let u = d2 - t * t;
        if u <= 0.0 {
            return 0.0;
        }
        let g1 = -2.0 * t * d2 / (u * u);
        self.density(t) * g1
    }

    /// `(f, f′, f″)` at `t`, sharing one exponential.
    #[inline]
    pub fn derivatives(&self, t: f64) -> [f64; 3] {
        let d2 = self.delta * self.delta;
        let u = d2 - t * t;
        if u <= 0.0 {
            return [0.0; 3];
        }
        let f = self.normalizer * (-d2 / u).exp();
        let g1 = -2.0 * t * d2 / (u * u);
        let g2 = -2.0 * d2 / (u * u) - 8.0 * t * t * d2 / (u * u * u);
        [f, f * g1, f * (g1 * g1 + g2)]
    }

    #[inline]
    pub fn second_derivative(&self, t: f64) -> f64 {
        let d2 = self.delta * self.delta;
        let u = d2 - t * t;
        if u <= 0.0 {
            return 0.0;
        }
        let g1 = -2.0 * t * d2 / (u * u);
        let g2 = -2.0 * d2 / (u * u) - 8.0 * t * t * d2 / (u * u * u);
        self.density(t) * (g1 * g1 + g2)
    }
}

pub fn mollifier(delta: f64) -> Result<SmoothingKernel> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    let mut k = SmoothingKernel {
        delta,
        normalizer: 1.0,
        second_derivative_sup: 0.0,
    };
    let c = adaptive_simpson(&|t| k.bump(t), -delta, delta, 1e-16 * delta);
    k.normalizer = 1.0 / c;
    let n = 1 << 16;
    k.second_derivative_sup = (0..=n)
        .map(|i| k.second_derivative(-delta + 2.0 * delta * i as f64 / n as f64).abs())
        .fold(0.0, f64::max);
    Ok(k)
}

/// Largest `δ` (halving from `π/4`, then bisection) whose grid oscillation
/// `max |V(σ+t) − V(σ)|` over `|t| < 2δ` stays below `0.9 · ε/2`.
pub fn continuity_modulus(v: &SpinProfile, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must lie in (0,1), got {epsilon}"
        )));
    }
    let limit = MODULUS_SAFETY * epsilon / 2.0;
    let step = TAU / MODULUS_GRID as f64;
    let values: Vec<f64> = (0..MODULUS_GRID).map(|k| v.at(k as f64 * step)).collect();
    // osc[k] = max over offsets j ≤ k of max_σ |V(σ + jΔ) − V(σ)|, filled lazily
    let mut osc: Vec<f64> = vec![0.0];
    let extend_to = |k: usize, osc: &mut Vec<f64>| {
        while osc.len() <= k {
            let j = osc.len();
            let m = (0..MODULUS_GRID)
                .map(|i| (values[(i + j) % MODULUS_GRID] - values[i]).abs())
                .fold(0.0, f64::max);
            let prev = *osc.last().unwrap();
            osc.push(prev.max(m));
            if prev.max(m) > limit {
                break;
            }
        }
    };
    // offsets strictly below 2δ, plus one grid step to cover off-grid shifts
    let certified = |delta: f64, osc: &mut Vec<f64>| -> bool {
        let k = (2.0 * delta / step).ceil() as usize + 1;
        extend_to(k, osc);
        osc.len() > k && osc[k] <= limit
    };
    let mut hi = FRAC_PI_4;
    if certified(hi, &mut osc) {
        return Ok(hi);
    }
    let mut lo = hi / 2.0;
    while !certified(lo, &mut osc) {
        hi = lo;
        lo /= 2.0;
        if lo < 1e-9 {
            return Err(Error::Invariant(
                "no continuity modulus found; V is not continuous on the grid".into(),
            ));
        }
    }
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if certified(mid, &mut osc) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// `∫ w(t) V(σ + t) dt` over `[−δ, δ]`, split at the kinks of `V`.
fn convolve<W: Fn(f64) -> f64>(v: &SpinProfile, kinks: &[f64], delta: f64, sigma: f64, w: W) -> f64 {
    let mut cuts = vec![-delta];
    for &b in kinks {
        // kink at angle b (mod 2π) sits at offset t with σ + t ≡ b
        let mut t = (b - sigma).rem_euclid(TAU);
        if t > TAU - delta {
            t -= TAU;
        }
        if t > -delta && t < delta {
            cuts.push(t);
        }
    }
    cuts.push(delta);
    cuts.sort_by(f64::total_cmp);
    cuts.windows(2)
        .filter(|c| c[1] > c[0])
        .map(|c| simpson(|t| w(t) * v.at(sigma + t), c[0], c[1], CONVOLUTION_INTERVALS))
        .sum()
}

/// Periodic cubic Hermite interpolant on a uniform grid of `[0, 2π)`.
#[derive(Debug, Clone)]
pub struct HermiteTable {
    step: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
    sup_abs: f64,
    second_sup: f64,
}

impl HermiteTable {
    pub fn new(values: Vec<f64>, slopes: Vec<f64>) -> Self {
        let n = values.len();
        assert!(n >= 2 && slopes.len() == n);
        let step = TAU / n as f64;
        let sup_v = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let sup_d = slopes.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut t = HermiteTable {
            step,
            values,
            slopes,
            sup_abs: sup_v + step * sup_d,
            second_sup: 0.0,
        };
        // the second derivative is linear on each interval: its sup sits at the ends
        let mut s = 0.0f64;
        for k in 0..n {
            let (a, b) = t.segment_second(k);
            s = s.max(a.abs()).max(b.abs());
        }
        t.second_sup = s;
        t
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    fn locate(&self, sigma: f64) -> (usize, f64) {
        let s = sigma.rem_euclid(TAU) / self.step;
        let k = s.floor();
        let mut i = k as usize;
        let mut t = s - k;
        if i >= self.values.len() {
            i = 0;
            t = 0.0;
        }
        (i, t)
    }

    #[inline]
    pub fn value(&self, sigma: f64) -> f64 {
        let (i, t) = self.locate(sigma);
        let j = if i + 1 == self.values.len() { 0 } else { i + 1 };
        let (p0, p1) = (self.values[i], self.values[j]);
        let (m0, m1) = (self.slopes[i] * self.step, self.slopes[j] * self.step);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * p0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * p1
            + (t3 - t2) * m1
    }

    pub fn second_derivative(&self, sigma: f64) -> f64 {
        let (i, t) = self.locate(sigma);
        let (a, b) = self.segment_second(i);
        a + (b - a) * t
    }

    /// Second derivative at the left and right end of interval `i`.
    fn segment_second(&self, i: usize) -> (f64, f64) {
        let n = self.values.len();
        let j = (i + 1) % n;
        let h = self.step;
        let (p0, p1) = (self.values[i], self.values[j]);
        let (m0, m1) = (self.slopes[i] * h, self.slopes[j] * h);
        let left = (-6.0 * p0 - 4.0 * m0 + 6.0 * p1 - 2.0 * m1) / (h * h);
        let right = (6.0 * p0 + 2.0 * m0 - 6.0 * p1 + 4.0 * m1) / (h * h);
        (left, right)
    }

    pub fn sup_abs(&self) -> f64 {
        self.sup_abs
    }

    /// Exact `sup |p″|` of the interpolant.
    pub fn second_derivative_sup(&self) -> f64 {
        self.second_sup
    }
}

/// Which side of `V` the smooth part sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `V = V̄ − v`, `V̄ = f_δ * V + ε/2`.
    Above,
    /// `V = V̄₋ + v₋`, `V̄₋ = f_δ * V − ε/2`.
    Below,
}

#[derive(Debug, Clone)]
pub struct SmoothDecomposition {
    pub epsilon: f64,
    pub delta: f64,
    pub side: Side,
    pub kernel: SmoothingKernel,
    pub base: SpinProfile,
    pub table: Arc<HermiteTable>,
    /// Certified upper bound on `‖V̄″‖` (valid for the exact convolution and its interpolant).
    pub vbar_second_sup: f64,
    /// `2δ ‖f_δ″‖ ‖V‖`.
    pub theoretical_bound: f64,
}

impl SmoothDecomposition {
    fn shift(&self) -> f64 {
        match self.side {
            Side::Above => self.epsilon / 2.0,
            Side::Below => -self.epsilon / 2.0,
        }
    }

    /// `V̄` as used in every energy computation (the Hermite interpolant).
    #[inline]
    pub fn vbar(&self, sigma: f64) -> f64 {
        self.table.value(sigma)
    }

    /// `v = V̄ − V` (or `v₋ = V − V̄₋`).
    pub fn v(&self, sigma: f64) -> f64 {
        match self.side {
            Side::Above => self.vbar(sigma) - self.base.at(sigma),
            Side::Below => self.base.at(sigma) - self.vbar(sigma),
        }
    }

    /// `V̄` by direct convolution quadrature.
    pub fn vbar_exact(&self, sigma: f64) -> f64 {
        let kinks = self.base.breakpoints();
        convolve(&self.base, &kinks, self.delta, sigma, |t| self.kernel.density(t)) + self.shift()
    }

    /// `V̄″ = f_δ″ * V` by quadrature.
    pub fn vbar_second_exact(&self, sigma: f64) -> f64 {
        let kinks = self.base.breakpoints();
        convolve(&self.base, &kinks, self.delta, sigma, |t| {
            self.kernel.second_derivative(t)
        })
    }

    /// The spin profile `V̄` for building the smooth potential `Ū`.
    pub fn smooth_profile(&self) -> SpinProfile {
        SpinProfile::Interpolated(self.table.clone())
    }

    /// `(min v, max v, max |V̄ − v − V|)` on an `n`-point grid.
    pub fn grid_summary(&self, n: usize) -> (f64, f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut recon = 0.0f64;
        for k in 0..n {
            let s = TAU * k as f64 / n as f64;
            let vv = self.v(s);
            lo = lo.min(vv);
            hi = hi.max(vv);
            let back = match self.side {
                Side::Above => self.vbar(s) - vv,
                Side::Below => self.vbar(s) + vv,
            };
            recon = recon.max((back - self.base.at(s)).abs());
        }
        (lo, hi, recon)
    }
}

    /// `(f * V, f′ * V, f″ * V)` at `σ` in one pass, split at the kinks of `V`.
fn convolve3(v: &SpinProfile, kinks: &[f64], kernel: &SmoothingKernel, sigma: f64) -> [f64; 3] {
    let delta = kernel.delta;
    let mut cuts = vec![-delta];
    for &b in kinks {
        let mut t = (b - sigma).rem_euclid(TAU);
        if t > TAU - delta {
            t -= TAU;
        }
        if t > -delta && t < delta {
            cuts.push(t);
        }
    }
    cuts.push(delta);
    cuts.sort_by(f64::total_cmp);
    let mut acc = [0.0; 3];
    let m = CONVOLUTION_INTERVALS;
    for c in cuts.windows(2).filter(|c| c[1] > c[0]) {
        let h = (c[1] - c[0]) / m as f64;
        let mut part = [0.0; 3];
        for k in 0..=m {
            let w = if k == 0 || k == m {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let t = c[0] + k as f64 * h;
            let vv = w * v.at(sigma + t);
            let d = kernel.derivatives(t);
            part[0] += d[0] * vv;
            part[1] += d[1] * vv;
            part[2] += d[2] * vv;
        }
        for i in 0..3 {
            acc[i] += part[i] * h / 3.0;
        }
    }
    acc
}

/// Upper bound on `sup |V̄⁗|`, the curvature of `V̄″` between table nodes.
fn fourth_derivative_bound(v: &SpinProfile, kernel: &SmoothingKernel) -> f64 {
    let n = 1 << 14;
    let h = 2.0 * kernel.delta / n as f64;
    let abs_f2: f64 = (0..=n)
        .map(|i| kernel.second_derivative(-kernel.delta + i as f64 * h).abs())
        .sum::<f64>()
        * h;
    match v {
        SpinProfile::Constant(_) => 0.0,
        // V̄⁗ = f″ * V″ with |V″| ≤ a
        SpinProfile::NegCos { amplitude } => 1.01 * abs_f2 * amplitude.abs(),
        SpinProfile::Interpolated(t) => 1.01 * abs_f2 * t.second_derivative_sup(),
        // V″ is a sum of point masses (slope jumps); only those within 2δ meet the kernel
        SpinProfile::Table(t) => {
            let a = t.angles();
            let vals = t.values();
            let k = a.len();
            let slope = |i: usize| {
                let j = (i + 1) % k;
                let mut da = a[j] - a[i];
                if da <= 0.0 {
                    da += TAU;
                }
                (vals[j] - vals[i]) / da
            };
            let jumps: Vec<f64> = (0..k)
                .map(|i| (slope(i) - slope((i + k - 1) % k)).abs())
                .collect();
            let mut worst = 0.0f64;
            for i in 0..k {
                let mut s = 0.0;
                for j in 0..k {
                    if (a[j] - a[i]).rem_euclid(TAU) <= 2.0 * kernel.delta {
                        s += jumps[j];
                    }
                }
                worst = worst.max(s);
            }
            1.01 * kernel.second_derivative_sup * worst
        }
    }
}

fn build(v: &SpinProfile, epsilon: f64, delta: f64, side: Side) -> Result<SmoothDecomposition> {
    let kernel = mollifier(delta)?;
    let kinks = v.breakpoints();
    let shift = match side {
        Side::Above => epsilon / 2.0,
        Side::Below => -epsilon / 2.0,
    };
    let n = TABLE_NODES;
    let step = TAU / n as f64;
    let raw: Vec<[f64; 3]> = (0..n)
        .map(|k| convolve3(v, &kinks, &kernel, k as f64 * step))
        .collect();
    // V is even, so V̄ is even and V̄′ odd: symmetrize away quadrature noise
    let values: Vec<f64> = (0..n)
        .map(|k| 0.5 * (raw[k][0] + raw[(n - k) % n][0]) + shift)
        .collect();
    // d/dσ ∫ f(t) V(σ+t) dt = −∫ f′(t) V(σ+t) dt
    let slopes: Vec<f64> = (0..n)
        .map(|k| -0.5 * (raw[k][1] - raw[(n - k) % n][1]))
        .collect();
    let table = Arc::new(HermiteTable::new(values, slopes));
    // between nodes |V̄″| exceeds its chord by at most h²/8 · sup|V̄⁗|
    let node_sup = raw.iter().fold(0.0f64, |m, r| m.max(r[2].abs()));
    let certified = node_sup + step * step / 8.0 * fourth_derivative_bound(v, &kernel);
    let theoretical_bound = 2.0 * delta * kernel.second_derivative_sup * v.sup_abs();
    let interp = table.second_derivative_sup();
    let d = SmoothDecomposition {
        epsilon,
        delta,
        side,
        kernel,
        base: v.clone(),
        table,
        vbar_second_sup: certified.min(theoretical_bound).max(interp),
        theoretical_bound,
    };
    let (lo, hi, recon) = d.grid_summary(1 << 12);
    if !(lo > 0.0 && hi < epsilon && recon <= 1e-10) {
        return Err(Error::Invariant(format!(
            "smoothing invariants failed: min v = {lo:e}, max v = {hi:e}, eps = {epsilon}, reconstruction = {recon:e}"
        )));
    }
    Ok(d)
}

/// `V = V̄ − v`, `V̄ = f_δ * V + ε/2`, with `δ` from [`continuity_modulus`].
pub fn smooth_decompose(v: &SpinProfile, epsilon: f64) -> Result<SmoothDecomposition> {
    let delta = continuity_modulus(v, epsilon)?;
    build(v, epsilon, delta, Side::Above)
}

#[derive(Debug, Clone)]
pub struct SignSplitDecomposition {
    pub plus: SmoothDecomposition,
    pub minus: SmoothDecomposition,
}

pub fn sign_split_decompose(v: &SpinProfile, epsilon: f64) -> Result<SignSplitDecomposition> {
    let delta = continuity_modulus(v, epsilon)?;
    Ok(SignSplitDecomposition {
        plus: build(v, epsilon, delta, Side::Above)?,
        minus: build(v, epsilon, delta, Side::Below)?,
    })
}

/// Grid sup of `|V̄″|` from the analytic convolution with `f_δ″`, checked
/// against central differences of the exact convolution.
pub fn second_derivative_sup(d: &SmoothDecomposition) -> Result<f64> {
    let n = 1 << 12;
    let mut sup = 0.0f64;
    let mut worst = 0.0f64;
    let mut pairs = Vec::with_capacity(n);
    for k in 0..n {
        let s = TAU * k as f64 / n as f64;
        let an = d.vbar_second_exact(s);
        let fd = (d.vbar_exact(s + FD_STEP) - 2.0 * d.vbar_exact(s) + d.vbar_exact(s - FD_STEP))
            / (FD_STEP * FD_STEP);
        sup = sup.max(an.abs());
        pairs.push((an, fd));
    }
    for (an, fd) in pairs {
        worst = worst.max((an - fd).abs());
    }
    if worst > 1e-4 * sup + 1e-6 {
        return Err(Error::Invariant(format!(
            "finite differences disagree with the analytic second derivative: {worst:e} vs sup {sup:e}"
        )));
    }
    Ok(sup)
}
