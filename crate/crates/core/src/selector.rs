//! Data-driven choice of the regularizer by maximizing the estimated local-power
//! functional `Ξ̂ = (−1/2πi)∮ f ĥ dz / Δ̂(f, f)^{1/2}`.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::calculus::{as_terms, mixture_omega_delta, mixture_points};
use crate::contour::{delta_hat_numeric, Contour};
use crate::error::{Error, Result};
use crate::shrinkage::{RidgeTerm, ShrinkageSpec};
use crate::spectral::{PriorWeights, SpectralSummary};

/// Variances at or below this are treated as degenerate.
pub const MIN_VARIANCE: f64 = 1e-14;
/// Number of roots in the default higher-order grid, giving 220 triples.
pub const HIGHER_ORDER_ROOTS: usize = 12;
/// Minimum gap between roots of a triple, relative to `|lo|`.
pub const TRIPLE_SEPARATION: f64 = 1e-3;
const GOLDEN_ITERS: usize = 60;

/// Search interval `[lo, hi]` for the ridge parameter, `lo < hi < 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgeBounds {
    pub lo: f64,
    pub hi: f64,
    pub grid_size: usize,
}

impl RidgeBounds {
    pub fn new(lo: f64, hi: f64, grid_size: usize) -> Result<Self> {
        let b = RidgeBounds { lo, hi, grid_size };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.lo < self.hi && self.hi < 0.0) {
            return Err(Error::Config(format!("ridge bounds need lo < hi < 0, got [{}, {}]", self.lo, self.hi)));
        }
        if self.grid_size < 16 {
            return Err(Error::Config(format!("ridge grid needs at least 16 points, got {}", self.grid_size)));
        }
        Ok(())
    }

    /// `count` roots log-spaced in `|ℓ|` from `hi` down to `lo`, ordered by increasing `|ℓ|`.
    pub fn log_grid(&self, count: usize) -> Vec<f64> {
        if count == 1 {
            return vec![self.hi];
        }
        let (a, b) = (self.hi.abs().ln(), self.lo.abs().ln());
        (0..count)
            .map(|i| {
                if i == 0 {
                    self.hi
                } else if i == count - 1 {
                    self.lo
                } else {
                    -(a + (b - a) * i as f64 / (count - 1) as f64).exp()
                }
            })
            .collect()
    }
}

/// Outcome of a shrinkage search.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub f_star: ShrinkageSpec,
    pub xi_star: f64,
    /// Every candidate evaluated, in evaluation order.
    pub trace: Vec<(ShrinkageSpec, f64)>,
}

impl SelectionResult {
    /// The selected ridge parameter, when the winner is a pure ridge.
    pub fn ell_star(&self) -> Option<f64> {
        match self.f_star {
            ShrinkageSpec::Ridge { ell } => Some(ell),
            _ => None,
        }
    }
}

/// Default bounds `lo = −20 λ_max`, `hi = −p⁻¹tr(Σ̂)/100` on a 100-point grid.
pub fn default_ridge_bounds(spec: &SpectralSummary) -> Result<RidgeBounds> {
    if spec.lambda_max() <= 0.0 {
        return Err(Error::ZeroSpectrum);
    }
    RidgeBounds::new(-20.0 * spec.lambda_max(), -spec.trace_mean() / 100.0, 100)
}

fn ratio(numer: f64, delta: f64) -> Result<f64> {
    if !(delta > MIN_VARIANCE) {
        return Err(Error::NonPositiveVariance(delta));
    }
    Ok(numer / delta.sqrt())
}

/// `Ξ̂_ℓ = ĥ(ℓ) / Δ̂_ℓ^{1/2}` for the ridge `1/(x − ℓ)`.
pub fn xi_hat_ridge(spec: &SpectralSummary, ell: f64, weights: &PriorWeights) -> Result<f64> {
    if !(ell.is_finite() && ell < 0.0) {
        return Err(Error::InvalidShrinkage(format!("ridge parameter {ell} must be negative")));
    }
    if weights.is_zero() {
        return Ok(0.0);
    }
    let pt = spec.at(Complex64::new(ell, 0.0))?;
    ratio(pt.h(weights).re, 2.0 * pt.delta_diag().re)
}

/// `Ξ̂` for any regularizer. Ridge-type `f` collapse onto their poles, `Σⱼ wⱼ ĥ(rⱼ)`;
/// others are integrated on `contour`.
pub fn xi_hat_general(
    spec: &SpectralSummary,
    f: &ShrinkageSpec,
    weights: &PriorWeights,
    contour: &Contour,
) -> Result<f64> {
    f.validate()?;
    if let Some(terms) = as_terms(f)? {
        let pts = mixture_points(spec, &terms)?;
        let numer: f64 = terms.iter().zip(&pts).map(|(t, pt)| t.weight * pt.h(weights).re).sum();
        let (_, delta) = mixture_omega_delta(spec, &terms)?;
        if weights.is_zero() {
            return Ok(0.0);
        }
        return ratio(numer, delta);
    }
    contour.check(spec, &[f])?;
    let mut sum = Complex64::new(0.0, 0.0);
    for (z, w) in contour.nodes() {
        sum += f.evaluate(z)? * spec.h_hat(z, weights)? * w;
    }
    let numer = -sum / Complex64::new(0.0, 2.0 * std::f64::consts::PI);
    if numer.im.abs() > 1e-6 * (1.0 + numer.re.abs()) {
        return Err(Error::NonRealResult { real: numer.re, imag: numer.im });
    }
    let delta = delta_hat_numeric(spec, f, f, contour)?;
    if weights.is_zero() {
        return Ok(0.0);
    }
    ratio(numer.re, delta)
}

/// Index of the maximum, keeping the earliest on ties.
fn first_argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Grid search over `|ℓ|` on a log scale followed by golden-section refinement
/// inside the cell around the best grid point.
pub fn select_ridge(spec: &SpectralSummary, weights: &PriorWeights, bounds: &RidgeBounds) -> Result<SelectionResult> {
    bounds.validate()?;
    weights.check_for(spec)?;
    let grid = bounds.log_grid(bounds.grid_size);
    let xis: Vec<f64> = grid.par_iter().map(|&l| xi_hat_ridge(spec, l, weights)).collect::<Result<_>>()?;
    let best = first_argmax(&xis);
    let mut trace: Vec<(ShrinkageSpec, f64)> =
        grid.iter().zip(&xis).map(|(&l, &x)| (ShrinkageSpec::Ridge { ell: l }, x)).collect();
    let (mut ell_star, mut xi_star) = (grid[best], xis[best]);

    // golden section on log|ℓ| between the neighbours of the grid maximum
    let lo_i = best.saturating_sub(1);
    let hi_i = (best + 1).min(grid.len() - 1);
    let (mut a, mut b) = (grid[lo_i].abs().ln(), grid[hi_i].abs().ln());
    let eval = |u: f64| xi_hat_ridge(spec, -u.exp(), weights);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (eval(c)?, eval(d)?);
    for _ in 0..GOLDEN_ITERS {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = eval(d)?;
        }
    }
    let (u, fu) = if fc >= fd { (c, fc) } else { (d, fd) };
    if fu > xi_star {
        ell_star = -u.exp();
        xi_star = fu;
        trace.push((ShrinkageSpec::Ridge { ell: ell_star }, xi_star));
    }
    Ok(SelectionResult { f_star: ShrinkageSpec::Ridge { ell: ell_star }, xi_star, trace })
}

/// Best weights for a fixed root triple: `w ∝ D⁻¹ĥ` maximizes `wᵀĥ / (wᵀDw)^{1/2}`
/// with `D_jk = 2δ̂(r_j, r_k)`, attaining `(ĥᵀD⁻¹ĥ)^{1/2}`.
pub fn rayleigh_triple(spec: &SpectralSummary, roots: [f64; 3], weights: &PriorWeights) -> Result<(Vector3<f64>, f64)> {
    let at = |r: f64| spec.at(Complex64::new(r, 0.0));
    let pts = [at(roots[0])?, at(roots[1])?, at(roots[2])?];
    let h = Vector3::from_fn(|j, _| pts[j].h(weights).re);
    let d = Matrix3::from_fn(|j, k| 2.0 * spec.delta_pair(&pts[j], &pts[k]).re);
    let d = (d + d.transpose()) * 0.5;
    let chol = d.cholesky().ok_or(Error::SingularD)?;
    let min_pivot = (0..3).map(|i| chol.l_dirty()[(i, i)]).fold(f64::INFINITY, f64::min);
    if !(min_pivot * min_pivot > MIN_VARIANCE * d.diagonal().amax()) {
        return Err(Error::SingularD);
    }
    let w = chol.solve(&h);
    let xi = h.dot(&w).max(0.0).sqrt();
    let norm = w.abs().sum();
    let w = if norm > 0.0 { w / norm } else { w };
    Ok((w, xi))
}

/// Maximizes `Ξ̂` over pure ridges at each root of `roots` and over three-term
/// mixtures on every separated root triple.
pub fn select_higher_order_on(spec: &SpectralSummary, weights: &PriorWeights, roots: &[f64]) -> Result<SelectionResult> {
    weights.check_for(spec)?;
    if roots.is_empty() {
        return Err(Error::Config("empty root grid".into()));
    }
    let mut candidates: Vec<(ShrinkageSpec, f64)> = roots
        .par_iter()
        .map(|&r| Ok((ShrinkageSpec::Ridge { ell: r }, xi_hat_ridge(spec, r, weights)?)))
        .collect::<Result<_>>()?;

    let scale = roots.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let mut triples = Vec::new();
    for i in 0..roots.len() {
        for j in i + 1..roots.len() {
            for k in j + 1..roots.len() {
                let mut t = [roots[i], roots[j], roots[k]];
                t.sort_by(f64::total_cmp);
                if t[1] - t[0] >= TRIPLE_SEPARATION * scale && t[2] - t[1] >= TRIPLE_SEPARATION * scale {
                    triples.push(t);
                }
            }
        }
    }
    let mixtures: Vec<Option<(ShrinkageSpec, f64)>> = triples
        .par_iter()
        .map(|t| match rayleigh_triple(spec, *t, weights) {
            Ok((w, xi)) => Ok(Some((
                ShrinkageSpec::RidgeMixture((0..3).map(|j| RidgeTerm { root: t[j], weight: w[j] }).collect()),
                xi,
            ))),
            Err(Error::SingularD) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    candidates.extend(mixtures.into_iter().flatten());

    let xis: Vec<f64> = candidates.iter().map(|c| c.1).collect();
    let best = first_argmax(&xis);
    Ok(SelectionResult { f_star: candidates[best].0.clone(), xi_star: xis[best], trace: candidates })
}

/// [`select_higher_order_on`] over [`HIGHER_ORDER_ROOTS`] log-spaced roots in `bounds`.
pub fn select_higher_order(
    spec: &SpectralSummary,
    weights: &PriorWeights,
    bounds: &RidgeBounds,
) -> Result<SelectionResult> {
    bounds.validate()?;
    select_higher_order_on(spec, weights, &bounds.log_grid(HIGHER_ORDER_ROOTS))
}
