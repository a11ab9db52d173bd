//! Centering `Ω̂(f)` and variance `Δ̂(f₁, f₂)` of `M(f)` under the null.
//!
//! Ridge functions and their finite mixtures have closed forms: the Cauchy
//! kernel `1/(z − ℓ)` collapses each contour integral onto its pole, so
//! `Ω̂ = Θ̂(ℓ) − 1` and `Δ̂(ℓ₁, ℓ₂) = 2δ̂(ℓ₁, ℓ₂)`, extended bilinearly over
//! mixture terms. Other regularizers go through [`crate::contour`].

use num_complex::Complex64;

use crate::contour::{delta_hat_numeric, omega_hat_numeric, Contour};
use crate::error::{Error, Result};
use crate::shrinkage::{partial_fractions, RidgeTerm, ShrinkageSpec};
use crate::spectral::{PlugIn, SpectralSummary};

/// Nodes per side used when [`omega_delta_for`] falls back to quadrature.
/// The double integral costs `O(nodes²)`, and for an analytic `f` this resolution
/// is already at round-off for desk-scale spectra.
pub const DISPATCH_NODES: usize = 256;

fn real(z: f64) -> Complex64 {
    Complex64::new(z, 0.0)
}

fn negative(ell: f64) -> Result<()> {
    if !(ell.is_finite() && ell < 0.0) {
        return Err(Error::InvalidShrinkage(format!("ridge parameter {ell} must be negative")));
    }
    Ok(())
}

/// `Ω̂(f_ℓ) = Θ̂(ℓ) − 1`.
pub fn omega_hat_ridge(spec: &SpectralSummary, ell: f64) -> Result<f64> {
    negative(ell)?;
    Ok(spec.theta_hat(real(ell))?.re - 1.0)
}

/// `Δ̂(f_ℓ₁, f_ℓ₂) = 2δ̂(ℓ₁, ℓ₂)`.
pub fn delta_hat_ridge(spec: &SpectralSummary, ell1: f64, ell2: f64) -> Result<f64> {
    negative(ell1)?;
    negative(ell2)?;
    Ok(2.0 * spec.delta_kernel_hat(real(ell1), real(ell2))?.re)
}

/// Plug-in values at each root of a mixture, reused for the bilinear sums.
pub(crate) fn mixture_points(spec: &SpectralSummary, terms: &[RidgeTerm]) -> Result<Vec<PlugIn>> {
    terms.iter().map(|t| spec.at(real(t.root))).collect()
}

/// `Σⱼ wⱼ(Θ̂(rⱼ) − 1)` and `Σⱼ Σₖ wⱼwₖ 2δ̂(rⱼ, rₖ)`.
pub fn mixture_omega_delta(spec: &SpectralSummary, terms: &[RidgeTerm]) -> Result<(f64, f64)> {
    let pts = mixture_points(spec, terms)?;
    let omega = terms.iter().zip(&pts).map(|(t, pt)| t.weight * (pt.theta.re - 1.0)).sum();
    let mut delta = 0.0;
    for (tj, pj) in terms.iter().zip(&pts) {
        for (tk, pk) in terms.iter().zip(&pts) {
            delta += tj.weight * tk.weight * 2.0 * spec.delta_pair(pj, pk).re;
        }
    }
    Ok((omega, delta))
}

/// `Δ̂(f₁, f₂)` between two ridge mixtures.
pub fn mixture_cross_delta(spec: &SpectralSummary, a: &[RidgeTerm], b: &[RidgeTerm]) -> Result<f64> {
    let pa = mixture_points(spec, a)?;
    let pb = mixture_points(spec, b)?;
    let mut delta = 0.0;
    for (ta, qa) in a.iter().zip(&pa) {
        for (tb, qb) in b.iter().zip(&pb) {
            delta += ta.weight * tb.weight * 2.0 * spec.delta_pair(qa, qb).re;
        }
    }
    Ok(delta)
}

/// Closed-form route for ridge-type regularizers, `None` otherwise.
pub(crate) fn as_terms(f: &ShrinkageSpec) -> Result<Option<Vec<RidgeTerm>>> {
    Ok(match f {
        ShrinkageSpec::Ridge { ell } => Some(vec![RidgeTerm { root: *ell, weight: 1.0 }]),
        ShrinkageSpec::RidgeMixture(terms) => Some(terms.clone()),
        ShrinkageSpec::PolyInverse { .. } => match partial_fractions(f)? {
            ShrinkageSpec::RidgeMixture(terms) => Some(terms),
            _ => unreachable!("partial_fractions returns a mixture"),
        },
        _ => None,
    })
}

/// `(Ω̂(f), Δ̂(f, f))`, by closed form when `f` is ridge-type and by quadrature otherwise.
pub fn omega_delta_for(f: &ShrinkageSpec, spec: &SpectralSummary) -> Result<(f64, f64)> {
    f.validate()?;
    match f {
        ShrinkageSpec::ClassicalInverse => Err(Error::UnsupportedStandardization),
        ShrinkageSpec::Ridge { ell } => {
            let pt = spec.at(real(*ell))?;
            Ok((pt.theta.re - 1.0, 2.0 * pt.delta_diag().re))
        }
        _ => match as_terms(f)? {
            Some(terms) => mixture_omega_delta(spec, &terms),
            None => {
                let c = Contour::default_for(spec, f).with_nodes(DISPATCH_NODES);
                Ok((omega_hat_numeric(spec, f, &c)?, delta_hat_numeric(spec, f, f, &c)?))
            }
        },
    }
}
