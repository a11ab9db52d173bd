//! Rectangular contours and the quadrature of the centering and variance integrals
//! for a general shrinkage `f`.
//!
//! `Ω̂(f) = −(2πi)⁻¹ ∮ f(z)(Θ̂(z) − 1) dz` and
//! `Δ̂(f₁, f₂) = 2(2πi)⁻² ∮∮ f₁(z₁) f₂(z₂) δ̂(z₁, z₂) dz₁ dz₂`,
//! both taken counter-clockwise around a rectangle enclosing the sample spectrum
//! and excluding the poles of `f`.
//!
//! Each side is integrated with the trapezoid rule in a parameter `s ∈ [0, 1]`
//! mapped through `s − sin(2πs)/(2π)`. The map's derivative vanishes at the
//! corners, which removes the `O(h²)` corner error of the plain rule.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::shrinkage::ShrinkageSpec;
use crate::spectral::{ComplexPoint, PlugIn, SpectralSummary};

/// Distance every eigenvalue and pole must keep from the rectangle.
pub const CONTOUR_MARGIN: f64 = 1e-6;
/// Factor by which the second copy of the contour is shrunk toward its center.
pub const INNER_SHRINK: f64 = 0.99;
pub const DEFAULT_NODES: usize = 2048;
const MIN_NODES: usize = 64;

/// Rectangle `[u_lo, u_hi] × [−v0, v0]` with `nodes_per_side` quadrature intervals per side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contour {
    pub u_lo: f64,
    pub u_hi: f64,
    pub v0: f64,
    pub nodes_per_side: usize,
}

impl Contour {
    pub fn new(u_lo: f64, u_hi: f64, v0: f64, nodes_per_side: usize) -> Result<Self> {
        let c = Self { u_lo, u_hi, v0, nodes_per_side };
        if !(u_lo < 0.0 && u_hi > 0.0 && v0 > 0.0) {
            return Err(Error::ContourViolation(format!("degenerate rectangle {c:?}")));
        }
        if nodes_per_side < MIN_NODES {
            return Err(Error::ContourViolation(format!(
                "nodes_per_side {nodes_per_side} below {MIN_NODES}"
            )));
        }
        Ok(c)
    }

    /// Default rectangle for `f` on `spec`: the left edge sits halfway between the
    /// pole nearest zero and zero (or at −0.5 without poles), the right edge at
    /// `1.1 λ_max + 1`, and `v0 = 1`.
    pub fn default_for(spec: &SpectralSummary, f: &ShrinkageSpec) -> Self {
        let nearest = f.poles().into_iter().filter(|r| *r < 0.0).fold(f64::NEG_INFINITY, f64::max);
        let u_lo = if nearest.is_finite() { nearest / 2.0 } else { -0.5 };
        Self {
            u_lo,
            u_hi: 1.1 * spec.lambda_max() + 1.0,
            v0: 1.0,
            nodes_per_side: DEFAULT_NODES,
        }
    }

    pub fn with_nodes(mut self, nodes_per_side: usize) -> Self {
        self.nodes_per_side = nodes_per_side;
        self
    }

    /// The same rectangle scaled by `factor` about its center.
    pub fn shrunk(&self, factor: f64) -> Self {
        let center = 0.5 * (self.u_lo + self.u_hi);
        Self {
            u_lo: center + factor * (self.u_lo - center),
            u_hi: center + factor * (self.u_hi - center),
            v0: factor * self.v0,
            nodes_per_side: self.nodes_per_side,
        }
    }

    /// Checks that the rectangle encloses the spectrum and excludes every pole of each `f`.
    pub fn check(&self, spec: &SpectralSummary, fs: &[&ShrinkageSpec]) -> Result<()> {
        if self.nodes_per_side < MIN_NODES {
            return Err(Error::ContourViolation(format!(
                "nodes_per_side {} below {MIN_NODES}",
                self.nodes_per_side
            )));
        }
        if !(self.v0 > CONTOUR_MARGIN) {
            return Err(Error::ContourViolation(format!("half-height {} too small", self.v0)));
        }
        if spec.lambda_min() - self.u_lo < CONTOUR_MARGIN || self.u_lo >= 0.0 {
            return Err(Error::ContourViolation(format!(
                "left edge {} does not clear the spectrum (λ_min = {})",
                self.u_lo,
                spec.lambda_min()
            )));
        }
        if self.u_hi - spec.lambda_max() < CONTOUR_MARGIN {
            return Err(Error::ContourViolation(format!(
                "right edge {} does not clear λ_max = {}",
                self.u_hi,
                spec.lambda_max()
            )));
        }
        for f in fs {
            for r in f.poles() {
                let inside = r > self.u_lo - CONTOUR_MARGIN && r < self.u_hi + CONTOUR_MARGIN;
                if inside {
                    return Err(Error::ContourViolation(format!(
                        "pole {r} of {} is not outside [{}, {}]",
                        f.label(),
                        self.u_lo,
                        self.u_hi
                    )));
                }
            }
        }
        Ok(())
    }

    /// Quadrature nodes and weights `(zₖ, wₖ)` with `∮ g dz ≈ Σ g(zₖ) wₖ`, counter-clockwise.
    pub fn nodes(&self) -> Vec<(ComplexPoint, ComplexPoint)> {
        let corners = [
            Complex64::new(self.u_lo, -self.v0),
            Complex64::new(self.u_hi, -self.v0),
            Complex64::new(self.u_hi, self.v0),
            Complex64::new(self.u_lo, self.v0),
        ];
        let n = self.nodes_per_side;
        let h = 1.0 / n as f64;
        let mut out = Vec::with_capacity(4 * (n - 1));
        for side in 0..4 {
            let a = corners[side];
            let b = corners[(side + 1) % 4];
            let d = b - a;
            // endpoint terms vanish because the map's derivative is zero there
            for k in 1..n {
                let s = k as f64 * h;
                let phi = s - (2.0 * PI * s).sin() / (2.0 * PI);
                let dphi = 1.0 - (2.0 * PI * s).cos();
                out.push((a + d * phi, d * (dphi * h)));
            }
        }
        out
    }
}

fn plug_ins(spec: &SpectralSummary, nodes: &[(ComplexPoint, ComplexPoint)]) -> Result<Vec<PlugIn>> {
    nodes.par_iter().map(|(z, _)| spec.at(*z)).collect()
}

fn f_values(f: &ShrinkageSpec, nodes: &[(ComplexPoint, ComplexPoint)]) -> Result<Vec<ComplexPoint>> {
    nodes.iter().map(|(z, w)| f.evaluate(*z).map(|v| v * w)).collect()
}

fn real_part(v: Complex64) -> Result<f64> {
    if v.im.abs() > 1e-6 * (1.0 + v.re.abs()) {
        return Err(Error::NonRealResult { real: v.re, imag: v.im });
    }
    Ok(v.re)
}

/// `Ω̂(f)` by contour quadrature.
pub fn omega_hat_numeric(spec: &SpectralSummary, f: &ShrinkageSpec, contour: &Contour) -> Result<f64> {
    contour.check(spec, &[f])?;
    let nodes = contour.nodes();
    let pts = plug_ins(spec, &nodes)?;
    let fw = f_values(f, &nodes)?;
    let sum = fw
        .iter()
        .zip(&pts)
        .fold(Complex64::new(0.0, 0.0), |acc, (fw, pt)| acc + fw * (pt.theta - 1.0));
    real_part(-sum / Complex64::new(0.0, 2.0 * PI))
}

/// `Δ̂(f₁, f₂)` by tensor-product quadrature over the contour and a copy shrunk by
/// [`INNER_SHRINK`], which keeps `z₁` and `z₂` apart.
pub fn delta_hat_numeric(
    spec: &SpectralSummary,
    f1: &ShrinkageSpec,
    f2: &ShrinkageSpec,
    contour: &Contour,
) -> Result<f64> {
    let inner = contour.shrunk(INNER_SHRINK);
    contour.check(spec, &[f1, f2])?;
    inner.check(spec, &[f1, f2])?;
    let outer_nodes = contour.nodes();
    let inner_nodes = inner.nodes();
    let outer = plug_ins(spec, &outer_nodes)?;
    let inner_pts = plug_ins(spec, &inner_nodes)?;
    let fw1 = f_values(f1, &outer_nodes)?;
    let fw2 = f_values(f2, &inner_nodes)?;

    // δ̂(z₁, z₂) = Θ₁Θ₂[(z₁Θ₁ − z₂Θ₂)/(z₁ − z₂) − 1]: fold Θ₂ into the inner weights
    // and pull Θ₁ out of each row so the inner loop is one complex division
    let cw: Vec<Complex64> = inner_pts.iter().zip(&fw2).map(|(b, w2)| b.theta * w2).collect();
    let zt: Vec<Complex64> = inner_pts.iter().map(|b| b.z * b.theta).collect();
    let c_sum = cw.iter().fold(Complex64::new(0.0, 0.0), |acc, c| acc + c);
    // rows are summed independently, then reduced in index order
    let rows: Vec<Complex64> = outer
        .par_iter()
        .zip(fw1.par_iter())
        .map(|(a, w1)| {
            let a_zt = a.z * a.theta;
            let mut acc = Complex64::new(0.0, 0.0);
            // the shrunken copy never meets the outer rectangle, so z₁ ≠ z₂ throughout
            for ((b, c), bzt) in inner_pts.iter().zip(&cw).zip(&zt) {
                acc += c * ((a_zt - bzt) / (a.z - b.z));
            }
            (acc - c_sum) * a.theta * w1
        })
        .collect();
    let total = rows.iter().fold(Complex64::new(0.0, 0.0), |acc, r| acc + r);
    // 2/(2πi)² = −1/(2π²)
    real_part(total * (-1.0 / (2.0 * PI * PI)))
}
