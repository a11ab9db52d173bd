//! Spectral shrinkage functions `f` applied to the sample covariance through its
//! eigendecomposition.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::{ComplexPoint, POLE_TOL};

/// Minimum separation between two roots of a ridge mixture.
pub const ROOT_SEPARATION: f64 = 1e-8;

/// One term `w / (x − r)` of a ridge mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgeTerm {
    pub root: f64,
    pub weight: f64,
}

/// A regularizer `f` replacing `Σ̂⁻¹` in the classical invariant statistics.
#[derive(Debug, Clone, PartialEq)]
pub enum ShrinkageSpec {
    /// `f(x) = 1/(x − ℓ)`, `ℓ < 0`.
    Ridge { ell: f64 },
    /// `f(x) = Σ wⱼ/(x − rⱼ)` with distinct negative roots.
    RidgeMixture(Vec<RidgeTerm>),
    /// `f(x) = 1/(l₀ + l₁x + l₂x² + l₃x³)` with real, distinct, negative roots.
    PolyInverse { coeffs: [f64; 4] },
    /// `f ≡ 1`.
    Identity,
    /// `f(x) = 1/x`; only meaningful when `p < n`.
    ClassicalInverse,
}

impl ShrinkageSpec {
    pub fn ridge(ell: f64) -> Result<Self> {
        let f = ShrinkageSpec::Ridge { ell };
        f.validate()?;
        Ok(f)
    }

    pub fn mixture(terms: Vec<RidgeTerm>) -> Result<Self> {
        let f = ShrinkageSpec::RidgeMixture(terms);
        f.validate()?;
        Ok(f)
    }

    /// Builds `1/poly(x)` and checks that the cubic stays positive on `[0, upper]`.
    pub fn poly_inverse(coeffs: [f64; 4], upper: f64) -> Result<Self> {
        let f = ShrinkageSpec::PolyInverse { coeffs };
        f.validate()?;
        let lo = (0..=64)
            .map(|i| upper * i as f64 / 64.0)
            .map(|x| poly_eval(&coeffs, x))
            .fold(f64::INFINITY, f64::min);
        if lo <= 0.0 {
            return Err(Error::InvalidShrinkage(format!("polynomial not positive on [0, {upper}]")));
        }
        Ok(f)
    }

    /// Checks the parameter invariants of each variant.
    pub fn validate(&self) -> Result<()> {
        match self {
            ShrinkageSpec::Ridge { ell } => {
                if !(ell.is_finite() && *ell < 0.0) {
                    return Err(Error::InvalidShrinkage(format!("ridge parameter {ell} must be negative")));
                }
            }
            ShrinkageSpec::RidgeMixture(terms) => {
                if terms.is_empty() || terms.iter().all(|t| t.weight == 0.0) {
                    return Err(Error::InvalidShrinkage("mixture has no nonzero weight".into()));
                }
                for t in terms {
                    if !(t.root.is_finite() && t.root < 0.0 && t.weight.is_finite()) {
                        return Err(Error::InvalidShrinkage(format!("bad mixture term {t:?}")));
                    }
                }
                check_separated(&terms.iter().map(|t| t.root).collect::<Vec<_>>())?;
            }
            ShrinkageSpec::PolyInverse { coeffs } => {
                let roots = real_roots(coeffs)?;
                if let Some(r) = roots.iter().find(|r| **r >= 0.0) {
                    return Err(Error::InvalidShrinkage(format!("polynomial root {r} is not negative")));
                }
                check_separated(&roots)?;
                if coeffs[0] <= 0.0 {
                    return Err(Error::InvalidShrinkage("polynomial must be positive at 0".into()));
                }
            }
            ShrinkageSpec::Identity | ShrinkageSpec::ClassicalInverse => {}
        }
        Ok(())
    }

    /// Real poles of `f`.
    pub fn poles(&self) -> Vec<f64> {
        match self {
            ShrinkageSpec::Ridge { ell } => vec![*ell],
            ShrinkageSpec::RidgeMixture(terms) => terms.iter().map(|t| t.root).collect(),
            ShrinkageSpec::PolyInverse { coeffs } => real_roots(coeffs).unwrap_or_default(),
            ShrinkageSpec::Identity => vec![],
            ShrinkageSpec::ClassicalInverse => vec![0.0],
        }
    }

    /// Scalar evaluation `f(x)`.
    pub fn evaluate(&self, x: ComplexPoint) -> Result<ComplexPoint> {
        let pole = |r: f64| -> Result<Complex64> {
            let d = x - r;
            if d.norm() < POLE_TOL {
                return Err(Error::PoleProximity { z: x.to_string(), tol: POLE_TOL });
            }
            Ok(d.inv())
        };
        match self {
            ShrinkageSpec::Ridge { ell } => pole(*ell),
            ShrinkageSpec::RidgeMixture(terms) => {
                let mut acc = Complex64::new(0.0, 0.0);
                for t in terms {
                    acc += t.weight * pole(t.root)?;
                }
                Ok(acc)
            }
            ShrinkageSpec::PolyInverse { coeffs } => {
                let v = coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * x + c);
                if v.norm() < POLE_TOL {
                    return Err(Error::PoleProximity { z: x.to_string(), tol: POLE_TOL });
                }
                Ok(v.inv())
            }
            ShrinkageSpec::Identity => Ok(Complex64::new(1.0, 0.0)),
            ShrinkageSpec::ClassicalInverse => pole(0.0),
        }
    }

    /// Multiplies `f` by a positive constant.
    pub fn scaled(&self, c: f64) -> Self {
        match self {
            ShrinkageSpec::RidgeMixture(terms) => ShrinkageSpec::RidgeMixture(
                terms.iter().map(|t| RidgeTerm { root: t.root, weight: c * t.weight }).collect(),
            ),
            ShrinkageSpec::PolyInverse { coeffs } => {
                ShrinkageSpec::PolyInverse { coeffs: coeffs.map(|l| l / c) }
            }
            ShrinkageSpec::Ridge { ell } => {
                ShrinkageSpec::RidgeMixture(vec![RidgeTerm { root: *ell, weight: c }])
            }
            other => other.clone(),
        }
    }

    /// Short name used in result files.
    pub fn label(&self) -> String {
        match self {
            ShrinkageSpec::Ridge { ell } => format!("ridge({ell})"),
            ShrinkageSpec::RidgeMixture(terms) => format!("mixture({})", terms.len()),
            ShrinkageSpec::PolyInverse { .. } => "poly_inverse".into(),
            ShrinkageSpec::Identity => "identity".into(),
            ShrinkageSpec::ClassicalInverse => "classical".into(),
        }
    }
}

/// Applies `f` element-wise to a nonnegative spectrum, preserving order.
pub fn shrink_spectrum(eigs: &[f64], f: &ShrinkageSpec) -> Result<Vec<f64>> {
    if let ShrinkageSpec::ClassicalInverse = f {
        if eigs.iter().any(|&l| l <= 0.0) {
            return Err(Error::SingularSpectrum);
        }
        return Ok(eigs.iter().map(|l| 1.0 / l).collect());
    }
    eigs.iter().map(|&l| f.evaluate(Complex64::new(l, 0.0)).map(|v| v.re)).collect()
}

/// Rewrites `1/poly(x)` with simple real roots as `Σ wⱼ/(x − rⱼ)`, where
/// `wⱼ = 1/(c Πᵢ≠ⱼ (rⱼ − rᵢ))` and `c` is the leading coefficient.
pub fn partial_fractions(f: &ShrinkageSpec) -> Result<ShrinkageSpec> {
    let ShrinkageSpec::PolyInverse { coeffs } = f else {
        return Err(Error::InvalidShrinkage(format!("{} is not a polynomial inverse", f.label())));
    };
    let roots = real_roots(coeffs)?;
    check_separated(&roots)?;
    let lead = coeffs[degree(coeffs)];
    let terms = roots
        .iter()
        .enumerate()
        .map(|(j, &r)| {
            let prod: f64 = roots
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != j)
                .map(|(_, &ri)| r - ri)
                .product();
            RidgeTerm { root: r, weight: 1.0 / (lead * prod) }
        })
        .collect();
    Ok(ShrinkageSpec::RidgeMixture(terms))
}

fn check_separated(roots: &[f64]) -> Result<()> {
    for (i, a) in roots.iter().enumerate() {
        for b in &roots[i + 1..] {
            if (a - b).abs() < ROOT_SEPARATION {
                return Err(Error::RootMultiplicity(*a, *b));
            }
        }
    }
    Ok(())
}

fn poly_eval(coeffs: &[f64; 4], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn degree(coeffs: &[f64; 4]) -> usize {
    (0..4).rev().find(|&i| coeffs[i] != 0.0).unwrap_or(0)
}

/// Real roots of a polynomial of degree at most three, sorted descending.
/// Complex roots are an error.
fn real_roots(coeffs: &[f64; 4]) -> Result<Vec<f64>> {
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidShrinkage("non-finite coefficient".into()));
    }
    let deg = degree(coeffs);
    let mut roots = match deg {
        0 => return Err(Error::InvalidShrinkage("constant polynomial has no roots".into())),
        1 => vec![-coeffs[0] / coeffs[1]],
        2 => {
            let (a, b, c) = (coeffs[2], coeffs[1], coeffs[0]);
            let disc = b * b - 4.0 * a * c;
            if disc < 0.0 {
                return Err(Error::InvalidShrinkage("quadratic has complex roots".into()));
            }
            if disc <= 1e-14 * b * b {
                return Err(Error::RootMultiplicity(-b / (2.0 * a), -b / (2.0 * a)));
            }
            // stable form avoids cancellation
            let q = -0.5 * (b + b.signum() * disc.sqrt());
            if q == 0.0 {
                vec![0.0, 0.0]
            } else {
                vec![q / a, c / q]
            }
        }
        _ => cubic_roots(coeffs)?,
    };
    for r in roots.iter_mut() {
        *r = polish(coeffs, *r);
    }
    roots.sort_by(|a, b| b.total_cmp(a));
    Ok(roots)
}

fn cubic_roots(coeffs: &[f64; 4]) -> Result<Vec<f64>> {
    let a = coeffs[3];
    let (b, c, d) = (coeffs[2] / a, coeffs[1] / a, coeffs[0] / a);
    // depressed cubic t³ + pt + q with x = t − b/3
    let shift = b / 3.0;
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
    // p ≈ 0 relative to the terms it is computed from means a triple root
    if p.abs() <= 1e-10 * (b * b / 3.0 + c.abs()) {
        return Err(Error::RootMultiplicity(-shift, -shift));
    }
    let (q2, p3) = ((q / 2.0).powi(2), (p / 3.0).powi(3));
    let disc = q2 + p3;
    // a discriminant lost in the cancellation of its two terms means a repeated root,
    // which no tolerance on the computed roots can resolve reliably
    let tol = 1e-10 * q2.max(p3.abs());
    if disc.abs() <= tol {
        return Err(Error::RootMultiplicity(-shift, -shift));
    }
    if disc > 0.0 {
        return Err(Error::InvalidShrinkage("cubic has complex roots".into()));
    }
    let r = 2.0 * (-p / 3.0).sqrt();
    let arg = (3.0 * q / (p * r)).clamp(-1.0, 1.0);
    let phi = arg.acos() / 3.0;
    Ok((0..3)
        .map(|k| r * (phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() - shift)
        .collect())
}

fn polish(coeffs: &[f64; 4], mut x: f64) -> f64 {
    for _ in 0..4 {
        let v = poly_eval(coeffs, x);
        let dv = coeffs[1] + x * (2.0 * coeffs[2] + 3.0 * x * coeffs[3]);
        if dv == 0.0 || !v.is_finite() {
            break;
        }
        let step = v / dv;
        x -= step;
        if step.abs() <= 1e-16 * x.abs().max(1.0) {
            break;
        }
    }
    x
}
