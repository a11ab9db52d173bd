//! Plug-in spectral transforms of the sample error covariance.
//!
//! Everything in this module is a function of the sorted sample spectrum and
//! the aspect ratio `γ_n = p/n`:
//!
//! * the Stieltjes transform `m(z) = p⁻¹ Σ 1/(λᵢ − z)` and its derivative,
//! * the companion transform `Θ(z) = 1/(1 − γ − γ z m(z))`,
//! * the variance kernel `δ(z₁, z₂)` and its diagonal limit,
//! * the spectral-moment functions `ρ₀, ρ₁, ρ₂` and the prior functional `h`.
//!
//! All transforms accept complex arguments, since contour quadrature needs
//! them off the real axis; test-time use is at real negative `ℓ`.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// A point of the complex plane.
pub type ComplexPoint = Complex64;

/// Minimum distance between an argument and a sample eigenvalue.
pub const POLE_TOL: f64 = 1e-12;
/// Below this separation `δ(z₁, z₂)` switches to the diagonal formula.
pub const COINCIDENT_TOL: f64 = 1e-8;
/// Eigenvalues in `[-EIG_SLACK, 0)` are clamped to zero; below it they are rejected.
pub const EIG_SLACK: f64 = 1e-10;

const DENOM_TOL: f64 = 1e-12;

/// Sorted spectrum of the sample error covariance together with its dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSummary {
    eigenvalues: Vec<f64>,
    p: usize,
    n: Option<usize>,
    gamma_n: f64,
    trace_mean: f64,
}

impl SpectralSummary {
    /// Builds a summary from the `p` eigenvalues of `Σ̂_p` and the degrees of freedom `n`.
    pub fn new(eigenvalues: Vec<f64>, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSpectrum("n must be positive".into()));
        }
        let p = eigenvalues.len();
        Self::build(eigenvalues, Some(n), p as f64 / n as f64)
    }

    /// Builds a summary with an explicit aspect ratio, for synthetic spectra and the
    /// `γ → 0` limit. The degrees of freedom are left unspecified.
    pub fn with_ratio(eigenvalues: Vec<f64>, gamma_n: f64) -> Result<Self> {
        if !(gamma_n.is_finite() && gamma_n >= 0.0) {
            return Err(Error::InvalidSpectrum(format!("bad aspect ratio {gamma_n}")));
        }
        Self::build(eigenvalues, None, gamma_n)
    }

    fn build(mut eigenvalues: Vec<f64>, n: Option<usize>, gamma_n: f64) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidSpectrum("empty spectrum".into()));
        }
        for v in eigenvalues.iter_mut() {
            if !v.is_finite() {
                return Err(Error::InvalidSpectrum(format!("non-finite eigenvalue {v}")));
            }
            if *v < -EIG_SLACK {
                return Err(Error::InvalidSpectrum(format!("negative eigenvalue {v}")));
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        let p = eigenvalues.len();
        let trace_mean = eigenvalues.iter().sum::<f64>() / p as f64;
        Ok(Self { eigenvalues, p, n, gamma_n, trace_mean })
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Degrees of freedom, when the summary came from data.
    pub fn n(&self) -> Option<usize> {
        self.n
    }

    pub fn gamma_n(&self) -> f64 {
        self.gamma_n
    }

    /// `p⁻¹ tr(Σ̂_p)`.
    pub fn trace_mean(&self) -> f64 {
        self.trace_mean
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[self.p - 1]
    }

    /// `p⁻¹ Σ λᵢ^k` of the sample spectrum.
    pub fn moment(&self, k: i32) -> f64 {
        self.eigenvalues.iter().map(|l| l.powi(k)).sum::<f64>() / self.p as f64
    }

    /// Evaluates the resolvent quantities at `z` once, for reuse by several transforms.
    pub fn at(&self, z: ComplexPoint) -> Result<PlugIn> {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::InvalidSpectrum(format!("non-finite argument {z}")));
        }
        let mut m = Complex64::new(0.0, 0.0);
        let mut dm = Complex64::new(0.0, 0.0);
        for &l in &self.eigenvalues {
            let d = Complex64::new(l, 0.0) - z;
            if d.norm() < POLE_TOL {
                return Err(Error::PoleProximity { z: z.to_string(), tol: POLE_TOL });
            }
            let r = d.inv();
            m += r;
            dm += r * r;
        }
        let scale = 1.0 / self.p as f64;
        m *= scale;
        dm *= scale;
        let denom = 1.0 - self.gamma_n - self.gamma_n * z * m;
        if denom.norm() <= DENOM_TOL {
            return Err(Error::DegenerateDenominator { z: z.to_string() });
        }
        Ok(PlugIn {
            z,
            m,
            dm,
            theta: denom.inv(),
            gamma_n: self.gamma_n,
            trace_mean: self.trace_mean,
        })
    }

    /// `m_{n,p}(z) = p⁻¹ tr(Σ̂_p − zI)⁻¹`.
    pub fn stieltjes(&self, z: ComplexPoint) -> Result<ComplexPoint> {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::InvalidSpectrum(format!("non-finite argument {z}")));
        }
        let mut m = Complex64::new(0.0, 0.0);
        for &l in &self.eigenvalues {
            let d = Complex64::new(l, 0.0) - z;
            if d.norm() < POLE_TOL {
                return Err(Error::PoleProximity { z: z.to_string(), tol: POLE_TOL });
            }
            m += d.inv();
        }
        Ok(m / self.p as f64)
    }

    /// `m'_{n,p}(z) = p⁻¹ Σ (λᵢ − z)⁻²`.
    pub fn stieltjes_deriv(&self, z: ComplexPoint) -> Result<ComplexPoint> {
        let mut dm = Complex64::new(0.0, 0.0);
        for &l in &self.eigenvalues {
            let d = Complex64::new(l, 0.0) - z;
            if d.norm() < POLE_TOL {
                return Err(Error::PoleProximity { z: z.to_string(), tol: POLE_TOL });
            }
            let r = d.inv();
            dm += r * r;
        }
        Ok(dm / self.p as f64)
    }

    /// `Θ̂(z) = 1/(1 − γ_n − γ_n z m_{n,p}(z))`.
    pub fn theta_hat(&self, z: ComplexPoint) -> Result<ComplexPoint> {
        Ok(self.at(z)?.theta)
    }

    /// Plug-in variance kernel `δ̂(z₁, z₂)`; symmetric in its arguments.
    pub fn delta_kernel_hat(&self, z1: ComplexPoint, z2: ComplexPoint) -> Result<ComplexPoint> {
        if (z1 - z2).norm() < COINCIDENT_TOL {
            // midpoint keeps the result symmetric under swapping
            return Ok(self.at((z1 + z2) * 0.5)?.delta_diag());
        }
        let a = self.at(z1)?;
        let b = self.at(z2)?;
        Ok(self.delta_pair(&a, &b))
    }

    /// Two-point kernel `Θ₁Θ₂[(z₁Θ₁ − z₂Θ₂)/(z₁ − z₂) − 1]` from two evaluations,
    /// with the diagonal limit for coincident points.
    ///
    /// The difference quotient is expanded as
    /// `Θ₁Θ₂[(1 − γ) + γz₁z₂ p⁻¹Σ (λᵢ − z₁)⁻¹(λᵢ − z₂)⁻¹]`, which has no cancellation
    /// when `z₁` and `z₂` are close.
    pub fn delta_pair(&self, a: &PlugIn, b: &PlugIn) -> ComplexPoint {
        if (a.z - b.z).norm() < COINCIDENT_TOL {
            return a.delta_diag();
        }
        let mut s = Complex64::new(0.0, 0.0);
        for &l in &self.eigenvalues {
            s += ((Complex64::new(l, 0.0) - a.z) * (Complex64::new(l, 0.0) - b.z)).inv();
        }
        s /= self.p as f64;
        let tt = a.theta * b.theta;
        let quotient = tt * ((1.0 - self.gamma_n) + self.gamma_n * a.z * b.z * s);
        tt * (quotient - 1.0)
    }

    /// `ρ̂_j(z)` for `j ∈ {0, 1, 2}`.
    pub fn rho_hat(&self, z: ComplexPoint, j: usize) -> Result<ComplexPoint> {
        self.at(z)?.rho(j)
    }

    /// `ĥ(z) = Σ t_j ρ̂_j(z)`.
    pub fn h_hat(&self, z: ComplexPoint, weights: &PriorWeights) -> Result<ComplexPoint> {
        Ok(self.at(z)?.h(weights))
    }
}

/// Resolvent quantities at a single point: `m`, `m'` and `Θ̂`.
#[derive(Debug, Clone, Copy)]
pub struct PlugIn {
    pub z: ComplexPoint,
    pub m: ComplexPoint,
    pub dm: ComplexPoint,
    pub theta: ComplexPoint,
    gamma_n: f64,
    trace_mean: f64,
}

impl PlugIn {
    /// Diagonal limit `γ{1+zm}Θ³ + γz{m + zm'}Θ⁴`.
    pub fn delta_diag(&self) -> ComplexPoint {
        let (z, m, dm, th) = (self.z, self.m, self.dm, self.theta);
        let th2 = th * th;
        let th3 = th2 * th;
        self.gamma_n * (1.0 + z * m) * th3 + self.gamma_n * z * (m + z * dm) * th3 * th
    }

    pub fn rho(&self, j: usize) -> Result<ComplexPoint> {
        match j {
            0 => Ok(self.m),
            1 => Ok(self.rho1()),
            2 => Ok(self.theta * (self.trace_mean + self.z * self.rho1())),
            _ => Err(Error::InvalidPrior(format!("no spectral moment function of order {j}"))),
        }
    }

    fn rho1(&self) -> ComplexPoint {
        self.theta * (1.0 + self.z * self.m)
    }

    pub fn h(&self, w: &PriorWeights) -> ComplexPoint {
        let r1 = self.rho1();
        let r2 = self.theta * (self.trace_mean + self.z * r1);
        w.t0 * self.m + w.t1 * r1 + w.t2 * r2
    }
}

/// Weights `(t₀, t₁, t₂)` of the quadratic prior `ℛℛᵀ = t₀I + t₁Σ + t₂Σ²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorWeights {
    pub t0: f64,
    pub t1: f64,
    pub t2: f64,
}

impl PriorWeights {
    pub const fn new(t0: f64, t1: f64, t2: f64) -> Self {
        Self { t0, t1, t2 }
    }

    /// The three canonical priors `(1,0,0)`, `(0,1,0)`, `(0,0,1)`.
    pub const fn canonical() -> [PriorWeights; 3] {
        [Self::new(1.0, 0.0, 0.0), Self::new(0.0, 1.0, 0.0), Self::new(0.0, 0.0, 1.0)]
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::new(c * self.t0, c * self.t1, c * self.t2)
    }

    pub fn is_zero(&self) -> bool {
        self.t0 == 0.0 && self.t1 == 0.0 && self.t2 == 0.0
    }

    fn quadratic(&self, x: f64) -> f64 {
        self.t0 + x * (self.t1 + x * self.t2)
    }

    /// Checks that `t₀ + t₁x + t₂x²` is nonnegative on `[0, λ_max]`.
    pub fn check_for(&self, spec: &SpectralSummary) -> Result<()> {
        let hi = spec.lambda_max();
        let mut pts = vec![0.0, hi];
        if self.t2 != 0.0 {
            let v = -self.t1 / (2.0 * self.t2);
            if v > 0.0 && v < hi {
                pts.push(v);
            }
        }
        let scale = self.t0.abs() + self.t1.abs() * hi + self.t2.abs() * hi * hi;
        for x in pts {
            if self.quadratic(x) < -1e-12 * scale.max(1.0) {
                return Err(Error::InvalidPrior(format!(
                    "prior polynomial negative at x = {x} for weights ({}, {}, {})",
                    self.t0, self.t1, self.t2
                )));
            }
        }
        Ok(())
    }

    /// Compact label used in result files, e.g. `t100`.
    pub fn label(&self) -> String {
        let fmt = |v: f64| {
            if v.fract() == 0.0 && v.abs() < 10.0 {
                format!("{}", v as i64)
            } else {
                format!("{v}")
            }
        };
        let parts = [fmt(self.t0), fmt(self.t1), fmt(self.t2)];
        if parts.iter().all(|s| s.len() == 1) {
            format!("t{}{}{}", parts[0], parts[1], parts[2])
        } else {
            format!("t{}_{}_{}", parts[0], parts[1], parts[2])
        }
    }
}
