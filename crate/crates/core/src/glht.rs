//! The multivariate linear model `Y = BX + Σ^{1/2}Z`, the hypothesis `H₀: BC = 0`,
//! and the regularized LR, LH and BNP statistics built from `M(f)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::calculus::omega_delta_for;
use crate::error::{Error, Result};
use crate::linalg::{sym_eigen_desc, sym_eigenvalues_desc, sym_inv_sqrt};
use crate::shrinkage::{shrink_spectrum, ShrinkageSpec};
use crate::spectral::SpectralSummary;

/// Relative singular-value threshold for the rank checks on `X` and `C`.
pub const RANK_TOL: f64 = 1e-10;

/// Upper-tail probability `1 − Φ(x)`, accurate far into the tail.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Standard normal distribution function `Φ(x)`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile `Φ⁻¹(u)`, polished by Newton steps against [`normal_cdf`].
pub fn normal_quantile(u: f64) -> f64 {
    let mut x = Normal::standard().inverse_cdf(u);
    if !x.is_finite() {
        return x;
    }
    for _ in 0..2 {
        let density = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if density <= 0.0 {
            break;
        }
        // Φ(x) − u, evaluated in the tail where it does not cancel
        let resid = if x > 0.0 { (1.0 - u) - normal_sf(x) } else { normal_cdf(x) - u };
        x -= resid / density;
    }
    x
}

/// Observations `Y` (p×N), design `X` (k×N) and constraints `C` (k×q).
#[derive(Debug, Clone, PartialEq)]
pub struct GlhtProblem {
    pub y: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl GlhtProblem {
    pub fn new(y: DMatrix<f64>, x: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let prob = GlhtProblem { y, x, c };
        prob.check_shapes()?;
        Ok(prob)
    }

    pub fn p(&self) -> usize {
        self.y.nrows()
    }

    pub fn big_n(&self) -> usize {
        self.y.ncols()
    }

    pub fn k(&self) -> usize {
        self.x.nrows()
    }

    pub fn q(&self) -> usize {
        self.c.ncols()
    }

    /// Checks conformance of `Y`, `X` and `C` and that `N > k ≥ q ≥ 1`.
    pub fn check_shapes(&self) -> Result<()> {
        let (p, n_obs) = self.y.shape();
        let (k, nx) = self.x.shape();
        let (kc, q) = self.c.shape();
        if p == 0 || n_obs == 0 || k == 0 || q == 0 {
            return Err(Error::Shape("empty matrix".into()));
        }
        if nx != n_obs {
            return Err(Error::Shape(format!("Y has {n_obs} columns but X has {nx}")));
        }
        if kc != k {
            return Err(Error::Shape(format!("X has {k} rows but C has {kc}")));
        }
        if q > k {
            return Err(Error::Shape(format!("C has {q} columns, more than its {k} rows")));
        }
        if n_obs <= k {
            return Err(Error::Shape(format!("need N > k, got N = {n_obs}, k = {k}")));
        }
        Ok(())
    }
}

/// Quantities derived once from a problem and shared by every shrinkage and criterion.
#[derive(Debug, Clone)]
pub struct FitArtifacts {
    /// Residual degrees of freedom `N − k`.
    pub n: usize,
    /// `Q_n = Xᵀ(XXᵀ)⁻¹C[Cᵀ(XXᵀ)⁻¹C]^{-1/2}`, N×q with orthonormal columns.
    pub qn: DMatrix<f64>,
    /// `Y Q_n`, p×q.
    pub yq: DMatrix<f64>,
    /// Eigenvalues of `Σ̂_p`, descending, length p (zero-padded past the rank).
    pub sigma_eigs: Vec<f64>,
    /// Eigenvectors for the leading `sigma_vecs.ncols()` eigenvalues.
    pub sigma_vecs: DMatrix<f64>,
    pub spec: SpectralSummary,
    /// `T = Cᵀ(n⁻¹XXᵀ)⁻¹C`.
    pub tmat: DMatrix<f64>,
}

impl FitArtifacts {
    pub fn p(&self) -> usize {
        self.sigma_eigs.len()
    }

    pub fn q(&self) -> usize {
        self.yq.ncols()
    }

    /// True when `sigma_vecs` spans only part of `ℝᵖ`.
    pub fn is_thin(&self) -> bool {
        self.sigma_vecs.ncols() < self.p()
    }
}

fn rank_ok(gram_eigs: &[f64]) -> bool {
    let top = gram_eigs.first().copied().unwrap_or(0.0).max(0.0).sqrt();
    let bottom = gram_eigs.last().copied().unwrap_or(0.0).max(0.0).sqrt();
    top > 0.0 && bottom > RANK_TOL * top
}

/// Fits the full model and forms `Σ̂_p`, `Q_n` and `T`.
pub fn fit(problem: &GlhtProblem) -> Result<FitArtifacts> {
    problem.check_shapes()?;
    let (y, x, c) = (&problem.y, &problem.x, &problem.c);
    let (p, big_n, k) = (problem.p(), problem.big_n(), problem.k());
    let n = big_n - k;

    let xxt = x * x.transpose();
    if !rank_ok(&sym_eigenvalues_desc(&xxt)) {
        return Err(Error::RankDeficientDesign);
    }
    if !rank_ok(&sym_eigenvalues_desc(&(c.transpose() * c))) {
        return Err(Error::RankDeficientConstraints);
    }
    let xxt_inv = xxt.clone().cholesky().ok_or(Error::RankDeficientDesign)?.inverse();

    let a = c.transpose() * &xxt_inv * c;
    let a = (&a + a.transpose()) * 0.5;
    let qn = x.transpose() * &xxt_inv * c * sym_inv_sqrt(&a);
    let tmat = &a * n as f64;
    let yq = y * &qn;

    // residuals Y(I − P_X) without forming the N×N projector
    let resid = y - (y * x.transpose()) * &xxt_inv * x;
    let rank = p.min(n);
    let (sigma_eigs, sigma_vecs) = if p <= big_n {
        let s = (&resid * resid.transpose()) / n as f64;
        let (vals, vecs) = sym_eigen_desc(&s);
        let mut eigs: Vec<f64> = vals.iter().copied().collect();
        for e in eigs.iter_mut().skip(rank) {
            *e = 0.0;
        }
        (eigs, vecs)
    } else {
        // thin route through the N×N Gram matrix: Σ̂ = RRᵀ/n shares its nonzero spectrum with RᵀR/n
        let g = (resid.transpose() * &resid) / n as f64;
        let (vals, vecs) = sym_eigen_desc(&g);
        let mut eigs = vec![0.0; p];
        let mut cols = Vec::with_capacity(rank);
        for j in 0..rank {
            let lam = vals[j];
            if lam <= 0.0 {
                break;
            }
            eigs[j] = lam;
            let u = &resid * vecs.column(j) / (n as f64 * lam).sqrt();
            cols.push(u);
        }
        let vecs = if cols.is_empty() { DMatrix::zeros(p, 0) } else { DMatrix::from_columns(&cols) };
        (eigs, vecs)
    };
    let spec = SpectralSummary::new(sigma_eigs.clone(), n)?;
    let sigma_eigs = spec.eigenvalues().to_vec();
    Ok(FitArtifacts { n, qn, yq, sigma_eigs, sigma_vecs, spec, tmat })
}

/// `M(f) = n⁻¹ (YQ)ᵀ f(Σ̂_p) (YQ)`, symmetrized.
pub fn m_matrix(fit: &FitArtifacts, f: &ShrinkageSpec) -> Result<DMatrix<f64>> {
    f.validate()?;
    if *f == ShrinkageSpec::ClassicalInverse && fit.p() >= fit.n {
        return Err(Error::SingularSpectrum);
    }
    let r = fit.sigma_vecs.ncols();
    let fvals = shrink_spectrum(&fit.sigma_eigs[..r], f)?;
    let w = fit.sigma_vecs.transpose() * &fit.yq;
    let mut fw = w.clone();
    for (i, fv) in fvals.iter().enumerate() {
        fw.row_mut(i).scale_mut(*fv);
    }
    let mut m = w.transpose() * fw;
    if fit.is_thin() {
        // f acts as f(0) on the orthogonal complement of the retained eigenvectors
        let f0 = shrink_spectrum(&[0.0], f)?[0];
        let complement = fit.yq.transpose() * &fit.yq - w.transpose() * &w;
        m += complement * f0;
    }
    m /= fit.n as f64;
    Ok((&m + m.transpose()) * 0.5)
}

/// Test criterion applied to the eigenvalues of `M(f)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Criterion {
    /// Likelihood ratio, `Σ log(1 + λᵢ)`.
    LR,
    /// Lawley–Hotelling trace, `Σ λᵢ`.
    LH,
    /// Bartlett–Nanda–Pillai trace, `Σ λᵢ/(1 + λᵢ)`.
    BNP,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::LR, Criterion::LH, Criterion::BNP];

    /// Picks this criterion's component from [`raw_statistics`].
    pub fn pick(&self, raw: (f64, f64, f64)) -> f64 {
        match self {
            Criterion::LR => raw.0,
            Criterion::LH => raw.1,
            Criterion::BNP => raw.2,
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::LR => "LR",
            Criterion::LH => "LH",
            Criterion::BNP => "BNP",
        })
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LR" => Ok(Criterion::LR),
            "LH" => Ok(Criterion::LH),
            "BNP" => Ok(Criterion::BNP),
            _ => Err(Error::Parse(format!("unknown criterion {s:?}"))),
        }
    }
}

/// `(LR, LH, BNP)` raw statistics from the eigenvalues of `M(f)`.
pub fn raw_statistics(m_eigs: &[f64]) -> Result<(f64, f64, f64)> {
    if let Some(&bad) = m_eigs.iter().find(|&&l| l <= -1.0 || l.is_nan()) {
        return Err(Error::DomainError(bad));
    }
    let lr = m_eigs.iter().map(|l| l.ln_1p()).sum();
    let lh = m_eigs.iter().sum();
    let bnp = m_eigs.iter().map(|l| l / (1.0 + l)).sum();
    Ok((lr, lh, bnp))
}

/// Centers and scales a raw statistic to be asymptotically standard normal under `H₀`.
pub fn standardize(raw: f64, criterion: Criterion, omega: f64, delta: f64, q: usize, n: usize) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::NonPositiveVariance(delta));
    }
    let qf = q as f64;
    let scale = (n as f64).sqrt() / (qf.sqrt() * delta.sqrt());
    Ok(match criterion {
        Criterion::LH => scale * (raw - qf * omega),
        Criterion::LR => {
            if omega <= -1.0 {
                return Err(Error::DomainError(omega));
            }
            scale * (1.0 + omega) * (raw - qf * omega.ln_1p())
        }
        Criterion::BNP => {
            let a = 1.0 + omega;
            scale * a * a * (raw - qf * omega / a)
        }
    })
}

/// Result of one regularized test.
#[derive(Debug, Clone, PartialEq)]
pub struct TestOutcome {
    pub criterion: Criterion,
    pub f_used: ShrinkageSpec,
    /// Eigenvalues of `M(f)`, descending.
    pub m_eigs: Vec<f64>,
    pub raw_stat: f64,
    pub omega_hat: f64,
    pub delta_hat: f64,
    pub standardized: f64,
    /// `1 − Φ(standardized)`.
    pub p_value: f64,
}

impl TestOutcome {
    /// Upper-tail rejection at level `alpha`.
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Eigenvalues of `M(f)` in descending order.
pub fn m_eigenvalues(fit: &FitArtifacts, f: &ShrinkageSpec) -> Result<Vec<f64>> {
    Ok(sym_eigenvalues_desc(&m_matrix(fit, f)?))
}

/// Runs every criterion for one `f`, sharing `M(f)` and `(Ω̂, Δ̂)`.
pub fn test_all_criteria(fit: &FitArtifacts, f: &ShrinkageSpec) -> Result<[TestOutcome; 3]> {
    let m_eigs = m_eigenvalues(fit, f)?;
    let raw = raw_statistics(&m_eigs)?;
    let (omega, delta) = omega_delta_for(f, &fit.spec)?;
    let build = |criterion: Criterion| -> Result<TestOutcome> {
        let raw_stat = criterion.pick(raw);
        let standardized = standardize(raw_stat, criterion, omega, delta, fit.q(), fit.n)?;
        Ok(TestOutcome {
            criterion,
            f_used: f.clone(),
            m_eigs: m_eigs.clone(),
            raw_stat,
            omega_hat: omega,
            delta_hat: delta,
            standardized,
            p_value: normal_sf(standardized),
        })
    };
    Ok([build(Criterion::LR)?, build(Criterion::LH)?, build(Criterion::BNP)?])
}

/// One criterion on an existing fit.
pub fn test_on_fit(fit: &FitArtifacts, f: &ShrinkageSpec, criterion: Criterion) -> Result<TestOutcome> {
    let [lr, lh, bnp] = test_all_criteria(fit, f)?;
    Ok(match criterion {
        Criterion::LR => lr,
        Criterion::LH => lh,
        Criterion::BNP => bnp,
    })
}

/// Fits the model and runs one regularized test.
pub fn run_test(problem: &GlhtProblem, f: &ShrinkageSpec, criterion: Criterion) -> Result<TestOutcome> {
    test_on_fit(&fit(problem)?, f, criterion)
}

/// Predicted local power `Φ(−ξ_α + tr(SSᵀT⁻¹)·ξ/√q)` for a precomputed power functional `ξ`.
pub fn asymptotic_power(xi: f64, s: &DMatrix<f64>, tmat: &DMatrix<f64>, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha {alpha} outside (0, 1)")));
    }
    let q = tmat.nrows();
    if tmat.ncols() != q || s.nrows() != q {
        return Err(Error::Shape("S must have as many rows as T".into()));
    }
    let tinv = tmat.clone().cholesky().ok_or(Error::SingularT)?.inverse();
    let signal = (s * s.transpose() * tinv).trace();
    let z_alpha = normal_quantile(1.0 - alpha);
    Ok(normal_cdf(-z_alpha + signal * xi / (q as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
    }

    fn manova(sizes: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
        let k = sizes.len();
        let n: usize = sizes.iter().sum();
        let mut x = DMatrix::zeros(k, n);
        let mut col = 0;
        for (g, &s) in sizes.iter().enumerate() {
            for _ in 0..s {
                x[(g, col)] = 1.0;
                col += 1;
            }
        }
        let c = DMatrix::from_fn(k, k - 1, |i, j| if i == j { 1.0 } else if i == j + 1 { -1.0 } else { 0.0 });
        (x, c)
    }

    #[test]
    fn one_sample_mean() {
        let prob = GlhtProblem::new(
            DMatrix::from_row_slice(1, 2, &[3.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
        )
        .unwrap();
        let fit = fit(&prob).unwrap();
        assert_eq!(fit.n, 1);
        assert_relative_eq!(fit.sigma_eigs[0], 2.0, epsilon = 1e-12);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(fit.qn[(0, 0)].abs(), r, epsilon = 1e-12);
        assert_relative_eq!(fit.qn[(1, 0)], fit.qn[(0, 0)], epsilon = 1e-12);
    }

    #[test]
    fn q_orthonormal_and_tmat() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (x, c) = manova(&[75, 90, 135]);
        let prob = GlhtProblem::new(gaussian(20, 300, &mut rng), x.clone(), c.clone()).unwrap();
        let fit = fit(&prob).unwrap();
        let qtq = fit.qn.transpose() * &fit.qn;
        assert_relative_eq!(qtq, DMatrix::identity(2, 2), epsilon = 1e-10);
        // for group indicators n⁻¹XXᵀ is diagonal with the group sizes over n
        let n = 297.0;
        let expect = DMatrix::from_row_slice(2, 2, &[n / 75.0 + n / 90.0, -n / 90.0, -n / 90.0, n / 90.0 + n / 135.0]);
        assert_relative_eq!(fit.tmat, expect, epsilon = 1e-9);
    }

    #[test]
    fn rank_checks() {
        let y = DMatrix::from_element(2, 4, 1.0);
        let x = DMatrix::from_row_slice(2, 4, &[1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0]);
        let c = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        assert_eq!(fit(&GlhtProblem { y: y.clone(), x, c: c.clone() }).unwrap_err(), Error::RankDeficientDesign);
        let x = DMatrix::from_row_slice(2, 4, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        let c0 = DMatrix::zeros(2, 1);
        assert_eq!(fit(&GlhtProblem { y, x, c: c0 }).unwrap_err(), Error::RankDeficientConstraints);
    }

    #[test]
    fn thin_route_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (x, c) = manova(&[10, 12, 8]);
        let y = gaussian(45, 30, &mut rng);
        let thin = fit(&GlhtProblem::new(y.clone(), x.clone(), c.clone()).unwrap()).unwrap();
        assert!(thin.is_thin());
        assert_eq!(thin.sigma_eigs.iter().filter(|&&e| e > 1e-10).count(), 27);
        let f = ShrinkageSpec::ridge(-0.7).unwrap();
        let m = m_matrix(&thin, &f).unwrap();
        // dense reference
        let xxt_inv = (&x * x.transpose()).try_inverse().unwrap();
        let resid = &y - (&y * x.transpose()) * &xxt_inv * &x;
        let s = (&resid * resid.transpose()) / 27.0;
        let fs = (s - DMatrix::identity(45, 45) * -0.7).try_inverse().unwrap();
        let expect = thin.yq.transpose() * fs * &thin.yq / 27.0;
        assert_relative_eq!(m, expect, epsilon = 1e-10);
    }

    #[test]
    fn m_matrix_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (x, c) = manova(&[10, 10, 10]);
        let prob = GlhtProblem::new(gaussian(5, 30, &mut rng), x.clone(), c.clone()).unwrap();
        let fit = fit(&prob).unwrap();
        let m = m_matrix(&fit, &ShrinkageSpec::Identity).unwrap();
        assert_relative_eq!(m, fit.yq.transpose() * &fit.yq / 27.0, epsilon = 1e-12);
        let zero = fit_zero(&x, &c);
        assert_eq!(m_matrix(&zero, &ShrinkageSpec::ridge(-1.0).unwrap()).unwrap(), DMatrix::zeros(2, 2));
    }

    fn fit_zero(x: &DMatrix<f64>, c: &DMatrix<f64>) -> FitArtifacts {
        fit(&GlhtProblem::new(DMatrix::zeros(5, 30), x.clone(), c.clone()).unwrap()).unwrap()
    }

    #[test]
    fn raw_statistics_examples() {
        assert_eq!(raw_statistics(&[0.0, 0.0]).unwrap(), (0.0, 0.0, 0.0));
        let (lr, lh, bnp) = raw_statistics(&[1.0]).unwrap();
        assert_relative_eq!(lr, std::f64::consts::LN_2);
        assert_eq!((lh, bnp), (1.0, 0.5));
        let (lr, lh, bnp) = raw_statistics(&[1.0, 3.0]).unwrap();
        assert_relative_eq!(lr, 2.079_441_541_679_836, epsilon = 1e-12);
        assert_eq!((lh, bnp), (4.0, 1.25));
        assert_eq!(raw_statistics(&[-1.0]), Err(Error::DomainError(-1.0)));
    }

    #[test]
    fn standardize_examples() {
        assert_eq!(standardize(2.0 * 0.3, Criterion::LH, 0.3, 1.0, 2, 50).unwrap(), 0.0);
        assert!(standardize(2.0 * 0.3f64.ln_1p(), Criterion::LR, 0.3, 1.0, 2, 50).unwrap().abs() < 1e-14);
        assert!(standardize(2.0 * 0.3 / 1.3, Criterion::BNP, 0.3, 1.0, 2, 50).unwrap().abs() < 1e-14);
        assert_relative_eq!(standardize(3.0, Criterion::LH, 1.0, 2.0, 2, 100).unwrap(), 5.0, epsilon = 1e-12);
        assert_eq!(standardize(1.0, Criterion::LH, 1.0, 0.0, 2, 100), Err(Error::NonPositiveVariance(0.0)));
    }

    #[test]
    fn outcome_and_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (x, c) = manova(&[20, 20, 20]);
        let prob = GlhtProblem::new(gaussian(30, 60, &mut rng), x, c).unwrap();
        let out = run_test(&prob, &ShrinkageSpec::ridge(-1.0).unwrap(), Criterion::LR).unwrap();
        assert!((out.p_value - (1.0 - normal_cdf(out.standardized))).abs() <= 1e-12);
        assert!(out.m_eigs.iter().all(|&e| e >= -1e-10));
        assert_eq!(
            run_test(&prob, &ShrinkageSpec::ClassicalInverse, Criterion::LH),
            Err(Error::UnsupportedStandardization)
        );

        let t = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let s = DMatrix::from_row_slice(2, 1, &[0.3, -0.2]);
        assert_relative_eq!(asymptotic_power(0.0, &s, &t, 0.05).unwrap(), 0.05, epsilon = 1e-12);
        assert_relative_eq!(asymptotic_power(0.7, &DMatrix::zeros(2, 1), &t, 0.05).unwrap(), 0.05, epsilon = 1e-12);
        let lo = asymptotic_power(0.5, &s, &t, 0.05).unwrap();
        let hi = asymptotic_power(0.6, &s, &t, 0.05).unwrap();
        assert!(hi > lo);
        assert_eq!(asymptotic_power(0.5, &s, &DMatrix::zeros(2, 2), 0.05), Err(Error::SingularT));
    }
}
