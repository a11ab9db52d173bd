//! Composite test over a panel of priors: the maximum of the selected-ridge
//! statistics, calibrated by a parametric bootstrap from their estimated correlation.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::glht::{fit, test_on_fit, Criterion, FitArtifacts, GlhtProblem};
use crate::linalg::{sym_apply, sym_sqrt};
use crate::rng::{substream, DEFAULT_SEED};
use crate::selector::{default_ridge_bounds, select_ridge, MIN_VARIANCE};
use crate::shrinkage::ShrinkageSpec;
use crate::spectral::{PriorWeights, SpectralSummary, COINCIDENT_TOL};

/// Smallest bootstrap size accepted by [`CompositeConfig::validate`].
pub const MIN_BOOTSTRAP: usize = 1000;
/// Bootstrap draws per random stream.
const BLOCK: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeConfig {
    pub panel: Vec<PriorWeights>,
    pub criterion: Criterion,
    pub bootstrap_g: usize,
    pub seed: u64,
}

impl Default for CompositeConfig {
    fn default() -> Self {
        CompositeConfig {
            panel: PriorWeights::canonical().to_vec(),
            criterion: Criterion::LR,
            bootstrap_g: 10_000,
            seed: DEFAULT_SEED,
        }
    }
}

impl CompositeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.panel.is_empty() {
            return Err(Error::Config("prior panel is empty".into()));
        }
        if self.bootstrap_g < MIN_BOOTSTRAP {
            return Err(Error::Config(format!(
                "bootstrap size {} below the minimum {MIN_BOOTSTRAP}",
                self.bootstrap_g
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeOutcome {
    /// `(prior, ℓ*, standardized statistic)` for each panel member.
    pub per_prior: Vec<(PriorWeights, f64, f64)>,
    pub t_max: f64,
    pub delta_star: DMatrix<f64>,
    pub delta_star_psd: DMatrix<f64>,
    pub p_value: f64,
}

/// Correlation matrix of the standardized ridge statistics at `ells`, unit diagonal.
pub fn delta_star(spec: &SpectralSummary, ells: &[f64]) -> Result<DMatrix<f64>> {
    let pts = ells
        .iter()
        .map(|&l| {
            if !(l.is_finite() && l < 0.0) {
                return Err(Error::InvalidShrinkage(format!("ridge parameter {l} must be negative")));
            }
            spec.at(Complex64::new(l, 0.0))
        })
        .collect::<Result<Vec<_>>>()?;
    let var: Vec<f64> = pts.iter().map(|p| 2.0 * p.delta_diag().re).collect();
    if let Some(&v) = var.iter().find(|&&v| !(v > MIN_VARIANCE)) {
        return Err(Error::NonPositiveVariance(v));
    }
    let m = ells.len();
    let mut out = DMatrix::identity(m, m);
    for i in 0..m {
        for j in i + 1..m {
            let r = if (ells[i] - ells[j]).abs() < COINCIDENT_TOL {
                1.0
            } else {
                2.0 * spec.delta_pair(&pts[i], &pts[j]).re / (var[i] * var[j]).sqrt()
            };
            out[(i, j)] = r;
            out[(j, i)] = r;
        }
    }
    Ok(out)
}

/// Nearest positive semi-definite matrix: negative eigenvalues set to zero.
pub fn psd_project(a: &DMatrix<f64>) -> DMatrix<f64> {
    sym_apply(a, |x| x.max(0.0))
}

/// Fraction of `g` draws of `max_i Zᵢ`, `Z ~ N(0, delta_psd)`, that exceed `t_max`.
pub fn bootstrap_pvalue(delta_psd: &DMatrix<f64>, t_max: f64, g: usize, seed: u64) -> f64 {
    let root = sym_sqrt(delta_psd);
    let m = root.nrows();
    let blocks = g.div_ceil(BLOCK);
    let exceed: usize = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(seed, b as u64);
            let count = BLOCK.min(g - b * BLOCK);
            let mut hits = 0;
            let mut z = DVector::zeros(m);
            for _ in 0..count {
                for v in z.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                }
                let x = &root * &z;
                if x.max() > t_max {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    exceed as f64 / g as f64
}

/// Composite test on an existing fit.
pub fn composite_on_fit(fit: &FitArtifacts, cfg: &CompositeConfig) -> Result<CompositeOutcome> {
    cfg.validate()?;
    let bounds = default_ridge_bounds(&fit.spec)?;
    let mut per_prior = Vec::with_capacity(cfg.panel.len());
    for w in &cfg.panel {
        let sel = select_ridge(&fit.spec, w, &bounds)?;
        let ell = sel.ell_star().expect("ridge selection returns a ridge");
        let out = test_on_fit(fit, &ShrinkageSpec::Ridge { ell }, cfg.criterion)?;
        per_prior.push((*w, ell, out.standardized));
    }
    let t_max = per_prior.iter().map(|e| e.2).fold(f64::NEG_INFINITY, f64::max);
    let ells: Vec<f64> = per_prior.iter().map(|e| e.1).collect();
    let delta_star = delta_star(&fit.spec, &ells)?;
    let delta_star_psd = psd_project(&delta_star);
    let p_value = bootstrap_pvalue(&delta_star_psd, t_max, cfg.bootstrap_g, cfg.seed);
    Ok(CompositeOutcome { per_prior, t_max, delta_star, delta_star_psd, p_value })
}

/// Fits the model and runs the composite test.
pub fn run_composite(problem: &GlhtProblem, cfg: &CompositeConfig) -> Result<CompositeOutcome> {
    cfg.validate()?;
    composite_on_fit(&fit(problem)?, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glht::normal_sf;
    use crate::linalg::sym_eigenvalues_desc;
    use approx::assert_relative_eq;

    fn one_two() -> SpectralSummary {
        SpectralSummary::new(vec![1.0, 2.0], 4).unwrap()
    }

    #[test]
    fn delta_star_examples() {
        let s = one_two();
        assert_eq!(delta_star(&s, &[-1.0]).unwrap(), DMatrix::identity(1, 1));
        let dup = delta_star(&s, &[-1.5, -1.5]).unwrap();
        assert_eq!(dup, DMatrix::from_element(2, 2, 1.0));
        let d = delta_star(&s, &[-1.0, -2.0]).unwrap();
        assert_relative_eq!(d[(0, 1)], 0.997_090_902_927_146_67, max_relative = 1e-12);
        assert_eq!(d[(0, 1)], d[(1, 0)]);
    }

    #[test]
    fn psd_examples() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert_relative_eq!(psd_project(&id), id, epsilon = 1e-12);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let p = psd_project(&a);
        assert_relative_eq!(p, DMatrix::from_element(2, 2, 1.5), epsilon = 1e-12);
        assert_relative_eq!(psd_project(&p), p, epsilon = 1e-12);
        assert!(sym_eigenvalues_desc(&p).iter().all(|&e| e >= -1e-10));
    }

    #[test]
    fn bootstrap_extremes_and_tail() {
        let one = DMatrix::identity(1, 1);
        assert_eq!(bootstrap_pvalue(&one, 1e10, 2000, 1), 0.0);
        assert_eq!(bootstrap_pvalue(&one, -1e10, 2000, 1), 1.0);
        let p = bootstrap_pvalue(&one, 1.645, 1_000_000, 3);
        assert!((p - 0.05).abs() <= 0.001, "{p}");
        assert!((p - normal_sf(1.645)).abs() <= 0.001);
        let corr = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 1.0]);
        assert_eq!(bootstrap_pvalue(&corr, 1.0, 5000, 9), bootstrap_pvalue(&corr, 1.0, 5000, 9));
        assert!(bootstrap_pvalue(&corr, 1.0, 5000, 9) >= bootstrap_pvalue(&corr, 1.2, 5000, 9));
    }

    #[test]
    fn config_validation() {
        assert!(CompositeConfig::default().validate().is_ok());
        let bad = CompositeConfig { bootstrap_g: 999, ..CompositeConfig::default() };
        assert!(bad.validate().is_err());
        let empty = CompositeConfig { panel: vec![], ..CompositeConfig::default() };
        assert!(empty.validate().is_err());
    }
}
