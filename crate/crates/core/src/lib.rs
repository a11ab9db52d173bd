//! # glht
//!
//! Regularized general linear hypothesis tests for high-dimensional multivariate
//! linear models `Y = BX + E`, testing `H₀: BC = 0` when the response dimension `p`
//! is comparable to or larger than the sample size.
//!
//! The classical LR, Lawley–Hotelling and Bartlett–Nanda–Pillai statistics use
//! `Σ̂⁻¹`, which breaks down when `p/n` is not small. This crate replaces it by a
//! spectral shrinkage `f(Σ̂)`, usually the ridge `(Σ̂ − ℓI)⁻¹`, and standardizes the
//! result with random-matrix centering and variance estimates.
//!
//! * [`spectral`]: Stieltjes and companion transforms of the sample spectrum.
//! * [`shrinkage`], [`calculus`], [`contour`]: regularizers and their centering and
//!   variance, in closed form for ridge-type `f` and by contour quadrature otherwise.
//! * [`glht`]: model fitting, `M(f)`, the three criteria and their p-values.
//! * [`selector`]: data-driven choice of `ℓ` (or of a three-root mixture) under a
//!   prior on the alternative.
//! * [`composite`]: maximum over several priors, calibrated by a parametric bootstrap.
//! * [`sim`]: synthetic models and Monte Carlo size and power studies.
//!
//! ## Example
//!
//! ```
//! use glht::prelude::*;
//! use glht::rng::substream;
//! use glht::sim::{generate_y, make_b, make_design, make_sigma, AlternativeModel, CovModel, CovVariant};
//!
//! // three groups, p = 60 responses, data drawn under the null
//! let (x, c) = make_design(&[20, 25, 30]).unwrap();
//! let mut rng = substream(7, 0);
//! let sigma = make_sigma(&CovModel::new(CovVariant::Identity), 60, &mut rng).unwrap();
//! let b = make_b(&AlternativeModel::Null, 60, 3, &mut rng);
//! let y = generate_y(&b, &x, &sigma, &mut rng);
//!
//! let fitted = fit(&GlhtProblem::new(y, x, c).unwrap()).unwrap();
//! let bounds = default_ridge_bounds(&fitted.spec).unwrap();
//! let sel = select_ridge(&fitted.spec, &PriorWeights::new(1.0, 0.0, 0.0), &bounds).unwrap();
//! let out = test_on_fit(&fitted, &sel.f_star, Criterion::LR).unwrap();
//! assert!(sel.ell_star().unwrap() < 0.0);
//! assert!((0.0..=1.0).contains(&out.p_value));
//! ```

pub mod calculus;
pub mod composite;
pub mod contour;
pub mod error;
pub mod glht;
pub mod linalg;
pub mod rng;
pub mod selector;
pub mod shrinkage;
pub mod sim;
pub mod spectral;

pub use error::{Error, Result};

/// The types and entry points used by most callers.
pub mod prelude {
    pub use crate::composite::{composite_on_fit, run_composite, CompositeConfig, CompositeOutcome};
    pub use crate::error::{Error, Result};
    pub use crate::glht::{fit, run_test, test_all_criteria, test_on_fit, Criterion, FitArtifacts, GlhtProblem, TestOutcome};
    pub use crate::selector::{default_ridge_bounds, select_higher_order, select_ridge, RidgeBounds, SelectionResult};
    pub use crate::shrinkage::{RidgeTerm, ShrinkageSpec};
    pub use crate::spectral::{PriorWeights, SpectralSummary};
}
