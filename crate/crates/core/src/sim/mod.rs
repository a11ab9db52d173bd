//! Synthetic data and Monte Carlo size and power studies.

pub mod experiment;
pub mod models;
pub mod persist;

pub use experiment::{
    empirical_size, parse_panel, parse_prior, power_curve, simulate_scores, upper_cutoff, ResultRow, Score,
    SimConfig, SimResult, TestDescriptor, TestMode, MIN_REPLICATES,
};
pub use models::{
    generate_y, haar_orthogonal, make_b, make_design, make_sigma, model_spectrum, AlternativeModel, CovModel, CovVariant, Sigma,
};
pub use persist::{parse_kv, persist, read_result, sidecar_path, write_plot_data, CSV_HEADER};
