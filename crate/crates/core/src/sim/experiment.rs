//! Monte Carlo size and power experiments.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::composite::{composite_on_fit, CompositeConfig};
use crate::error::{Error, Result};
use crate::glht::{fit, test_on_fit, Criterion, FitArtifacts, GlhtProblem};
use crate::rng::substream;
use crate::selector::{default_ridge_bounds, select_higher_order, select_ridge};
use crate::shrinkage::ShrinkageSpec;
use crate::spectral::PriorWeights;

use super::models::{generate_y, make_b, make_design, make_sigma, AlternativeModel, CovModel, Sigma};

/// Smallest replicate count accepted by [`SimConfig::validate`].
pub const MIN_REPLICATES: usize = 100;
/// Stream index reserved for drawing the population covariance.
const SIGMA_STREAM: u64 = u64::MAX;

/// How a simulated test chooses its regularizer.
#[derive(Debug, Clone, PartialEq)]
pub enum TestMode {
    /// Ridge with `ℓ*` selected for `prior`.
    SelectedRidge { prior: PriorWeights },
    /// Ridge at a fixed `ℓ`.
    FixedRidge { ell: f64 },
    /// Best three-root mixture for `prior`.
    HigherOrder { prior: PriorWeights },
    /// `f ≡ 1`, the ZGZ statistic.
    Identity,
    /// Maximum over the selected ridges of a prior panel, bootstrap calibrated.
    Composite { panel: Vec<PriorWeights>, bootstrap_g: usize },
}

/// One test evaluated on every replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct TestDescriptor {
    pub criterion: Criterion,
    pub mode: TestMode,
}

fn prior_token(w: &PriorWeights) -> String {
    format!("{},{},{}", w.t0, w.t1, w.t2)
}

/// Parses `t0,t1,t2`.
pub fn parse_prior(s: &str) -> Result<PriorWeights> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad prior weight {t:?}"))))
        .collect::<Result<_>>()?;
    match v.as_slice() {
        [a, b, c] if v.iter().all(|x| x.is_finite()) => Ok(PriorWeights::new(*a, *b, *c)),
        _ => Err(Error::Parse(format!("prior {s:?} needs three finite weights t0,t1,t2"))),
    }
}

/// Parses a panel: `canonical` or priors separated by `/`.
pub fn parse_panel(s: &str) -> Result<Vec<PriorWeights>> {
    if s.eq_ignore_ascii_case("canonical") {
        return Ok(PriorWeights::canonical().to_vec());
    }
    s.split('/').map(parse_prior).collect()
}

fn panel_token(panel: &[PriorWeights]) -> String {
    if panel == PriorWeights::canonical() {
        "canonical".into()
    } else {
        panel.iter().map(prior_token).collect::<Vec<_>>().join("/")
    }
}

impl TestDescriptor {
    pub fn new(criterion: Criterion, mode: TestMode) -> Self {
        TestDescriptor { criterion, mode }
    }

    /// Identifier used in result files, e.g. `LR_ridge_t100`.
    pub fn id(&self) -> String {
        format!("{}_{}_{}", self.criterion, self.shrinkage_label(), self.prior_label())
            .trim_end_matches('_')
            .to_string()
    }

    pub fn shrinkage_label(&self) -> String {
        match &self.mode {
            TestMode::SelectedRidge { .. } => "ridge".into(),
            TestMode::FixedRidge { ell } => format!("ridge({ell})"),
            TestMode::HigherOrder { .. } => "higher".into(),
            TestMode::Identity => "zgz".into(),
            TestMode::Composite { .. } => "comp".into(),
        }
    }

    pub fn prior_label(&self) -> String {
        match &self.mode {
            TestMode::SelectedRidge { prior } | TestMode::HigherOrder { prior } => prior.label(),
            TestMode::Composite { panel, .. } if panel == &PriorWeights::canonical() => "canonical".into(),
            TestMode::Composite { panel, .. } => panel.iter().map(|w| w.label()).collect::<Vec<_>>().join("+"),
            _ => String::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        match &self.mode {
            TestMode::FixedRidge { ell } => {
                ShrinkageSpec::ridge(*ell)?;
            }
            TestMode::Composite { panel, bootstrap_g } => {
                CompositeConfig { panel: panel.clone(), criterion: self.criterion, bootstrap_g: *bootstrap_g, seed: 0 }
                    .validate()?;
            }
            _ => {}
        }
        Ok(())
    }
}

impl fmt::Display for TestDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.mode {
            TestMode::SelectedRidge { prior } => write!(f, "{}:ridge:{}", self.criterion, prior_token(prior)),
            TestMode::FixedRidge { ell } => write!(f, "{}:fixed:{ell}", self.criterion),
            TestMode::HigherOrder { prior } => write!(f, "{}:higher:{}", self.criterion, prior_token(prior)),
            TestMode::Identity => write!(f, "{}:zgz", self.criterion),
            TestMode::Composite { panel, bootstrap_g } => {
                write!(f, "{}:composite:{}:{bootstrap_g}", self.criterion, panel_token(panel))
            }
        }
    }
}

impl FromStr for TestDescriptor {
    type Err = Error;

    /// `CRIT:ridge:t0,t1,t2`, `CRIT:fixed:ell`, `CRIT:higher:t0,t1,t2`, `CRIT:zgz` or
    /// `CRIT:composite[:panel[:G]]`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let criterion: Criterion = parts[0].parse()?;
        let arg = |i: usize| parts.get(i).copied();
        let mode = match (parts.get(1).map(|m| m.to_ascii_lowercase()).as_deref(), parts.len()) {
            (Some("ridge"), 2) => TestMode::SelectedRidge { prior: PriorWeights::canonical()[0] },
            (Some("ridge"), 3) => TestMode::SelectedRidge { prior: parse_prior(parts[2])? },
            (Some("higher"), 2) => TestMode::HigherOrder { prior: PriorWeights::canonical()[0] },
            (Some("higher"), 3) => TestMode::HigherOrder { prior: parse_prior(parts[2])? },
            (Some("fixed"), 3) => TestMode::FixedRidge {
                ell: parts[2].parse().map_err(|_| Error::Parse(format!("bad ridge parameter in {s:?}")))?,
            },
            (Some("zgz") | Some("identity"), 2) => TestMode::Identity,
            (Some("composite"), 2..=4) => TestMode::Composite {
                panel: parse_panel(arg(2).unwrap_or("canonical"))?,
                bootstrap_g: match arg(3) {
                    Some(g) => g.parse().map_err(|_| Error::Parse(format!("bad bootstrap size in {s:?}")))?,
                    None => CompositeConfig::default().bootstrap_g,
                },
            },
            _ => return Err(Error::Parse(format!("unknown test descriptor {s:?}"))),
        };
        let d = TestDescriptor { criterion, mode };
        d.validate()?;
        Ok(d)
    }
}

/// A Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub p: usize,
    pub big_n: usize,
    pub k: usize,
    pub group_sizes: Vec<usize>,
    pub cov: CovModel,
    pub alt: AlternativeModel,
    pub tests: Vec<TestDescriptor>,
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
    pub size_adjusted: bool,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.group_sizes.len() != self.k {
            return Err(Error::Config(format!("{} group sizes given for k = {}", self.group_sizes.len(), self.k)));
        }
        if self.group_sizes.contains(&0) {
            return Err(Error::Config("group sizes must be positive".into()));
        }
        if self.group_sizes.iter().sum::<usize>() != self.big_n {
            return Err(Error::Config(format!("group sizes do not sum to N = {}", self.big_n)));
        }
        if self.k < 2 || self.big_n <= self.k {
            return Err(Error::Config("need k ≥ 2 groups and N > k".into()));
        }
        if self.p < 2 {
            return Err(Error::Config("need p ≥ 2".into()));
        }
        if self.replicates < MIN_REPLICATES {
            return Err(Error::Config(format!(
                "replicates = {} below the minimum {MIN_REPLICATES}",
                self.replicates
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha = {} outside (0, 1]", self.alpha)));
        }
        if self.tests.is_empty() {
            return Err(Error::Config("no tests requested".into()));
        }
        for t in &self.tests {
            t.validate()?;
        }
        self.cov.validate()?;
        self.alt.validate()
    }

    /// Residual degrees of freedom `N − k`.
    pub fn n(&self) -> usize {
        self.big_n - self.k
    }

    /// Signal coordinate `n^{1/4} p^{1/2} c`.
    pub fn signal(&self, c: f64) -> f64 {
        (self.n() as f64).powf(0.25) * (self.p as f64).sqrt() * c
    }

    /// Key-value echo of every field, in a fixed order.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        vec![
            ("p".into(), self.p.to_string()),
            ("N".into(), self.big_n.to_string()),
            ("k".into(), self.k.to_string()),
            ("group_sizes".into(), join(&self.group_sizes)),
            ("cov".into(), self.cov.to_string()),
            ("alt".into(), self.alt.to_string()),
            ("tests".into(), self.tests.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(";")),
            ("replicates".into(), self.replicates.to_string()),
            ("alpha".into(), self.alpha.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("size_adjusted".into(), self.size_adjusted.to_string()),
        ]
    }

    /// Rebuilds a configuration from [`SimConfig::to_kv`] pairs; unknown keys are ignored.
    pub fn from_kv(pairs: &[(String, String)]) -> Result<Self> {
        let get = |key: &str| -> Result<&str> {
            pairs
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Config(format!("missing key {key:?}")))
        };
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.trim().parse().map_err(|_| Error::Parse(format!("bad value {v:?} for {key:?}")))
        }
        let group_sizes =
            get("group_sizes")?.split(',').map(|s| num::<usize>("group_sizes", s)).collect::<Result<Vec<_>>>()?;
        let cfg = SimConfig {
            p: num("p", get("p")?)?,
            big_n: num("N", get("N")?)?,
            k: num("k", get("k")?)?,
            group_sizes,
            cov: get("cov")?.parse()?,
            alt: get("alt")?.parse()?,
            tests: get("tests")?.split(';').map(str::parse).collect::<Result<_>>()?,
            replicates: num("replicates", get("replicates")?)?,
            alpha: num("alpha", get("alpha")?)?,
            seed: num("seed", get("seed")?)?,
            size_adjusted: num("size_adjusted", get("size_adjusted")?)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Hex SHA-256 of the key-value echo, plus any extra pairs.
    pub fn digest(&self, extra: &[(String, String)]) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.to_kv().iter().chain(extra) {
            h.update(format!("{k}={v}\n").as_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One tabulated rejection rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub test_id: String,
    pub criterion: Criterion,
    pub shrinkage: String,
    pub prior: String,
    pub c: f64,
    pub signal: f64,
    pub rate: f64,
    pub se: f64,
    pub replicates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub digest: String,
    /// Key-value echo of the configuration that produced the rows.
    pub config: Vec<(String, String)>,
    pub rows: Vec<ResultRow>,
    pub elapsed_secs: f64,
}

impl SimResult {
    /// Rows for one test, in signal order.
    pub fn curve(&self, test_id: &str) -> Vec<&ResultRow> {
        self.rows.iter().filter(|r| r.test_id == test_id).collect()
    }

    pub fn rate(&self, test_id: &str, c: f64) -> Option<f64> {
        self.rows.iter().find(|r| r.test_id == test_id && r.c == c).map(|r| r.rate)
    }
}

/// Per-replicate output of one test: the statistic used for size adjustment
/// (`T̂` or `T̂_max`) and the p-value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub stat: f64,
    pub p_value: f64,
}

fn run_descriptor(fit: &FitArtifacts, t: &TestDescriptor, boot_seed: u64) -> Result<Score> {
    let f = match &t.mode {
        TestMode::SelectedRidge { prior } => {
            let b = default_ridge_bounds(&fit.spec)?;
            select_ridge(&fit.spec, prior, &b)?.f_star
        }
        TestMode::HigherOrder { prior } => {
            let b = default_ridge_bounds(&fit.spec)?;
            select_higher_order(&fit.spec, prior, &b)?.f_star
        }
        TestMode::FixedRidge { ell } => ShrinkageSpec::Ridge { ell: *ell },
        TestMode::Identity => ShrinkageSpec::Identity,
        TestMode::Composite { panel, bootstrap_g } => {
            let cfg = CompositeConfig {
                panel: panel.clone(),
                criterion: t.criterion,
                bootstrap_g: *bootstrap_g,
                seed: boot_seed,
            };
            let out = composite_on_fit(fit, &cfg)?;
            return Ok(Score { stat: out.t_max, p_value: out.p_value });
        }
    };
    let out = test_on_fit(fit, &f, t.criterion)?;
    Ok(Score { stat: out.standardized, p_value: out.p_value })
}

/// Shared per-experiment state: design and population covariance.
struct Setup {
    x: nalgebra::DMatrix<f64>,
    c: nalgebra::DMatrix<f64>,
    sigma: Sigma,
}

fn setup(cfg: &SimConfig) -> Result<Setup> {
    cfg.validate()?;
    let (x, c) = make_design(&cfg.group_sizes)?;
    let sigma = make_sigma(&cfg.cov, cfg.p, &mut substream(cfg.seed, SIGMA_STREAM))?;
    Ok(Setup { x, c, sigma })
}

fn scores_with(cfg: &SimConfig, st: &Setup, alt: &AlternativeModel) -> Result<Vec<Vec<Score>>> {
    (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            // the same stream at every c, so curves share their noise across the grid
            let mut rng = substream(cfg.seed, r as u64);
            let b = make_b(alt, cfg.p, cfg.k, &mut rng);
            let y = generate_y(&b, &st.x, &st.sigma, &mut rng);
            let boot_seed: u64 = rng.random();
            let fit = fit(&GlhtProblem { y, x: st.x.clone(), c: st.c.clone() })?;
            cfg.tests.iter().map(|t| run_descriptor(&fit, t, boot_seed)).collect()
        })
        .collect()
}

/// Scores of every test on every replicate, `[replicate][test]`, under `cfg.alt` at scale `c`.
pub fn simulate_scores(cfg: &SimConfig, c: f64) -> Result<Vec<Vec<Score>>> {
    let st = setup(cfg)?;
    scores_with(cfg, &st, &cfg.alt.with_c(c))
}

fn rejects(s: &Score, alpha: f64) -> bool {
    alpha >= 1.0 || s.p_value < alpha
}

/// Cutoff leaving a fraction `alpha` of `stats` strictly above it.
pub fn upper_cutoff(stats: &[f64], alpha: f64) -> f64 {
    let mut v = stats.to_vec();
    v.sort_by(f64::total_cmp);
    let r = v.len();
    // Exceedance count `floor(alpha r)`, guarded against products like 0.95 · 100 > 95.
    let above = ((alpha * r as f64) * (1.0 + 1e-12)).floor() as usize;
    if above >= r {
        f64::NEG_INFINITY
    } else {
        v[r - above - 1]
    }
}

fn row(cfg: &SimConfig, t: &TestDescriptor, c: f64, hits: usize) -> ResultRow {
    let rate = hits as f64 / cfg.replicates as f64;
    ResultRow {
        test_id: t.id(),
        criterion: t.criterion,
        shrinkage: t.shrinkage_label(),
        prior: t.prior_label(),
        c,
        signal: cfg.signal(c),
        rate,
        se: (rate * (1.0 - rate) / cfg.replicates as f64).sqrt(),
        replicates: cfg.replicates,
        seed: cfg.seed,
    }
}

/// Null rejection rates at level `alpha` from the asymptotic p-values.
pub fn empirical_size(cfg: &SimConfig) -> Result<SimResult> {
    if cfg.alt != AlternativeModel::Null {
        return Err(Error::Config("empirical size requires the null alternative".into()));
    }
    let start = Instant::now();
    let st = setup(cfg)?;
    let scores = scores_with(cfg, &st, &cfg.alt)?;
    let rows = cfg
        .tests
        .iter()
        .enumerate()
        .map(|(j, t)| row(cfg, t, 0.0, scores.iter().filter(|s| rejects(&s[j], cfg.alpha)).count()))
        .collect();
    Ok(SimResult { digest: cfg.digest(&[]), config: cfg.to_kv(), rows, elapsed_secs: start.elapsed().as_secs_f64() })
}

fn grid_kv(c_grid: &[f64]) -> (String, String) {
    ("c_grid".into(), c_grid.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(","))
}

/// Rejection rates along `c_grid`. With `size_adjusted`, each test rejects above the
/// empirical `1 − alpha` quantile of its statistic at `c = 0`.
pub fn power_curve(cfg: &SimConfig, c_grid: &[f64]) -> Result<SimResult> {
    if c_grid.first() != Some(&0.0) {
        return Err(Error::Config("signal grid must start at 0".into()));
    }
    if c_grid.windows(2).any(|w| !(w[1] > w[0])) || c_grid.iter().any(|c| !c.is_finite()) {
        return Err(Error::Config("signal grid must be finite and strictly increasing".into()));
    }
    if cfg.alt == AlternativeModel::Null {
        return Err(Error::Config("power curves need a dense or sparse alternative".into()));
    }
    let start = Instant::now();
    let st = setup(cfg)?;
    let per_c: Vec<Vec<Vec<Score>>> =
        c_grid.iter().map(|&c| scores_with(cfg, &st, &cfg.alt.with_c(c))).collect::<Result<_>>()?;
    let cutoffs: Vec<f64> = (0..cfg.tests.len())
        .map(|j| upper_cutoff(&per_c[0].iter().map(|s| s[j].stat).collect::<Vec<_>>(), cfg.alpha))
        .collect();
    let mut rows = Vec::new();
    for (j, t) in cfg.tests.iter().enumerate() {
        for (ci, &c) in c_grid.iter().enumerate() {
            let hits = per_c[ci]
                .iter()
                .filter(|s| if cfg.size_adjusted { s[j].stat > cutoffs[j] } else { rejects(&s[j], cfg.alpha) })
                .count();
            rows.push(row(cfg, t, c, hits));
        }
    }
    let extra = [grid_kv(c_grid)];
    let mut config = cfg.to_kv();
    config.extend(extra.iter().cloned());
    Ok(SimResult { digest: cfg.digest(&extra), config, rows, elapsed_secs: start.elapsed().as_secs_f64() })
}
