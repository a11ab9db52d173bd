//! Covariance models, alternatives and MANOVA designs for synthetic data.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Population covariance structure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovVariant {
    Identity,
    /// Haar-rotated `diag((0.1 + j)⁶ + 0.05 p⁶)`, `j = 1..p`.
    DenseSpectrum,
    /// `ρ^{|i−j|}`.
    Toeplitz { rho: f64 },
    /// Haar-rotated spectrum with 40% ones, 40% threes and the rest tens.
    Discrete,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovModel {
    pub variant: CovVariant,
    /// Rescale so that `tr Σ = p`.
    pub normalize_trace: bool,
}

impl CovModel {
    pub const fn new(variant: CovVariant) -> Self {
        CovModel { variant, normalize_trace: true }
    }

    pub fn validate(&self) -> Result<()> {
        if let CovVariant::Toeplitz { rho } = self.variant {
            if !(rho > 0.0 && rho < 1.0) {
                return Err(Error::Config(format!("Toeplitz rho {rho} outside (0, 1)")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for CovModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.variant {
            CovVariant::Identity => write!(f, "identity")?,
            CovVariant::DenseSpectrum => write!(f, "dense")?,
            CovVariant::Toeplitz { rho } => write!(f, "toeplitz:{rho}")?,
            CovVariant::Discrete => write!(f, "discrete")?,
        }
        if !self.normalize_trace {
            write!(f, ":raw")?;
        }
        Ok(())
    }
}

impl FromStr for CovModel {
    type Err = Error;

    /// Accepts `identity`, `dense`, `toeplitz` (ρ = 0.5), `toeplitz:<rho>` and `discrete`,
    /// optionally suffixed with `:raw` to skip trace normalization.
    fn from_str(s: &str) -> Result<Self> {
        let (body, normalize_trace) = match s.strip_suffix(":raw") {
            Some(b) => (b, false),
            None => (s, true),
        };
        let variant = match body.to_ascii_lowercase().as_str() {
            "identity" | "id" => CovVariant::Identity,
            "dense" => CovVariant::DenseSpectrum,
            "toeplitz" | "toep" => CovVariant::Toeplitz { rho: 0.5 },
            "discrete" | "dis" => CovVariant::Discrete,
            other => match other.strip_prefix("toeplitz:") {
                Some(r) => CovVariant::Toeplitz {
                    rho: r.parse().map_err(|_| Error::Parse(format!("bad Toeplitz rho {r:?}")))?,
                },
                None => return Err(Error::Parse(format!("unknown covariance model {s:?}"))),
            },
        };
        let m = CovModel { variant, normalize_trace };
        m.validate()?;
        Ok(m)
    }
}

/// A covariance matrix together with a factor `L`, `LLᵀ = Σ`, used to draw `LZ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sigma {
    pub matrix: DMatrix<f64>,
    /// `None` stands for the identity, which needs no multiplication.
    pub factor: Option<DMatrix<f64>>,
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the signs of
/// `R`'s diagonal folded into `Q`.
pub fn haar_orthogonal<R: Rng + ?Sized>(p: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(p, p, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Unnormalized spectrum of the rotated models.
pub fn model_spectrum(variant: CovVariant, p: usize) -> Vec<f64> {
    match variant {
        CovVariant::DenseSpectrum => {
            let base = 0.05 * (p as f64).powi(6);
            (1..=p).map(|j| (0.1 + j as f64).powi(6) + base).collect()
        }
        CovVariant::Discrete => {
            let ones = (0.4 * p as f64).floor() as usize;
            let threes = (0.4 * p as f64).floor() as usize;
            let mut v = vec![1.0; ones];
            v.extend(std::iter::repeat_n(3.0, threes));
            v.extend(std::iter::repeat_n(10.0, p - ones - threes));
            v
        }
        CovVariant::Identity => vec![1.0; p],
        CovVariant::Toeplitz { .. } => vec![],
    }
}

/// Builds `Σ` for `model`; rotated models draw their Haar rotation from `rng`.
pub fn make_sigma<R: Rng + ?Sized>(model: &CovModel, p: usize, rng: &mut R) -> Result<Sigma> {
    model.validate()?;
    if p < 2 {
        return Err(Error::Config(format!("dimension p = {p} must be at least 2")));
    }
    match model.variant {
        CovVariant::Identity => Ok(Sigma { matrix: DMatrix::identity(p, p), factor: None }),
        CovVariant::Toeplitz { rho } => {
            let mut m = DMatrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()));
            if model.normalize_trace {
                m *= p as f64 / m.trace();
            }
            let l = m.clone().cholesky().ok_or_else(|| Error::Config("Toeplitz matrix not positive definite".into()))?.l();
            Ok(Sigma { matrix: m, factor: Some(l) })
        }
        CovVariant::DenseSpectrum | CovVariant::Discrete => {
            let mut lam = model_spectrum(model.variant, p);
            if model.normalize_trace {
                let s = p as f64 / lam.iter().sum::<f64>();
                lam.iter_mut().for_each(|v| *v *= s);
            }
            let rot = haar_orthogonal(p, rng);
            let mut factor = rot.clone();
            for (j, l) in lam.iter().enumerate() {
                factor.column_mut(j).scale_mut(l.sqrt());
            }
            let matrix = &factor * factor.transpose();
            let matrix = (&matrix + matrix.transpose()) * 0.5;
            Ok(Sigma { matrix, factor: Some(factor) })
        }
    }
}

/// Mean structure under the alternative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlternativeModel {
    Null,
    /// Entries of `B` i.i.d. `N(0, c²)`.
    DenseB { c: f64 },
    /// `B = c·R·V` with `round(density·p)` diagonal entries of `R` equal to `magnitude`.
    SparseB { c: f64, density: f64, magnitude: f64 },
}

impl AlternativeModel {
    pub fn sparse(c: f64) -> Self {
        AlternativeModel::SparseB { c, density: 0.1, magnitude: 10f64.sqrt() }
    }

    pub fn c(&self) -> f64 {
        match *self {
            AlternativeModel::Null => 0.0,
            AlternativeModel::DenseB { c } | AlternativeModel::SparseB { c, .. } => c,
        }
    }

    /// The same model at signal scale `c`; `Null` stays `Null`.
    pub fn with_c(&self, c: f64) -> Self {
        match *self {
            AlternativeModel::Null => AlternativeModel::Null,
            AlternativeModel::DenseB { .. } => AlternativeModel::DenseB { c },
            AlternativeModel::SparseB { density, magnitude, .. } => AlternativeModel::SparseB { c, density, magnitude },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.c();
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::Config(format!("signal scale c = {c} must be nonnegative")));
        }
        if let AlternativeModel::SparseB { density, magnitude, .. } = *self {
            if !(density > 0.0 && density <= 1.0) {
                return Err(Error::Config(format!("sparse density {density} outside (0, 1]")));
            }
            if !magnitude.is_finite() {
                return Err(Error::Config("sparse magnitude must be finite".into()));
            }
        }
        Ok(())
    }
}

impl fmt::Display for AlternativeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            AlternativeModel::Null => write!(f, "null"),
            AlternativeModel::DenseB { c } => write!(f, "dense:{c}"),
            AlternativeModel::SparseB { c, density, magnitude } => write!(f, "sparse:{c}:{density}:{magnitude}"),
        }
    }
}

impl FromStr for AlternativeModel {
    type Err = Error;

    /// Accepts `null`, `dense[:c]` and `sparse[:c[:density[:magnitude]]]`; `c` defaults to 0.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |i: usize, default: f64| -> Result<f64> {
            match parts.get(i) {
                Some(v) => v.parse().map_err(|_| Error::Parse(format!("bad number {v:?} in {s:?}"))),
                None => Ok(default),
            }
        };
        let alt = match parts[0].to_ascii_lowercase().as_str() {
            "null" if parts.len() == 1 => AlternativeModel::Null,
            "dense" if parts.len() <= 2 => AlternativeModel::DenseB { c: num(1, 0.0)? },
            "sparse" if parts.len() <= 4 => AlternativeModel::SparseB {
                c: num(1, 0.0)?,
                density: num(2, 0.1)?,
                magnitude: num(3, 10f64.sqrt())?,
            },
            _ => return Err(Error::Parse(format!("unknown alternative {s:?}"))),
        };
        alt.validate()?;
        Ok(alt)
    }
}

/// Draws the p×k coefficient matrix `B`.
pub fn make_b<R: Rng + ?Sized>(alt: &AlternativeModel, p: usize, k: usize, rng: &mut R) -> DMatrix<f64> {
    match *alt {
        AlternativeModel::Null => DMatrix::zeros(p, k),
        AlternativeModel::DenseB { c } => {
            let mut b = DMatrix::from_fn(p, k, |_, _| StandardNormal.sample(rng));
            b *= c;
            b
        }
        AlternativeModel::SparseB { c, density, magnitude } => {
            let count = ((density * p as f64).round() as usize).min(p);
            let rows = sample(rng, p, count);
            let v = DMatrix::from_fn(p, k, |_, _| StandardNormal.sample(rng));
            let mut b = DMatrix::zeros(p, k);
            for i in rows.iter() {
                b.set_row(i, &(v.row(i) * (c * magnitude)));
            }
            b
        }
    }
}

/// Group-indicator design `X` (k×N) and successive contrasts `C` (k×(k−1)).
pub fn make_design(group_sizes: &[usize]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let k = group_sizes.len();
    if k < 2 || group_sizes.contains(&0) {
        return Err(Error::Config("need at least two groups, all nonempty".into()));
    }
    let n: usize = group_sizes.iter().sum();
    let mut x = DMatrix::zeros(k, n);
    let mut col = 0;
    for (g, &s) in group_sizes.iter().enumerate() {
        for _ in 0..s {
            x[(g, col)] = 1.0;
            col += 1;
        }
    }
    let c = DMatrix::from_fn(k, k - 1, |i, j| {
        if i == j {
            1.0
        } else if i == j + 1 {
            -1.0
        } else {
            0.0
        }
    });
    Ok((x, c))
}

/// `Y = BX + LZ` with fresh standard normal `Z`.
pub fn generate_y<R: Rng + ?Sized>(b: &DMatrix<f64>, x: &DMatrix<f64>, sigma: &Sigma, rng: &mut R) -> DMatrix<f64> {
    let p = b.nrows();
    let n = x.ncols();
    let z = DMatrix::from_fn(p, n, |_, _| StandardNormal.sample(rng));
    let noise = match &sigma.factor {
        None => z,
        Some(l) => l * z,
    };
    b * x + noise
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eigenvalues_desc;
    use crate::rng::substream;
    use approx::assert_relative_eq;

    #[test]
    fn sigma_examples() {
        let mut rng = substream(1, 0);
        let id = make_sigma(&CovModel::new(CovVariant::Identity), 4, &mut rng).unwrap();
        assert_eq!(id.matrix, DMatrix::identity(4, 4));
        let t = make_sigma(&CovModel::new(CovVariant::Toeplitz { rho: 0.5 }), 3, &mut rng).unwrap();
        let expect = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.25, 0.5, 1.0, 0.5, 0.25, 0.5, 1.0]);
        assert_relative_eq!(t.matrix, expect, epsilon = 1e-14);
        let l = t.factor.unwrap();
        assert_relative_eq!(&l * l.transpose(), expect, epsilon = 1e-14);

        assert_eq!(model_spectrum(CovVariant::Discrete, 10), vec![1.0, 1.0, 1.0, 1.0, 3.0, 3.0, 3.0, 3.0, 10.0, 10.0]);
        let d = make_sigma(&CovModel::new(CovVariant::Discrete), 10, &mut rng).unwrap();
        assert_relative_eq!(d.matrix.trace(), 10.0, epsilon = 1e-10);
        let eigs = sym_eigenvalues_desc(&d.matrix);
        let mut expect: Vec<f64> = model_spectrum(CovVariant::Discrete, 10).iter().map(|v| v * 10.0 / 36.0).collect();
        expect.reverse();
        for (a, b) in eigs.iter().zip(&expect) {
            assert_relative_eq!(a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn dense_spectrum_recovered() {
        let mut rng = substream(2, 0);
        let p = 30;
        let s = make_sigma(&CovModel::new(CovVariant::DenseSpectrum), p, &mut rng).unwrap();
        let raw = model_spectrum(CovVariant::DenseSpectrum, p);
        let total: f64 = raw.iter().sum();
        let eigs = sym_eigenvalues_desc(&s.matrix);
        for (a, b) in eigs.iter().zip(raw.iter().rev()) {
            assert!((a - b * p as f64 / total).abs() <= 1e-8 * a.max(1.0));
        }
    }

    #[test]
    fn haar_is_orthogonal() {
        let q = haar_orthogonal(8, &mut substream(3, 0));
        assert_relative_eq!(q.transpose() * &q, DMatrix::identity(8, 8), epsilon = 1e-12);
    }

    #[test]
    fn design_examples() {
        let (x, c) = make_design(&[1, 1]).unwrap();
        assert_eq!(x, DMatrix::identity(2, 2));
        assert_eq!(c, DMatrix::from_row_slice(2, 1, &[1.0, -1.0]));
        let (_, c3) = make_design(&[3, 4, 5]).unwrap();
        assert_eq!(c3.transpose() * DMatrix::from_element(3, 1, 1.0), DMatrix::zeros(2, 1));
        assert_eq!(c3.rank(1e-12), 2);
        assert!(make_design(&[3, 0]).is_err());
    }

    #[test]
    fn b_examples() {
        let mut rng = substream(4, 0);
        assert_eq!(make_b(&AlternativeModel::Null, 5, 3, &mut rng), DMatrix::zeros(5, 3));
        assert_eq!(make_b(&AlternativeModel::DenseB { c: 0.0 }, 5, 3, &mut rng), DMatrix::zeros(5, 3));
        let b = make_b(&AlternativeModel::sparse(1.0), 100, 3, &mut rng);
        let nonzero = (0..100).filter(|&i| b.row(i).iter().any(|v| *v != 0.0)).count();
        assert_eq!(nonzero, 10);
    }

    #[test]
    fn y_examples() {
        let (x, _) = make_design(&[2, 3]).unwrap();
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let zero = Sigma { matrix: DMatrix::zeros(2, 2), factor: Some(DMatrix::zeros(2, 2)) };
        assert_eq!(generate_y(&b, &x, &zero, &mut substream(5, 0)), &b * &x);
        let id = Sigma { matrix: DMatrix::identity(2, 2), factor: None };
        assert_eq!(generate_y(&b, &x, &id, &mut substream(5, 1)), generate_y(&b, &x, &id, &mut substream(5, 1)));
    }

    #[test]
    fn parse_round_trip() {
        for s in ["identity", "dense", "toeplitz:0.5", "discrete", "discrete:raw"] {
            let m: CovModel = s.parse().unwrap();
            assert_eq!(m.to_string().parse::<CovModel>().unwrap(), m);
        }
        for s in ["null", "dense:0.2", "sparse:0.1:0.1:3"] {
            let a: AlternativeModel = s.parse().unwrap();
            assert_eq!(a.to_string().parse::<AlternativeModel>().unwrap(), a);
        }
        assert!("toeplitz:2".parse::<CovModel>().is_err());
        assert!("dense:-1".parse::<AlternativeModel>().is_err());
    }
}
