use glht::calculus::{delta_hat_ridge, mixture_cross_delta, mixture_omega_delta, omega_delta_for};
use glht::composite::{bootstrap_pvalue, delta_star, psd_project};
use glht::contour::{omega_hat_numeric, Contour};
use glht::glht::{fit, normal_quantile, test_all_criteria, GlhtProblem};
use glht::linalg::sym_eigenvalues_desc;
use glht::rng::substream;
use glht::selector::{default_ridge_bounds, select_ridge, xi_hat_ridge, RidgeBounds};
use glht::shrinkage::{partial_fractions, RidgeTerm, ShrinkageSpec};
use glht::sim::{generate_y, make_b, make_design, make_sigma, model_spectrum, AlternativeModel, CovModel, CovVariant};
use glht::spectral::{PriorWeights, SpectralSummary};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Eigenvalues of `ZZᵀ/n` for a `p × n` Gaussian `Z`, zero-padded when `p > n`.
fn wishart_spectrum(p: usize, n: usize, seed: u64) -> SpectralSummary {
    let mut rng = substream(seed, 0);
    let z = DMatrix::<f64>::from_fn(p, n, |_, _| StandardNormal.sample(&mut rng));
    let s = &z * z.transpose() / n as f64;
    SpectralSummary::new(sym_eigenvalues_desc(&s).into_iter().map(|v| v.max(0.0)).collect(), n).unwrap()
}

fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
    (a - b).norm() <= tol * (1.0 + b.norm())
}

fn spectra() -> impl Strategy<Value = SpectralSummary> {
    (2usize..40, 5usize..80, any::<u64>()).prop_map(|(p, n, seed)| wishart_spectrum(p, n, seed))
}

fn off_axis() -> impl Strategy<Value = Complex64> {
    (-5.0f64..10.0, 0.05f64..3.0).prop_map(|(re, im)| Complex64::new(re, im))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn transforms_commute_with_conjugation(spec in spectra(), z in off_axis(), w in off_axis()) {
        let weights = PriorWeights::new(0.3, 1.0, -0.2);
        let pairs = [
            (spec.stieltjes(z.conj()).unwrap(), spec.stieltjes(z).unwrap()),
            (spec.theta_hat(z.conj()).unwrap(), spec.theta_hat(z).unwrap()),
            (spec.delta_kernel_hat(z.conj(), w.conj()).unwrap(), spec.delta_kernel_hat(z, w).unwrap()),
            (spec.delta_kernel_hat(z.conj(), w).unwrap(), spec.delta_kernel_hat(z, w.conj()).unwrap()),
            (spec.rho_hat(z.conj(), 1).unwrap(), spec.rho_hat(z, 1).unwrap()),
            (spec.rho_hat(z.conj(), 2).unwrap(), spec.rho_hat(z, 2).unwrap()),
            (spec.h_hat(z.conj(), &weights).unwrap(), spec.h_hat(z, &weights).unwrap()),
        ];
        for (at_conj, at_z) in pairs {
            prop_assert!(close(at_conj, at_z.conj(), 1e-12), "{at_conj} vs {}", at_z.conj());
        }
    }

    #[test]
    fn stieltjes_derivative_matches_differences(spec in spectra(), z in off_axis()) {
        let h = 1e-5;
        let fd = (spec.stieltjes(z + h).unwrap() - spec.stieltjes(z - h).unwrap()) / (2.0 * h);
        let exact = spec.stieltjes_deriv(z).unwrap();
        prop_assert!((fd - exact).norm() <= 1e-5 * exact.norm().max(1e-3));
    }

    #[test]
    fn kernel_continuous_across_diagonal(spec in spectra(), ell in -10.0f64..-0.05) {
        let z = Complex64::new(ell, 0.0);
        let near = spec.delta_kernel_hat(z, z + 1e-6).unwrap();
        let diag = spec.delta_kernel_hat(z, z).unwrap();
        // scaled by the kernel, which grows like |ℓ|⁻⁴ near zero when p > n
        prop_assert!((near - diag).norm() <= 1e-4 * diag.norm().max(1.0), "{near} vs {diag}");
        let nearer = spec.delta_kernel_hat(z, z + 1e-9).unwrap();
        prop_assert!((nearer - diag).norm() <= 1e-6 * diag.norm().max(1.0), "{nearer} vs {diag}");
    }

    #[test]
    fn second_moment_function_recursion(spec in spectra(), z in off_axis()) {
        let lhs = spec.rho_hat(z, 2).unwrap();
        let rhs = spec.theta_hat(z).unwrap() * (spec.trace_mean() + z * spec.rho_hat(z, 1).unwrap());
        prop_assert!(close(lhs, rhs, 1e-12));
    }

    #[test]
    fn stieltjes_far_field(spec in spectra()) {
        let z = Complex64::new(-1e6, 0.0);
        let v = (z * spec.stieltjes(z).unwrap()).re;
        prop_assert!((v + 1.0).abs() <= 1e-4);
    }

    #[test]
    fn variance_is_bilinear(
        spec in spectra(),
        r in prop::array::uniform4(0.1f64..8.0),
        w in prop::array::uniform4(-2.0f64..2.0),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let f1 = [RidgeTerm { root: -r[0], weight: w[0] }, RidgeTerm { root: -r[1], weight: w[1] }];
        let f2 = [RidgeTerm { root: -r[2], weight: w[2] }];
        let g = [RidgeTerm { root: -r[3], weight: w[3] }];
        let combo: Vec<RidgeTerm> = f1
            .iter()
            .map(|t| RidgeTerm { weight: a * t.weight, ..*t })
            .chain(f2.iter().map(|t| RidgeTerm { weight: b * t.weight, ..*t }))
            .collect();
        let lhs = mixture_cross_delta(&spec, &combo, &g).unwrap();
        let rhs = a * mixture_cross_delta(&spec, &f1, &g).unwrap() + b * mixture_cross_delta(&spec, &f2, &g).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        let single = mixture_cross_delta(&spec, &g, &g).unwrap();
        prop_assert!((single - w[3] * w[3] * delta_hat_ridge(&spec, -r[3], -r[3]).unwrap()).abs() <= 1e-12 * (1.0 + single.abs()));
    }

    #[test]
    fn variance_positive_for_positive_shrinkers(
        p in 5usize..60,
        n in 20usize..120,
        seed in any::<u64>(),
        r in prop::array::uniform3(0.05f64..10.0),
        w in prop::array::uniform3(0.01f64..2.0),
    ) {
        let spec = wishart_spectrum(p, n, seed);
        prop_assume!(spec.lambda_min() > 0.0);
        let terms: Vec<RidgeTerm> = r.iter().zip(w).map(|(&r, w)| RidgeTerm { root: -r, weight: w }).collect();
        let (_, delta) = mixture_omega_delta(&spec, &terms).unwrap();
        prop_assert!(delta > 0.0);
        prop_assert!(omega_delta_for(&ShrinkageSpec::Identity, &spec).unwrap().1 > 0.0);
    }

    #[test]
    fn partial_fractions_reproduce_polynomial(
        roots in prop::array::uniform3(0.1f64..6.0),
        scale in 0.2f64..5.0,
        xs in prop::collection::vec(0.0f64..20.0, 20),
    ) {
        let mut r = roots;
        r.sort_by(f64::total_cmp);
        prop_assume!(r[1] - r[0] > 0.05 && r[2] - r[1] > 0.05);
        // scale · (x + r₀)(x + r₁)(x + r₂)
        let (a, b, c) = (r[0], r[1], r[2]);
        let coeffs = [scale * a * b * c, scale * (a * b + a * c + b * c), scale * (a + b + c), scale];
        let poly = ShrinkageSpec::poly_inverse(coeffs, 20.0).unwrap();
        let mix = partial_fractions(&poly).unwrap();
        for x in xs {
            let z = Complex64::new(x, 0.0);
            let (u, v) = (poly.evaluate(z).unwrap(), mix.evaluate(z).unwrap());
            prop_assert!((u - v).norm() <= 1e-10 * u.norm());
        }
    }

    #[test]
    fn selection_argmax_ignores_prior_scale(
        p in 5usize..60,
        n in 20usize..120,
        seed in any::<u64>(),
        t in prop::array::uniform3(0.0f64..1.0),
    ) {
        let spec = wishart_spectrum(p, n, seed);
        let w = PriorWeights::new(t[0] + 0.01, t[1], t[2]);
        let bounds = RidgeBounds::new(-20.0 * spec.lambda_max(), -spec.trace_mean() / 100.0, 40).unwrap();
        let base = select_ridge(&spec, &w, &bounds).unwrap();
        let grid_argmax = |sel: &glht::selector::SelectionResult| {
            let xis: Vec<f64> = sel.trace[..40].iter().map(|e| e.1).collect();
            xis.iter().enumerate().fold(0, |best, (i, v)| if *v > xis[best] { i } else { best })
        };
        for c in [0.1, 10.0] {
            let scaled = select_ridge(&spec, &w.scaled(c), &bounds).unwrap();
            prop_assert_eq!(grid_argmax(&scaled), grid_argmax(&base));
            // the refined optimum sits where the objective is flat to rounding
            let (a, b) = (scaled.ell_star().unwrap(), base.ell_star().unwrap());
            prop_assert!((a - b).abs() <= 1e-5 * b.abs(), "{a} vs {b}");
            prop_assert!((scaled.xi_star - c * base.xi_star).abs() <= 1e-12 * (c * base.xi_star).abs());
        }
        prop_assert_eq!(select_ridge(&spec, &w, &bounds).unwrap(), base);
    }

    #[test]
    fn unit_prior_objective_is_stieltjes_over_sd(spec in spectra(), ell in -10.0f64..-0.05) {
        let xi = xi_hat_ridge(&spec, ell, &PriorWeights::new(1.0, 0.0, 0.0)).unwrap();
        let m = spec.stieltjes(Complex64::new(ell, 0.0)).unwrap().re;
        let expected = m / delta_hat_ridge(&spec, ell, ell).unwrap().sqrt();
        prop_assert!((xi - expected).abs() <= 1e-12 * expected.abs());
    }

    #[test]
    fn correlation_matrix_properties(
        spec in spectra(),
        ells in prop::collection::vec(-10.0f64..-0.05, 2..6),
        t in -3.0f64..3.0,
    ) {
        let d = delta_star(&spec, &ells).unwrap();
        let psd = psd_project(&d);
        for i in 0..d.nrows() {
            prop_assert_eq!(d[(i, i)], 1.0);
            for j in 0..d.ncols() {
                prop_assert!(d[(i, j)].abs() <= 1.0 + 1e-9);
                prop_assert!(psd[(i, j)].abs() <= 1.0 + 1e-9);
            }
        }
        prop_assert!((psd_project(&psd) - &psd).amax() <= 1e-12);
        prop_assert!(bootstrap_pvalue(&psd, t, 2000, 3) >= bootstrap_pvalue(&psd, t + 0.1, 2000, 3));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn quadrature_independent_of_rectangle(
        p in 3usize..30,
        n in 10usize..60,
        seed in any::<u64>(),
        ell in -5.0f64..-0.2,
        stretch in 1.1f64..3.0,
        v0 in 0.3f64..3.0,
    ) {
        let spec = wishart_spectrum(p, n, seed);
        let f = ShrinkageSpec::ridge(ell).unwrap();
        let a = Contour::default_for(&spec, &f).with_nodes(1024);
        let b = Contour::new(ell * 0.3, stretch * spec.lambda_max() + 0.5, v0, 1024).unwrap();
        let oa = omega_hat_numeric(&spec, &f, &a).unwrap();
        let ob = omega_hat_numeric(&spec, &f, &b).unwrap();
        prop_assert!((oa - ob).abs() <= 1e-6, "{oa} vs {ob}");
    }

    #[test]
    fn q_is_orthonormal_and_outcomes_consistent(
        k in 2usize..5,
        q_frac in 0.0f64..1.0,
        extra in 3usize..40,
        p in 2usize..30,
        seed in any::<u64>(),
    ) {
        let q = 1 + ((k - 1) as f64 * q_frac) as usize;
        let big_n = k + extra;
        let mut rng = substream(seed, 1);
        let mut draw = |r, c| DMatrix::<f64>::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng));
        let (y, x, c) = (draw(p, big_n), draw(k, big_n), draw(k, q));
        let fitted = fit(&GlhtProblem::new(y, x, c).unwrap()).unwrap();
        let gram = fitted.qn.transpose() * &fitted.qn;
        prop_assert!((gram - DMatrix::identity(q, q)).amax() <= 1e-10);
        let ell = -fitted.spec.trace_mean().max(1e-3);
        for out in test_all_criteria(&fitted, &ShrinkageSpec::Ridge { ell }).unwrap() {
            prop_assert!((0.0..=1.0).contains(&out.p_value));
            for alpha in [0.01, 0.05, 0.1] {
                prop_assert_eq!(out.rejects(alpha), out.standardized > normal_quantile(1.0 - alpha));
            }
        }
    }
}

/// Standardized LR and LH statistics stay close on null data with `n = 300`.
#[test]
fn criteria_agree_to_first_order() {
    let sizes = [100, 100, 103];
    let p = 150;
    let (x, c) = make_design(&sizes).unwrap();
    let sigma = make_sigma(&CovModel::new(CovVariant::Identity), p, &mut substream(77, u64::MAX)).unwrap();
    let reps = 200;
    let mut close_count = 0;
    for rep in 0..reps {
        let mut rng = substream(77, rep);
        let b = make_b(&AlternativeModel::Null, p, sizes.len(), &mut rng);
        let y = generate_y(&b, &x, &sigma, &mut rng);
        let fitted = fit(&GlhtProblem::new(y, x.clone(), c.clone()).unwrap()).unwrap();
        let ell = select_ridge(&fitted.spec, &PriorWeights::new(1.0, 0.0, 0.0), &default_ridge_bounds(&fitted.spec).unwrap())
            .unwrap()
            .ell_star()
            .unwrap();
        let [lr, lh, _] = test_all_criteria(&fitted, &ShrinkageSpec::Ridge { ell }).unwrap();
        if (lr.standardized - lh.standardized).abs() <= 0.5 {
            close_count += 1;
        }
    }
    assert!(close_count as f64 >= 0.95 * reps as f64, "{close_count}/{reps}");
}

#[test]
fn rotated_population_keeps_its_spectrum() {
    let mut rng = substream(5, 0);
    for variant in [CovVariant::DenseSpectrum, CovVariant::Discrete] {
        for _ in 0..5 {
            let p = rng.random_range(10..60);
            let sigma = make_sigma(&CovModel::new(variant), p, &mut rng).unwrap();
            let mut target = model_spectrum(variant, p);
            let s = p as f64 / target.iter().sum::<f64>();
            target.iter_mut().for_each(|v| *v *= s);
            target.sort_by(|a, b| b.total_cmp(a));
            let eigs = sym_eigenvalues_desc(&sigma.matrix);
            for (a, b) in eigs.iter().zip(&target) {
                assert!((a - b).abs() <= 1e-8 * b.max(1.0), "{a} vs {b}");
            }
        }
    }
}
