mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use priorsense_core::design::{design_objective, SensingMatrix, Strategy};
use priorsense_core::lmmse::*;
use priorsense_core::prior::{GaussianSampler, Realization};
use rand::Rng;

#[test]
fn objective_plus_mse_equals_prior_trace() {
    let mut g = rng(31);
    for _ in 0..100 {
        let n = 2 + g.random_range(0..10);
        let m = 1 + g.random_range(0..n);
        let sx = random_psd(n, 1 + g.random_range(0..n), 0.0, &mut g);
        let sc = random_psd(n, n, 0.01, &mut g);
        let a = gaussian_matrix(m, n, &mut g) * (g.random::<f64>() * 3.0);
        let obj = design_objective(&a, &sx, &sc).unwrap();
        let mse = lmmse_mse(&a, &sx, &sc).unwrap();
        let tr = sx.trace();
        assert!((obj + mse - tr).abs() <= 1e-8 * tr, "{obj} + {mse} != {tr}");
        let explicit = objective_explicit(&a, sx.matrix(), sc.matrix());
        assert!((obj - explicit).abs() <= 1e-8 * tr.max(1.0));
    }
}

#[test]
fn mse_strictly_below_prior_for_informative_matrices() {
    let mut g = rng(8);
    let sx = random_psd(6, 6, 0.1, &mut g);
    let sc = random_psd(6, 3, 0.0, &mut g);
    let zero = lmmse_mse(&DMatrix::zeros(3, 6), &sx, &sc).unwrap();
    assert!((zero - sx.trace()).abs() <= 1e-10 * sx.trace());
    for _ in 0..50 {
        let a = gaussian_matrix(3, 6, &mut g);
        assert!((sx.matrix() * a.transpose()).norm() > 0.0);
        assert!(lmmse_mse(&a, &sx, &sc).unwrap() < sx.trace());
    }
}

/// Draws `(x, c)` and returns the squared error of the Wiener estimate and
/// the innovation `y`.
fn simulate(
    a: &SensingMatrix,
    filter: &WienerFilter,
    sx: &GaussianSampler,
    sc: &GaussianSampler,
    g: &mut impl Rng,
) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let real = Realization { x: sx.sample(g), c: sc.sample(g), model_index_x: 0, model_index_c: 0 };
    let y = measure(a, &real, g).unwrap().y;
    let xhat = filter.estimate(&y).unwrap();
    (real.x, xhat, y)
}

#[test]
fn monte_carlo_mse_matches_formula() {
    let (n, m) = (10, 5);
    let mut g = rng(123);
    let sx = random_psd(n, 4, 0.05, &mut g);
    let sc = random_psd(n, 6, 0.0, &mut g);
    let a = SensingMatrix::new(gaussian_matrix(m, n, &mut g), Strategy::Random).unwrap();
    let filter = WienerFilter::new(a.matrix(), &sx, &sc).unwrap();
    let (gx, gc) = (GaussianSampler::new(&sx), GaussianSampler::new(&sc));
    let trials = 100_000;
    let mut acc = 0.0;
    for _ in 0..trials {
        let (x, xhat, _) = simulate(&a, &filter, &gx, &gc, &mut g);
        acc += (x - xhat).norm_squared();
    }
    let mc = acc / trials as f64;
    let formula = lmmse_mse(a.matrix(), &sx, &sc).unwrap();
    assert!((mc - formula).abs() <= 0.03 * formula, "Monte-Carlo {mc} vs formula {formula}");

    let direct = lmmse_estimate(a.matrix(), &sx, &sc, &DVector::from_element(m, 1.0)).unwrap();
    assert_eq!(direct, filter.estimate(&DVector::from_element(m, 1.0)).unwrap());
}

#[test]
fn error_is_orthogonal_to_measurements() {
    let (n, m) = (8, 4);
    let mut g = rng(77);
    let sx = random_psd(n, 5, 0.0, &mut g);
    let sc = random_psd(n, 5, 0.0, &mut g);
    let a = SensingMatrix::new(gaussian_matrix(m, n, &mut g), Strategy::Random).unwrap();
    let filter = WienerFilter::new(a.matrix(), &sx, &sc).unwrap();
    let (gx, gc) = (GaussianSampler::new(&sx), GaussianSampler::new(&sc));
    let trials = 100_000;
    let mut sum = DMatrix::zeros(n, m);
    let mut sum_sq = DMatrix::zeros(n, m);
    for _ in 0..trials {
        let (x, xhat, y) = simulate(&a, &filter, &gx, &gc, &mut g);
        let prod = (x - xhat) * y.transpose();
        sum_sq += prod.component_mul(&prod);
        sum += prod;
    }
    let t = trials as f64;
    for i in 0..n {
        for j in 0..m {
            let mean = sum[(i, j)] / t;
            let var = sum_sq[(i, j)] / t - mean * mean;
            let se = (var / t).sqrt();
            assert!(mean.abs() < 5.0 * se, "entry ({i},{j}): {mean} vs se {se}");
        }
    }
}

#[test]
fn estimator_is_linear() {
    let mut g = rng(4);
    let sx = random_psd(5, 5, 0.1, &mut g);
    let sc = random_psd(5, 2, 0.0, &mut g);
    let a = gaussian_matrix(3, 5, &mut g);
    let y1 = DVector::from_fn(3, |_, _| g.random::<f64>());
    let y2 = DVector::from_fn(3, |_, _| g.random::<f64>());
    let lhs = lmmse_estimate(&a, &sx, &sc, &(&y1 * 2.0 - &y2)).unwrap();
    let rhs = lmmse_estimate(&a, &sx, &sc, &y1).unwrap() * 2.0 - lmmse_estimate(&a, &sx, &sc, &y2).unwrap();
    assert!((lhs - rhs).norm() < 1e-12);
}
