mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use priorsense_core::prior::random_rank_r_covariance;
use priorsense_core::recovery::*;
use rand::Rng;

struct Instance {
    dict: GroupDictionary,
    phi: DMatrix<f64>,
    y: DVector<f64>,
}

fn instance(g: &mut impl Rng, m: usize, max_width: usize) -> Instance {
    let n = 6;
    let r = 1 + g.random_range(0..3);
    let groups = (max_width / r).clamp(2, 4);
    let sx = 1 + g.random_range(0..groups - 1);
    let covs: Vec<_> = (0..groups)
        .map(|_| random_rank_r_covariance(n, r + g.random_range(0..=n - r), 0.5 + g.random::<f64>() * 3.0, g).unwrap())
        .collect();
    let dict = build_dictionary(&covs[..sx], &covs[sx..], r).unwrap();
    let a = gaussian_matrix(m, n, g);
    let phi = dict.sensing_dictionary(&a).unwrap();
    let y = DVector::from_fn(m, |_, _| g.random::<f64>() * 2.0 - 1.0);
    Instance { dict, phi, y }
}

/// `‖2Λⱼ^{1/2}Φⱼ'(Φβ − y)‖` for every group, in the original coordinates.
fn dual_norms(inst: &Instance, beta: &DVector<f64>) -> Vec<f64> {
    let grad = inst.phi.transpose() * (&inst.phi * beta - &inst.y) * 2.0;
    inst.dict
        .groups()
        .iter()
        .map(|grp| grp.range().zip(&grp.lambdas).map(|(k, l)| l * grad[k] * grad[k]).sum::<f64>().sqrt())
        .collect()
}

/// Stationarity in the original coordinates: for an active group,
/// `gⱼ + λΛⱼ⁻¹vⱼ/√(vⱼ'Λⱼ⁻¹vⱼ) = 0`, measured in the `Λⱼ^{1/2}` metric.
fn original_residual(inst: &Instance, beta: &DVector<f64>, lambda: f64) -> f64 {
    let grad = inst.phi.transpose() * (&inst.phi * beta - &inst.y) * 2.0;
    let scale = 2.0 * {
        let corr = inst.phi.transpose() * &inst.y;
        inst.dict
            .groups()
            .iter()
            .map(|grp| grp.range().zip(&grp.lambdas).map(|(k, l)| l * corr[k] * corr[k]).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    };
    let mut worst: f64 = 0.0;
    for grp in inst.dict.groups() {
        let quad: f64 = grp.range().zip(&grp.lambdas).map(|(k, l)| beta[k] * beta[k] / l).sum();
        let v = if quad > 0.0 {
            let norm = quad.sqrt();
            grp.range()
                .zip(&grp.lambdas)
                .map(|(k, l)| {
                    let e = grad[k] + lambda * beta[k] / (l * norm);
                    l * e * e
                })
                .sum::<f64>()
                .sqrt()
        } else {
            let d: f64 = grp.range().zip(&grp.lambdas).map(|(k, l)| l * grad[k] * grad[k]).sum::<f64>().sqrt();
            (d - lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    worst / scale.max(1.0)
}

#[test]
fn random_instances_satisfy_subgradient_conditions() {
    let mut g = rng(2024);
    for case in 0..50 {
        let m = 2 + g.random_range(0..7);
        let inst = instance(&mut g, m, 12);
        let lmax = lambda_max(&inst.y, &inst.phi, &inst.dict).unwrap();
        let lambda = lmax * (0.01 + 0.8 * g.random::<f64>());
        let sol = group_lasso(&inst.y, &inst.phi, &inst.dict, lambda, SolverOptions { max_iter: 200_000, tol: 1e-7 }).unwrap();
        assert!(sol.converged, "case {case}: residual {}", sol.residual);
        let own = optimality_residual(&inst.y, &inst.phi, &inst.dict, lambda, &sol.beta).unwrap();
        let direct = original_residual(&inst, &sol.beta, lambda);
        assert!(own <= 1e-5, "case {case}: {own}");
        assert!(direct <= 1e-5, "case {case}: {direct}");
        assert!((own - direct).abs() <= 1e-9 + 1e-6 * own, "case {case}: {own} vs {direct}");
        for w in sol.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "case {case}: objective rose {} -> {}", w[0], w[1]);
        }
        let obj = group_lasso_objective(&inst.y, &inst.phi, &inst.dict, lambda, &sol.beta);
        assert!((obj - sol.objective()).abs() <= 1e-9 * obj.max(1.0));
    }
}

#[test]
fn zero_groups_match_dual_threshold() {
    let mut g = rng(17);
    let mut zeros = 0;
    let mut active = 0;
    for case in 0..50 {
        let m = 4 + g.random_range(0..5);
        let inst = instance(&mut g, m, 12);
        let lmax = lambda_max(&inst.y, &inst.phi, &inst.dict).unwrap();
        let lambda = lmax * (0.05 + 0.9 * g.random::<f64>());
        let sol = group_lasso(&inst.y, &inst.phi, &inst.dict, lambda, SolverOptions { max_iter: 500_000, tol: 1e-9 }).unwrap();
        assert!(sol.converged, "case {case}: residual {}", sol.residual);
        for (grp, d) in inst.dict.groups().iter().zip(dual_norms(&inst, &sol.beta)) {
            let is_zero = sol.beta.rows(grp.start, grp.len()).iter().all(|&b| b == 0.0);
            if is_zero {
                zeros += 1;
                assert!(d <= lambda * (1.0 + 1e-6), "case {case}: zero group with dual {d} > λ {lambda}");
            } else {
                active += 1;
                // an active group sits exactly on the threshold
                assert!((d - lambda).abs() <= 1e-6 * lambda.max(1.0), "case {case}: active dual {d} vs λ {lambda}");
            }
        }
    }
    assert!(zeros > 0 && active > 0, "degenerate sample: {zeros} zero, {active} active");
}

#[test]
fn unpenalized_square_case_is_least_squares() {
    let mut g = rng(3);
    let mut tested = 0;
    for _ in 0..20 {
        let r = 2;
        let covs: Vec<_> = (0..3).map(|_| random_rank_r_covariance(6, 3, 1.0, &mut g).unwrap()).collect();
        let dict = build_dictionary(&covs[..1], &covs[1..], r).unwrap();
        let a = gaussian_matrix(6, 6, &mut g);
        let phi = dict.sensing_dictionary(&a).unwrap();
        let y = DVector::from_fn(6, |_, _| g.random::<f64>());
        let sv = phi.clone().svd(false, false).singular_values;
        // first-order convergence to 1e-6 in β needs a tame condition number
        if sv.max() / sv.min() > 1e3 {
            continue;
        }
        tested += 1;
        let exact = phi.clone().try_inverse().unwrap() * &y;
        let sol = group_lasso(&y, &phi, &dict, 0.0, SolverOptions { max_iter: 2_000_000, tol: 1e-12 }).unwrap();
        let err = (&sol.beta - &exact).norm();
        assert!(err <= 1e-6 * exact.norm().max(1.0), "error {err}, residual {}", sol.residual);
    }
    assert!(tested >= 5, "only {tested} well-conditioned instances");
}

#[test]
fn lambda_at_or_above_max_gives_zero() {
    let mut g = rng(11);
    for _ in 0..30 {
        let inst = instance(&mut g, 5, 12);
        let lmax = lambda_max(&inst.y, &inst.phi, &inst.dict).unwrap();
        for mult in [1.0, 1.5, 100.0] {
            let sol = group_lasso(&inst.y, &inst.phi, &inst.dict, lmax * mult, SolverOptions::default()).unwrap();
            assert!(sol.beta.iter().all(|&b| b == 0.0));
            assert!(sol.converged);
        }
    }
}

#[test]
fn noiseless_single_group_is_recovered() {
    let mut g = rng(55);
    for case in 0..20 {
        let covs: Vec<_> = (0..4).map(|_| random_rank_r_covariance(8, 4, 1.0, &mut g).unwrap()).collect();
        let dict = build_dictionary(&covs[..2], &covs[2..], 2).unwrap();
        let a = gaussian_matrix(8, 8, &mut g);
        let phi = dict.sensing_dictionary(&a).unwrap();
        let grp = &dict.groups()[case % 2];
        let mut truth = DVector::zeros(dict.width());
        for k in grp.range() {
            truth[k] = g.random::<f64>() * 2.0 - 1.0;
        }
        let y = &phi * &truth;
        let sol = group_lasso(&y, &phi, &dict, 1e-6, SolverOptions { max_iter: 2_000_000, tol: 1e-8 }).unwrap();
        let err = (&sol.beta - &truth).norm();
        assert!(err < 1e-3, "case {case}: error {err}");
        let xhat = extract_signal(&sol, &dict).unwrap();
        let x = dict.matrix() * &truth;
        assert!((xhat - x).norm() < 1e-3);
    }
}
