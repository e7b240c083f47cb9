//! Comparison sensing matrices. Every baseline is rescaled to spend the full
//! energy budget, `‖A‖_F² = α²`, so strategies are compared at equal energy.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::design::{design_with_label, DesignProblem, DesignState, SensingMatrix, Strategy};
use crate::error::{invalid, Error, Result};
use crate::linalg::{self, SortedEigen};
use crate::prior::CovarianceMatrix;

/// Gaussian projections with iid `N(0, 1/m)` entries, rescaled to the budget.
pub fn random_design<R: Rng + ?Sized>(m: usize, n: usize, alpha_sq: f64, rng: &mut R) -> Result<SensingMatrix> {
    if m == 0 || n == 0 {
        return Err(invalid!("random design needs m, n >= 1 (got {m}x{n})"));
    }
    if !(alpha_sq > 0.0) || !alpha_sq.is_finite() {
        return Err(invalid!("energy budget must be positive, got {alpha_sq}"));
    }
    let normal = Normal::new(0.0, libm::sqrt(1.0 / m as f64)).map_err(|e| invalid!("{e}"))?;
    let c = DMatrix::from_fn(m, n, |_, _| normal.sample(rng));
    SensingMatrix::new(SensingMatrix::rescaled_to(c, alpha_sq), Strategy::Random)
}

/// Sensing rows from a rank-`m` approximation of the Wiener filter for
/// estimating `x` from `x + c`.
///
/// With `Σ = Σx + Σc + ridge·I`: `W = ΣxΣ^{-1/2}`, `B` its best rank-`m`
/// approximation, `W_lr = BΣ^{-1/2}`. The rows are the leading `m` rows of
/// `S V'` from `W_lr = U S V'`, rescaled to the budget.
pub fn lowrank_wiener_design(
    sigma_x: &CovarianceMatrix,
    sigma_c: &CovarianceMatrix,
    m: usize,
    alpha_sq: f64,
    ridge: f64,
) -> Result<SensingMatrix> {
    let n = sigma_x.dim();
    if sigma_c.dim() != n {
        return Err(invalid!("sigma_x is {n}x{n} but sigma_c is {0}x{0}", sigma_c.dim()));
    }
    if m == 0 || m > n {
        return Err(invalid!("measurement count m={m} must be in 1..={n}"));
    }
    if !(alpha_sq > 0.0) || !alpha_sq.is_finite() {
        return Err(invalid!("energy budget must be positive, got {alpha_sq}"));
    }
    if !(ridge >= 0.0) {
        return Err(invalid!("ridge must be nonnegative, got {ridge}"));
    }
    let total = sigma_x.matrix() + sigma_c.matrix() + DMatrix::identity(n, n) * ridge;
    let eig = SortedEigen::new(&total);
    if !(eig.largest() > 0.0) || eig.smallest() <= 1e-12 * eig.largest() {
        return Err(Error::Singular { smallest: eig.smallest(), largest: eig.largest() });
    }
    let inv_sqrt = linalg::sym_power(&eig, -0.5)?;

    let w = sigma_x.matrix() * &inv_sqrt;
    // best rank-m approximation: project onto the top-m right singular vectors
    let right = SortedEigen::new(&(w.transpose() * &w));
    let v_m = right.vectors.columns(0, m);
    let b = &w * v_m * v_m.transpose();
    let w_lr = b * &inv_sqrt;

    let rows = SortedEigen::new(&(w_lr.transpose() * &w_lr));
    let mut a = DMatrix::zeros(m, n);
    for k in 0..m {
        let s = libm::sqrt(rows.values[k].max(0.0));
        a.set_row(k, &(rows.vectors.column(k).transpose() * s));
    }
    if linalg::frobenius_sq(&a) == 0.0 {
        return Err(Error::Numerical("low-rank Wiener filter is identically zero".into()));
    }
    SensingMatrix::new(SensingMatrix::rescaled_to(a, alpha_sq), Strategy::LowRankWiener)
}

/// Runs the designed procedure with the clutter folded into the signal:
/// signal covariance `Σx + Σc`, clutter covariance zero.
pub fn clutter_as_signal_design(problem: &DesignProblem) -> Result<SensingMatrix> {
    clutter_as_signal_design_with_state(problem).map(|(a, _)| a)
}

/// [`clutter_as_signal_design`] together with the loop state of the merged
/// problem.
pub fn clutter_as_signal_design_with_state(problem: &DesignProblem) -> Result<(SensingMatrix, DesignState)> {
    problem.validate()?;
    let merged = DesignProblem {
        sigma_x: problem.sigma_x.add(&problem.sigma_c)?,
        sigma_c: CovarianceMatrix::zeros(problem.n()),
        ..problem.clone()
    };
    design_with_label(&merged, None, Strategy::ClutterAsSignal)
}
