//! Oracles shared by the integration tests. Nothing here calls into the
//! routines under test except for input construction.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use priorsense_core::design::DesignProblem;
use priorsense_core::prior::{average_covariance, random_rank_r_covariance, CovarianceMatrix, MixturePrior};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Wishart-style PSD matrix `GG'/k` with `k` columns, plus `floor·I`.
pub fn random_psd<R: Rng>(n: usize, k: usize, floor: f64, rng: &mut R) -> CovarianceMatrix {
    let g = gaussian_matrix(n, k, rng);
    let m = &g * g.transpose() / k as f64 + DMatrix::identity(n, n) * floor;
    CovarianceMatrix::new((&m + m.transpose()) * 0.5).unwrap()
}

/// Objective by explicit inversion, independent of the library's Cholesky path.
pub fn objective_explicit(a: &DMatrix<f64>, sx: &DMatrix<f64>, sc: &DMatrix<f64>) -> f64 {
    let m = a.nrows();
    let s = a * (sx + sc) * a.transpose() + DMatrix::identity(m, m);
    let inv = s.try_inverse().unwrap();
    (sx * a.transpose() * inv * a * sx).trace()
}

/// Euclidean gradient of the objective with respect to `A`:
/// `2KAΣx² − 2PAΣ` with `K = S⁻¹`, `P = K(AΣx)(AΣx)'K`, `Σ = Σx+Σc`.
pub fn objective_gradient(a: &DMatrix<f64>, sx: &DMatrix<f64>, sc: &DMatrix<f64>) -> DMatrix<f64> {
    let m = a.nrows();
    let total = sx + sc;
    let s = a * &total * a.transpose() + DMatrix::identity(m, m);
    let k = s.try_inverse().unwrap();
    let g = a * sx;
    let p = &k * &g * g.transpose() * &k;
    (&k * a * sx * sx) * 2.0 - (&p * a * &total) * 2.0
}

/// Projected-gradient ascent on the Frobenius sphere of radius `√α²` with
/// backtracking. Returns the best objective seen.
pub fn projected_gradient_ascent(
    start: DMatrix<f64>,
    sx: &DMatrix<f64>,
    sc: &DMatrix<f64>,
    alpha_sq: f64,
    iters: usize,
) -> f64 {
    let project = |a: DMatrix<f64>| {
        let norm = a.norm();
        if norm == 0.0 { a } else { a * (alpha_sq.sqrt() / norm) }
    };
    let mut a = project(start);
    let mut f = objective_explicit(&a, sx, sc);
    let mut step = 1.0;
    for _ in 0..iters {
        let grad = objective_gradient(&a, sx, sc);
        let mut improved = false;
        for _ in 0..40 {
            let cand = project(&a + &grad * step);
            let fc = objective_explicit(&cand, sx, sc);
            if fc > f {
                a = cand;
                f = fc;
                step *= 1.5;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    f
}

/// Empirical covariance of zero-mean samples (rows of `samples`).
pub fn empirical_covariance(samples: &[DVector<f64>]) -> DMatrix<f64> {
    let n = samples[0].len();
    let mut acc = DMatrix::zeros(n, n);
    for s in samples {
        acc += s * s.transpose();
    }
    acc / samples.len() as f64
}

/// Best `Σ bᵢγᵢ/(1+γᵢ)` over budget splits `γᵢ = tᵢα²/cᵢ` with `t` on a
/// simplex grid of the given step.
pub fn p0_grid(b: &[f64], c: &[f64], alpha_sq: f64, step: f64) -> f64 {
    let k = (1.0 / step).round() as usize;
    let value = |t: &[f64]| -> f64 {
        t.iter()
            .zip(b.iter().zip(c))
            .map(|(ti, (bi, ci))| {
                let g = ti * alpha_sq / ci;
                bi * g / (1.0 + g)
            })
            .sum()
    };
    match b.len() {
        1 => value(&[1.0]),
        2 => (0..=k).map(|i| value(&[i as f64 * step, (k - i) as f64 * step])).fold(0.0, f64::max),
        3 => {
            let mut best: f64 = 0.0;
            for i in 0..=k {
                for j in 0..=(k - i) {
                    let t = [i as f64 * step, j as f64 * step, (k - i - j) as f64 * step];
                    best = best.max(value(&t));
                }
            }
            best
        }
        _ => unreachable!(),
    }
}

pub fn permutations_of_subsets(n: usize, m: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, m: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == m {
            out.push(cur.clone());
            return;
        }
        for k in 0..n {
            if !cur.contains(&k) {
                cur.push(k);
                rec(n, m, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(n, m, &mut Vec::new(), &mut out);
    out
}

/// Synthetic priors in the style of the experiment: `count` rank-`r` models
/// per class with uniform weights.
pub fn synthetic_problem(seed: u64, n: usize, count: usize, r: usize, m: usize, alpha_sq: f64) -> DesignProblem {
    let mut g = rng(seed);
    let class = |g: &mut _| {
        let covs = (0..count).map(|_| random_rank_r_covariance(n, r, 1.0, g).unwrap()).collect();
        average_covariance(&MixturePrior::uniform(covs).unwrap())
    };
    let sx = class(&mut g);
    let sc = class(&mut g);
    DesignProblem::new(sx, sc, m, alpha_sq).unwrap()
}
