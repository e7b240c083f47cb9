//! Structured recovery with a union-of-subspaces dictionary.
//!
//! The dictionary stacks the top-`r` eigenvectors of every signal model and
//! then every clutter model. Recovery solves
//!
//! ```text
//! min_β ‖y − Φβ‖² + λ Σⱼ √(vⱼ'Λⱼ⁻¹vⱼ),   Φ = A·D,
//! ```
//!
//! where `vⱼ` is the block of `β` belonging to group `j`. Substituting
//! `uⱼ = Λⱼ^{-1/2} vⱼ` turns each elliptic penalty into a plain Euclidean
//! norm and scales the group's columns of `Φ` by `Λⱼ^{1/2}`, so the proximal
//! step stays closed form (block soft-thresholding).

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::prior::CovarianceMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKind {
    Signal,
    Clutter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub start: usize,
    /// Eigenvalues of the model that produced the block, descending.
    pub lambdas: Vec<f64>,
    pub kind: GroupKind,
    /// Index of the model within its class.
    pub model: usize,
}

impl Group {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn range(&self) -> core::ops::Range<usize> {
        self.start..self.start + self.len()
    }
}

/// `D = [D_x D_c]` with one orthonormal block per model.
#[derive(Debug, Clone)]
pub struct GroupDictionary {
    d: DMatrix<f64>,
    groups: Vec<Group>,
    rank: usize,
}

impl GroupDictionary {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.d.nrows()
    }

    /// Number of coefficients.
    pub fn width(&self) -> usize {
        self.d.ncols()
    }

    pub fn signal_groups(&self) -> impl Iterator<Item = &Group> {
        self.groups.iter().filter(|g| g.kind == GroupKind::Signal)
    }

    /// `Φ = A·D`.
    pub fn sensing_dictionary(&self, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if a.ncols() != self.dim() {
            return Err(invalid!("sensing matrix has {} columns, dictionary dimension is {}", a.ncols(), self.dim()));
        }
        Ok(a * &self.d)
    }
}

const RANK_REL_TOL: f64 = 1e-10;

/// Builds the dictionary from the top-`r` eigenpairs of every model.
pub fn build_dictionary(
    signal_models: &[CovarianceMatrix],
    clutter_models: &[CovarianceMatrix],
    r: usize,
) -> Result<GroupDictionary> {
    let n = signal_models
        .first()
        .or(clutter_models.first())
        .map(|c| c.dim())
        .ok_or_else(|| invalid!("dictionary needs at least one model"))?;
    if r == 0 || r > n {
        return Err(invalid!("per-model rank must be in 1..={n}, got {r}"));
    }
    let total = signal_models.len() + clutter_models.len();
    let mut d = DMatrix::zeros(n, r * total);
    let mut groups = Vec::with_capacity(total);
    let tagged = signal_models
        .iter()
        .enumerate()
        .map(|(i, c)| (GroupKind::Signal, i, c))
        .chain(clutter_models.iter().enumerate().map(|(i, c)| (GroupKind::Clutter, i, c)));
    for (j, (kind, model, cov)) in tagged.enumerate() {
        if cov.dim() != n {
            return Err(invalid!("{kind:?} model {model} has dimension {} but expected {n}", cov.dim()));
        }
        let eig = cov.eigen();
        let top = eig.largest();
        if !(top > 0.0) || eig.values[r - 1] <= RANK_REL_TOL * top {
            return Err(invalid!("{kind:?} model {model} has fewer than {r} positive eigenvalues"));
        }
        let start = j * r;
        d.columns_mut(start, r).copy_from(&eig.vectors.columns(0, r));
        groups.push(Group { start, lambdas: eig.values.rows(0, r).iter().copied().collect(), kind, model });
    }
    Ok(GroupDictionary { d, groups, rank: r })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Target for the scaled optimality residual, see [`optimality_residual`].
    pub tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_iter: 20_000, tol: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct GroupLassoSolution {
    /// Coefficients in the original (dictionary) coordinates.
    pub beta: DVector<f64>,
    /// Objective value after every iteration; non-increasing.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Scaled optimality residual at the returned point.
    pub residual: f64,
    pub lambda: f64,
}

impl GroupLassoSolution {
    pub fn objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(f64::NAN)
    }
}

/// Problem data after the `u = Λ^{-1/2} v` change of variables.
struct Whitened<'a> {
    groups: &'a [Group],
    root: DVector<f64>,
    scaled: DMatrix<f64>,
    y: &'a DVector<f64>,
    gram: DMatrix<f64>,
    corr: DVector<f64>,
}

impl<'a> Whitened<'a> {
    fn new(y: &'a DVector<f64>, phi: &DMatrix<f64>, dict: &'a GroupDictionary) -> Result<Self> {
        if phi.ncols() != dict.width() {
            return Err(invalid!("Φ has {} columns but dictionary has {}", phi.ncols(), dict.width()));
        }
        if phi.nrows() != y.len() {
            return Err(invalid!("Φ has {} rows but y has length {}", phi.nrows(), y.len()));
        }
        let mut root = DVector::zeros(dict.width());
        for g in dict.groups() {
            for (k, l) in g.range().zip(&g.lambdas) {
                root[k] = libm::sqrt(*l);
            }
        }
        let mut scaled = phi.clone();
        for (k, s) in root.iter().enumerate() {
            scaled.column_mut(k).scale_mut(*s);
        }
        let gram = linalg::symmetrize(&(scaled.transpose() * &scaled));
        let corr = scaled.transpose() * y;
        Ok(Self { groups: dict.groups(), root, scaled, y, gram, corr })
    }

    /// `max_j ‖2 Λⱼ^{1/2} Φⱼ' y‖`.
    fn lambda_max(&self) -> f64 {
        self.groups
            .iter()
            .map(|g| 2.0 * self.corr.rows(g.start, g.len()).norm())
            .fold(0.0, f64::max)
    }

    fn penalty(&self, u: &DVector<f64>) -> f64 {
        self.groups.iter().map(|g| u.rows(g.start, g.len()).norm()).sum()
    }

    /// `‖y − Φ̃u‖²`, in residual form so it stays accurate near a perfect fit.
    fn loss(&self, u: &DVector<f64>) -> f64 {
        (self.y - &self.scaled * u).norm_squared()
    }

    fn prox_step(&self, point: &DVector<f64>, g_point: &DVector<f64>, step: f64, thresh: f64) -> DVector<f64> {
        let grad = (g_point - &self.corr) * 2.0;
        let mut z = point - grad * step;
        for g in self.groups {
            let mut block = z.rows_mut(g.start, g.len());
            let norm = block.norm();
            if norm <= thresh {
                block.fill(0.0);
            } else {
                block.scale_mut(1.0 - thresh / norm);
            }
        }
        z
    }

    fn residual(&self, u: &DVector<f64>, gu: &DVector<f64>, lambda: f64) -> f64 {
        let grad = (gu - &self.corr) * 2.0;
        let worst = self
            .groups
            .iter()
            .map(|g| {
                let gj = grad.rows(g.start, g.len());
                let uj = u.rows(g.start, g.len());
                let un = uj.norm();
                if un > 0.0 {
                    (gj + uj * (lambda / un)).norm()
                } else {
                    (gj.norm() - lambda).max(0.0)
                }
            })
            .fold(0.0, f64::max);
        worst / self.lambda_max().max(1.0)
    }
}

/// `λ_max = maxⱼ ‖2Λⱼ^{1/2}Φⱼ'y‖`: the smallest penalty for which `β = 0`
/// is optimal.
pub fn lambda_max(y: &DVector<f64>, phi: &DMatrix<f64>, dict: &GroupDictionary) -> Result<f64> {
    Ok(Whitened::new(y, phi, dict)?.lambda_max())
}

/// Worst group-wise violation of the subgradient optimality conditions at
/// `beta`, divided by `max(1, λ_max)`.
///
/// For a nonzero group the violation is
/// `‖2Λⱼ^{1/2}Φⱼ'(Φβ − y) + λuⱼ/‖uⱼ‖‖` with `uⱼ = Λⱼ^{-1/2}vⱼ`; for a zero group
/// it is `(‖2Λⱼ^{1/2}Φⱼ'(Φβ − y)‖ − λ)⁺`.
pub fn optimality_residual(
    y: &DVector<f64>,
    phi: &DMatrix<f64>,
    dict: &GroupDictionary,
    lambda: f64,
    beta: &DVector<f64>,
) -> Result<f64> {
    let w = Whitened::new(y, phi, dict)?;
    if beta.len() != dict.width() {
        return Err(invalid!("β has length {} but dictionary has {} columns", beta.len(), dict.width()));
    }
    let u = beta.component_div(&w.root);
    let gu = &w.gram * &u;
    Ok(w.residual(&u, &gu, lambda))
}

/// Objective `‖y − Φβ‖² + λΣⱼ√(vⱼ'Λⱼ⁻¹vⱼ)` in the original coordinates.
pub fn group_lasso_objective(
    y: &DVector<f64>,
    phi: &DMatrix<f64>,
    dict: &GroupDictionary,
    lambda: f64,
    beta: &DVector<f64>,
) -> f64 {
    let fit = (y - phi * beta).norm_squared();
    let pen: f64 = dict
        .groups()
        .iter()
        .map(|g| {
            let s: f64 = g.range().zip(&g.lambdas).map(|(k, l)| beta[k] * beta[k] / l).sum();
            libm::sqrt(s)
        })
        .sum();
    fit + lambda * pen
}

/// Accelerated proximal gradient with a monotone safeguard: if an
/// accelerated step increases the objective, momentum is reset and a plain
/// proximal-gradient step is taken from the current iterate instead.
///
/// The recorded trace clamps roundoff-level increases of the plain step, which
/// happen once the loss is below the precision of its Gram-form evaluation.
pub fn group_lasso(
    y: &DVector<f64>,
    phi: &DMatrix<f64>,
    dict: &GroupDictionary,
    lambda: f64,
    opts: SolverOptions,
) -> Result<GroupLassoSolution> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(invalid!("λ must be a finite nonnegative number, got {lambda}"));
    }
    let w = Whitened::new(y, phi, dict)?;
    let p = dict.width();
    let lipschitz = 2.0 * linalg::spectral_norm_sq(&w.scaled, 1e-6, 10_000);
    let finish = |u: DVector<f64>, trace: Vec<f64>, iterations, converged, residual| {
        let beta = u.component_mul(&w.root);
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Numerical("group lasso produced non-finite coefficients".into()));
        }
        Ok(GroupLassoSolution { beta, objective_trace: trace, iterations, converged, residual, lambda })
    };

    let mut x = DVector::zeros(p);
    let mut gx = DVector::zeros(p);
    let mut fx = w.loss(&x);
    let mut trace = vec![fx];
    if !(lipschitz > 0.0) {
        // Φ = 0: nothing to fit, zero is optimal
        let res = w.residual(&x, &gx, lambda);
        return finish(x, trace, 0, true, res);
    }
    let step = 1.0 / lipschitz;
    let thresh = lambda * step;

    let mut yk = x.clone();
    let mut gy = gx.clone();
    let mut t = 1.0f64;
    let mut residual = w.residual(&x, &gx, lambda);
    let mut iterations = 0;
    while residual > opts.tol && iterations < opts.max_iter {
        iterations += 1;
        let mut z = w.prox_step(&yk, &gy, step, thresh);
        let mut gz = &w.gram * &z;
        let mut fz = w.loss(&z) + lambda * w.penalty(&z);
        if fz > fx {
            t = 1.0;
            z = w.prox_step(&x, &gx, step, thresh);
            gz = &w.gram * &z;
            // a plain step at 1/L cannot increase the objective beyond roundoff
            fz = (w.loss(&z) + lambda * w.penalty(&z)).min(fx);
        }
        let t_next = 0.5 * (1.0 + libm::sqrt(1.0 + 4.0 * t * t));
        let mom = (t - 1.0) / t_next;
        yk = &z + (&z - &x) * mom;
        gy = &gz + (&gz - &gx) * mom;
        x = z;
        gx = gz;
        fx = fz;
        t = t_next;
        trace.push(fx);
        residual = w.residual(&x, &gx, lambda);
    }
    let converged = residual <= opts.tol;
    finish(x, trace, iterations, converged, residual)
}

/// `x̂ = Σ_{signal j} Dⱼvⱼ`; clutter coefficients are discarded.
pub fn extract_signal(solution: &GroupLassoSolution, dict: &GroupDictionary) -> Result<DVector<f64>> {
    if solution.beta.len() != dict.width() {
        return Err(invalid!("β has length {} but dictionary has {} columns", solution.beta.len(), dict.width()));
    }
    let mut xhat = DVector::zeros(dict.dim());
    for g in dict.signal_groups() {
        xhat += dict.matrix().columns(g.start, g.len()) * solution.beta.rows(g.start, g.len());
    }
    Ok(xhat)
}

/// Picks the grid value with the highest score. Ties, and non-finite scores,
/// resolve toward the smallest `λ`.
pub fn select_lambda<F>(grid: &[f64], mut score: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if grid.is_empty() {
        return Err(invalid!("λ grid is empty"));
    }
    if grid.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
        return Err(invalid!("λ grid values must be finite and nonnegative"));
    }
    let mut ordered = grid.to_vec();
    ordered.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    let mut best = (ordered[0], f64::NEG_INFINITY);
    for &l in &ordered {
        let s = score(l)?;
        let s = if s.is_nan() { f64::NEG_INFINITY } else { s };
        if s > best.1 {
            best = (l, s);
        }
    }
    Ok(best.0)
}

/// `points` values spaced logarithmically over `[lo, hi]·scale`.
pub fn log_grid(scale: f64, lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo * scale],
        _ => {
            let (a, b) = (libm::log10(lo), libm::log10(hi));
            (0..points)
                .map(|i| scale * libm::pow(10.0, a + (b - a) * i as f64 / (points - 1) as f64))
                .collect()
        }
    }
}
