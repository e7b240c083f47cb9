//! Energy-constrained sensing matrix design.
//!
//! The design maximizes `tr{Σx A'(A(Σx+Σc)A' + I)^{-1} A Σx}` subject to
//! `‖A‖_F² ≤ α²`. Writing `A' = Y M` with `Y'(Σx+Σc)Y = I` and the thin
//! factorization `M = U_M diag(σ)`, the objective becomes
//! `Σᵢ bᵢ σᵢ²/(1+σᵢ²)` and the budget `Σᵢ cᵢ σᵢ² ≤ α²`, where `bᵢ`, `cᵢ` are
//! the diagonals of `U_M'Y'Σx²YU_M` and `U_M'Y'YU_M`. The loop alternates an
//! eigenvector pairing step over `U_M` with a water-filling step over `σ`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, SortedEigen};
use crate::prior::{whitening_factor, CovarianceMatrix};

/// Which construction produced a sensing matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Random,
    Designed,
    LowRankWiener,
    ClutterAsSignal,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Random,
        Strategy::Designed,
        Strategy::LowRankWiener,
        Strategy::ClutterAsSignal,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Designed => "designed",
            Strategy::LowRankWiener => "lowrank-wiener",
            Strategy::ClutterAsSignal => "clutter-as-signal",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|st| st.label() == s)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// An `m x n` measurement operator tagged with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingMatrix {
    matrix: DMatrix<f64>,
    strategy: Strategy,
}

impl SensingMatrix {
    pub fn new(matrix: DMatrix<f64>, strategy: Strategy) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(invalid!("sensing matrix must be non-empty"));
        }
        if !linalg::is_finite(&matrix) {
            return Err(Error::Numerical("sensing matrix has non-finite entries".into()));
        }
        Ok(Self { matrix, strategy })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn energy(&self) -> f64 {
        linalg::frobenius_sq(&self.matrix)
    }

    /// True when `‖A‖_F² ≤ α²(1 + rel_slack)`.
    pub fn within_budget(&self, alpha_sq: f64, rel_slack: f64) -> bool {
        self.energy() <= alpha_sq * (1.0 + rel_slack)
    }

    /// Scales the whole matrix so that `‖A‖_F² = α²`. A zero matrix is left
    /// as is.
    pub(crate) fn rescaled_to(mut matrix: DMatrix<f64>, alpha_sq: f64) -> DMatrix<f64> {
        let e = linalg::frobenius_sq(&matrix);
        if e > 0.0 {
            matrix *= libm::sqrt(alpha_sq / e);
        }
        matrix
    }
}

#[derive(Debug, Clone)]
pub struct DesignProblem {
    pub sigma_x: CovarianceMatrix,
    pub sigma_c: CovarianceMatrix,
    /// Number of measurements.
    pub m: usize,
    /// Energy budget `α²` on `‖A‖_F²`.
    pub alpha_sq: f64,
    /// Maximum number of alternating rounds.
    pub iterations: usize,
    pub ridge: f64,
}

impl DesignProblem {
    pub const DEFAULT_ITERATIONS: usize = 30;

    pub fn new(sigma_x: CovarianceMatrix, sigma_c: CovarianceMatrix, m: usize, alpha_sq: f64) -> Result<Self> {
        let p = Self {
            sigma_x,
            sigma_c,
            m,
            alpha_sq,
            iterations: Self::DEFAULT_ITERATIONS,
            ridge: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn with_ridge(mut self, ridge: f64) -> Self {
        self.ridge = ridge;
        self
    }

    pub fn n(&self) -> usize {
        self.sigma_x.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.sigma_x.dim();
        if self.sigma_c.dim() != n {
            return Err(invalid!("sigma_x is {n}x{n} but sigma_c is {0}x{0}", self.sigma_c.dim()));
        }
        if self.m == 0 || self.m > n {
            return Err(invalid!("measurement count m={} must be in 1..={n}", self.m));
        }
        if !(self.alpha_sq > 0.0) || !self.alpha_sq.is_finite() {
            return Err(invalid!("energy budget must be positive, got {}", self.alpha_sq));
        }
        if self.iterations == 0 {
            return Err(invalid!("iteration count must be >= 1"));
        }
        if !(self.ridge >= 0.0) || !self.ridge.is_finite() {
            return Err(invalid!("ridge must be nonnegative, got {}", self.ridge));
        }
        Ok(())
    }
}

/// State of the alternating loop after termination.
#[derive(Debug, Clone)]
pub struct DesignState {
    /// `n x m`, orthonormal columns.
    pub u_m: DMatrix<f64>,
    pub sigmas: Vec<f64>,
    /// For each column slot, the index (descending order) of the eigenvector
    /// of `Y'Σx²Y` it holds.
    pub selection: Vec<usize>,
    /// Objective after every completed (pairing, water-filling) round.
    pub objective_trace: Vec<f64>,
    /// Water level of the last water-filling solve.
    pub water_level: Option<f64>,
}

impl DesignState {
    pub fn objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(0.0)
    }
}

/// `tr{Σx A'(A(Σx+Σc)A' + I)^{-1} A Σx}`, evaluated with a Cholesky solve.
pub fn design_objective(a: &DMatrix<f64>, sigma_x: &CovarianceMatrix, sigma_c: &CovarianceMatrix) -> Result<f64> {
    let n = sigma_x.dim();
    if sigma_c.dim() != n || a.ncols() != n {
        return Err(invalid!(
            "dimension mismatch: A is {}x{}, covariances are {n} and {}",
            a.nrows(),
            a.ncols(),
            sigma_c.dim()
        ));
    }
    let m = a.nrows();
    let total = sigma_x.matrix() + sigma_c.matrix();
    let inner = linalg::symmetrize(&(a * &total * a.transpose())) + DMatrix::identity(m, m);
    let chol = inner
        .cholesky()
        .ok_or_else(|| Error::Numerical("A(Σx+Σc)A' + I is not positive definite".into()))?;
    // tr(G' S^{-1} G) = ‖L^{-1} G‖_F² with S = LL' and G = AΣx
    let mut g = a * sigma_x.matrix();
    chol.l().solve_lower_triangular_mut(&mut g);
    Ok(linalg::frobenius_sq(&g))
}

/// Solution of the water-filling subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterFilling {
    /// Allocations `γᵢ = σᵢ²`.
    pub gammas: Vec<f64>,
    /// Lagrange level `v*`; `None` when every `bᵢ` is zero.
    pub level: Option<f64>,
    pub iterations: usize,
}

impl WaterFilling {
    pub fn objective(&self, b: &[f64]) -> f64 {
        b.iter().zip(&self.gammas).map(|(bi, g)| bi * g / (1.0 + g)).sum()
    }
}

const MAX_BISECTION: usize = 200;
const BISECTION_REL_TOL: f64 = 1e-12;

fn allocation<'a>(b: &'a [f64], c: &'a [f64], v: f64) -> impl Iterator<Item = f64> + 'a {
    b.iter().zip(c).map(move |(&bi, &ci)| (libm::sqrt(bi / (ci * v)) - 1.0).max(0.0))
}

fn spent(b: &[f64], c: &[f64], v: f64) -> f64 {
    allocation(b, c, v).zip(c).map(|(g, ci)| ci * g).sum()
}

/// Maximizes `Σ bᵢγᵢ/(1+γᵢ)` over `γ ≥ 0` with `Σ cᵢγᵢ ≤ α²`.
///
/// The optimum is `γᵢ = (√(bᵢ/(cᵢv)) − 1)⁺` with the level `v` set so the
/// budget is met with equality. Bisection on `v` locates the active set; the
/// level is then recomputed in closed form on that set, which makes the
/// budget identity exact up to rounding.
pub fn solve_p0(b: &[f64], c: &[f64], alpha_sq: f64) -> Result<WaterFilling> {
    if b.len() != c.len() {
        return Err(invalid!("b has {} entries but c has {}", b.len(), c.len()));
    }
    if !(alpha_sq > 0.0) || !alpha_sq.is_finite() {
        return Err(invalid!("budget must be positive and finite, got {alpha_sq}"));
    }
    for (i, (&bi, &ci)) in b.iter().zip(c).enumerate() {
        if !bi.is_finite() || !ci.is_finite() {
            return Err(invalid!("non-finite input at index {i}"));
        }
        if !(ci > 0.0) {
            return Err(invalid!("c[{i}] = {ci} must be strictly positive"));
        }
        if bi < 0.0 {
            return Err(invalid!("b[{i}] = {bi} must be nonnegative"));
        }
    }
    let m = b.len();
    let v_hi0 = b.iter().zip(c).map(|(bi, ci)| bi / ci).fold(0.0, f64::max);
    if !(v_hi0 > 0.0) {
        return Ok(WaterFilling { gammas: vec![0.0; m], level: None, iterations: 0 });
    }

    let mut iterations = 0;
    let mut v_hi = v_hi0;
    let mut v_lo = v_hi0 * 0.5;
    while spent(b, c, v_lo) < alpha_sq {
        v_hi = v_lo;
        v_lo *= 0.5;
        iterations += 1;
        if iterations > MAX_BISECTION || v_lo == 0.0 {
            return Err(Error::Numerical(format!(
                "water level bracketing did not converge (v_lo={v_lo:e}, budget {alpha_sq:e})"
            )));
        }
    }
    let mut steps = 0;
    while (v_hi - v_lo) > BISECTION_REL_TOL * v_hi {
        let mid = 0.5 * (v_lo + v_hi);
        if spent(b, c, mid) >= alpha_sq {
            v_lo = mid;
        } else {
            v_hi = mid;
        }
        steps += 1;
        if steps > MAX_BISECTION {
            return Err(Error::Numerical(format!(
                "water level bisection exceeded {MAX_BISECTION} steps (bracket [{v_lo:e}, {v_hi:e}])"
            )));
        }
    }
    iterations += steps;

    // Closed-form level on the active set: √v = Σ√(bᵢcᵢ) / (α² + Σcᵢ).
    let mut v = 0.5 * (v_lo + v_hi);
    for _ in 0..4 {
        let active: Vec<usize> = (0..m).filter(|&i| b[i] / c[i] > v).collect();
        let num: f64 = active.iter().map(|&i| libm::sqrt(b[i] * c[i])).sum();
        let den: f64 = alpha_sq + active.iter().map(|&i| c[i]).sum::<f64>();
        let exact = (num / den) * (num / den);
        let consistent = (0..m).all(|i| (b[i] / c[i] > exact) == active.contains(&i));
        if consistent {
            v = exact;
            break;
        }
        v = exact;
    }
    let gammas: Vec<f64> = allocation(b, c, v).collect();
    Ok(WaterFilling { gammas, level: Some(v), iterations })
}

/// Result of the eigenvector pairing subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct Pairing {
    /// `selection[i]` is the eigenvector index assigned to column slot `i`.
    pub selection: Vec<usize>,
    pub objective: f64,
}

/// Pairs the `i`-th largest eigenvalue with the `i`-th largest weight.
///
/// `eigvals` must be sorted descending. Ties among weights go to the lowest
/// slot index, so uniform weights give the eigenvalue-order pairing.
pub fn solve_p1(eigvals: &[f64], weights: &[f64]) -> Result<Pairing> {
    let (n, m) = (eigvals.len(), weights.len());
    if m > n {
        return Err(invalid!("cannot select {m} eigenvectors out of {n}"));
    }
    if eigvals.windows(2).any(|w| w[0] < w[1]) {
        return Err(invalid!("eigenvalues must be sorted in descending order"));
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(invalid!("weights must be finite"));
    }
    let mut slots: Vec<usize> = (0..m).collect();
    slots.sort_by(|&a, &b| weights[b].partial_cmp(&weights[a]).unwrap_or(core::cmp::Ordering::Equal));
    let mut selection = vec![0; m];
    for (rank, &slot) in slots.iter().enumerate() {
        selection[slot] = rank;
    }
    let objective = selection.iter().zip(weights).map(|(&k, w)| eigvals[k] * w).sum();
    Ok(Pairing { selection, objective })
}

/// Runs the alternating design loop and returns `A = (Y U_M diag(σ))'`.
///
/// `init` gives the starting `σ`; the default is all ones. Stops early when
/// a round improves the objective by less than `1e-10` relative.
pub fn design_sensing_matrix(problem: &DesignProblem, init: Option<&[f64]>) -> Result<(SensingMatrix, DesignState)> {
    design_with_label(problem, init, Strategy::Designed)
}

pub(crate) fn design_with_label(
    problem: &DesignProblem,
    init: Option<&[f64]>,
    strategy: Strategy,
) -> Result<(SensingMatrix, DesignState)> {
    problem.validate()?;
    let (n, m) = (problem.n(), problem.m);
    let mut sigmas: Vec<f64> = match init {
        Some(s) => {
            if s.len() != m || s.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
                return Err(invalid!("initial sigmas must be {m} nonnegative finite values"));
            }
            s.to_vec()
        }
        None => vec![1.0; m],
    };

    // step 1: whitening
    let total = problem.sigma_x.add(&problem.sigma_c)?;
    let y = whitening_factor(&total, problem.ridge)?;
    let y = y.matrix();
    // step 2: eigendecomposition of Y'Σx²Y
    let sx_y = problem.sigma_x.matrix() * y;
    let target = linalg::symmetrize(&(sx_y.transpose() * &sx_y));
    let eig = SortedEigen::new(&target);
    let eigvals: Vec<f64> = eig.values.iter().map(|&l| l.max(0.0)).collect();
    let yty = linalg::symmetrize(&(y.transpose() * y));

    let mut trace = Vec::with_capacity(problem.iterations);
    let mut selection = Vec::new();
    let mut u_m = DMatrix::zeros(n, m);
    let mut level = None;
    for _ in 0..problem.iterations {
        // step 4: pairing update of U_M
        let weights: Vec<f64> = sigmas.iter().map(|s| s * s / (1.0 + s * s)).collect();
        let pairing = solve_p1(&eigvals, &weights)?;
        for (slot, &k) in pairing.selection.iter().enumerate() {
            u_m.set_column(slot, &eig.vectors.column(k));
        }
        selection = pairing.selection;

        // step 5: water-filling update of σ
        let b: Vec<f64> = selection.iter().map(|&k| eigvals[k]).collect();
        let c: Vec<f64> = (0..m)
            .map(|i| {
                let u = u_m.column(i);
                (u.transpose() * &yty * u)[(0, 0)]
            })
            .collect();
        let wf = solve_p0(&b, &c, problem.alpha_sq)?;
        level = wf.level;
        let value = wf.objective(&b);
        sigmas = wf.gammas.iter().map(|g| libm::sqrt(*g)).collect();

        let improved = trace.last().map(|prev: &f64| value - prev > 1e-10 * prev.abs().max(f64::MIN_POSITIVE));
        trace.push(value);
        if improved == Some(false) {
            break;
        }
    }

    // step 6
    let mut m_mat = u_m.clone();
    for (k, s) in sigmas.iter().enumerate() {
        m_mat.column_mut(k).scale_mut(*s);
    }
    let a = (y * m_mat).transpose();
    let sensing = SensingMatrix::new(a, strategy)?;
    Ok((sensing, DesignState { u_m, sigmas, selection, objective_trace: trace, water_level: level }))
}

/// Objective contribution `Σ λ_{sel(i)} wᵢ` for an arbitrary injective
/// selection; shared by tests that brute-force the pairing step.
pub fn pairing_objective(eigvals: &[f64], weights: &[f64], selection: &[usize]) -> f64 {
    selection.iter().zip(weights).map(|(&k, w)| eigvals[k] * w).sum()
}

/// Diagonal weights `σ²/(1+σ²)`.
pub fn shrinkage_weights(sigmas: &[f64]) -> DVector<f64> {
    DVector::from_iterator(sigmas.len(), sigmas.iter().map(|s| s * s / (1.0 + s * s)))
}
