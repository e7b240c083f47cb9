//! Second-order mixture priors over signal and clutter.
//!
//! A prior is a weighted list of zero-mean covariance components. Rank
//! deficient components are the interesting case: a draw from a rank-`r`
//! component lives on an `r`-dimensional subspace, which is how structured
//! sparsity is encoded.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, SortedEigen};

const SYMMETRY_TOL: f64 = 1e-10;
const PSD_REL_TOL: f64 = 1e-8;
const WEIGHT_SUM_TOL: f64 = 1e-10;
const PD_REL_TOL: f64 = 1e-12;

/// Symmetric positive semidefinite `n x n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix(DMatrix<f64>);

impl CovarianceMatrix {
    /// Validates symmetry and semidefiniteness. The stored matrix is the
    /// exact symmetrization of `m`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let n = linalg::check_square(&m, "covariance")?;
        if n == 0 {
            return Err(invalid!("covariance must have dimension >= 1"));
        }
        if !linalg::is_finite(&m) {
            return Err(invalid!("covariance has non-finite entries"));
        }
        let asym = linalg::max_abs(&(&m - m.transpose()));
        if asym > SYMMETRY_TOL {
            return Err(invalid!("covariance not symmetric (max asymmetry {asym:e})"));
        }
        let sym = linalg::symmetrize(&m);
        let eig = SortedEigen::new(&sym);
        if eig.smallest() < -PSD_REL_TOL * eig.largest().max(0.0) {
            return Err(invalid!(
                "covariance not positive semidefinite (smallest eigenvalue {:e})",
                eig.smallest()
            ));
        }
        Ok(Self(sym))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn from_row_slice(n: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != n * n {
            return Err(invalid!("expected {} entries for a {n}x{n} covariance, got {}", n * n, entries.len()));
        }
        Self::new(DMatrix::from_row_slice(n, n, entries))
    }

    /// Symmetrizes without validation. Used for matrices that are PSD by
    /// construction but carry rounding asymmetry.
    pub(crate) fn from_psd_unchecked(m: DMatrix<f64>) -> Self {
        Self(linalg::symmetrize(&m))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn eigen(&self) -> SortedEigen {
        SortedEigen::new(&self.0)
    }

    /// Row-major copy of the entries.
    pub fn to_row_major(&self) -> Vec<f64> {
        self.0.transpose().as_slice().to_vec()
    }

    /// `self + other`, both assumed PSD.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(invalid!("dimension mismatch: {} vs {}", self.dim(), other.dim()));
        }
        Ok(Self::from_psd_unchecked(&self.0 + &other.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureComponent {
    pub weight: f64,
    pub cov: CovarianceMatrix,
}

/// Weighted collection of zero-mean covariance components.
#[derive(Debug, Clone, PartialEq)]
pub struct MixturePrior {
    dim: usize,
    components: Vec<MixtureComponent>,
}

impl MixturePrior {
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| invalid!("mixture prior needs at least one component"))?;
        let dim = first.cov.dim();
        let mut total = 0.0;
        for (i, c) in components.iter().enumerate() {
            if c.cov.dim() != dim {
                return Err(invalid!(
                    "component {i} has dimension {} but component 0 has {dim}",
                    c.cov.dim()
                ));
            }
            if !(c.weight >= 0.0) || !c.weight.is_finite() {
                return Err(invalid!("component {i} has invalid weight {}", c.weight));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(invalid!("mixture weights sum to {total}, expected 1"));
        }
        Ok(Self { dim, components })
    }

    /// Equal-weight mixture over `covs`.
    pub fn uniform(covs: Vec<CovarianceMatrix>) -> Result<Self> {
        let w = 1.0 / covs.len().max(1) as f64;
        Self::new(covs.into_iter().map(|cov| MixtureComponent { weight: w, cov }).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn covariances(&self) -> impl Iterator<Item = &CovarianceMatrix> {
        self.components.iter().map(|c| &c.cov)
    }

    /// Draws a component index according to the weights.
    pub fn pick_component<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, c) in self.components.iter().enumerate() {
            if c.weight > 0.0 {
                last_positive = i;
                acc += c.weight;
                if u < acc {
                    return i;
                }
            }
        }
        last_positive
    }
}

/// Weighted average `Σ = Σᵢ πᵢ Σᵢ` of the component covariances.
pub fn average_covariance(prior: &MixturePrior) -> CovarianceMatrix {
    let n = prior.dim();
    let mut acc = DMatrix::zeros(n, n);
    for c in prior.components() {
        acc += c.cov.matrix() * c.weight;
    }
    CovarianceMatrix::from_psd_unchecked(acc)
}

/// Full-rank `Y` with `Y'(Σ + ridge·I)Y = I`.
#[derive(Debug, Clone)]
pub struct WhiteningFactor {
    y: DMatrix<f64>,
}

impl WhiteningFactor {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn dim(&self) -> usize {
        self.y.nrows()
    }
}

/// Builds the canonical whitening factor `Y = UΛ^{-1/2}` of `sigma + ridge·I`,
/// with eigenvalues descending and eigenvectors sign-canonicalized.
pub fn whitening_factor(sigma: &CovarianceMatrix, ridge: f64) -> Result<WhiteningFactor> {
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(invalid!("ridge must be a finite nonnegative number, got {ridge}"));
    }
    let n = sigma.dim();
    let shifted = sigma.matrix() + DMatrix::identity(n, n) * ridge;
    let eig = SortedEigen::new(&shifted);
    let (smallest, largest) = (eig.smallest(), eig.largest());
    if !(largest > 0.0) || smallest <= PD_REL_TOL * largest {
        return Err(Error::Singular { smallest, largest });
    }
    let mut y = eig.vectors.clone();
    for k in 0..n {
        y.column_mut(k).scale_mut(1.0 / libm::sqrt(eig.values[k]));
    }
    Ok(WhiteningFactor { y })
}

/// Ridge suggested for numerically singular averages: `1e-10·tr(Σ)/n`.
pub fn recommended_ridge(sigma: &CovarianceMatrix) -> f64 {
    1e-10 * sigma.trace() / sigma.dim() as f64
}

/// Random rank-`r` covariance `QDQ'`: `Q` has orthonormal columns from the QR
/// factorization of an iid standard normal `n x r` matrix and `D` holds `r`
/// values uniform on `(0, scale]`.
pub fn random_rank_r_covariance<R: Rng + ?Sized>(
    n: usize,
    r: usize,
    scale: f64,
    rng: &mut R,
) -> Result<CovarianceMatrix> {
    if n == 0 || r == 0 || r > n {
        return Err(invalid!("rank must satisfy 1 <= r <= n, got r={r}, n={n}"));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(invalid!("scale must be positive, got {scale}"));
    }
    let g = DMatrix::<f64>::from_fn(n, r, |_, _| StandardNormal.sample(rng));
    let q = g.qr().q();
    let d: Vec<f64> = (0..r)
        .map(|_| {
            let u: f64 = rng.random();
            scale * (1.0 - u)
        })
        .collect();
    let mut qd = q.clone();
    for (k, dk) in d.iter().enumerate() {
        qd.column_mut(k).scale_mut(*dk);
    }
    Ok(CovarianceMatrix::from_psd_unchecked(&qd * q.transpose()))
}

/// Zero-mean Gaussian sampler for one covariance, via the symmetric square
/// root so rank-deficient covariances need no perturbation.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    root: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn new(cov: &CovarianceMatrix) -> Self {
        let eig = cov.eigen();
        let root = linalg::sym_power(&eig, 0.5).expect("nonnegative power never fails");
        Self { root }
    }

    pub fn dim(&self) -> usize {
        self.root.nrows()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::<f64>::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        &self.root * z
    }
}

/// Precomputed samplers for every component of a prior.
#[derive(Debug, Clone)]
pub struct PriorSampler {
    prior: MixturePrior,
    samplers: Vec<GaussianSampler>,
}

impl PriorSampler {
    pub fn new(prior: &MixturePrior) -> Self {
        Self {
            prior: prior.clone(),
            samplers: prior.covariances().map(GaussianSampler::new).collect(),
        }
    }

    pub fn prior(&self) -> &MixturePrior {
        &self.prior
    }

    /// Returns `(component index, draw)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, DVector<f64>) {
        let idx = self.prior.pick_component(rng);
        (idx, self.samplers[idx].sample(rng))
    }
}

/// One draw of signal and clutter.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub x: DVector<f64>,
    pub c: DVector<f64>,
    pub model_index_x: usize,
    pub model_index_c: usize,
}

/// Draws signal then clutter from their priors.
pub fn sample_realization<R: Rng + ?Sized>(
    signal: &PriorSampler,
    clutter: &PriorSampler,
    rng: &mut R,
) -> Result<Realization> {
    if signal.prior().dim() != clutter.prior().dim() {
        return Err(invalid!(
            "signal dimension {} differs from clutter dimension {}",
            signal.prior().dim(),
            clutter.prior().dim()
        ));
    }
    let (model_index_x, x) = signal.sample(rng);
    let (model_index_c, c) = clutter.sample(rng);
    Ok(Realization { x, c, model_index_x, model_index_c })
}
