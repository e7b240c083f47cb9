//! Linear MMSE (Wiener) estimation of the signal from cluttered measurements
//! `y = A(x + c) + w`, `w ~ N(0, I)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::design::SensingMatrix;
use crate::error::{invalid, Result};
use crate::linalg;
use crate::prior::{CovarianceMatrix, Realization};

/// Measurement vector. The noise variance is fixed at one per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub y: DVector<f64>,
}

impl Measurement {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// `y = A(x+c) + w` with iid standard normal `w`.
pub fn measure<R: Rng + ?Sized>(a: &SensingMatrix, real: &Realization, rng: &mut R) -> Result<Measurement> {
    let mut y = measure_noiseless(a, real)?.y;
    for v in y.iter_mut() {
        let w: f64 = StandardNormal.sample(rng);
        *v += w;
    }
    Ok(Measurement { y })
}

/// `y = A(x+c)`; used where a common noise draw is added by the caller or
/// when checking the noise-free model.
pub fn measure_noiseless(a: &SensingMatrix, real: &Realization) -> Result<Measurement> {
    let n = a.cols();
    if real.x.len() != n || real.c.len() != n {
        return Err(invalid!(
            "sensing matrix has {n} columns but realization has dimension {}/{}",
            real.x.len(),
            real.c.len()
        ));
    }
    Ok(Measurement { y: a.matrix() * (&real.x + &real.c) })
}

fn check_dims(a: &DMatrix<f64>, sigma_x: &CovarianceMatrix, sigma_c: &CovarianceMatrix) -> Result<()> {
    let n = sigma_x.dim();
    if a.ncols() != n || sigma_c.dim() != n {
        return Err(invalid!(
            "dimension mismatch: A is {}x{}, Σx is {n}x{n}, Σc is {c}x{c}",
            a.nrows(),
            a.ncols(),
            c = sigma_c.dim()
        ));
    }
    Ok(())
}

fn innovation(a: &DMatrix<f64>, sigma_x: &CovarianceMatrix, sigma_c: &CovarianceMatrix) -> DMatrix<f64> {
    let m = a.nrows();
    let total = sigma_x.matrix() + sigma_c.matrix();
    linalg::symmetrize(&(a * total * a.transpose())) + DMatrix::identity(m, m)
}

/// Wiener gain `K = ΣxA'(A(Σx+Σc)A' + I)^{-1}`, precomputed for repeated use.
#[derive(Debug, Clone)]
pub struct WienerFilter {
    gain: DMatrix<f64>,
}

impl WienerFilter {
    pub fn new(a: &DMatrix<f64>, sigma_x: &CovarianceMatrix, sigma_c: &CovarianceMatrix) -> Result<Self> {
        check_dims(a, sigma_x, sigma_c)?;
        let s = innovation(a, sigma_x, sigma_c);
        // S symmetric, so K' = S^{-1} A Σx
        let kt = linalg::spd_solve(&s, &(a * sigma_x.matrix()))?;
        Ok(Self { gain: kt.transpose() })
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    pub fn estimate(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if y.len() != self.gain.ncols() {
            return Err(invalid!("measurement has length {} but filter expects {}", y.len(), self.gain.ncols()));
        }
        Ok(&self.gain * y)
    }
}

/// `x̂ = ΣxA'(A(Σx+Σc)A' + I)^{-1} y`.
pub fn lmmse_estimate(
    a: &DMatrix<f64>,
    sigma_x: &CovarianceMatrix,
    sigma_c: &CovarianceMatrix,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    WienerFilter::new(a, sigma_x, sigma_c)?.estimate(y)
}

/// Trace of the error covariance `Σx − ΣxA'(A(Σx+Σc)A' + I)^{-1}AΣx`.
pub fn lmmse_mse(a: &DMatrix<f64>, sigma_x: &CovarianceMatrix, sigma_c: &CovarianceMatrix) -> Result<f64> {
    let filter = WienerFilter::new(a, sigma_x, sigma_c)?;
    let explained = filter.gain() * (a * sigma_x.matrix());
    let err = sigma_x.matrix() - explained;
    Ok(err.trace())
}
