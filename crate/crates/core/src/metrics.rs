use nalgebra::DVector;

use crate::error::{invalid, Result};

/// Reported value when the reconstruction error vanishes.
pub const SNR_CAP_DB: f64 = 240.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snr {
    pub db: f64,
    /// Error below `1e-12·‖x‖`; `db` holds the cap.
    pub saturated: bool,
}

/// `20·log₁₀(‖x‖/‖x − x̂‖)` in dB.
pub fn reconstruction_snr(x: &DVector<f64>, xhat: &DVector<f64>) -> Result<Snr> {
    if x.len() != xhat.len() {
        return Err(invalid!("signal has length {} but estimate has {}", x.len(), xhat.len()));
    }
    let signal = x.norm();
    if !(signal > 0.0) {
        return Err(invalid!("reconstruction SNR is undefined for a zero signal"));
    }
    let err = (x - xhat).norm();
    if !err.is_finite() {
        return Err(invalid!("estimate has non-finite entries"));
    }
    if err < 1e-12 * signal {
        return Ok(Snr { db: SNR_CAP_DB, saturated: true });
    }
    Ok(Snr { db: 20.0 * libm::log10(signal / err), saturated: false })
}
