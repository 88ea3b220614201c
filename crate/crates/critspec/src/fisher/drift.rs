//! FIM trajectory tracking during training: `λ_max` per logged epoch, a
//! dense-path `λ_min`, and the spectral norm of `Ḡ_t − Ḡ_0`.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::numerics::{operator_spectral_norm, RngStream};
use crate::{Error, Result};

/// One logged point of the FIM trajectory. `lambda_min` is only populated
/// on the dense path (small parameter counts); `drift_norm` is
/// `‖Ḡ_t − Ḡ_0‖₂` and absent at epoch 0.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct FimSnapshot {
    pub epoch: usize,
    pub lambda_max: f64,
    pub lambda_min: Option<f64>,
    pub drift_norm: Option<f64>,
}

/// Tabulated drift diagnostics.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DriftReport {
    pub snapshots: Vec<FimSnapshot>,
    /// Largest observed `‖Ḡ_t − Ḡ_0‖₂`.
    pub max_drift: f64,
    /// `λ_max` at the last snapshot over `λ_max` at the first.
    pub lambda_max_growth: f64,
    /// `λ_max` at the first post-initialization snapshot over epoch 0,
    /// capturing the early sharpening of the spectrum.
    pub early_growth: Option<f64>,
}

/// Validates and tabulates a snapshot sequence.
pub fn fim_drift(snapshots: &[FimSnapshot]) -> Result<DriftReport> {
    if snapshots.is_empty() {
        return Err(Error::InvalidInput("no snapshots to tabulate".into()));
    }
    if snapshots.windows(2).any(|w| w[0].epoch >= w[1].epoch) {
        return Err(Error::InvalidInput(
            "snapshots must be strictly increasing in epoch".into(),
        ));
    }
    if snapshots.iter().any(|s| !s.lambda_max.is_finite()) {
        return Err(Error::NonFinite("snapshot lambda_max".into()));
    }
    let first = snapshots[0].lambda_max;
    let last = snapshots[snapshots.len() - 1].lambda_max;
    let max_drift = snapshots
        .iter()
        .filter_map(|s| s.drift_norm)
        .fold(0.0, f64::max);
    let early_growth = snapshots
        .iter()
        .find(|s| s.epoch > snapshots[0].epoch)
        .map(|s| s.lambda_max / first.max(f64::MIN_POSITIVE));
    Ok(DriftReport {
        snapshots: snapshots.to_vec(),
        max_drift,
        lambda_max_growth: last / first.max(f64::MIN_POSITIVE),
        early_growth,
    })
}

/// `‖A_t − A_0‖₂` for two symmetric operators given by their actions.
pub fn operator_drift_norm(
    apply_t: impl Fn(&DVector<f64>) -> DVector<f64>,
    apply_0: impl Fn(&DVector<f64>) -> DVector<f64>,
    dim: usize,
    tol: f64,
    max_iter: usize,
    stream: RngStream,
) -> Result<f64> {
    operator_spectral_norm(
        |v| apply_t(v) - apply_0(v),
        dim,
        tol,
        max_iter,
        stream,
    )
}

/// Smallest eigenvalue of a dense symmetric PSD matrix by inverse iteration
/// on the shifted matrix `G + εI` (Cholesky-factored once), with the
/// Rayleigh quotient of `G` as the estimate.
pub fn fim_lambda_min_dense(g: &DMatrix<f64>) -> Result<f64> {
    if g.nrows() != g.ncols() || g.is_empty() {
        return Err(Error::Shape("lambda_min needs a square nonempty matrix".into()));
    }
    let n = g.nrows();
    let scale = g.diagonal().iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let eps = (scale * 1e-12).max(f64::MIN_POSITIVE);
    let shifted = g + DMatrix::identity(n, n) * eps;
    let chol = Cholesky::new(shifted).ok_or_else(|| Error::NoSolution(
        "shifted FIM is not positive definite; lambda_min undefined on this path".into(),
    ))?;
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut rayleigh = f64::INFINITY;
    for _ in 0..500 {
        let w = chol.solve(&v);
        let norm = w.norm();
        if norm == 0.0 {
            break;
        }
        v = w / norm;
        let next = v.dot(&(g * &v));
        if (next - rayleigh).abs() <= 1e-12 * next.abs().max(1e-300) {
            return Ok(next.max(0.0));
        }
        rayleigh = next;
    }
    Ok(rayleigh.max(0.0))
}
