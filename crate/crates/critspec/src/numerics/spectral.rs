//! Singular-value summaries and power iteration for symmetric operators.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::RngStream;
use crate::{Error, Result};

/// Normalization used for the mean square singular value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvNormalization {
    /// Divide by the number of singular values (default).
    SingularValueCount,
    /// Divide by the number of matrix rows, the per-layer convention used
    /// when the summary estimates the mean square singular value of D·W.
    OutputRows,
}

/// Extreme and mean-square singular values of a matrix, with the full
/// descending spectrum attached.
#[derive(Debug, Clone)]
pub struct SpectralSummary {
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub mean_square_sv: f64,
    pub spectrum: Option<Vec<f64>>,
}

/// Full-decomposition singular-value summary with the mean square taken
/// over the singular values.
pub fn spectral_summary(m: &DMatrix<f64>) -> Result<SpectralSummary> {
    spectral_summary_with(m, SvNormalization::SingularValueCount)
}

/// Singular-value summary with an explicit mean-square normalization.
pub fn spectral_summary_with(
    m: &DMatrix<f64>,
    normalization: SvNormalization,
) -> Result<SpectralSummary> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(
            "matrix passed to spectral_summary has non-finite entries".into(),
        ));
    }
    let rows = m.nrows();
    let svd = m
        .clone()
        .try_svd(false, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::Convergence {
            context: format!("SVD of {}x{} matrix", m.nrows(), m.ncols()),
            best: f64::NAN,
        })?;
    let mut spectrum: Vec<f64> = svd.singular_values.iter().copied().collect();
    spectrum.sort_by(|a, b| b.total_cmp(a));
    if spectrum.is_empty() {
        return Err(Error::Shape("spectral_summary of an empty matrix".into()));
    }
    let sum_sq: f64 = spectrum.iter().map(|s| s * s).sum();
    let denom = match normalization {
        SvNormalization::SingularValueCount => spectrum.len() as f64,
        SvNormalization::OutputRows => rows as f64,
    };
    Ok(SpectralSummary {
        sigma_max: spectrum[0],
        sigma_min: *spectrum.last().unwrap(),
        mean_square_sv: sum_sq / denom,
        spectrum: Some(spectrum),
    })
}

/// Largest eigenvalue of a symmetric PSD operator given only its action,
/// by power iteration with a Rayleigh-quotient stopping rule.
///
/// Converges when successive Rayleigh quotients agree to `tol` in relative
/// terms; restarts once from a fresh random vector if the iteration
/// stagnates. Errors with the best estimate if `max_iter` is exhausted.
pub fn power_iteration_max_eig(
    apply: impl Fn(&DVector<f64>) -> DVector<f64>,
    dim: usize,
    tol: f64,
    max_iter: usize,
    stream: RngStream,
) -> Result<f64> {
    if dim == 0 {
        return Err(Error::Shape("power iteration on a zero-dim operator".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!(
            "power iteration requires tol > 0, got {tol}"
        )));
    }
    let mut rng = stream.rng();
    let draw = |rng: &mut rand_chacha::ChaCha12Rng| {
        let mut v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        v /= n;
        v
    };
    let mut v = draw(&mut rng);
    let mut lambda_prev = f64::INFINITY;
    let mut restarted = false;
    for iter in 0..max_iter {
        let w = apply(&v);
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(
                "operator returned non-finite values during power iteration".into(),
            ));
        }
        let lambda = v.dot(&w);
        let norm_w = w.norm();
        if norm_w < f64::MIN_POSITIVE.sqrt() {
            // Either the start vector sits in the null space or the
            // operator is zero; one fresh draw distinguishes the two.
            if restarted {
                return Ok(0.0);
            }
            restarted = true;
            v = draw(&mut rng);
            lambda_prev = f64::INFINITY;
            continue;
        }
        if (lambda - lambda_prev).abs() <= tol * lambda.abs().max(f64::MIN_POSITIVE) {
            return Ok(lambda);
        }
        // Stagnation guard: a single restart halfway through the budget.
        if iter == max_iter / 2 && !restarted {
            restarted = true;
            v = draw(&mut rng);
            lambda_prev = f64::INFINITY;
            continue;
        }
        lambda_prev = lambda;
        v = w / norm_w;
    }
    Err(Error::Convergence {
        context: format!("power iteration on dim-{dim} operator after {max_iter} iterations"),
        best: lambda_prev,
    })
}

/// Spectral norm of a symmetric (possibly indefinite) operator: power
/// iteration on the squared operator, so the sign of the dominant
/// eigenvalue does not matter.
pub fn operator_spectral_norm(
    apply: impl Fn(&DVector<f64>) -> DVector<f64>,
    dim: usize,
    tol: f64,
    max_iter: usize,
    stream: RngStream,
) -> Result<f64> {
    let squared = power_iteration_max_eig(|v| apply(&apply(v)), dim, tol, max_iter, stream)?;
    Ok(squared.max(0.0).sqrt())
}
