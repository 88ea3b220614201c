//! Monte Carlo of the softmax output-layer Hessian's spectral radius as a
//! function of the readout pre-activation variance.
//!
//! Draws `h^g ~ N(0, q I_K)`, forms `H_g = diag(p) - p pᵀ` at each draw, and
//! summarizes `λ_max(H_g)` per `q`. Softmax Hessians satisfy
//! `λ_max ∈ [0, 1/2]` for every input; the mean-vs-`q` curve need not be
//! monotone, which is what the report flags.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::network::{head_hessian, HeadKind};
use crate::numerics::RngStream;
use crate::{Error, Result};

/// Distribution summary of `λ_max(H_g)` at one variance point.
#[derive(Debug, Clone, serde::Serialize)]
pub struct HgMcPoint {
    pub q: f64,
    pub mean: f64,
    pub q05: f64,
    pub median: f64,
    pub q95: f64,
    pub max: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct HgMcReport {
    pub n_classes: usize,
    pub n_samples: usize,
    pub points: Vec<HgMcPoint>,
    /// Whether the first differences of the mean curve change sign.
    pub non_monotonic: bool,
}

/// Runs the Monte Carlo over a grid of variances.
pub fn hg_lambda_mc(
    q_grid: &[f64],
    n_classes: usize,
    n_samples: usize,
    stream: RngStream,
) -> Result<HgMcReport> {
    if n_samples < 1000 {
        return Err(Error::InvalidInput(format!(
            "Monte Carlo needs at least 1000 samples per point, got {n_samples}"
        )));
    }
    if n_classes < 2 {
        return Err(Error::InvalidInput("softmax needs at least 2 classes".into()));
    }
    if q_grid.is_empty() || q_grid.iter().any(|&q| !(q > 0.0)) {
        return Err(Error::InvalidInput(
            "variance grid must be nonempty and positive".into(),
        ));
    }
    let mut points = Vec::with_capacity(q_grid.len());
    for (gi, &q) in q_grid.iter().enumerate() {
        let mut rng = stream.substream(gi as u64).rng();
        let sd = q.sqrt();
        let mut lambdas = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            let hg = DVector::from_fn(n_classes, |_, _| sd * rng.sample::<f64, _>(StandardNormal));
            let h = head_hessian(HeadKind::Softmax, &hg);
            let lambda = h
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            lambdas.push(lambda);
        }
        lambdas.sort_by(f64::total_cmp);
        let mean = lambdas.iter().sum::<f64>() / n_samples as f64;
        let at = |p: f64| lambdas[((p * (n_samples - 1) as f64).round() as usize).min(n_samples - 1)];
        points.push(HgMcPoint {
            q,
            mean,
            q05: at(0.05),
            median: at(0.5),
            q95: at(0.95),
            max: *lambdas.last().unwrap(),
        });
    }
    let diffs: Vec<f64> = points.windows(2).map(|w| w[1].mean - w[0].mean).collect();
    let non_monotonic = diffs.iter().any(|&d| d > 0.0) && diffs.iter().any(|&d| d < 0.0);
    Ok(HgMcReport {
        n_classes,
        n_samples,
        points,
        non_monotonic,
    })
}
