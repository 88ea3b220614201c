//! Empirical neural tangent kernel via the parameter-by-output unfolding.
//!
//! Stacking the gradients of every network output over every sample as the
//! columns of `A` (`|θ|` rows by `N^g·|D|` columns) gives both Gram
//! matrices of interest: `AᵀA` is the empirical NTK over (sample, output)
//! pairs and `AAᵀ` is the unnormalized FIM of a regression head. Their
//! nonzero spectra coincide, which is the identity [`spectrum_match`]
//! verifies numerically.

use nalgebra::DMatrix;

use crate::fisher::{FimOperator, HeadModel};
use crate::network::{HeadKind, NetworkState};
use crate::{Error, Result};

/// Entry cap for the dense unfolding (`|θ| · N^g · |D|`).
pub const UNFOLDING_ENTRY_CAP: usize = 1 << 26;

/// The unfolding matrix with its column index map.
#[derive(Debug, Clone)]
pub struct Unfolding {
    /// `|θ| × (N^g·|D|)`; column `(i, k)` is the gradient of output `k` of
    /// sample `i` with respect to the hidden-layer parameters.
    pub matrix: DMatrix<f64>,
    pub n_outputs: usize,
    pub n_samples: usize,
}

impl Unfolding {
    /// Column order is sample-major, output-minor.
    pub fn column_index(&self, sample: usize, output: usize) -> usize {
        sample * self.n_outputs + output
    }
}

/// Assembles the unfolding for a dataset (columns are inputs).
pub fn build_unfolding(net: &NetworkState, dataset: &DMatrix<f64>) -> Result<Unfolding> {
    let op = FimOperator::new(net, HeadModel::Glm(HeadKind::GaussianIdentity), dataset)?;
    let n_params = op.dim();
    let n_outputs = net.output_width();
    let n_samples = dataset.ncols();
    let entries = n_params
        .checked_mul(n_outputs * n_samples)
        .ok_or_else(|| Error::SizeCap {
            context: "unfolding entry count overflow".into(),
            requested: usize::MAX,
            cap: UNFOLDING_ENTRY_CAP,
        })?;
    if entries > UNFOLDING_ENTRY_CAP {
        return Err(Error::SizeCap {
            context: "dense unfolding".into(),
            requested: entries,
            cap: UNFOLDING_ENTRY_CAP,
        });
    }
    let mut matrix = DMatrix::zeros(n_params, n_outputs * n_samples);
    // Column (i, k) = J_θ,iᵀ e_k: row k of the sample's dense Jacobian.
    for i in 0..n_samples {
        let j = op.sample_jacobian(i);
        for k in 0..n_outputs {
            matrix.set_column(i * n_outputs + k, &j.row(k).transpose());
        }
    }
    Ok(Unfolding {
        matrix,
        n_outputs,
        n_samples,
    })
}

/// Empirical NTK `Θ̂ = AᵀA`, optionally scaled by `1/|D|` so its spectrum is
/// directly comparable with the dataset-averaged FIM.
pub fn empirical_ntk(unfolding: &Unfolding, normalize: bool) -> DMatrix<f64> {
    let a = &unfolding.matrix;
    let mut theta = a.tr_mul(a);
    if normalize {
        theta /= unfolding.n_samples as f64;
    }
    theta
}

/// Verifies that the nonzero spectra of `AAᵀ` (FIM side) and `AᵀA` (NTK
/// side) coincide; returns the maximum relative discrepancy over matched
/// descending eigenvalue pairs, ignoring eigenvalues below `1e-10·λ_max`.
///
/// The identity is claimed for regression heads (`H_g = I`); a softmax head
/// is rejected.
pub fn spectrum_match(net: &NetworkState, dataset: &DMatrix<f64>) -> Result<f64> {
    if net.head != HeadKind::GaussianIdentity {
        return Err(Error::InvalidInput(
            "the FIM/NTK spectrum identity is only claimed for the Gaussian identity head".into(),
        ));
    }
    let unfolding = build_unfolding(net, dataset)?;
    let a = &unfolding.matrix;
    let fim_side = a * a.transpose();
    let ntk_side = a.tr_mul(a);
    let fim_spec = positive_spectrum(&fim_side);
    let ntk_spec = positive_spectrum(&ntk_side);
    let lambda_max = fim_spec
        .first()
        .copied()
        .unwrap_or(0.0)
        .max(ntk_spec.first().copied().unwrap_or(0.0));
    if lambda_max == 0.0 {
        return Ok(0.0);
    }
    let floor = 1e-10 * lambda_max;
    let fim_kept: Vec<f64> = fim_spec.into_iter().take_while(|&l| l > floor).collect();
    let ntk_kept: Vec<f64> = ntk_spec.into_iter().take_while(|&l| l > floor).collect();
    if fim_kept.len() != ntk_kept.len() {
        return Err(Error::NoSolution(format!(
            "nonzero spectra have different sizes: {} vs {}",
            fim_kept.len(),
            ntk_kept.len()
        )));
    }
    Ok(fim_kept
        .iter()
        .zip(&ntk_kept)
        .map(|(f, n)| (f - n).abs() / n)
        .fold(0.0, f64::max))
}

fn positive_spectrum(m: &DMatrix<f64>) -> Vec<f64> {
    let mut eigs: Vec<f64> = m
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eigs.sort_by(|a, b| b.total_cmp(a));
    eigs
}
