//! Block Gershgorin localization of the largest eigenvalue.
//!
//! For a symmetric matrix partitioned by an index set
//! `π = {p_0 = 0 < p_1 < … < p_m = N}` with self-adjoint diagonal blocks,
//! every eigenvalue lies in a union of disks centered at the diagonal-block
//! eigenvalues with radius the sum of off-diagonal spectral norms along the
//! block row. The largest eigenvalue therefore satisfies
//! `λ_max ≤ max_i [ λ_max(A_ii) + Σ_{j≠i} σ_max(A_ij) ]`.

use nalgebra::DMatrix;

use crate::numerics::spectral_summary;
use crate::{Error, Result};

/// Strictly increasing block boundaries with per-block tags.
#[derive(Debug, Clone)]
pub struct BlockPartition {
    boundaries: Vec<usize>,
    labels: Vec<String>,
}

impl BlockPartition {
    /// `boundaries` must start at 0, increase strictly, and end at the
    /// total dimension. Labels are per block; pass an empty vector to get
    /// positional labels.
    pub fn new(boundaries: Vec<usize>, labels: Vec<String>) -> Result<Self> {
        if boundaries.len() < 2 || boundaries[0] != 0 {
            return Err(Error::InvalidInput(
                "partition must start at 0 and contain at least one block".into(),
            ));
        }
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "partition boundaries must increase strictly".into(),
            ));
        }
        let n_blocks = boundaries.len() - 1;
        let labels = if labels.is_empty() {
            (0..n_blocks).map(|i| format!("block{i}")).collect()
        } else if labels.len() == n_blocks {
            labels
        } else {
            return Err(Error::InvalidInput(format!(
                "{} labels for {} blocks",
                labels.len(),
                n_blocks
            )));
        };
        Ok(Self { boundaries, labels })
    }

    pub fn n_blocks(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn total_dim(&self) -> usize {
        *self.boundaries.last().unwrap()
    }

    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.boundaries[i]..self.boundaries[i + 1]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Spectral data of a partitioned symmetric matrix: largest eigenvalue of
/// each diagonal block and spectral norms of every off-diagonal pair.
#[derive(Debug, Clone)]
pub struct BlockSpectra {
    pub diag_lambda_max: Vec<f64>,
    pub offdiag_sigma_max: DMatrix<f64>,
}

/// Measures [`BlockSpectra`] from a dense symmetric matrix.
pub fn block_spectra_dense(a: &DMatrix<f64>, partition: &BlockPartition) -> Result<BlockSpectra> {
    if a.nrows() != a.ncols() || a.nrows() != partition.total_dim() {
        return Err(Error::Shape(format!(
            "matrix is {}x{} but partition covers {}",
            a.nrows(),
            a.ncols(),
            partition.total_dim()
        )));
    }
    let asym = (a - a.transpose()).norm();
    if asym > 1e-10 * a.norm().max(1.0) {
        return Err(Error::InvalidInput(format!(
            "matrix is not symmetric (asymmetry {asym:.3e})"
        )));
    }
    let m = partition.n_blocks();
    let mut diag_lambda_max = Vec::with_capacity(m);
    let mut offdiag_sigma_max = DMatrix::zeros(m, m);
    for i in 0..m {
        let ri = partition.range(i);
        let block = a.view((ri.start, ri.start), (ri.len(), ri.len())).into_owned();
        let eig = block.symmetric_eigen();
        diag_lambda_max.push(eig.eigenvalues.iter().fold(f64::NEG_INFINITY, |acc, &x| acc.max(x)));
        for j in i + 1..m {
            let rj = partition.range(j);
            let off = a.view((ri.start, rj.start), (ri.len(), rj.len())).into_owned();
            let sigma = spectral_summary(&off)?.sigma_max;
            offdiag_sigma_max[(i, j)] = sigma;
            offdiag_sigma_max[(j, i)] = sigma;
        }
    }
    Ok(BlockSpectra {
        diag_lambda_max,
        offdiag_sigma_max,
    })
}

/// Disk data and the final bound.
#[derive(Debug, Clone, serde::Serialize)]
pub struct GershgorinReport {
    pub per_block_lambda_max: Vec<f64>,
    pub per_pair_sigma_max: Vec<Vec<f64>>,
    pub disk_centers: Vec<f64>,
    pub disk_radia: Vec<f64>,
    pub bound: f64,
}

/// Computes the block-Gershgorin upper bound on `λ_max` from per-block
/// spectral data.
pub fn block_gershgorin(
    spectra: &BlockSpectra,
    partition: &BlockPartition,
) -> Result<GershgorinReport> {
    let m = partition.n_blocks();
    if spectra.diag_lambda_max.len() != m
        || spectra.offdiag_sigma_max.nrows() != m
        || spectra.offdiag_sigma_max.ncols() != m
    {
        return Err(Error::Shape(format!(
            "spectral grid does not match the {m}-block partition"
        )));
    }
    if spectra
        .offdiag_sigma_max
        .iter()
        .any(|&s| !(s >= 0.0) || !s.is_finite())
    {
        return Err(Error::InvalidInput(
            "off-diagonal spectral norms must be finite and nonnegative".into(),
        ));
    }
    let mut disk_centers = Vec::with_capacity(m);
    let mut disk_radia = Vec::with_capacity(m);
    let mut bound = f64::NEG_INFINITY;
    for i in 0..m {
        let center = spectra.diag_lambda_max[i];
        let radius: f64 = (0..m)
            .filter(|&j| j != i)
            .map(|j| spectra.offdiag_sigma_max[(i, j)])
            .sum();
        disk_centers.push(center);
        disk_radia.push(radius);
        bound = bound.max(center + radius);
    }
    let per_pair_sigma_max = (0..m)
        .map(|i| (0..m).map(|j| spectra.offdiag_sigma_max[(i, j)]).collect())
        .collect();
    Ok(GershgorinReport {
        per_block_lambda_max: spectra.diag_lambda_max.clone(),
        per_pair_sigma_max,
        disk_centers,
        disk_radia,
        bound,
    })
}
