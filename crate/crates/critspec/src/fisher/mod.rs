//! Empirical Fisher information over the hidden-layer parameters.
//!
//! The FIM blocks are `Ḡ_{a,b} = J^{h^g}_a ᵀ H_g J^{h^g}_b` averaged over the
//! dataset, with `θ` ordered layer-major: `vec(W^1), b^1, ..., vec(W^L), b^L`
//! (`vec` is column-stacking; the readout is not part of `θ`). The assembled
//! matrix is available densely under a size cap, and as a matrix-free
//! symmetric operator otherwise; both paths share per-sample caches of the
//! layer inputs `x^{α-1}` and the head-layer Jacobians `J^{h^g}_{h^α}`.

mod bounds;
mod drift;
mod gershgorin;
mod hg_mc;

pub use bounds::{
    mean_bound_inputs, measure_bound_inputs, sigma_max_bounds, theorem_bound, BoundBranch,
    SigmaMaxBoundInputs, SigmaMaxTable,
};
pub use drift::{fim_drift, fim_lambda_min_dense, operator_drift_norm, DriftReport, FimSnapshot};
pub use gershgorin::{
    block_gershgorin, block_spectra_dense, BlockPartition, BlockSpectra, GershgorinReport,
};
pub use hg_mc::{hg_lambda_mc, HgMcPoint, HgMcReport};

use nalgebra::{DMatrix, DVector};

use crate::network::{
    forward, head_hessian, head_layer_jacobians, HeadKind, NetworkState, ParamKind,
    DENSE_PARAM_CAP,
};
use crate::numerics::{power_iteration_max_eig, RngStream};
use crate::{Error, Result};

/// Output-layer model used when evaluating the FIM. `Zero` is a degenerate
/// stub (`H_g = 0`) for exercising the operator plumbing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadModel {
    Glm(HeadKind),
    Zero,
}

impl From<HeadKind> for HeadModel {
    fn from(kind: HeadKind) -> Self {
        HeadModel::Glm(kind)
    }
}

/// Identifies one parameter tensor of the hidden stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockLabel {
    /// 1-based hidden layer index.
    pub layer: usize,
    pub kind: ParamKind,
}

impl BlockLabel {
    pub fn weights(layer: usize) -> Self {
        Self {
            layer,
            kind: ParamKind::Weights,
        }
    }

    pub fn bias(layer: usize) -> Self {
        Self {
            layer,
            kind: ParamKind::Bias,
        }
    }
}

impl std::fmt::Display for BlockLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            ParamKind::Weights => write!(f, "W{}", self.layer),
            ParamKind::Bias => write!(f, "b{}", self.layer),
        }
    }
}

/// Offsets of the layer-major parameter vector.
#[derive(Debug, Clone)]
pub struct ParamLayout {
    widths: Vec<usize>,
    weight_offsets: Vec<usize>,
    bias_offsets: Vec<usize>,
    total: usize,
}

impl ParamLayout {
    pub fn from_widths(widths: &[usize]) -> Self {
        let depth = widths.len() - 1;
        let mut weight_offsets = Vec::with_capacity(depth);
        let mut bias_offsets = Vec::with_capacity(depth);
        let mut cursor = 0usize;
        for l in 1..=depth {
            weight_offsets.push(cursor);
            cursor += widths[l] * widths[l - 1];
            bias_offsets.push(cursor);
            cursor += widths[l];
        }
        Self {
            widths: widths.to_vec(),
            weight_offsets,
            bias_offsets,
            total: cursor,
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn depth(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn block_len(&self, label: BlockLabel) -> usize {
        match label.kind {
            ParamKind::Weights => self.widths[label.layer] * self.widths[label.layer - 1],
            ParamKind::Bias => self.widths[label.layer],
        }
    }

    pub fn block_range(&self, label: BlockLabel) -> std::ops::Range<usize> {
        let start = match label.kind {
            ParamKind::Weights => self.weight_offsets[label.layer - 1],
            ParamKind::Bias => self.bias_offsets[label.layer - 1],
        };
        start..start + self.block_len(label)
    }

    /// All block labels in parameter order.
    pub fn labels(&self) -> Vec<BlockLabel> {
        (1..=self.depth())
            .flat_map(|l| [BlockLabel::weights(l), BlockLabel::bias(l)])
            .collect()
    }

    /// The induced block partition of the parameter indices.
    pub fn partition(&self) -> BlockPartition {
        let labels = self.labels();
        let mut boundaries = vec![0usize];
        for label in &labels {
            boundaries.push(boundaries.last().unwrap() + self.block_len(*label));
        }
        BlockPartition::new(boundaries, labels.iter().map(|l| l.to_string()).collect())
            .expect("layout partition is monotone")
    }
}

enum HessianCache {
    Identity,
    Zero,
    PerSample(Vec<DMatrix<f64>>),
}

/// Matrix-free empirical FIM `(1/|D|) Σ_i J_θ,iᵀ H_g,i J_θ,i` with cached
/// per-sample Jacobian factors.
pub struct FimOperator {
    layout: ParamLayout,
    n_outputs: usize,
    n_samples: usize,
    /// `X^{α-1}` per layer: `widths[α-1] × |D|`.
    layer_inputs: Vec<DMatrix<f64>>,
    /// `J^{h^g}_{h^α}` per layer per sample.
    head_jacs: Vec<Vec<DMatrix<f64>>>,
    hessians: HessianCache,
}

impl FimOperator {
    /// Builds the operator from a dataset whose columns are inputs.
    pub fn new(net: &NetworkState, head: HeadModel, dataset: &DMatrix<f64>) -> Result<Self> {
        let n_samples = dataset.ncols();
        if n_samples == 0 {
            return Err(Error::InvalidInput("empty dataset for the FIM".into()));
        }
        let depth = net.depth();
        let layout = ParamLayout::from_widths(net.widths());
        let mut layer_inputs: Vec<DMatrix<f64>> = (0..depth)
            .map(|l| DMatrix::zeros(net.widths()[l], n_samples))
            .collect();
        let mut head_jacs: Vec<Vec<DMatrix<f64>>> = vec![Vec::with_capacity(n_samples); depth];
        let mut hessians = Vec::new();
        for i in 0..n_samples {
            let x0 = dataset.column(i).into_owned();
            let trace = forward(net, &x0)?;
            for l in 0..depth {
                layer_inputs[l].set_column(i, trace.activation(l));
            }
            for (l, jac) in head_layer_jacobians(&trace, net).into_iter().enumerate() {
                head_jacs[l].push(jac);
            }
            if let HeadModel::Glm(HeadKind::Softmax) = head {
                hessians.push(head_hessian(HeadKind::Softmax, &trace.head_preactivation));
            }
        }
        let hessians = match head {
            HeadModel::Glm(HeadKind::GaussianIdentity) => HessianCache::Identity,
            HeadModel::Glm(HeadKind::Softmax) => HessianCache::PerSample(hessians),
            HeadModel::Zero => HessianCache::Zero,
        };
        Ok(Self {
            layout,
            n_outputs: net.output_width(),
            n_samples,
            layer_inputs,
            head_jacs,
            hessians,
        })
    }

    pub fn dim(&self) -> usize {
        self.layout.total()
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Per-sample `J_θ v` for one block's slice of `v`, accumulated into `t`.
    fn forward_block(&self, label: BlockLabel, v_slice: &[f64], t: &mut DMatrix<f64>) {
        let l = label.layer;
        let jacs = &self.head_jacs[l - 1];
        match label.kind {
            ParamKind::Weights => {
                let rows = self.layout.widths[l];
                let cols = self.layout.widths[l - 1];
                let v_mat = DMatrix::from_column_slice(rows, cols, v_slice);
                // U = V X^{α-1}: one GEMM covers every sample.
                let u = &v_mat * &self.layer_inputs[l - 1];
                for i in 0..self.n_samples {
                    let mut t_col = t.column_mut(i);
                    t_col.gemv(1.0, &jacs[i], &u.column(i), 1.0);
                }
            }
            ParamKind::Bias => {
                let v_vec = DVector::from_column_slice(v_slice);
                for i in 0..self.n_samples {
                    let mut t_col = t.column_mut(i);
                    t_col.gemv(1.0, &jacs[i], &v_vec, 1.0);
                }
            }
        }
    }

    /// Per-sample `J_θᵀ s` for one block, summed over samples.
    fn backward_block(&self, label: BlockLabel, s: &DMatrix<f64>, out: &mut [f64]) {
        let l = label.layer;
        let jacs = &self.head_jacs[l - 1];
        let rows = self.layout.widths[l];
        // G[:, i] = J^{h^g}_{h^α}ᵀ s_i.
        let mut g = DMatrix::zeros(rows, self.n_samples);
        for i in 0..self.n_samples {
            let mut g_col = g.column_mut(i);
            g_col.gemv_tr(1.0, &jacs[i], &s.column(i), 0.0);
        }
        match label.kind {
            ParamKind::Weights => {
                // Σ_i g_i x_iᵀ = G Xᵀ, flattened column-major.
                let block = &g * self.layer_inputs[l - 1].transpose();
                out.copy_from_slice(block.as_slice());
            }
            ParamKind::Bias => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = g.row(i).sum();
                }
            }
        }
    }

    fn apply_hessians(&self, t: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.hessians {
            HessianCache::Identity => t.clone(),
            HessianCache::Zero => DMatrix::zeros(t.nrows(), t.ncols()),
            HessianCache::PerSample(hs) => {
                let mut s = DMatrix::zeros(t.nrows(), t.ncols());
                for i in 0..self.n_samples {
                    let mut s_col = s.column_mut(i);
                    s_col.gemv(1.0, &hs[i], &t.column(i), 0.0);
                }
                s
            }
        }
    }

    /// Full FIM matvec `(1/|D|) Σ J_θᵀ (H_g (J_θ v))`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        assert_eq!(v.len(), self.dim(), "FIM operand dimension");
        let mut t = DMatrix::zeros(self.n_outputs, self.n_samples);
        for label in self.layout.labels() {
            let range = self.layout.block_range(label);
            self.forward_block(label, &v.as_slice()[range], &mut t);
        }
        let s = self.apply_hessians(&t);
        let mut out = DVector::zeros(self.dim());
        for label in self.layout.labels() {
            let range = self.layout.block_range(label);
            self.backward_block(label, &s, &mut out.as_mut_slice()[range]);
        }
        out / self.n_samples as f64
    }

    /// Matvec of a single block `Ḡ_{a,b} v`.
    pub fn apply_block(&self, a: BlockLabel, b: BlockLabel, v: &DVector<f64>) -> DVector<f64> {
        assert_eq!(v.len(), self.layout.block_len(b), "block operand dimension");
        let mut t = DMatrix::zeros(self.n_outputs, self.n_samples);
        self.forward_block(b, v.as_slice(), &mut t);
        let s = self.apply_hessians(&t);
        let mut out = DVector::zeros(self.layout.block_len(a));
        self.backward_block(a, &s, out.as_mut_slice());
        out / self.n_samples as f64
    }

    /// Largest eigenvalue by power iteration on the matrix-free operator.
    pub fn lambda_max(&self, tol: f64, max_iter: usize, stream: RngStream) -> Result<f64> {
        power_iteration_max_eig(|v| self.apply(v), self.dim(), tol, max_iter, stream)
    }

    /// Spectral norm of block `(a, b)` via power iteration on `BᵀB`
    /// (`Bᵀ = Ḡ_{b,a}` since `H_g` is symmetric).
    pub fn block_sigma_max(
        &self,
        a: BlockLabel,
        b: BlockLabel,
        tol: f64,
        max_iter: usize,
        stream: RngStream,
    ) -> Result<f64> {
        let gram = power_iteration_max_eig(
            |v| self.apply_block(b, a, &self.apply_block(a, b, v)),
            self.layout.block_len(b),
            tol,
            max_iter,
            stream,
        )?;
        Ok(gram.max(0.0).sqrt())
    }

    /// Dense single block `Ḡ_{a,b}`, capped at [`DENSE_PARAM_CAP`] per side.
    pub fn dense_block(&self, a: BlockLabel, b: BlockLabel) -> Result<DMatrix<f64>> {
        for label in [a, b] {
            let len = self.layout.block_len(label);
            if len > DENSE_PARAM_CAP {
                return Err(Error::SizeCap {
                    context: format!("dense FIM block {label}"),
                    requested: len,
                    cap: DENSE_PARAM_CAP,
                });
            }
        }
        let rows = self.layout.block_len(a);
        let cols = self.layout.block_len(b);
        let mut block = DMatrix::zeros(rows, cols);
        let mut basis = DVector::zeros(cols);
        for j in 0..cols {
            basis[j] = 1.0;
            block.set_column(j, &self.apply_block(a, b, &basis));
            basis[j] = 0.0;
        }
        Ok(block)
    }

    /// Dense FIM over every hidden parameter, capped at [`DENSE_PARAM_CAP`]
    /// total. Accumulated per sample as `M_iᵀ M_i` with `M_i = H^{1/2} J_i`,
    /// so the result is PSD by construction, then symmetrized exactly.
    pub fn dense(&self) -> Result<DMatrix<f64>> {
        let p = self.dim();
        if p > DENSE_PARAM_CAP {
            return Err(Error::SizeCap {
                context: "dense FIM (use the matrix-free operator instead)".into(),
                requested: p,
                cap: DENSE_PARAM_CAP,
            });
        }
        let mut g = DMatrix::zeros(p, p);
        for i in 0..self.n_samples {
            let j_dense = self.sample_jacobian(i);
            let m = match &self.hessians {
                HessianCache::Identity => j_dense,
                HessianCache::Zero => continue,
                HessianCache::PerSample(hs) => psd_sqrt(&hs[i]) * j_dense,
            };
            g.gemm_tr(1.0, &m, &m, 1.0);
        }
        g /= self.n_samples as f64;
        let sym = 0.5 * (&g + g.transpose());
        Ok(sym)
    }

    /// Dense `J_θ` for one sample (`N^g × |θ|`).
    pub fn sample_jacobian(&self, i: usize) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.n_outputs, self.dim());
        for label in self.layout.labels() {
            let range = self.layout.block_range(label);
            let r = &self.head_jacs[label.layer - 1][i];
            match label.kind {
                ParamKind::Weights => {
                    let x = self.layer_inputs[label.layer - 1].column(i);
                    let mut cursor = range.start;
                    for xj in x.iter() {
                        for c in 0..r.ncols() {
                            for row in 0..r.nrows() {
                                j[(row, cursor)] = xj * r[(row, c)];
                            }
                            cursor += 1;
                        }
                    }
                }
                ParamKind::Bias => {
                    j.view_mut((0, range.start), (self.n_outputs, r.ncols()))
                        .copy_from(r);
                }
            }
        }
        j
    }
}

/// Symmetric PSD square root via eigendecomposition, clamping negative
/// rounding noise to zero.
pub(crate) fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let mut vectors = eig.eigenvectors.clone();
    for (j, mut col) in vectors.column_iter_mut().enumerate() {
        col *= eig.eigenvalues[j].max(0.0).sqrt();
    }
    &vectors * eig.eigenvectors.transpose()
}

/// Dense empirical FIM over all hidden-layer parameters.
pub fn empirical_fim_dense(
    net: &NetworkState,
    head: HeadModel,
    dataset: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    FimOperator::new(net, head, dataset)?.dense()
}

/// Largest FIM eigenvalue via matrix-free power iteration.
pub fn fim_lambda_max(
    net: &NetworkState,
    head: HeadModel,
    dataset: &DMatrix<f64>,
    tol: f64,
    stream: RngStream,
) -> Result<f64> {
    FimOperator::new(net, head, dataset)?.lambda_max(tol, 50_000, stream)
}

/// One dense FIM block `Ḡ_{a,b}` averaged over the dataset.
pub fn fim_block(
    net: &NetworkState,
    head: HeadModel,
    dataset: &DMatrix<f64>,
    a: BlockLabel,
    b: BlockLabel,
) -> Result<DMatrix<f64>> {
    FimOperator::new(net, head, dataset)?.dense_block(a, b)
}
