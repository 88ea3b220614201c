//! Feed-forward MLP with analytic forward/backward passes.
//!
//! The network follows the recursion `x^l = φ(h^l)`, `h^l = W^l x^{l-1} + b^l`
//! for hidden layers `l = 1..L`, with a generalized-linear readout
//! `h^g = W^g x^L + b^g`. The architecture is fixed-form, so every Jacobian
//! is an explicit product of the stored derivative diagonals `D^l` and weight
//! matrices rather than a tape. Hidden layers are indexed 1-based throughout
//! (`x^0` is the input); storage vectors are offset by one.

mod serialize;

pub use serialize::{load_network, save_network};

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Hidden-layer activation function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }
}

/// GLM head: link function together with its matched loss.
///
/// Both variants have an output-layer Hessian `H_g` that is symmetric PSD
/// and independent of the label, which is what lets the Fisher information
/// drop the conditional expectation over `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// Identity link with squared-error loss; `H_g = I`.
    GaussianIdentity,
    /// Softmax link with cross-entropy loss; `H_g = diag(p) - p pᵀ`.
    Softmax,
}

/// Training targets: class labels for softmax, or dense targets (columns
/// matching the batch) for the Gaussian head. Labels are also accepted by
/// the Gaussian head and treated as one-hot targets.
pub enum Targets<'a> {
    Labels(&'a [usize]),
    Values(&'a DMatrix<f64>),
}

/// Weights, biases, and head of a fully connected network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    widths: Vec<usize>,
    output_width: usize,
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
    pub readout_weight: DMatrix<f64>,
    pub readout_bias: DVector<f64>,
    pub activation: Activation,
    pub head: HeadKind,
}

impl NetworkState {
    /// Assembles a network, validating that the matrix and vector shapes
    /// chain consistently with `widths` and that every entry is finite.
    pub fn new(
        widths: Vec<usize>,
        weights: Vec<DMatrix<f64>>,
        biases: Vec<DVector<f64>>,
        readout_weight: DMatrix<f64>,
        readout_bias: DVector<f64>,
        activation: Activation,
        head: HeadKind,
    ) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Shape(
                "a network needs an input width and at least one hidden layer".into(),
            ));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::Shape("zero layer width".into()));
        }
        let depth = widths.len() - 1;
        if weights.len() != depth || biases.len() != depth {
            return Err(Error::Shape(format!(
                "expected {depth} hidden weight/bias pairs, got {}/{}",
                weights.len(),
                biases.len()
            )));
        }
        for l in 0..depth {
            if weights[l].nrows() != widths[l + 1] || weights[l].ncols() != widths[l] {
                return Err(Error::Shape(format!(
                    "W^{} must be {}x{}, got {}x{}",
                    l + 1,
                    widths[l + 1],
                    widths[l],
                    weights[l].nrows(),
                    weights[l].ncols()
                )));
            }
            if biases[l].len() != widths[l + 1] {
                return Err(Error::Shape(format!(
                    "b^{} must have length {}, got {}",
                    l + 1,
                    widths[l + 1],
                    biases[l].len()
                )));
            }
        }
        let output_width = readout_weight.nrows();
        if readout_weight.ncols() != widths[depth] || readout_bias.len() != output_width {
            return Err(Error::Shape(format!(
                "readout must be {}x{} with bias length {}",
                output_width, widths[depth], output_width
            )));
        }
        let net = Self {
            widths,
            output_width,
            weights,
            biases,
            readout_weight,
            readout_bias,
            activation,
            head,
        };
        if !net.all_finite() {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(net)
    }

    fn all_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
            && self.readout_weight.iter().all(|v| v.is_finite())
            && self.readout_bias.iter().all(|v| v.is_finite())
    }

    /// Number of hidden layers `L`.
    pub fn depth(&self) -> usize {
        self.widths.len() - 1
    }

    /// Layer widths `N^0..N^L`.
    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    /// Output width `N^g`.
    pub fn output_width(&self) -> usize {
        self.output_width
    }

    /// Total count of hidden-layer parameters (weights and biases of layers
    /// `1..L`; the readout is excluded).
    pub fn hidden_param_count(&self) -> usize {
        (1..=self.depth())
            .map(|l| self.widths[l] * self.widths[l - 1] + self.widths[l])
            .sum()
    }
}

/// Per-sample forward pass record: pre-activations, activations, and the
/// derivative diagonals `D^l = diag(φ'(h^l))` needed by every Jacobian.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: DVector<f64>,
    pub preactivations: Vec<DVector<f64>>,
    pub activations: Vec<DVector<f64>>,
    pub derivative_diagonals: Vec<DVector<f64>>,
    pub head_preactivation: DVector<f64>,
}

impl ForwardTrace {
    /// `x^l`, with `l = 0` denoting the input.
    pub fn activation(&self, l: usize) -> &DVector<f64> {
        if l == 0 {
            &self.input
        } else {
            &self.activations[l - 1]
        }
    }
}

/// Batched forward pass; columns are samples.
#[derive(Debug, Clone)]
pub struct BatchTrace {
    pub input: DMatrix<f64>,
    pub activations: Vec<DMatrix<f64>>,
    pub derivative_diagonals: Vec<DMatrix<f64>>,
    pub head_preactivation: DMatrix<f64>,
}

impl BatchTrace {
    pub fn activation(&self, l: usize) -> &DMatrix<f64> {
        if l == 0 {
            &self.input
        } else {
            &self.activations[l - 1]
        }
    }
}

/// Runs the layer recursion on a single input.
pub fn forward(net: &NetworkState, x0: &DVector<f64>) -> Result<ForwardTrace> {
    if x0.len() != net.input_dim() {
        return Err(Error::Shape(format!(
            "input has dim {}, network expects {}",
            x0.len(),
            net.input_dim()
        )));
    }
    let depth = net.depth();
    let mut preactivations = Vec::with_capacity(depth);
    let mut activations = Vec::with_capacity(depth);
    let mut derivative_diagonals = Vec::with_capacity(depth);
    let mut x = x0.clone();
    for l in 0..depth {
        let h = &net.weights[l] * &x + &net.biases[l];
        let d = h.map(|v| net.activation.derivative(v));
        x = h.map(|v| net.activation.apply(v));
        preactivations.push(h);
        derivative_diagonals.push(d);
        activations.push(x.clone());
    }
    let head_preactivation = &net.readout_weight * &x + &net.readout_bias;
    Ok(ForwardTrace {
        input: x0.clone(),
        preactivations,
        activations,
        derivative_diagonals,
        head_preactivation,
    })
}

/// Runs the layer recursion on a batch (columns are samples).
pub fn forward_batch(net: &NetworkState, x0: &DMatrix<f64>) -> Result<BatchTrace> {
    if x0.nrows() != net.input_dim() {
        return Err(Error::Shape(format!(
            "batch has feature dim {}, network expects {}",
            x0.nrows(),
            net.input_dim()
        )));
    }
    let depth = net.depth();
    let batch = x0.ncols();
    let mut activations = Vec::with_capacity(depth);
    let mut derivative_diagonals = Vec::with_capacity(depth);
    let mut x = x0.clone();
    for l in 0..depth {
        let mut h = &net.weights[l] * &x;
        for c in 0..batch {
            let mut col = h.column_mut(c);
            col += &net.biases[l];
        }
        derivative_diagonals.push(h.map(|v| net.activation.derivative(v)));
        x = h.map(|v| net.activation.apply(v));
        activations.push(x.clone());
    }
    let mut head = &net.readout_weight * &x;
    for c in 0..batch {
        let mut col = head.column_mut(c);
        col += &net.readout_bias;
    }
    Ok(BatchTrace {
        input: x0.clone(),
        activations,
        derivative_diagonals,
        head_preactivation: head,
    })
}

/// Multiplies `D^l W^l` onto `acc` from the left, i.e. `acc ← D^l W^l acc`.
fn push_layer_product(net: &NetworkState, trace: &ForwardTrace, l: usize, acc: DMatrix<f64>) -> DMatrix<f64> {
    let mut m = &net.weights[l - 1] * acc;
    let d = &trace.derivative_diagonals[l - 1];
    for (i, mut row) in m.row_iter_mut().enumerate() {
        row *= d[i];
    }
    m
}

/// Input-output Jacobian `∂x^to/∂x^from = Π_{l=from+1}^{to} D^l W^l`.
///
/// Layer indices refer to activations: 0 is the input, `L` the last hidden
/// layer.
pub fn io_jacobian(
    trace: &ForwardTrace,
    net: &NetworkState,
    from_layer: usize,
    to_layer: usize,
) -> Result<DMatrix<f64>> {
    let depth = net.depth();
    if from_layer >= to_layer || to_layer > depth {
        return Err(Error::InvalidInput(format!(
            "io_jacobian needs 0 <= from < to <= {depth}, got {from_layer}..{to_layer}"
        )));
    }
    let mut acc = DMatrix::identity(net.widths[from_layer], net.widths[from_layer]);
    for l in from_layer + 1..=to_layer {
        acc = push_layer_product(net, trace, l, acc);
    }
    Ok(acc)
}

/// Readout-level input Jacobian `J^{h^g}_{x^0} = W^g Π D^l W^l`.
pub fn head_input_jacobian(trace: &ForwardTrace, net: &NetworkState) -> Result<DMatrix<f64>> {
    let j = io_jacobian(trace, net, 0, net.depth())?;
    Ok(&net.readout_weight * j)
}

/// All `J^{h^g}_{h^α}` for `α = 1..=L` in one backward sweep; entry
/// `α - 1` corresponds to layer `α`.
pub fn head_layer_jacobians(trace: &ForwardTrace, net: &NetworkState) -> Vec<DMatrix<f64>> {
    let depth = net.depth();
    let mut out = vec![DMatrix::zeros(0, 0); depth];
    let mut r = net.readout_weight.clone();
    scale_columns(&mut r, &trace.derivative_diagonals[depth - 1]);
    out[depth - 1] = r.clone();
    for l in (1..depth).rev() {
        let mut next = &r * &net.weights[l];
        scale_columns(&mut next, &trace.derivative_diagonals[l - 1]);
        out[l - 1] = next.clone();
        r = next;
    }
    out
}

/// `J^{h^g}_{h^α} = W^g D^L W^L ⋯ W^{α+1} D^α` for `α ∈ 1..=L`.
pub fn head_layer_jacobian(
    trace: &ForwardTrace,
    net: &NetworkState,
    alpha: usize,
) -> Result<DMatrix<f64>> {
    let depth = net.depth();
    if alpha == 0 || alpha > depth {
        return Err(Error::InvalidInput(format!(
            "head_layer_jacobian needs 1 <= alpha <= {depth}, got {alpha}"
        )));
    }
    // Start from R_L = W^g D^L and fold in W^l D^{l-1} down to α.
    let mut r = net.readout_weight.clone();
    scale_columns(&mut r, &trace.derivative_diagonals[depth - 1]);
    for l in (alpha..depth).rev() {
        let mut next = &r * &net.weights[l];
        scale_columns(&mut next, &trace.derivative_diagonals[l - 1]);
        r = next;
    }
    Ok(r)
}

pub(crate) fn scale_columns(m: &mut DMatrix<f64>, d: &DVector<f64>) {
    for (j, mut col) in m.column_iter_mut().enumerate() {
        col *= d[j];
    }
}

/// Which parameter tensor of a layer a Jacobian block refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    Weights,
    Bias,
}

/// Dense cap for parameter-Jacobian blocks and the dense FIM path.
pub const DENSE_PARAM_CAP: usize = 65_536;

/// Jacobian of the readout pre-activations with respect to one layer's
/// parameter tensor, `J^{h^g}_{vec(W^α)} = J^{h^g}_{h^α} (x^{α-1}ᵀ ⊗ I)` or
/// `J^{h^g}_{b^α} = J^{h^g}_{h^α}`.
///
/// The block is held in factored form; `apply`/`apply_transpose` act
/// matrix-free, and `dense` materializes it only under [`DENSE_PARAM_CAP`].
/// `vec` is column-stacking, matching the column-major layout of the weight
/// matrices.
#[derive(Debug, Clone)]
pub struct ParamJacobianBlock {
    head_layer_jac: DMatrix<f64>,
    input_activation: Option<DVector<f64>>,
    layer_width: usize,
}

impl ParamJacobianBlock {
    /// Number of parameters in the block.
    pub fn param_count(&self) -> usize {
        match &self.input_activation {
            Some(x) => self.layer_width * x.len(),
            None => self.layer_width,
        }
    }

    /// Output dimension `N^g`.
    pub fn output_dim(&self) -> usize {
        self.head_layer_jac.nrows()
    }

    /// `J v` for a parameter-shaped vector `v`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.input_activation {
            Some(x) => {
                // (xᵀ ⊗ I) v = V x with V the un-vec of v.
                let v_mat = DMatrix::from_column_slice(self.layer_width, x.len(), v.as_slice());
                &self.head_layer_jac * (v_mat * x)
            }
            None => &self.head_layer_jac * v,
        }
    }

    /// `Jᵀ w` for an output-shaped vector `w`.
    pub fn apply_transpose(&self, w: &DVector<f64>) -> DVector<f64> {
        let back = self.head_layer_jac.tr_mul(w);
        match &self.input_activation {
            Some(x) => {
                // vec((Rᵀ w) xᵀ) in column-major order.
                let outer = &back * x.transpose();
                DVector::from_column_slice(outer.as_slice())
            }
            None => back,
        }
    }

    /// Materializes the block, erroring above [`DENSE_PARAM_CAP`].
    pub fn dense(&self) -> Result<DMatrix<f64>> {
        let p = self.param_count();
        if p > DENSE_PARAM_CAP {
            return Err(Error::SizeCap {
                context: "dense parameter-Jacobian block".into(),
                requested: p,
                cap: DENSE_PARAM_CAP,
            });
        }
        match &self.input_activation {
            Some(x) => {
                let xt = DMatrix::from_row_slice(1, x.len(), x.as_slice());
                Ok(xt.kronecker(&self.head_layer_jac))
            }
            None => Ok(self.head_layer_jac.clone()),
        }
    }
}

/// Builds the parameter-Jacobian block for layer `alpha`.
pub fn param_jacobian_block(
    trace: &ForwardTrace,
    net: &NetworkState,
    alpha: usize,
    which: ParamKind,
) -> Result<ParamJacobianBlock> {
    let head_layer_jac = head_layer_jacobian(trace, net, alpha)?;
    let input_activation = match which {
        ParamKind::Weights => Some(trace.activation(alpha - 1).clone()),
        ParamKind::Bias => None,
    };
    Ok(ParamJacobianBlock {
        head_layer_jac,
        input_activation,
        layer_width: net.widths[alpha],
    })
}

/// Output-layer Hessian `H_g` of the negative log-likelihood at `h^g`.
///
/// Gaussian identity head: the identity matrix. Softmax: `diag(p) - p pᵀ`
/// with `p = softmax(h^g)`; symmetric PSD with rows summing to zero.
pub fn head_hessian(head: HeadKind, hg: &DVector<f64>) -> DMatrix<f64> {
    match head {
        HeadKind::GaussianIdentity => DMatrix::identity(hg.len(), hg.len()),
        HeadKind::Softmax => {
            let p = softmax(hg);
            let mut h = DMatrix::from_fn(p.len(), p.len(), |i, j| -p[i] * p[j]);
            for i in 0..p.len() {
                h[(i, i)] += p[i];
            }
            h
        }
    }
}

pub(crate) fn softmax(hg: &DVector<f64>) -> DVector<f64> {
    let max = hg.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut p = hg.map(|v| (v - max).exp());
    let z: f64 = p.iter().sum();
    p /= z;
    p
}

fn log_sum_exp(col: nalgebra::DVectorView<f64>) -> f64 {
    let max = col.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    max + col.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Gradient of the mean batch loss with respect to every parameter,
/// readout included.
#[derive(Debug, Clone)]
pub struct ParamGradient {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
    pub readout_weight: DMatrix<f64>,
    pub readout_bias: DVector<f64>,
}

/// Mean loss over the batch and its parameter gradient via backpropagation.
///
/// The Gaussian head uses `½‖h^g - y‖²` per sample (so its output-layer
/// Hessian is exactly `H_g = I`); the softmax head uses cross-entropy.
pub fn loss_and_grad(
    net: &NetworkState,
    x0: &DMatrix<f64>,
    targets: &Targets,
) -> Result<(f64, ParamGradient)> {
    let batch = x0.ncols();
    if batch == 0 {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let trace = forward_batch(net, x0)?;
    let k = net.output_width();
    let hg = &trace.head_preactivation;

    // Loss and the head-level residual Δ^g = ∂(mean loss)/∂h^g.
    let mut loss = 0.0;
    let mut delta = DMatrix::zeros(k, batch);
    match (net.head, targets) {
        (HeadKind::Softmax, Targets::Labels(labels)) => {
            if labels.len() != batch {
                return Err(Error::Shape("label count != batch size".into()));
            }
            for (c, &y) in labels.iter().enumerate() {
                if y >= k {
                    return Err(Error::InvalidInput(format!(
                        "label {y} out of range for {k} classes"
                    )));
                }
                let col = hg.column(c);
                let lse = log_sum_exp(col);
                loss += lse - col[y];
                for i in 0..k {
                    delta[(i, c)] = (col[i] - lse).exp();
                }
                delta[(y, c)] -= 1.0;
            }
        }
        (HeadKind::Softmax, Targets::Values(_)) => {
            return Err(Error::InvalidInput(
                "softmax head requires class labels".into(),
            ));
        }
        (HeadKind::GaussianIdentity, Targets::Values(y)) => {
            if y.nrows() != k || y.ncols() != batch {
                return Err(Error::Shape("target shape != head output shape".into()));
            }
            delta = hg - *y;
            loss = 0.5 * delta.norm_squared();
        }
        (HeadKind::GaussianIdentity, Targets::Labels(labels)) => {
            if labels.len() != batch {
                return Err(Error::Shape("label count != batch size".into()));
            }
            delta = hg.clone();
            for (c, &y) in labels.iter().enumerate() {
                if y >= k {
                    return Err(Error::InvalidInput(format!(
                        "label {y} out of range for {k} one-hot targets"
                    )));
                }
                delta[(y, c)] -= 1.0;
            }
            loss = 0.5 * delta.norm_squared();
        }
    }
    loss /= batch as f64;
    delta /= batch as f64;

    // Backward sweep.
    let depth = net.depth();
    let x_last = trace.activation(depth);
    let readout_weight_grad = &delta * x_last.transpose();
    let readout_bias_grad = sum_columns(&delta);
    let mut weights = vec![DMatrix::zeros(0, 0); depth];
    let mut biases = vec![DVector::zeros(0); depth];
    let mut back = net.readout_weight.tr_mul(&delta);
    for l in (1..=depth).rev() {
        back.component_mul_assign(&trace.derivative_diagonals[l - 1]);
        weights[l - 1] = &back * trace.activation(l - 1).transpose();
        biases[l - 1] = sum_columns(&back);
        if l > 1 {
            back = net.weights[l - 1].tr_mul(&back);
        }
    }
    Ok((
        loss,
        ParamGradient {
            weights,
            biases,
            readout_weight: readout_weight_grad,
            readout_bias: readout_bias_grad,
        },
    ))
}

fn sum_columns(m: &DMatrix<f64>) -> DVector<f64> {
    let mut v = DVector::zeros(m.nrows());
    for c in m.column_iter() {
        v += c;
    }
    v
}

#[cfg(test)]
mod tests;
