//! Riemannian optimization over Stiefel and Oblique manifolds.
//!
//! Stiefel points are `n × p` matrices with orthonormal columns (`n ≥ p`);
//! Oblique points have unit-norm columns, which makes the manifold a product
//! of spheres and the constraint equivalent to weight normalization. Both
//! carry the metric inherited from the Euclidean embedding.
//!
//! The Stiefel side uses the QR retraction (`qf` with the `diag(R) > 0`
//! convention) and projection-based vector transport; the Oblique side uses
//! the closed-form sphere exponential map and parallel transport per column.
//! Constrained weights optionally carry an isotropic scale `s = exp(log_scale)`
//! so the effective weight `s·W` can leave the compact manifold while the
//! direction stays on it.

use nalgebra::{DMatrix, DVector};

use crate::network::NetworkState;
use crate::{Error, Result};

/// Feasibility tolerance for Stiefel points (`‖WᵀW - I‖_F`).
pub const STIEFEL_TOL: f64 = 1e-9;
/// Feasibility tolerance for Oblique column norms.
pub const OBLIQUE_TOL: f64 = 1e-12;

/// Matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelPoint(DMatrix<f64>);

impl StiefelPoint {
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        if w.nrows() < w.ncols() {
            return Err(Error::Shape(format!(
                "Stiefel point needs n >= p, got {}x{}",
                w.nrows(),
                w.ncols()
            )));
        }
        let residual = stiefel_residual(&w);
        if residual >= STIEFEL_TOL {
            return Err(Error::InvalidInput(format!(
                "matrix is not orthonormal: ||W'W - I|| = {residual:.3e}"
            )));
        }
        Ok(Self(w))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Matrix with unit-norm columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ObliquePoint(DMatrix<f64>);

impl ObliquePoint {
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        let deviation = oblique_residual(&w);
        if deviation >= OBLIQUE_TOL {
            return Err(Error::InvalidInput(format!(
                "matrix does not have unit columns: max deviation {deviation:.3e}"
            )));
        }
        Ok(Self(w))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// `‖WᵀW - I‖_F`.
pub fn stiefel_residual(w: &DMatrix<f64>) -> f64 {
    let p = w.ncols();
    (w.tr_mul(w) - DMatrix::identity(p, p)).norm()
}

/// Largest deviation of a column norm from 1.
pub fn oblique_residual(w: &DMatrix<f64>) -> f64 {
    w.column_iter()
        .map(|c| (c.norm() - 1.0).abs())
        .fold(0.0, f64::max)
}

fn check_same_shape(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "{what}: {}x{} vs {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(())
}

/// Projects an ambient gradient onto the Stiefel tangent space at `w`:
/// `ξ = G - W sym(WᵀG)`, equivalently `(I - WWᵀ)G + ½W(WᵀG - GᵀW)`.
pub fn stiefel_project(w: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_same_shape(w, g, "stiefel_project")?;
    let wtg = w.tr_mul(g);
    let sym = 0.5 * (&wtg + wtg.transpose());
    Ok(g - w * sym)
}

/// QR retraction `qf(W + ξ)` with the `diag(R) > 0` sign convention, which
/// makes the map deterministic and satisfies `Rt_W(0) = W` exactly up to
/// roundoff. Errors when `W + ξ` is rank-deficient.
pub fn stiefel_retract(w: &DMatrix<f64>, xi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_same_shape(w, xi, "stiefel_retract")?;
    let target = w + xi;
    let scale = target.norm();
    let qr = target.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..q.ncols() {
        let d = r[(j, j)];
        if d.abs() <= 1e-13 * scale.max(1.0) {
            return Err(Error::NoSolution(format!(
                "W + xi is rank-deficient at column {j} (|R_jj| = {:.3e})",
                d.abs()
            )));
        }
        if d < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q)
}

/// Transports the tangent `ξ` along the retraction of `ζ`: projection onto
/// the tangent space at `Y = Rt_W(ζ)`.
pub fn stiefel_transport(
    w: &DMatrix<f64>,
    zeta: &DMatrix<f64>,
    xi: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let y = stiefel_retract(w, zeta)?;
    stiefel_project(&y, xi)
}

/// Projects an ambient gradient onto the Oblique tangent space per column:
/// `ξ_i = g_i - (w_iᵀ g_i) w_i`.
pub fn oblique_project(w: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_same_shape(w, g, "oblique_project")?;
    let mut xi = g.clone();
    for j in 0..w.ncols() {
        let wc = w.column(j);
        let dot = wc.dot(&g.column(j));
        let mut col = xi.column_mut(j);
        col.axpy(-dot, &wc, 1.0);
    }
    Ok(xi)
}

/// Sphere exponential map per column:
/// `w' = w cos‖ξ‖ + (ξ/‖ξ‖) sin‖ξ‖`, with the second-order Taylor form
/// below `‖ξ‖ = 1e-9`. Columns are renormalized afterwards so the unit
/// constraint holds exactly.
pub fn oblique_exp(w: &DMatrix<f64>, xi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_same_shape(w, xi, "oblique_exp")?;
    let mut out = DMatrix::zeros(w.nrows(), w.ncols());
    for j in 0..w.ncols() {
        let wc = w.column(j);
        let xc = xi.column(j);
        let theta = xc.norm();
        let mut col = out.column_mut(j);
        if theta < 1e-9 {
            col.copy_from(&(wc * (1.0 - 0.5 * theta * theta) + xc));
        } else {
            col.copy_from(&(wc * theta.cos() + xc * (theta.sin() / theta)));
        }
        let n = col.norm();
        col /= n;
    }
    Ok(out)
}

/// Sphere parallel transport per column: with `u = ζ/‖ζ‖`,
/// `τ = ξ - (uᵀξ)[(1 - cos‖ζ‖) u + sin‖ζ‖ w]`. Norm- and
/// tangency-preserving; columns with `ζ = 0` pass through unchanged.
pub fn oblique_transport(
    w: &DMatrix<f64>,
    zeta: &DMatrix<f64>,
    xi: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_same_shape(w, zeta, "oblique_transport")?;
    check_same_shape(w, xi, "oblique_transport")?;
    let mut out = xi.clone();
    for j in 0..w.ncols() {
        let zc = zeta.column(j);
        let theta = zc.norm();
        if theta == 0.0 {
            continue;
        }
        let u = zc / theta;
        let coeff = u.dot(&xi.column(j));
        if coeff == 0.0 {
            continue;
        }
        let wc = w.column(j);
        let mut col = out.column_mut(j);
        col.axpy(-coeff * (1.0 - theta.cos()), &u, 1.0);
        col.axpy(-coeff * theta.sin(), &wc, 1.0);
    }
    Ok(out)
}

/// Orthogonality penalty `ρ(λ, W) = (λ/2)‖WᵀW - I‖_F²` and its ambient
/// gradient `2λ W(WᵀW - I)`.
pub fn ortho_penalty(w: &DMatrix<f64>, lambda: f64) -> (f64, DMatrix<f64>) {
    let p = w.ncols();
    let gram_minus_i = w.tr_mul(w) - DMatrix::identity(p, p);
    let value = 0.5 * lambda * gram_minus_i.norm_squared();
    let grad = 2.0 * lambda * w * gram_minus_i;
    (value, grad)
}

/// Which manifold constrains a weight matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldKind {
    Stiefel,
    Oblique,
}

/// A constrained weight: a manifold point plus an isotropic log-scale, so
/// the effective weight is `exp(log_scale) · point`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledManifoldParam {
    pub kind: ManifoldKind,
    point: DMatrix<f64>,
    pub log_scale: f64,
}

impl ScaledManifoldParam {
    pub fn new(kind: ManifoldKind, point: DMatrix<f64>, log_scale: f64) -> Result<Self> {
        match kind {
            ManifoldKind::Stiefel => {
                StiefelPoint::new(point.clone())?;
            }
            ManifoldKind::Oblique => {
                ObliquePoint::new(point.clone())?;
            }
        }
        Ok(Self {
            kind,
            point,
            log_scale,
        })
    }

    /// Decomposes an effective weight `W = s·M` into scale and point,
    /// using the mean column norm as `s`. Errors when the columns do not
    /// share a common norm or the direction violates the manifold
    /// constraint (i.e. the weight did not come from a scaled orthogonal
    /// sample).
    pub fn from_effective(kind: ManifoldKind, w: &DMatrix<f64>) -> Result<Self> {
        let norms: Vec<f64> = w.column_iter().map(|c| c.norm()).collect();
        let s = norms.iter().sum::<f64>() / norms.len() as f64;
        if !(s > 0.0) {
            return Err(Error::InvalidInput(
                "cannot scale-decompose a zero weight matrix".into(),
            ));
        }
        if norms.iter().any(|&n| (n - s).abs() > 1e-8 * s.max(1.0)) {
            return Err(Error::InvalidInput(
                "weight columns have unequal norms; manifold training requires a scaled \
                 orthogonal initialization"
                    .into(),
            ));
        }
        Self::new(kind, w / s, s.ln())
    }

    pub fn point(&self) -> &DMatrix<f64> {
        &self.point
    }

    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    pub fn effective_weight(&self) -> DMatrix<f64> {
        &self.point * self.scale()
    }

    /// Chain rule from a gradient with respect to the effective weight
    /// `s·M` to (gradient wrt the point `M`, gradient wrt `log_scale`).
    pub fn split_gradient(&self, grad_effective: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
        check_same_shape(&self.point, grad_effective, "split_gradient")?;
        let s = self.scale();
        let grad_point = grad_effective * s;
        // ∂f/∂log s = s · ⟨G_eff, M⟩.
        let grad_log_scale = s * grad_effective.dot(&self.point);
        Ok((grad_point, grad_log_scale))
    }

    fn project(&self, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self.kind {
            ManifoldKind::Stiefel => stiefel_project(&self.point, g),
            ManifoldKind::Oblique => oblique_project(&self.point, g),
        }
    }

    fn step_along(&mut self, direction: &DMatrix<f64>) -> Result<()> {
        self.point = match self.kind {
            ManifoldKind::Stiefel => stiefel_retract(&self.point, direction)?,
            ManifoldKind::Oblique => oblique_exp(&self.point, direction)?,
        };
        Ok(())
    }
}

/// ADAM hyperparameters for one parameter group.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamHyper {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Optimizer state for one scaled manifold parameter: a tangent first
/// moment, a scalar (per-tensor) second moment that stays meaningful under
/// transport, and Euclidean ADAM moments for the log-scale.
#[derive(Debug, Clone)]
pub struct RiemannianAdamState {
    first_moment: DMatrix<f64>,
    second_moment: f64,
    step_count: usize,
    scale_first: f64,
    scale_second: f64,
}

impl RiemannianAdamState {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            first_moment: DMatrix::zeros(rows, cols),
            second_moment: 0.0,
            step_count: 0,
            scale_first: 0.0,
            scale_second: 0.0,
        }
    }

    pub fn for_param(param: &ScaledManifoldParam) -> Self {
        Self::new(param.point.nrows(), param.point.ncols())
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn first_moment(&self) -> &DMatrix<f64> {
        &self.first_moment
    }
}

/// One Riemannian ADAM step on a scaled manifold parameter.
///
/// `grad_effective` is the Euclidean gradient with respect to the effective
/// weight `s·M`; the chain rule to the point and to `log_scale` happens
/// here, and `penalty_lambda` adds the orthogonality-penalty gradient to the
/// ambient point gradient before projection. The sequence per step:
/// project → update moments → bias-correct → retract/exp along
/// `-lr·m̂/(√v̂ + ε)` → transport the first moment to the new point. The
/// log-scale takes a standard scalar ADAM update under `scale_hyper`.
pub fn riemannian_adam_step(
    param: &mut ScaledManifoldParam,
    state: &mut RiemannianAdamState,
    grad_effective: &DMatrix<f64>,
    penalty_lambda: f64,
    manifold_hyper: &AdamHyper,
    scale_hyper: &AdamHyper,
) -> Result<()> {
    let (mut grad_point, grad_log_scale) = param.split_gradient(grad_effective)?;
    if penalty_lambda > 0.0 {
        let (_, penalty_grad) = ortho_penalty(&param.point, penalty_lambda);
        grad_point += penalty_grad;
    }
    let xi = param.project(&grad_point)?;

    let t = state.step_count + 1;
    let b1 = manifold_hyper.beta1;
    let b2 = manifold_hyper.beta2;
    state.first_moment = &state.first_moment * b1 + &xi * (1.0 - b1);
    state.second_moment = b2 * state.second_moment + (1.0 - b2) * xi.norm_squared();
    let m_hat = &state.first_moment / (1.0 - b1.powi(t as i32));
    let v_hat = state.second_moment / (1.0 - b2.powi(t as i32));
    let direction = m_hat * (-manifold_hyper.learning_rate / (v_hat.sqrt() + manifold_hyper.epsilon));

    let old_point = param.point.clone();
    param.step_along(&direction)?;
    // Transport the raw first moment into the new tangent space.
    state.first_moment = match param.kind {
        ManifoldKind::Stiefel => stiefel_project(&param.point, &state.first_moment)?,
        ManifoldKind::Oblique => oblique_transport(&old_point, &direction, &state.first_moment)?,
    };

    // Euclidean ADAM on log_scale.
    let sb1 = scale_hyper.beta1;
    let sb2 = scale_hyper.beta2;
    state.scale_first = sb1 * state.scale_first + (1.0 - sb1) * grad_log_scale;
    state.scale_second = sb2 * state.scale_second + (1.0 - sb2) * grad_log_scale * grad_log_scale;
    let sm_hat = state.scale_first / (1.0 - sb1.powi(t as i32));
    let sv_hat = state.scale_second / (1.0 - sb2.powi(t as i32));
    param.log_scale -= scale_hyper.learning_rate * sm_hat / (sv_hat.sqrt() + scale_hyper.epsilon);

    state.step_count = t;
    Ok(())
}

/// Optimizer mode for the training harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Euclidean,
    Stiefel,
    Oblique,
}

impl TrainMode {
    pub fn manifold_kind(self) -> Option<ManifoldKind> {
        match self {
            TrainMode::Euclidean => None,
            TrainMode::Stiefel => Some(ManifoldKind::Stiefel),
            TrainMode::Oblique => Some(ManifoldKind::Oblique),
        }
    }
}

/// A hidden layer's constrained weight with its optimizer state.
#[derive(Debug, Clone)]
pub struct LayerManifoldParam {
    /// 1-based hidden layer index.
    pub layer: usize,
    pub param: ScaledManifoldParam,
    pub state: RiemannianAdamState,
}

/// Registry splitting a network's parameters into the three optimizer
/// groups: Euclidean tensors (biases and the readout, plus the hidden
/// weights in Euclidean mode), per-layer scales, and manifold points.
#[derive(Debug, Clone)]
pub struct ParameterGroups {
    pub mode: TrainMode,
    pub manifold: Vec<LayerManifoldParam>,
}

impl ParameterGroups {
    /// Total orthogonality-penalty value over the manifold points.
    pub fn penalty_value(&self, lambda: f64) -> f64 {
        self.manifold
            .iter()
            .map(|p| ortho_penalty(p.param.point(), lambda).0)
            .sum()
    }

    /// Mean scale over the manifold layers, when any.
    pub fn mean_scale(&self) -> Option<f64> {
        if self.manifold.is_empty() {
            return None;
        }
        Some(
            self.manifold.iter().map(|p| p.param.scale()).sum::<f64>()
                / self.manifold.len() as f64,
        )
    }
}

/// Builds the parameter-group registry for a network.
///
/// Euclidean mode leaves every tensor in group 1. Manifold modes register
/// each hidden weight exactly once as a [`ScaledManifoldParam`]
/// (scale-decomposed from the network's current weights, which must come
/// from a scaled orthogonal sample); biases and the readout stay in group 1.
/// Stiefel mode requires `n ≥ p` on every hidden layer.
pub fn make_parameter_groups(net: &NetworkState, mode: TrainMode) -> Result<ParameterGroups> {
    let Some(kind) = mode.manifold_kind() else {
        return Ok(ParameterGroups {
            mode,
            manifold: Vec::new(),
        });
    };
    let mut manifold = Vec::with_capacity(net.depth());
    for l in 1..=net.depth() {
        let w = &net.weights[l - 1];
        if kind == ManifoldKind::Stiefel && w.nrows() < w.ncols() {
            return Err(Error::Shape(format!(
                "Stiefel mode needs fan-out >= fan-in, but layer {l} is {}x{}",
                w.nrows(),
                w.ncols()
            )));
        }
        let param = ScaledManifoldParam::from_effective(kind, w)?;
        let state = RiemannianAdamState::for_param(&param);
        manifold.push(LayerManifoldParam {
            layer: l,
            param,
            state,
        });
    }
    Ok(ParameterGroups { mode, manifold })
}
