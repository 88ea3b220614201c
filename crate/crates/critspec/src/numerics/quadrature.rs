//! Gauss-Hermite quadrature reparametrized to the standard Gaussian measure.
//!
//! Nodes and weights come from the Golub-Welsch algorithm applied to the
//! probabilists' Hermite recurrence, so a rule of order `n` integrates
//! `∫ f(h) dμ(h)` with `μ = N(0, 1)` exactly for polynomials up to degree
//! `2n - 1`. Weights therefore sum to 1 and the node set is symmetric about
//! the origin.

use nalgebra::DMatrix;
use std::sync::OnceLock;

use crate::{Error, Result};

/// Quadrature rule against the standard Gaussian measure.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    order: usize,
}

impl QuadratureRule {
    /// Default order used throughout the crate. Mean-field integrands
    /// (tanh powers) are smooth, so 64 nodes deliver far more precision
    /// than the solver tolerances require.
    pub const DEFAULT_ORDER: usize = 64;

    /// Builds the order-`n` Gauss-Hermite rule normalized to `N(0, 1)`.
    ///
    /// The Jacobi matrix of the probabilists' Hermite polynomials is
    /// tridiagonal with zero diagonal and off-diagonal `sqrt(k)`; its
    /// eigenvalues are the nodes and the squared first eigenvector
    /// components are the weights (the measure already has unit mass).
    pub fn gauss_hermite(order: usize) -> Result<Self> {
        if order < 2 {
            return Err(Error::InvalidInput(format!(
                "quadrature order must be at least 2, got {order}"
            )));
        }
        let mut jacobi = DMatrix::<f64>::zeros(order, order);
        for k in 1..order {
            let b = (k as f64).sqrt();
            jacobi[(k, k - 1)] = b;
            jacobi[(k - 1, k)] = b;
        }
        let eig = jacobi.symmetric_eigen();
        let mut pairs: Vec<(f64, f64)> = (0..order)
            .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

        // Enforce the ±node symmetry exactly: average each mirrored pair.
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        for i in 0..order / 2 {
            let j = order - 1 - i;
            let x = 0.5 * (pairs[j].0 - pairs[i].0);
            let w = 0.5 * (pairs[i].1 + pairs[j].1);
            nodes[i] = -x;
            nodes[j] = x;
            weights[i] = w;
            weights[j] = w;
        }
        if order % 2 == 1 {
            let mid = order / 2;
            nodes[mid] = 0.0;
            weights[mid] = pairs[mid].1;
        }
        // Normalize away the residual eigenvector rounding so the measure
        // has exactly unit mass.
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        Ok(Self {
            nodes,
            weights,
            order,
        })
    }

    /// The shared default-order rule.
    pub fn standard() -> &'static QuadratureRule {
        static RULE: OnceLock<QuadratureRule> = OnceLock::new();
        RULE.get_or_init(|| {
            QuadratureRule::gauss_hermite(Self::DEFAULT_ORDER).expect("default order is valid")
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn order(&self) -> usize {
        self.order
    }
}

/// Approximates `∫ f(√q h) dμ(h)` with `μ` the standard Gaussian measure.
///
/// Errors if `q` is not positive or `f` returns a non-finite value at any
/// node (the failing node is identified in the error).
pub fn gauss_expect(f: impl Fn(f64) -> f64, q: f64, rule: &QuadratureRule) -> Result<f64> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::InvalidInput(format!(
            "gauss_expect requires q > 0, got {q}"
        )));
    }
    let sqrt_q = q.sqrt();
    let mut acc = 0.0;
    for (k, (&x, &w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
        let v = f(sqrt_q * x);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!(
                "integrand returned {v} at node {k} (abscissa {:.6e})",
                sqrt_q * x
            )));
        }
        acc += w * v;
    }
    Ok(acc)
}
