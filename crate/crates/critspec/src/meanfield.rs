//! Mean-field variance recursion, criticality solver, weight samplers, and
//! input rescaling.
//!
//! For wide random layers the pre-activation variance follows
//! `q^l = σ_W² ∫ φ(√q^{l-1} h)² dμ(h) + σ_b²` with `μ` the standard Gaussian
//! measure. A pair `(σ_W, σ_b)` is *critical* for a target fixed point `q*`
//! when the recursion fixes `q*` and the per-layer mean square singular value
//! `χ = σ_W² ∫ φ'(√q* h)² dμ(h)` equals one, so gradient norms are stable in
//! depth.
//!
//! Note the recursion integrand is the squared activation: the quantity being
//! propagated is a variance, so `φ²` is what makes the fixed-point equation
//! consistent with the first-layer scaling `q¹ = σ_W²‖x⁰‖²/N¹ + σ_b²`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::network::Activation;
use crate::numerics::{gauss_expect, QuadratureRule, RngStream};
use crate::{Error, Result};

/// A `(σ_W, σ_b)` pair with its fixed-point variance and per-layer mean
/// square singular value.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct MeanFieldSolution {
    pub sigma_w: f64,
    pub sigma_b: f64,
    pub q_star: f64,
    pub chi: f64,
}

/// Result of iterating the variance recursion to a fixed point.
#[derive(Debug, Clone, Copy)]
pub struct FixedPoint {
    pub q_star: f64,
    pub iterations: usize,
    /// Set when the iteration collapsed onto the `q = 0` fixed point with
    /// `σ_b = 0`; callers should treat the solution as degenerate rather
    /// than use it silently.
    pub degenerate: bool,
}

/// One step of the variance recursion:
/// `σ_W² ∫ φ(√q_prev h)² dμ(h) + σ_b²`.
pub fn variance_recursion_step(
    q_prev: f64,
    sigma_w: f64,
    sigma_b: f64,
    activation: Activation,
    rule: &QuadratureRule,
) -> Result<f64> {
    if !(q_prev > 0.0) {
        return Err(Error::InvalidInput(format!(
            "variance recursion requires q_prev > 0, got {q_prev}"
        )));
    }
    let second_moment = gauss_expect(|h| activation.apply(h).powi(2), q_prev, rule)?;
    Ok(sigma_w * sigma_w * second_moment + sigma_b * sigma_b)
}

/// Iterates [`variance_recursion_step`] from `q_init` until successive
/// iterates agree to 1e-12 (at most 10⁴ iterations).
pub fn solve_fixed_point(
    sigma_w: f64,
    sigma_b: f64,
    activation: Activation,
    q_init: f64,
    rule: &QuadratureRule,
) -> Result<FixedPoint> {
    const TOL: f64 = 1e-12;
    const MAX_ITER: usize = 10_000;
    if !(q_init > 0.0) {
        return Err(Error::InvalidInput(format!(
            "solve_fixed_point requires q_init > 0, got {q_init}"
        )));
    }
    // With σ_b = 0 and tanh, a positive fixed point exists only for
    // σ_W > 1 (the map slope at the origin is σ_W², tanh'(0) = 1); at or
    // below that slope the iterates decay sublinearly toward q = 0, so
    // report the collapse directly instead of grinding the iteration.
    if sigma_b == 0.0 && activation == Activation::Tanh && sigma_w <= 1.0 {
        return Ok(FixedPoint {
            q_star: 0.0,
            iterations: 0,
            degenerate: true,
        });
    }
    let mut q = q_init;
    for iter in 0..MAX_ITER {
        let next = variance_recursion_step(q, sigma_w, sigma_b, activation, rule)?;
        if (next - q).abs() < TOL {
            // The tanh map with σ_b = 0 contracts onto q = 0 whenever
            // σ_W ≤ 1; report that collapse instead of returning it as a
            // meaningful variance.
            let degenerate = sigma_b == 0.0 && next < 1e-8;
            return Ok(FixedPoint {
                q_star: next,
                iterations: iter + 1,
                degenerate,
            });
        }
        // The recursion can stall numerically at q = 0 (φ(0) = 0).
        if next == 0.0 {
            return Ok(FixedPoint {
                q_star: 0.0,
                iterations: iter + 1,
                degenerate: sigma_b == 0.0,
            });
        }
        q = next;
    }
    Err(Error::Convergence {
        context: "variance fixed-point iteration".into(),
        best: q,
    })
}

/// Per-layer mean square singular value `χ = σ_W² ∫ φ'(√q* h)² dμ(h)`.
pub fn chi(
    sigma_w: f64,
    q_star: f64,
    activation: Activation,
    rule: &QuadratureRule,
) -> Result<f64> {
    let deriv_moment = gauss_expect(|h| activation.derivative(h).powi(2), q_star, rule)?;
    Ok(sigma_w * sigma_w * deriv_moment)
}

const SIGMA_W_BOX: (f64, f64) = (0.5, 3.0);
/// Residual guarantee for [`solve_critical`].
const CRITICAL_TOL: f64 = 1e-10;
/// Newton aims well below the guarantee: a fixed-point residual of size ε
/// displaces the actual fixed point by ε/(1 - slope), and the recursion
/// slope approaches 1 as q* shrinks.
const NEWTON_TARGET: f64 = 1e-14;

/// Solves for the critical `(σ_W, σ_b)` at a target fixed point.
///
/// A damped Newton iteration (numerical Jacobian, step 1e-7) runs on the
/// residual pair {fixed-point equation at `q*`, `χ - 1`} in the unknowns
/// `(σ_W, σ_b²)`; squaring the bias keeps the Jacobian nonsingular when the
/// solution has `σ_b = 0`. If Newton leaves the search box
/// `σ_W ∈ [0.5, 3], σ_b² ∈ [0, q*]` or stalls, a bisection fallback solves
/// `χ(σ_W) = 1` directly (χ is monotone in σ_W) and recovers `σ_b²` from the
/// fixed-point equation. Identity activation returns `(1, 0)` exactly.
pub fn solve_critical(
    q_star_target: f64,
    activation: Activation,
    rule: &QuadratureRule,
) -> Result<MeanFieldSolution> {
    if !(q_star_target > 0.0) {
        return Err(Error::InvalidInput(format!(
            "solve_critical requires q* > 0, got {q_star_target}"
        )));
    }
    if activation == Activation::Identity {
        return Ok(MeanFieldSolution {
            sigma_w: 1.0,
            sigma_b: 0.0,
            q_star: q_star_target,
            chi: 1.0,
        });
    }
    let q = q_star_target;
    let residuals = |sigma_w: f64, sb2: f64| -> Result<(f64, f64)> {
        let r1 = variance_recursion_step(q, sigma_w, sb2.max(0.0).sqrt(), activation, rule)? - q;
        let r2 = chi(sigma_w, q, activation, rule)? - 1.0;
        Ok((r1, r2))
    };

    let mut sigma_w = 1.2;
    let mut sb2 = 0.5 * q;
    let mut converged = false;
    const FD_STEP: f64 = 1e-7;
    for _ in 0..100 {
        let (r1, r2) = residuals(sigma_w, sb2)?;
        let norm = r1.abs().max(r2.abs());
        if norm < NEWTON_TARGET {
            converged = true;
            break;
        }
        let (r1w, r2w) = residuals(sigma_w + FD_STEP, sb2)?;
        let (r1b, r2b) = residuals(sigma_w, sb2 + FD_STEP)?;
        let j11 = (r1w - r1) / FD_STEP;
        let j12 = (r1b - r1) / FD_STEP;
        let j21 = (r2w - r2) / FD_STEP;
        let j22 = (r2b - r2) / FD_STEP;
        let det = j11 * j22 - j12 * j21;
        if det.abs() < 1e-14 {
            break;
        }
        let dw = (r1 * j22 - r2 * j12) / det;
        let db = (r2 * j11 - r1 * j21) / det;
        // Damping: halve the step until the residual norm decreases.
        let mut t = 1.0;
        let mut stepped = false;
        for _ in 0..30 {
            let cand_w = (sigma_w - t * dw).clamp(SIGMA_W_BOX.0, SIGMA_W_BOX.1);
            let cand_b = (sb2 - t * db).clamp(0.0, q);
            let (c1, c2) = residuals(cand_w, cand_b)?;
            if c1.abs().max(c2.abs()) < norm {
                sigma_w = cand_w;
                sb2 = cand_b;
                stepped = true;
                break;
            }
            t *= 0.5;
        }
        if !stepped {
            break;
        }
    }

    if !converged {
        // Bisection fallback on χ(σ_W) = 1 over the box.
        let chi_res = |sw: f64| chi(sw, q, activation, rule).map(|c| c - 1.0);
        let (mut lo, mut hi) = SIGMA_W_BOX;
        let f_lo = chi_res(lo)?;
        let f_hi = chi_res(hi)?;
        if f_lo * f_hi > 0.0 {
            return Err(Error::NoSolution(format!(
                "chi - 1 does not change sign for sigma_w in [{lo}, {hi}] at q* = {q}"
            )));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let f_mid = chi_res(mid)?;
            if f_mid == 0.0 {
                lo = mid;
                hi = mid;
                break;
            }
            if f_lo * f_mid < 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        sigma_w = 0.5 * (lo + hi);
        let second_moment = gauss_expect(|h| activation.apply(h).powi(2), q, rule)?;
        sb2 = q - sigma_w * sigma_w * second_moment;
        if !(0.0..=q).contains(&sb2) {
            return Err(Error::NoSolution(format!(
                "critical sigma_b^2 = {sb2} falls outside [0, q*] at q* = {q}"
            )));
        }
    }

    let sigma_b = sb2.max(0.0).sqrt();
    let (r1, r2) = residuals(sigma_w, sb2)?;
    if r1.abs() >= CRITICAL_TOL || r2.abs() >= CRITICAL_TOL {
        return Err(Error::NoSolution(format!(
            "criticality residuals ({r1:.3e}, {r2:.3e}) exceed {CRITICAL_TOL:.0e} at q* = {q}"
        )));
    }
    Ok(MeanFieldSolution {
        sigma_w,
        sigma_b,
        q_star: q,
        chi: chi(sigma_w, q, activation, rule)?,
    })
}

/// Weight-matrix initialization family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightInit {
    Gaussian,
    Orthogonal,
}

/// Samples an `n × p` weight matrix.
///
/// Gaussian: i.i.d. `N(0, σ_W²/p)` entries (fan-in normalization, which is
/// what makes the variance recursion hold for rectangular layers).
/// Orthogonal: Haar-distributed via QR of a standard Gaussian matrix with
/// the `diag(R) > 0` sign convention, scaled by `σ_W`; requires `n ≥ p`.
pub fn sample_weights(
    n: usize,
    p: usize,
    kind: WeightInit,
    sigma_w: f64,
    stream: RngStream,
) -> Result<DMatrix<f64>> {
    if n == 0 || p == 0 {
        return Err(Error::Shape("sample_weights with zero dimension".into()));
    }
    let mut rng = stream.rng();
    match kind {
        WeightInit::Gaussian => {
            let scale = sigma_w / (p as f64).sqrt();
            Ok(DMatrix::from_fn(n, p, |_, _| {
                scale * rng.sample::<f64, _>(StandardNormal)
            }))
        }
        WeightInit::Orthogonal => {
            if n < p {
                return Err(Error::Shape(format!(
                    "orthogonal sampling needs n >= p, got {n} < {p}"
                )));
            }
            let g = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
            let qr = g.qr();
            let r = qr.r();
            let mut q = qr.q();
            for j in 0..p {
                if r[(j, j)] < 0.0 {
                    let mut col = q.column_mut(j);
                    col.neg_mut();
                }
            }
            Ok(q * sigma_w)
        }
    }
}

/// Rescales `x0` so the first-layer variance hits the fixed point:
/// `‖x‖² = N¹ (q* - σ_b²)/σ_W²`.
pub fn rescale_input(
    x0: &DVector<f64>,
    sol: &MeanFieldSolution,
    n1: usize,
) -> Result<DVector<f64>> {
    let factor = rescale_norm_target(sol, n1)?;
    let norm = x0.norm();
    if norm == 0.0 {
        return Err(Error::InvalidInput("cannot rescale a zero input".into()));
    }
    Ok(x0 * (factor.sqrt() / norm))
}

/// Target squared norm for inputs at the fixed point.
pub fn rescale_norm_target(sol: &MeanFieldSolution, n1: usize) -> Result<f64> {
    let gap = sol.q_star - sol.sigma_b * sol.sigma_b;
    if gap <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "q* = {} must exceed sigma_b^2 = {} to place inputs at the fixed point",
            sol.q_star,
            sol.sigma_b * sol.sigma_b
        )));
    }
    Ok(n1 as f64 * gap / (sol.sigma_w * sol.sigma_w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn rule() -> &'static QuadratureRule {
        QuadratureRule::standard()
    }

    #[test]
    fn identity_step_is_affine_in_q() {
        let got = variance_recursion_step(0.7, 0.9, 0.2, Activation::Identity, rule()).unwrap();
        assert_relative_eq!(got, 0.81 * 0.7 + 0.04, epsilon = 1e-12);
    }

    #[test]
    fn tanh_step_linearizes_for_small_q() {
        let q = 1e-10;
        let got = variance_recursion_step(q, 1.3, 0.0, Activation::Tanh, rule()).unwrap();
        assert_relative_eq!(got, 1.69 * q, max_relative = 1e-6);
    }

    // Monte Carlo oracle with 10⁷ standard-normal draws.
    #[test]
    fn tanh_step_matches_monte_carlo() {
        let (sigma_w, sigma_b, q_prev) = (1.1, 0.02, 0.5);
        let quad = variance_recursion_step(q_prev, sigma_w, sigma_b, Activation::Tanh, rule())
            .unwrap();
        let mut rng = RngStream::new(0xbeef, 0).rng();
        let n = 10_000_000usize;
        let mut acc = 0.0;
        for _ in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            acc += (q_prev.sqrt() * z).tanh().powi(2);
        }
        let mc = sigma_w * sigma_w * acc / n as f64 + sigma_b * sigma_b;
        assert!((quad - mc).abs() < 5e-4, "quadrature {quad} vs MC {mc}");
    }

    #[test]
    fn linear_fixed_point_is_geometric() {
        let fp = solve_fixed_point(0.5, 0.1, Activation::Identity, 1.0, rule()).unwrap();
        assert_relative_eq!(fp.q_star, 0.01 / 0.75, epsilon = 1e-10);
        assert!(!fp.degenerate);
    }

    #[test]
    fn tanh_without_bias_collapses_and_is_flagged() {
        let fp = solve_fixed_point(1.0, 0.0, Activation::Tanh, 0.5, rule()).unwrap();
        assert!(fp.q_star < 1e-6);
        assert!(fp.degenerate);
    }

    #[test]
    fn chi_of_identity_is_sigma_w_squared() {
        assert_relative_eq!(
            chi(0.8, 123.0, Activation::Identity, rule()).unwrap(),
            0.64,
            epsilon = 1e-12
        );
    }

    #[test]
    fn chi_of_tanh_approaches_sigma_w_squared_for_small_q() {
        assert_relative_eq!(
            chi(1.05, 1e-12, Activation::Tanh, rule()).unwrap(),
            1.05 * 1.05,
            max_relative = 1e-8
        );
    }

    // Monte Carlo oracle for χ.
    #[test]
    fn chi_matches_monte_carlo() {
        let (sigma_w, q) = (1.05, 1.0 / 64.0);
        let quad = chi(sigma_w, q, Activation::Tanh, rule()).unwrap();
        let mut rng = RngStream::new(0xc41, 0).rng();
        let n = 10_000_000usize;
        let mut acc = 0.0;
        for _ in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            let t = (q.sqrt() * z).tanh();
            acc += (1.0 - t * t).powi(2);
        }
        let mc = sigma_w * sigma_w * acc / n as f64;
        assert!((quad - mc).abs() < 5e-5, "quadrature {quad} vs MC {mc}");
    }

    #[test]
    fn identity_criticality_is_exact() {
        let sol = solve_critical(0.37, Activation::Identity, rule()).unwrap();
        assert_eq!(sol.sigma_w, 1.0);
        assert_eq!(sol.sigma_b, 0.0);
        assert_eq!(sol.chi, 1.0);
    }

    // Residual round-trip at the paper's two operating points.
    #[test]
    fn tanh_criticality_round_trips() {
        for q in [1.0 / 64.0, 9e-4] {
            let sol = solve_critical(q, Activation::Tanh, rule()).unwrap();
            assert!(sol.sigma_w > 1.0, "tanh criticality needs sigma_w > 1");
            let fp_res =
                variance_recursion_step(q, sol.sigma_w, sol.sigma_b, Activation::Tanh, rule())
                    .unwrap()
                    - q;
            let chi_res = chi(sol.sigma_w, q, Activation::Tanh, rule()).unwrap() - 1.0;
            assert!(fp_res.abs() < 1e-10, "fixed-point residual {fp_res:.3e}");
            assert!(chi_res.abs() < 1e-10, "chi residual {chi_res:.3e}");
            // And the fixed point is recovered by plain iteration. The
            // iteration stops on |Δq| < 1e-12, which leaves an offset of
            // Δq/(1 - slope); the slope approaches 1 as q* shrinks, so the
            // smaller operating point gets a correspondingly looser check.
            let fp =
                solve_fixed_point(sol.sigma_w, sol.sigma_b, Activation::Tanh, q * 1.7, rule())
                    .unwrap();
            let tol = if q > 1e-2 { 1e-10 } else { 5e-9 };
            assert!(
                (fp.q_star - q).abs() < tol,
                "fixed point {} vs target {q}",
                fp.q_star
            );
        }
    }

    #[test]
    fn critical_point_is_depth_stable() {
        let q = 1.0 / 64.0;
        let sol = solve_critical(q, Activation::Tanh, rule()).unwrap();
        let mut cur = q;
        for _ in 0..200 {
            cur = variance_recursion_step(cur, sol.sigma_w, sol.sigma_b, Activation::Tanh, rule())
                .unwrap();
        }
        assert!((cur - q).abs() < 1e-9, "drift {:.3e}", (cur - q).abs());
    }

    #[test]
    fn orthogonal_sample_has_orthonormal_columns() {
        for sigma_w in [1.0, 2.0] {
            let w = sample_weights(8, 5, WeightInit::Orthogonal, sigma_w, RngStream::new(3, 0))
                .unwrap();
            let gram = w.tr_mul(&w);
            let expected = DMatrix::identity(5, 5) * sigma_w * sigma_w;
            assert!((gram - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn orthogonal_sample_rejects_wide_shapes() {
        assert!(sample_weights(3, 5, WeightInit::Orthogonal, 1.0, RngStream::new(4, 0)).is_err());
    }

    // Law-of-large-numbers check on the Gaussian sampler.
    #[test]
    fn gaussian_sample_variance_uses_fan_in() {
        let n = 400;
        let mut mean = 0.0;
        let mut var = 0.0;
        let draws = 10;
        for i in 0..draws {
            let w =
                sample_weights(n, n, WeightInit::Gaussian, 1.0, RngStream::new(5, i)).unwrap();
            mean += w.iter().sum::<f64>() / (n * n) as f64;
            var += w.iter().map(|v| v * v).sum::<f64>() / (n * n) as f64;
        }
        mean /= draws as f64;
        var /= draws as f64;
        assert!(mean.abs() < 1e-4, "sample mean {mean}");
        assert_relative_eq!(var, 1.0 / n as f64, max_relative = 0.05);
    }

    // Invariance of the Haar ensemble under fixed orthogonal rotation,
    // probed through spectral statistics of WᵀQ.
    #[test]
    fn orthogonal_sampler_rotation_invariance() {
        let q_fixed =
            sample_weights(6, 6, WeightInit::Orthogonal, 1.0, RngStream::new(77, 0)).unwrap();
        for i in 1..6 {
            let w =
                sample_weights(6, 6, WeightInit::Orthogonal, 1.0, RngStream::new(77, i)).unwrap();
            let rotated = w.tr_mul(&q_fixed);
            let s = crate::numerics::spectral_summary(&rotated).unwrap();
            assert_relative_eq!(s.sigma_max, 1.0, epsilon = 1e-12);
            assert_relative_eq!(s.sigma_min, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn rescale_hits_target_norm() {
        let sol = MeanFieldSolution {
            sigma_w: 1.0,
            sigma_b: 0.0,
            q_star: 1.0,
            chi: 1.0,
        };
        let x = DVector::from_vec(vec![3.0, 0.0, 0.0, 4.0]);
        let scaled = rescale_input(&x, &sol, 4).unwrap();
        assert_relative_eq!(scaled.norm(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn rescale_is_idempotent_at_target() {
        let sol = solve_critical(1.0 / 64.0, Activation::Tanh, rule()).unwrap();
        let x = DVector::from_fn(16, |i, _| (i as f64 + 1.0) * 0.01);
        let once = rescale_input(&x, &sol, 16).unwrap();
        let twice = rescale_input(&once, &sol, 16).unwrap();
        for i in 0..16 {
            assert_relative_eq!(once[i], twice[i], max_relative = 1e-15);
        }
    }

    #[test]
    fn rescale_rejects_degenerate_cases() {
        let sol = MeanFieldSolution {
            sigma_w: 1.0,
            sigma_b: 1.0,
            q_star: 0.5,
            chi: 1.0,
        };
        assert!(rescale_input(&DVector::from_element(3, 1.0), &sol, 3).is_err());
        let ok = MeanFieldSolution {
            sigma_w: 1.0,
            sigma_b: 0.0,
            q_star: 0.5,
            chi: 1.0,
        };
        assert!(rescale_input(&DVector::zeros(3), &ok, 3).is_err());
    }

    // Ensemble forward-pass check: inputs rescaled for q* = 1/64 give
    // first-layer variance near q* at width 512.
    #[test]
    fn rescaled_input_places_first_layer_at_fixed_point() {
        let q = 1.0 / 64.0;
        let sol = solve_critical(q, Activation::Tanh, rule()).unwrap();
        let n = 512;
        let mut rng = RngStream::new(9, 0).rng();
        let x = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = rescale_input(&x, &sol, n).unwrap();
        let mut var_acc = 0.0;
        let seeds = 8;
        for i in 0..seeds {
            let w = sample_weights(n, n, WeightInit::Orthogonal, sol.sigma_w, RngStream::new(10, i))
                .unwrap();
            let mut rng_b = RngStream::new(11, i).rng();
            let b = DVector::from_fn(n, |_, _| sol.sigma_b * rng_b.sample::<f64, _>(StandardNormal));
            let h1 = &w * &x + b;
            var_acc += h1.norm_squared() / n as f64;
        }
        let var = var_acc / seeds as f64;
        assert!(
            (var - q).abs() / q < 0.05,
            "empirical Var(h1) = {var}, target {q}"
        );
    }

    // Empirical χ at width 256: (1/N)·‖D W‖_F² near 1 for critical layers.
    #[test]
    fn empirical_chi_close_to_one() {
        let q = 1.0 / 64.0;
        let sol = solve_critical(q, Activation::Tanh, rule()).unwrap();
        let n = 256;
        let mut acc = 0.0;
        let seeds = 10;
        for i in 0..seeds {
            let w = sample_weights(n, n, WeightInit::Orthogonal, sol.sigma_w, RngStream::new(21, i))
                .unwrap();
            let mut rng = RngStream::new(22, i).rng();
            // Pre-activations at the fixed point.
            let h = DVector::from_fn(n, |_, _| q.sqrt() * rng.sample::<f64, _>(StandardNormal));
            let mut dw = w.clone();
            for (r, mut row) in dw.row_iter_mut().enumerate() {
                row *= Activation::Tanh.derivative(h[r]);
            }
            acc += dw.norm_squared() / n as f64;
        }
        let empirical = acc / seeds as f64;
        assert!(
            (0.9..=1.1).contains(&empirical),
            "empirical chi {empirical} outside [0.9, 1.1]"
        );
    }
}
