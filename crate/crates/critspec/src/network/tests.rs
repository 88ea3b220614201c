use super::*;
use crate::numerics::{spectral_summary, RngStream};
use approx::assert_relative_eq;
use rand::Rng;
use rand_distr::StandardNormal;

fn random_net(
    widths: &[usize],
    output: usize,
    activation: Activation,
    head: HeadKind,
    seed: u64,
) -> NetworkState {
    let mut rng = RngStream::new(seed, 0).rng();
    let depth = widths.len() - 1;
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for l in 0..depth {
        let scale = 1.0 / (widths[l] as f64).sqrt();
        weights.push(DMatrix::from_fn(widths[l + 1], widths[l], |_, _| {
            scale * rng.sample::<f64, _>(StandardNormal)
        }));
        biases.push(DVector::from_fn(widths[l + 1], |_, _| {
            0.1 * rng.sample::<f64, _>(StandardNormal)
        }));
    }
    let scale = 1.0 / (widths[depth] as f64).sqrt();
    let readout_weight = DMatrix::from_fn(output, widths[depth], |_, _| {
        scale * rng.sample::<f64, _>(StandardNormal)
    });
    let readout_bias = DVector::from_fn(output, |_, _| 0.1 * rng.sample::<f64, _>(StandardNormal));
    NetworkState::new(
        widths.to_vec(),
        weights,
        biases,
        readout_weight,
        readout_bias,
        activation,
        head,
    )
    .unwrap()
}

fn random_vector(dim: usize, seed: u64) -> DVector<f64> {
    let mut rng = RngStream::new(seed, 1).rng();
    DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal))
}

#[test]
fn forward_identity_single_layer() {
    let net = NetworkState::new(
        vec![2, 2],
        vec![DMatrix::identity(2, 2)],
        vec![DVector::zeros(2)],
        DMatrix::identity(2, 2),
        DVector::zeros(2),
        Activation::Identity,
        HeadKind::GaussianIdentity,
    )
    .unwrap();
    let trace = forward(&net, &DVector::from_vec(vec![1.0, 2.0])).unwrap();
    assert_eq!(trace.preactivations[0], DVector::from_vec(vec![1.0, 2.0]));
    assert_eq!(trace.activations[0], DVector::from_vec(vec![1.0, 2.0]));
}

#[test]
fn forward_zero_input_through_odd_activation() {
    let net = random_net(&[3, 4, 4], 2, Activation::Tanh, HeadKind::GaussianIdentity, 1);
    let mut net = net;
    for b in &mut net.biases {
        b.fill(0.0);
    }
    let trace = forward(&net, &DVector::zeros(3)).unwrap();
    for l in 0..net.depth() {
        assert_eq!(trace.preactivations[l].norm(), 0.0);
        assert_eq!(trace.activations[l].norm(), 0.0);
    }
}

// Scalar reference oracle: recompute each unit with explicit loops.
#[test]
fn forward_matches_scalar_recomputation() {
    let net = random_net(&[5, 7, 6, 4, 3], 2, Activation::Tanh, HeadKind::Softmax, 2);
    let x0 = random_vector(5, 3);
    let trace = forward(&net, &x0).unwrap();
    let mut x: Vec<f64> = x0.iter().copied().collect();
    for l in 0..net.depth() {
        let w = &net.weights[l];
        let mut next = vec![0.0; w.nrows()];
        for i in 0..w.nrows() {
            let mut acc = net.biases[l][i];
            for (j, xj) in x.iter().enumerate() {
                acc += w[(i, j)] * xj;
            }
            next[i] = acc;
        }
        for (i, &h) in next.iter().enumerate() {
            assert_relative_eq!(trace.preactivations[l][i], h, max_relative = 1e-12);
            assert_relative_eq!(trace.activations[l][i], h.tanh(), max_relative = 1e-12);
        }
        x = next.iter().map(|&h| h.tanh()).collect();
    }
}

#[test]
fn forward_batch_matches_per_sample() {
    let net = random_net(&[4, 5, 3], 2, Activation::Tanh, HeadKind::GaussianIdentity, 4);
    let mut rng = RngStream::new(5, 0).rng();
    let batch = DMatrix::from_fn(4, 6, |_, _| rng.sample::<f64, _>(StandardNormal));
    let bt = forward_batch(&net, &batch).unwrap();
    for c in 0..6 {
        let t = forward(&net, &batch.column(c).into_owned()).unwrap();
        assert!((bt.head_preactivation.column(c) - &t.head_preactivation).norm() < 1e-13);
        for l in 0..net.depth() {
            assert!((bt.activations[l].column(c) - &t.activations[l]).norm() < 1e-13);
        }
    }
}

#[test]
fn forward_rejects_wrong_input_dim() {
    let net = random_net(&[4, 3], 2, Activation::Tanh, HeadKind::GaussianIdentity, 6);
    assert!(forward(&net, &DVector::zeros(5)).is_err());
}

#[test]
fn io_jacobian_identity_network() {
    let net = NetworkState::new(
        vec![3, 3, 3],
        vec![DMatrix::identity(3, 3), DMatrix::identity(3, 3)],
        vec![DVector::zeros(3), DVector::zeros(3)],
        DMatrix::identity(3, 3),
        DVector::zeros(3),
        Activation::Identity,
        HeadKind::GaussianIdentity,
    )
    .unwrap();
    let trace = forward(&net, &random_vector(3, 7)).unwrap();
    let j = io_jacobian(&trace, &net, 0, 2).unwrap();
    assert!((j - DMatrix::<f64>::identity(3, 3)).norm() < 1e-15);
}

// Finite-difference oracle for the full input-output Jacobian.
#[test]
fn io_jacobian_matches_central_differences() {
    let net = random_net(&[4, 5, 5, 3], 3, Activation::Tanh, HeadKind::GaussianIdentity, 8);
    let x0 = random_vector(4, 9);
    let trace = forward(&net, &x0).unwrap();
    let depth = net.depth();
    let j = io_jacobian(&trace, &net, 0, depth).unwrap();
    let step = 1e-5;
    for col in 0..4 {
        let mut xp = x0.clone();
        let mut xm = x0.clone();
        xp[col] += step;
        xm[col] -= step;
        let fp = forward(&net, &xp).unwrap().activations[depth - 1].clone();
        let fm = forward(&net, &xm).unwrap().activations[depth - 1].clone();
        let fd = (fp - fm) / (2.0 * step);
        for row in 0..3 {
            assert_relative_eq!(j[(row, col)], fd[row], max_relative = 1e-6, epsilon = 1e-9);
        }
    }
}

#[test]
fn head_input_jacobian_matches_central_differences() {
    let net = random_net(&[4, 5, 4], 3, Activation::Tanh, HeadKind::Softmax, 10);
    let x0 = random_vector(4, 11);
    let trace = forward(&net, &x0).unwrap();
    let j = head_input_jacobian(&trace, &net).unwrap();
    let step = 1e-5;
    for col in 0..4 {
        let mut xp = x0.clone();
        let mut xm = x0.clone();
        xp[col] += step;
        xm[col] -= step;
        let fp = forward(&net, &xp).unwrap().head_preactivation;
        let fm = forward(&net, &xm).unwrap().head_preactivation;
        let fd = (fp - fm) / (2.0 * step);
        for row in 0..3 {
            assert_relative_eq!(j[(row, col)], fd[row], max_relative = 1e-6, epsilon = 1e-9);
        }
    }
}

// Product of orthogonal matrices with identity activation is orthogonal.
#[test]
fn io_jacobian_of_orthogonal_linear_net_is_isometric() {
    let q = crate::meanfield::sample_weights(
        6,
        6,
        crate::meanfield::WeightInit::Orthogonal,
        1.0,
        RngStream::new(12, 0),
    )
    .unwrap();
    let q2 = crate::meanfield::sample_weights(
        6,
        6,
        crate::meanfield::WeightInit::Orthogonal,
        1.0,
        RngStream::new(12, 1),
    )
    .unwrap();
    let net = NetworkState::new(
        vec![6, 6, 6],
        vec![q, q2],
        vec![DVector::zeros(6), DVector::zeros(6)],
        DMatrix::identity(6, 6),
        DVector::zeros(6),
        Activation::Identity,
        HeadKind::GaussianIdentity,
    )
    .unwrap();
    let trace = forward(&net, &random_vector(6, 13)).unwrap();
    let j = io_jacobian(&trace, &net, 0, 2).unwrap();
    let s = spectral_summary(&j).unwrap();
    assert_relative_eq!(s.sigma_max, 1.0, epsilon = 1e-12);
    assert_relative_eq!(s.sigma_min, 1.0, epsilon = 1e-12);
}

#[test]
fn io_jacobian_composes_layerwise() {
    let net = random_net(&[4, 6, 5, 4], 2, Activation::Tanh, HeadKind::GaussianIdentity, 14);
    let trace = forward(&net, &random_vector(4, 15)).unwrap();
    let full = io_jacobian(&trace, &net, 0, 3).unwrap();
    let mut prod = DMatrix::identity(4, 4);
    for l in 1..=3 {
        prod = io_jacobian(&trace, &net, l - 1, l).unwrap() * prod;
    }
    assert_relative_eq!((full.clone() - prod).norm(), 0.0, epsilon = 1e-12 * full.norm());
}

#[test]
fn io_jacobian_of_linear_net_is_input_independent() {
    let net = random_net(&[4, 5, 3], 2, Activation::Identity, HeadKind::GaussianIdentity, 16);
    let ta = forward(&net, &random_vector(4, 17)).unwrap();
    let tb = forward(&net, &(random_vector(4, 18) * 3.0)).unwrap();
    let ja = io_jacobian(&ta, &net, 0, 2).unwrap();
    let jb = io_jacobian(&tb, &net, 0, 2).unwrap();
    assert!((ja - jb).norm() < 1e-14);
}

#[test]
fn io_jacobian_rejects_bad_range() {
    let net = random_net(&[3, 3], 1, Activation::Tanh, HeadKind::GaussianIdentity, 19);
    let trace = forward(&net, &random_vector(3, 20)).unwrap();
    assert!(io_jacobian(&trace, &net, 1, 1).is_err());
    assert!(io_jacobian(&trace, &net, 0, 2).is_err());
}

// Kronecker definition: at the last layer with identity readout and identity
// activation, the weight block is exactly x^{L-1}ᵀ ⊗ I.
#[test]
fn param_jacobian_weight_block_kronecker_case() {
    let widths = vec![3, 4];
    let net = NetworkState::new(
        widths,
        vec![DMatrix::from_fn(4, 3, |i, j| (i + 2 * j) as f64 * 0.1)],
        vec![DVector::zeros(4)],
        DMatrix::identity(4, 4),
        DVector::zeros(4),
        Activation::Identity,
        HeadKind::GaussianIdentity,
    )
    .unwrap();
    let x0 = DVector::from_vec(vec![1.0, -2.0, 0.5]);
    let trace = forward(&net, &x0).unwrap();
    let block = param_jacobian_block(&trace, &net, 1, ParamKind::Weights).unwrap();
    let dense = block.dense().unwrap();
    let xt = DMatrix::from_row_slice(1, 3, x0.as_slice());
    let expected = xt.kronecker(&DMatrix::identity(4, 4));
    assert_eq!(dense, expected);
}

#[test]
fn param_jacobian_bias_block_is_downstream_weight_product() {
    let net = random_net(&[3, 4, 5, 4], 2, Activation::Identity, HeadKind::GaussianIdentity, 21);
    let trace = forward(&net, &random_vector(3, 22)).unwrap();
    let block = param_jacobian_block(&trace, &net, 1, ParamKind::Bias).unwrap();
    let expected = &net.readout_weight * &net.weights[2] * &net.weights[1];
    assert!((block.dense().unwrap() - expected).norm() < 1e-13);
}

#[test]
fn param_jacobian_matrix_free_matches_dense() {
    let net = random_net(&[4, 5, 4], 3, Activation::Tanh, HeadKind::Softmax, 23);
    let trace = forward(&net, &random_vector(4, 24)).unwrap();
    for (alpha, which) in [(1, ParamKind::Weights), (2, ParamKind::Weights), (2, ParamKind::Bias)] {
        let block = param_jacobian_block(&trace, &net, alpha, which).unwrap();
        let dense = block.dense().unwrap();
        let v = random_vector(block.param_count(), 25 + alpha as u64);
        let direct = &dense * &v;
        let free = block.apply(&v);
        assert_relative_eq!((direct - &free).norm(), 0.0, epsilon = 1e-12 * free.norm().max(1.0));
        let w = random_vector(block.output_dim(), 27 + alpha as u64);
        let direct_t = dense.tr_mul(&w);
        let free_t = block.apply_transpose(&w);
        assert_relative_eq!(
            (direct_t - &free_t).norm(),
            0.0,
            epsilon = 1e-12 * free_t.norm().max(1.0)
        );
    }
}

#[test]
fn param_jacobian_dense_cap_enforced() {
    let net = random_net(&[300, 300], 2, Activation::Tanh, HeadKind::GaussianIdentity, 28);
    let trace = forward(&net, &random_vector(300, 29)).unwrap();
    let block = param_jacobian_block(&trace, &net, 1, ParamKind::Weights).unwrap();
    assert!(matches!(block.dense(), Err(Error::SizeCap { .. })));
}

#[test]
fn gaussian_head_hessian_is_identity() {
    let h = head_hessian(HeadKind::GaussianIdentity, &random_vector(5, 30));
    assert_eq!(h, DMatrix::identity(5, 5));
}

#[test]
fn softmax_hessian_at_uniform_two_classes() {
    let h = head_hessian(HeadKind::Softmax, &DVector::zeros(2));
    let expected = DMatrix::from_row_slice(2, 2, &[0.25, -0.25, -0.25, 0.25]);
    assert!((h.clone() - expected).norm() < 1e-15);
    let eig = h.symmetric_eigen().eigenvalues;
    let max = eig.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    assert_relative_eq!(max, 0.5, epsilon = 1e-15);
}

// Dense eigendecomposition check on random logits.
#[test]
fn softmax_hessian_spectrum_and_row_sums() {
    for seed in 0..5 {
        let hg = random_vector(6, 31 + seed) * 2.0;
        let h = head_hessian(HeadKind::Softmax, &hg);
        let ones = DVector::from_element(6, 1.0);
        assert!((&h * &ones).norm() < 1e-13, "rows must sum to zero");
        for &lambda in h.symmetric_eigen().eigenvalues.iter() {
            assert!(lambda >= -1e-14 && lambda <= 0.5 + 1e-14);
        }
    }
}

#[test]
fn uniform_logits_give_log_k_loss() {
    let net = NetworkState::new(
        vec![2, 3],
        vec![DMatrix::zeros(3, 2)],
        vec![DVector::zeros(3)],
        DMatrix::zeros(4, 3),
        DVector::zeros(4),
        Activation::Tanh,
        HeadKind::Softmax,
    )
    .unwrap();
    let x = DMatrix::from_column_slice(2, 1, &[0.3, -0.7]);
    let (loss, _) = loss_and_grad(&net, &x, &Targets::Labels(&[2])).unwrap();
    assert_relative_eq!(loss, 4.0_f64.ln(), epsilon = 1e-14);
}

#[test]
fn perfect_gaussian_prediction_has_zero_loss_and_gradient() {
    let net = random_net(&[3, 4], 2, Activation::Tanh, HeadKind::GaussianIdentity, 36);
    let x = DMatrix::from_column_slice(3, 1, random_vector(3, 37).as_slice());
    let trace = forward(&net, &x.column(0).into_owned()).unwrap();
    let y = DMatrix::from_column_slice(2, 1, trace.head_preactivation.as_slice());
    let (loss, grad) = loss_and_grad(&net, &x, &Targets::Values(&y)).unwrap();
    assert!(loss.abs() < 1e-28);
    assert!(grad.readout_weight.norm() < 1e-14);
    assert!(grad.readout_bias.norm() < 1e-14);
}

#[test]
fn softmax_rejects_out_of_range_label() {
    let net = random_net(&[2, 3], 3, Activation::Tanh, HeadKind::Softmax, 38);
    let x = DMatrix::zeros(2, 1);
    assert!(loss_and_grad(&net, &x, &Targets::Labels(&[3])).is_err());
}

// Central-difference oracle over every parameter of a tiny net.
#[test]
fn loss_gradient_matches_central_differences() {
    for (head, seed) in [(HeadKind::Softmax, 40u64), (HeadKind::GaussianIdentity, 41u64)] {
        let net = random_net(&[3, 5, 4], 3, Activation::Tanh, head, seed);
        let mut rng = RngStream::new(seed, 5).rng();
        let x = DMatrix::from_fn(3, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let labels = [0usize, 2, 1, 0];
        let targets = Targets::Labels(&labels);
        let (_, grad) = loss_and_grad(&net, &x, &targets).unwrap();
        let step = 1e-5;

        let eval = |net: &NetworkState| loss_and_grad(net, &x, &Targets::Labels(&labels)).unwrap().0;
        for l in 0..net.depth() {
            for idx in [(0usize, 0usize), (1, 2), (3, 1)] {
                let mut np = net.clone();
                let mut nm = net.clone();
                np.weights[l][idx] += step;
                nm.weights[l][idx] -= step;
                let fd = (eval(&np) - eval(&nm)) / (2.0 * step);
                assert_relative_eq!(grad.weights[l][idx], fd, max_relative = 1e-6, epsilon = 1e-10);
            }
            let mut np = net.clone();
            let mut nm = net.clone();
            np.biases[l][1] += step;
            nm.biases[l][1] -= step;
            let fd = (eval(&np) - eval(&nm)) / (2.0 * step);
            assert_relative_eq!(grad.biases[l][1], fd, max_relative = 1e-6, epsilon = 1e-10);
        }
        let mut np = net.clone();
        let mut nm = net.clone();
        np.readout_weight[(2, 1)] += step;
        nm.readout_weight[(2, 1)] -= step;
        let fd = (eval(&np) - eval(&nm)) / (2.0 * step);
        assert_relative_eq!(grad.readout_weight[(2, 1)], fd, max_relative = 1e-6, epsilon = 1e-10);
    }
}

#[test]
fn serialization_round_trip_is_exact() {
    let net = random_net(&[3, 5, 4], 2, Activation::Tanh, HeadKind::Softmax, 50);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.crsp");
    save_network(&net, &path).unwrap();
    let loaded = load_network(&path).unwrap();
    assert_eq!(net, loaded);
}

#[test]
fn load_rejects_bad_magic() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.crsp");
    std::fs::write(&path, b"XXXX").unwrap();
    assert!(matches!(load_network(&path), Err(Error::Format(_))));
}
