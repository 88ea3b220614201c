//! Experiment driver: network construction at criticality, the three-mode
//! training loop, per-epoch metric rows, and deterministic CSV output.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::config::{ExperimentConfig, OptimizerConfig};
use super::dataset::{load_dataset, Dataset};
use crate::fisher::{
    fim_lambda_min_dense, measure_bound_inputs, operator_drift_norm, theorem_bound, FimOperator,
    FimSnapshot,
};
use crate::manifold::{
    make_parameter_groups, riemannian_adam_step, AdamHyper, ParameterGroups, TrainMode,
};
use crate::meanfield::{
    rescale_norm_target, sample_weights, solve_critical, MeanFieldSolution,
};
use crate::network::{
    forward, forward_batch, head_input_jacobian, loss_and_grad, NetworkState, ParamGradient,
    Targets,
};
use crate::numerics::{spectral_summary, QuadratureRule, RngStream};
use crate::{Error, Result};

/// One logged metrics row. `sigma_*` and `mean_square_sv_j` summarize the
/// readout-level input Jacobian `J^{h^g}_{x^0}` evaluated at the probe mean.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_accuracy: f64,
    pub fim_lambda_max: f64,
    pub sigma_max_j: f64,
    pub sigma_min_j: f64,
    pub mean_square_sv_j: f64,
    pub penalty: f64,
    pub mean_scale: f64,
}

/// Theorem-bound comparison at initialization.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BoundComparison {
    pub branch: String,
    pub bound: f64,
    pub measured_lambda_max: f64,
    /// `bound / measured`; at least 1 when the bound holds.
    pub slack_ratio: f64,
}

/// Everything one seed produced.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RunRecord {
    pub seed: u64,
    pub mode: TrainMode,
    pub q_star: f64,
    pub rows: Vec<EpochRow>,
    pub snapshots: Vec<FimSnapshot>,
    pub epoch0_bound: Option<BoundComparison>,
    pub aborted: bool,
}

/// Dataset pair rescaled so the mean train-sample norm hits the mean-field
/// target for the configured `q*`.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Dataset,
    pub test: Dataset,
    pub solution: MeanFieldSolution,
    pub rescale_factor: f64,
}

/// Loads the dataset and applies the global input rescaling. Rescaling is
/// dataset-wide (one factor from the mean train norm) so relative sample
/// geometry survives.
pub fn prepare_data(config: &ExperimentConfig) -> Result<PreparedData> {
    config.validate()?;
    let solution = solve_critical(config.q_star, config.activation, QuadratureRule::standard())?;
    let (mut train, mut test) = load_dataset(&config.dataset)?;
    if train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let target_norm = rescale_norm_target(&solution, config.width)?.sqrt();
    let mean_norm = train
        .features
        .column_iter()
        .map(|c| c.norm())
        .sum::<f64>()
        / train.len() as f64;
    if mean_norm == 0.0 {
        return Err(Error::InvalidInput(
            "cannot rescale a dataset whose mean sample norm is zero".into(),
        ));
    }
    let rescale_factor = target_norm / mean_norm;
    train.features *= rescale_factor;
    test.features *= rescale_factor;
    Ok(PreparedData {
        train,
        test,
        solution,
        rescale_factor,
    })
}

// Stream-id bases partitioning the per-seed randomness.
const STREAM_WEIGHTS: u64 = 0;
const STREAM_BIASES: u64 = 1_000;
const STREAM_READOUT: u64 = 5_000;
const STREAM_SHUFFLE: u64 = 20_000;
const STREAM_FIM: u64 = 600_000;

/// Builds a network at the critical point for the configured `q*`: hidden
/// weights from the chosen ensemble, Gaussian biases at `σ_b`, and a
/// fan-in-scaled Gaussian readout.
pub fn build_network(config: &ExperimentConfig, seed: u64) -> Result<(NetworkState, MeanFieldSolution)> {
    let (train, _) = load_dataset(&config.dataset)?;
    build_network_for_data(config, seed, train.dim(), train.n_classes)
}

fn build_network_for_data(
    config: &ExperimentConfig,
    seed: u64,
    input_dim: usize,
    n_classes: usize,
) -> Result<(NetworkState, MeanFieldSolution)> {
    let solution = solve_critical(config.q_star, config.activation, QuadratureRule::standard())?;
    let mut widths = Vec::with_capacity(config.depth + 1);
    widths.push(input_dim);
    widths.extend(std::iter::repeat_n(config.width, config.depth));
    let mut weights = Vec::with_capacity(config.depth);
    let mut biases = Vec::with_capacity(config.depth);
    for l in 0..config.depth {
        weights.push(sample_weights(
            widths[l + 1],
            widths[l],
            config.init,
            solution.sigma_w,
            RngStream::new(seed, STREAM_WEIGHTS + l as u64),
        )?);
        let mut rng = RngStream::new(seed, STREAM_BIASES + l as u64).rng();
        biases.push(DVector::from_fn(widths[l + 1], |_, _| {
            solution.sigma_b * rng.sample::<f64, _>(StandardNormal)
        }));
    }
    let mut rng = RngStream::new(seed, STREAM_READOUT).rng();
    let readout_scale = 1.0 / (config.width as f64).sqrt();
    let readout_weight = DMatrix::from_fn(n_classes, config.width, |_, _| {
        readout_scale * rng.sample::<f64, _>(StandardNormal)
    });
    let net = NetworkState::new(
        widths,
        weights,
        biases,
        readout_weight,
        DVector::zeros(n_classes),
        config.activation,
        config.head,
    )?;
    Ok((net, solution))
}

/// Elementwise ADAM state for one Euclidean tensor.
#[derive(Debug, Clone)]
struct AdamTensor {
    m: DMatrix<f64>,
    v: DMatrix<f64>,
}

impl AdamTensor {
    fn like(shape: (usize, usize)) -> Self {
        Self {
            m: DMatrix::zeros(shape.0, shape.1),
            v: DMatrix::zeros(shape.0, shape.1),
        }
    }

    fn update(&mut self, param: &mut DMatrix<f64>, grad: &DMatrix<f64>, h: &AdamHyper, t: usize) {
        let b1 = h.beta1;
        let b2 = h.beta2;
        self.m = &self.m * b1 + grad * (1.0 - b1);
        self.v = &self.v * b2 + grad.component_mul(grad) * (1.0 - b2);
        let mc = 1.0 - b1.powi(t as i32);
        let vc = 1.0 - b2.powi(t as i32);
        for ((p, m), v) in param.iter_mut().zip(self.m.iter()).zip(self.v.iter()) {
            *p -= h.learning_rate * (m / mc) / ((v / vc).sqrt() + h.epsilon);
        }
    }
}

struct Trainer {
    net: NetworkState,
    groups: ParameterGroups,
    penalty_lambda: f64,
    hyper_euclidean: AdamHyper,
    hyper_scale: AdamHyper,
    hyper_manifold: AdamHyper,
    weight_states: Vec<AdamTensor>,
    bias_states: Vec<AdamTensor>,
    readout_state: AdamTensor,
    readout_bias_state: AdamTensor,
    step: usize,
}

impl Trainer {
    fn new(net: NetworkState, config: &ExperimentConfig) -> Result<Self> {
        let groups = make_parameter_groups(&net, config.mode)?;
        let o: &OptimizerConfig = &config.optimizer;
        let hyper = |lr: f64| AdamHyper {
            learning_rate: lr,
            beta1: o.beta1,
            beta2: o.beta2,
            epsilon: o.epsilon,
        };
        let weight_states = net.weights.iter().map(|w| AdamTensor::like(w.shape())).collect();
        let bias_states = net.biases.iter().map(|b| AdamTensor::like((b.len(), 1))).collect();
        let readout_state = AdamTensor::like(net.readout_weight.shape());
        let readout_bias_state = AdamTensor::like((net.readout_bias.len(), 1));
        Ok(Self {
            net,
            groups,
            penalty_lambda: config.penalty_lambda,
            hyper_euclidean: hyper(o.lr_euclidean),
            hyper_scale: hyper(o.lr_scale),
            hyper_manifold: hyper(o.lr_manifold),
            weight_states,
            bias_states,
            readout_state,
            readout_bias_state,
            step: 0,
        })
    }

    fn apply_gradient(&mut self, grad: &ParamGradient) -> Result<()> {
        self.step += 1;
        let t = self.step;
        match self.groups.mode {
            TrainMode::Euclidean => {
                for (l, state) in self.weight_states.iter_mut().enumerate() {
                    state.update(&mut self.net.weights[l], &grad.weights[l], &self.hyper_euclidean, t);
                }
            }
            TrainMode::Stiefel | TrainMode::Oblique => {
                for layer_param in &mut self.groups.manifold {
                    let l = layer_param.layer - 1;
                    riemannian_adam_step(
                        &mut layer_param.param,
                        &mut layer_param.state,
                        &grad.weights[l],
                        self.penalty_lambda,
                        &self.hyper_manifold,
                        &self.hyper_scale,
                    )?;
                    self.net.weights[l] = layer_param.param.effective_weight();
                }
            }
        }
        for (l, state) in self.bias_states.iter_mut().enumerate() {
            let mut b = DMatrix::from_column_slice(self.net.biases[l].len(), 1, self.net.biases[l].as_slice());
            let g = DMatrix::from_column_slice(grad.biases[l].len(), 1, grad.biases[l].as_slice());
            state.update(&mut b, &g, &self.hyper_euclidean, t);
            self.net.biases[l] = DVector::from_column_slice(b.as_slice());
        }
        self.readout_state
            .update(&mut self.net.readout_weight, &grad.readout_weight, &self.hyper_euclidean, t);
        let mut rb = DMatrix::from_column_slice(
            self.net.readout_bias.len(),
            1,
            self.net.readout_bias.as_slice(),
        );
        let g = DMatrix::from_column_slice(
            grad.readout_bias.len(),
            1,
            grad.readout_bias.as_slice(),
        );
        self.readout_bias_state.update(&mut rb, &g, &self.hyper_euclidean, t);
        self.net.readout_bias = DVector::from_column_slice(rb.as_slice());
        Ok(())
    }

    fn mean_scale(&self) -> f64 {
        if let Some(s) = self.groups.mean_scale() {
            return s;
        }
        // Euclidean estimate: ‖W‖_F / √fan_in averages σ_W over layers.
        let depth = self.net.depth();
        (0..depth)
            .map(|l| self.net.weights[l].norm() / (self.net.weights[l].ncols() as f64).sqrt())
            .sum::<f64>()
            / depth as f64
    }
}

fn test_accuracy(net: &NetworkState, test: &Dataset) -> Result<f64> {
    if test.is_empty() {
        return Ok(f64::NAN);
    }
    let trace = forward_batch(net, &test.features)?;
    let mut correct = 0usize;
    for (c, &label) in test.labels.iter().enumerate() {
        let col = trace.head_preactivation.column(c);
        let mut best = 0usize;
        let mut best_v = f64::NEG_INFINITY;
        for (k, &v) in col.iter().enumerate() {
            if v > best_v {
                best_v = v;
                best = k;
            }
        }
        if best == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

struct MetricsContext<'a> {
    probe: DMatrix<f64>,
    config: &'a ExperimentConfig,
    seed: u64,
    epoch0_op: Option<FimOperator>,
}

const FIM_TOL: f64 = 1e-3;
const FIM_MAX_ITER: usize = 3_000;
/// Dense eigen path is used below this operator dimension.
const DENSE_EIG_CAP: usize = 4_096;

impl MetricsContext<'_> {
    fn collect(
        &mut self,
        trainer: &Trainer,
        epoch: usize,
        train_loss: f64,
        test: &Dataset,
    ) -> Result<(EpochRow, FimSnapshot)> {
        let net = &trainer.net;
        let op = FimOperator::new(net, net.head.into(), &self.probe)?;
        let lambda_max = op.lambda_max(
            FIM_TOL,
            FIM_MAX_ITER,
            RngStream::new(self.seed, STREAM_FIM + epoch as u64),
        )?;
        let lambda_min = if op.dim() <= DENSE_EIG_CAP {
            Some(fim_lambda_min_dense(&op.dense()?)?)
        } else {
            None
        };
        let drift_norm = match (&self.epoch0_op, epoch) {
            (Some(op0), e) if e > 0 && self.config.track_drift => Some(operator_drift_norm(
                |v| op.apply(v),
                |v| op0.apply(v),
                op.dim(),
                1e-2,
                FIM_MAX_ITER,
                RngStream::new(self.seed, STREAM_FIM + 500_000 + epoch as u64),
            )?),
            _ => None,
        };
        let mean_input = self.probe.column_mean();
        let trace = forward(net, &mean_input)?;
        let j = head_input_jacobian(&trace, net)?;
        let j_summary = spectral_summary(&j)?;
        let row = EpochRow {
            epoch,
            train_loss,
            test_accuracy: test_accuracy(net, test)?,
            fim_lambda_max: lambda_max,
            sigma_max_j: j_summary.sigma_max,
            sigma_min_j: j_summary.sigma_min,
            mean_square_sv_j: j_summary.mean_square_sv,
            penalty: trainer.groups.penalty_value(trainer.penalty_lambda),
            mean_scale: trainer.mean_scale(),
        };
        let snapshot = FimSnapshot {
            epoch,
            lambda_max,
            lambda_min,
            drift_norm,
        };
        if epoch == 0 {
            self.epoch0_op = Some(op);
        }
        Ok((row, snapshot))
    }
}

fn train_one_seed(
    config: &ExperimentConfig,
    data: &PreparedData,
    seed: u64,
) -> Result<RunRecord> {
    let (net, _) = build_network_for_data(config, seed, data.train.dim(), data.train.n_classes)?;
    let mut trainer = Trainer::new(net, config)?;
    let n_train = data.train.len();
    let probe_size = config.probe_size.min(if data.test.is_empty() {
        n_train
    } else {
        data.test.len()
    });
    let probe_source = if data.test.is_empty() {
        &data.train
    } else {
        &data.test
    };
    let probe = probe_source
        .features
        .columns(0, probe_size)
        .into_owned();
    let mut metrics = MetricsContext {
        probe,
        config,
        seed,
        epoch0_op: None,
    };

    let mut rows = Vec::new();
    let mut snapshots = Vec::new();
    let epoch0_loss = loss_and_grad(
        &trainer.net,
        &data.train.features,
        &Targets::Labels(&data.train.labels),
    )?
    .0;
    let (row0, snap0) = metrics.collect(&trainer, 0, epoch0_loss, &data.test)?;
    let epoch0_bound = {
        let inputs = measure_bound_inputs(&trainer.net, &metrics.probe)?;
        let (branch, bound) = theorem_bound(&inputs)?;
        Some(BoundComparison {
            branch: branch.to_string(),
            bound,
            measured_lambda_max: row0.fim_lambda_max,
            slack_ratio: bound / row0.fim_lambda_max.max(f64::MIN_POSITIVE),
        })
    };
    rows.push(row0);
    snapshots.push(snap0);

    let mut aborted = false;
    'epochs: for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..n_train).collect();
        let mut shuffle_rng = RngStream::new(seed, STREAM_SHUFFLE + epoch as u64).rng();
        order.shuffle(&mut shuffle_rng);
        let mut loss_acc = 0.0;
        for chunk in order.chunks(config.minibatch) {
            let mut batch_x = DMatrix::zeros(data.train.dim(), chunk.len());
            let mut batch_y = Vec::with_capacity(chunk.len());
            for (dst, &src) in chunk.iter().enumerate() {
                batch_x.set_column(dst, &data.train.features.column(src));
                batch_y.push(data.train.labels[src]);
            }
            let (loss, grad) = loss_and_grad(&trainer.net, &batch_x, &Targets::Labels(&batch_y))?;
            if !loss.is_finite() {
                aborted = true;
                break 'epochs;
            }
            trainer.apply_gradient(&grad)?;
            loss_acc += loss * chunk.len() as f64;
        }
        let train_loss = loss_acc / n_train as f64;
        if !train_loss.is_finite() {
            aborted = true;
            break;
        }
        if epoch % config.stats_every == 0 || epoch == config.epochs {
            let (row, snap) = metrics.collect(&trainer, epoch, train_loss, &data.test)?;
            if !row.fim_lambda_max.is_finite() || !row.sigma_max_j.is_finite() {
                aborted = true;
                break;
            }
            rows.push(row);
            snapshots.push(snap);
        }
    }

    Ok(RunRecord {
        seed,
        mode: config.mode,
        q_star: config.q_star,
        rows,
        snapshots,
        epoch0_bound,
        aborted,
    })
}

/// Runs every configured seed (concurrently, one worker per seed, results
/// collected in seed order), writes one CSV per seed plus the summary
/// files, and returns the records.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    config.validate()?;
    let data = prepare_data(config)?;
    let records: Vec<Result<RunRecord>> = std::thread::scope(|scope| {
        let handles: Vec<_> = config
            .seeds
            .iter()
            .map(|&seed| {
                let data_ref = &data;
                scope.spawn(move || train_one_seed(config, data_ref, seed))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("seed worker panicked")).collect()
    });
    let records: Vec<RunRecord> = records.into_iter().collect::<Result<_>>()?;

    std::fs::create_dir_all(&config.output_dir)?;
    for record in &records {
        let path = config.output_dir.join(format!("run_seed{}.csv", record.seed));
        write_record_csv(record, &path)?;
    }
    let summary = super::summary::summarize(&records)?;
    super::summary::write_summary_files(&summary, &config.output_dir)?;
    Ok(records)
}

pub const CSV_HEADER: &str = "epoch,train_loss,test_accuracy,fim_lambda_max,sigma_max_j,sigma_min_j,mean_square_sv_j,penalty,mean_scale";

/// Writes one record's rows; floats carry 17 significant digits.
pub fn write_record_csv(record: &RunRecord, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &record.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.epoch,
            fmt_f64(r.train_loss),
            fmt_f64(r.test_accuracy),
            fmt_f64(r.fim_lambda_max),
            fmt_f64(r.sigma_max_j),
            fmt_f64(r.sigma_min_j),
            fmt_f64(r.mean_square_sv_j),
            fmt_f64(r.penalty),
            fmt_f64(r.mean_scale),
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
