use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::config::DatasetSpec;
use crate::numerics::RngStream;
use crate::{Error, Result};

/// Labeled features; samples are columns.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.nrows()
    }
}

/// Deterministically loads or synthesizes the (train, test) pair.
pub fn load_dataset(spec: &DatasetSpec) -> Result<(Dataset, Dataset)> {
    match spec {
        DatasetSpec::Synthetic {
            classes,
            dim,
            per_class_train,
            per_class_test,
            spread,
            seed,
        } => synthetic(*classes, *dim, *per_class_train, *per_class_test, *spread, *seed),
        DatasetSpec::Csv { path, test_fraction } => csv(path, *test_fraction),
        DatasetSpec::CifarBinary { dir } => cifar_binary(dir),
    }
}

fn synthetic(
    classes: usize,
    dim: usize,
    per_class_train: usize,
    per_class_test: usize,
    spread: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let mut mean_rng = RngStream::new(seed, 0).rng();
    let radius = 3.0 * spread;
    let means: Vec<DVector<f64>> = (0..classes)
        .map(|_| {
            let mut direction =
                DVector::from_fn(dim, |_, _| mean_rng.sample::<f64, _>(StandardNormal));
            let norm = direction.norm();
            if norm > 0.0 {
                direction *= radius / norm;
            }
            direction
        })
        .collect();
    let make_split = |per_class: usize, stream: u64| -> Dataset {
        let mut rng = RngStream::new(seed, stream).rng();
        let total = per_class * classes;
        let mut features = DMatrix::zeros(dim, total);
        let mut labels = Vec::with_capacity(total);
        for class in 0..classes {
            for i in 0..per_class {
                let col = class * per_class + i;
                let noise = DVector::from_fn(dim, |_, _| {
                    spread * rng.sample::<f64, _>(StandardNormal)
                });
                features.set_column(col, &(&means[class] + noise));
                labels.push(class);
            }
        }
        Dataset {
            features,
            labels,
            n_classes: classes,
        }
    };
    Ok((make_split(per_class_train, 1), make_split(per_class_test, 2)))
}

fn csv(path: &Path, test_fraction: f64) -> Result<(Dataset, Dataset)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format(format!("{path:?}: empty file")))?;
    let n_cols = header.split(',').count();
    if n_cols < 2 {
        return Err(Error::Format(format!(
            "{path:?}: need at least one feature column and a label column"
        )));
    }
    let mut features_flat: Vec<f64> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_cols {
            return Err(Error::Format(format!(
                "{path:?}: row {} has {} fields, expected {n_cols}",
                lineno + 2,
                fields.len()
            )));
        }
        for field in &fields[..n_cols - 1] {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Format(format!("{path:?}: bad number {field:?} on row {}", lineno + 2))
            })?;
            features_flat.push(v);
        }
        let label: usize = fields[n_cols - 1].trim().parse().map_err(|_| {
            Error::Format(format!(
                "{path:?}: bad label {:?} on row {}",
                fields[n_cols - 1],
                lineno + 2
            ))
        })?;
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(Error::Format(format!("{path:?}: no data rows")));
    }
    let dim = n_cols - 1;
    let n = labels.len();
    let n_classes = labels.iter().max().unwrap() + 1;
    // Row-major parse order; transpose into column-per-sample.
    let features = DMatrix::from_fn(dim, n, |r, c| features_flat[c * dim + r]);
    let n_test = ((n as f64) * test_fraction).floor() as usize;
    let n_train = n - n_test;
    let take = |range: std::ops::Range<usize>| Dataset {
        features: features.columns(range.start, range.len()).into_owned(),
        labels: labels[range].to_vec(),
        n_classes,
    };
    Ok((take(0..n_train), take(n_train..n)))
}

const CIFAR_RECORD: usize = 3073;
const CIFAR_PIXELS: usize = 3072;
const CIFAR_CLASSES: usize = 10;

fn cifar_binary(dir: &Path) -> Result<(Dataset, Dataset)> {
    let mut files: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "bin"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Format(format!("{dir:?}: no .bin batches found")));
    }
    let is_test = |p: &Path| {
        p.file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.contains("test"))
    };
    let mut train_files: Vec<_> = files.iter().filter(|p| !is_test(p)).cloned().collect();
    let mut test_files: Vec<_> = files.iter().filter(|p| is_test(p)).cloned().collect();
    if test_files.is_empty() {
        // No dedicated test batch: hold out the last file.
        test_files = vec![train_files
            .pop()
            .ok_or_else(|| Error::Format(format!("{dir:?}: only test batches present")))?];
    }
    Ok((read_cifar_files(&train_files)?, read_cifar_files(&test_files)?))
}

fn read_cifar_files(files: &[std::path::PathBuf]) -> Result<Dataset> {
    let mut columns: Vec<f64> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for path in files {
        let bytes = fs::read(path)?;
        if bytes.is_empty() || bytes.len() % CIFAR_RECORD != 0 {
            return Err(Error::Format(format!(
                "{path:?}: length {} is not a multiple of the {CIFAR_RECORD}-byte record",
                bytes.len()
            )));
        }
        for record in bytes.chunks_exact(CIFAR_RECORD) {
            let label = record[0] as usize;
            if label >= CIFAR_CLASSES {
                return Err(Error::Format(format!(
                    "{path:?}: label {label} out of range 0..{CIFAR_CLASSES}"
                )));
            }
            labels.push(label);
            columns.extend(record[1..].iter().map(|&b| b as f64 / 255.0));
        }
    }
    let n = labels.len();
    let features = DMatrix::from_column_slice(CIFAR_PIXELS, n, &columns);
    Ok(Dataset {
        features,
        labels,
        n_classes: CIFAR_CLASSES,
    })
}
