//! Cross-seed aggregation: mean/stddev metric curves, the λ_max-vs-σ_max²
//! correlation, the theorem-bound table at epoch 0, and per-seed drift
//! reports.

use std::path::Path;

use super::experiment::{fmt_f64, BoundComparison, RunRecord, CSV_HEADER};
use crate::fisher::{fim_drift, DriftReport};
use crate::numerics::pearson;
use crate::{Error, Result};

#[derive(Debug, Clone, serde::Serialize)]
pub struct EpochAggregate {
    pub epoch: usize,
    pub n_seeds: usize,
    pub mean: MetricVector,
    pub stddev: MetricVector,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct MetricVector {
    pub train_loss: f64,
    pub test_accuracy: f64,
    pub fim_lambda_max: f64,
    pub sigma_max_j: f64,
    pub sigma_min_j: f64,
    pub mean_square_sv_j: f64,
    pub penalty: f64,
    pub mean_scale: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct BoundRow {
    pub seed: u64,
    #[serde(flatten)]
    pub comparison: BoundComparison,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct Summary {
    pub n_runs: usize,
    pub aborted_seeds: Vec<u64>,
    pub per_epoch: Vec<EpochAggregate>,
    /// Pearson correlation between `λ_max(FIM)` and `σ_max²(J)` over all
    /// logged rows (present when at least 3 rows with variance exist).
    pub pearson_lambda_vs_sigma_sq: Option<f64>,
    /// Same correlation restricted to epoch-0 rows across seeds.
    pub pearson_epoch0: Option<f64>,
    pub bound_table: Vec<BoundRow>,
    pub drift: Vec<DriftReport>,
}

/// Aggregates run records into a summary.
pub fn summarize(records: &[RunRecord]) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::InvalidInput("no run records to summarize".into()));
    }
    let mut epochs: Vec<usize> = records
        .iter()
        .flat_map(|r| r.rows.iter().map(|row| row.epoch))
        .collect();
    epochs.sort_unstable();
    epochs.dedup();

    let metric = |row: &super::experiment::EpochRow| -> [f64; 8] {
        [
            row.train_loss,
            row.test_accuracy,
            row.fim_lambda_max,
            row.sigma_max_j,
            row.sigma_min_j,
            row.mean_square_sv_j,
            row.penalty,
            row.mean_scale,
        ]
    };
    let to_vector = |v: [f64; 8]| MetricVector {
        train_loss: v[0],
        test_accuracy: v[1],
        fim_lambda_max: v[2],
        sigma_max_j: v[3],
        sigma_min_j: v[4],
        mean_square_sv_j: v[5],
        penalty: v[6],
        mean_scale: v[7],
    };

    let mut per_epoch = Vec::with_capacity(epochs.len());
    for &epoch in &epochs {
        let rows: Vec<[f64; 8]> = records
            .iter()
            .filter_map(|r| r.rows.iter().find(|row| row.epoch == epoch))
            .map(metric)
            .collect();
        let n = rows.len();
        let mut mean = [0.0; 8];
        for row in &rows {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n as f64;
            }
        }
        let mut var = [0.0; 8];
        if n > 1 {
            for row in &rows {
                for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                    *s += (v - m) * (v - m) / (n - 1) as f64;
                }
            }
        }
        per_epoch.push(EpochAggregate {
            epoch,
            n_seeds: n,
            mean: to_vector(mean),
            stddev: to_vector(var.map(f64::sqrt)),
        });
    }

    let all_rows: Vec<(f64, f64)> = records
        .iter()
        .flat_map(|r| r.rows.iter())
        .map(|row| (row.fim_lambda_max, row.sigma_max_j * row.sigma_max_j))
        .collect();
    let correlate = |pairs: &[(f64, f64)]| -> Option<f64> {
        if pairs.len() < 3 {
            return None;
        }
        let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        pearson(&xs, &ys).ok()
    };
    let epoch0_rows: Vec<(f64, f64)> = records
        .iter()
        .filter_map(|r| r.rows.first())
        .filter(|row| row.epoch == 0)
        .map(|row| (row.fim_lambda_max, row.sigma_max_j * row.sigma_max_j))
        .collect();

    let bound_table = records
        .iter()
        .filter_map(|r| {
            r.epoch0_bound.as_ref().map(|c| BoundRow {
                seed: r.seed,
                comparison: c.clone(),
            })
        })
        .collect();
    let drift = records
        .iter()
        .filter(|r| !r.snapshots.is_empty())
        .map(|r| fim_drift(&r.snapshots))
        .collect::<Result<Vec<_>>>()?;

    Ok(Summary {
        n_runs: records.len(),
        aborted_seeds: records.iter().filter(|r| r.aborted).map(|r| r.seed).collect(),
        per_epoch,
        pearson_lambda_vs_sigma_sq: correlate(&all_rows),
        pearson_epoch0: correlate(&epoch0_rows),
        bound_table,
        drift,
    })
}

/// Writes `summary.json` and `mean_curves.csv` into the output directory.
pub fn write_summary_files(summary: &Summary, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(summary)?;
    std::fs::write(dir.join("summary.json"), json)?;

    let mut csv = String::new();
    csv.push_str(CSV_HEADER);
    csv.push_str(",n_seeds\n");
    for agg in &summary.per_epoch {
        let m = &agg.mean;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            agg.epoch,
            fmt_f64(m.train_loss),
            fmt_f64(m.test_accuracy),
            fmt_f64(m.fim_lambda_max),
            fmt_f64(m.sigma_max_j),
            fmt_f64(m.sigma_min_j),
            fmt_f64(m.mean_square_sv_j),
            fmt_f64(m.penalty),
            fmt_f64(m.mean_scale),
            agg.n_seeds,
        ));
    }
    std::fs::write(dir.join("mean_curves.csv"), csv)?;
    Ok(())
}
