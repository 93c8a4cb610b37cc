use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::experiment::RunRecord;
use super::io::ActivationDump;
use crate::analysis::{log_regression_r2, mean_accuracy, smooth_curve, CurveFit};
use crate::error::{Error, Result};
use crate::loss::{combined_entropy_loss, EntropyLossConfig, SampleConvention};

/// Entropy profile of an activation dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub epoch: Option<usize>,
    pub batch: Option<usize>,
    pub k: usize,
    pub sample_convention: SampleConvention,
    pub layers: Vec<String>,
    pub layer_entropies: Vec<f64>,
    pub deltas: Vec<f64>,
    pub l1: f64,
    pub l2: f64,
    pub total: f64,
    pub signed_delta_sum: f64,
    /// Number of transitions with ΔH < 0.
    pub decreasing_transitions: usize,
    /// Every transition decreases entropy.
    pub monotone_decrease: bool,
}

pub fn profile_dump(dump: &ActivationDump, config: &EntropyLossConfig) -> Result<ProfileReport> {
    let names: Vec<String> = dump.layers.iter().map(|(n, _)| n.clone()).collect();
    let value = combined_entropy_loss(&dump.matrices(), config).map_err(|e| match e {
        Error::Layer { layer, source } => {
            let name = layer.parse::<usize>().ok().and_then(|i| names.get(i).cloned()).unwrap_or(layer);
            Error::Layer { layer: name, source }
        }
        other => other,
    })?;
    let selected = config.selected_layers(names.len())?;
    let decreasing = value.profile.deltas.iter().filter(|&&d| d < 0.0).count();
    Ok(ProfileReport {
        epoch: dump.epoch,
        batch: dump.batch,
        k: config.k,
        sample_convention: config.sample_convention,
        layers: selected.iter().map(|&i| names[i].clone()).collect(),
        monotone_decrease: decreasing == value.profile.deltas.len(),
        decreasing_transitions: decreasing,
        layer_entropies: value.profile.layer_entropies,
        deltas: value.profile.deltas,
        l1: value.l1,
        l2: value.l2,
        total: value.total,
        signed_delta_sum: value.signed_delta_sum,
    })
}

/// Epochs at the end of a run over which the L1 statistic is averaged.
pub const FINAL_EPOCH_WINDOW: usize = 50;
const SMOOTHING_WINDOW: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub entropy_loss_enabled: bool,
    pub epochs: usize,
    pub smoothed_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    /// `None` when the accuracy curve is constant.
    pub log_fit: Option<CurveFit>,
    /// Mean L1 over the final epochs; `None` if any of them lacks a measurement.
    pub final_l1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryDelta {
    pub mean_accuracy: f64,
    pub r_squared: Option<f64>,
    pub final_l1: Option<f64>,
}

/// Summaries of two runs over their common epochs and `b − a` deltas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub a: RunSummary,
    pub b: RunSummary,
    pub delta: SummaryDelta,
    pub common_epochs: usize,
    /// The records had different epoch counts; only the common prefix was compared.
    pub length_mismatch: bool,
}

fn summarize(record: &RunRecord, epochs: usize) -> Result<RunSummary> {
    let curve: Vec<f64> = record.accuracy_curve().into_iter().take(epochs).collect();
    let window = if curve.len() >= SMOOTHING_WINDOW {
        SMOOTHING_WINDOW
    } else {
        (curve.len() - 1) | 1
    };
    let log_fit = match log_regression_r2(&curve) {
        Ok(fit) => Some(fit),
        Err(Error::Degenerate(_)) | Err(Error::InvalidArgument(_)) => None,
        Err(e) => return Err(e),
    };
    let tail = &record.epochs[epochs - epochs.min(FINAL_EPOCH_WINDOW)..epochs];
    let final_l1 = tail
        .iter()
        .map(|e| e.l1)
        .collect::<Option<Vec<f64>>>()
        .map(|v| v.iter().sum::<f64>() / v.len() as f64);
    Ok(RunSummary {
        seed: record.config.seed,
        entropy_loss_enabled: record.config.entropy.is_enabled(),
        epochs,
        smoothed_accuracy: smooth_curve(&curve, window)?,
        mean_accuracy: mean_accuracy(&curve)?,
        log_fit,
        final_l1,
    })
}

pub fn compare_runs(a: &RunRecord, b: &RunRecord) -> Result<ComparisonReport> {
    if a.epochs.is_empty() || b.epochs.is_empty() {
        return Err(Error::invalid_argument("cannot compare an empty run record"));
    }
    let common = a.epochs.len().min(b.epochs.len());
    let (sa, sb) = (summarize(a, common)?, summarize(b, common)?);
    let delta = SummaryDelta {
        mean_accuracy: sb.mean_accuracy - sa.mean_accuracy,
        r_squared: sa.log_fit.zip(sb.log_fit).map(|(x, y)| y.r_squared - x.r_squared),
        final_l1: sa.final_l1.zip(sb.final_l1).map(|(x, y)| y - x),
    };
    Ok(ComparisonReport {
        a: sa,
        b: sb,
        delta,
        common_epochs: common,
        length_mismatch: a.epochs.len() != b.epochs.len(),
    })
}

impl ComparisonReport {
    /// Table with one row per run and a Delta row (`b − a`).
    pub fn to_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into());
        let signed = |v: Option<f64>| v.map(|v| format!("{v:+.4}")).unwrap_or_else(|| "n/a".into());
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>14} {:>10} {:>12}", "run", "mean accuracy", "log R²", "final L1");
        for (name, s) in [("a", &self.a), ("b", &self.b)] {
            let _ = writeln!(
                out,
                "{:<10} {:>14.4} {:>10} {:>12}",
                format!("{name}{}", if s.entropy_loss_enabled { " (EL)" } else { "" }),
                s.mean_accuracy,
                fmt(s.log_fit.map(|f| f.r_squared)),
                fmt(s.final_l1)
            );
        }
        let _ = writeln!(
            out,
            "{:<10} {:>14} {:>10} {:>12}",
            "Delta",
            format!("{:+.4}", self.delta.mean_accuracy),
            signed(self.delta.r_squared),
            signed(self.delta.final_l1)
        );
        if self.length_mismatch {
            let _ = writeln!(out, "warning: epoch counts differ; compared the first {} epochs", self.common_epochs);
        }
        out
    }
}
