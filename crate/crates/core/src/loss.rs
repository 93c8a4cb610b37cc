//! Entropy Loss: a variance term and a direction term over the per-layer
//! entropy deltas, plus their gradients with respect to the layer activations.

use serde::{Deserialize, Serialize};

use crate::entropy::{entropy_knn_with, entropy_knn_with_gradient, layer_deltas, DuplicatePolicy, EntropyProfile};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::matrix::SampleMatrix;

/// Which axis of a layer's activation matrix indexes the samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleConvention {
    /// Each batch element (row) is one sample of dimension = layer width.
    #[default]
    BatchRows,
    /// Each channel (column) is one sample of dimension = batch size.
    FeatureChannels,
}

impl SampleConvention {
    pub fn samples_of(self, activations: &SampleMatrix) -> SampleMatrix {
        match self {
            SampleConvention::BatchRows => activations.clone(),
            SampleConvention::FeatureChannels => activations.transpose(),
        }
    }

    /// Maps a gradient w.r.t. the samples back onto the activation layout.
    fn to_activation_layout(self, grad: SampleMatrix) -> SampleMatrix {
        match self {
            SampleConvention::BatchRows => grad,
            SampleConvention::FeatureChannels => grad.transpose(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EntropyLossConfig {
    pub k: usize,
    pub w_variance: f64,
    pub w_direction: f64,
    pub sample_convention: SampleConvention,
    pub duplicate_policy: DuplicatePolicy,
    /// Indices of the participating layers, in order. `None` means all layers.
    pub layers: Option<Vec<usize>>,
}

impl Default for EntropyLossConfig {
    fn default() -> Self {
        EntropyLossConfig {
            k: 1,
            w_variance: 1.0,
            w_direction: 0.1,
            sample_convention: SampleConvention::BatchRows,
            duplicate_policy: DuplicatePolicy::Reject,
            layers: None,
        }
    }
}

impl EntropyLossConfig {
    /// A config with both weights zero: entropies are still measurable but
    /// contribute nothing to training.
    pub fn disabled() -> Self {
        EntropyLossConfig {
            w_variance: 0.0,
            w_direction: 0.0,
            ..Default::default()
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.w_variance > 0.0 || self.w_direction > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid_argument("entropy loss k must be at least 1"));
        }
        for (name, w) in [("w_variance", self.w_variance), ("w_direction", self.w_direction)] {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::invalid_argument(format!("{name} must be a finite value ≥ 0, got {w}")));
            }
        }
        Ok(())
    }

    /// Participating layer indices out of `layer_count`.
    pub fn selected_layers(&self, layer_count: usize) -> Result<Vec<usize>> {
        let sel = match &self.layers {
            None => (0..layer_count).collect::<Vec<_>>(),
            Some(list) => list.clone(),
        };
        if let Some(&bad) = sel.iter().find(|&&l| l >= layer_count) {
            return Err(Error::invalid_argument(format!(
                "layer {bad} selected but only {layer_count} layers exist"
            )));
        }
        if sel.len() < 2 {
            return Err(Error::invalid_argument(format!(
                "entropy loss needs at least 2 participating layers, got {}",
                sel.len()
            )));
        }
        Ok(sel)
    }
}

/// Value of the Entropy Loss and the profile it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyLossValue {
    /// Variance term, ≥ 0.
    pub l1: f64,
    /// Direction term, ≤ 0.
    pub l2: f64,
    /// `w_variance · l1 + w_direction · l2`.
    pub total: f64,
    /// `Σ ΔH_n` with sign, for observing which way the deltas move.
    pub signed_delta_sum: f64,
    pub profile: EntropyProfile,
}

fn non_empty(deltas: &[f64]) -> Result<()> {
    if deltas.is_empty() {
        return Err(Error::invalid_argument("entropy delta list is empty"));
    }
    Ok(())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// `L1 = Σ_n (ΔH_n − mean ΔH)² / N`, with N the number of deltas.
pub fn variance_loss(deltas: &[f64]) -> Result<f64> {
    non_empty(deltas)?;
    let m = mean(deltas);
    Ok(deltas.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / deltas.len() as f64)
}

/// `L2 = −Σ_n ΔH_n²`.
pub fn direction_loss(deltas: &[f64]) -> Result<f64> {
    non_empty(deltas)?;
    Ok(-deltas.iter().map(|d| d * d).sum::<f64>())
}

/// `∂total/∂ΔH_n = w_variance · 2(ΔH_n − mean)/N − w_direction · 2ΔH_n`.
fn delta_sensitivities(deltas: &[f64], config: &EntropyLossConfig) -> Vec<f64> {
    let n = deltas.len() as f64;
    let m = mean(deltas);
    deltas
        .iter()
        .map(|&d| config.w_variance * 2.0 * (d - m) / n - config.w_direction * 2.0 * d)
        .collect()
}

/// Per-layer chain coefficients `∂total/∂H_ℓ = ∂total/∂ΔH_{ℓ−1} − ∂total/∂ΔH_ℓ`.
pub fn entropy_sensitivities(deltas: &[f64], config: &EntropyLossConfig) -> Vec<f64> {
    let g = delta_sensitivities(deltas, config);
    (0..=deltas.len())
        .map(|l| {
            let from_prev = if l > 0 { g[l - 1] } else { 0.0 };
            let from_next = if l < g.len() { g[l] } else { 0.0 };
            from_prev - from_next
        })
        .collect()
}

pub(crate) fn assemble(entropies: Vec<f64>, config: &EntropyLossConfig) -> Result<EntropyLossValue> {
    let profile = layer_deltas(&entropies)?;
    let l1 = variance_loss(&profile.deltas)?;
    let l2 = direction_loss(&profile.deltas)?;
    Ok(EntropyLossValue {
        l1,
        l2,
        total: config.w_variance * l1 + config.w_direction * l2,
        signed_delta_sum: profile.deltas.iter().sum(),
        profile,
    })
}

/// Estimates every participating layer's entropy (and gradient, if asked).
/// One entry per selected layer, in selection order.
fn per_layer(
    layer_activations: &[SampleMatrix],
    config: &EntropyLossConfig,
    with_gradient: bool,
    exec: Execution,
) -> Result<(Vec<usize>, Vec<(f64, Option<SampleMatrix>)>)> {
    config.validate()?;
    let selected = config.selected_layers(layer_activations.len())?;
    let results = exec.map_slice(&selected, |&l| {
        let samples = config.sample_convention.samples_of(&layer_activations[l]);
        let policy = match config.duplicate_policy {
            DuplicatePolicy::Jitter { half_width, seed } => DuplicatePolicy::Jitter {
                half_width,
                seed: seed.wrapping_add(l as u64),
            },
            p => p,
        };
        let result = if with_gradient {
            entropy_knn_with_gradient(&samples, config.k, &policy, exec).map(|(est, g)| (est.value, Some(g)))
        } else {
            entropy_knn_with(&samples, config.k, &policy, exec).map(|est| (est.value, None))
        };
        result.map_err(|e| e.in_layer(l))
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok((selected, results))
}

/// Entropy of each participating layer, in selection order.
pub fn layer_entropies(layer_activations: &[SampleMatrix], config: &EntropyLossConfig) -> Result<Vec<f64>> {
    let (_, results) = per_layer(layer_activations, config, false, Execution::default())?;
    Ok(results.into_iter().map(|(h, _)| h).collect())
}

/// Per-layer entropies, their deltas, and the weighted Entropy Loss.
pub fn combined_entropy_loss(
    layer_activations: &[SampleMatrix],
    config: &EntropyLossConfig,
) -> Result<EntropyLossValue> {
    assemble(layer_entropies(layer_activations, config)?, config)
}

/// `∂total/∂activations` for every layer (zero for layers not selected).
pub fn entropy_loss_gradients(
    layer_activations: &[SampleMatrix],
    config: &EntropyLossConfig,
) -> Result<Vec<SampleMatrix>> {
    entropy_loss_with_gradients(layer_activations, config, Execution::default()).map(|(_, g)| g)
}

/// Loss value and activation gradients from one pass of neighbor searches.
pub fn entropy_loss_with_gradients(
    layer_activations: &[SampleMatrix],
    config: &EntropyLossConfig,
    exec: Execution,
) -> Result<(EntropyLossValue, Vec<SampleMatrix>)> {
    let (selected, results) = per_layer(layer_activations, config, true, exec)?;
    let (entropies, grads): (Vec<f64>, Vec<Option<SampleMatrix>>) = results.into_iter().unzip();
    let value = assemble(entropies, config)?;
    let coefs = entropy_sensitivities(&value.profile.deltas, config);

    let mut out: Vec<SampleMatrix> = layer_activations
        .iter()
        .map(|a| SampleMatrix::zeros(a.rows(), a.cols()))
        .collect();
    for ((&l, grad), &c) in selected.iter().zip(grads).zip(&coefs) {
        let grad = grad.expect("gradient requested");
        let g = config.sample_convention.to_activation_layout(grad.scaled(c));
        for (o, v) in out[l].as_mut_slice().iter_mut().zip(g.as_slice()) {
            *o += v;
        }
    }
    Ok((value, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn variance_examples() {
        assert_eq!(variance_loss(&[-1.0, -1.0, -1.0]).unwrap(), 0.0);
        assert_eq!(variance_loss(&[0.0, -2.0]).unwrap(), 1.0);
        assert_abs_diff_eq!(variance_loss(&[-0.6, -0.3]).unwrap(), 0.0225, epsilon = 1e-15);
        assert!(matches!(variance_loss(&[]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn direction_examples() {
        assert_eq!(direction_loss(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(direction_loss(&[-1.0, -1.0]).unwrap(), -2.0);
        assert_eq!(direction_loss(&[0.5, -0.5]).unwrap(), -0.5);
        assert!(direction_loss(&[]).is_err());
    }

    #[test]
    fn sensitivities_touch_only_adjacent_deltas() {
        // a perturbation of H_ℓ changes ΔH_{ℓ−1} by +1 and ΔH_ℓ by −1
        let cfg = EntropyLossConfig::default();
        let deltas = [-0.5, -1.0, 0.2];
        let g = delta_sensitivities(&deltas, &cfg);
        let c = entropy_sensitivities(&deltas, &cfg);
        assert_eq!(c.len(), 4);
        assert_eq!(c[0], -g[0]);
        assert_eq!(c[2], g[1] - g[2]);
        assert_eq!(c[3], g[2]);
    }

    #[test]
    fn config_validation() {
        let cfg = EntropyLossConfig { k: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = EntropyLossConfig { w_direction: -1.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = EntropyLossConfig { layers: Some(vec![0, 5]), ..Default::default() };
        assert!(cfg.selected_layers(3).is_err());
        assert!(!EntropyLossConfig::disabled().is_enabled());
    }

    #[test]
    fn estimator_errors_carry_layer_index() {
        let ok = SampleMatrix::from_rows(&[[0.0, 0.0], [1.0, 0.5], [0.2, 2.0]]).unwrap();
        let dup = SampleMatrix::from_rows(&[[0.0, 0.0], [0.0, 0.0], [0.2, 2.0]]).unwrap();
        let err = combined_entropy_loss(&[ok.clone(), dup, ok], &EntropyLossConfig::default()).unwrap_err();
        match err {
            Error::Layer { layer, source } => {
                assert_eq!(layer, "1");
                assert!(matches!(*source, Error::Degenerate(_)));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
