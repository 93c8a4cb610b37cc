use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{generate_dataset, DatasetSpec};
use super::io::{write_atomic, ActivationDump};
use crate::entropy::DuplicatePolicy;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::loss::{layer_entropies, EntropyLossConfig};
use crate::network::{
    evaluate, forward, init_network, Activation, Dataset, EntropyAttachment, NetworkDims, OptimizerConfig,
    ToyNetwork, Trainer,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub hidden_width: usize,
    pub hidden_count: usize,
    pub activation: Activation,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            hidden_width: 32,
            hidden_count: 4,
            activation: Activation::Relu,
        }
    }
}

/// Everything that determines a run. Serialized verbatim into its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub network: NetworkConfig,
    pub optimizer: OptimizerConfig,
    pub entropy: EntropyLossConfig,
    pub attachment: EntropyAttachment,
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds initialization and minibatch shuffling.
    pub seed: u64,
    /// Record `Σ ΔH_n` (signed) per epoch next to L1 and L2.
    pub log_signed_delta_sum: bool,
    /// Where artifacts go. Not serialized, so records are location independent.
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSpec::default(),
            network: NetworkConfig::default(),
            optimizer: OptimizerConfig::adam(1e-3),
            entropy: EntropyLossConfig {
                duplicate_policy: DuplicatePolicy::jitter(),
                ..EntropyLossConfig::default()
            },
            attachment: EntropyAttachment::PostActivation,
            epochs: 200,
            batch_size: 64,
            seed: 0,
            log_signed_delta_sum: false,
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    /// Sets the run seed, the dataset seed and the jitter seed (if jittering).
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.dataset.seed = seed;
        if let DuplicatePolicy::Jitter { seed: js, .. } = &mut self.entropy.duplicate_policy {
            *js = seed;
        }
        self
    }

    /// The same run with both entropy weights zero.
    pub fn baseline(&self) -> Self {
        let mut c = self.clone();
        c.entropy.w_variance = 0.0;
        c.entropy.w_direction = 0.0;
        c
    }

    pub fn dims(&self) -> NetworkDims {
        NetworkDims {
            input_dim: self.dataset.input_dim,
            hidden_width: self.network.hidden_width,
            hidden_count: self.network.hidden_count,
            output_dim: self.dataset.output_dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.dims().validate()?;
        self.entropy.validate()?;
        if self.epochs == 0 {
            return Err(Error::invalid_argument("epochs must be at least 1"));
        }
        if self.batch_size < 2 || self.batch_size > self.dataset.n_train {
            return Err(Error::invalid_argument(format!(
                "batch_size must lie in 2..={} (n_train), got {}",
                self.dataset.n_train, self.batch_size
            )));
        }
        if !(self.optimizer.lr() >= 0.0) {
            return Err(Error::invalid_argument("learning rate must be ≥ 0"));
        }
        Ok(())
    }
}

/// Evaluation before the first update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialEval {
    pub val_accuracy: f64,
    pub layer_entropies: Option<Vec<f64>>,
}

/// Epoch means over the training steps. Entropy fields are `None` if no step
/// in the epoch could be measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub task_loss: f64,
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    pub total_loss: f64,
    pub layer_entropies: Option<Vec<f64>>,
    /// Accuracy for classification datasets, MSE for regression.
    pub val_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signed_delta_sum: Option<f64>,
    /// Kept out of the serialized record so records are byte-reproducible;
    /// written to `timings.json` instead.
    #[serde(skip)]
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub initial: InitialEval,
    pub epochs: Vec<EpochRecord>,
}

impl RunRecord {
    pub fn accuracy_curve(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.val_accuracy).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }

    /// Plot-ready table: one row per epoch.
    pub fn curves_tsv(&self) -> String {
        let layers = self.config.network.hidden_count;
        let mut out = String::from("epoch\ttask_loss\tl1\tl2\ttotal_loss\tval_accuracy");
        for l in 0..layers {
            let _ = write!(out, "\tH_{l}");
        }
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|v| format!("{v:?}")).unwrap_or_else(|| "nan".into());
        for e in &self.epochs {
            let _ = write!(
                out,
                "{}\t{:?}\t{}\t{}\t{:?}\t{:?}",
                e.epoch,
                e.task_loss,
                opt(e.l1),
                opt(e.l2),
                e.total_loss,
                e.val_accuracy
            );
            match &e.layer_entropies {
                Some(h) => h.iter().for_each(|v| {
                    let _ = write!(out, "\t{v:?}");
                }),
                None => (0..layers).for_each(|_| out.push_str("\tnan")),
            }
            out.push('\n');
        }
        out
    }

    /// Writes `config.json`, `run_record.json`, `curves.tsv` and `timings.json`.
    pub fn persist(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join("config.json"), (serde_json::to_string_pretty(&self.config)? + "\n").as_bytes())?;
        write_atomic(&dir.join("run_record.json"), self.to_json()?.as_bytes())?;
        write_atomic(&dir.join("curves.tsv"), self.curves_tsv().as_bytes())?;
        let timings: Vec<f64> = self.epochs.iter().map(|e| e.wall_time_s).collect();
        write_atomic(
            &dir.join("timings.json"),
            (serde_json::to_string_pretty(&serde_json::json!({ "epoch_wall_time_s": timings }))? + "\n").as_bytes(),
        )?;
        Ok(())
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn initial_eval(config: &ExperimentConfig, net: &ToyNetwork, val: &Dataset) -> Result<InitialEval> {
    let rows: Vec<usize> = (0..config.batch_size.min(val.len())).collect();
    let pass = forward(net, &val.inputs.select_rows(&rows))?;
    Ok(InitialEval {
        val_accuracy: evaluate(net, val)?,
        layer_entropies: layer_entropies(config.attachment.layers(&pass), &config.entropy).ok(),
    })
}

/// Trains for `config.epochs` epochs, evaluating on the validation set after
/// each, and persists the record when `out_dir` is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunRecord> {
    run_experiment_with(config, Execution::default())
}

pub fn run_experiment_with(config: &ExperimentConfig, exec: Execution) -> Result<RunRecord> {
    train_run(config, exec).map(|(record, _)| record)
}

/// [`run_experiment`], also returning the trained network.
pub fn train_run(config: &ExperimentConfig, exec: Execution) -> Result<(RunRecord, ToyNetwork)> {
    config.validate()?;
    let (train, val) = generate_dataset(&config.dataset)?;
    let mut net = init_network(config.dims(), config.network.activation, config.seed)?;
    let mut trainer = Trainer::new(&net, config.optimizer, config.entropy.clone());
    trainer.attachment = config.attachment;
    trainer.exec = exec;

    let initial = initial_eval(config, &net, &val)?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5EED));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let batches = train.len() / config.batch_size;
    let mut epochs = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let started = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let (mut task, mut total, mut l1, mut l2, mut signed) = (vec![], vec![], vec![], vec![], vec![]);
        let mut entropies: Vec<Vec<f64>> = Vec::new();
        for b in 0..batches {
            let idx = &order[b * config.batch_size..(b + 1) * config.batch_size];
            let batch = train.inputs.select_rows(idx);
            let targets = train.targets.select(idx);
            let m = trainer.step(&mut net, &batch, &targets).map_err(|e| e.in_epoch(epoch))?;
            task.push(m.task_loss);
            total.push(m.total);
            if let Some(v) = m.entropy {
                l1.push(v.l1);
                l2.push(v.l2);
                signed.push(v.signed_delta_sum);
                entropies.push(v.profile.layer_entropies);
            }
        }
        let layer_means = (!entropies.is_empty()).then(|| {
            (0..entropies[0].len())
                .map(|l| entropies.iter().map(|h| h[l]).sum::<f64>() / entropies.len() as f64)
                .collect()
        });
        let record = EpochRecord {
            epoch,
            task_loss: mean(&task).unwrap_or(f64::NAN),
            l1: mean(&l1),
            l2: mean(&l2),
            total_loss: mean(&total).unwrap_or(f64::NAN),
            layer_entropies: layer_means,
            val_accuracy: evaluate(&net, &val)?,
            signed_delta_sum: if config.log_signed_delta_sum { mean(&signed) } else { None },
            wall_time_s: started.elapsed().as_secs_f64(),
        };
        if epoch % 50 == 0 || epoch + 1 == config.epochs {
            info!(
                "seed {} epoch {epoch}: task {:.4} l1 {:?} val {:.4}",
                config.seed, record.task_loss, record.l1, record.val_accuracy
            );
        }
        epochs.push(record);
    }

    let record = RunRecord {
        config: config.clone(),
        initial,
        epochs,
    };
    if let Some(dir) = &config.out_dir {
        record.persist(dir)?;
    }
    Ok((record, net))
}

/// Hidden activations of `net` on the first validation batch of `config`'s dataset.
pub fn capture_activations(config: &ExperimentConfig, net: &ToyNetwork, epoch: Option<usize>) -> Result<ActivationDump> {
    let (_, val) = generate_dataset(&config.dataset)?;
    let rows: Vec<usize> = (0..config.batch_size.min(val.len())).collect();
    let pass = forward(net, &val.inputs.select_rows(&rows))?;
    Ok(ActivationDump {
        epoch,
        batch: Some(0),
        layers: config
            .attachment
            .layers(&pass)
            .iter()
            .enumerate()
            .map(|(i, m)| (format!("hidden_{i}"), m.clone()))
            .collect(),
    })
}

/// Runs independent configurations, in parallel when enabled. Output order
/// matches input order.
pub fn run_sweep(configs: &[ExperimentConfig], exec: Execution) -> Vec<Result<RunRecord>> {
    exec.map_slice(configs, |c| run_experiment_with(c, exec))
}
