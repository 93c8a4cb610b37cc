use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;

use entropy_loss::entropy::entropy_knn;
use entropy_loss::harness::{
    capture_activations, compare_runs, generate_dataset, generate_points, parse_activation_dump, profile_dump,
    read_points, train_run, write_atomic, write_dataset, ActivationDump, DatasetKind, ExperimentConfig,
    PointDistribution, RunRecord,
};
use entropy_loss::network::{Activation, OptimizerConfig, ToyNetwork};
use entropy_loss::{DuplicatePolicy, EntropyLossConfig, Error, Execution, Result, SampleConvention};

#[derive(Parser)]
#[command(name = "entropy-loss", version, about = "Layer-wise kNN entropy estimation and Entropy Loss training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the differential entropy (nats) of a point file.
    Estimate(EstimateArgs),
    /// Train the toy network and write its run record.
    Train(TrainArgs),
    /// Entropy profile of an activation dump.
    Profile(ProfileArgs),
    /// Compare two run records.
    Compare(CompareArgs),
    /// Write a synthetic dataset or point cloud.
    GenData(GenDataArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Convention {
    BatchRows,
    FeatureChannels,
}

impl From<Convention> for SampleConvention {
    fn from(c: Convention) -> Self {
        match c {
            Convention::BatchRows => SampleConvention::BatchRows,
            Convention::FeatureChannels => SampleConvention::FeatureChannels,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Duplicates {
    Reject,
    Jitter,
}

#[derive(Args)]
struct EstimatorArgs {
    /// Neighbor order.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum)]
    convention: Option<Convention>,
    #[arg(long, value_enum)]
    duplicates: Option<Duplicates>,
    /// Jitter half-width (default: 1e-10 × max(data range, largest magnitude)).
    #[arg(long)]
    jitter_width: Option<f64>,
}

impl EstimatorArgs {
    fn apply(&self, cfg: &mut EntropyLossConfig, seed: u64) {
        if let Some(k) = self.k {
            cfg.k = k;
        }
        if let Some(c) = self.convention {
            cfg.sample_convention = c.into();
        }
        match self.duplicates {
            Some(Duplicates::Reject) => cfg.duplicate_policy = DuplicatePolicy::Reject,
            Some(Duplicates::Jitter) => {
                cfg.duplicate_policy = DuplicatePolicy::Jitter {
                    half_width: self.jitter_width,
                    seed,
                }
            }
            None => {
                if let DuplicatePolicy::Jitter { half_width, .. } = &mut cfg.duplicate_policy {
                    if self.jitter_width.is_some() {
                        *half_width = self.jitter_width;
                    }
                }
            }
        }
    }
}

#[derive(Args)]
struct EstimateArgs {
    file: PathBuf,
    #[command(flatten)]
    estimator: EstimatorArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write estimate.json here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerKind {
    Sgd,
    Momentum,
    Adam,
}

#[derive(Clone, Copy, ValueEnum)]
enum ActivationArg {
    Relu,
    Tanh,
}

#[derive(Args)]
struct TrainArgs {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Run this many consecutive seeds starting at --seed.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// Also run the baseline (entropy weights 0) and write a comparison.
    #[arg(long)]
    paired: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_val: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    hidden_width: Option<usize>,
    #[arg(long)]
    hidden_count: Option<usize>,
    #[arg(long, value_enum)]
    activation: Option<ActivationArg>,
    #[arg(long, value_enum)]
    optimizer: Option<OptimizerKind>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    w_variance: Option<f64>,
    #[arg(long)]
    w_direction: Option<f64>,
    #[command(flatten)]
    estimator: EstimatorArgs,
    /// Record the signed sum of entropy deltas per epoch.
    #[arg(long)]
    log_signed_delta_sum: bool,
    /// Write the final hidden activations on the first validation batch.
    #[arg(long)]
    dump_activations: bool,
}

#[derive(Args)]
struct ProfileArgs {
    /// One dump file with `# layer:` sections, or one file per layer in order.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    #[command(flatten)]
    estimator: EstimatorArgs,
    #[arg(long)]
    w_variance: Option<f64>,
    #[arg(long)]
    w_direction: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    record_a: PathBuf,
    record_b: PathBuf,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    GaussianBlobs,
    RingVsBlob,
    RegressionSine,
    Normal,
    Uniform,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, value_enum)]
    kind: GenKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 512)]
    n_train: usize,
    #[arg(long, default_value_t = 256)]
    n_val: usize,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    /// Point count for `normal` / `uniform`.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// Dimension for `normal` / `uniform` (and blobs).
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    std: f64,
    #[arg(long, default_value_t = 0.0)]
    low: f64,
    #[arg(long, default_value_t = 1.0)]
    high: f64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Train(a) => train(a),
        Command::Profile(a) => profile(a),
        Command::Compare(a) => compare(a),
        Command::GenData(a) => gen_data(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = match e.root() {
                Error::InvalidArgument(_) => "invalid-argument",
                Error::InvalidData(_) | Error::Parse { .. } => "invalid-data",
                Error::Degenerate(_) => "degenerate-sample",
                _ => "internal",
            };
            println!("{}", serde_json::json!({ "error": kind, "message": e.to_string() }));
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn print_json<T: serde::Serialize>(value: &T, out_dir: Option<&Path>, file: &str) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    print!("{text}");
    if let Some(dir) = out_dir {
        write_atomic(&dir.join(file), text.as_bytes())?;
    }
    Ok(())
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let mut cfg = EntropyLossConfig::default();
    a.estimator.apply(&mut cfg, a.seed);
    let points = cfg.sample_convention.samples_of(&read_points(&a.file)?);
    let est = entropy_knn(&points, cfg.k, &cfg.duplicate_policy)?;
    let out = serde_json::json!({
        "value_nats": est.value,
        "n": est.n,
        "d": est.d,
        "k": est.k,
        "file": a.file.display().to_string(),
        "sample_convention": cfg.sample_convention,
        "duplicate_policy": cfg.duplicate_policy,
    });
    print_json(&out, a.out_dir.as_deref(), "estimate.json")
}

fn train_config(a: &TrainArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg = cfg.with_seed(s);
    }
    if let Some(d) = &a.out_dir {
        cfg.out_dir = Some(d.clone());
    }
    macro_rules! set {
        ($field:expr, $value:expr) => {
            if let Some(v) = $value {
                $field = v;
            }
        };
    }
    set!(cfg.epochs, a.epochs);
    set!(cfg.batch_size, a.batch_size);
    if let Some(kind) = &a.dataset {
        cfg.dataset.kind = kind.parse::<DatasetKind>()?;
        if cfg.dataset.kind == DatasetKind::RegressionSine {
            cfg.dataset.input_dim = 1;
        }
    }
    set!(cfg.dataset.n_train, a.n_train);
    set!(cfg.dataset.n_val, a.n_val);
    set!(cfg.dataset.noise, a.noise);
    set!(cfg.network.hidden_width, a.hidden_width);
    set!(cfg.network.hidden_count, a.hidden_count);
    if let Some(act) = a.activation {
        cfg.network.activation = match act {
            ActivationArg::Relu => Activation::Relu,
            ActivationArg::Tanh => Activation::Tanh,
        };
    }
    let lr = a.lr.unwrap_or(cfg.optimizer.lr());
    cfg.optimizer = match (a.optimizer, cfg.optimizer) {
        (None, OptimizerConfig::Sgd { .. }) | (Some(OptimizerKind::Sgd), _) => OptimizerConfig::Sgd { lr },
        (None, OptimizerConfig::Momentum { beta, .. }) => OptimizerConfig::Momentum { lr, beta },
        (Some(OptimizerKind::Momentum), _) => OptimizerConfig::Momentum { lr, beta: 0.9 },
        (None, OptimizerConfig::Adam { beta1, beta2, eps, .. }) => OptimizerConfig::Adam { lr, beta1, beta2, eps },
        (Some(OptimizerKind::Adam), _) => OptimizerConfig::adam(lr),
    };
    set!(cfg.entropy.w_variance, a.w_variance);
    set!(cfg.entropy.w_direction, a.w_direction);
    let seed = cfg.seed;
    a.estimator.apply(&mut cfg.entropy, seed);
    cfg.log_signed_delta_sum |= a.log_signed_delta_sum;
    cfg.validate()?;
    Ok(cfg)
}

fn train(a: TrainArgs) -> Result<()> {
    let base = train_config(&a)?;
    if a.seeds == 0 {
        return Err(Error::InvalidArgument("--seeds must be at least 1".into()));
    }
    let sub_dir = |name: String| base.out_dir.as_ref().map(|d| d.join(name));

    let mut configs = Vec::new();
    for s in 0..a.seeds {
        let seed = base.seed + s;
        // the first run keeps the config's seeds as given
        let mut cfg = if s == 0 { base.clone() } else { base.clone().with_seed(seed) };
        let prefix = if a.seeds > 1 { format!("seed-{seed}/") } else { String::new() };
        if a.paired {
            let mut baseline = cfg.baseline();
            baseline.out_dir = sub_dir(format!("{prefix}baseline"));
            cfg.out_dir = sub_dir(format!("{prefix}entropy"));
            configs.push(baseline);
            configs.push(cfg);
        } else {
            if a.seeds > 1 {
                cfg.out_dir = sub_dir(format!("seed-{seed}"));
            }
            configs.push(cfg);
        }
    }

    let exec = Execution::default();
    let runs = exec
        .map_slice(&configs, |c| train_run(c, exec))
        .into_iter()
        .collect::<Result<Vec<(RunRecord, ToyNetwork)>>>()?;
    if a.dump_activations {
        for (r, net) in &runs {
            let Some(dir) = &r.config.out_dir else {
                warn!("--dump-activations needs --out-dir");
                break;
            };
            let dump = capture_activations(&r.config, net, Some(r.config.epochs - 1))?;
            write_atomic(&dir.join("activations.txt"), dump.to_text().as_bytes())?;
        }
    }
    let records: Vec<RunRecord> = runs.into_iter().map(|(r, _)| r).collect();

    let mut summary = Vec::new();
    if a.paired {
        for pair in records.chunks(2) {
            let report = compare_runs(&pair[0], &pair[1])?;
            print!("seed {}\n{}", pair[1].config.seed, report.to_table());
            if let Some(dir) = pair[1].config.out_dir.as_ref().and_then(|d| d.parent()) {
                write_atomic(
                    &dir.join("comparison.json"),
                    (serde_json::to_string_pretty(&report)? + "\n").as_bytes(),
                )?;
            }
            summary.push(serde_json::to_value(&report)?);
        }
    } else {
        for r in &records {
            let last = r.epochs.last().expect("epochs ≥ 1");
            summary.push(serde_json::json!({
                "seed": r.config.seed,
                "epochs": r.epochs.len(),
                "final_val_accuracy": last.val_accuracy,
                "final_l1": last.l1,
                "final_l2": last.l2,
                "out_dir": r.config.out_dir,
            }));
        }
        println!("{}", serde_json::to_string_pretty(&summary)?);
    }

    Ok(())
}

fn profile(a: ProfileArgs) -> Result<()> {
    let mut dump = ActivationDump {
        epoch: None,
        batch: None,
        layers: Vec::new(),
    };
    for f in &a.files {
        let stem = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let part = parse_activation_dump(&std::fs::read_to_string(f)?, &stem)?;
        dump.epoch = dump.epoch.or(part.epoch);
        dump.batch = dump.batch.or(part.batch);
        dump.layers.extend(part.layers);
    }
    let mut cfg = EntropyLossConfig::default();
    if let Some(w) = a.w_variance {
        cfg.w_variance = w;
    }
    if let Some(w) = a.w_direction {
        cfg.w_direction = w;
    }
    a.estimator.apply(&mut cfg, a.seed);
    let report = profile_dump(&dump, &cfg)?;
    print_json(&report, a.out_dir.as_deref(), "profile.json")
}

fn compare(a: CompareArgs) -> Result<()> {
    let ra = RunRecord::from_json(&std::fs::read_to_string(&a.record_a)?)?;
    let rb = RunRecord::from_json(&std::fs::read_to_string(&a.record_b)?)?;
    let report = compare_runs(&ra, &rb)?;
    eprint!("{}", report.to_table());
    print_json(&report, a.out_dir.as_deref(), "comparison.json")
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let header = |what: &str| vec![format!("{what}, seed {}", a.seed)];
    let dist = match a.kind {
        GenKind::Normal => Some(PointDistribution::Normal { std: a.std }),
        GenKind::Uniform => Some(PointDistribution::Uniform { low: a.low, high: a.high }),
        _ => None,
    };
    if let Some(dist) = dist {
        let d = a.dim.unwrap_or(1);
        let points = generate_points(dist, a.n, d, a.seed)?;
        let mut h = header(&serde_json::to_string(&dist)?);
        h.push(format!("analytic entropy: {:?} nats", dist.entropy(d)));
        let path = a.out_dir.join("points.txt");
        write_atomic(&path, entropy_loss::harness::format_points(&points, &h).as_bytes())?;
        println!("{}", path.display());
        return Ok(());
    }
    let kind = match a.kind {
        GenKind::GaussianBlobs => DatasetKind::GaussianBlobs,
        GenKind::RingVsBlob => DatasetKind::RingVsBlob,
        _ => DatasetKind::RegressionSine,
    };
    let mut spec = entropy_loss::harness::DatasetSpec {
        kind,
        n_train: a.n_train,
        n_val: a.n_val,
        noise: a.noise,
        seed: a.seed,
        ..Default::default()
    };
    if kind == DatasetKind::RegressionSine {
        spec.input_dim = 1;
    } else if let Some(d) = a.dim {
        spec.input_dim = d;
    }
    let (train, val) = generate_dataset(&spec)?;
    let spec_line = serde_json::to_string(&spec)?;
    write_dataset(&a.out_dir.join("train.txt"), &train, &header(&format!("train {spec_line}")))?;
    write_dataset(&a.out_dir.join("val.txt"), &val, &header(&format!("val {spec_line}")))?;
    println!("{}", a.out_dir.display());
    Ok(())
}
