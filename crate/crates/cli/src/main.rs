use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use histoconv::augment::{augment_image, AugmentConfig};
use histoconv::checkpoint;
use histoconv::dataset::{
    breakhis_like_patients, build_index, carve_validation, load_records, patient_exclusive_split, read_rgb, records_of, synthetic::BREAKHIS_COUNTS,
    write_corpus, write_png, CorpusContent, DatasetIndex, FiveClass, LabeledSet, Side, SplitSpec,
};
use histoconv::eval::evaluate;
use histoconv::metrics::compute_metrics_named;
use histoconv::model::{build_model, ModelConfig};
use histoconv::optim::OptimizerKind;
use histoconv::sweep::{reference_csv, sweep, write_sweep_csv};
use histoconv::train::{train_with, write_curves, TrainConfig, ValidationSource};
use histoconv::{Error, Result, Rng};

#[derive(Parser)]
#[command(name = "histoconv", version, about = "Train and evaluate a five-class histopathology CNN")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Index a corpus directory and print per-magnification counts.
    Ingest {
        /// Corpus root, scanned recursively for PNG files.
        #[arg(long)]
        root: PathBuf,
        /// Index file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Split an index into patient-exclusive train and test sides.
    Split {
        #[arg(long)]
        index: PathBuf,
        /// Target fraction of images on the training side.
        #[arg(long, default_value_t = 0.7)]
        train_frac: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Split file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model from a run config; writes a checkpoint, curves and a manifest.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Print the effective config as JSON and exit without training.
        #[arg(long)]
        print_config: bool,
    },
    /// Evaluate a checkpoint on one side of a split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        split: PathBuf,
        /// Directory the index paths are relative to.
        #[arg(long)]
        corpus_root: PathBuf,
        /// `train` or `test`.
        #[arg(long, default_value = "test")]
        side: Side,
        /// Directory for metrics.json, metrics.txt and the manifest.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model per optimizer and learning rate and tabulate test accuracy.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated optimizer names.
        #[arg(long, value_delimiter = ',', default_value = "sgd,adam,rmsprop,nadam")]
        optimizers: Vec<OptimizerKind>,
        /// Comma-separated learning rates.
        #[arg(long, value_delimiter = ',', default_value = "1e-2,1e-3,1e-4")]
        lrs: Vec<f64>,
        /// CSV file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the published full-corpus sweep accuracies in sweep CSV layout.
    SweepReference,
    /// Write augmented variants of one image as PNG files.
    AugmentPreview {
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of variants.
        #[arg(long, default_value_t = 8)]
        count: usize,
        /// Augmentation config JSON; defaults to the training pipeline.
        #[arg(long)]
        augment_config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a complete default run config.
    DefaultConfig,
    /// Generate a synthetic texture corpus with the public corpus layout.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Image side length in pixels.
        #[arg(long, default_value_t = 32)]
        size: usize,
        /// Multiplier applied to the per-magnification image counts.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Run config JSON (see `default-config`).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    optimizer: Option<OptimizerKind>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

/// One training run. Relative paths resolve against the config file's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    corpus_root: PathBuf,
    index: PathBuf,
    split: PathBuf,
    output_dir: PathBuf,
    #[serde(default)]
    model: ModelConfig,
    #[serde(default)]
    train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus_root: "corpus".into(),
            index: "index.json".into(),
            split: "splits.json".into(),
            output_dir: "runs/default".into(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Serialize)]
struct RunManifest {
    command: String,
    software_version: &'static str,
    config: serde_json::Value,
    seeds: BTreeMap<&'static str, u64>,
    corpus_hash: Option<String>,
    inputs: BTreeMap<&'static str, PathBuf>,
    outputs: Vec<PathBuf>,
    started_unix: u64,
    finished_unix: u64,
}

impl RunManifest {
    fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            command: command.into(),
            software_version: env!("CARGO_PKG_VERSION"),
            config,
            seeds: BTreeMap::new(),
            corpus_hash: None,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            started_unix: unix_now(),
            finished_unix: 0,
        }
    }

    fn write(mut self, path: &Path) -> Result<()> {
        self.finished_unix = unix_now();
        write_text(path, &serde_json::to_string_pretty(&self)?)
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// `dir/index.json` → `dir/index.manifest.json`.
fn sidecar_manifest(path: &Path) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}.manifest.json"))
}

fn parse_strict<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn load_run_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg: RunConfig = parse_strict(&args.config)?;
    let base = args.config.parent().unwrap_or(Path::new(""));
    for p in [&mut cfg.corpus_root, &mut cfg.index, &mut cfg.split, &mut cfg.output_dir] {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    if let Some(v) = args.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = args.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = args.optimizer {
        cfg.train.optimizer.kind = v;
    }
    if let Some(v) = args.lr {
        cfg.train.optimizer.learning_rate = v;
    }
    if let Some(v) = args.seed {
        cfg.train.seed = v;
    }
    if let Some(v) = &args.output_dir {
        cfg.output_dir = v.clone();
    }
    cfg.model.validate()?;
    cfg.train.validate()?;
    Ok(cfg)
}

fn load_split(path: &Path, index: &DatasetIndex) -> Result<SplitSpec> {
    let split = SplitSpec::load(path)?;
    split.validate(index)?;
    Ok(split)
}

struct RunData {
    train: LabeledSet<f32>,
    val: Option<LabeledSet<f32>>,
    test: LabeledSet<f32>,
}

fn load_run_data(cfg: &RunConfig, with_val: bool) -> Result<RunData> {
    let index = DatasetIndex::load(&cfg.index)?;
    let split = load_split(&cfg.split, &index)?;
    let (h, w) = (cfg.model.input_height, cfg.model.input_width);
    let load = |records: &[usize]| load_records::<f32>(&cfg.corpus_root, &index, records, h, w);
    let test_records = split.record_indices(&index, Side::Test);
    let (train_records, val_records) = match cfg.train.validation {
        _ if !with_val => (split.record_indices(&index, Side::Train), None),
        ValidationSource::CarvePatients { fraction } => {
            let (train_p, val_p) = carve_validation(&split, &index, fraction, cfg.train.seed)?;
            (records_of(&index, &train_p), Some(records_of(&index, &val_p)))
        }
        ValidationSource::TestSplit => (split.record_indices(&index, Side::Train), Some(test_records.clone())),
    };
    log::info!(
        "loading {} train, {} validation, {} test images at {h}x{w}",
        train_records.len(),
        val_records.as_ref().map_or(0, Vec::len),
        test_records.len()
    );
    Ok(RunData {
        train: load(&train_records)?,
        val: val_records.as_deref().map(load).transpose()?,
        test: load(&test_records)?,
    })
}

fn cmd_ingest(root: &Path, out: &Path) -> Result<()> {
    let mut manifest = RunManifest::new("ingest", serde_json::json!({ "root": root }));
    let report = build_index(root)?;
    for (path, reason) in &report.skipped {
        log::warn!("skipped {path}: {reason}");
    }
    report.index.save(out)?;
    let counts = report.index.counts();
    print!("{}", counts.render());
    for d in counts.internal_inconsistencies() {
        println!("inconsistent {}: {}", d.location, d.detail);
    }
    manifest.inputs.insert("root", root.to_path_buf());
    manifest.corpus_hash = Some(sha256_file(out)?);
    manifest.outputs.push(out.to_path_buf());
    manifest.write(&sidecar_manifest(out))
}

fn cmd_split(index_path: &Path, train_frac: f64, seed: u64, out: &Path) -> Result<()> {
    let mut manifest = RunManifest::new("split", serde_json::json!({ "train_frac": train_frac }));
    let index = DatasetIndex::load(index_path)?;
    let split = patient_exclusive_split(&index, train_frac, seed)?;
    split.validate(&index)?;
    split.save(out)?;
    println!(
        "train: {} patients, {} images ({:.2}%); test: {} patients, {} images",
        split.train_patients.len(),
        split.record_indices(&index, Side::Train).len(),
        100.0 * split.train_image_fraction(&index),
        split.test_patients.len(),
        split.record_indices(&index, Side::Test).len()
    );
    manifest.seeds.insert("split", seed);
    manifest.inputs.insert("index", index_path.to_path_buf());
    manifest.corpus_hash = Some(sha256_file(index_path)?);
    manifest.outputs.push(out.to_path_buf());
    manifest.write(&sidecar_manifest(out))
}

fn cmd_train(args: &RunArgs, print_config: bool) -> Result<()> {
    let cfg = load_run_config(args)?;
    if print_config {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }
    let mut manifest = RunManifest::new("train", serde_json::to_value(&cfg)?);
    let data = load_run_data(&cfg, true)?;
    let seed = cfg.train.seed;
    let model = build_model::<f32>(&cfg.model, &mut Rng::new(seed))?;
    log::info!("model has {} parameters", model.num_parameters());
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let outcome = train_with(model, &data.train, data.val.as_ref(), &cfg.train, |s, _| {
        log::info!(
            "epoch {:>3}  lr {:.3e}  loss {:.4}  acc {:.4}  val_loss {}  val_acc {}",
            s.epoch,
            s.learning_rate,
            s.train_loss,
            s.train_accuracy,
            s.val_loss.map_or("-".into(), |v| format!("{v:.4}")),
            s.val_accuracy.map_or("-".into(), |v| format!("{v:.4}")),
        );
        Ok(())
    })?;
    let ckpt = out.join("model.hcnn");
    let curves = out.join("curves.csv");
    checkpoint::save(&outcome.model, seed, outcome.history.len(), &ckpt)?;
    write_curves(&curves, &outcome.history)?;
    let test = evaluate(&outcome.model, &data.test)?;
    println!("test accuracy {:.4} on {} images", test.report.accuracy, data.test.len());

    manifest.seeds.insert("init", seed);
    manifest.seeds.insert("train", seed);
    manifest.corpus_hash = Some(sha256_file(&cfg.index)?);
    manifest.inputs.insert("index", cfg.index.clone());
    manifest.inputs.insert("split", cfg.split.clone());
    manifest.inputs.insert("corpus_root", cfg.corpus_root.clone());
    manifest.outputs.extend([ckpt, curves]);
    manifest.write(&out.join("manifest.json"))
}

fn cmd_eval(ckpt: &Path, index_path: &Path, split_path: &Path, corpus_root: &Path, side: Side, out: &Path) -> Result<()> {
    let mut manifest = RunManifest::new("eval", serde_json::json!({ "side": side }));
    let (model, header) = checkpoint::load::<f32>(ckpt)?;
    let index = DatasetIndex::load(index_path)?;
    let split = load_split(split_path, &index)?;
    let cfg = model.config();
    let set = load_records::<f32>(corpus_root, &index, &split.record_indices(&index, side), cfg.input_height, cfg.input_width)?;
    let eval = evaluate(&model, &set)?;
    let report = compute_metrics_named(&eval.report.confusion, &FiveClass::names())?;
    let table = report.render_table();
    print!("{table}");
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let json_path = out.join("metrics.json");
    let table_path = out.join("metrics.txt");
    write_text(&json_path, &report.to_json()?)?;
    write_text(&table_path, &table)?;

    manifest.seeds.insert("checkpoint", header.seed);
    manifest.corpus_hash = Some(sha256_file(index_path)?);
    manifest.inputs.insert("checkpoint", ckpt.to_path_buf());
    manifest.inputs.insert("index", index_path.to_path_buf());
    manifest.inputs.insert("split", split_path.to_path_buf());
    manifest.outputs.extend([json_path, table_path]);
    manifest.write(&out.join("manifest.json"))
}

fn cmd_sweep(args: &RunArgs, optimizers: &[OptimizerKind], lrs: &[f64], out: &Path) -> Result<()> {
    let cfg = load_run_config(args)?;
    let mut manifest = RunManifest::new(
        "sweep",
        serde_json::json!({ "run": cfg, "optimizers": optimizers, "learning_rates": lrs }),
    );
    let data = load_run_data(&cfg, false)?;
    let cells = sweep(&data.train, &data.test, optimizers, lrs, &cfg.model, &cfg.train, cfg.train.seed)?;
    for c in &cells {
        println!("{:<8} {:<8e} {:.4}", c.optimizer.name(), c.learning_rate, c.test_accuracy);
    }
    write_sweep_csv(out, &cells)?;
    manifest.seeds.insert("init", cfg.train.seed);
    manifest.seeds.insert("train", cfg.train.seed);
    manifest.corpus_hash = Some(sha256_file(&cfg.index)?);
    manifest.inputs.insert("index", cfg.index.clone());
    manifest.inputs.insert("split", cfg.split.clone());
    manifest.outputs.push(out.to_path_buf());
    manifest.write(&sidecar_manifest(out))
}

fn cmd_augment_preview(image: &Path, seed: u64, count: usize, augment_config: Option<&Path>, out: &Path) -> Result<()> {
    let cfg = match augment_config {
        Some(p) => parse_strict::<AugmentConfig>(p)?,
        None => AugmentConfig::default(),
    };
    cfg.validate()?;
    let img = read_rgb::<f32>(image)?;
    if count == 0 {
        return Ok(());
    }
    let mut manifest = RunManifest::new("augment-preview", serde_json::to_value(&cfg)?);
    let base = Rng::new(seed);
    for k in 0..count {
        let variant = augment_image(&img, &cfg, &mut base.fork(&[k as u64]))?;
        let path = out.join(format!("augmented_{k:03}.png"));
        if k == 0 {
            std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        }
        write_png(&variant, &path)?;
        manifest.outputs.push(path);
    }
    manifest.seeds.insert("augment", seed);
    manifest.inputs.insert("image", image.to_path_buf());
    manifest.write(&out.join("manifest.json"))
}

fn cmd_synth(out: &Path, size: usize, scale: f64, seed: u64) -> Result<()> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(Error::Config(format!("scale must be in (0, 1], got {scale}")));
    }
    if size == 0 {
        return Err(Error::Config("size must be positive".into()));
    }
    let counts = BREAKHIS_COUNTS.map(|(b, m)| (((b as f64) * scale).round() as usize, ((m as f64) * scale).round() as usize));
    let patients = breakhis_like_patients(&counts);
    let n = write_corpus(out, &patients, CorpusContent::Textures { size }, seed)?;
    println!("wrote {n} images under {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { root, out } => cmd_ingest(&root, &out),
        Command::Split { index, train_frac, seed, out } => cmd_split(&index, train_frac, seed, &out),
        Command::Train { run, print_config } => cmd_train(&run, print_config),
        Command::Eval {
            checkpoint,
            index,
            split,
            corpus_root,
            side,
            out,
        } => cmd_eval(&checkpoint, &index, &split, &corpus_root, side, &out),
        Command::Sweep { run, optimizers, lrs, out } => cmd_sweep(&run, &optimizers, &lrs, &out),
        Command::SweepReference => {
            print!("{}", reference_csv());
            Ok(())
        }
        Command::AugmentPreview {
            image,
            seed,
            count,
            augment_config,
            out,
        } => cmd_augment_preview(&image, seed, count, augment_config.as_deref(), &out),
        Command::DefaultConfig => {
            println!("{}", serde_json::to_string_pretty(&RunConfig::default())?);
            Ok(())
        }
        Command::Synth { out, size, scale, seed } => cmd_synth(&out, size, scale, seed),
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("HISTOCONV_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("HISTOCONV_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match configure_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
