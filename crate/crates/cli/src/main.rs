//! `crfsim` — reproducible runs over the CRF toolkit: dataset generation,
//! exact min-cut solving, simulator and end-to-end training, evaluation, and
//! lambda sweeps. Exit codes: 0 success, 2 usage/config error, 3 I/O or
//! data error.

mod io;

use clap::{Args, Parser, Subcommand};
use crfsim_core::datagen::{
    self, build_dataset, generate_scene_with, Dataset, DatasetConfig, Split, SyntheticScene,
};
use crfsim_core::energy::{
    compute_pairwise_weights, evaluate_energy, unary_from_prob, CrfInstance, SigmaParam,
    DEFAULT_PROB_EPSILON,
};
use crfsim_core::eval::{build_report, write_report_json, write_scatter_csv, write_scatter_svg};
use crfsim_core::maxflow::optimize;
use crfsim_core::pipeline::{
    evaluate_pipeline, evaluate_unary_alone, postprocess_baseline, train_end_to_end, train_unary,
    Regime, SimulatorInit, UnaryNet,
};
use crfsim_core::simulator::{
    compare_to_optimizer, labelings_vs_optimizer, train_simulator, write_train_log,
    SimulatorModel, TrainConfig,
};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const ARTIFACT_VERSION: &str = concat!("crfsim/", env!("CARGO_PKG_VERSION"), " record/1 model/1");

#[derive(Debug)]
enum CliError {
    /// Bad flags or configuration: exit 2.
    Usage(String),
    /// Unreadable/unwritable inputs or malformed data: exit 3.
    Data(String),
}

type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

#[derive(Parser)]
#[command(name = "crfsim", version, about = "Binary CRF optimization, simulation, and training runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Master seed for this run.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; every run writes its artifacts plus run.json here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the parallel stages (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Grid size as HxW.
    #[arg(long)]
    size: Option<String>,
    /// Optional JSON config file; keys mirror the long flag names and are
    /// overridden by explicit flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with exact-optimizer ground truth.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Number of scenes (each yields records for both unary kinds).
        #[arg(long)]
        scenes: Option<usize>,
        /// Lambda values drawn per scene and unary kind.
        #[arg(long)]
        lambdas: Option<usize>,
        /// Length of the lambda schedule.
        #[arg(long)]
        schedule_count: Option<usize>,
        /// Largest lambda in the schedule.
        #[arg(long)]
        max_lambda: Option<f64>,
    },
    /// Solve one instance exactly and write the labeling as a PNG mask.
    Cut {
        #[command(flatten)]
        common: Common,
        /// RGB image the contrast weights come from.
        #[arg(long)]
        image: Option<PathBuf>,
        /// Object-probability map (16-bit grayscale PNG).
        #[arg(long)]
        prob: Option<PathBuf>,
        /// Regularization strength.
        #[arg(long)]
        lambda: Option<f64>,
        /// Contrast scale: "auto" or a positive number.
        #[arg(long)]
        sigma: Option<String>,
    },
    /// Train the CRF simulator on a generated dataset.
    TrainSim {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Train the complete system under a freeze/tune regime.
    TrainE2e {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        /// tf | tt | ft | ff | random | all
        #[arg(long)]
        regime: Option<String>,
        /// Pre-trained simulator checkpoint (required unless the regime is
        /// random).
        #[arg(long)]
        sim_checkpoint: Option<PathBuf>,
        /// Pre-trained unary checkpoint; when absent one is pretrained here.
        #[arg(long)]
        unary_checkpoint: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Epochs for unary pretraining when no checkpoint is given.
        #[arg(long)]
        unary_epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Evaluate a simulator checkpoint against the exact optimizer.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        sim_checkpoint: Option<PathBuf>,
        /// Score the stored targets against themselves (perfect-mimic sanity
        /// run) instead of loading a checkpoint.
        #[arg(long, default_value_t = false)]
        self_eval: bool,
        /// Which split to evaluate: train | val | test | all.
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Exact-optimizer post-processing sweep over a lambda grid.
    SweepLambda {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        unary_checkpoint: Option<PathBuf>,
        #[arg(long)]
        unary_epochs: Option<usize>,
        /// Comma-separated lambda values, e.g. "0,1,5,15,60".
        #[arg(long)]
        grid: Option<String>,
        /// Alternatively: take this many values from the default schedule.
        #[arg(long)]
        grid_count: Option<usize>,
        #[arg(long)]
        max_lambda: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
}

/// Values from the optional JSON config file; explicit flags win.
struct FileConfig(Value);

impl FileConfig {
    fn load(path: Option<&Path>) -> CliResult<FileConfig> {
        match path {
            None => Ok(FileConfig(Value::Null)),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| data_err(format!("reading config {}: {e}", p.display())))?;
                let value: Value = serde_json::from_str(&text)
                    .map_err(|e| usage(format!("config {} is not valid JSON: {e}", p.display())))?;
                Ok(FileConfig(value))
            }
        }
    }

    fn get<T: serde::de::DeserializeOwned>(&self, key: &str) -> CliResult<Option<T>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| usage(format!("config key '{key}': {e}"))),
        }
    }
}

/// Common flags resolved against the config file and defaults.
struct Resolved {
    seed: u64,
    out: PathBuf,
    size: (usize, usize),
    cfg: FileConfig,
}

fn parse_size(text: &str) -> CliResult<(usize, usize)> {
    let (h, w) = text
        .split_once(['x', 'X'])
        .ok_or_else(|| usage(format!("--size must look like 64x64, got '{text}'")))?;
    let parse = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| usage(format!("bad size component '{s}'")))
    };
    Ok((parse(h)?, parse(w)?))
}

fn resolve_common(common: &Common) -> CliResult<Resolved> {
    let cfg = FileConfig::load(common.config.as_deref())?;
    let seed = common.seed.or(cfg.get("seed")?).unwrap_or(0);
    let out: PathBuf = match &common.out {
        Some(p) => p.clone(),
        None => cfg
            .get::<String>("out")?
            .map(PathBuf::from)
            .ok_or_else(|| usage("--out is required"))?,
    };
    let size_text = match &common.size {
        Some(s) => s.clone(),
        None => cfg.get::<String>("size")?.unwrap_or_else(|| "64x64".into()),
    };
    let size = parse_size(&size_text)?;
    if let Some(threads) = common.threads.or(cfg.get("threads")?) {
        // Ignore failure: the global pool can only be set once per process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    std::fs::create_dir_all(&out)
        .map_err(|e| data_err(format!("creating out dir {}: {e}", out.display())))?;
    Ok(Resolved {
        seed,
        out,
        size,
        cfg,
    })
}

fn write_run_json(out: &Path, command: &str, resolved: Value) -> CliResult<()> {
    let run = json!({
        "command": command,
        "artifactVersion": ARTIFACT_VERSION,
        "config": resolved,
    });
    std::fs::write(
        out.join("run.json"),
        serde_json::to_string_pretty(&run).expect("run config serializes"),
    )
    .map_err(|e| data_err(format!("writing run.json: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData {
            common,
            scenes,
            lambdas,
            schedule_count,
            max_lambda,
        } => cmd_gen_data(common, scenes, lambdas, schedule_count, max_lambda),
        Command::Cut {
            common,
            image,
            prob,
            lambda,
            sigma,
        } => cmd_cut(common, image, prob, lambda, sigma),
        Command::TrainSim {
            common,
            data,
            epochs,
            lr,
            batch,
            threshold,
        } => cmd_train_sim(common, data, epochs, lr, batch, threshold),
        Command::TrainE2e {
            common,
            data,
            regime,
            sim_checkpoint,
            unary_checkpoint,
            epochs,
            unary_epochs,
            lr,
            batch,
            threshold,
        } => cmd_train_e2e(
            common,
            data,
            regime,
            sim_checkpoint,
            unary_checkpoint,
            epochs,
            unary_epochs,
            lr,
            batch,
            threshold,
        ),
        Command::Eval {
            common,
            data,
            sim_checkpoint,
            self_eval,
            split,
            threshold,
        } => cmd_eval(common, data, sim_checkpoint, self_eval, split, threshold),
        Command::SweepLambda {
            common,
            data,
            unary_checkpoint,
            unary_epochs,
            grid,
            grid_count,
            max_lambda,
            batch,
            lr,
        } => cmd_sweep_lambda(
            common,
            data,
            unary_checkpoint,
            unary_epochs,
            grid,
            grid_count,
            max_lambda,
            batch,
            lr,
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn cmd_gen_data(
    common: Common,
    scenes: Option<usize>,
    lambdas: Option<usize>,
    schedule_count: Option<usize>,
    max_lambda: Option<f64>,
) -> CliResult<()> {
    let r = resolve_common(&common)?;
    let scenes = scenes.or(r.cfg.get("scenes")?).unwrap_or(0);
    let lambdas = lambdas.or(r.cfg.get("lambdas")?).unwrap_or(5);
    let schedule_count = schedule_count.or(r.cfg.get("schedule-count")?).unwrap_or(30);
    let max_lambda = max_lambda.or(r.cfg.get("max-lambda")?).unwrap_or(400.0);
    if scenes == 0 {
        return Err(usage("--scenes must be at least 1"));
    }
    if lambdas == 0 || lambdas > schedule_count {
        return Err(usage(format!("--lambdas must be in 1..={schedule_count}")));
    }
    if r.size.0 < 16 || r.size.1 < 16 {
        return Err(usage("--size must be at least 16x16"));
    }

    let mut config = DatasetConfig::new(scenes, lambdas, r.seed);
    config.height = r.size.0;
    config.width = r.size.1;
    config.schedule_count = schedule_count;
    config.max_lambda = max_lambda;
    let manifest = build_dataset(&config, &r.out).map_err(data_err)?;

    let count = |split: Split| {
        manifest
            .records
            .iter()
            .filter(|e| e.split == split)
            .count()
    };
    println!(
        "records: train={} val={} test={} total={}",
        count(Split::Train),
        count(Split::Val),
        count(Split::Test),
        manifest.records.len()
    );
    write_run_json(
        &r.out,
        "gen-data",
        serde_json::to_value(&config).expect("config serializes"),
    )
}

fn cmd_cut(
    common: Common,
    image: Option<PathBuf>,
    prob: Option<PathBuf>,
    lambda: Option<f64>,
    sigma: Option<String>,
) -> CliResult<()> {
    let r = resolve_common(&common)?;
    let image_path = match image {
        Some(p) => p,
        None => r
            .cfg
            .get::<String>("image")?
            .map(PathBuf::from)
            .ok_or_else(|| usage("--image is required"))?,
    };
    let prob_path = match prob {
        Some(p) => p,
        None => r
            .cfg
            .get::<String>("prob")?
            .map(PathBuf::from)
            .ok_or_else(|| usage("--prob is required"))?,
    };
    let lambda = lambda
        .or(r.cfg.get("lambda")?)
        .ok_or_else(|| usage("--lambda is required"))?;
    if lambda < 0.0 {
        return Err(usage("--lambda must be non-negative"));
    }
    let sigma_text = match sigma {
        Some(s) => s,
        None => r.cfg.get::<String>("sigma")?.unwrap_or_else(|| "auto".into()),
    };
    let sigma = if sigma_text.eq_ignore_ascii_case("auto") {
        SigmaParam::Auto
    } else {
        let v: f64 = sigma_text
            .parse()
            .map_err(|_| usage(format!("--sigma must be 'auto' or a number, got '{sigma_text}'")))?;
        if v <= 0.0 {
            return Err(usage("--sigma must be positive"));
        }
        SigmaParam::Fixed(v)
    };

    let image = io::read_color_image(&image_path).map_err(CliError::Data)?;
    let prob = io::read_prob_map(&prob_path).map_err(CliError::Data)?;
    if (image.height, image.width) != (prob.height, prob.width) {
        return Err(data_err(format!(
            "image is {}x{} but prob map is {}x{}",
            image.height, image.width, prob.height, prob.width
        )));
    }

    let unary = unary_from_prob(&prob, DEFAULT_PROB_EPSILON);
    let pairwise = compute_pairwise_weights(&image, lambda, sigma).map_err(data_err)?;
    let instance = CrfInstance::new(unary, pairwise).map_err(data_err)?;
    let cut = optimize(&instance).map_err(data_err)?;
    let energy = evaluate_energy(&instance, &cut.labeling).map_err(data_err)?;

    io::write_mask_png(&cut.labeling, &r.out.join("mask.png")).map_err(CliError::Data)?;
    println!(
        "{}",
        serde_json::to_string(&energy).expect("energy serializes")
    );
    write_run_json(
        &r.out,
        "cut",
        json!({
            "image": image_path,
            "prob": prob_path,
            "lambda": lambda,
            "sigma": sigma_text,
            "seed": r.seed,
        }),
    )
}

fn load_dataset(common_data: Option<PathBuf>, r: &Resolved) -> CliResult<(PathBuf, Dataset)> {
    let dir = match common_data {
        Some(p) => p,
        None => r
            .cfg
            .get::<String>("data")?
            .map(PathBuf::from)
            .ok_or_else(|| usage("--data is required"))?,
    };
    let dataset = Dataset::load(&dir).map_err(data_err)?;
    Ok((dir, dataset))
}

fn cmd_train_sim(
    common: Common,
    data: Option<PathBuf>,
    epochs: Option<usize>,
    lr: Option<f64>,
    batch: Option<usize>,
    threshold: Option<f64>,
) -> CliResult<()> {
    let r = resolve_common(&common)?;
    let (data_dir, dataset) = load_dataset(data, &r)?;
    let config = TrainConfig {
        epochs: epochs.or(r.cfg.get("epochs")?).unwrap_or(100),
        lr: lr.or(r.cfg.get("lr")?).unwrap_or(1e-4),
        batch_size: batch.or(r.cfg.get("batch")?).unwrap_or(16),
        seed: r.seed,
        threshold: threshold.or(r.cfg.get("threshold")?).unwrap_or(0.5),
    };
    if config.epochs == 0 {
        return Err(usage("--epochs must be at least 1"));
    }

    let train = dataset.split(Split::Train);
    let val = dataset.split(Split::Val);
    let train = if train.is_empty() {
        dataset.records.iter().collect()
    } else {
        train
    };
    let (model, logs) = train_simulator(&train, &val, &config).map_err(data_err)?;

    let ckpt = r.out.join("simulator.crfw");
    model.save(&ckpt).map_err(data_err)?;
    write_train_log(&logs, &r.out.join("train_log.csv")).map_err(data_err)?;
    if let Some(last) = logs.last() {
        println!(
            "epochs={} final_train_loss={:.6} best_val_f={:.4}",
            logs.len(),
            last.train_loss,
            logs.iter().map(|l| l.val_f).fold(f64::NAN, f64::max)
        );
    }
    println!("checkpoint: {}", ckpt.display());
    write_run_json(
        &r.out,
        "train-sim",
        json!({
            "data": data_dir,
            "epochs": config.epochs,
            "lr": config.lr,
            "batch": config.batch_size,
            "threshold": config.threshold,
            "seed": config.seed,
        }),
    )
}

/// Regenerate the dataset's scenes, grouped by split.
fn scenes_by_split(
    dataset: &Dataset,
) -> (
    Vec<SyntheticScene>,
    Vec<SyntheticScene>,
    Vec<SyntheticScene>,
) {
    let manifest = &dataset.manifest;
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for entry in dataset.scenes() {
        let scene = generate_scene_with(
            entry.source_seed,
            manifest.height,
            manifest.width,
            manifest.noise_sigma,
        );
        match entry.split {
            Split::Train => train.push(scene),
            Split::Val => val.push(scene),
            Split::Test => test.push(scene),
        }
    }
    (train, val, test)
}

fn obtain_unary(
    unary_checkpoint: Option<&Path>,
    unary_epochs: usize,
    train: &[&SyntheticScene],
    val: &[&SyntheticScene],
    base: &TrainConfig,
    out: &Path,
) -> CliResult<UnaryNet> {
    match unary_checkpoint {
        Some(path) => UnaryNet::load(path).map_err(data_err),
        None => {
            let config = TrainConfig {
                epochs: unary_epochs,
                ..base.clone()
            };
            let (unary, logs) = train_unary(train, val, &config).map_err(data_err)?;
            unary.save(&out.join("unary.crfw")).map_err(data_err)?;
            write_train_log(&logs, &out.join("unary_log.csv")).map_err(data_err)?;
            Ok(unary)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_train_e2e(
    common: Common,
    data: Option<PathBuf>,
    regime: Option<String>,
    sim_checkpoint: Option<PathBuf>,
    unary_checkpoint: Option<PathBuf>,
    epochs: Option<usize>,
    unary_epochs: Option<usize>,
    lr: Option<f64>,
    batch: Option<usize>,
    threshold: Option<f64>,
) -> CliResult<()> {
    let r = resolve_common(&common)?;
    let regime_text = match regime {
        Some(s) => s,
        None => r
            .cfg
            .get::<String>("regime")?
            .ok_or_else(|| usage("--regime is required (tf|tt|ft|ff|random|all)"))?,
    };
    let regimes: Vec<Regime> = if regime_text.eq_ignore_ascii_case("all") {
        Regime::ALL.to_vec()
    } else {
        vec![Regime::parse(&regime_text)
            .ok_or_else(|| usage(format!("unknown regime '{regime_text}'")))?]
    };
    let sim_checkpoint = match sim_checkpoint {
        Some(p) => Some(p),
        None => r.cfg.get::<String>("sim-checkpoint")?.map(PathBuf::from),
    };
    for regime in &regimes {
        if regime.random_simulator_init && regimes.len() == 1 && sim_checkpoint.is_some() {
            return Err(usage(
                "--regime random must not be combined with --sim-checkpoint",
            ));
        }
        if !regime.random_simulator_init && sim_checkpoint.is_none() {
            return Err(usage(format!(
                "regime {} needs --sim-checkpoint (a pre-trained simulator)",
                regime.name()
            )));
        }
    }

    let (data_dir, dataset) = load_dataset(data, &r)?;
    let (train, val, test) = scenes_by_split(&dataset);
    if train.is_empty() {
        return Err(data_err("dataset has no training scenes"));
    }
    let train_refs: Vec<&SyntheticScene> = train.iter().collect();
    let val_refs: Vec<&SyntheticScene> = val.iter().collect();
    let test_refs: Vec<&SyntheticScene> = test.iter().collect();
    let eval_refs = if test_refs.is_empty() {
        &train_refs
    } else {
        &test_refs
    };

    let config = TrainConfig {
        epochs: epochs.or(r.cfg.get("epochs")?).unwrap_or(20),
        lr: lr.or(r.cfg.get("lr")?).unwrap_or(1e-4),
        batch_size: batch.or(r.cfg.get("batch")?).unwrap_or(16),
        seed: r.seed,
        threshold: threshold.or(r.cfg.get("threshold")?).unwrap_or(0.5),
    };
    let unary_epochs = unary_epochs.or(r.cfg.get("unary-epochs")?).unwrap_or(20);

    let unary = obtain_unary(
        unary_checkpoint.as_deref(),
        unary_epochs,
        &train_refs,
        &val_refs,
        &config,
        &r.out,
    )?;
    let unary_alone_f = evaluate_unary_alone(&unary, eval_refs, config.threshold).map_err(data_err)?;

    let mut summary = vec![("unary-alone".to_string(), unary_alone_f)];
    for regime in &regimes {
        let init = if regime.random_simulator_init {
            SimulatorInit::Random
        } else {
            let path = sim_checkpoint.as_ref().expect("validated above");
            SimulatorInit::Pretrained(Box::new(SimulatorModel::load(path).map_err(data_err)?))
        };
        let (components, logs) =
            train_end_to_end(*regime, unary.clone(), init, &train_refs, &val_refs, &config)
                .map_err(data_err)?;
        let test_f = evaluate_pipeline(&components, eval_refs, config.threshold).map_err(data_err)?;
        summary.push((format!("complete-{}", regime.name()), test_f));

        let prefix = r.out.join(format!("e2e_{}", regime.name()));
        components
            .unary
            .save(&prefix.with_extension("unary.crfw"))
            .map_err(data_err)?;
        components
            .weights
            .save(&prefix.with_extension("weights.crfw"))
            .map_err(data_err)?;
        components
            .simulator
            .save(&prefix.with_extension("simulator.crfw"))
            .map_err(data_err)?;
        write_train_log(&logs, &prefix.with_extension("log.csv")).map_err(data_err)?;
        println!("regime={} test_f={:.4}", regime.name(), test_f);
    }

    let mut table = String::new();
    table.push_str(&summary.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>().join(","));
    table.push('\n');
    table.push_str(
        &summary
            .iter()
            .map(|(_, f)| format!("{f:.4}"))
            .collect::<Vec<_>>()
            .join(","),
    );
    table.push('\n');
    std::fs::write(r.out.join("summary.csv"), &table).map_err(data_err)?;
    print!("{table}");

    write_run_json(
        &r.out,
        "train-e2e",
        json!({
            "data": data_dir,
            "regime": regime_text,
            "simCheckpoint": sim_checkpoint,
            "unaryCheckpoint": unary_checkpoint,
            "epochs": config.epochs,
            "unaryEpochs": unary_epochs,
            "lr": config.lr,
            "batch": config.batch_size,
            "threshold": config.threshold,
            "seed": config.seed,
        }),
    )
}

fn cmd_eval(
    common: Common,
    data: Option<PathBuf>,
    sim_checkpoint: Option<PathBuf>,
    self_eval: bool,
    split: Option<String>,
    threshold: Option<f64>,
) -> CliResult<()> {
    let r = resolve_common(&common)?;
    let (data_dir, dataset) = load_dataset(data, &r)?;
    let split_text = match split {
        Some(s) => s,
        None => r.cfg.get::<String>("split")?.unwrap_or_else(|| "test".into()),
    };
    let records: Vec<&crfsim_core::datagen::SampleRecord> = match split_text.as_str() {
        "train" => dataset.split(Split::Train),
        "val" => dataset.split(Split::Val),
        "test" => dataset.split(Split::Test),
        "all" => dataset.records.iter().collect(),
        other => return Err(usage(format!("unknown split '{other}'"))),
    };
    if records.is_empty() {
        return Err(data_err(format!("split '{split_text}' has no records")));
    }
    let threshold = threshold.or(r.cfg.get("threshold")?).unwrap_or(0.5);

    let rows = if self_eval {
        let targets: Vec<_> = records.iter().map(|r| r.target.clone()).collect();
        labelings_vs_optimizer(&records, &targets).map_err(data_err)?
    } else {
        let path = match sim_checkpoint {
            Some(p) => p,
            None => r
                .cfg
                .get::<String>("sim-checkpoint")?
                .map(PathBuf::from)
                .ok_or_else(|| usage("--sim-checkpoint is required unless --self-eval"))?,
        };
        let model = SimulatorModel::load(&path).map_err(data_err)?;
        compare_to_optimizer(&model, &records, threshold).map_err(data_err)?
    };

    let report = build_report(rows);
    write_report_json(&report, &r.out.join("report.json")).map_err(data_err)?;
    write_scatter_csv(&report.per_sample, &r.out.join("scatter.csv")).map_err(data_err)?;
    write_scatter_svg(&report.per_sample, &r.out.join("scatter.svg")).map_err(data_err)?;

    let show = |r: Option<f64>| r.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    println!(
        "meanF={:.4} rUnary={} rPairwise={} rTotal={} samples={}",
        report.mean_f,
        show(report.correlation.r_unary),
        show(report.correlation.r_pairwise),
        show(report.correlation.r_total),
        report.per_sample.len()
    );
    write_run_json(
        &r.out,
        "eval",
        json!({
            "data": data_dir,
            "split": split_text,
            "selfEval": self_eval,
            "threshold": threshold,
            "seed": r.seed,
        }),
    )
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep_lambda(
    common: Common,
    data: Option<PathBuf>,
    unary_checkpoint: Option<PathBuf>,
    unary_epochs: Option<usize>,
    grid: Option<String>,
    grid_count: Option<usize>,
    max_lambda: Option<f64>,
    batch: Option<usize>,
    lr: Option<f64>,
) -> CliResult<()> {
    let r = resolve_common(&common)?;
    let (data_dir, dataset) = load_dataset(data, &r)?;
    let max_lambda = max_lambda.or(r.cfg.get("max-lambda")?).unwrap_or(400.0);
    let grid_text = match grid {
        Some(g) => Some(g),
        None => r.cfg.get::<String>("grid")?,
    };
    let grid: Vec<f64> = match (grid_text, grid_count.or(r.cfg.get("grid-count")?)) {
        (Some(text), _) => {
            let mut values = Vec::new();
            for part in text.split(',') {
                let v: f64 = part
                    .trim()
                    .parse()
                    .map_err(|_| usage(format!("bad grid value '{part}'")))?;
                if v < 0.0 {
                    return Err(usage("grid lambdas must be non-negative"));
                }
                values.push(v);
            }
            values
        }
        (None, Some(count)) => {
            if count < 2 {
                return Err(usage("--grid-count must be at least 2"));
            }
            datagen::lambda_schedule(count, max_lambda)
        }
        (None, None) => datagen::lambda_schedule(10, max_lambda),
    };
    if grid.is_empty() {
        return Err(usage("lambda grid must be non-empty"));
    }

    let (train, val, test) = scenes_by_split(&dataset);
    let train_refs: Vec<&SyntheticScene> = train.iter().collect();
    let val_refs: Vec<&SyntheticScene> = val.iter().collect();
    let test_refs: Vec<&SyntheticScene> = test.iter().collect();
    // Small datasets may lack val/test scenes; fall back to train so smoke
    // runs still exercise the sweep.
    let val_used: &[&SyntheticScene] = if val_refs.is_empty() {
        &train_refs
    } else {
        &val_refs
    };
    let test_used: &[&SyntheticScene] = if test_refs.is_empty() {
        &train_refs
    } else {
        &test_refs
    };

    let config = TrainConfig {
        epochs: 1,
        lr: lr.or(r.cfg.get("lr")?).unwrap_or(1e-4),
        batch_size: batch.or(r.cfg.get("batch")?).unwrap_or(16),
        seed: r.seed,
        threshold: 0.5,
    };
    let unary = obtain_unary(
        unary_checkpoint.as_deref(),
        unary_epochs.or(r.cfg.get("unary-epochs")?).unwrap_or(20),
        &train_refs,
        val_used,
        &config,
        &r.out,
    )?;

    let report = postprocess_baseline(&unary, val_used, test_used, &grid).map_err(data_err)?;
    println!(
        "bestFixedLambda={} fMeasureFixed={:.4} fMeasureOracle={:.4} fMeasureUnaryAlone={:.4}",
        report.best_fixed_lambda, report.f_fixed, report.f_oracle, report.f_unary_alone
    );
    std::fs::write(
        r.out.join("sweep.json"),
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )
    .map_err(data_err)?;
    write_run_json(
        &r.out,
        "sweep-lambda",
        json!({
            "data": data_dir,
            "grid": grid,
            "seed": r.seed,
        }),
    )
}
