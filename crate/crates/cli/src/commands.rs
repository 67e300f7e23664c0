use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use gruq_core::calib::{calibrate, CalibrationStats};
use gruq_core::dataio::{load_mnist_idx, make_synthetic_task, split, SequenceDataset};
use gruq_core::evolve::{
    run_nsga2_with, write_individuals, ArchiveEntry, ArchiveWriter, FinetuneMode, Fitness, QuantEvaluator,
};
use gruq_core::qgru::{
    gru_weight_bits, model_size_bits, quantize_model, size_complement, BlockId, Genome, QuantizedGRUModel, NUM_BLOCKS,
};
use gruq_core::refnet::{accuracy, qat_finetune, train, GRUWeights, TrainConfig};

use crate::config::{RunConfig, Task};

pub const MODEL_FILE: &str = "model.json";
pub const STATS_FILE: &str = "stats.json";
pub const QUANTIZED_FILE: &str = "quantized.json";
pub const BASELINE_FILE: &str = "baseline.csv";
pub const ARCHIVE_FILE: &str = "archive.csv";
pub const FRONT_FILE: &str = "front.csv";
pub const SCHEME_FILE: &str = "scheme.json";

/// Smallest size complement a solution needs to be reported as the knee.
pub const KNEE_MIN_SIZE_COMPLEMENT: f64 = 0.25;

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, configuration or missing inputs; exit code 2.
    Usage(String),
    /// Anything that fails while running; exit code 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<gruq_core::Error> for CliError {
    fn from(e: gruq_core::Error) -> Self {
        match e {
            gruq_core::Error::Config(_) | gruq_core::Error::Genome(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn require(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} not found: {}", path.display())))
    }
}

/// Training, search-validation and test splits of the selected task.
pub struct TaskData {
    pub train: SequenceDataset,
    pub search_val: SequenceDataset,
    pub test: SequenceDataset,
}

pub fn load_task(cfg: &RunConfig) -> Result<TaskData> {
    match cfg.task {
        Task::Synthetic => {
            let s = &cfg.synthetic;
            let ds = make_synthetic_task(s.classes, s.seq_len, s.features, s.per_class, s.noise, cfg.seed)?;
            let mut parts = split(&ds, &[0.8, 0.1, 0.1], cfg.seed)?.into_iter();
            let (train, search_val, test) = (parts.next().unwrap(), parts.next().unwrap(), parts.next().unwrap());
            Ok(TaskData { train, search_val, test })
        }
        Task::MnistRows => {
            let m = &cfg.mnist;
            let get = |p: &Option<PathBuf>, key: &str| -> Result<PathBuf> {
                let p = p.clone().ok_or_else(|| CliError::Usage(format!("mnist-rows needs `mnist.{key}`")))?;
                require(&p, "MNIST file")?;
                Ok(p)
            };
            let (ti, tl) = (get(&m.train_images, "train_images")?, get(&m.train_labels, "train_labels")?);
            let (vi, vl) = (get(&m.test_images, "test_images")?, get(&m.test_labels, "test_labels")?);
            let mut full = load_mnist_idx(&ti, &tl)?;
            if m.subset > 0 && m.subset < full.len() {
                let f = m.subset as f64 / full.len() as f64;
                full = split(&full, &[f, 1.0 - f], cfg.seed)?.swap_remove(0);
            }
            let mut parts = split(&full, &[0.9, 0.1], cfg.seed)?.into_iter();
            let (train, search_val) = (parts.next().unwrap(), parts.next().unwrap());
            let test = load_mnist_idx(&vi, &vl)?;
            Ok(TaskData { train, search_val, test })
        }
    }
}

/// Adds the effective configuration to a JSON artifact.
fn annotate(path: &Path, cfg: &RunConfig) -> Result<()> {
    let mut v: Value =
        serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| CliError::Runtime(e.to_string()))?;
    if let Value::Object(map) = &mut v {
        map.insert("config".into(), cfg.echo_json());
    }
    write_json(path, &v)
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn prepare_out(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out)
        .map_err(|e| CliError::Usage(format!("cannot create output directory {}: {e}", cfg.out.display())))
}

fn load_weights(cfg: &RunConfig) -> Result<GRUWeights> {
    let p = cfg.path(MODEL_FILE);
    require(&p, "float model (run `train` first)")?;
    Ok(GRUWeights::load(&p)?)
}

fn load_stats(cfg: &RunConfig) -> Result<CalibrationStats> {
    let p = cfg.path(STATS_FILE);
    require(&p, "calibration statistics (run `calibrate` first)")?;
    Ok(CalibrationStats::load(&p)?)
}

fn check_dims(w: &GRUWeights, data: &TaskData) -> Result<()> {
    let d = &data.train;
    if w.dims.input_features != d.features() || w.dims.num_classes != d.num_classes() {
        return Err(CliError::Usage(format!(
            "model dimensions {:?} do not match the task ({} features, {} classes)",
            w.dims,
            d.features(),
            d.num_classes()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub train_accuracy: f64,
    pub validation_accuracy: f64,
    pub test_accuracy: f64,
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary> {
    let data = load_task(cfg)?;
    prepare_out(cfg)?;
    let report = train(&data.train, cfg.hidden_size(), &cfg.float_train())?;
    let w = report.weights;
    let summary = TrainSummary {
        train_accuracy: accuracy(&w, &data.train),
        validation_accuracy: report.best_validation_accuracy,
        test_accuracy: accuracy(&w, &data.test),
    };
    let path = cfg.path(MODEL_FILE);
    w.save(&path)?;
    annotate(&path, cfg)?;
    println!(
        "train_accuracy={:.4} validation_accuracy={:.4} test_accuracy={:.4}",
        summary.train_accuracy, summary.validation_accuracy, summary.test_accuracy
    );
    println!("wrote {}", path.display());
    Ok(summary)
}

pub fn cmd_calibrate(cfg: &RunConfig) -> Result<CalibrationStats> {
    let data = load_task(cfg)?;
    let w = load_weights(cfg)?;
    check_dims(&w, &data)?;
    let stats = calibrate(&w, &data.train, cfg.calibration_fraction, cfg.seed)?;
    let path = cfg.path(STATS_FILE);
    stats.save(&path)?;
    annotate(&path, cfg)?;
    println!("calibrated on {} sequences; wrote {}", stats.sample_count, path.display());
    Ok(stats)
}

/// Either a homogeneous bit-width or an explicit genome.
#[derive(Debug, Clone)]
pub enum Scheme {
    Bits(u8),
    Genome(String),
    File(PathBuf),
}

pub fn resolve_scheme(s: &Scheme) -> Result<Genome> {
    match s {
        Scheme::Bits(b) => {
            Genome::wide([*b; NUM_BLOCKS]).map_err(|_| CliError::Usage(format!("--bits {b} outside [2, 16]")))
        }
        Scheme::Genome(text) => text.parse().map_err(|e: gruq_core::Error| CliError::Usage(e.to_string())),
        Scheme::File(p) => {
            require(p, "scheme file")?;
            let v: Value = serde_json::from_str(&fs::read_to_string(p)?).map_err(|e| CliError::Usage(e.to_string()))?;
            serde_json::from_value(v["genome"].clone())
                .map_err(|e| CliError::Usage(format!("{}: no usable genome: {e}", p.display())))
        }
    }
}

/// Builds the integer model for `genome`, optionally after QAT with `qat`.
fn build_model(
    cfg: &RunConfig,
    w: &GRUWeights,
    stats: &CalibrationStats,
    genome: &Genome,
    data: &TaskData,
    qat: Option<&TrainConfig>,
) -> Result<QuantizedGRUModel> {
    Ok(match qat {
        None => quantize_model(w, stats, genome)?,
        Some(t) => {
            let t = TrainConfig { seed: cfg.seed, ..t.clone() };
            let tuned = qat_finetune(w, genome, &data.train, &t)?.weights;
            let stats = calibrate(&tuned, &data.train, cfg.calibration_fraction, cfg.seed)?;
            quantize_model(&tuned, &stats, genome)?
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantReport {
    pub genome: Genome,
    pub accuracy: f64,
    pub search_accuracy: f64,
    pub float_accuracy: f64,
    pub size_bits: u64,
    pub size_complement: f64,
}

fn report(model: &QuantizedGRUModel, w: &GRUWeights, data: &TaskData) -> Result<QuantReport> {
    Ok(QuantReport {
        genome: model.genome,
        accuracy: model.accuracy(&data.test)?,
        search_accuracy: model.accuracy(&data.search_val)?,
        float_accuracy: accuracy(w, &data.test),
        size_bits: model_size_bits(&model.genome, &model.dims, false),
        size_complement: size_complement(&model.genome, &model.dims),
    })
}

pub fn cmd_quantize_eval(cfg: &RunConfig, scheme: &Scheme, finetune: bool) -> Result<QuantReport> {
    let genome = resolve_scheme(scheme)?;
    let data = load_task(cfg)?;
    let (w, stats) = (load_weights(cfg)?, load_stats(cfg)?);
    check_dims(&w, &data)?;
    let model = build_model(cfg, &w, &stats, &genome, &data, finetune.then_some(&cfg.mixed_qat))?;
    let r = report(&model, &w, &data)?;
    println!(
        "genome={} accuracy={:.4} size_bits={} size_complement={:.4} float_accuracy={:.4}",
        r.genome, r.accuracy, r.size_bits, r.size_complement, r.float_accuracy
    );
    Ok(r)
}

pub fn cmd_baseline_sweep(cfg: &RunConfig, finetune: bool) -> Result<Vec<QuantReport>> {
    let data = load_task(cfg)?;
    let (w, stats) = (load_weights(cfg)?, load_stats(cfg)?);
    check_dims(&w, &data)?;
    let mut rows = Vec::new();
    let mut csv = String::new();
    for line in cfg.echo_lines() {
        csv.push_str(&format!("# {line}\n"));
    }
    csv.push_str("bits,accuracy,search_accuracy,size_bits,size_complement\n");
    for bits in 3..=8u8 {
        let g = Genome::uniform(bits)?;
        let model = build_model(cfg, &w, &stats, &g, &data, finetune.then_some(&cfg.homogeneous_qat))?;
        let r = report(&model, &w, &data)?;
        csv.push_str(&format!("{bits},{},{},{},{}\n", r.accuracy, r.search_accuracy, r.size_bits, r.size_complement));
        println!(
            "bits={bits} accuracy={:.4} size_bits={} size_complement={:.4}",
            r.accuracy, r.size_bits, r.size_complement
        );
        rows.push(r);
    }
    let path = cfg.path(BASELINE_FILE);
    fs::write(&path, csv)?;
    println!("wrote {}", path.display());
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct SearchSummary {
    pub archive: Vec<ArchiveEntry>,
    pub front: Vec<ArchiveEntry>,
    pub knee: Option<ArchiveEntry>,
    pub knee_test_accuracy: Option<f64>,
}

/// Highest-accuracy front member with at least the minimum size complement;
/// ties go to the smaller model.
pub fn knee_point(front: &[ArchiveEntry]) -> Option<&ArchiveEntry> {
    front.iter().filter(|e| e.fitness.size_complement >= KNEE_MIN_SIZE_COMPLEMENT).max_by(|a, b| {
        a.fitness
            .accuracy
            .total_cmp(&b.fitness.accuracy)
            .then(a.fitness.size_complement.total_cmp(&b.fitness.size_complement))
            .then(b.genome.cmp(&a.genome))
    })
}

pub fn cmd_search(cfg: &RunConfig) -> Result<SearchSummary> {
    let data = load_task(cfg)?;
    let (w, stats) = (load_weights(cfg)?, load_stats(cfg)?);
    check_dims(&w, &data)?;
    let search = cfg.search_config();
    let evaluator = match search.finetune_mode {
        FinetuneMode::Ptq => QuantEvaluator::ptq(w.clone(), stats.clone(), data.search_val.clone()),
        FinetuneMode::Qat => QuantEvaluator::qat(
            w.clone(),
            stats.clone(),
            data.search_val.clone(),
            data.train.clone(),
            cfg.mixed_qat.clone(),
        ),
    };
    let echo = cfg.echo_lines();
    let mut writer = ArchiveWriter::create(&cfg.path(ARCHIVE_FILE), &echo)?;
    let result = run_nsga2_with(&search, &evaluator, &mut |e| writer.write(e))?;

    let front: Vec<ArchiveEntry> = result
        .front
        .iter()
        .map(|i| result.archive.iter().find(|e| e.genome == i.genome).expect("front genomes are archived").clone())
        .collect();
    write_individuals(&cfg.path(FRONT_FILE), &echo, &front)?;

    let knee = knee_point(&front).cloned();
    let mut knee_test_accuracy = None;
    match &knee {
        Some(k) => {
            let qat = (search.finetune_mode == FinetuneMode::Qat).then_some(&cfg.mixed_qat);
            let model = build_model(cfg, &w, &stats, &k.genome, &data, qat)?;
            let test_acc = model.accuracy(&data.test)?;
            knee_test_accuracy = Some(test_acc);
            let dims = evaluator.dims();
            let base = gru_weight_bits(&Genome::uniform(8)?, &dims) as f64;
            let blocks: serde_json::Map<String, Value> =
                BlockId::ALL.iter().map(|b| (b.name().to_string(), json!(k.genome.bits(*b)))).collect();
            let scheme = json!({
                "version": 1,
                "genome": k.genome,
                "blocks": blocks,
                "search_accuracy": k.fitness.accuracy,
                "test_accuracy": test_acc,
                "size_bits": k.size_bits,
                "size_complement": k.fitness.size_complement,
                "gru_weight_reduction": 1.0 - gru_weight_bits(&k.genome, &dims) as f64 / base,
                "config": cfg.echo_json(),
            });
            write_json(&cfg.path(SCHEME_FILE), &scheme)?;
        }
        None => log::warn!("no front member reaches size complement {KNEE_MIN_SIZE_COMPLEMENT}; no scheme written"),
    }
    println!("evaluated={} front={}", result.archive.len(), front.len());
    if let (Some(k), Some(t)) = (&knee, knee_test_accuracy) {
        println!(
            "knee genome={} search_accuracy={:.4} test_accuracy={:.4} size_complement={:.4}",
            k.genome, k.fitness.accuracy, t, k.fitness.size_complement
        );
    }
    Ok(SearchSummary { archive: result.archive, front, knee, knee_test_accuracy })
}

pub fn cmd_export(cfg: &RunConfig, scheme: &Scheme, finetune: bool) -> Result<PathBuf> {
    let genome = resolve_scheme(scheme)?;
    let data = load_task(cfg)?;
    let (w, stats) = (load_weights(cfg)?, load_stats(cfg)?);
    check_dims(&w, &data)?;
    let model = build_model(cfg, &w, &stats, &genome, &data, finetune.then_some(&cfg.mixed_qat))?;
    let path = cfg.path(QUANTIZED_FILE);
    model.save(&path)?;
    annotate(&path, cfg)?;
    println!("genome={genome} wrote {}", path.display());
    Ok(path)
}
