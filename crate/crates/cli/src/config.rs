//! Flat `key = value` run configuration.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gruq_core::evolve::{FinetuneMode, SearchConfig};
use gruq_core::qgru::{BlockId, Genome};
use gruq_core::refnet::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Synthetic,
    MnistRows,
}

impl FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "synthetic" => Ok(Task::Synthetic),
            "mnist-rows" => Ok(Task::MnistRows),
            _ => Err(format!("unknown task `{s}` (expected synthetic or mnist-rows)")),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Synthetic => "synthetic",
            Task::MnistRows => "mnist-rows",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub classes: usize,
    pub seq_len: usize,
    pub features: usize,
    pub per_class: usize,
    pub noise: f64,
}

#[derive(Debug, Clone, Default)]
pub struct MnistConfig {
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// Use only this many training images (after a seeded shuffle); 0 keeps all.
    pub subset: usize,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub task: Task,
    pub seed: u64,
    /// `None` picks 16 for the synthetic task and 64 for MNIST rows.
    pub hidden_size: Option<usize>,
    pub synthetic: SyntheticConfig,
    pub mnist: MnistConfig,
    pub calibration_fraction: f64,
    pub train: TrainConfig,
    pub homogeneous_qat: TrainConfig,
    pub mixed_qat: TrainConfig,
    pub search: SearchConfig,
    pub out: PathBuf,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: Task::Synthetic,
            seed: 42,
            hidden_size: None,
            synthetic: SyntheticConfig { classes: 8, seq_len: 12, features: 8, per_class: 250, noise: 0.1 },
            mnist: MnistConfig::default(),
            calibration_fraction: 1.0,
            train: TrainConfig::float_baseline(),
            homogeneous_qat: TrainConfig::homogeneous_qat(),
            mixed_qat: TrainConfig::mixed_precision_qat(),
            search: SearchConfig::default(),
            out: PathBuf::from("out"),
            jobs: 1,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("invalid value `{v}` for `{key}`"))
}

fn set_train(t: &mut TrainConfig, field: &str, key: &str, v: &str) -> Result<(), String> {
    match field {
        "batch_size" => t.batch_size = parse(key, v)?,
        "epochs" => t.epochs = parse(key, v)?,
        "learning_rate" => t.learning_rate = parse(key, v)?,
        "validation_fraction" => t.validation_fraction = parse(key, v)?,
        "validate_every" => t.validate_every = parse(key, v)?,
        "train_fraction" => t.train_fraction = parse(key, v)?,
        "beta1" => t.beta1 = parse(key, v)?,
        "beta2" => t.beta2 = parse(key, v)?,
        "epsilon" => t.epsilon = parse(key, v)?,
        "grad_clip" => t.grad_clip = if v == "none" { None } else { Some(parse(key, v)?) },
        _ => return Err(format!("unknown key `{key}`")),
    }
    Ok(())
}

fn train_entries(prefix: &str, t: &TrainConfig, out: &mut Vec<(String, String)>) {
    let clip = t.grad_clip.map_or("none".to_string(), |c| c.to_string());
    for (k, v) in [
        ("batch_size", t.batch_size.to_string()),
        ("epochs", t.epochs.to_string()),
        ("learning_rate", t.learning_rate.to_string()),
        ("validation_fraction", t.validation_fraction.to_string()),
        ("validate_every", t.validate_every.to_string()),
        ("train_fraction", t.train_fraction.to_string()),
        ("beta1", t.beta1.to_string()),
        ("beta2", t.beta2.to_string()),
        ("epsilon", t.epsilon.to_string()),
        ("grad_clip", clip),
    ] {
        out.push((format!("{prefix}.{k}"), v));
    }
}

fn parse_free_genes(v: &str) -> Result<Option<Vec<BlockId>>, String> {
    if v.is_empty() || v == "all" {
        return Ok(None);
    }
    v.split(',')
        .map(|name| {
            let name = name.trim();
            BlockId::ALL.into_iter().find(|b| b.name() == name).ok_or_else(|| format!("unknown block `{name}`"))
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        if let Some((section, field)) = key.split_once('.') {
            return match section {
                "train" => set_train(&mut self.train, field, key, v),
                "homogeneous_qat" => set_train(&mut self.homogeneous_qat, field, key, v),
                "mixed_qat" => set_train(&mut self.mixed_qat, field, key, v),
                "synthetic" => {
                    let s = &mut self.synthetic;
                    match field {
                        "classes" => s.classes = parse(key, v)?,
                        "seq_len" => s.seq_len = parse(key, v)?,
                        "features" => s.features = parse(key, v)?,
                        "per_class" => s.per_class = parse(key, v)?,
                        "noise" => s.noise = parse(key, v)?,
                        _ => return Err(format!("unknown key `{key}`")),
                    }
                    Ok(())
                }
                "mnist" => {
                    let m = &mut self.mnist;
                    match field {
                        "train_images" => m.train_images = opt_path(v),
                        "train_labels" => m.train_labels = opt_path(v),
                        "test_images" => m.test_images = opt_path(v),
                        "test_labels" => m.test_labels = opt_path(v),
                        "subset" => m.subset = parse(key, v)?,
                        _ => return Err(format!("unknown key `{key}`")),
                    }
                    Ok(())
                }
                "search" => {
                    let s = &mut self.search;
                    match field {
                        "population_size" => s.population_size = parse(key, v)?,
                        "generations" => s.generations = parse(key, v)?,
                        "crossover_probability" => s.crossover_probability = parse(key, v)?,
                        "crossover_index" => s.crossover_index = parse(key, v)?,
                        "mutation_probability" => {
                            s.mutation_probability = if v == "auto" { None } else { Some(parse(key, v)?) }
                        }
                        "mutation_index" => s.mutation_index = parse(key, v)?,
                        "finetune_mode" => s.finetune_mode = v.parse::<FinetuneMode>().map_err(|e| e.to_string())?,
                        "free_genes" => s.free_genes = parse_free_genes(v)?,
                        "base" => s.base = v.parse::<Genome>().map_err(|e| e.to_string())?,
                        "eliminate_duplicates" => s.eliminate_duplicates = parse(key, v)?,
                        _ => return Err(format!("unknown key `{key}`")),
                    }
                    Ok(())
                }
                _ => Err(format!("unknown key `{key}`")),
            };
        }
        match key {
            "task" => self.task = v.parse()?,
            "seed" => self.seed = parse(key, v)?,
            "hidden_size" => self.hidden_size = if v == "auto" { None } else { Some(parse(key, v)?) },
            "calibration_fraction" => self.calibration_fraction = parse(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "jobs" => self.jobs = parse(key, v)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Applies a `key=value` assignment.
    pub fn assign(&mut self, kv: &str) -> Result<(), String> {
        let (k, v) = kv.split_once('=').ok_or_else(|| format!("expected key=value, got `{kv}`"))?;
        self.set(k.trim(), v.trim())
    }

    /// Reads a config file: one `key = value` per line, `#` starts a comment.
    pub fn load_file(&mut self, path: &Path) -> Result<(), String> {
        let text = fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.assign(line).map_err(|e| format!("{}:{}: {e}", path.display(), n + 1))?;
        }
        Ok(())
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size.unwrap_or(match self.task {
            Task::Synthetic => 16,
            Task::MnistRows => 64,
        })
    }

    /// Training presets with the run seed applied.
    pub fn float_train(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train.clone() }
    }

    pub fn search_config(&self) -> SearchConfig {
        SearchConfig { seed: self.seed, jobs: self.jobs, ..self.search.clone() }
    }

    pub fn validate(&self) -> Result<(), String> {
        for t in [&self.train, &self.homogeneous_qat, &self.mixed_qat] {
            t.validate().map_err(|e| e.to_string())?;
        }
        self.search_config().validate().map_err(|e| e.to_string())?;
        if !(self.calibration_fraction > 0.0 && self.calibration_fraction <= 1.0) {
            return Err("calibration_fraction must lie in (0, 1]".into());
        }
        Ok(())
    }

    /// Every setting that influences results, with defaults resolved. Output
    /// locations and the worker count are left out so artifacts do not
    /// depend on them.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut e: Vec<(String, String)> = vec![
            ("task".into(), self.task.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("hidden_size".into(), self.hidden_size().to_string()),
            ("calibration_fraction".into(), self.calibration_fraction.to_string()),
        ];
        match self.task {
            Task::Synthetic => {
                let s = &self.synthetic;
                for (k, v) in [
                    ("classes", s.classes.to_string()),
                    ("seq_len", s.seq_len.to_string()),
                    ("features", s.features.to_string()),
                    ("per_class", s.per_class.to_string()),
                    ("noise", s.noise.to_string()),
                ] {
                    e.push((format!("synthetic.{k}"), v));
                }
            }
            Task::MnistRows => e.push(("mnist.subset".into(), self.mnist.subset.to_string())),
        }
        train_entries("train", &self.train, &mut e);
        train_entries("homogeneous_qat", &self.homogeneous_qat, &mut e);
        train_entries("mixed_qat", &self.mixed_qat, &mut e);
        let s = &self.search;
        let free = s
            .free_genes
            .as_ref()
            .map_or("all".to_string(), |f| f.iter().map(|b| b.name()).collect::<Vec<_>>().join(","));
        for (k, v) in [
            ("population_size", s.population_size.to_string()),
            ("generations", s.generations.to_string()),
            ("crossover_probability", s.crossover_probability.to_string()),
            ("crossover_index", s.crossover_index.to_string()),
            ("mutation_probability", s.mutation_probability.map_or("auto".into(), |p| p.to_string())),
            ("mutation_index", s.mutation_index.to_string()),
            ("finetune_mode", s.finetune_mode.to_string()),
            ("free_genes", free),
            ("base", s.base.to_string()),
            ("eliminate_duplicates", s.eliminate_duplicates.to_string()),
        ] {
            e.push((format!("search.{k}"), v));
        }
        e
    }

    pub fn echo_lines(&self) -> Vec<String> {
        self.entries().into_iter().map(|(k, v)| format!("{k}={v}")).collect()
    }

    pub fn echo_json(&self) -> serde_json::Value {
        serde_json::Value::Object(self.entries().into_iter().map(|(k, v)| (k, v.into())).collect())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}
