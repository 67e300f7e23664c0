//! Sequence-classification datasets: MNIST IDX ingestion (one image row
//! per timestep) and a seeded synthetic task for quick experiments.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Fixed-shape labelled sequences stored contiguously, each `T x F` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceDataset {
    name: String,
    seq_len: usize,
    features: usize,
    num_classes: usize,
    data: Vec<f64>,
    labels: Vec<usize>,
}

impl SequenceDataset {
    pub fn new(
        name: impl Into<String>,
        seq_len: usize,
        features: usize,
        num_classes: usize,
        data: Vec<f64>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if seq_len == 0 || features == 0 || num_classes == 0 {
            return Err(Error::Config("dataset dimensions must be positive".into()));
        }
        if labels.is_empty() {
            return Err(Error::Empty("dataset has no sequences".into()));
        }
        if data.len() != labels.len() * seq_len * features {
            return Err(Error::Dimension {
                op: "dataset",
                expected: labels.len() * seq_len * features,
                got: data.len(),
            });
        }
        if let Some(l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Config(format!("label {l} outside [0, {num_classes})")));
        }
        Ok(SequenceDataset { name: name.into(), seq_len, features, num_classes, data, labels })
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn seq_len(&self) -> usize {
        self.seq_len
    }
    pub fn features(&self) -> usize {
        self.features
    }
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }
    pub fn len(&self) -> usize {
        self.labels.len()
    }
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sequence(&self, i: usize) -> &[f64] {
        let n = self.seq_len * self.features;
        &self.data[i * n..(i + 1) * n]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Copies the listed sequences, in order. An empty index list yields an
    /// empty dataset (which [`SequenceDataset::new`] would reject).
    pub fn subset(&self, idx: &[usize]) -> SequenceDataset {
        let mut data = Vec::with_capacity(idx.len() * self.seq_len * self.features);
        for &i in idx {
            data.extend_from_slice(self.sequence(i));
        }
        SequenceDataset {
            name: self.name.clone(),
            seq_len: self.seq_len,
            features: self.features,
            num_classes: self.num_classes,
            data,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.num_classes];
        self.labels.iter().for_each(|&l| h[l] += 1);
        h
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }
}

fn read_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes.get(offset..offset + 4).map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]])).ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        offset: offset as u64,
        msg: "truncated header".into(),
    })
}

fn parse_header(bytes: &[u8], path: &Path, magic: u32, dims: usize) -> Result<Vec<usize>> {
    let found = read_u32(bytes, 0, path)?;
    if found != magic {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            offset: 0,
            msg: format!("bad magic {found:#010x}, expected {magic:#010x}"),
        });
    }
    (0..dims).map(|d| read_u32(bytes, 4 + 4 * d, path).map(|v| v as usize)).collect()
}

/// Loads an IDX image/label pair; each image becomes a `rows`-step sequence
/// of `cols` features scaled to `[0, 1]` by `1/255`.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<SequenceDataset> {
    let img = fs::read(images_path)?;
    let lab = fs::read(labels_path)?;
    let hdr = parse_header(&img, images_path, IDX_IMAGES_MAGIC, 3)?;
    let (count, rows, cols) = (hdr[0], hdr[1], hdr[2]);
    let n_labels = parse_header(&lab, labels_path, IDX_LABELS_MAGIC, 1)?[0];
    let pixels = count * rows * cols;
    if img.len() < 16 + pixels {
        return Err(Error::Parse {
            path: images_path.to_path_buf(),
            offset: img.len() as u64,
            msg: format!("truncated: header announces {count} images of {rows}x{cols}"),
        });
    }
    if lab.len() < 8 + n_labels {
        return Err(Error::Parse {
            path: labels_path.to_path_buf(),
            offset: lab.len() as u64,
            msg: format!("truncated: header announces {n_labels} labels"),
        });
    }
    if n_labels != count {
        return Err(Error::Parse {
            path: labels_path.to_path_buf(),
            offset: 4,
            msg: format!("{n_labels} labels for {count} images"),
        });
    }
    let data = img[16..16 + pixels].iter().map(|&b| b as f64 / 255.0).collect();
    let labels: Vec<usize> = lab[8..8 + count].iter().map(|&b| b as usize).collect();
    let num_classes = labels.iter().max().map_or(1, |&m| m + 1).max(10);
    SequenceDataset::new("mnist-rows", rows, cols, num_classes, data, labels)
}

/// Writes a dataset as an IDX pair, mapping features to bytes by
/// `round(255 * x)` after clamping to `[0, 1]`.
pub fn write_idx(ds: &SequenceDataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    if ds.num_classes() > 256 {
        return Err(Error::Config("IDX labels are single bytes".into()));
    }
    let mut img = Vec::with_capacity(16 + ds.values().len());
    img.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    for d in [ds.len(), ds.seq_len(), ds.features()] {
        img.extend_from_slice(&(d as u32).to_be_bytes());
    }
    img.extend(ds.values().iter().map(|&x| (x.clamp(0.0, 1.0) * 255.0).round() as u8));
    let mut lab = Vec::with_capacity(8 + ds.len());
    lab.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    lab.extend(ds.labels().iter().map(|&l| l as u8));
    fs::write(images_path, img)?;
    fs::write(labels_path, lab)?;
    Ok(())
}

/// Frequency (in cycles per sequence) and phase of class `k`'s template.
fn class_pattern(k: usize) -> (f64, f64) {
    (1.0 + 0.75 * (k / 2) as f64, if k.is_multiple_of(2) { 0.0 } else { PI / 2.0 })
}

/// Builds a seeded classification task where class `k` is a smooth
/// sinusoidal template (class-specific frequency and phase, shifted across
/// features) plus i.i.d. Gaussian noise, clipped to `[0, 1]`.
pub fn make_synthetic_task(
    num_classes: usize,
    seq_len: usize,
    features: usize,
    n_per_class: usize,
    noise_std: f64,
    seed: u64,
) -> Result<SequenceDataset> {
    if num_classes == 0 || seq_len == 0 || features == 0 || n_per_class == 0 {
        return Err(Error::Config("synthetic task parameters must be positive".into()));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::Config(format!("invalid noise std {noise_std}")));
    }
    let (top_freq, _) = class_pattern(num_classes - 1);
    if top_freq >= seq_len as f64 / 2.0 {
        return Err(Error::Config(format!(
            "{num_classes} classes need sequences longer than {} steps",
            (2.0 * top_freq).floor()
        )));
    }
    let noise = Normal::new(0.0, noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = num_classes * n_per_class;
    let mut data = Vec::with_capacity(n * seq_len * features);
    let mut labels = Vec::with_capacity(n);
    for k in 0..num_classes {
        let (freq, phase) = class_pattern(k);
        for _ in 0..n_per_class {
            for t in 0..seq_len {
                for f in 0..features {
                    let angle = 2.0 * PI * freq * t as f64 / seq_len as f64 + phase + PI * f as f64 / features as f64;
                    let x = 0.5 + 0.4 * angle.sin() + noise.sample(&mut rng);
                    data.push(x.clamp(0.0, 1.0));
                }
            }
            labels.push(k);
        }
    }
    SequenceDataset::new("synthetic", seq_len, features, num_classes, data, labels)
}

/// Seeded shuffle followed by contiguous slicing into `fractions.len()`
/// disjoint parts of `floor(fraction * N)` sequences each.
pub fn split(ds: &SequenceDataset, fractions: &[f64], seed: u64) -> Result<Vec<SequenceDataset>> {
    let total: f64 = fractions.iter().sum();
    if total > 1.0 + 1e-9 || fractions.iter().any(|&f| !(f >= 0.0)) {
        return Err(Error::Config(format!("split fractions {fractions:?} must be non-negative and sum to <= 1")));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut start = 0;
    let mut parts = Vec::with_capacity(fractions.len());
    for &f in fractions {
        let n = (f * ds.len() as f64 + 1e-9).floor() as usize;
        if n == 0 {
            return Err(Error::Empty(format!("split fraction {f} of {} sequences", ds.len())));
        }
        let part = ds.subset(&order[start..start + n]);
        log::info!("split {}: {} sequences, class histogram {:?}", parts.len(), n, part.class_histogram());
        parts.push(part);
        start += n;
    }
    Ok(parts)
}
