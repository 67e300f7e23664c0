//! Post-training calibration: min/max observers on every tensor site of the
//! float model, turned into per-site quantization grids for a genome.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::SequenceDataset;
use crate::error::{Error, Result};
use crate::fxp::{compute_qparams, QuantMode, QuantParams};
use crate::qgru::{BlockId, Genome, Site, INPUT_BITS};
use crate::qops::extrema;
use crate::refnet::{forward_sequence, GRUWeights, SiteTransform};

pub const STATS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiteRange {
    pub min: f64,
    pub max: f64,
    pub count: u64,
}

impl SiteRange {
    const EMPTY: SiteRange = SiteRange { min: f64::INFINITY, max: f64::NEG_INFINITY, count: 0 };

    fn observe(&mut self, values: &[f64]) {
        let (lo, hi) = extrema(values);
        self.min = self.min.min(lo);
        self.max = self.max.max(hi);
        self.count += values.len() as u64;
    }

    fn merge(&mut self, other: &SiteRange) {
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
        self.count += other.count;
    }
}

/// Running extrema for the input site and all 17 block outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationStats {
    sites: [SiteRange; Site::COUNT],
    pub sample_count: u64,
}

impl Default for CalibrationStats {
    fn default() -> Self {
        CalibrationStats { sites: [SiteRange::EMPTY; Site::COUNT], sample_count: 0 }
    }
}

impl SiteTransform for CalibrationStats {
    fn apply(&mut self, site: Site, values: &mut [f64], _: &mut [bool]) {
        self.sites[site.index()].observe(values);
    }
}

#[derive(Serialize, Deserialize)]
struct StatsFile {
    version: u32,
    sample_count: u64,
    /// Free-form run metadata; ignored on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<serde_json::Value>,
    #[serde(flatten)]
    sites: BTreeMap<String, SiteRange>,
}

impl CalibrationStats {
    /// Recorded range of `site`, or an error if it was never observed.
    pub fn range(&self, site: Site) -> Result<SiteRange> {
        let r = self.sites[site.index()];
        if r.count == 0 {
            return Err(Error::MissingSite(site.name().into()));
        }
        Ok(r)
    }

    pub fn set_range(&mut self, site: Site, min: f64, max: f64) {
        self.sites[site.index()] = SiteRange { min, max, count: self.sites[site.index()].count.max(1) };
    }

    pub fn observe(&mut self, site: Site, values: &[f64]) {
        self.sites[site.index()].observe(values);
    }

    /// Associative, commutative merge of two shards.
    pub fn merge(&mut self, other: &CalibrationStats) {
        self.sites.iter_mut().zip(&other.sites).for_each(|(a, b)| a.merge(b));
        self.sample_count += other.sample_count;
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let sites = Site::all()
            .filter(|s| self.sites[s.index()].count > 0)
            .map(|s| (s.name().to_string(), self.sites[s.index()]))
            .collect();
        let file = StatsFile { version: STATS_FORMAT_VERSION, sample_count: self.sample_count, config: None, sites };
        fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: StatsFile = serde_json::from_str(&fs::read_to_string(path)?)?;
        if file.version != STATS_FORMAT_VERSION {
            return Err(Error::Version(file.version));
        }
        let mut stats = CalibrationStats { sample_count: file.sample_count, ..Default::default() };
        for (name, r) in file.sites {
            let site = Site::from_name(&name).ok_or_else(|| Error::Config(format!("unknown site `{name}`")))?;
            if r.count > 0 && !(r.min <= r.max) {
                return Err(Error::Config(format!("site `{name}` has min > max")));
            }
            stats.sites[site.index()] = r;
        }
        Ok(stats)
    }
}

/// Runs the float model over the first `ceil(fraction * N)` sequences of a
/// seeded shuffle, recording every site's extrema at every timestep.
pub fn calibrate(w: &GRUWeights, data: &SequenceDataset, fraction: f64, seed: u64) -> Result<CalibrationStats> {
    if data.is_empty() {
        return Err(Error::Empty("calibration dataset".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("calibration fraction {fraction} outside (0, 1]")));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = ((fraction * data.len() as f64).ceil() as usize).min(data.len());
    let mut stats = CalibrationStats::default();
    for &i in &order[..n] {
        forward_sequence(w, data.sequence(i), &mut stats);
    }
    stats.sample_count = n as u64;
    Ok(stats)
}

/// Grid for one activation site from its observed range.
///
/// Sigmoid outputs are pinned to `[0, 1]` and tanh outputs to `[-1, 1]`;
/// the input site is fixed at 8 bits.
pub fn site_qparams(site: Site, min: f64, max: f64, genome: &Genome) -> Result<QuantParams> {
    let (lo, hi, bits) = match site {
        Site::Input => (min, max, INPUT_BITS),
        Site::Block(b @ (BlockId::SigR | BlockId::SigZ)) => (0.0, 1.0, genome.bits(b)),
        Site::Block(b @ BlockId::TanhN) => (-1.0, 1.0, genome.bits(b)),
        Site::Block(b) => (min, max, genome.bits(b)),
    };
    compute_qparams(lo, hi, bits, QuantMode::Asymmetric)
}

/// Per-site grids indexed by [`Site::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct SiteQParams(pub Vec<QuantParams>);

impl SiteQParams {
    pub fn get(&self, site: Site) -> &QuantParams {
        &self.0[site.index()]
    }
    pub fn block(&self, b: BlockId) -> &QuantParams {
        self.get(Site::Block(b))
    }
}

pub fn stats_to_qparams(stats: &CalibrationStats, genome: &Genome) -> Result<SiteQParams> {
    Site::all()
        .map(|s| {
            let r = stats.range(s)?;
            site_qparams(s, r.min, r.max, genome)
        })
        .collect::<Result<Vec<_>>>()
        .map(SiteQParams)
}
