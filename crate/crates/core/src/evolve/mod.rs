//! NSGA-II search over 17-gene bit-width genomes.

mod archive;
mod fitness;
mod ops;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qgru::{model_size_bits, size_complement, BlockId, Genome, ModelDims, MAX_GENE, MIN_GENE, NUM_BLOCKS};

pub use archive::{read_archive, write_individuals, ArchiveRow, ArchiveWriter};
pub use fitness::QuantEvaluator;
pub use ops::{
    crowding_distance, dominates, fast_nondominated_sort, pareto_front, polynomial_mutation, polynomial_perturb,
    sbx_beta, sbx_crossover, sbx_with_draws, survival, tournament_select,
};

/// Both objectives are maximized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objectives {
    pub accuracy: f64,
    pub size_complement: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genome: Genome,
    pub fitness: Objectives,
    pub rank: usize,
    pub crowding: f64,
    pub generation_born: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinetuneMode {
    Ptq,
    Qat,
}

impl FromStr for FinetuneMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ptq" => Ok(FinetuneMode::Ptq),
            "qat" => Ok(FinetuneMode::Qat),
            _ => Err(Error::Config(format!("finetune mode must be ptq or qat, got `{s}`"))),
        }
    }
}

impl fmt::Display for FinetuneMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FinetuneMode::Ptq => "ptq",
            FinetuneMode::Qat => "qat",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_probability: f64,
    pub crossover_index: f64,
    /// Per-gene mutation probability; `None` means one over the number of
    /// searched genes (1/17 for the full genome).
    pub mutation_probability: Option<f64>,
    pub mutation_index: f64,
    pub seed: u64,
    pub finetune_mode: FinetuneMode,
    /// Restricts the search to these genes; all others stay at `base`.
    pub free_genes: Option<Vec<BlockId>>,
    pub base: Genome,
    /// Redraw offspring that repeat a parent or a sibling.
    pub eliminate_duplicates: bool,
    /// Worker threads for fitness evaluation; 0 uses every core.
    #[serde(skip)]
    pub jobs: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            population_size: 32,
            generations: 20,
            crossover_probability: 0.9,
            crossover_index: 15.0,
            mutation_probability: None,
            mutation_index: 20.0,
            seed: 42,
            finetune_mode: FinetuneMode::Ptq,
            free_genes: None,
            base: Genome::uniform(MAX_GENE).expect("valid"),
            eliminate_duplicates: true,
            jobs: 1,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 4 || !self.population_size.is_multiple_of(2) {
            return Err(Error::Config(format!("population size {} must be even and >= 4", self.population_size)));
        }
        if self.generations == 0 {
            return Err(Error::Config("at least one generation is required".into()));
        }
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.crossover_probability) || !self.mutation_probability.is_none_or(prob) {
            return Err(Error::Config("probabilities must lie in [0, 1]".into()));
        }
        if !(self.crossover_index >= 0.0 && self.mutation_index >= 0.0) {
            return Err(Error::Config("distribution indices must be non-negative".into()));
        }
        if matches!(&self.free_genes, Some(f) if f.is_empty()) {
            return Err(Error::Config("free gene list is empty".into()));
        }
        Ok(())
    }

    pub fn searched_genes(&self) -> Vec<usize> {
        match &self.free_genes {
            Some(f) => f.iter().map(|b| b.index()).collect(),
            None => (0..NUM_BLOCKS).collect(),
        }
    }

    pub fn effective_mutation_probability(&self) -> f64 {
        self.mutation_probability.unwrap_or(1.0 / self.searched_genes().len() as f64)
    }
}

/// Uniform draw of every searched gene from `{2, ..., 8}`.
pub fn sample_genome<R: Rng + ?Sized>(cfg: &SearchConfig, rng: &mut R) -> Genome {
    let mut genes = *cfg.base.genes();
    for i in cfg.searched_genes() {
        genes[i] = rng.gen_range(MIN_GENE..=MAX_GENE);
    }
    Genome::new(genes).expect("valid genes")
}

/// Accuracy of the quantized model for one genome.
pub trait Fitness: Sync {
    fn dims(&self) -> ModelDims;
    /// `seed` is private to this evaluation.
    fn accuracy(&self, genome: &Genome, seed: u64) -> Result<f64>;
}

/// Runs one evaluation; failures become zero accuracy and are logged.
pub fn evaluate(f: &dyn Fitness, genome: &Genome, seed: u64) -> Objectives {
    let accuracy = f.accuracy(genome, seed).unwrap_or_else(|e| {
        log::warn!("evaluation of genome {genome} failed: {e}");
        0.0
    });
    Objectives { accuracy, size_complement: size_complement(genome, &f.dims()) }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of one evaluation, independent of scheduling order.
pub fn evaluation_seed(master: u64, genome: &Genome, generation: usize) -> u64 {
    splitmix(splitmix(master ^ genome.stable_hash()) ^ generation as u64)
}

/// One newly evaluated genome, in archive order.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveEntry {
    pub generation: usize,
    pub index: usize,
    pub genome: Genome,
    pub fitness: Objectives,
    pub size_bits: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationSummary {
    pub generation: usize,
    pub best_accuracy: f64,
    pub best_size_complement: f64,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    /// Every distinct genome evaluated, tagged with the generation that
    /// first produced it.
    pub archive: Vec<ArchiveEntry>,
    pub population: Vec<Individual>,
    /// Distinct non-dominated genomes of the final population, by accuracy
    /// descending.
    pub front: Vec<Individual>,
    pub history: Vec<GenerationSummary>,
}

/// Offspring draws allowed per population slot before duplicates are accepted.
const MAX_DRAWS_PER_SLOT: usize = 100;

pub fn run_nsga2(cfg: &SearchConfig, fitness: &dyn Fitness) -> Result<SearchResult> {
    run_nsga2_with(cfg, fitness, &mut |_| Ok(()))
}

/// Like [`run_nsga2`], handing each archive entry to `sink` as soon as its
/// generation is evaluated.
pub fn run_nsga2_with(
    cfg: &SearchConfig,
    fitness: &dyn Fitness,
    sink: &mut dyn FnMut(&ArchiveEntry) -> Result<()>,
) -> Result<SearchResult> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let dims = fitness.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut memo: HashMap<Genome, Objectives> = HashMap::new();
    let mut archive = Vec::new();

    let mut eval_generation = |genomes: &[Genome], generation: usize, archive: &mut Vec<ArchiveEntry>| {
        let mut fresh: Vec<Genome> = Vec::new();
        for g in genomes {
            if !memo.contains_key(g) && !fresh.contains(g) {
                fresh.push(*g);
            }
        }
        let results: Vec<Objectives> = pool.install(|| {
            fresh.par_iter().map(|g| evaluate(fitness, g, evaluation_seed(cfg.seed, g, generation))).collect()
        });
        for (index, (g, fit)) in fresh.iter().zip(results).enumerate() {
            memo.insert(*g, fit);
            let entry = ArchiveEntry {
                generation,
                index,
                genome: *g,
                fitness: fit,
                size_bits: model_size_bits(g, &dims, false),
            };
            sink(&entry)?;
            archive.push(entry);
        }
        Ok::<_, Error>(
            genomes
                .iter()
                .map(|g| Individual {
                    genome: *g,
                    fitness: memo[g],
                    rank: 0,
                    crowding: 0.0,
                    generation_born: generation,
                })
                .collect::<Vec<_>>(),
        )
    };

    let n = cfg.population_size;
    let initial: Vec<Genome> = (0..n).map(|_| sample_genome(cfg, &mut rng)).collect();
    let mut population = survival(eval_generation(&initial, 0, &mut archive)?, n);
    let mut history = vec![summarize(0, &population)];

    for generation in 1..=cfg.generations {
        let mut offspring: Vec<Genome> = Vec::with_capacity(n);
        let mut draws = 0;
        while offspring.len() < n {
            let a = tournament_select(&population, &mut rng);
            let b = tournament_select(&population, &mut rng);
            let (c1, c2) = sbx_crossover(&population[a].genome, &population[b].genome, cfg, &mut rng);
            for c in [polynomial_mutation(&c1, cfg, &mut rng), polynomial_mutation(&c2, cfg, &mut rng)] {
                draws += 1;
                // once the redraw budget is spent, duplicates are let through
                let seen = offspring.contains(&c) || population.iter().any(|p| p.genome == c);
                if cfg.eliminate_duplicates && seen && draws <= MAX_DRAWS_PER_SLOT * n {
                    continue;
                }
                if offspring.len() < n {
                    offspring.push(c);
                }
            }
        }
        let mut union = population;
        union.extend(eval_generation(&offspring, generation, &mut archive)?);
        population = survival(union, n);
        history.push(summarize(generation, &population));
        log::info!(
            "generation {generation}: best accuracy {:.4}, {} evaluated",
            history[generation].best_accuracy,
            archive.len()
        );
    }

    let mut front: Vec<Individual> = Vec::new();
    for i in population.iter().filter(|i| i.rank == 0) {
        if !front.iter().any(|f| f.genome == i.genome) {
            front.push(i.clone());
        }
    }
    front.sort_by(|a, b| b.fitness.accuracy.total_cmp(&a.fitness.accuracy));
    Ok(SearchResult { archive, population, front, history })
}

fn summarize(generation: usize, pop: &[Individual]) -> GenerationSummary {
    GenerationSummary {
        generation,
        best_accuracy: pop.iter().map(|i| i.fitness.accuracy).fold(f64::NEG_INFINITY, f64::max),
        best_size_complement: pop.iter().map(|i| i.fitness.size_complement).fold(f64::NEG_INFINITY, f64::max),
    }
}
