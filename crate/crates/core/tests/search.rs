use std::sync::OnceLock;

use gruq_core::calib::calibrate;
use gruq_core::dataio::{make_synthetic_task, split};
use gruq_core::evolve::{evaluate, pareto_front, Fitness, QuantEvaluator};
use gruq_core::qgru::BlockId;
use gruq_core::refnet::{train, TrainConfig};
use gruq_core::{run_nsga2, Genome, SearchConfig};

fn evaluator() -> &'static QuantEvaluator {
    static EVAL: OnceLock<QuantEvaluator> = OnceLock::new();
    EVAL.get_or_init(|| {
        let data = make_synthetic_task(6, 12, 3, 150, 0.25, 11).unwrap();
        let parts = split(&data, &[0.6, 0.4], 11).unwrap();
        let cfg = TrainConfig { batch_size: 32, epochs: 30, ..TrainConfig::float_baseline() };
        let w = train(&parts[0], 8, &cfg).unwrap().weights;
        let stats = calibrate(&w, &parts[0], 1.0, 0).unwrap();
        QuantEvaluator::ptq(w, stats, parts[1].clone())
    })
}

fn two_gene(seed: u64) -> SearchConfig {
    SearchConfig {
        population_size: 16,
        generations: 10,
        seed,
        free_genes: Some(vec![BlockId::Win, BlockId::Whn]),
        ..SearchConfig::default()
    }
}

#[test]
fn two_gene_search_recovers_exhaustive_front() {
    let f = evaluator();
    let base = Genome::uniform(8).unwrap();
    let mut all = Vec::new();
    for a in 2..=8 {
        for b in 2..=8 {
            let g = base.with_gene(BlockId::Win, a).unwrap().with_gene(BlockId::Whn, b).unwrap();
            all.push((g, evaluate(f as &dyn Fitness, &g, 0)));
        }
    }
    let points: Vec<_> = all.iter().map(|(_, o)| *o).collect();
    let mut truth: Vec<Genome> = pareto_front(&points).into_iter().map(|i| all[i].0).collect();
    truth.sort();
    assert!(truth.len() >= 5, "toy front too small to be informative: {}", truth.len());

    for seed in 1..=3 {
        let res = run_nsga2(&two_gene(seed), f).unwrap();
        let mut found: Vec<Genome> = res.front.iter().map(|i| i.genome).collect();
        found.sort();
        assert_eq!(found, truth, "seed {seed}");
    }
}

#[test]
fn search_is_reproducible_across_worker_counts() {
    let f = evaluator();
    let cfg = SearchConfig { population_size: 8, generations: 3, seed: 5, ..SearchConfig::default() };
    let a = run_nsga2(&cfg, f).unwrap();
    let b = run_nsga2(&SearchConfig { jobs: 4, ..cfg.clone() }, f).unwrap();
    assert_eq!(a.archive, b.archive);
    assert_eq!(a.history, b.history);
    let c = run_nsga2(&SearchConfig { seed: 6, ..cfg }, f).unwrap();
    assert_ne!(a.archive, c.archive);
}
