//! Selection, ranking and variation operators.

use std::cmp::Ordering;

use rand::Rng;

use crate::qgru::{Genome, MAX_GENE, MIN_GENE, NUM_BLOCKS};

use super::{Individual, Objectives, SearchConfig};

/// Maximization on both objectives: `a >= b` componentwise and `a != b`.
pub fn dominates(a: &Objectives, b: &Objectives) -> bool {
    a.accuracy >= b.accuracy && a.size_complement >= b.size_complement && a != b
}

/// Deb's fast non-dominated sort. Indices inside each front are ascending.
pub fn fast_nondominated_sort(points: &[Objectives]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut count = vec![0usize; n];
    let mut fronts = vec![Vec::new()];
    for p in 0..n {
        for q in 0..n {
            if dominates(&points[p], &points[q]) {
                dominated_by[p].push(q);
            } else if dominates(&points[q], &points[p]) {
                count[p] += 1;
            }
        }
        if count[p] == 0 {
            fronts[0].push(p);
        }
    }
    let mut k = 0;
    while !fronts[k].is_empty() {
        let mut next = Vec::new();
        for &p in &fronts[k] {
            for &q in &dominated_by[p] {
                count[q] -= 1;
                if count[q] == 0 {
                    next.push(q);
                }
            }
        }
        next.sort_unstable();
        fronts.push(next);
        k += 1;
    }
    fronts.pop();
    fronts
}

/// Crowding distance of every member of one front. Boundary points of each
/// objective get `+inf`; ties in an objective are ordered by position.
pub fn crowding_distance(front: &[Objectives]) -> Vec<f64> {
    let n = front.len();
    let mut dist = vec![0.0; n];
    if n == 0 {
        return dist;
    }
    let objectives: [fn(&Objectives) -> f64; 2] = [|o| o.accuracy, |o| o.size_complement];
    for obj in objectives {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| obj(&front[a]).total_cmp(&obj(&front[b])));
        let (lo, hi) = (obj(&front[order[0]]), obj(&front[order[n - 1]]));
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for w in order.windows(3) {
            dist[w[1]] += (obj(&front[w[2]]) - obj(&front[w[0]])) / range;
        }
    }
    dist
}

/// Crowded comparison: lower rank first, then larger crowding distance.
fn crowded_cmp(a: &Individual, b: &Individual) -> Ordering {
    a.rank.cmp(&b.rank).then(b.crowding.total_cmp(&a.crowding))
}

/// Binary tournament between two distinct members; a full tie is settled by
/// a fair coin.
pub fn tournament_select<R: Rng + ?Sized>(pop: &[Individual], rng: &mut R) -> usize {
    if pop.len() < 2 {
        return 0;
    }
    let a = rng.gen_range(0..pop.len());
    let mut b = rng.gen_range(0..pop.len() - 1);
    if b >= a {
        b += 1;
    }
    match crowded_cmp(&pop[a], &pop[b]) {
        Ordering::Less => a,
        Ordering::Greater => b,
        Ordering::Equal => {
            if rng.gen_bool(0.5) {
                a
            } else {
                b
            }
        }
    }
}

/// SBX spread factor for a uniform draw `u` in `[0, 1)`.
pub fn sbx_beta(u: f64, eta: f64) -> f64 {
    if u <= 0.5 {
        (2.0 * u).powf(1.0 / (eta + 1.0))
    } else {
        (1.0 / (2.0 * (1.0 - u))).powf(1.0 / (eta + 1.0))
    }
}

fn to_gene(x: f64) -> u8 {
    crate::fxp::round_half_away(x).clamp(MIN_GENE as f64, MAX_GENE as f64) as u8
}

/// Real-coded SBX applied to every gene with the supplied draws, rounded and
/// clamped back to `[2, 8]`.
pub fn sbx_with_draws(p1: &Genome, p2: &Genome, us: &[f64; NUM_BLOCKS], eta: f64) -> (Genome, Genome) {
    let (mut c1, mut c2) = (*p1.genes(), *p2.genes());
    for i in 0..NUM_BLOCKS {
        let (x1, x2) = (p1.genes()[i] as f64, p2.genes()[i] as f64);
        let beta = sbx_beta(us[i], eta);
        c1[i] = to_gene(0.5 * ((1.0 + beta) * x1 + (1.0 - beta) * x2));
        c2[i] = to_gene(0.5 * ((1.0 - beta) * x1 + (1.0 + beta) * x2));
    }
    (Genome::new(c1).expect("clamped"), Genome::new(c2).expect("clamped"))
}

/// SBX in its reference form: each gene is recombined with probability 1/2
/// and the two resulting values are handed to the children in random order.
/// With probability `1 - p_c` the parents are copied.
pub fn sbx_crossover<R: Rng + ?Sized>(p1: &Genome, p2: &Genome, cfg: &SearchConfig, rng: &mut R) -> (Genome, Genome) {
    if !rng.gen_bool(cfg.crossover_probability) {
        return (*p1, *p2);
    }
    let (mut c1, mut c2) = (*p1.genes(), *p2.genes());
    for i in cfg.searched_genes() {
        if c1[i] == c2[i] || !rng.gen_bool(0.5) {
            continue;
        }
        let (x1, x2) = (c1[i] as f64, c2[i] as f64);
        let beta = sbx_beta(rng.gen(), cfg.crossover_index);
        let a = to_gene(0.5 * ((1.0 + beta) * x1 + (1.0 - beta) * x2));
        let b = to_gene(0.5 * ((1.0 - beta) * x1 + (1.0 + beta) * x2));
        (c1[i], c2[i]) = if rng.gen_bool(0.5) { (b, a) } else { (a, b) };
    }
    (Genome::new(c1).expect("clamped"), Genome::new(c2).expect("clamped"))
}

/// Bounded polynomial perturbation of one gene for a uniform draw `r`.
pub fn polynomial_perturb(gene: u8, r: f64, eta: f64) -> u8 {
    let (lo, hi) = (MIN_GENE as f64, MAX_GENE as f64);
    let y = gene as f64;
    let d1 = (y - lo) / (hi - lo);
    let d2 = (hi - y) / (hi - lo);
    let pow = 1.0 / (eta + 1.0);
    let dq = if r < 0.5 {
        let v = 2.0 * r + (1.0 - 2.0 * r) * (1.0 - d1).powf(eta + 1.0);
        v.powf(pow) - 1.0
    } else {
        let v = 2.0 * (1.0 - r) + 2.0 * (r - 0.5) * (1.0 - d2).powf(eta + 1.0);
        1.0 - v.powf(pow)
    };
    to_gene(y + dq * (hi - lo))
}

/// Mutates each searched gene independently with probability `p_m`.
pub fn polynomial_mutation<R: Rng + ?Sized>(g: &Genome, cfg: &SearchConfig, rng: &mut R) -> Genome {
    let mut genes = *g.genes();
    let p = cfg.effective_mutation_probability();
    for i in cfg.searched_genes() {
        if rng.gen_bool(p) {
            genes[i] = polynomial_perturb(genes[i], rng.gen(), cfg.mutation_index);
        }
    }
    Genome::new(genes).expect("clamped")
}

/// Ranks `union` and keeps `n` members: whole fronts in order, the last
/// admitted front cut by descending crowding distance. Rank and crowding of
/// the survivors are set.
pub fn survival(mut union: Vec<Individual>, n: usize) -> Vec<Individual> {
    let points: Vec<Objectives> = union.iter().map(|i| i.fitness).collect();
    let mut keep = Vec::with_capacity(n);
    for (rank, front) in fast_nondominated_sort(&points).into_iter().enumerate() {
        let fp: Vec<Objectives> = front.iter().map(|&i| points[i]).collect();
        for (&i, d) in front.iter().zip(crowding_distance(&fp)) {
            union[i].rank = rank;
            union[i].crowding = d;
        }
        if keep.len() + front.len() <= n {
            keep.extend(front);
        } else {
            let mut rest = front;
            rest.sort_by(|&a, &b| union[b].crowding.total_cmp(&union[a].crowding));
            keep.extend(&rest[..n - keep.len()]);
        }
        if keep.len() == n {
            break;
        }
    }
    let mut slots: Vec<Option<Individual>> = union.into_iter().map(Some).collect();
    keep.into_iter().map(|i| slots[i].take().expect("distinct indices")).collect()
}

/// Indices of the non-dominated points, ordered by accuracy descending
/// (input order among ties).
pub fn pareto_front(points: &[Objectives]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).filter(|&i| !points.iter().any(|q| dominates(q, &points[i]))).collect();
    idx.sort_by(|&a, &b| points[b].accuracy.total_cmp(&points[a].accuracy));
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn o(a: f64, s: f64) -> Objectives {
        Objectives { accuracy: a, size_complement: s }
    }

    fn ind(a: f64, s: f64, rank: usize, crowding: f64) -> Individual {
        Individual { genome: Genome::uniform(8).unwrap(), fitness: o(a, s), rank, crowding, generation_born: 0 }
    }

    #[test]
    fn dominance_examples() {
        assert!(!dominates(&o(0.9, 0.5), &o(0.9, 0.5)));
        assert!(dominates(&o(0.9, 0.5), &o(0.8, 0.5)));
        assert!(!dominates(&o(0.9, 0.3), &o(0.8, 0.6)));
        assert!(!dominates(&o(0.8, 0.6), &o(0.9, 0.3)));
    }

    #[test]
    fn sort_examples() {
        let pts = [o(0.9, 0.5), o(0.8, 0.6), o(0.7, 0.3)];
        assert_eq!(fast_nondominated_sort(&pts), vec![vec![0, 1], vec![2]]);
        assert_eq!(fast_nondominated_sort(&[o(0.5, 0.5); 4]), vec![vec![0, 1, 2, 3]]);
        assert!(fast_nondominated_sort(&[]).is_empty());
    }

    #[test]
    fn crowding_examples() {
        let d = crowding_distance(&[o(0.0, 1.0), o(0.5, 0.5), o(1.0, 0.0)]);
        assert_eq!(d, vec![f64::INFINITY, 2.0, f64::INFINITY]);
        assert_eq!(crowding_distance(&[o(0.3, 0.3)]), vec![f64::INFINITY]);
        let d = crowding_distance(&[o(0.0, 1.0), o(0.5, 0.5), o(0.5, 0.5), o(1.0, 0.0)]);
        assert!(d[1].is_finite() && d[1] == d[2]);
    }

    #[test]
    fn survival_examples() {
        let pop = vec![ind(1.0, 0.0, 0, 0.0), ind(0.5, 0.5, 0, 0.0), ind(0.0, 1.0, 0, 0.0)];
        let kept = survival(pop.clone(), 2);
        let mut pts: Vec<_> = kept.iter().map(|i| (i.fitness.accuracy, i.fitness.size_complement)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert_eq!(pts, vec![(0.0, 1.0), (1.0, 0.0)]);

        let pop = vec![ind(0.9, 0.5, 0, 0.0), ind(0.8, 0.6, 0, 0.0), ind(0.1, 0.1, 0, 0.0)];
        let kept = survival(pop, 2);
        assert!(kept.iter().all(|i| i.rank == 0));
    }

    #[test]
    fn tournament_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pop = vec![ind(0.1, 0.1, 1, 0.0), ind(0.2, 0.2, 0, 0.0)];
        assert!((0..100).all(|_| tournament_select(&pop, &mut rng) == 1));
        let pop = vec![ind(0.1, 0.1, 0, 1.0), ind(0.2, 0.2, 0, f64::INFINITY)];
        assert!((0..100).all(|_| tournament_select(&pop, &mut rng) == 1));
    }

    #[test]
    fn sbx_fixed_points() {
        let p1: Genome = "2,3,4,5,6,7,8,2,3,4,5,6,7,8,2,3,4".parse().unwrap();
        let p2: Genome = "8,7,6,5,4,3,2,8,7,6,5,4,3,2,8,7,6".parse().unwrap();
        assert_eq!(sbx_beta(0.5, 15.0), 1.0);
        assert_eq!(sbx_with_draws(&p1, &p2, &[0.5; 17], 15.0), (p1, p2));
        assert_eq!(sbx_with_draws(&p1, &p1, &[0.99; 17], 15.0), (p1, p1));
        let (c1, c2) = sbx_with_draws(&p1, &p2, &[0.999_999; 17], 2.0);
        assert!(c1.is_search_valid() && c2.is_search_valid());
    }

    #[test]
    fn mutation_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = Genome::uniform(2).unwrap();
        let cfg = SearchConfig { mutation_probability: Some(0.0), ..SearchConfig::default() };
        assert_eq!(polynomial_mutation(&g, &cfg, &mut rng), g);
        for _ in 0..1000 {
            assert!(polynomial_perturb(2, rng.gen(), 20.0) >= 2);
            assert!(polynomial_perturb(8, rng.gen(), 20.0) <= 8);
        }
    }
}
