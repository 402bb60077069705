use std::collections::HashMap;

use coevo::{NodeState, PlayerGraph};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn poisson_pmf(mean: f64, k_max: usize) -> Vec<f64> {
    let mut p = vec![(-mean).exp()];
    for k in 1..=k_max {
        let prev = p[k - 1];
        p.push(prev * mean / k as f64);
    }
    let total: f64 = p.iter().sum();
    p.iter().map(|x| x / total).collect()
}

#[test]
fn every_edge_set_equally_likely() {
    // 15 possible pairs on 6 nodes, C(15, 3) = 455 edge sets.
    const DRAWS: usize = 10_000;
    // The per-set 4 sigma rule alone rejects about 5% of seeds (455
    // comparisons); the chi-square bound is the aggregate check.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut counts: HashMap<Vec<(usize, usize)>, usize> = HashMap::new();
    for _ in 0..DRAWS {
        let g = PlayerGraph::erdos_renyi(6, 3, &mut rng).unwrap();
        let mut e: Vec<(usize, usize)> = g.edges().map(|e| (e.lo(), e.hi())).collect();
        e.sort_unstable();
        assert_eq!(e.len(), 3);
        *counts.entry(e).or_insert(0) += 1;
    }
    assert_eq!(counts.len(), 455);
    let p = 1.0 / 455.0;
    let expected = DRAWS as f64 * p;
    let sigma = (DRAWS as f64 * p * (1.0 - p)).sqrt();
    let mut chi2 = 0.0;
    for &k in counts.values() {
        assert!((k as f64 - expected).abs() <= 4.0 * sigma, "count {k}");
        chi2 += (k as f64 - expected).powi(2) / expected;
    }
    // 454 degrees of freedom: mean 454, sd about 30.
    assert!(
        chi2 < 454.0 + 4.0 * (2.0f64 * 454.0).sqrt(),
        "chi2 = {chi2}"
    );
}

#[test]
fn degrees_close_to_poisson() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut hist = vec![0usize; 51];
    let mut total = 0usize;
    for _ in 0..100 {
        let g = PlayerGraph::erdos_renyi(1000, 5000, &mut rng).unwrap();
        for (k, &n) in g.degree_histogram().iter().enumerate() {
            hist[k.min(50)] += n;
            total += n;
        }
    }
    let pk = poisson_pmf(10.0, 50);
    let tv: f64 = 0.5
        * hist
            .iter()
            .zip(&pk)
            .map(|(&h, &p)| (h as f64 / total as f64 - p).abs())
            .sum::<f64>();
    assert!(tv < 0.02, "total variation {tv}");
}

#[test]
fn defector_count_is_exact_and_placement_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let reps = 20_000;
    let mut hits = [0usize; 10];
    for _ in 0..reps {
        let mut g = PlayerGraph::erdos_renyi(10, 12, &mut rng).unwrap();
        g.assign_states(0.3, &mut rng);
        assert_eq!(g.counts().n_c, 7);
        assert_eq!(g.counts(), g.recount());
        for (i, h) in hits.iter_mut().enumerate() {
            *h += usize::from(g.state(i) == NodeState::Defector);
        }
    }
    let p = 0.3;
    let sigma = (p * (1.0 - p) / reps as f64).sqrt();
    for h in hits {
        assert!((h as f64 / reps as f64 - p).abs() <= 4.0 * sigma);
    }
}

#[test]
fn states_independent_of_degree() {
    // Per-state degree histograms both follow the overall one.
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let (mut kc, mut kd, mut nc, mut nd) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..20 {
        let mut g = PlayerGraph::erdos_renyi(1000, 5000, &mut rng).unwrap();
        g.assign_states(0.5, &mut rng);
        for (k, &n) in g
            .degree_distribution(NodeState::Cooperator)
            .iter()
            .enumerate()
        {
            kc += (k * n) as f64;
            nc += n as f64;
        }
        for (k, &n) in g
            .degree_distribution(NodeState::Defector)
            .iter()
            .enumerate()
        {
            kd += (k * n) as f64;
            nd += n as f64;
        }
    }
    assert_eq!(nc, nd);
    assert!((kc / nc - 10.0).abs() < 0.1 && (kd / nd - 10.0).abs() < 0.1);
}
