#[path = "support/oracles.rs"]
mod oracles;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use shiftlens_core::stats::{
    condensed_to_square, kde_gaussian, kde_on_span, pairwise_distances, scott_bandwidth, square_to_condensed,
    DistanceMetric,
};

#[test]
fn pdist_and_squareform_match_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let n = rng.random_range(2..12);
        let dim = rng.random_range(1..6);
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-10.0..10.0)).collect())
            .collect();
        let d = pairwise_distances(&pts, DistanceMetric::Euclidean).unwrap();
        assert_eq!(d.values(), oracles::pdist_euclidean(&pts).as_slice());
        let sq = condensed_to_square(&d);
        for i in 0..n {
            for j in 0..n {
                let want = if i == j {
                    0.0
                } else {
                    oracles::euclidean(&pts[i], &pts[j])
                };
                assert_eq!(sq.get(i, j), want);
            }
        }
        assert_eq!(square_to_condensed(&sq).unwrap(), d);
    }
}

#[test]
fn kde_integrates_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let n = rng.random_range(2..200);
        let scale = rng.random_range(0.01..10.0);
        let samples: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect();
        let est = kde_on_span(&samples, 512).unwrap();
        let integral = oracles::trapezoid(&est.grid, &est.density);
        assert!((0.99..=1.01).contains(&integral), "integral {integral}");
        assert!(est.density.iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn kde_matches_direct_formula() {
    let samples = [0.1, 0.4, 0.45, 0.9, 1.3];
    let grid: Vec<f64> = (0..41).map(|i| -0.5 + 0.05 * i as f64).collect();
    let est = kde_gaussian(&samples, &grid).unwrap();
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
    let h = var.sqrt() * n.powf(-0.2);
    assert!((scott_bandwidth(&samples).unwrap() - h).abs() < 1e-15);
    for (x, got) in grid.iter().zip(&est.density) {
        let mut s = 0.0;
        for v in samples {
            let z = (x - v) / h;
            s += (-z * z / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        }
        assert!((got - s / (n * h)).abs() < 1e-12);
    }
}
