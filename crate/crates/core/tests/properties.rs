mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;
use entropy_loss::{
    brute_force_knn, combined_entropy_loss, digamma, direction_loss, entropy_knn, entropy_knn_gradient,
    entropy_loss_gradients, knn_distances, variance_loss, DuplicatePolicy, EntropyLossConfig, SampleMatrix,
};

const REJECT: DuplicatePolicy = DuplicatePolicy::Reject;

fn cloud(seed: u64, n: usize, d: usize) -> SampleMatrix {
    normal_points(&mut ChaCha8Rng::seed_from_u64(seed), n, d)
}

fn lattice(seed: u64, n: usize, d: usize) -> SampleMatrix {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SampleMatrix::new(n, d, (0..n * d).map(|_| rng.gen_range(0..3) as f64).collect()).unwrap()
}

fn shuffled(points: &SampleMatrix, seed: u64) -> (SampleMatrix, Vec<usize>) {
    let mut order: Vec<usize> = (0..points.rows()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    (points.select_rows(&order), order)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tree_equals_brute_force(seed in any::<u64>(), n in 2usize..200, d in 1usize..8, k in 1usize..10, ties in any::<bool>()) {
        prop_assume!(k < n);
        let x = if ties { lattice(seed, n, d) } else { cloud(seed, n, d) };
        prop_assert_eq!(knn_distances(&x, k).unwrap(), brute_force_knn(&x, k).unwrap());
    }

    #[test]
    fn permuting_rows_permutes_neighbors(seed in any::<u64>(), n in 3usize..120, d in 1usize..5, k in 1usize..5) {
        prop_assume!(k < n);
        let x = cloud(seed, n, d);
        let (y, order) = shuffled(&x, seed ^ 1);
        let (nx, ny) = (knn_distances(&x, k).unwrap(), knn_distances(&y, k).unwrap());
        for (new, &old) in order.iter().enumerate() {
            prop_assert_eq!(ny.distances(new), nx.distances(old));
            let mapped: Vec<usize> = ny.indices(new).iter().map(|&j| order[j]).collect();
            prop_assert_eq!(mapped.as_slice(), nx.indices(old));
        }
    }

    #[test]
    fn scaling_points_scales_distances(seed in any::<u64>(), n in 3usize..100, d in 1usize..5, k in 1usize..4, s in 0.01f64..100.0) {
        prop_assume!(k < n);
        let x = cloud(seed, n, d);
        let (a, b) = (knn_distances(&x, k).unwrap(), knn_distances(&x.scaled(s), k).unwrap());
        for i in 0..n {
            for (u, v) in a.distances(i).iter().zip(b.distances(i)) {
                prop_assert!((v - s * u).abs() <= 1e-9 * s * u);
            }
        }
    }

    #[test]
    fn neighbor_lists_grow_monotonically(seed in any::<u64>(), n in 3usize..100, d in 1usize..5, k in 1usize..6, ties in any::<bool>()) {
        prop_assume!(k + 1 < n);
        let x = if ties { lattice(seed, n, d) } else { cloud(seed, n, d) };
        let (a, b) = (knn_distances(&x, k).unwrap(), knn_distances(&x, k + 1).unwrap());
        for i in 0..n {
            prop_assert!(b.kth_distance(i) >= a.kth_distance(i));
            prop_assert_eq!(&b.distances(i)[..k], a.distances(i));
            prop_assert!(b.distances(i).windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn entropy_is_translation_invariant(seed in any::<u64>(), n in 5usize..150, d in 1usize..4, k in 1usize..4, c in -100.0f64..100.0) {
        prop_assume!(k < n);
        let x = cloud(seed, n, d);
        let h = entropy_knn(&x, k, &REJECT).unwrap().value;
        let moved = entropy_knn(&x.translated(&vec![c; d]), k, &REJECT).unwrap().value;
        prop_assert!((h - moved).abs() <= 1e-9, "{} vs {}", h, moved);
    }

    #[test]
    fn entropy_follows_the_scaling_law(seed in any::<u64>(), n in 5usize..150, d in 1usize..5, k in 1usize..4, s in 0.01f64..100.0) {
        prop_assume!(k < n);
        let x = cloud(seed, n, d);
        let h = entropy_knn(&x, k, &REJECT).unwrap().value;
        let scaled = entropy_knn(&x.scaled(s), k, &REJECT).unwrap().value;
        prop_assert!((scaled - h - d as f64 * s.ln()).abs() <= 1e-9);
    }

    #[test]
    fn entropy_is_permutation_invariant(seed in any::<u64>(), n in 5usize..150, d in 1usize..4, k in 1usize..4) {
        prop_assume!(k < n);
        let x = cloud(seed, n, d);
        let (y, _) = shuffled(&x, seed.wrapping_add(9));
        let (a, b) = (entropy_knn(&x, k, &REJECT).unwrap().value, entropy_knn(&y, k, &REJECT).unwrap().value);
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn estimator_gradient_rows_sum_to_zero(seed in any::<u64>(), n in 3usize..80, d in 1usize..4, k in 1usize..4) {
        prop_assume!(k < n);
        let g = entropy_knn_gradient(&cloud(seed, n, d), k).unwrap();
        prop_assert!(row_sum(&g).iter().all(|v| v.abs() <= 1e-10));
    }

    #[test]
    fn variance_loss_is_nonnegative_and_shift_invariant(deltas in prop::collection::vec(-20.0f64..20.0, 1..10), c in -50.0f64..50.0) {
        let l1 = variance_loss(&deltas).unwrap();
        prop_assert!(l1 >= 0.0);
        let shifted: Vec<f64> = deltas.iter().map(|v| v + c).collect();
        prop_assert!((variance_loss(&shifted).unwrap() - l1).abs() <= 1e-9 * (1.0 + l1));
    }

    #[test]
    fn variance_loss_vanishes_on_constants(c in -50.0f64..50.0, n in 1usize..10) {
        prop_assert!(variance_loss(&vec![c; n]).unwrap() <= 1e-12);
    }

    #[test]
    fn direction_loss_is_nonpositive(deltas in prop::collection::vec(-20.0f64..20.0, 1..10)) {
        let l2 = direction_loss(&deltas).unwrap();
        prop_assert!(l2 <= 0.0);
        prop_assert_eq!(l2 == 0.0, deltas.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn combined_loss_ignores_layer_translation(seed in any::<u64>(), layer in 0usize..3, c in -20.0f64..20.0) {
        let layers: Vec<SampleMatrix> = (0..3).map(|l| cloud(seed.wrapping_add(l), 25, 2)).collect();
        let config = EntropyLossConfig::default();
        let before = combined_entropy_loss(&layers, &config).unwrap();
        let mut moved = layers.clone();
        moved[layer] = moved[layer].translated(&[c, -c]);
        let after = combined_entropy_loss(&moved, &config).unwrap();
        prop_assert!((before.total - after.total).abs() <= 1e-8 * (1.0 + before.total.abs()));
    }

    #[test]
    fn loss_gradient_rows_sum_to_zero(seed in any::<u64>(), layers in 2usize..5, w1 in 0.0f64..2.0, w2 in 0.0f64..2.0) {
        let acts: Vec<SampleMatrix> = (0..layers).map(|l| cloud(seed.wrapping_add(l as u64), 16, 3)).collect();
        let config = EntropyLossConfig { w_variance: w1, w_direction: w2, ..Default::default() };
        for g in entropy_loss_gradients(&acts, &config).unwrap() {
            prop_assert!(row_sum(&g).iter().all(|v| v.abs() <= 1e-10));
        }
    }

    #[test]
    fn digamma_recurrence(x in 0.01f64..50.0) {
        let lhs = digamma(x + 1.0).unwrap();
        let rhs = digamma(x).unwrap() + 1.0 / x;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
    }
}

#[test]
fn estimates_converge_with_sample_size() {
    use entropy_loss::harness::{generate_points, PointDistribution};
    let dist = PointDistribution::Normal { std: 1.0 };
    let truth = dist.entropy(2);
    let err = |n: usize| {
        let mean = (0..10u64)
            .map(|s| entropy_knn(&generate_points(dist, n, 2, s).unwrap(), 3, &REJECT).unwrap().value)
            .sum::<f64>()
            / 10.0;
        (mean - truth).abs()
    };
    let (small, large) = (err(200), err(2000));
    assert!(large <= small.max(0.05), "n=200 error {small}, n=2000 error {large}");
}
