//! Property tests for the serialization formats and classifier.

use cfnphylo::distance::classify_distance_fixed_theta;
use cfnphylo::experiment::wilson_interval;
use cfnphylo::newick;
use cfnphylo::sample::SampleMatrix;
use cfnphylo::tree::{BalancedTree, EdgeParams, Shape};
use proptest::prelude::*;

fn shape_strategy() -> impl Strategy<Value = Shape> {
    // balanced shapes only: a b-ary gadget or a (b+1)-star of gadgets
    (2usize..=3, 1usize..=3, any::<bool>()).prop_map(|(b, ell, star)| {
        if star && b.pow(ell as u32) * (b + 1) <= 32 {
            Shape::Node(vec![Shape::bary(b, ell); b + 1])
        } else {
            Shape::bary(b, ell.min(4))
        }
    })
}

proptest! {
    #[test]
    fn newick_roundtrip(shape in shape_strategy(), seed in any::<u64>()) {
        let tree = BalancedTree::from_shape(&shape).unwrap();
        let mut p = EdgeParams::uniform_theta(&tree, 0.05, 0.99, seed);
        for (i, e) in p.eta.iter_mut().enumerate() {
            *e = 0.3 + 0.05 * (i % 10) as f64;
        }
        let text = newick::emit(&tree, &p);
        let (t2, p2) = newick::parse(&text).unwrap();
        prop_assert_eq!(&tree, &t2);
        for v in 1..tree.node_count() {
            prop_assert!((p.theta[v] - p2.theta[v]).abs() < 1e-12);
        }
        for l in 0..tree.n_leaves() {
            prop_assert!((p.eta[l] - p2.eta[l]).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_matrix_roundtrips(k in 1usize..80, n in 1usize..10, fill in any::<u64>()) {
        let mut m = SampleMatrix::zeros_minus(k, n);
        for t in 0..k {
            for v in 0..n {
                if fill.wrapping_mul(6364136223846793005).wrapping_add((t * n + v) as u64) >> 60 > 7 {
                    m.set(t, v, 1);
                }
            }
        }
        let mut text = Vec::new();
        m.write_text(&mut text).unwrap();
        prop_assert_eq!(&m, &SampleMatrix::read_text(&text[..]).unwrap());
        let mut bin = Vec::new();
        m.write_binary(&mut bin).unwrap();
        prop_assert_eq!(&m, &SampleMatrix::read_binary(&bin[..]).unwrap());
    }

    #[test]
    fn wilson_is_an_interval_around_p_hat(s in 0usize..=50, t in 1usize..=50, z in 0.1f64..4.0) {
        prop_assume!(s <= t);
        let (lo, hi) = wilson_interval(s, t, z);
        let p = s as f64 / t as f64;
        prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
        prop_assert!(lo <= p + 1e-12 && p <= hi + 1e-12);
    }

    #[test]
    fn classifier_inverts_exact_correlations(
        theta in 0.3f64..0.95,
        eta in 0.5f64..1.0,
        ell in 1usize..=4,
        r in 1usize..=4,
    ) {
        prop_assume!(r <= ell);
        let alpha = eta * eta * theta.powi(2 * r as i32);
        prop_assert_eq!(
            classify_distance_fixed_theta(alpha, theta, eta, ell),
            2 * r
        );
        // anything at or below the deepest attainable correlation is far
        let far = eta * eta * theta.powi(2 * (ell as i32 + 2));
        prop_assert_eq!(
            classify_distance_fixed_theta(far, theta, eta, ell),
            2 * ell + 2
        );
    }
}
