//! Property tests over randomly generated trees, parameters and samples.

use cfn_core::landscape::{block_decomposition, SupSearch};
use cfn_core::likelihood::{expected_exact, hessian, log_likelihood_rooted, path_signals, Quantity};
use cfn_core::linalg::symmetric_eigenvalues;
use cfn_core::magnetization::directed_magnetizations;
use cfn_core::model::{
    enumerate_leaf_configs, leaf_config_probability, sample_edge_params, RegimeBox, Role, SampleBatch,
};
use cfn_core::optimize::{coordinate_ascent, AscentOptions, Objective};
use cfn_core::tree::{load_tree, Tree, TreeFormat};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_tree(n: usize, seed: u64) -> Tree {
    Tree::random(n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn distances(t: &Tree) -> Vec<usize> {
    let ne = t.edge_count();
    let mut d = Vec::new();
    for e in 0..ne {
        for f in 0..ne {
            if e != f {
                d.push(t.edge_distance(e, f).unwrap());
            }
        }
    }
    d
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tree_counts_and_path_lengths(n in 2usize..=12, seed in any::<u64>()) {
        let t = random_tree(n, seed);
        prop_assert_eq!(t.edge_count() + 1, t.vertex_count());
        prop_assert_eq!(t.vertex_count(), 2 * n - 2);
        prop_assert_eq!(t.leaf_count(), n);
        for e in 0..t.edge_count() {
            for f in 0..t.edge_count() {
                if e != f {
                    let pd = t.path_decomposition(e, f).unwrap();
                    prop_assert_eq!(pd.n, t.edge_distance(e, f).unwrap());
                }
            }
        }
    }

    #[test]
    fn edge_list_reload_preserves_the_tree(n in 2usize..=12, seed in any::<u64>()) {
        let t = random_tree(n, seed);
        let (back, raw) = load_tree(&t.to_edge_list(None), TreeFormat::EdgeList).unwrap();
        prop_assert!(raw.iter().all(Option::is_none));
        prop_assert_eq!(back.leaf_count(), n);
        prop_assert_eq!(distances(&back), distances(&t));
    }

    #[test]
    fn flipping_leaves_negates_every_magnetization(n in 2usize..=10, seed in any::<u64>(), d in 0.005f64..0.05) {
        let t = random_tree(n, seed);
        let rbox = RegimeBox::with_defaults(d).unwrap();
        let th = sample_edge_params(&t, &rbox, Role::Estimate, seed).theta;
        let cfg = SampleBatch::simulate(&t, &th, 1, seed).configs.remove(0);
        let flipped: Vec<i8> = cfg.iter().map(|s| -s).collect();
        let a = directed_magnetizations(&t, &th, &cfg).unwrap();
        let b = directed_magnetizations(&t, &th, &flipped).unwrap();
        for (x, y) in a.entries().iter().zip(b.entries()) {
            prop_assert!(x.abs() <= 1.0);
            prop_assert_eq!(*x, -*y);
        }
    }

    #[test]
    fn likelihood_does_not_depend_on_the_root(n in 3usize..=9, seed in any::<u64>()) {
        let t = random_tree(n, seed);
        let rbox = RegimeBox::with_defaults(0.02).unwrap();
        let th = sample_edge_params(&t, &rbox, Role::Estimate, seed).theta;
        let batch = SampleBatch::simulate(&t, &th, 4, seed);
        let base = log_likelihood_rooted(&t, &th, &batch, t.default_root()).unwrap();
        for v in 0..t.vertex_count() {
            let l = log_likelihood_rooted(&t, &th, &batch, v).unwrap();
            prop_assert!((l - base).abs() <= 1e-12 * base.abs().max(1.0));
        }
    }

    #[test]
    fn hessian_entry_is_orientation_free_and_bounded(n in 3usize..=10, seed in any::<u64>(), d in 0.002f64..0.05) {
        let t = random_tree(n, seed);
        let rbox = RegimeBox::with_defaults(d).unwrap();
        let th = sample_edge_params(&t, &rbox, Role::Estimate, seed).theta;
        let cfg = SampleBatch::simulate(&t, &th, 1, seed ^ 1).configs.remove(0);
        for e in 0..t.edge_count() {
            for f in 0..e {
                let ef = path_signals(&t, &th, &cfg, e, f).unwrap();
                let fe = path_signals(&t, &th, &cfg, f, e).unwrap();
                let (a, b) = (ef.hessian_entry().unwrap(), fe.hessian_entry().unwrap());
                prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "({e},{f}): {a} vs {b}");
                prop_assert!(a.abs() <= ef.product_bound() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn blocks_dominate_and_count_correctly(n in 6usize..=14, seed in any::<u64>(), d in 0.002f64..0.03) {
        let t = random_tree(n, seed);
        let rbox = RegimeBox::with_defaults(d).unwrap();
        let th = sample_edge_params(&t, &rbox, Role::Estimate, seed).theta;
        let truth = sample_edge_params(&t, &rbox, Role::Truth, seed).theta;
        let cfg = SampleBatch::simulate(&t, &truth, 1, seed).configs.remove(0);
        let search = SupSearch { grid_points: 201, refine: true };
        for e in 0..t.edge_count() {
            for f in 0..t.edge_count() {
                let nd = if e == f { 0 } else { t.edge_distance(e, f).unwrap() };
                if nd < 3 {
                    continue;
                }
                let b = block_decomposition(&t, &th, &cfg, e, f, rbox.signal_bound(), search).unwrap();
                prop_assert_eq!(b.r, (nd + 1) % 4);
                prop_assert_eq!(b.block_count(), (nd - 3) / 4);
                prop_assert!(b.bound >= b.hessian_entry.abs(), "({e},{f}) ratio {}", b.dominance_ratio());
            }
        }
    }

    #[test]
    fn coordinate_ascent_never_decreases_the_objective(n in 2usize..=7, seed in any::<u64>()) {
        let t = random_tree(n, seed);
        let rbox = RegimeBox::with_defaults(0.05).unwrap();
        let truth = sample_edge_params(&t, &rbox, Role::Truth, seed).theta;
        let start = sample_edge_params(&t, &rbox, Role::Estimate, seed ^ 7).theta;
        let batch = SampleBatch::simulate(&t, &truth, 50, seed);
        let obj = Objective::batch(&batch).unwrap();
        let opts = AscentOptions { sweeps: 20, ..AscentOptions::default() };
        let fit = coordinate_ascent(&t, &start, &obj, opts, None).unwrap();
        prop_assert!(fit.objective_nondecreasing(1e-12));
    }
}

proptest! {
    // Exact enumeration over up to 2^10 patterns per case.
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn leaf_probabilities_sum_to_one(n in 2usize..=8, seed in any::<u64>(), d in 0.005f64..0.1) {
        let t = random_tree(n, seed);
        let rbox = RegimeBox::with_defaults(d).unwrap();
        let th = sample_edge_params(&t, &rbox, Role::Truth, seed).theta;
        let total: f64 = enumerate_leaf_configs(&t, 8)
            .unwrap()
            .iter()
            .map(|c| leaf_config_probability(&t, &th, c))
            .sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn expected_hessian_is_negative_definite_in_the_boxes(
        n in 3usize..=10,
        seed in any::<u64>(),
        d in 0.002f64..=0.01,
    ) {
        let t = random_tree(n, seed);
        let rbox = RegimeBox::with_defaults(d).unwrap();
        let truth = sample_edge_params(&t, &rbox, Role::Truth, seed).theta;
        let est = sample_edge_params(&t, &rbox, Role::Estimate, seed ^ 3).theta;
        let h = expected_exact(&t, &truth, &est, Quantity::Hessian, 10).unwrap().matrix().unwrap();
        let lmax = symmetric_eigenvalues(&h).unwrap().into_iter().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lmax < 0.0, "largest eigenvalue {lmax}");
    }

    #[test]
    fn batch_hessian_is_exactly_symmetric(n in 2usize..=8, seed in any::<u64>()) {
        let t = random_tree(n, seed);
        let rbox = RegimeBox::with_defaults(0.02).unwrap();
        let th = sample_edge_params(&t, &rbox, Role::Estimate, seed).theta;
        let h = hessian(&t, &th, &SampleBatch::simulate(&t, &th, 5, seed)).unwrap();
        for i in 0..h.dim() {
            for j in 0..h.dim() {
                prop_assert_eq!(h.get(i, j), h.get(j, i));
            }
        }
    }
}
