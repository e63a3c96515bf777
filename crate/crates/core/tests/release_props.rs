mod common;

use inftda_core::dp::{PrivacyBudget, PrivacyType, SensitivityModel};
use inftda_core::release::{
    release, theoretical_error_envelope, OrderStrategy, ReleaseConfig, TreeShape,
};
use inftda_core::tree::NodeKey;
use proptest::prelude::*;

use common::{no_orphans, random_tree, toy_tree};

fn config(rho: f64, seed: u64) -> ReleaseConfig {
    ReleaseConfig::new(PrivacyBudget::from_rho(rho, 1e-8).unwrap(), seed)
}

#[test]
fn random_trees_release_consistently() {
    for seed in 0..100 {
        let truth = random_tree(seed);
        for order in [
            OrderStrategy::Ascending,
            OrderStrategy::Descending,
            OrderStrategy::Random,
        ] {
            let r = release(&truth, &config(0.2, seed).with_order(order)).unwrap();
            assert!(r.tree.validate_consistency().is_empty(), "seed {seed}");
            assert_eq!(r.tree.root_attribute(), truth.root_attribute());
            assert!(no_orphans(&r.tree));
            for depth in 1..=r.tree.depth() {
                assert!(r.tree.level(depth).all(|(_, v)| v > 0));
            }
        }
    }
}

#[test]
fn per_level_counts_match_tree() {
    let truth = random_tree(7);
    let r = release(&truth, &config(0.5, 1)).unwrap();
    assert_eq!(r.metadata.per_level.len(), truth.depth() + 1);
    for (depth, stats) in r.metadata.per_level.iter().enumerate().skip(1) {
        assert_eq!(stats.node_count, r.tree.level_len(depth));
    }
}

#[test]
fn high_budget_recovers_toy_tree() {
    let truth = toy_tree();
    let exact = (0..200)
        .filter(|&seed| release(&truth, &config(1e6, seed)).unwrap().tree == truth)
        .count();
    assert!(exact as f64 / 200.0 >= 0.99, "{exact}/200");
}

#[test]
fn unbounded_root_is_noised_and_clamped() {
    let truth = toy_tree();
    let unbounded = SensitivityModel::new(PrivacyType::Unbounded, 1, true).unwrap();
    let mut moved = 0;
    for seed in 0..50 {
        let c = config(0.01, seed).with_sensitivity(unbounded);
        let r = release(&truth, &c).unwrap();
        let root = r.tree.root_attribute();
        assert!(root >= 0);
        assert!(r.tree.validate_consistency().is_empty());
        // σ² = (1 + 2·1) / (2ρ) = 150
        assert_eq!(r.metadata.sigma2, 150.0);
        moved += usize::from(root != 10);
    }
    assert!(moved > 40, "{moved}");
    let r = release(&truth, &config(1e6, 0).with_sensitivity(unbounded)).unwrap();
    assert_eq!(r.tree, truth);
}

#[test]
fn parallel_and_serial_agree() {
    for seed in 0..10 {
        let truth = random_tree(seed + 500);
        let c = config(0.3, seed).with_order(OrderStrategy::Random);
        let a = release(&truth, &c).unwrap();
        let b = release(&truth, &c.with_parallel(false)).unwrap();
        assert_eq!(a.tree, b.tree);
        let again = release(&truth, &c).unwrap();
        assert_eq!(a.tree, again.tree);
    }
}

#[test]
fn different_seeds_differ() {
    let truth = random_tree(3);
    let a = release(&truth, &config(0.05, 1)).unwrap();
    let b = release(&truth, &config(0.05, 2)).unwrap();
    assert_ne!(a.tree, b.tree);
}

#[test]
fn metadata_json_fields() {
    let r = release(&toy_tree(), &config(1.0, 9)).unwrap();
    let v = serde_json::to_value(&r.metadata).unwrap();
    for key in [
        "mode", "rho", "epsilon", "delta", "sensitivity", "order", "seed", "depth", "per_level",
    ] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert_eq!(v["sensitivity"]["type"], "bounded");
    assert_eq!(v["sensitivity"]["m"], 1);
    assert_eq!(v["sensitivity"]["distinct"], true);
    assert!(v["per_level"][0].get("wall_ms").is_some());
}

/// Independent evaluation of `2ℓ√(2σ² ln(2·b·ℓ·b^ℓ/β))` with σ² = 2T/(2ρ).
fn envelope_oracle(level: f64, b: f64, depth: f64, rho: f64, beta: f64) -> f64 {
    let sigma2 = depth / rho;
    2.0 * level * (2.0 * sigma2 * (2.0 * b * level * b.powf(level) / beta).ln()).sqrt()
}

#[test]
fn envelope_regression_constant() {
    let budget = PrivacyBudget::from_epsilon_delta(1.0, 1e-8).unwrap();
    let c = ReleaseConfig::new(budget, 0);
    let shape = TreeShape {
        branching: 2,
        depth: 16,
    };
    let e8 = theoretical_error_envelope(8, &c, shape, 0.01).unwrap();
    assert!((e8 - 2_905.236_751_326_309).abs() < 1e-6, "{e8}");
    for l in 1..=16 {
        let e = theoretical_error_envelope(l, &c, shape, 0.01).unwrap();
        let oracle = envelope_oracle(l as f64, 2.0, 16.0, budget.rho(), 0.01);
        assert!((e - oracle).abs() < 1e-9 * oracle);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn released_tree_is_sparse_and_consistent(seed in any::<u64>(), rho in 0.01f64..10.0) {
        let truth = random_tree(seed);
        let r = release(&truth, &config(rho, seed)).unwrap();
        prop_assert!(r.tree.validate_consistency().is_empty());
        prop_assert!(no_orphans(&r.tree));
        prop_assert_eq!(r.tree.root_attribute(), truth.root_attribute());
        // absent nodes have no descendants
        for depth in 1..=r.tree.depth() {
            for (key, _) in r.tree.level(depth) {
                let mut k: NodeKey = key;
                while let Some(p) = r.tree.parent(k) {
                    prop_assert!(r.tree.attribute(p) > 0);
                    k = p;
                }
            }
        }
    }
}
