#![allow(dead_code)]

use std::sync::Arc;

use inftda_core::hierarchy::PartitionHierarchy;
use inftda_core::tree::{build_tree, HierTree, TreeMode};
use inftda_core::trips::TripTable;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random hierarchy with `levels` levels and 1..=`max_k` children per area.
pub fn random_hierarchy(rng: &mut ChaCha8Rng, levels: usize, max_k: usize) -> PartitionHierarchy {
    let mut paths: Vec<Vec<String>> = vec![Vec::new()];
    for level in 1..=levels {
        let mut next = Vec::new();
        for path in &paths {
            for _ in 0..rng.gen_range(1..=max_k) {
                let mut p = path.clone();
                p.push(format!("a{level}_{}", next.len()));
                next.push(p);
            }
        }
        paths = next;
    }
    PartitionHierarchy::from_paths(paths).unwrap()
}

/// Small random O/D tree: 1 to 3 levels, a random support, small counts.
pub fn random_tree(seed: u64) -> HierTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let levels = rng.gen_range(1..=3);
    let o = random_hierarchy(&mut rng, levels, 3);
    let d = random_hierarchy(&mut rng, levels, 3);
    let mut pairs = Vec::new();
    for i in 0..o.leaf_count() as u32 {
        for j in 0..d.leaf_count() as u32 {
            if rng.gen_bool(0.4) {
                pairs.push(((i, j), rng.gen_range(1..=20)));
            }
        }
    }
    let mode = if rng.gen_bool(0.5) {
        TreeMode::Destination
    } else {
        TreeMode::Origin
    };
    let trips = TripTable::from_counts(pairs).unwrap();
    build_tree(&trips, Arc::new(o), Arc::new(d), mode).unwrap()
}

/// One-level hierarchy `{a, b}` on both sides with trips (a,a)=4, (b,b)=6.
pub fn toy_tree() -> HierTree {
    let h = Arc::new(PartitionHierarchy::from_paths([["a"], ["b"]]).unwrap());
    let trips = TripTable::from_counts([((0, 0), 4), ((1, 1), 6)]).unwrap();
    build_tree(&trips, h.clone(), h, TreeMode::Destination).unwrap()
}

/// No materialized node lacks its parent.
pub fn no_orphans(tree: &HierTree) -> bool {
    (1..=tree.depth()).all(|depth| {
        tree.level(depth).all(|(key, _)| {
            let parent = tree.parent(key).unwrap();
            tree.attribute(parent) > 0
        })
    })
}
