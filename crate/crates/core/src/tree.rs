//! Destination and origin trees built from a pair of hierarchies.
//!
//! For partitions with `g` levels the tree has depth `T = 2g` (root at depth 0).
//! In a destination tree an even depth `2k` holds intra-level pairs
//! `(origin@k, destination@k)` and an odd depth `2k+1` holds the cross-level
//! pairs `(origin@k, destination@k+1)`; the origin tree swaps the roles.
//!
//! Attributes are kept sparsely: one map per depth holding nonzero values only,
//! so absent keys read as zero and the full O/D universe is never materialized.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hierarchy::{AreaRef, PartitionHierarchy};
use crate::trips::TripTable;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("origin hierarchy has {origin} levels but destination hierarchy has {destination}")]
    LevelMismatch { origin: usize, destination: usize },
    #[error("range queries need |ℓ1 - ℓ2| ≤ 1, got levels {origin} and {destination}")]
    LevelGap { origin: usize, destination: usize },
    #[error("area {0:?} is outside the hierarchy")]
    UnknownArea(AreaRef),
    #[error("leaf pair ({0}, {1}) is outside the hierarchy")]
    UnknownLeaf(u32, u32),
    #[error("attribute sum overflows 64 bits")]
    Overflow,
}

/// Which coordinate is refined first when descending one partition level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TreeMode {
    #[default]
    Destination,
    Origin,
}

impl fmt::Display for TreeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeMode::Destination => f.write_str("destination"),
            TreeMode::Origin => f.write_str("origin"),
        }
    }
}

/// A tree node: depth plus the origin and destination area indices at the
/// levels implied by the depth and the tree mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeKey {
    pub depth: usize,
    pub origin: u32,
    pub destination: u32,
}

impl NodeKey {
    pub const ROOT: NodeKey = NodeKey {
        depth: 0,
        origin: 0,
        destination: 0,
    };

    pub fn new(depth: usize, origin: u32, destination: u32) -> Self {
        Self {
            depth,
            origin,
            destination,
        }
    }

    fn pair(&self) -> (u32, u32) {
        (self.origin, self.destination)
    }
}

/// Non-negative hierarchical tree over O/D range queries.
///
/// The same type carries true data, released data, and leaf-aggregated
/// baselines (which may hold negative values).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HierTree {
    origin: Arc<PartitionHierarchy>,
    destination: Arc<PartitionHierarchy>,
    mode: TreeMode,
    levels: Vec<HashMap<(u32, u32), i64>>,
}

impl HierTree {
    /// A tree with every attribute zero (the root is materialized with 0).
    pub fn empty(
        origin: Arc<PartitionHierarchy>,
        destination: Arc<PartitionHierarchy>,
        mode: TreeMode,
    ) -> Result<Self, TreeError> {
        if origin.levels() != destination.levels() {
            return Err(TreeError::LevelMismatch {
                origin: origin.levels(),
                destination: destination.levels(),
            });
        }
        let depth = 2 * origin.levels();
        let mut levels = vec![HashMap::new(); depth + 1];
        levels[0].insert((0, 0), 0);
        Ok(Self {
            origin,
            destination,
            mode,
            levels,
        })
    }

    /// Aggregates signed leaf values into every depth. Zero sums are not stored.
    pub fn from_leaf_values<I>(
        origin: Arc<PartitionHierarchy>,
        destination: Arc<PartitionHierarchy>,
        mode: TreeMode,
        leaves: I,
    ) -> Result<Self, TreeError>
    where
        I: IntoIterator<Item = ((u32, u32), i64)>,
    {
        let mut tree = Self::empty(origin, destination, mode)?;
        let g = tree.origin.levels();
        let (n_o, n_d) = (
            tree.origin.leaf_count() as u32,
            tree.destination.leaf_count() as u32,
        );
        // Ancestry lookups are cached per leaf; leaves repeat across pairs.
        let mut o_cache: HashMap<u32, Vec<u32>> = HashMap::new();
        let mut d_cache: HashMap<u32, Vec<u32>> = HashMap::new();
        for ((o, d), value) in leaves {
            if o >= n_o || d >= n_d {
                return Err(TreeError::UnknownLeaf(o, d));
            }
            if value == 0 {
                continue;
            }
            let o_anc = o_cache
                .entry(o)
                .or_insert_with(|| tree.origin.leaf_ancestry(o));
            let d_anc = d_cache
                .entry(d)
                .or_insert_with(|| tree.destination.leaf_ancestry(d));
            for depth in 0..=2 * g {
                let (ol, dl) = area_levels(mode, depth);
                let slot = tree.levels[depth]
                    .entry((o_anc[ol], d_anc[dl]))
                    .or_insert(0);
                *slot = slot.checked_add(value).ok_or(TreeError::Overflow)?;
            }
        }
        for (depth, level) in tree.levels.iter_mut().enumerate() {
            level.retain(|k, v| *v != 0 || (depth == 0 && *k == (0, 0)));
        }
        Ok(tree)
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn mode(&self) -> TreeMode {
        self.mode
    }

    pub fn origin_hierarchy(&self) -> &Arc<PartitionHierarchy> {
        &self.origin
    }

    pub fn destination_hierarchy(&self) -> &Arc<PartitionHierarchy> {
        &self.destination
    }

    /// True when both trees index the same hierarchies in the same mode.
    pub fn same_shape(&self, other: &HierTree) -> bool {
        self.mode == other.mode
            && (Arc::ptr_eq(&self.origin, &other.origin) || self.origin == other.origin)
            && (Arc::ptr_eq(&self.destination, &other.destination)
                || self.destination == other.destination)
    }

    /// Partition levels `(origin level, destination level)` of nodes at `depth`.
    pub fn area_levels(&self, depth: usize) -> (usize, usize) {
        area_levels(self.mode, depth)
    }

    pub fn areas(&self, key: NodeKey) -> (AreaRef, AreaRef) {
        let (ol, dl) = self.area_levels(key.depth);
        (
            AreaRef::new(ol, key.origin),
            AreaRef::new(dl, key.destination),
        )
    }

    /// Attribute `q(u)`; absent nodes read as 0.
    pub fn attribute(&self, key: NodeKey) -> i64 {
        self.levels
            .get(key.depth)
            .and_then(|l| l.get(&key.pair()))
            .copied()
            .unwrap_or(0)
    }

    pub fn root_attribute(&self) -> i64 {
        self.attribute(NodeKey::ROOT)
    }

    /// Overwrites an attribute. Setting zero drops the node (except the root).
    pub fn set_attribute(&mut self, key: NodeKey, value: i64) {
        let level = &mut self.levels[key.depth];
        if value == 0 && key.depth != 0 {
            level.remove(&key.pair());
        } else {
            level.insert(key.pair(), value);
        }
    }

    /// Number of materialized nodes at `depth`.
    pub fn level_len(&self, depth: usize) -> usize {
        self.levels[depth].len()
    }

    /// Materialized nodes at `depth`, in arbitrary order.
    pub fn level(&self, depth: usize) -> impl Iterator<Item = (NodeKey, i64)> + '_ {
        self.levels[depth]
            .iter()
            .map(move |(&(o, d), &v)| (NodeKey::new(depth, o, d), v))
    }

    /// Materialized nodes at `depth`, sorted by key.
    pub fn sorted_level(&self, depth: usize) -> Vec<(NodeKey, i64)> {
        let mut nodes: Vec<_> = self.level(depth).collect();
        nodes.sort_unstable_by_key(|(k, _)| *k);
        nodes
    }

    /// The full child universe `𝒞(u)`, including zero-attribute children.
    pub fn children(&self, key: NodeKey) -> Vec<NodeKey> {
        if key.depth >= self.depth() {
            return Vec::new();
        }
        let (ol, dl) = self.area_levels(key.depth);
        let next = key.depth + 1;
        if splits_destination(self.mode, key.depth) {
            self.destination
                .children(dl, key.destination)
                .iter()
                .map(|&d| NodeKey::new(next, key.origin, d))
                .collect()
        } else {
            self.origin
                .children(ol, key.origin)
                .iter()
                .map(|&o| NodeKey::new(next, o, key.destination))
                .collect()
        }
    }

    pub fn parent(&self, key: NodeKey) -> Option<NodeKey> {
        if key.depth == 0 {
            return None;
        }
        let parent_depth = key.depth - 1;
        let (ol, dl) = self.area_levels(key.depth);
        Some(if splits_destination(self.mode, parent_depth) {
            NodeKey::new(
                parent_depth,
                key.origin,
                self.destination.parent(dl, key.destination),
            )
        } else {
            NodeKey::new(
                parent_depth,
                self.origin.parent(ol, key.origin),
                key.destination,
            )
        })
    }

    /// Hierarchical range query `q(u_ℓ1, v_ℓ2)` for `|ℓ1 - ℓ2| ≤ 1`.
    ///
    /// Pairs stored as nodes are read directly; the cross-level pair the tree
    /// does not store (e.g. `(k+1, k)` in a destination tree) is summed from the
    /// intra-level nodes below it.
    pub fn range_query(&self, origin: AreaRef, destination: AreaRef) -> Result<i64, TreeError> {
        let g = self.origin.levels();
        for (area, h) in [(origin, &self.origin), (destination, &self.destination)] {
            if area.level > g || area.index as usize >= h.level_size(area.level) {
                return Err(TreeError::UnknownArea(area));
            }
        }
        let (lo, ld) = (origin.level, destination.level);
        if lo.abs_diff(ld) > 1 {
            return Err(TreeError::LevelGap {
                origin: lo,
                destination: ld,
            });
        }
        let stored_depth = match (self.mode, lo.cmp(&ld)) {
            (_, std::cmp::Ordering::Equal) => Some(2 * lo),
            (TreeMode::Destination, std::cmp::Ordering::Less) => Some(2 * lo + 1),
            (TreeMode::Origin, std::cmp::Ordering::Greater) => Some(2 * ld + 1),
            _ => None,
        };
        if let Some(depth) = stored_depth {
            return Ok(self.attribute(NodeKey::new(depth, origin.index, destination.index)));
        }
        // Unstored orientation: refine the coarser side one level and sum.
        let total = match self.mode {
            TreeMode::Destination => self
                .destination
                .children(ld, destination.index)
                .iter()
                .map(|&d| self.attribute(NodeKey::new(2 * lo, origin.index, d)))
                .sum(),
            TreeMode::Origin => self
                .origin
                .children(lo, origin.index)
                .iter()
                .map(|&o| self.attribute(NodeKey::new(2 * ld, o, destination.index)))
                .sum(),
        };
        Ok(total)
    }

    /// Nodes that break `q(u) = Σ q(children)` or `q(u) ≥ 0`, sorted.
    ///
    /// A materialized child whose parent is absent reports the parent key.
    pub fn validate_consistency(&self) -> Vec<NodeKey> {
        let mut bad = Vec::new();
        for depth in 0..=self.depth() {
            for (key, value) in self.level(depth) {
                if value < 0 {
                    bad.push(key);
                }
            }
        }
        for depth in 0..self.depth() {
            let mut sums: HashMap<NodeKey, i64> = HashMap::new();
            for (child, value) in self.level(depth + 1) {
                let parent = self.parent(child).expect("depth > 0");
                *sums.entry(parent).or_insert(0) += value;
            }
            for (key, value) in self.level(depth) {
                if sums.get(&key).copied().unwrap_or(0) != value {
                    bad.push(key);
                }
            }
            for (key, sum) in sums {
                if !self.levels[depth].contains_key(&key.pair()) && sum != 0 {
                    bad.push(key);
                }
            }
        }
        bad.sort_unstable();
        bad.dedup();
        bad
    }
}

/// Builds the destination or origin tree of a trip table.
pub fn build_tree(
    table: &TripTable,
    origin: Arc<PartitionHierarchy>,
    destination: Arc<PartitionHierarchy>,
    mode: TreeMode,
) -> Result<HierTree, TreeError> {
    HierTree::from_leaf_values(
        origin,
        destination,
        mode,
        table.iter().map(|(k, v)| (k, v as i64)),
    )
}

/// Partition levels `(origin, destination)` of nodes at `depth`.
pub fn area_levels(mode: TreeMode, depth: usize) -> (usize, usize) {
    match mode {
        TreeMode::Destination => (depth / 2, depth.div_ceil(2)),
        TreeMode::Origin => (depth.div_ceil(2), depth / 2),
    }
}

/// Whether descending from `depth` to `depth + 1` refines the destination.
fn splits_destination(mode: TreeMode, depth: usize) -> bool {
    depth.is_multiple_of(2) == (mode == TreeMode::Destination)
}
