//! Geographic partition hierarchies.
//!
//! A hierarchy splits a whole space `X` into `g` nested levels. Level 0 is the
//! single root area; every area at level `ℓ ≥ 1` has exactly one parent at
//! level `ℓ - 1`. Areas are addressed by `(level, index)` pairs; names are only
//! used at the I/O boundary.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Name given to the level-0 area when exporting tables.
pub const ROOT_AREA_NAME: &str = "X";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HierarchyError {
    #[error("hierarchy input is empty")]
    Empty,
    #[error("row {row} has {found} components, expected {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row} contains an empty area id")]
    EmptyId { row: usize },
    #[error("area `{area}` at level {level} has two parents: `{first}` and `{second}`")]
    InconsistentParent {
        level: usize,
        area: String,
        first: String,
        second: String,
    },
    #[error("leaf `{0}` appears in more than one row")]
    DuplicateLeaf(String),
}

/// Reference to an area: its level (0 = root) and its index within the level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AreaRef {
    pub level: usize,
    pub index: u32,
}

impl AreaRef {
    pub const ROOT: AreaRef = AreaRef { level: 0, index: 0 };

    pub fn new(level: usize, index: u32) -> Self {
        Self { level, index }
    }
}

/// The partition `P_1, …, P_g` with parent maps `h_ℓ`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<String>>", into = "Vec<Vec<String>>")]
pub struct PartitionHierarchy {
    /// `names[ℓ][i]` is the id of area `i` at level `ℓ`; `names[0] == ["X"]`.
    names: Vec<Vec<String>>,
    /// `parents[ℓ][i]` is the parent index (at level `ℓ - 1`); `parents[0]` is empty.
    parents: Vec<Vec<u32>>,
    /// `children[ℓ][i]` lists the children (at level `ℓ + 1`); empty for leaves.
    children: Vec<Vec<Vec<u32>>>,
    lookup: Vec<HashMap<String, u32>>,
}

impl PartitionHierarchy {
    /// Builds a hierarchy from root-to-leaf paths, one leaf per row.
    ///
    /// Rows must all have the same length `g`. Area ids are scoped per level, so
    /// the same id may appear at two different levels. Indices are assigned in
    /// order of first appearance.
    pub fn from_paths<R, S>(rows: R) -> Result<Self, HierarchyError>
    where
        R: IntoIterator,
        R::Item: AsRef<[S]>,
        S: AsRef<str>,
    {
        let mut levels: Option<usize> = None;
        let mut names: Vec<Vec<String>> = vec![vec![ROOT_AREA_NAME.to_string()]];
        let mut parents: Vec<Vec<u32>> = vec![Vec::new()];
        let mut lookup: Vec<HashMap<String, u32>> =
            vec![HashMap::from([(ROOT_AREA_NAME.to_string(), 0)])];

        for (row_idx, row) in rows.into_iter().enumerate() {
            let row = row.as_ref();
            let g = *levels.get_or_insert_with(|| {
                names.resize(row.len() + 1, Vec::new());
                parents.resize(row.len() + 1, Vec::new());
                lookup.resize(row.len() + 1, HashMap::new());
                row.len()
            });
            if row.len() != g || g == 0 {
                return Err(HierarchyError::Ragged {
                    row: row_idx,
                    expected: g,
                    found: row.len(),
                });
            }

            let mut parent_idx = 0u32;
            for (offset, raw) in row.iter().enumerate() {
                let level = offset + 1;
                let id = raw.as_ref().trim();
                if id.is_empty() {
                    return Err(HierarchyError::EmptyId { row: row_idx });
                }
                match lookup[level].get(id) {
                    Some(&idx) => {
                        let known_parent = parents[level][idx as usize];
                        if known_parent != parent_idx {
                            return Err(HierarchyError::InconsistentParent {
                                level,
                                area: id.to_string(),
                                first: names[level - 1][known_parent as usize].clone(),
                                second: names[level - 1][parent_idx as usize].clone(),
                            });
                        }
                        if level == g {
                            return Err(HierarchyError::DuplicateLeaf(id.to_string()));
                        }
                        parent_idx = idx;
                    }
                    None => {
                        let idx = names[level].len() as u32;
                        names[level].push(id.to_string());
                        parents[level].push(parent_idx);
                        lookup[level].insert(id.to_string(), idx);
                        parent_idx = idx;
                    }
                }
            }
        }

        if levels.is_none() {
            return Err(HierarchyError::Empty);
        }
        Ok(Self::assemble(names, parents, lookup))
    }

    fn assemble(
        names: Vec<Vec<String>>,
        parents: Vec<Vec<u32>>,
        lookup: Vec<HashMap<String, u32>>,
    ) -> Self {
        let mut children: Vec<Vec<Vec<u32>>> =
            names.iter().map(|lvl| vec![Vec::new(); lvl.len()]).collect();
        for level in 1..names.len() {
            for (idx, &p) in parents[level].iter().enumerate() {
                children[level - 1][p as usize].push(idx as u32);
            }
        }
        Self {
            names,
            parents,
            children,
            lookup,
        }
    }

    /// Number of partition levels `g` (the root level is not counted).
    pub fn levels(&self) -> usize {
        self.names.len() - 1
    }

    /// Number of areas at `level` (`1` at level 0).
    pub fn level_size(&self, level: usize) -> usize {
        self.names[level].len()
    }

    pub fn leaf_count(&self) -> usize {
        self.level_size(self.levels())
    }

    pub fn name(&self, area: AreaRef) -> &str {
        &self.names[area.level][area.index as usize]
    }

    pub fn find(&self, level: usize, id: &str) -> Option<AreaRef> {
        self.lookup
            .get(level)?
            .get(id)
            .map(|&index| AreaRef { level, index })
    }

    pub fn find_leaf(&self, id: &str) -> Option<u32> {
        self.lookup[self.levels()].get(id).copied()
    }

    /// Parent index of area `index` at `level` (`level ≥ 1`).
    pub fn parent(&self, level: usize, index: u32) -> u32 {
        self.parents[level][index as usize]
    }

    /// Children (at `level + 1`) of area `index` at `level`.
    pub fn children(&self, level: usize, index: u32) -> &[u32] {
        &self.children[level][index as usize]
    }

    /// Ancestor of a leaf at every level, root first: `out[ℓ]` is the level-`ℓ` area.
    pub fn leaf_ancestry(&self, leaf: u32) -> Vec<u32> {
        let g = self.levels();
        let mut out = vec![0u32; g + 1];
        out[g] = leaf;
        for level in (1..=g).rev() {
            out[level - 1] = self.parent(level, out[level]);
        }
        out
    }

    /// Ancestor of area `index` at `from` lifted to level `to ≤ from`.
    pub fn ancestor(&self, from: usize, index: u32, to: usize) -> u32 {
        let mut idx = index;
        for level in (to + 1..=from).rev() {
            idx = self.parent(level, idx);
        }
        idx
    }

    /// The common branching factor if every non-leaf area has the same number
    /// of children, `None` otherwise.
    pub fn regular_branching(&self) -> Option<usize> {
        let first = self.children[0][0].len();
        self.children[..self.levels()]
            .iter()
            .flatten()
            .all(|c| c.len() == first)
            .then_some(first)
    }

    /// Root-to-leaf paths, one per leaf, in leaf index order.
    pub fn paths(&self) -> Vec<Vec<String>> {
        let g = self.levels();
        (0..self.leaf_count() as u32)
            .map(|leaf| {
                self.leaf_ancestry(leaf)[1..]
                    .iter()
                    .enumerate()
                    .map(|(offset, &idx)| self.names[offset + 1][idx as usize].clone())
                    .collect::<Vec<_>>()
            })
            .inspect(|p| debug_assert_eq!(p.len(), g))
            .collect()
    }
}

impl TryFrom<Vec<Vec<String>>> for PartitionHierarchy {
    type Error = HierarchyError;

    fn try_from(rows: Vec<Vec<String>>) -> Result<Self, Self::Error> {
        Self::from_paths(rows)
    }
}

impl From<PartitionHierarchy> for Vec<Vec<String>> {
    fn from(h: PartitionHierarchy) -> Self {
        h.paths()
    }
}

/// Parses path rows into a hierarchy. See [`PartitionHierarchy::from_paths`].
pub fn parse_hierarchy<R, S>(rows: R) -> Result<PartitionHierarchy, HierarchyError>
where
    R: IntoIterator,
    R::Item: AsRef<[S]>,
    S: AsRef<str>,
{
    PartitionHierarchy::from_paths(rows)
}
