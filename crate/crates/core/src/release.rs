//! TopDown release of a hierarchical O/D tree.
//!
//! The root is fixed first (exact under bounded privacy, noised under
//! unbounded), then every level is released parent by parent: noise the full
//! child vector, project it back onto the non-negative integers summing to the
//! parent's released count, and keep the positive entries. Parents released as
//! zero prune their whole subtree.

use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dp::rng::{substream, StreamTag};
use crate::dp::{
    per_level_sigma2, unbounded_sigma2, DiscreteGaussian, DpError, PrivacyBudget, PrivacyType,
    SensitivityModel,
};
use crate::intopt::{intopt_fast, IntOptError, OptProblem, Order};
use crate::tree::{HierTree, NodeKey, TreeError, TreeMode};

#[derive(Debug, Error)]
pub enum ReleaseError {
    #[error("input tree is inconsistent at {} node(s), first {first:?}", .count)]
    InconsistentInput { count: usize, first: NodeKey },
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error(transparent)]
    Opt(#[from] IntOptError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("noisy count overflows 64 bits")]
    Overflow,
    #[error("level {level} is outside 0..={depth}")]
    LevelOutOfRange { level: usize, depth: usize },
    #[error("error envelope needs a regular tree and bounded privacy")]
    EnvelopeUndefined,
    #[error("failure probability must lie in (0, 1), got {0}")]
    InvalidBeta(f64),
}

/// How IntOpt visits entries when clipping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OrderStrategy {
    #[default]
    Ascending,
    Descending,
    /// A fresh seeded permutation per parent.
    Random,
}

impl std::fmt::Display for OrderStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OrderStrategy::Ascending => "ascending",
            OrderStrategy::Descending => "descending",
            OrderStrategy::Random => "random",
        })
    }
}

/// Release parameters. The privacy model (bounded or unbounded) is the one
/// carried by `sensitivity`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReleaseConfig {
    pub budget: PrivacyBudget,
    pub sensitivity: SensitivityModel,
    pub order: OrderStrategy,
    pub seed: u64,
    /// Solve the parents of one level on the rayon pool.
    pub parallel: bool,
}

impl ReleaseConfig {
    pub fn new(budget: PrivacyBudget, seed: u64) -> Self {
        Self {
            budget,
            sensitivity: SensitivityModel::bounded_single_trip(),
            order: OrderStrategy::Ascending,
            seed,
            parallel: true,
        }
    }

    pub fn with_order(mut self, order: OrderStrategy) -> Self {
        self.order = order;
        self
    }

    pub fn with_sensitivity(mut self, sensitivity: SensitivityModel) -> Self {
        self.sensitivity = sensitivity;
        self
    }

    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn privacy(&self) -> PrivacyType {
        self.sensitivity.privacy
    }

    /// Variance of the per-level discrete Gaussian noise for a tree of `depth`.
    pub fn sigma2(&self, depth: usize) -> Result<f64, DpError> {
        match self.privacy() {
            PrivacyType::Bounded => per_level_sigma2(&self.budget, &self.sensitivity, depth),
            PrivacyType::Unbounded => unbounded_sigma2(&self.budget, &self.sensitivity, depth),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub node_count: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseMetadata {
    pub mechanism: String,
    /// Bounded or unbounded privacy.
    pub mode: PrivacyType,
    pub tree_mode: TreeMode,
    pub rho: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub sensitivity: SensitivityModel,
    pub order: OrderStrategy,
    pub seed: u64,
    pub depth: usize,
    pub sigma2: f64,
    pub per_level: Vec<LevelStats>,
}

/// A released tree plus how it was made.
#[derive(Debug, Clone)]
pub struct DPRelease {
    pub tree: HierTree,
    pub metadata: ReleaseMetadata,
}

/// Releases `tree` with InfTDA.
pub fn release(tree: &HierTree, config: &ReleaseConfig) -> Result<DPRelease, ReleaseError> {
    let name = match config.order {
        OrderStrategy::Random => "tda-linf-random",
        _ => "inftda",
    };
    top_down(tree, config, name, |x, c, order| {
        Ok(intopt_fast(&OptProblem::new(x.to_vec(), c, order))?.y)
    })
}

/// Shared TopDown driver; `solve` maps `(noisy children, parent count, order)`
/// to a non-negative vector summing to the parent count.
pub(crate) fn top_down<F>(
    tree: &HierTree,
    config: &ReleaseConfig,
    mechanism: &str,
    solve: F,
) -> Result<DPRelease, ReleaseError>
where
    F: Fn(&[i64], i64, Order) -> Result<Vec<i64>, ReleaseError> + Sync,
{
    let bad = tree.validate_consistency();
    if let Some(&first) = bad.first() {
        return Err(ReleaseError::InconsistentInput {
            count: bad.len(),
            first,
        });
    }
    let depth = tree.depth();
    let sigma2 = config.sigma2(depth)?;
    let noise = DiscreteGaussian::new(sigma2)?;

    let mut out = HierTree::empty(
        Arc::clone(tree.origin_hierarchy()),
        Arc::clone(tree.destination_hierarchy()),
        tree.mode(),
    )?;
    let mut per_level = Vec::with_capacity(depth + 1);

    let started = Instant::now();
    let n = tree.root_attribute();
    let root = match config.privacy() {
        PrivacyType::Bounded => n,
        PrivacyType::Unbounded => {
            let mut rng = substream(config.seed, StreamTag::RootNoise, 0, 0, 0);
            n.checked_add(noise.sample(&mut rng))
                .ok_or(ReleaseError::Overflow)?
                .max(0)
        }
    };
    out.set_attribute(NodeKey::ROOT, root);
    per_level.push(LevelStats {
        node_count: usize::from(root > 0),
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    });

    for parent_depth in 0..depth {
        let started = Instant::now();
        let parents: Vec<(NodeKey, i64)> = out
            .sorted_level(parent_depth)
            .into_iter()
            .filter(|&(_, c)| c > 0)
            .collect();
        let release_parent = |&(key, c): &(NodeKey, i64)| {
            release_children(tree, config, &noise, key, c, &solve)
        };
        let children: Vec<Vec<(NodeKey, i64)>> = if config.parallel {
            parents
                .par_iter()
                .map(release_parent)
                .collect::<Result<_, _>>()?
        } else {
            parents
                .iter()
                .map(release_parent)
                .collect::<Result<_, _>>()?
        };
        let mut count = 0;
        for (key, value) in children.into_iter().flatten() {
            out.set_attribute(key, value);
            count += 1;
        }
        per_level.push(LevelStats {
            node_count: count,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
    }

    Ok(DPRelease {
        tree: out,
        metadata: ReleaseMetadata {
            mechanism: mechanism.to_string(),
            mode: config.privacy(),
            tree_mode: tree.mode(),
            rho: config.budget.rho(),
            epsilon: config.budget.epsilon(),
            delta: config.budget.delta(),
            sensitivity: config.sensitivity,
            order: config.order,
            seed: config.seed,
            depth,
            sigma2: noise.sigma2(),
            per_level,
        },
    })
}

fn release_children<F>(
    tree: &HierTree,
    config: &ReleaseConfig,
    noise: &DiscreteGaussian,
    parent: NodeKey,
    c: i64,
    solve: &F,
) -> Result<Vec<(NodeKey, i64)>, ReleaseError>
where
    F: Fn(&[i64], i64, Order) -> Result<Vec<i64>, ReleaseError>,
{
    let keys = tree.children(parent);
    let depth = parent.depth as u64;
    let mut rng = substream(
        config.seed,
        StreamTag::ChildNoise,
        depth,
        parent.origin,
        parent.destination,
    );
    let noisy = keys
        .iter()
        .map(|&k| {
            tree.attribute(k)
                .checked_add(noise.sample(&mut rng))
                .ok_or(ReleaseError::Overflow)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let order = match config.order {
        OrderStrategy::Ascending => Order::Ascending,
        OrderStrategy::Descending => Order::Descending,
        OrderStrategy::Random => {
            let mut perm = substream(
                config.seed,
                StreamTag::Permutation,
                depth,
                parent.origin,
                parent.destination,
            );
            Order::Random(perm.gen())
        }
    };
    let y = solve(&noisy, c, order)?;
    Ok(keys
        .into_iter()
        .zip(y)
        .filter(|&(_, v)| v > 0)
        .collect())
}

/// Which depth to export.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportLevel {
    Depth(usize),
    Leaves,
}

/// One exported O/D row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowRow {
    pub origin: String,
    pub destination: String,
    pub flow: i64,
}

/// Nonzero attributes at one depth as named O/D rows, sorted by node key.
pub fn export_tree(tree: &HierTree, level: ExportLevel) -> Result<Vec<FlowRow>, ReleaseError> {
    let depth = match level {
        ExportLevel::Leaves => tree.depth(),
        ExportLevel::Depth(d) if d <= tree.depth() => d,
        ExportLevel::Depth(d) => {
            return Err(ReleaseError::LevelOutOfRange {
                level: d,
                depth: tree.depth(),
            })
        }
    };
    let (o_h, d_h) = (tree.origin_hierarchy(), tree.destination_hierarchy());
    Ok(tree
        .sorted_level(depth)
        .into_iter()
        .filter(|&(_, v)| v != 0)
        .map(|(key, flow)| {
            let (o, d) = tree.areas(key);
            FlowRow {
                origin: o_h.name(o).to_string(),
                destination: d_h.name(d).to_string(),
                flow,
            }
        })
        .collect())
}

/// Released rows at `level`; the leaf export is the released O/D table.
pub fn export_table(release: &DPRelease, level: ExportLevel) -> Result<Vec<FlowRow>, ReleaseError> {
    export_tree(&release.tree, level)
}

/// Branching factor and depth of a regular O/D tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeShape {
    pub branching: usize,
    pub depth: usize,
}

impl TreeShape {
    /// `Some` when every area of both hierarchies has the same number of
    /// children, so every tree node does too.
    pub fn of(tree: &HierTree) -> Option<Self> {
        let b = tree.origin_hierarchy().regular_branching()?;
        (tree.destination_hierarchy().regular_branching()? == b).then_some(Self {
            branching: b,
            depth: tree.depth(),
        })
    }
}

/// High-probability ceiling on the max absolute error at level `ℓ`:
/// `2ℓ · √(2σ² · ln(2·b·ℓ·b^ℓ / β))`.
///
/// Each of the `ℓ` optimizations on the path to a node moves its value by at
/// most twice the noise sup-norm of that step, and a union bound over the
/// `b·ℓ·b^ℓ` Gaussian draws involved bounds every noise term at once.
pub fn theoretical_error_envelope(
    level: usize,
    config: &ReleaseConfig,
    shape: TreeShape,
    beta: f64,
) -> Result<f64, ReleaseError> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(ReleaseError::InvalidBeta(beta));
    }
    if config.privacy() != PrivacyType::Bounded || shape.branching < 2 {
        return Err(ReleaseError::EnvelopeUndefined);
    }
    if level > shape.depth {
        return Err(ReleaseError::LevelOutOfRange {
            level,
            depth: shape.depth,
        });
    }
    if level == 0 {
        return Ok(0.0);
    }
    let sigma2 = per_level_sigma2(&config.budget, &config.sensitivity, shape.depth)?;
    let (b, l) = (shape.branching as f64, level as f64);
    let draws = b * l * b.powi(level as i32);
    Ok(2.0 * l * (2.0 * sigma2 * (2.0 * draws / beta).ln()).sqrt())
}
