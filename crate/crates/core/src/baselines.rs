//! Comparison mechanisms: independent leaf noise (VanillaGauss), the
//! stability histogram (SH), and a TopDown release with an ℓ₂ objective.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dp::rng::{substream, StreamTag};
use crate::dp::{stability_threshold, DiscreteGaussian, DiscreteLaplace, DpError, PrivacyBudget, SensitivityModel};
use crate::hierarchy::PartitionHierarchy;
use crate::release::{top_down, DPRelease, ReleaseConfig, ReleaseError};
use crate::tree::{HierTree, NodeKey, TreeError, TreeMode};

/// Default cap on the leaf universe VanillaGauss will enumerate.
pub const DEFAULT_UNIVERSE_CAP: u64 = 10_000_000;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("leaf universe has {size} cells, above the cap of {cap}")]
    UniverseTooLarge { size: u64, cap: u64 },
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Release(#[from] ReleaseError),
    #[error("noisy count overflows 64 bits")]
    Overflow,
}

/// Released leaf counts keyed by `(origin leaf, destination leaf)`, sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeafRelease {
    pub mechanism: String,
    pub entries: Vec<((u32, u32), i64)>,
}

impl LeafRelease {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Lifts the leaves to every level of the tree, see [`aggregate_up`].
    pub fn to_tree(
        &self,
        origin: Arc<PartitionHierarchy>,
        destination: Arc<PartitionHierarchy>,
        mode: TreeMode,
    ) -> Result<HierTree, TreeError> {
        aggregate_up(self, origin, destination, mode)
    }
}

/// Attribute of every node as the sum of released leaves below it, negative
/// values included.
pub fn aggregate_up(
    leaves: &LeafRelease,
    origin: Arc<PartitionHierarchy>,
    destination: Arc<PartitionHierarchy>,
    mode: TreeMode,
) -> Result<HierTree, TreeError> {
    HierTree::from_leaf_values(origin, destination, mode, leaves.entries.iter().copied())
}

/// Adds `𝒩_ℤ(0, GS₂²/(2ρ))` to every cell of the leaf universe.
pub fn vanilla_gauss(
    tree: &HierTree,
    budget: &PrivacyBudget,
    sensitivity: &SensitivityModel,
    seed: u64,
    universe_cap: u64,
) -> Result<LeafRelease, BaselineError> {
    let n_o = tree.origin_hierarchy().leaf_count() as u32;
    let n_d = tree.destination_hierarchy().leaf_count() as u32;
    let size = u64::from(n_o) * u64::from(n_d);
    if size > universe_cap {
        return Err(BaselineError::UniverseTooLarge {
            size,
            cap: universe_cap,
        });
    }
    let noise = DiscreteGaussian::new(sensitivity.gs2_squared() / (2.0 * budget.rho()))?;
    let depth = tree.depth();
    let rows: Vec<Vec<((u32, u32), i64)>> = (0..n_o)
        .into_par_iter()
        .map(|o| {
            let mut rng = substream(seed, StreamTag::LeafNoise, 0, o, 0);
            (0..n_d)
                .map(|d| {
                    let truth = tree.attribute(NodeKey::new(depth, o, d));
                    truth
                        .checked_add(noise.sample(&mut rng))
                        .map(|v| ((o, d), v))
                        .ok_or(BaselineError::Overflow)
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    Ok(LeafRelease {
        mechanism: "vanilla-gauss".into(),
        entries: rows.into_iter().flatten().collect(),
    })
}

/// Stability histogram: Laplace noise of scale `2/ε` on the positive leaf
/// counts, dropping noisy values below `1 + 2 ln(2/δ)/ε`.
pub fn stability_histogram(
    tree: &HierTree,
    budget: &PrivacyBudget,
    sensitivity: &SensitivityModel,
    seed: u64,
) -> Result<LeafRelease, BaselineError> {
    let gs1 = sensitivity.stability_gs1()?;
    let (epsilon, delta) = (budget.epsilon(), budget.delta());
    let noise = DiscreteLaplace::new(gs1 / epsilon)?;
    let threshold = stability_threshold(epsilon, delta)?;
    let mut support = tree.sorted_level(tree.depth());
    support.retain(|&(_, v)| v > 0);
    let entries = support
        .par_iter()
        .map(|&(key, v)| {
            let mut rng = substream(seed, StreamTag::LeafNoise, 1, key.origin, key.destination);
            let noisy = v
                .checked_add(noise.sample(&mut rng))
                .ok_or(BaselineError::Overflow)?;
            Ok(((noisy as f64) >= threshold).then_some(((key.origin, key.destination), noisy)))
        })
        .collect::<Result<Vec<_>, BaselineError>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(LeafRelease {
        mechanism: "sh".into(),
        entries,
    })
}

/// Euclidean projection of `x` onto `{y ∈ ℝ^d : y ≥ 0, Σy = c}`.
///
/// Sort-based thresholding: `y_i = max(x_i − θ, 0)` with `θ` chosen so the
/// positive part sums to `c`.
pub fn project_simplex(x: &[f64], c: f64) -> Vec<f64> {
    if c <= 0.0 {
        return vec![0.0; x.len()];
    }
    let mut u = x.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &v) in u.iter().enumerate() {
        cumsum += v;
        let candidate = (cumsum - c) / (j + 1) as f64;
        if v - candidate > 0.0 {
            theta = candidate;
        }
    }
    x.iter().map(|&v| (v - theta).max(0.0)).collect()
}

/// Integer vector summing to `c` obtained from the ℓ₂ projection of `x`:
/// floor every coordinate, then give the leftover units to the largest
/// fractional parts, ties by ascending index.
///
/// The projection is carried out exactly: with `k` active coordinates the
/// threshold is `θ = (S − c)/k`, so `k·y_i = k·x_i − (S − c)` is an integer.
pub fn l2_round(x: &[i64], c: i64) -> Vec<i64> {
    let d = x.len();
    if c <= 0 || d == 0 {
        return vec![0; d];
    }
    let mut sorted: Vec<i128> = x.iter().map(|&v| i128::from(v)).collect();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let c = i128::from(c);
    // largest k with u_k · k > (Σ_{i≤k} u_i) − c
    let (mut k, mut s) = (0i128, 0i128);
    let mut cumsum = 0i128;
    for (j, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let j = j as i128 + 1;
        if v * j > cumsum - c {
            k = j;
            s = cumsum;
        }
    }
    let shift = s - c;
    let mut y = vec![0i64; d];
    let mut fracs: Vec<(i128, usize)> = Vec::new();
    let mut assigned = 0i128;
    for (i, &v) in x.iter().enumerate() {
        let num = k * i128::from(v) - shift;
        if num > 0 {
            let whole = num / k;
            y[i] = whole as i64;
            assigned += whole;
            fracs.push((num % k, i));
        }
    }
    fracs.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let left = (c - assigned) as usize;
    for &(_, i) in fracs.iter().take(left) {
        y[i] += 1;
    }
    y
}

/// TopDown release whose per-parent step is the rounded ℓ₂ projection.
pub fn tda_l2(tree: &HierTree, config: &ReleaseConfig) -> Result<DPRelease, ReleaseError> {
    top_down(tree, config, "tda-l2", |x, c, _| Ok(l2_round(x, c)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_examples() {
        assert_eq!(project_simplex(&[0.0, -1.0, 1.0], 2.0), vec![0.5, 0.0, 1.5]);
        assert_eq!(project_simplex(&[2.0, 3.0], 5.0), vec![2.0, 3.0]);
        assert_eq!(project_simplex(&[4.0, 1.0], 0.0), vec![0.0, 0.0]);
    }

    #[test]
    fn rounding_examples() {
        assert_eq!(l2_round(&[2, 3], 5), vec![2, 3]);
        assert_eq!(l2_round(&[0, -1, 1], 2), vec![1, 0, 1]);
        assert_eq!(l2_round(&[-5, -5, -5], 4), vec![2, 1, 1]);
        assert_eq!(l2_round(&[7], 3), vec![3]);
        assert_eq!(l2_round(&[3, 3], 0), vec![0, 0]);
    }

    #[test]
    fn rounding_is_feasible() {
        for c in 0..12 {
            for a in -4..5 {
                for b in -4..5 {
                    let y = l2_round(&[a, b, 1 - a], c);
                    assert_eq!(y.iter().sum::<i64>(), c);
                    assert!(y.iter().all(|&v| v >= 0));
                }
            }
        }
    }
}
