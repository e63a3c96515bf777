//! Synthetic partitions and Pareto-distributed O/D flows.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dp::rng::{substream, Stream, StreamTag};
use crate::hierarchy::{HierarchyError, PartitionHierarchy};
use crate::trips::{TripError, TripTable};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("sparsity must lie in (0, 1], got {0}")]
    InvalidSparsity(f64),
    #[error("Pareto exponent must exceed 1, got {0}")]
    InvalidExponent(f64),
    #[error("need at least one level")]
    NoLevels,
    #[error("branching range {0}..={1} is empty or below 1")]
    InvalidBranching(u32, u32),
    #[error("leaf universe of {0} pairs is too large to sample")]
    UniverseTooLarge(u128),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Trips(#[from] TripError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionKind {
    /// Every area splits in two.
    Binary,
    /// Every area splits into `k ~ U{k_min..=k_max}` parts.
    Random,
}

/// Named support regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sparsity {
    Complete,
    Dense,
    Sparse,
}

impl Sparsity {
    pub fn fraction(self) -> f64 {
        match self {
            Sparsity::Complete => 1.0,
            Sparsity::Dense => 0.5,
            Sparsity::Sparse => 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub kind: PartitionKind,
    pub levels: usize,
    pub k_min: u32,
    pub k_max: u32,
    /// Fraction of the leaf O/D universe holding trips.
    pub sparsity: f64,
    /// Density exponent `a` of the Pareto law `p(x) ∝ x^{-a}`, `x ≥ 1`.
    pub exponent: f64,
    pub seed: u64,
}

pub const DEFAULT_EXPONENT: f64 = 2.0;

impl SynthSpec {
    /// Eight binary levels: 256 leaves per side.
    pub fn binary(sparsity: Sparsity, seed: u64) -> Self {
        Self {
            kind: PartitionKind::Binary,
            levels: 8,
            k_min: 2,
            k_max: 2,
            sparsity: sparsity.fraction(),
            exponent: DEFAULT_EXPONENT,
            seed,
        }
    }

    /// Four levels with branching drawn from `{2, …, 10}`.
    pub fn random(sparsity: Sparsity, seed: u64) -> Self {
        Self {
            kind: PartitionKind::Random,
            levels: 4,
            k_min: 2,
            k_max: 10,
            sparsity: sparsity.fraction(),
            exponent: DEFAULT_EXPONENT,
            seed,
        }
    }

    pub fn with_levels(mut self, levels: usize) -> Self {
        self.levels = levels;
        self
    }

    pub fn with_exponent(mut self, exponent: f64) -> Self {
        self.exponent = exponent;
        self
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.levels == 0 {
            return Err(SynthError::NoLevels);
        }
        if !(self.sparsity > 0.0 && self.sparsity <= 1.0) {
            return Err(SynthError::InvalidSparsity(self.sparsity));
        }
        if self.exponent.is_nan() || self.exponent <= 1.0 {
            return Err(SynthError::InvalidExponent(self.exponent));
        }
        if self.kind == PartitionKind::Random && (self.k_min < 1 || self.k_min > self.k_max) {
            return Err(SynthError::InvalidBranching(self.k_min, self.k_max));
        }
        Ok(())
    }

    fn branching(&self, rng: &mut Stream) -> u32 {
        match self.kind {
            PartitionKind::Binary => 2,
            PartitionKind::Random => rng.gen_range(self.k_min..=self.k_max),
        }
    }
}

fn partition_from(spec: &SynthSpec, rng: &mut Stream) -> Result<PartitionHierarchy, SynthError> {
    // paths of the current level, one per area, named `L{level}_{index}`
    let mut paths: Vec<Vec<String>> = vec![Vec::new()];
    for level in 1..=spec.levels {
        let mut next = Vec::new();
        for path in &paths {
            for _ in 0..spec.branching(rng) {
                let mut child = path.clone();
                child.push(format!("L{level}_{}", next.len()));
                next.push(child);
            }
        }
        paths = next;
    }
    Ok(PartitionHierarchy::from_paths(paths)?)
}

/// One hierarchy drawn from the spec; equals the origin side of
/// [`gen_partition_pair`].
pub fn gen_partition(spec: &SynthSpec) -> Result<PartitionHierarchy, SynthError> {
    spec.validate()?;
    let mut rng = substream(spec.seed, StreamTag::Synthesis, 0, 0, 0);
    partition_from(spec, &mut rng)
}

/// Independent origin and destination hierarchies of the same kind.
pub fn gen_partition_pair(
    spec: &SynthSpec,
) -> Result<(PartitionHierarchy, PartitionHierarchy), SynthError> {
    spec.validate()?;
    let mut rng = substream(spec.seed, StreamTag::Synthesis, 0, 0, 0);
    let origin = partition_from(spec, &mut rng)?;
    let destination = partition_from(spec, &mut rng)?;
    Ok((origin, destination))
}

/// Number of populated pairs: `⌊sparsity · universe⌋`, at least one.
pub fn support_size(sparsity: f64, universe: u64) -> u64 {
    ((sparsity * universe as f64).floor() as u64).clamp(1, universe)
}

/// Continuous Pareto draw with `x_min = 1`, rounded half up and kept ≥ 1.
fn pareto_flow(rng: &mut Stream, exponent: f64) -> u64 {
    let shape = exponent - 1.0;
    // 1 − U lies in (0, 1], so the power is finite.
    let u: f64 = 1.0 - rng.gen::<f64>();
    let x = u.powf(-1.0 / shape);
    ((x + 0.5).floor() as u64).max(1)
}

/// Selects the support uniformly at random and draws one Pareto flow per pair.
pub fn gen_flows(
    origin: &PartitionHierarchy,
    destination: &PartitionHierarchy,
    spec: &SynthSpec,
) -> Result<TripTable, SynthError> {
    spec.validate()?;
    let n_d = destination.leaf_count() as u64;
    let universe = origin.leaf_count() as u64 * n_d;
    let universe_usize =
        usize::try_from(universe).map_err(|_| SynthError::UniverseTooLarge(universe.into()))?;
    let mut rng = substream(spec.seed, StreamTag::Synthesis, 1, 0, 0);
    let amount = support_size(spec.sparsity, universe) as usize;
    let mut cells: Vec<usize> = if amount == universe_usize {
        (0..universe_usize).collect()
    } else {
        index::sample(&mut rng, universe_usize, amount).into_vec()
    };
    cells.sort_unstable();
    let pairs: Vec<((u32, u32), u64)> = cells
        .into_iter()
        .map(|cell| {
            let cell = cell as u64;
            let key = ((cell / n_d) as u32, (cell % n_d) as u32);
            (key, pareto_flow(&mut rng, spec.exponent))
        })
        .collect();
    Ok(TripTable::from_counts(pairs)?)
}

/// A full synthetic dataset: both hierarchies and the trips between leaves.
pub fn generate(
    spec: &SynthSpec,
) -> Result<(PartitionHierarchy, PartitionHierarchy, TripTable), SynthError> {
    let (origin, destination) = gen_partition_pair(spec)?;
    let trips = gen_flows(&origin, &destination, spec)?;
    Ok((origin, destination, trips))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_leaf_counts() {
        let h = gen_partition(&SynthSpec::binary(Sparsity::Complete, 0)).unwrap();
        assert_eq!(h.levels(), 8);
        assert_eq!(h.leaf_count(), 256);
        let one = gen_partition(&SynthSpec::binary(Sparsity::Complete, 0).with_levels(1)).unwrap();
        assert_eq!(one.leaf_count(), 2);
    }

    #[test]
    fn random_leaf_count_in_range() {
        for seed in 0..5 {
            let h = gen_partition(&SynthSpec::random(Sparsity::Sparse, seed)).unwrap();
            assert!((16..=10_000).contains(&h.leaf_count()));
        }
    }

    #[test]
    fn support_sizes() {
        assert_eq!(support_size(1.0, 65_536), 65_536);
        assert_eq!(support_size(0.5, 65_536), 32_768);
        assert_eq!(support_size(0.01, 65_536), 655);
        assert_eq!(support_size(0.01, 10), 1);
    }

    #[test]
    fn infinite_exponent_gives_unit_flows() {
        let spec = SynthSpec::binary(Sparsity::Sparse, 4)
            .with_levels(3)
            .with_exponent(f64::INFINITY);
        let (o, d, trips) = generate(&spec).unwrap();
        let universe = (o.leaf_count() * d.leaf_count()) as u64;
        assert_eq!(trips.total(), support_size(0.01, universe));
        assert!(trips.iter().all(|(_, v)| v == 1));
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = SynthSpec::binary(Sparsity::Dense, 0);
        spec.sparsity = 0.0;
        assert!(gen_partition(&spec).is_err());
        assert!(gen_partition(&SynthSpec::binary(Sparsity::Dense, 0).with_exponent(1.0)).is_err());
    }
}
