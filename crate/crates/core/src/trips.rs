//! Leaf-level origin/destination trip tables.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hierarchy::PartitionHierarchy;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TripError {
    #[error("row {row}: unknown origin area `{id}`")]
    UnknownOrigin { row: usize, id: String },
    #[error("row {row}: unknown destination area `{id}`")]
    UnknownDestination { row: usize, id: String },
    #[error("row {row}: count must be a positive integer, got {count}")]
    NonPositiveCount { row: usize, count: i64 },
    #[error("trip total overflows 64 bits")]
    Overflow,
}

/// One input row: origin leaf id, destination leaf id, optional multiplicity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripRow {
    pub origin: String,
    pub destination: String,
    pub count: Option<i64>,
}

impl TripRow {
    pub fn new(origin: impl Into<String>, destination: impl Into<String>, count: Option<i64>) -> Self {
        Self {
            origin: origin.into(),
            destination: destination.into(),
            count,
        }
    }
}

/// Aggregated multiset of leaf O/D pairs, keyed by `(origin leaf, destination leaf)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripTable {
    counts: BTreeMap<(u32, u32), u64>,
    total: u64,
}

impl TripTable {
    /// Builds a table from already-resolved leaf indices. Zero counts are skipped.
    pub fn from_counts<I>(pairs: I) -> Result<Self, TripError>
    where
        I: IntoIterator<Item = ((u32, u32), u64)>,
    {
        let mut table = TripTable::default();
        for (key, count) in pairs {
            table.add(key, count)?;
        }
        Ok(table)
    }

    fn add(&mut self, key: (u32, u32), count: u64) -> Result<(), TripError> {
        if count == 0 {
            return Ok(());
        }
        let slot = self.counts.entry(key).or_insert(0);
        *slot = slot.checked_add(count).ok_or(TripError::Overflow)?;
        self.total = self.total.checked_add(count).ok_or(TripError::Overflow)?;
        Ok(())
    }

    /// Total number of trips `n`.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of distinct O/D pairs with positive count.
    pub fn support_size(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, origin: u32, destination: u32) -> u64 {
        self.counts.get(&(origin, destination)).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = ((u32, u32), u64)> + '_ {
        self.counts.iter().map(|(&k, &v)| (k, v))
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Resolves rows against the two leaf levels and aggregates duplicates.
pub fn ingest_trips<I>(
    rows: I,
    origin: &PartitionHierarchy,
    destination: &PartitionHierarchy,
) -> Result<TripTable, TripError>
where
    I: IntoIterator<Item = TripRow>,
{
    let mut table = TripTable::default();
    for (row, trip) in rows.into_iter().enumerate() {
        let o = origin
            .find_leaf(trip.origin.trim())
            .ok_or_else(|| TripError::UnknownOrigin {
                row,
                id: trip.origin.clone(),
            })?;
        let d = destination
            .find_leaf(trip.destination.trim())
            .ok_or_else(|| TripError::UnknownDestination {
                row,
                id: trip.destination.clone(),
            })?;
        let count = match trip.count {
            None => 1,
            Some(c) if c > 0 => c as u64,
            Some(c) => return Err(TripError::NonPositiveCount { row, count: c }),
        };
        table.add((o, d), count)?;
    }
    Ok(table)
}
