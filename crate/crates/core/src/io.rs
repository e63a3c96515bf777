//! CSV and binary formats.
//!
//! * Hierarchy CSV: no header, one leaf per row, columns are the area ids from
//!   the coarsest level down to the leaf.
//! * Trips CSV: header `origin,destination[,count]`, leaf ids; a missing count
//!   means one trip.
//! * Release CSV: header `origin,destination,flow`, signed flows.
//! * Dataset: both hierarchies and the trip table in one bincode file.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::LeafRelease;
use crate::hierarchy::{AreaRef, HierarchyError, PartitionHierarchy};
use crate::release::FlowRow;
use crate::tree::{build_tree, HierTree, TreeError, TreeMode};
use crate::trips::{ingest_trips, TripError, TripRow, TripTable};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("dataset encoding: {0}")]
    Bincode(#[from] bincode::Error),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Trips(#[from] TripError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("row {row}: `{id}` is not a leaf of the {side} hierarchy")]
    UnknownLeaf {
        row: usize,
        side: &'static str,
        id: String,
    },
}

pub fn read_hierarchy<R: Read>(input: R) -> Result<PartitionHierarchy, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut rows = Vec::new();
    for record in reader.records() {
        rows.push(record?.iter().map(str::to_string).collect::<Vec<_>>());
    }
    Ok(PartitionHierarchy::from_paths(rows)?)
}

pub fn write_hierarchy<W: Write>(hierarchy: &PartitionHierarchy, out: W) -> Result<(), IoError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for path in hierarchy.paths() {
        w.write_record(&path)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct TripRecord {
    origin: String,
    destination: String,
    #[serde(default)]
    count: Option<i64>,
}

pub fn read_trips<R: Read>(
    input: R,
    origin: &PartitionHierarchy,
    destination: &PartitionHierarchy,
) -> Result<TripTable, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let rows = reader
        .deserialize::<TripRecord>()
        .map(|r| r.map(|t| TripRow::new(t.origin, t.destination, t.count)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ingest_trips(rows, origin, destination)?)
}

pub fn write_trips<W: Write>(
    trips: &TripTable,
    origin: &PartitionHierarchy,
    destination: &PartitionHierarchy,
    out: W,
) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["origin", "destination", "count"])?;
    let (g_o, g_d) = (origin.levels(), destination.levels());
    for ((o, d), count) in trips.iter() {
        w.write_record([
            origin.name(AreaRef::new(g_o, o)),
            destination.name(AreaRef::new(g_d, d)),
            &count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_flows<W: Write>(rows: &[FlowRow], out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_flows<R: Read>(input: R) -> Result<Vec<FlowRow>, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    Ok(reader.deserialize().collect::<Result<Vec<_>, _>>()?)
}

/// Resolves leaf-level flow rows against the hierarchies.
pub fn flows_to_leaves(
    rows: &[FlowRow],
    origin: &PartitionHierarchy,
    destination: &PartitionHierarchy,
    mechanism: &str,
) -> Result<LeafRelease, IoError> {
    let mut entries = Vec::with_capacity(rows.len());
    for (row, flow) in rows.iter().enumerate() {
        let o = origin.find_leaf(&flow.origin).ok_or_else(|| IoError::UnknownLeaf {
            row,
            side: "origin",
            id: flow.origin.clone(),
        })?;
        let d = destination
            .find_leaf(&flow.destination)
            .ok_or_else(|| IoError::UnknownLeaf {
                row,
                side: "destination",
                id: flow.destination.clone(),
            })?;
        entries.push(((o, d), flow.flow));
    }
    entries.sort_unstable();
    Ok(LeafRelease {
        mechanism: mechanism.to_string(),
        entries,
    })
}

/// Both hierarchies plus the leaf trip table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub origin: PartitionHierarchy,
    pub destination: PartitionHierarchy,
    pub trips: TripTable,
}

impl Dataset {
    pub fn new(origin: PartitionHierarchy, destination: PartitionHierarchy, trips: TripTable) -> Self {
        Self {
            origin,
            destination,
            trips,
        }
    }

    pub fn tree(&self, mode: TreeMode) -> Result<HierTree, IoError> {
        Ok(build_tree(
            &self.trips,
            Arc::new(self.origin.clone()),
            Arc::new(self.destination.clone()),
            mode,
        )?)
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        let mut out = BufWriter::new(File::create(path)?);
        bincode::serialize_into(&mut out, self)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let input = BufReader::new(File::open(path)?);
        Ok(bincode::deserialize_from(input)?)
    }
}
