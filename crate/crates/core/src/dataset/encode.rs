//! Input encoders: one-hot sequences, distance-weighted molecular graphs,
//! and text-file ingestion into the chunked format.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{ChunkedDataset, DatasetWriter, InputKind};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_NEIGHBORS: usize = 15;

/// One atom list with optimized coordinates and a scalar target.
#[derive(Debug, Clone)]
pub struct MoleculeRecord {
    pub elements: Vec<String>,
    /// Angstrom coordinates, one `[x, y, z]` per atom.
    pub coordinates: Vec<[f64; 3]>,
    pub target: f64,
}

/// One-hot encode a token string over `alphabet`, one row per position.
pub fn encode_sequence_onehot(sequence: &str, alphabet: &str) -> Result<Array2<f64>> {
    if sequence.is_empty() {
        return Err(Error::InvalidInput("empty sequence".into()));
    }
    let letters: Vec<char> = alphabet.chars().collect();
    let mut out = Array2::zeros((sequence.chars().count(), letters.len()));
    for (pos, ch) in sequence.chars().enumerate() {
        let idx = letters.iter().position(|&a| a == ch).ok_or_else(|| {
            Error::InvalidInput(format!(
                "character '{ch}' at position {pos} is not in the alphabet"
            ))
        })?;
        out[(pos, idx)] = 1.0;
    }
    Ok(out)
}

/// Per-atom node features: the atom's one-hot element followed by the one-hot
/// elements of its `max_neighbors` nearest atoms, each divided by the sixth
/// power of the distance, nearest first. Missing neighbors are zero blocks.
/// Equidistant neighbors are ordered by element code, then by input index.
pub fn encode_molecule(
    rec: &MoleculeRecord,
    element_set: &[String],
    max_neighbors: usize,
) -> Result<Array2<f64>> {
    let n = rec.elements.len();
    if n == 0 {
        return Err(Error::InvalidInput("molecule has no atoms".into()));
    }
    if rec.coordinates.len() != n {
        return Err(Error::InvalidDimension {
            what: "coordinate count",
            expected: n,
            got: rec.coordinates.len(),
        });
    }
    if rec
        .coordinates
        .iter()
        .any(|c| c.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::InvalidInput("non-finite coordinates".into()));
    }
    let codes: Vec<usize> = rec
        .elements
        .iter()
        .map(|el| {
            element_set
                .iter()
                .position(|e| e == el)
                .ok_or_else(|| Error::InvalidInput(format!("element '{el}' not in element set")))
        })
        .collect::<Result<_>>()?;
    let e = element_set.len();
    let width = e * (1 + max_neighbors);
    let mut out = Array2::zeros((n, width));
    for i in 0..n {
        out[(i, codes[i])] = 1.0;
        let mut neighbors: Vec<(f64, usize, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let d2: f64 = rec.coordinates[i]
                    .iter()
                    .zip(&rec.coordinates[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d2.sqrt(), codes[j], j)
            })
            .collect();
        neighbors.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        for (slot, &(r, code, j)) in neighbors.iter().take(max_neighbors).enumerate() {
            if r == 0.0 {
                return Err(Error::InvalidInput(format!(
                    "atoms {i} and {j} are coincident"
                )));
            }
            let base = e * (1 + slot);
            out[(i, base + code)] = r.powi(-6);
        }
    }
    Ok(out)
}

/// Ingest a rectangular numeric CSV into a fixed-vector dataset.
///
/// `target_column` is a header name, or a 0-based index when the file has no
/// header (detected by the first row parsing fully as numbers).
pub fn ingest_tabular(
    csv_path: impl AsRef<Path>,
    target_column: &str,
    chunk_rows: usize,
    out_dir: impl AsRef<Path>,
) -> Result<ChunkedDataset> {
    let path = csv_path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (first_no, first) = lines
        .next()
        .ok_or_else(|| Error::InvalidInput("empty csv".into()))?;
    let first_cells: Vec<&str> = first.split(',').map(str::trim).collect();
    let header_is_names = first_cells.iter().any(|c| c.parse::<f64>().is_err());
    let (target_idx, ncols, mut rows_iter): (usize, usize, Vec<(usize, &str)>) = if header_is_names
    {
        let idx = first_cells
            .iter()
            .position(|c| *c == target_column)
            .ok_or_else(|| {
                Error::InvalidInput(format!("target column '{target_column}' not in header"))
            })?;
        (idx, first_cells.len(), lines.collect())
    } else {
        let idx: usize = target_column.parse().map_err(|_| {
            Error::InvalidInput(format!(
                "no header row; target column must be a 0-based index, got '{target_column}'"
            ))
        })?;
        let mut all = vec![(first_no, first)];
        all.extend(lines);
        (idx, first_cells.len(), all)
    };
    if target_idx >= ncols {
        return Err(Error::InvalidInput(format!(
            "target index {target_idx} out of range for {ncols} columns"
        )));
    }
    if ncols < 2 {
        return Err(Error::InvalidInput(
            "csv needs at least one feature column and one target column".into(),
        ));
    }
    let mut writer = DatasetWriter::create(&out_dir, InputKind::FixedVector, ncols - 1, chunk_rows)?;
    writer.set_metadata("source", path.display().to_string());
    writer.set_metadata("target_column", target_column);
    for (line_no, line) in rows_iter.drain(..) {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != ncols {
            return Err(Error::InvalidInput(format!(
                "line {}: expected {ncols} cells, got {}",
                line_no + 1,
                cells.len()
            )));
        }
        let mut feats = Vec::with_capacity(ncols - 1);
        let mut target = 0.0;
        for (col, cell) in cells.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::InvalidInput(format!(
                    "line {}, column {}: '{}' is not numeric",
                    line_no + 1,
                    col,
                    cell
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "line {}, column {}: non-finite value",
                    line_no + 1,
                    col
                )));
            }
            if col == target_idx {
                target = v;
            } else {
                feats.push(v);
            }
        }
        writer.push_fixed(Array1::from_vec(feats).view(), target)?;
    }
    writer.finalize()
}

/// Ingest a whitespace-separated `SEQUENCE label` file as one-hot sequences.
pub fn ingest_sequences(
    path: impl AsRef<Path>,
    alphabet: &str,
    chunk_rows: usize,
    out_dir: impl AsRef<Path>,
) -> Result<ChunkedDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
    let width = alphabet.chars().count();
    let mut writer = DatasetWriter::create(&out_dir, InputKind::Sequence, width, chunk_rows)?;
    writer.set_metadata("source", path.display().to_string());
    writer.set_metadata("alphabet", alphabet);
    writer.set_metadata("encoding", "one_hot");
    let mut any = false;
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let seq = parts
            .next()
            .ok_or_else(|| Error::InvalidInput(format!("line {}: missing sequence", line_no + 1)))?;
        let label: f64 = parts
            .next()
            .ok_or_else(|| Error::InvalidInput(format!("line {}: missing label", line_no + 1)))?
            .parse()
            .map_err(|_| Error::InvalidInput(format!("line {}: label is not numeric", line_no + 1)))?;
        let encoded = encode_sequence_onehot(seq, alphabet)
            .map_err(|e| Error::InvalidInput(format!("line {}: {e}", line_no + 1)))?;
        writer.push_row(encoded.view(), label)?;
        any = true;
    }
    if !any {
        return Err(Error::InvalidInput("no sequences in file".into()));
    }
    writer.finalize()
}

/// Ingest XYZ-with-target blocks as distance-weighted molecular graphs.
///
/// Each block: a line with the atom count, a line with the scalar target,
/// then one `Element x y z` line per atom. Blocks repeat to end of file.
pub fn ingest_molecules(
    path: impl AsRef<Path>,
    element_set: &[String],
    max_neighbors: usize,
    chunk_rows: usize,
    out_dir: impl AsRef<Path>,
) -> Result<ChunkedDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();
    let width = element_set.len() * (1 + max_neighbors);
    let mut writer = DatasetWriter::create(&out_dir, InputKind::Graph, width, chunk_rows)?;
    writer.set_metadata("source", path.display().to_string());
    writer.set_metadata("element_set", element_set.join(","));
    writer.set_metadata("max_neighbors", max_neighbors.to_string());
    writer.set_metadata("neighbor_tie_break", "element_code_then_input_index");
    let mut any = false;
    while lines.peek().is_some() {
        let natoms: usize = lines
            .next()
            .unwrap()
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput("expected atom count line".into()))?;
        let target: f64 = lines
            .next()
            .ok_or_else(|| Error::InvalidInput("missing target line".into()))?
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput("target line is not numeric".into()))?;
        let mut rec = MoleculeRecord {
            elements: Vec::with_capacity(natoms),
            coordinates: Vec::with_capacity(natoms),
            target,
        };
        for _ in 0..natoms {
            let line = lines
                .next()
                .ok_or_else(|| Error::InvalidInput("truncated atom block".into()))?;
            let mut parts = line.split_whitespace();
            let el = parts
                .next()
                .ok_or_else(|| Error::InvalidInput("missing element symbol".into()))?;
            let mut coord = [0.0; 3];
            for c in coord.iter_mut() {
                *c = parts
                    .next()
                    .ok_or_else(|| Error::InvalidInput("missing coordinate".into()))?
                    .parse()
                    .map_err(|_| Error::InvalidInput("coordinate is not numeric".into()))?;
            }
            rec.elements.push(el.to_string());
            rec.coordinates.push(coord);
        }
        let encoded = encode_molecule(&rec, element_set, max_neighbors)?;
        writer.push_row(encoded.view(), rec.target)?;
        any = true;
    }
    if !any {
        return Err(Error::InvalidInput("no molecules in file".into()));
    }
    writer.finalize()
}
