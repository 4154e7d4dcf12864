//! Out-of-core chunked dataset format.
//!
//! A dataset is a directory holding a plain-text `manifest.json` plus numbered
//! chunk files. Features are stored as little-endian `f32`, targets as `f64`.
//! Chunks are streamed one at a time in manifest order; readers never hold
//! more than one chunk in memory. A directory is immutable after write.
//!
//! Chunk file layout (all integers little-endian):
//!
//! ```text
//! offset  size          field
//! 0       4             magic "RFGC"
//! 4       2             format version (u16, currently 1)
//! 6       1             dtype code (u8, 1 = f32 features / f64 targets)
//! 7       1             kind code (u8, 0 fixed_vector, 1 sequence, 2 graph)
//! 8       4             row count R (u32)
//! 12      4             feature width K (u32)
//! 16      4*R           per-row element counts (u32; omitted for fixed_vector)
//! ...     4*sum(len)*K  feature payload, f32 row-major
//! ...     8*R           targets, f64
//! ```
//!
//! For `fixed_vector` every row has exactly one element of width `K`.

mod encode;

pub use encode::{
    encode_molecule, encode_sequence_onehot, ingest_molecules, ingest_sequences, ingest_tabular,
    MoleculeRecord, DEFAULT_MAX_NEIGHBORS,
};

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::RNG_IDENTITY;

const MAGIC: &[u8; 4] = b"RFGC";
const FORMAT_VERSION: u16 = 1;
const DTYPE_F32: u8 = 1;

/// What each row of a dataset is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    /// One fixed-width vector per row.
    FixedVector,
    /// A variable-length run of `K`-wide positions per row.
    Sequence,
    /// A variable-size set of `K`-wide node vectors per row.
    Graph,
}

impl InputKind {
    fn code(self) -> u8 {
        match self {
            InputKind::FixedVector => 0,
            InputKind::Sequence => 1,
            InputKind::Graph => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(InputKind::FixedVector),
            1 => Some(InputKind::Sequence),
            2 => Some(InputKind::Graph),
            _ => None,
        }
    }
}

/// Plain-text manifest stored beside the chunk files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub dtype: String,
    pub kind: InputKind,
    pub feature_width: usize,
    pub chunk_rows: Vec<usize>,
    pub num_rows: usize,
    /// SHA-256 over every chunk file's bytes, in manifest order.
    pub content_hash: String,
    pub rng_identity: String,
    /// Free-form provenance (encoders record alphabets, tie-break rules, ...).
    pub metadata: BTreeMap<String, String>,
}

/// Rows of one chunk, upcast to `f64` for computation.
#[derive(Debug, Clone)]
pub enum ChunkData {
    Fixed(Array2<f64>),
    Sequences(Vec<Array2<f64>>),
    Graphs(Vec<Array2<f64>>),
}

impl ChunkData {
    pub fn num_rows(&self) -> usize {
        match self {
            ChunkData::Fixed(m) => m.nrows(),
            ChunkData::Sequences(v) | ChunkData::Graphs(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Chunk {
    pub data: ChunkData,
    pub targets: Array1<f64>,
}

/// Handle to an on-disk dataset directory.
#[derive(Debug, Clone)]
pub struct ChunkedDataset {
    dir: PathBuf,
    manifest: Manifest,
}

impl ChunkedDataset {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let mpath = dir.join("manifest.json");
        let text = fs::read_to_string(&mpath).map_err(|e| Error::io(mpath.display(), e))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::format(mpath.display().to_string(), e.to_string()))?;
        if manifest.schema_version != 1 {
            return Err(Error::format(
                mpath.display().to_string(),
                format!("unsupported schema version {}", manifest.schema_version),
            ));
        }
        if manifest.chunk_rows.iter().sum::<usize>() != manifest.num_rows {
            return Err(Error::format(
                mpath.display().to_string(),
                "chunk row counts do not sum to num_rows",
            ));
        }
        Ok(Self { dir, manifest })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn kind(&self) -> InputKind {
        self.manifest.kind
    }

    pub fn feature_width(&self) -> usize {
        self.manifest.feature_width
    }

    pub fn num_rows(&self) -> usize {
        self.manifest.num_rows
    }

    pub fn num_chunks(&self) -> usize {
        self.manifest.chunk_rows.len()
    }

    pub fn content_hash(&self) -> &str {
        &self.manifest.content_hash
    }

    fn chunk_path(&self, index: usize) -> PathBuf {
        self.dir.join(format!("chunk_{index:05}.bin"))
    }

    /// Load one chunk; callers stream chunks in index order.
    pub fn read_chunk(&self, index: usize) -> Result<Chunk> {
        let path = self.chunk_path(index);
        let bytes = fs::read(&path).map_err(|e| Error::io(path.display(), e))?;
        parse_chunk(&bytes, &path.display().to_string(), self.manifest.kind)
    }

    /// Visit every chunk in manifest order.
    pub fn for_each_chunk(&self, mut f: impl FnMut(&Chunk) -> Result<()>) -> Result<()> {
        for i in 0..self.num_chunks() {
            let chunk = self.read_chunk(i)?;
            f(&chunk)?;
        }
        Ok(())
    }

    /// All targets concatenated in row order.
    pub fn read_targets(&self) -> Result<Array1<f64>> {
        let mut out = Vec::with_capacity(self.num_rows());
        self.for_each_chunk(|c| {
            out.extend(c.targets.iter().copied());
            Ok(())
        })?;
        Ok(Array1::from_vec(out))
    }
}

fn parse_chunk(bytes: &[u8], path: &str, expect_kind: InputKind) -> Result<Chunk> {
    let fail = |reason: &str| Error::format(path, reason);
    let mut off = 0usize;
    let take = |off: &mut usize, n: usize| -> Result<&[u8]> {
        if *off + n > bytes.len() {
            return Err(Error::format(path, "truncated chunk file"));
        }
        let s = &bytes[*off..*off + n];
        *off += n;
        Ok(s)
    };
    if take(&mut off, 4)? != MAGIC {
        return Err(fail("bad magic"));
    }
    let version = u16::from_le_bytes(take(&mut off, 2)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(fail(&format!("unsupported chunk version {version}")));
    }
    let dtype = take(&mut off, 1)?[0];
    if dtype != DTYPE_F32 {
        return Err(fail(&format!("unsupported dtype code {dtype}")));
    }
    let kind = InputKind::from_code(take(&mut off, 1)?[0]).ok_or_else(|| fail("bad kind code"))?;
    if kind != expect_kind {
        return Err(fail("chunk kind disagrees with manifest"));
    }
    let rows = u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap()) as usize;
    let width = u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap()) as usize;
    let lengths: Vec<usize> = if kind == InputKind::FixedVector {
        vec![1; rows]
    } else {
        let raw = take(&mut off, 4 * rows)?;
        raw.chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect()
    };
    let total: usize = lengths.iter().sum();
    let payload = take(&mut off, 4 * total * width)?;
    let mut values = Vec::with_capacity(total * width);
    for c in payload.chunks_exact(4) {
        values.push(f32::from_le_bytes(c.try_into().unwrap()) as f64);
    }
    let traw = take(&mut off, 8 * rows)?;
    let targets: Vec<f64> = traw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let data = match kind {
        InputKind::FixedVector => ChunkData::Fixed(
            Array2::from_shape_vec((rows, width), values).map_err(|e| fail(&e.to_string()))?,
        ),
        InputKind::Sequence | InputKind::Graph => {
            let mut items = Vec::with_capacity(rows);
            let mut pos = 0;
            for &len in &lengths {
                let take_n = len * width;
                let m = Array2::from_shape_vec((len, width), values[pos..pos + take_n].to_vec())
                    .map_err(|e| fail(&e.to_string()))?;
                pos += take_n;
                items.push(m);
            }
            if kind == InputKind::Sequence {
                ChunkData::Sequences(items)
            } else {
                ChunkData::Graphs(items)
            }
        }
    };
    Ok(Chunk {
        data,
        targets: Array1::from_vec(targets),
    })
}

/// Incremental writer; rows are buffered and flushed every `chunk_rows`.
pub struct DatasetWriter {
    dir: PathBuf,
    kind: InputKind,
    width: usize,
    chunk_rows: usize,
    pending: Vec<(Vec<f32>, usize, f64)>, // payload, element count, target
    chunk_sizes: Vec<usize>,
    hasher: Sha256,
    metadata: BTreeMap<String, String>,
}

impl DatasetWriter {
    pub fn create(
        dir: impl AsRef<Path>,
        kind: InputKind,
        width: usize,
        chunk_rows: usize,
    ) -> Result<Self> {
        if chunk_rows == 0 {
            return Err(Error::InvalidInput("chunk_rows must be >= 1".into()));
        }
        if width == 0 {
            return Err(Error::InvalidInput("feature width must be >= 1".into()));
        }
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display(), e))?;
        Ok(Self {
            dir,
            kind,
            width,
            chunk_rows,
            pending: Vec::new(),
            chunk_sizes: Vec::new(),
            hasher: Sha256::new(),
            metadata: BTreeMap::new(),
        })
    }

    pub fn set_metadata(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.metadata.insert(key.into(), value.into());
    }

    /// Append one row. `elements` is the position/node count (1 for fixed vectors).
    pub fn push_row(&mut self, row: ArrayView2<'_, f64>, target: f64) -> Result<()> {
        if row.ncols() != self.width {
            return Err(Error::InvalidDimension {
                what: "row width",
                expected: self.width,
                got: row.ncols(),
            });
        }
        if self.kind == InputKind::FixedVector && row.nrows() != 1 {
            return Err(Error::InvalidDimension {
                what: "fixed_vector row count",
                expected: 1,
                got: row.nrows(),
            });
        }
        if row.nrows() == 0 {
            return Err(Error::InvalidInput("empty row".into()));
        }
        let payload: Vec<f32> = row.iter().map(|&v| v as f32).collect();
        self.pending.push((payload, row.nrows(), target));
        if self.pending.len() == self.chunk_rows {
            self.flush_chunk()?;
        }
        Ok(())
    }

    pub fn push_fixed(&mut self, row: ArrayView1<'_, f64>, target: f64) -> Result<()> {
        let m = row
            .to_owned()
            .into_shape_with_order((1, row.len()))
            .expect("reshape 1 x d");
        self.push_row(m.view(), target)
    }

    fn flush_chunk(&mut self) -> Result<()> {
        if self.pending.is_empty() {
            return Ok(());
        }
        let index = self.chunk_sizes.len();
        let path = self.dir.join(format!("chunk_{index:05}.bin"));
        let rows = self.pending.len();
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.push(DTYPE_F32);
        buf.push(self.kind.code());
        buf.extend_from_slice(&(rows as u32).to_le_bytes());
        buf.extend_from_slice(&(self.width as u32).to_le_bytes());
        if self.kind != InputKind::FixedVector {
            for (_, len, _) in &self.pending {
                buf.extend_from_slice(&(*len as u32).to_le_bytes());
            }
        }
        for (payload, _, _) in &self.pending {
            for v in payload {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        for (_, _, target) in &self.pending {
            buf.extend_from_slice(&target.to_le_bytes());
        }
        let mut file = fs::File::create(&path).map_err(|e| Error::io(path.display(), e))?;
        file.write_all(&buf).map_err(|e| Error::io(path.display(), e))?;
        self.hasher.update(&buf);
        self.chunk_sizes.push(rows);
        self.pending.clear();
        Ok(())
    }

    /// Flush remaining rows and write the manifest.
    pub fn finalize(mut self) -> Result<ChunkedDataset> {
        self.flush_chunk()?;
        if self.chunk_sizes.is_empty() {
            return Err(Error::InvalidInput("dataset has no rows".into()));
        }
        let manifest = Manifest {
            schema_version: 1,
            dtype: "f32".into(),
            kind: self.kind,
            feature_width: self.width,
            num_rows: self.chunk_sizes.iter().sum(),
            chunk_rows: self.chunk_sizes,
            content_hash: format!("{:x}", self.hasher.finalize()),
            rng_identity: RNG_IDENTITY.into(),
            metadata: self.metadata,
        };
        let mpath = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest)
            .expect("manifest serializes")
            + "\n";
        fs::File::create(&mpath)
            .and_then(|mut f| f.write_all(text.as_bytes()))
            .map_err(|e| Error::io(mpath.display(), e))?;
        ChunkedDataset::open(self.dir)
    }
}

/// Write an in-memory fixed-vector dataset.
pub fn write_fixed_dataset(
    dir: impl AsRef<Path>,
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    chunk_rows: usize,
) -> Result<ChunkedDataset> {
    if x.nrows() != y.len() {
        return Err(Error::InvalidDimension {
            what: "target count",
            expected: x.nrows(),
            got: y.len(),
        });
    }
    let mut w = DatasetWriter::create(dir, InputKind::FixedVector, x.ncols(), chunk_rows)?;
    for (row, &t) in x.outer_iter().zip(y.iter()) {
        w.push_fixed(row, t)?;
    }
    w.finalize()
}

/// Write an in-memory sequence or graph dataset.
pub fn write_varlen_dataset(
    dir: impl AsRef<Path>,
    kind: InputKind,
    items: &[Array2<f64>],
    y: ArrayView1<'_, f64>,
    chunk_rows: usize,
) -> Result<ChunkedDataset> {
    if kind == InputKind::FixedVector {
        return Err(Error::InvalidInput(
            "use write_fixed_dataset for fixed vectors".into(),
        ));
    }
    if items.len() != y.len() {
        return Err(Error::InvalidDimension {
            what: "target count",
            expected: items.len(),
            got: y.len(),
        });
    }
    let width = items
        .first()
        .ok_or_else(|| Error::InvalidInput("dataset has no rows".into()))?
        .ncols();
    let mut w = DatasetWriter::create(dir, kind, width, chunk_rows)?;
    for (item, &t) in items.iter().zip(y.iter()) {
        w.push_row(item.view(), t)?;
    }
    w.finalize()
}
