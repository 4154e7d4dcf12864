//! Versioned binary container for fitted models.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size   field
//! 0       8      magic "RFGPMODL"
//! 8       2      artifact version (u16, currently 1)
//! 10      8      header length H (u64)
//! 18      H      header JSON: {"spec": ..., "manifest": ..., "report": ...}
//! 18+H    8      weight count W (u64)
//! ...     8*W    weights, f64
//! ...     8      variance factor side length V (u64)
//! ...     8*V*V  lower Cholesky factor of the variance system, f64 row-major
//! ```
//!
//! Weights and the factor are raw f64 bits, so save -> load -> predict is
//! bit-identical to the in-memory model.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMapSpec;
use crate::gp::{GPModel, ModelManifest};
use crate::solve::SolveReport;

const MAGIC: &[u8; 8] = b"RFGPMODL";
const VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    spec: FeatureMapSpec,
    manifest: ModelManifest,
    report: SolveReport,
}

pub fn save_model(model: &GPModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let header = Header {
        spec: model.spec().clone(),
        manifest: model.manifest().clone(),
        report: model.report().clone(),
    };
    let header_json = serde_json::to_vec(&header).expect("header serializes");
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header_json);
    let w = model.weights();
    buf.extend_from_slice(&(w.len() as u64).to_le_bytes());
    for v in w.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let f = model.var_chol();
    buf.extend_from_slice(&(f.nrows() as u64).to_le_bytes());
    for v in f.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::File::create(path)
        .and_then(|mut file| file.write_all(&buf))
        .map_err(|e| Error::io(path.display(), e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<GPModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path.display(), e))?;
    let p = path.display().to_string();
    let mut off = 0usize;
    let take = |off: &mut usize, n: usize| -> Result<&[u8]> {
        if *off + n > bytes.len() {
            return Err(Error::format(&p, "truncated artifact"));
        }
        let s = &bytes[*off..*off + n];
        *off += n;
        Ok(s)
    };
    if take(&mut off, 8)? != MAGIC {
        return Err(Error::format(&p, "not a model artifact (bad magic)"));
    }
    let version = u16::from_le_bytes(take(&mut off, 2)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::format(
            &p,
            format!("artifact version {version} is not supported (expected {VERSION})"),
        ));
    }
    let hlen = u64::from_le_bytes(take(&mut off, 8)?.try_into().unwrap()) as usize;
    let header: Header = serde_json::from_slice(take(&mut off, hlen)?)
        .map_err(|e| Error::format(&p, e.to_string()))?;
    let wlen = u64::from_le_bytes(take(&mut off, 8)?.try_into().unwrap()) as usize;
    let mut weights = Vec::with_capacity(wlen);
    for c in take(&mut off, 8 * wlen)?.chunks_exact(8) {
        weights.push(f64::from_le_bytes(c.try_into().unwrap()));
    }
    let vside = u64::from_le_bytes(take(&mut off, 8)?.try_into().unwrap()) as usize;
    let mut factor = Vec::with_capacity(vside * vside);
    for c in take(&mut off, 8 * vside * vside)?.chunks_exact(8) {
        factor.push(f64::from_le_bytes(c.try_into().unwrap()));
    }
    if off != bytes.len() {
        return Err(Error::format(&p, "trailing bytes after artifact payload"));
    }
    let mut report = header.report;
    report.weights = Array1::from_vec(weights.clone());
    GPModel::assemble(
        header.spec,
        Array1::from_vec(weights),
        Array2::from_shape_vec((vside, vside), factor)
            .map_err(|e| Error::format(&p, e.to_string()))?,
        report,
        header.manifest,
    )
}
