//! Checkpoint archive: named f64 tensors plus a JSON meta block in a single
//! digest-protected file. Serialization is byte-deterministic for identical
//! contents, so training reruns can be compared by file digest alone.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{EraError, Result};
use crate::nn::ParamSet;

const MAGIC: &[u8; 8] = b"ERACKPT1";

#[derive(Debug, Serialize, Deserialize)]
struct TensorSpec {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    meta: serde_json::Value,
    tensors: Vec<TensorSpec>,
}

/// Write `meta` and `tensors` to `path`. Tensors are stored in name order as
/// row-major little-endian f64, followed by a SHA-256 digest of everything
/// before it.
pub fn save_checkpoint(
    path: &Path,
    meta: &serde_json::Value,
    tensors: &BTreeMap<String, Array2<f64>>,
) -> Result<()> {
    let manifest = Manifest {
        version: 1,
        meta: meta.clone(),
        tensors: tensors
            .iter()
            .map(|(name, arr)| TensorSpec {
                name: name.clone(),
                rows: arr.nrows(),
                cols: arr.ncols(),
            })
            .collect(),
    };
    let manifest_bytes = serde_json::to_vec(&manifest)?;

    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(manifest_bytes.len() as u64).to_le_bytes());
    buf.extend_from_slice(&manifest_bytes);
    for arr in tensors.values() {
        for v in arr.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);

    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

/// Read a checkpoint back, verifying the trailing digest.
pub fn load_checkpoint(path: &Path) -> Result<(serde_json::Value, BTreeMap<String, Array2<f64>>)> {
    let bytes = std::fs::read(path)?;
    let fail = |msg: &str| EraError::Checkpoint(format!("{}: {msg}", path.display()));
    if bytes.len() < MAGIC.len() + 8 + 32 {
        return Err(fail("file too short"));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(fail("bad magic; not a checkpoint archive"));
    }
    let (body, stored_digest) = bytes.split_at(bytes.len() - 32);
    let digest = Sha256::digest(body);
    if digest.as_slice() != stored_digest {
        return Err(fail("digest mismatch; file is corrupt"));
    }
    let mut off = MAGIC.len();
    let manifest_len = u64::from_le_bytes(body[off..off + 8].try_into().unwrap()) as usize;
    off += 8;
    if body.len() < off + manifest_len {
        return Err(fail("truncated manifest"));
    }
    let manifest: Manifest = serde_json::from_slice(&body[off..off + manifest_len])?;
    if manifest.version != 1 {
        return Err(fail(&format!("unsupported version {}", manifest.version)));
    }
    off += manifest_len;

    let mut tensors = BTreeMap::new();
    for spec in &manifest.tensors {
        let n = spec.rows * spec.cols;
        let end = off + 8 * n;
        if body.len() < end {
            return Err(fail(&format!("truncated payload at tensor `{}`", spec.name)));
        }
        let vals: Vec<f64> = body[off..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let arr = Array2::from_shape_vec((spec.rows, spec.cols), vals)
            .map_err(|e| fail(&format!("tensor `{}`: {e}", spec.name)))?;
        tensors.insert(spec.name.clone(), arr);
        off = end;
    }
    if off != body.len() {
        return Err(fail("trailing bytes after payload"));
    }
    Ok((manifest.meta, tensors))
}

/// SHA-256 of a file's bytes, hex-encoded.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Copy a model's parameter values into `out` under their stable names.
pub fn collect_params(model: &dyn ParamSet, out: &mut BTreeMap<String, Array2<f64>>) {
    model.visit(&mut |name, p| {
        out.insert(name.to_string(), p.value.clone());
    });
}

/// Load parameter values by name. Every model parameter must be present with
/// a matching shape; extra tensors (optimizer state, other models) are ignored.
pub fn restore_params(model: &mut dyn ParamSet, tensors: &BTreeMap<String, Array2<f64>>) -> Result<()> {
    let mut missing = Vec::new();
    model.visit_mut(&mut |name, p| match tensors.get(name) {
        Some(arr) if arr.dim() == p.value.dim() => p.value.assign(arr),
        Some(arr) => missing.push(format!(
            "tensor `{name}` has shape {:?}, model expects {:?}",
            arr.dim(),
            p.value.dim()
        )),
        None => missing.push(format!("tensor `{name}` missing from checkpoint")),
    });
    if missing.is_empty() {
        Ok(())
    } else {
        Err(EraError::Checkpoint(missing.join("; ")))
    }
}
