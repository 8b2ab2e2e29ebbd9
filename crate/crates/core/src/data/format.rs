//! `SPNE` embedding exchange file.
//!
//! ```text
//! "SPNE"                       4 bytes
//! version                      u32 (= 1)
//! N, d, C                      u32 each
//! vectors                      N×d f32, row-major
//! class ids                    N u32
//! instance ids                 N u32
//! class names                  C × (u32 length + UTF-8 bytes)
//! modality tag                 8 bytes UTF-8, NUL padded
//! ```
//! Everything is little-endian. Vectors are stored as `f32`; values that are
//! exactly representable in `f32` round-trip bitwise.

use std::path::Path;

use crate::binio::{len_u32, put_u32, ByteReader};
use crate::error::{Result, SpanerError};
use crate::tensor::Tensor;

use super::{validate_tag, LabeledEmbeddings, MAX_TAG_BYTES};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"SPNE";
pub const EMBEDDING_VERSION: u32 = 1;

pub fn to_bytes(data: &LabeledEmbeddings) -> Result<Vec<u8>> {
    validate_tag(&data.modality)?;
    let (n, d, c) = (data.len(), data.dim(), data.num_classes());
    if n == 0 || d == 0 || c == 0 {
        return Err(SpanerError::Data(format!("refusing to write N={n}, d={d}, C={c}")));
    }
    let mut out = Vec::with_capacity(20 + n * (4 * d + 8));
    out.extend_from_slice(EMBEDDING_MAGIC);
    put_u32(&mut out, EMBEDDING_VERSION);
    put_u32(&mut out, len_u32(n, "N")?);
    put_u32(&mut out, len_u32(d, "d")?);
    put_u32(&mut out, len_u32(c, "C")?);
    for &v in data.vectors.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    for &id in &data.class_ids {
        put_u32(&mut out, len_u32(id, "class id")?);
    }
    for &id in &data.instance_ids {
        put_u32(&mut out, len_u32(id, "instance id")?);
    }
    for name in &data.class_names {
        put_u32(&mut out, len_u32(name.len(), "class name length")?);
        out.extend_from_slice(name.as_bytes());
    }
    let mut tag = [0u8; MAX_TAG_BYTES];
    tag[..data.modality.len()].copy_from_slice(data.modality.as_bytes());
    out.extend_from_slice(&tag);
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<LabeledEmbeddings> {
    let mut r = ByteReader::new(bytes);
    let magic = r.take(4, "magic")?;
    if magic != EMBEDDING_MAGIC {
        return Err(SpanerError::format(0, format!("bad magic {magic:?}, expected \"SPNE\"")));
    }
    let version = r.u32("version")?;
    if version != EMBEDDING_VERSION {
        return Err(SpanerError::format(4, format!("unsupported version {version}")));
    }
    let n = r.u32("N")? as usize;
    let d = r.u32("d")? as usize;
    let c = r.u32("C")? as usize;
    if n == 0 || d == 0 || c == 0 {
        return Err(SpanerError::format(8, format!("empty header N={n}, d={d}, C={c}")));
    }
    let needed = (n as u64) * (d as u64) * 4 + (n as u64) * 8;
    if needed > r.remaining() as u64 {
        return Err(SpanerError::format(
            r.offset(),
            format!("truncated: body needs at least {needed} bytes, {} remain", r.remaining()),
        ));
    }
    let mut vectors = Vec::with_capacity(n * d);
    for _ in 0..n * d {
        let at = r.offset();
        let v = r.f32("vector value")?;
        if !v.is_finite() {
            return Err(SpanerError::format(at, format!("non-finite value {v}")));
        }
        vectors.push(f64::from(v));
    }
    let mut class_ids = Vec::with_capacity(n);
    for _ in 0..n {
        let at = r.offset();
        let id = r.u32("class id")? as usize;
        if id >= c {
            return Err(SpanerError::format(at, format!("class id {id} outside [0, {c})")));
        }
        class_ids.push(id);
    }
    let mut instance_ids = Vec::with_capacity(n);
    for _ in 0..n {
        instance_ids.push(r.u32("instance id")? as usize);
    }
    let mut class_names = Vec::with_capacity(c.min(1 << 16));
    for _ in 0..c {
        let len = r.u32("class name length")? as usize;
        class_names.push(r.utf8(len, "class name")?.to_string());
    }
    let tag_at = r.offset();
    let raw = r.take(MAX_TAG_BYTES, "modality tag")?;
    let end = raw.iter().position(|&b| b == 0).unwrap_or(MAX_TAG_BYTES);
    if raw[end..].iter().any(|&b| b != 0) {
        return Err(SpanerError::format(tag_at, "modality tag has bytes after NUL padding"));
    }
    let tag = std::str::from_utf8(&raw[..end])
        .map_err(|e| SpanerError::format(tag_at, format!("modality tag is not UTF-8: {e}")))?;
    if tag.is_empty() {
        return Err(SpanerError::format(tag_at, "empty modality tag"));
    }
    r.finish()?;
    LabeledEmbeddings::new(
        tag,
        Tensor::new(vec![n, d], vectors)?,
        class_ids,
        instance_ids,
        class_names,
    )
    .map_err(|e| SpanerError::format(tag_at, e.to_string()))
}

pub fn write_embeddings(data: &LabeledEmbeddings, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(data)?)?;
    Ok(())
}

pub fn read_embeddings(path: &Path) -> Result<LabeledEmbeddings> {
    from_bytes(&std::fs::read(path)?)
}
