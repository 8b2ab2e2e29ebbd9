//! `SPNR` checkpoint container.
//!
//! ```text
//! "SPNR"            4 bytes
//! version           u32 (= 1)
//! header length     u32, then that many bytes of UTF-8 JSON
//!                   (architecture, modalities, λ, loss config, run echo)
//! parameter count   u32
//! per parameter:    u32 name length, name bytes, u8 frozen,
//!                   u32 rank, rank × u32 dims, f64 values
//! ```
//! All integers and floats are little-endian. Values are stored as raw
//! `f64` bits, so a round trip is bitwise exact.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binio::{len_u32, put_u32, ByteReader};
use crate::contrastive::ContrastiveConfig;
use crate::error::{Result, SpanerError};
use crate::param::Parameter;
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::{SharedPrompt, SpanerModel};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SPNR";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModalityEntry {
    tag: String,
    input_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    width: usize,
    heads: usize,
    prompt_tokens: usize,
    proj_dim: usize,
    lambda: f64,
    loss: ContrastiveConfig,
    modalities: Vec<ModalityEntry>,
    #[serde(default)]
    run: serde_json::Value,
}

/// A decoded checkpoint: the model plus whatever run configuration was
/// echoed into it.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: SpanerModel,
    pub run: serde_json::Value,
}

pub fn to_bytes(model: &SpanerModel, run: &serde_json::Value) -> Result<Vec<u8>> {
    let header = Header {
        width: model.width,
        heads: model.heads,
        prompt_tokens: model.prompt.len(),
        proj_dim: model.proj_dim,
        lambda: model.lambda,
        loss: model.loss_cfg,
        modalities: model
            .modalities()
            .into_iter()
            .map(|(tag, input_dim)| ModalityEntry { tag, input_dim })
            .collect(),
        run: run.clone(),
    };
    let json = serde_json::to_vec(&header)
        .map_err(|e| SpanerError::Data(format!("cannot encode checkpoint header: {e}")))?;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    put_u32(&mut out, len_u32(json.len(), "header length")?);
    out.extend_from_slice(&json);
    let params = model.parameters();
    put_u32(&mut out, len_u32(params.len(), "parameter count")?);
    for (name, p) in params {
        put_u32(&mut out, len_u32(name.len(), "name length")?);
        out.extend_from_slice(name.as_bytes());
        out.push(u8::from(p.frozen));
        put_u32(&mut out, len_u32(p.shape().len(), "rank")?);
        for &d in p.shape() {
            put_u32(&mut out, len_u32(d, "dimension")?);
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn skeleton(h: &Header) -> Result<SpanerModel> {
    let mut model = SpanerModel {
        width: h.width,
        heads: h.heads,
        proj_dim: h.proj_dim,
        lambda: h.lambda,
        loss_cfg: h.loss,
        prompt: SharedPrompt {
            tokens: Parameter::new(Tensor::zeros(&[h.prompt_tokens.max(1), h.width.max(1)])),
        },
        branches: BTreeMap::new(),
    };
    // Values are overwritten from the file; the rng only fixes shapes.
    let rng = Rng::new(0);
    for m in &h.modalities {
        model.register(&m.tag, m.input_dim, &rng)?;
    }
    Ok(model)
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = ByteReader::new(bytes);
    let magic = r.take(4, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(SpanerError::format(0, format!("bad magic {magic:?}, expected \"SPNR\"")));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(SpanerError::format(4, format!("unsupported version {version}")));
    }
    let hlen = r.u32("header length")? as usize;
    let at = r.offset();
    let header: Header = serde_json::from_slice(r.take(hlen, "header")?)
        .map_err(|e| SpanerError::format(at, format!("invalid header: {e}")))?;
    if header.width == 0 || header.prompt_tokens == 0 || header.proj_dim == 0 {
        return Err(SpanerError::format(at, "header has a zero dimension"));
    }
    let mut model = skeleton(&header).map_err(|e| SpanerError::format(at, e.to_string()))?;
    let expected = model.parameters().len();

    let count_at = r.offset();
    let count = r.u32("parameter count")? as usize;
    if count != expected {
        return Err(SpanerError::format(
            count_at,
            format!("{count} parameters stored, architecture has {expected}"),
        ));
    }
    let mut seen = std::collections::BTreeSet::new();
    for _ in 0..count {
        let name_at = r.offset();
        let nlen = r.u32("name length")? as usize;
        let name = r.utf8(nlen, "parameter name")?.to_string();
        let frozen = match r.u8("frozen flag")? {
            0 => false,
            1 => true,
            f => return Err(SpanerError::format(r.offset() - 1, format!("frozen flag {f}"))),
        };
        let rank = r.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.u32("dimension")? as usize);
        }
        if !seen.insert(name.clone()) {
            return Err(SpanerError::format(name_at, format!("duplicate parameter {name}")));
        }
        let p = model
            .parameter_mut(&name)
            .ok_or_else(|| SpanerError::format(name_at, format!("unexpected parameter {name}")))?;
        if p.shape() != shape.as_slice() {
            return Err(SpanerError::format(
                name_at,
                format!("{name} has shape {shape:?}, expected {:?}", p.shape()),
            ));
        }
        let values_at = r.offset();
        let n = p.value.len();
        let raw = r.take(n * 8, "parameter values")?;
        for (dst, chunk) in p.value.data_mut().iter_mut().zip(raw.chunks_exact(8)) {
            *dst = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        if !p.value.is_finite() {
            return Err(SpanerError::format(values_at, format!("{name} holds non-finite values")));
        }
        p.frozen = frozen;
    }
    r.finish()?;
    Ok(Checkpoint {
        model,
        run: header.run,
    })
}

pub fn save(model: &SpanerModel, run: &serde_json::Value, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(model, run)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    from_bytes(&std::fs::read(path)?)
}
