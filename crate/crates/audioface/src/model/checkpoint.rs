//! Versioned binary checkpoints.
//!
//! Layout: 8-byte magic, a JSON architecture descriptor, then raw
//! little-endian `f32` tensors in the model's fixed tensor order, each
//! prefixed with its name and length.

use super::layers::Scalar;
use super::net::ModelParams;
use crate::error::PipelineError;
use crate::Result;
use std::io::{Read, Write};
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"AFCKPT01";

#[derive(serde::Serialize, serde::Deserialize)]
struct Descriptor {
    arch: super::arch::ModelArch,
    spec_mean: f64,
    spec_std: f64,
}

pub fn save_checkpoint<S: Scalar>(path: &Path, params: &ModelParams<S>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(CHECKPOINT_MAGIC)?;
    let desc = Descriptor {
        arch: params.arch.clone(),
        spec_mean: params.spec_mean,
        spec_std: params.spec_std,
    };
    let json = serde_json::to_vec(&desc).map_err(|e| PipelineError::Format {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    f.write_all(&(json.len() as u32).to_le_bytes())?;
    f.write_all(&json)?;
    f.write_all(&(params.tensor_count() as u32).to_le_bytes())?;
    let mut io_err: Option<std::io::Error> = None;
    params.for_each_tensor(|_, name, values| {
        if io_err.is_some() {
            return;
        }
        let res = (|| -> std::io::Result<()> {
            let name_bytes = name.as_bytes();
            f.write_all(&(name_bytes.len() as u32).to_le_bytes())?;
            f.write_all(name_bytes)?;
            f.write_all(&(values.len() as u64).to_le_bytes())?;
            for v in values {
                f.write_all(&(v.to64() as f32).to_le_bytes())?;
            }
            Ok(())
        })();
        if let Err(e) = res {
            io_err = Some(e);
        }
    });
    match io_err {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

pub fn load_checkpoint<S: Scalar>(path: &Path) -> Result<ModelParams<S>> {
    let ferr = |detail: String| PipelineError::Format {
        path: path.display().to_string(),
        detail,
    };
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(ferr("bad checkpoint magic".into()));
    }
    let json_len = read_u32(&mut f)? as usize;
    let mut json = vec![0u8; json_len];
    f.read_exact(&mut json)?;
    let desc: Descriptor =
        serde_json::from_slice(&json).map_err(|e| ferr(format!("bad descriptor: {}", e)))?;

    let mut params = ModelParams::<S>::init(desc.arch, 0);
    params.spec_mean = desc.spec_mean;
    params.spec_std = desc.spec_std;

    let count = read_u32(&mut f)? as usize;
    if count != params.tensor_count() {
        return Err(ferr(format!(
            "checkpoint has {} tensors, architecture expects {}",
            count,
            params.tensor_count()
        )));
    }
    let mut blobs: Vec<(String, Vec<f32>)> = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut f)? as usize;
        let mut name = vec![0u8; name_len];
        f.read_exact(&mut name)?;
        let len = read_u64(&mut f)? as usize;
        let mut bytes = vec![0u8; len * 4];
        f.read_exact(&mut bytes)?;
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        blobs.push((String::from_utf8_lossy(&name).into_owned(), values));
    }
    let mut mismatch: Option<String> = None;
    params.for_each_tensor_mut(|idx, name, values| {
        let (blob_name, blob) = &blobs[idx];
        if blob_name != name || blob.len() != values.len() {
            mismatch = Some(format!(
                "tensor {} ({} values) vs checkpoint {} ({} values)",
                name,
                values.len(),
                blob_name,
                blob.len()
            ));
            return;
        }
        for (v, &b) in values.iter_mut().zip(blob.iter()) {
            *v = S::from64(b as f64);
        }
    });
    match mismatch {
        Some(detail) => Err(ferr(detail)),
        None => Ok(params),
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
