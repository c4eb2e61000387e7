//! Binary tensor files: magic `UMFD1`, a text manifest of
//! `name<TAB>shape<TAB>offset` lines, then little-endian f64 payloads.

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"UMFD1\n";

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

pub fn encode_tensors(tensors: &[NamedTensor]) -> Vec<u8> {
    let mut manifest = String::new();
    let mut offset = 0usize;
    for t in tensors {
        let shape: Vec<String> = t.shape.iter().map(usize::to_string).collect();
        manifest.push_str(&format!("{}\t{}\t{}\n", t.name, shape.join(","), offset));
        offset += t.values.len();
    }
    let mut out = Vec::with_capacity(MAGIC.len() + 8 + manifest.len() + offset * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
    out.extend_from_slice(manifest.as_bytes());
    for t in tensors {
        for v in &t.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<NamedTensor>> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(bad("bad magic, not a UMFD1 file"));
    }
    let mut len_bytes = [0u8; 8];
    len_bytes.copy_from_slice(&bytes[MAGIC.len()..MAGIC.len() + 8]);
    let mlen = u64::from_le_bytes(len_bytes) as usize;
    let start = MAGIC.len() + 8;
    let manifest = bytes
        .get(start..start + mlen)
        .ok_or_else(|| bad("truncated manifest"))?;
    let manifest = std::str::from_utf8(manifest).map_err(|_| bad("manifest is not UTF-8"))?;
    let payload = &bytes[start + mlen..];
    if !payload.len().is_multiple_of(8) {
        return Err(bad("payload length is not a multiple of 8"));
    }
    let floats: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut expected_offset = 0usize;
    for line in manifest.lines() {
        let cols: Vec<&str> = line.split('\t').collect();
        let [name, shape, offset] = cols.as_slice() else {
            return Err(bad(&format!("bad manifest line {line:?}")));
        };
        let shape: Vec<usize> = shape
            .split(',')
            .map(|d| d.parse().map_err(|_| bad(&format!("bad shape in {line:?}"))))
            .collect::<Result<_>>()?;
        let offset: usize = offset.parse().map_err(|_| bad(&format!("bad offset in {line:?}")))?;
        if offset != expected_offset {
            return Err(bad(&format!("offset of {name} out of sequence")));
        }
        let n: usize = shape.iter().product();
        let values = floats
            .get(offset..offset + n)
            .ok_or_else(|| bad(&format!("payload too short for {name}")))?
            .to_vec();
        if !seen.insert(name.to_string()) {
            return Err(bad(&format!("duplicate tensor {name}")));
        }
        expected_offset += n;
        out.push(NamedTensor {
            name: name.to_string(),
            shape,
            values,
        });
    }
    if expected_offset != floats.len() {
        return Err(bad("payload has trailing values"));
    }
    Ok(out)
}

pub fn write_tensors(path: &Path, tensors: &[NamedTensor]) -> Result<()> {
    std::fs::write(path, encode_tensors(tensors)).map_err(|e| Error::io(path, e))
}

pub fn read_tensors(path: &Path) -> Result<Vec<NamedTensor>> {
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingPath(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    decode_tensors(&bytes)
}
