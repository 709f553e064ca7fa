//! File formats: framed tensors (`.fpm`), rig assets, OBJ meshes and WAV audio.

mod fpm;
mod obj;
mod rig_file;
mod wav;

pub use fpm::{
    decode_framed, encode_framed, read_framed, read_sequence, read_table, read_track, write_framed, write_sequence,
    write_table, write_track, FpmContent, FpmHeader, FramedTensor, FPM_MAGIC, FPM_VERSION,
};
pub use obj::{obj_string, write_obj};
pub use rig_file::{decode_rig, encode_rig, read_rig, write_rig, RigHeader, RIG_MAGIC, RIG_VERSION};
pub use wav::{read_wav, write_wav};

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Splits `magic | u32 header length | JSON header | payload`.
pub(crate) fn split_container<'a>(bytes: &'a [u8], magic: &[u8; 4]) -> Result<(&'a [u8], &'a [u8])> {
    if bytes.len() < 8 || &bytes[..4] != magic {
        return Err(Error::Header(format!(
            "missing {} magic",
            String::from_utf8_lossy(magic)
        )));
    }
    let len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let end = 8usize
        .checked_add(len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::Header(format!("header length {len} exceeds file size {}", bytes.len())))?;
    Ok((&bytes[8..end], &bytes[end..]))
}

pub(crate) fn join_container(magic: &[u8; 4], header: &[u8], payload_len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + header.len() + payload_len);
    out.extend_from_slice(magic);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header);
    out
}

pub(crate) fn push_f32s<'a>(out: &mut Vec<u8>, values: impl IntoIterator<Item = &'a f64>) {
    for v in values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
}

/// Reads `count` little-endian f32 values, advancing `cursor`.
pub(crate) fn take_f32s(payload: &[u8], cursor: &mut usize, count: usize) -> Result<Vec<f64>> {
    let bytes = take(payload, cursor, count * 4)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect())
}

pub(crate) fn take<'a>(payload: &'a [u8], cursor: &mut usize, len: usize) -> Result<&'a [u8]> {
    let end = *cursor + len;
    if end > payload.len() {
        return Err(Error::Truncated {
            expected: end,
            found: payload.len(),
        });
    }
    let out = &payload[*cursor..end];
    *cursor = end;
    Ok(out)
}
