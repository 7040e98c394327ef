//! `.views.f64` sidecar: the three float views of one image without quantization.
//!
//! Layout (little-endian): `b"TMKV"`, u32 version = 1, u32 height, u32 width,
//! then the rgb, edge and hf views in that order, each `height*width*3` f64
//! samples in row-major, channel-interleaved order.

use std::path::Path;

use super::{Result, ViewError, ViewImage, ViewKind, ViewTriplet};

pub const MAGIC: &[u8; 4] = b"TMKV";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

fn err(offset: usize, detail: impl Into<String>) -> ViewError {
    ViewError::Sidecar {
        offset,
        detail: detail.into(),
    }
}

pub fn encode(views: &ViewTriplet) -> Vec<u8> {
    let (h, w) = (views.rgb.height, views.rgb.width);
    let mut out = Vec::with_capacity(HEADER_LEN + 3 * h * w * 3 * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    for kind in ViewKind::ALL {
        for v in &views.get(kind).values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn u32_at(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .ok_or_else(|| err(bytes.len(), "truncated header"))
}

/// Decodes a sidecar, rejecting trailing bytes and samples outside `[0, 1]`.
pub fn decode(bytes: &[u8]) -> Result<ViewTriplet> {
    if bytes.get(..4) != Some(MAGIC.as_slice()) {
        return Err(err(0, "bad magic"));
    }
    let version = u32_at(bytes, 4)?;
    if version != VERSION {
        return Err(err(4, format!("unsupported version {version}")));
    }
    let h = u32_at(bytes, 8)? as usize;
    let w = u32_at(bytes, 12)? as usize;
    if h == 0 || w == 0 {
        return Err(err(8, format!("zero dimension {h}x{w}")));
    }
    let per_view = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| err(8, "dimensions overflow"))?;
    let expected = per_view
        .checked_mul(3 * 8)
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| err(8, "dimensions overflow"))?;
    if bytes.len() != expected {
        return Err(err(
            bytes.len().min(expected),
            format!("expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    let mut views = Vec::with_capacity(3);
    for (k, kind) in ViewKind::ALL.into_iter().enumerate() {
        let start = HEADER_LEN + k * per_view * 8;
        let mut values = Vec::with_capacity(per_view);
        for (i, chunk) in bytes[start..start + per_view * 8].chunks_exact(8).enumerate() {
            let v = f64::from_le_bytes(chunk.try_into().unwrap());
            if !(0.0..=1.0).contains(&v) {
                return Err(err(start + i * 8, format!("{kind} sample {v} outside [0, 1]")));
            }
            values.push(v);
        }
        views.push(ViewImage {
            height: h,
            width: w,
            values,
            kind,
        });
    }
    let hf = views.pop().unwrap();
    let edge = views.pop().unwrap();
    let rgb = views.pop().unwrap();
    Ok(ViewTriplet { rgb, edge, hf })
}

pub fn read_views(path: impl AsRef<Path>) -> Result<ViewTriplet> {
    decode(&std::fs::read(path)?)
}

pub fn write_views(views: &ViewTriplet, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode(views))?;
    Ok(())
}
