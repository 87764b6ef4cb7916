//! Middlebury optical-flow files: float32 magic `202021.25`, int32 width,
//! int32 height, then interleaved float32 `(dx, dy)` rows top-down, all
//! little-endian.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::maps::{FlowField, Raster};

const MAGIC: f32 = 202021.25;

pub fn encode_flo(flow: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + flow.pixel_count() * 8);
    out.extend_from_slice(&MAGIC.to_le_bytes());
    out.extend_from_slice(&(flow.width() as i32).to_le_bytes());
    out.extend_from_slice(&(flow.height() as i32).to_le_bytes());
    for [dx, dy] in flow.data() {
        out.extend_from_slice(&dx.to_le_bytes());
        out.extend_from_slice(&dy.to_le_bytes());
    }
    out
}

fn le4(bytes: &[u8], at: usize) -> [u8; 4] {
    [bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]
}

pub fn decode_flo(bytes: &[u8]) -> Result<FlowField> {
    if bytes.len() < 12 {
        return Err(Error::codec(bytes.len() as u64, "truncated .flo header"));
    }
    let magic = f32::from_le_bytes(le4(bytes, 0));
    if magic != MAGIC {
        return Err(Error::codec(0, format!("bad .flo magic {magic}, expected {MAGIC}")));
    }
    let w = i32::from_le_bytes(le4(bytes, 4));
    let h = i32::from_le_bytes(le4(bytes, 8));
    if w <= 0 || h <= 0 {
        return Err(Error::codec(4, format!("invalid .flo dimensions {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let expected = w * h * 8;
    if bytes.len() - 12 != expected {
        return Err(Error::codec(
            12,
            format!("payload is {} bytes, expected {expected}", bytes.len() - 12),
        ));
    }
    let mut data = Vec::with_capacity(w * h);
    for k in 0..w * h {
        let at = 12 + k * 8;
        let dx = f32::from_le_bytes(le4(bytes, at));
        let dy = f32::from_le_bytes(le4(bytes, at + 4));
        if !dx.is_finite() || !dy.is_finite() {
            return Err(Error::codec(at as u64, "non-finite flow vector"));
        }
        data.push([dx, dy]);
    }
    FlowField::new(w, h, data)
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    decode_flo(&fs::read(path.as_ref())?)
}

pub fn write_flo(path: impl AsRef<Path>, flow: &FlowField) -> Result<()> {
    super::write_atomic(path.as_ref(), &encode_flo(flow))
}
