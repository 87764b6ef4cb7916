//! Greyscale PFM: `Pf\n<w> <h>\n<scale>\n` followed by float32 rows stored
//! bottom-up. A negative scale means little-endian payload; we always write
//! `-1.0`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::maps::{DepthMap, EdgeMap, Raster};

/// Maps that can be stored as a single-channel PFM.
pub trait PfmMap: Raster + Sized {
    fn pfm_values(&self) -> &[f32];
    fn from_pfm_values(width: usize, height: usize, data: Vec<f32>) -> Result<Self>;
}

impl PfmMap for DepthMap {
    fn pfm_values(&self) -> &[f32] {
        self.data()
    }

    fn from_pfm_values(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        DepthMap::new(width, height, data)
    }
}

impl PfmMap for EdgeMap {
    fn pfm_values(&self) -> &[f32] {
        self.data()
    }

    fn from_pfm_values(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        EdgeMap::new(width, height, data).map_err(|e| Error::codec(0, e.to_string()))
    }
}

pub fn encode_pfm(width: usize, height: usize, data: &[f32]) -> Vec<u8> {
    let header = format!("Pf\n{width} {height}\n-1.0\n");
    let mut out = Vec::with_capacity(header.len() + data.len() * 4);
    out.extend_from_slice(header.as_bytes());
    for y in (0..height).rev() {
        for v in &data[y * width..(y + 1) * width] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_whitespace(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn token(&mut self, what: &str) -> Result<&'a str> {
        self.skip_whitespace();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::codec(start as u64, format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::codec(start as u64, format!("{what} is not ASCII")))
    }
}

/// Decodes a greyscale PFM into `(width, height, row-major top-down data)`.
pub fn decode_pfm(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    if bytes.is_empty() {
        return Err(Error::codec(0, "empty file, expected PFM header"));
    }
    let mut cur = Cursor { bytes, pos: 0 };
    match cur.token("magic")? {
        "Pf" => {}
        "PF" => return Err(Error::codec(0, "colour PFM (PF) is not supported; expected Pf")),
        other => return Err(Error::codec(0, format!("bad magic {other:?}, expected Pf"))),
    }
    let mut dim = |what: &str| -> Result<usize> {
        let at = cur.pos as u64;
        let tok = cur.token(what)?;
        match tok.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(Error::codec(at, format!("invalid {what} {tok:?}"))),
        }
    };
    let width = dim("width")?;
    let height = dim("height")?;
    let at = cur.pos as u64;
    let scale_tok = cur.token("scale")?;
    let scale: f32 = scale_tok
        .parse()
        .map_err(|_| Error::codec(at, format!("invalid scale {scale_tok:?}")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::codec(at, "scale must be a finite non-zero number"));
    }
    let little_endian = scale < 0.0;
    // exactly one whitespace byte separates the header from the payload
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(Error::codec(cur.pos as u64, "missing newline after scale"));
    }
    let start = cur.pos + 1;
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::codec(0, "dimensions overflow"))?;
    let payload = &bytes[start..];
    if payload.len() != expected {
        return Err(Error::codec(
            start as u64,
            format!(
                "payload is {} bytes, expected {expected} for {width}x{height}",
                payload.len()
            ),
        ));
    }
    let mut data = vec![0.0f32; width * height];
    for (k, chunk) in payload.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        if !v.is_finite() {
            return Err(Error::codec((start + k * 4) as u64, "non-finite value in payload"));
        }
        let file_row = k / width;
        let x = k % width;
        data[(height - 1 - file_row) * width + x] = v;
    }
    Ok((width, height, data))
}

pub fn read_pfm<M: PfmMap>(path: impl AsRef<Path>) -> Result<M> {
    let bytes = fs::read(path.as_ref())?;
    let (w, h, data) = decode_pfm(&bytes)?;
    M::from_pfm_values(w, h, data)
}

pub fn write_pfm<M: PfmMap>(path: impl AsRef<Path>, map: &M) -> Result<()> {
    let bytes = encode_pfm(map.width(), map.height(), map.pfm_values());
    super::write_atomic(path.as_ref(), &bytes)
}
