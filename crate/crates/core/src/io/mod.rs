//! File codecs: PFM depth/edge maps, Middlebury `.flo` flow, 8-bit PNG.

mod flo;
mod pfm;
mod png;

use std::fs;
use std::path::Path;

use crate::error::Result;

pub use flo::{decode_flo, encode_flo, read_flo, write_flo};
pub use pfm::{decode_pfm, encode_pfm, read_pfm, write_pfm, PfmMap};
pub use png::{load_image, save_image};

/// Writes `bytes` to a sibling temporary file and renames it into place, so
/// readers never observe a partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = path.with_file_name(format!(".{file_name}.tmp{}", std::process::id()));
    fs::write(&tmp, bytes)?;
    if let Err(e) = fs::rename(&tmp, path) {
        let _ = fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(())
}
