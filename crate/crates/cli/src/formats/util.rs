//! Shared writer/reader plumbing: atomic writes, digesting, float text.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{HarnessError, Result};

/// Write a file atomically: contents land under a temporary name in the
/// same directory and are renamed into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp-write");
    {
        let mut f = fs::File::create(&tmp).map_err(|e| HarnessError::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| HarnessError::io(&tmp, e))?;
        f.sync_all().map_err(|e| HarnessError::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

/// FNV-1a 64-bit content digest, printed as 16 hex digits.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Shortest decimal that round-trips the exact f64 bit pattern.
pub fn format_f64(v: f64) -> String {
    let mut s = format!("{v:e}");
    // `{:e}` prints "1e0"; keep it but normalize the no-exponent corner.
    if !s.contains('e') {
        s.push_str("e0");
    }
    s
}

pub fn parse_f64(s: &str) -> Option<f64> {
    let v: f64 = s.parse().ok()?;
    if v.is_finite() {
        Some(v)
    } else {
        None
    }
}
