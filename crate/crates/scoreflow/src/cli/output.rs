//! Deterministic file output.
//!
//! Floats are printed with 17 significant digits, enough for f64 round-trip,
//! so identical runs produce byte-identical files and downstream tools can
//! reparse exact values. Files are written to a temporary sibling and renamed
//! into place; a crashed run never leaves a half-written table behind.

use std::path::Path;

use crate::error::Result;

/// 17 significant digits round-trips every finite f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes via a pid-tagged temp file in the same directory, then renames.
/// Rename within one directory is atomic, so readers see old or new, never a
/// torn file.
pub fn atomic_write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp.{}", std::process::id()));
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Assembles a CSV with a header row and LF line endings.
pub fn write_csv<I>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut text = String::new();
    text.push_str(&header.join(","));
    text.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        text.push_str(&row.join(","));
        text.push('\n');
    }
    atomic_write(path, &text)
}
