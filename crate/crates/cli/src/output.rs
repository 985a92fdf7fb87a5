use std::io::Write;
use std::path::{Path, PathBuf};

use dmbp::imaging::{encode_raw, heatmap_png, AttributionMap, Overlay};

use crate::failure::CliResult;

/// Writes through a temporary file in the same directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn write_with(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> CliResult {
    let mut buf = Vec::new();
    f(&mut buf)?;
    write_atomic(path, &buf)
}

/// Writes `<base>.dmbpa` and `<base>.png`; returns both paths.
pub fn write_map(
    out_dir: &Path,
    base: &str,
    map: &AttributionMap,
    overlay: Option<Overlay<'_>>,
) -> CliResult<[PathBuf; 2]> {
    let raw = out_dir.join(format!("{base}.dmbpa"));
    let png = out_dir.join(format!("{base}.png"));
    write_atomic(&raw, &encode_raw(map)?)?;
    write_atomic(&png, &heatmap_png(map, overlay)?)?;
    Ok([raw, png])
}

/// File stem of an image path, used to name per-image outputs.
pub fn image_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

/// Image ids made unique by suffixing repeats with their manifest index.
pub fn unique_ids(paths: &[&Path]) -> Vec<String> {
    let stems: Vec<String> = paths.iter().map(|p| image_id(p)).collect();
    stems
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if stems.iter().filter(|t| *t == s).count() > 1 {
                format!("{s}-{i}")
            } else {
                s.clone()
            }
        })
        .collect()
}
