//! Locating inputs on disk.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lutharm_core::dataset::NamedLut;
use lutharm_core::io::{self, LoadOptions, LoadedSample, COMPOSITE_DIR, REAL_DIR};

/// LUT files in `dir`, sorted by name; ids are file stems.
pub fn load_lut_pool(dir: &Path) -> Result<Vec<NamedLut>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("cube") || e.eq_ignore_ascii_case("lut"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("{}: no .cube or .lut files", dir.display());
    }
    paths
        .iter()
        .map(|p| {
            let id = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok(NamedLut {
                id,
                lut: io::read_lut(p)?,
            })
        })
        .collect()
}

fn is_sample_dir(dir: &Path) -> bool {
    dir.join(REAL_DIR).is_dir() || dir.join(COMPOSITE_DIR).is_dir()
}

/// `dir` itself when it is a sample, otherwise its sample subdirectories in
/// name order.
pub fn sample_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    if is_sample_dir(dir) {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && is_sample_dir(p))
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        bail!("{}: no sample directories found", dir.display());
    }
    Ok(dirs)
}

pub fn load_samples(dir: &Path) -> Result<Vec<LoadedSample>> {
    sample_dirs(dir)?
        .iter()
        .map(|d| io::read_sample(d, LoadOptions::default()).with_context(|| format!("loading {}", d.display())))
        .collect()
}
