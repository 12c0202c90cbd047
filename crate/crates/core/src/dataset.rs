//! Directory conventions shared by the batch tools and annotation sessions.
//!
//! Source images live at the top level of a folder. Files whose name starts
//! with `gt_` are ground-truth masks and are never treated as source images.
//! Images and masks are paired by a key: the file stem with any leading
//! `img_` or `gt_` removed, so `img_0007.png` pairs with `gt_0007.png` and
//! `cell.jpg` pairs with `cell.png`.

use std::io;
use std::path::{Path, PathBuf};

pub const GT_PREFIX: &str = "gt_";
pub const IMG_PREFIX: &str = "img_";

pub fn is_supported_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg" | "bmp"))
        .unwrap_or(false)
}

fn file_name(path: &Path) -> &str {
    path.file_name().and_then(|n| n.to_str()).unwrap_or("")
}

fn list(dir: &Path, keep: impl Fn(&str) -> bool) -> io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        if !entry.file_type()?.is_file() {
            continue;
        }
        let path = entry.path();
        if is_supported_image(&path) && keep(file_name(&path)) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Supported source images directly under `dir`, sorted by file name.
pub fn list_images(dir: &Path) -> io::Result<Vec<PathBuf>> {
    list(dir, |name| !name.starts_with(GT_PREFIX))
}

/// Every supported image directly under `dir`.
pub fn list_all(dir: &Path) -> io::Result<Vec<PathBuf>> {
    list(dir, |_| true)
}

/// Mask files under `dir`: everything except `img_`-prefixed images.
pub fn list_masks(dir: &Path) -> io::Result<Vec<PathBuf>> {
    list(dir, |name| !name.starts_with(IMG_PREFIX))
}

pub fn pairing_key(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
    stem.strip_prefix(IMG_PREFIX).or_else(|| stem.strip_prefix(GT_PREFIX)).unwrap_or(stem).to_string()
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Pairing {
    pub pairs: Vec<(PathBuf, PathBuf)>,
    pub unmatched_left: Vec<PathBuf>,
    pub unmatched_right: Vec<PathBuf>,
}

/// Pairs two file lists by [`pairing_key`], in the order of `left`.
pub fn pair_by_key(left: &[PathBuf], right: &[PathBuf]) -> Pairing {
    use std::collections::BTreeMap;

    let mut by_key: BTreeMap<String, PathBuf> = right.iter().map(|p| (pairing_key(p), p.clone())).collect();
    let mut out = Pairing::default();
    for l in left {
        match by_key.remove(&pairing_key(l)) {
            Some(r) => out.pairs.push((l.clone(), r)),
            None => out.unmatched_left.push(l.clone()),
        }
    }
    out.unmatched_right = by_key.into_values().collect();
    out
}
