//! Histogram thresholding: two- and three-class Otsu, the convex fusion of
//! the two thresholds, and binary masks.
//!
//! Both Otsu searches are exhaustive over the 256-bin domain and return the
//! exact argmax of the between-class variance. Candidates are scored in
//! floating point; when two scores fall within rounding distance of each
//! other they are compared again in exact integer arithmetic, so ties are
//! real ties and always resolve to the smallest threshold.

use std::cmp::Ordering;
use std::path::Path;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color::{color_balance, extract_m_channel, rgb_to_cmyk};
use crate::raster::{gray_png, write_file, GrayImage, RasterError, RgbImage};

pub const LEVELS: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThresholdError {
    #[error("histogram has {nonempty} non-empty bins, need at least {needed}")]
    DegenerateHistogram { nonempty: usize, needed: usize },
    #[error("alpha must be in [0,1], got {0}")]
    InvalidAlpha(f64),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Histogram {
    counts: [u64; LEVELS],
    total: u64,
    zero_ignored: bool,
}

impl Histogram {
    pub fn from_counts(counts: [u64; LEVELS]) -> Self {
        let total = counts.iter().sum();
        Self { counts, total, zero_ignored: false }
    }

    pub fn counts(&self) -> &[u64; LEVELS] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn zero_ignored(&self) -> bool {
        self.zero_ignored
    }

    pub fn nonempty_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Cumulative pixel counts and intensity sums, `prefix[i]` covering bins `0..i`.
    fn prefix_moments(&self) -> ([u64; LEVELS + 1], [u64; LEVELS + 1]) {
        let mut n = [0u64; LEVELS + 1];
        let mut s = [0u64; LEVELS + 1];
        for (i, &c) in self.counts.iter().enumerate() {
            n[i + 1] = n[i] + c;
            s[i + 1] = s[i] + c * i as u64;
        }
        (n, s)
    }
}

pub fn build_histogram(img: &GrayImage, ignore_zero: bool) -> Histogram {
    let mut counts = [0u64; LEVELS];
    for &v in img.as_raw() {
        counts[v as usize] += 1;
    }
    if ignore_zero {
        counts[0] = 0;
    }
    let total = counts.iter().sum();
    Histogram { counts, total, zero_ignored: ignore_zero }
}

/// Class moments `(pixel count, intensity sum)`.
type Moments = (u64, u64);

/// Score of a partition: `sum_k S_k^2 / n_k`. The between-class variance
/// equals `score / N - mean^2`, so both share the same argmax.
fn score(classes: &[Moments]) -> f64 {
    classes
        .iter()
        .filter(|(n, _)| *n > 0)
        .map(|&(n, s)| {
            let s = s as f64;
            s * s / n as f64
        })
        .sum()
}

/// Exact comparison of two partition scores.
fn cmp_exact(a: &[Moments], b: &[Moments]) -> Ordering {
    let (pa, qa) = exact_fraction(a);
    let (pb, qb) = exact_fraction(b);
    (pa * &qb).cmp(&(pb * &qa))
}

fn exact_fraction(classes: &[Moments]) -> (BigUint, BigUint) {
    let nonempty: Vec<_> = classes.iter().filter(|(n, _)| *n > 0).collect();
    let den = nonempty.iter().fold(BigUint::from(1u8), |acc, (n, _)| acc * *n);
    let num = nonempty
        .iter()
        .enumerate()
        .map(|(k, &&(_, s))| {
            let others = nonempty
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != k)
                .fold(BigUint::from(1u8), |acc, (_, (n, _))| acc * *n);
            BigUint::from(s) * s * others
        })
        .sum();
    (num, den)
}

/// Running argmax that keeps the first candidate among exact ties.
struct Best<T> {
    key: T,
    score: f64,
    classes: Vec<Moments>,
}

impl<T: Copy> Best<T> {
    fn offer(slot: &mut Option<Self>, key: T, classes: &[Moments]) {
        let candidate = score(classes);
        let better = match slot {
            None => true,
            Some(best) => {
                let scale = best.score.abs().max(candidate.abs());
                if (candidate - best.score).abs() > 1e-9 * scale {
                    candidate > best.score
                } else {
                    cmp_exact(classes, &best.classes) == Ordering::Greater
                }
            }
        };
        if better {
            *slot = Some(Best { key, score: candidate, classes: classes.to_vec() });
        }
    }
}

/// Two-class Otsu. Class 0 holds intensities `<= t`, class 1 those `> t`.
/// Returns the smallest `t` in `[0, 254]` maximizing the between-class
/// variance.
pub fn otsu_two_class(h: &Histogram) -> Result<f64, ThresholdError> {
    let nonempty = h.nonempty_bins();
    if nonempty < 2 {
        return Err(ThresholdError::DegenerateHistogram { nonempty, needed: 2 });
    }
    let (n, s) = h.prefix_moments();
    let (total_n, total_s) = (n[LEVELS], s[LEVELS]);

    let mut best = None;
    for t in 0..LEVELS - 1 {
        let lower = (n[t + 1], s[t + 1]);
        let upper = (total_n - lower.0, total_s - lower.1);
        if lower.0 == 0 || upper.0 == 0 {
            continue;
        }
        Best::offer(&mut best, t, &[lower, upper]);
    }
    let best = best.expect("two non-empty bins admit a split");
    Ok(best.key as f64)
}

/// Three-class Otsu over classes `[0, t1]`, `(t1, t2]`, `(t2, 255]`.
/// Returns the lexicographically smallest `(t1, t2)` with `t1 < t2 <= 254`
/// maximizing the between-class variance. The upper threshold is THV2.
pub fn otsu_three_class(h: &Histogram) -> Result<(f64, f64), ThresholdError> {
    let nonempty = h.nonempty_bins();
    if nonempty < 3 {
        return Err(ThresholdError::DegenerateHistogram { nonempty, needed: 3 });
    }
    let (n, s) = h.prefix_moments();
    let (total_n, total_s) = (n[LEVELS], s[LEVELS]);

    let mut best = None;
    for t1 in 0..LEVELS - 2 {
        let low = (n[t1 + 1], s[t1 + 1]);
        if low.0 == 0 {
            continue;
        }
        for t2 in t1 + 1..LEVELS - 1 {
            let mid = (n[t2 + 1] - low.0, s[t2 + 1] - low.1);
            let high = (total_n - n[t2 + 1], total_s - s[t2 + 1]);
            if mid.0 == 0 || high.0 == 0 {
                continue;
            }
            Best::offer(&mut best, (t1, t2), &[low, mid, high]);
        }
    }
    let (t1, t2) = best.expect("three non-empty bins admit a split").key;
    Ok((t1 as f64, t2 as f64))
}

pub fn check_alpha(alpha: f64) -> Result<f64, ThresholdError> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(alpha)
    } else {
        Err(ThresholdError::InvalidAlpha(alpha))
    }
}

/// Convex combination `alpha * thv1 + (1 - alpha) * thv2`, unrounded.
pub fn combine_thresholds(thv1: f64, thv2: f64, alpha: f64) -> Result<f64, ThresholdError> {
    let alpha = check_alpha(alpha)?;
    Ok(alpha * thv1 + (1.0 - alpha) * thv2)
}

/// The thresholds behind one mask.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub thv1: f64,
    pub thv2: f64,
    pub alpha: f64,
    pub uthv: f64,
    pub user_offset: i32,
    /// `uthv + user_offset`, clamped to `[0, 255]`.
    pub effective: f64,
}

impl ThresholdSet {
    pub fn new(thv1: f64, thv2: f64, alpha: f64, user_offset: i32) -> Result<Self, ThresholdError> {
        let uthv = combine_thresholds(thv1, thv2, alpha)?;
        Ok(Self { thv1, thv2, alpha, uthv, user_offset, effective: effective_threshold(uthv, user_offset) })
    }
}

pub fn effective_threshold(uthv: f64, user_offset: i32) -> f64 {
    (uthv + user_offset as f64).clamp(0.0, 255.0)
}

/// Smallest and largest offsets worth storing for a given `uthv`: beyond
/// them the effective threshold is pinned at 0 or 255.
pub fn offset_bounds(uthv: f64) -> (i32, i32) {
    ((-uthv).floor() as i32, (255.0 - uthv).ceil() as i32)
}

/// Per-pixel nucleus/background decision.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 || bits.len() != width as usize * height as usize {
            return Err(RasterError::Dimensions { width, height, len: bits.len() });
        }
        Ok(Self { width, height, bits })
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self { width, height, bits: vec![false; width as usize * height as usize] }
    }

    /// Any non-zero sample counts as nucleus.
    pub fn from_gray(img: &GrayImage) -> Self {
        Self { width: img.width(), height: img.height(), bits: img.as_raw().iter().map(|&v| v != 0).collect() }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.bits.len() == other.bits.len() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// 8-bit grayscale PNG, 0 background and 255 nucleus.
    pub fn to_png(&self) -> Result<Vec<u8>, RasterError> {
        let data = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        gray_png(self.width, self.height, data)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), RasterError> {
        write_file(path.as_ref(), &self.to_png()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RasterError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| {
            if source.kind() == std::io::ErrorKind::NotFound {
                RasterError::NotFound(path.to_path_buf())
            } else {
                RasterError::Io { path: path.to_path_buf(), source }
            }
        })?;
        let img = image::load_from_memory(&bytes)
            .map_err(|e| RasterError::Decode { path: path.to_path_buf(), message: e.to_string() })?
            .into_luma8();
        let (width, height) = img.dimensions();
        Ok(Self { width, height, bits: img.into_raw().into_iter().map(|v| v != 0).collect() })
    }
}

/// Nucleus is every pixel strictly above `threshold`.
pub fn apply_threshold(img: &GrayImage, threshold: f64) -> BinaryMask {
    let bits = img.as_raw().iter().map(|&v| v as f64 > threshold).collect();
    BinaryMask { width: img.width(), height: img.height(), bits }
}

/// The alpha-independent part of a segmentation: the magenta plane and the
/// two Otsu thresholds computed from it.
#[derive(Clone, Debug)]
pub struct Analysis {
    pub magenta: GrayImage,
    pub thv1: f64,
    pub thv2: f64,
    /// False when colour balance was skipped because a channel was all zero.
    pub balanced: bool,
}

impl Analysis {
    pub fn thresholds(&self, alpha: f64, user_offset: i32) -> Result<ThresholdSet, ThresholdError> {
        ThresholdSet::new(self.thv1, self.thv2, alpha, user_offset)
    }

    pub fn mask(&self, thresholds: &ThresholdSet) -> BinaryMask {
        apply_threshold(&self.magenta, thresholds.effective)
    }
}

/// Colour balance, magenta extraction and both Otsu searches.
///
/// An image with an all-zero channel cannot be balanced; it is analyzed
/// unbalanced instead, and usually fails later with a degenerate histogram.
pub fn analyze(img: &RgbImage) -> Result<Analysis, ThresholdError> {
    let (balanced_img, balanced) = match color_balance(img) {
        Ok(b) => (b, true),
        Err(_) => (img.clone(), false),
    };
    let magenta = extract_m_channel(&rgb_to_cmyk(&balanced_img));
    let hist = build_histogram(&magenta, true);
    let thv1 = otsu_two_class(&hist)?;
    let (_, thv2) = otsu_three_class(&hist)?;
    Ok(Analysis { magenta, thv1, thv2, balanced })
}

#[derive(Clone, Debug)]
pub struct Segmentation {
    pub mask: BinaryMask,
    pub thresholds: ThresholdSet,
}

/// Full pipeline for one image at the given alpha and user offset.
pub fn segment(img: &RgbImage, alpha: f64, user_offset: i32) -> Result<Segmentation, ThresholdError> {
    check_alpha(alpha)?;
    let analysis = analyze(img)?;
    let thresholds = analysis.thresholds(alpha, user_offset)?;
    Ok(Segmentation { mask: analysis.mask(&thresholds), thresholds })
}
