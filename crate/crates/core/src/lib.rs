//! Ground-truth tooling for white-blood-cell nucleus masks.
//!
//! The segmentation engine colour-balances an RGB smear image, takes the
//! magenta plane of its CMYK conversion and thresholds it at a convex
//! combination of the two-class and three-class Otsu thresholds. Around it
//! sit overlap metrics, an alpha sweep, a synthetic phantom generator and
//! the persistent annotation session that a human drives to accept, adjust
//! or reject each proposed mask.

pub mod color;
pub mod dataset;
pub mod metrics;
pub mod phantom;
pub mod raster;
pub mod session;
pub mod threshold;

pub use color::{color_balance, extract_m_channel, rgb_to_cmyk, to_grayscale, CmykImage, ColorError};
pub use metrics::{alpha_sweep, confusion_counts, evaluate, ConfusionCounts, EvalResult, MetricsError, SweepReport};
pub use phantom::{generate_phantom, PhantomError, PhantomSpec};
pub use raster::{GrayImage, RasterError, RgbImage};
pub use session::{AnnotationRecord, Session, SessionError, Status};
pub use threshold::{
    analyze, apply_threshold, build_histogram, combine_thresholds, otsu_three_class, otsu_two_class, segment,
    BinaryMask, Histogram, Segmentation, ThresholdError, ThresholdSet,
};

/// Default fusion weight between the two- and three-class thresholds.
pub const DEFAULT_ALPHA: f64 = 0.3;
