//! Persistent annotation session over one folder of images.
//!
//! The session owns the sidecar `easygt_session.json` in the folder root,
//! which is the single source of truth for every record. Each mutation
//! updates the files it touches and then rewrites the sidecar through a
//! temporary file and rename, so a reopened session always sees the last
//! completed operation.
//!
//! Layout under the root:
//!
//! ```text
//! <image>                  source images, top level only
//! masks/<image-stem>.png   accepted masks, 0 background / 255 nucleus
//! failed/<image>           copies of images routed to the failed bucket
//! easygt_session.json      sidecar
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::list_images;
use crate::raster::{write_file, RasterError, RgbImage};
use crate::threshold::{analyze, check_alpha, offset_bounds, BinaryMask, ThresholdError, ThresholdSet};

pub const SIDECAR: &str = "easygt_session.json";
pub const MASKS_DIR: &str = "masks";
pub const FAILED_DIR: &str = "failed";
const SIDECAR_VERSION: u32 = 1;
/// Offset range used when an image has no computable threshold.
const MAX_ABS_OFFSET: i32 = 255;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("no supported images in {0}")]
    EmptySession(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt sidecar {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("unknown image id {0:?}")]
    UnknownImage(String),
    #[error("image {id} cannot be segmented: {source}")]
    Degenerate {
        id: String,
        #[source]
        source: ThresholdError,
    },
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Threshold(#[from] ThresholdError),
}

impl SessionError {
    fn io(path: &Path) -> impl FnOnce(std::io::Error) -> SessionError + '_ {
        move |source| SessionError::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pending,
    Accepted,
    Failed,
}

/// Annotation state of one image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    /// File name relative to the session root.
    pub image_id: String,
    pub status: Status,
    pub alpha: f64,
    /// Thresholds from the last time the image was segmented for a
    /// mutation; absent until then or when the image is degenerate.
    pub thv1: Option<f64>,
    pub thv2: Option<f64>,
    pub uthv: Option<f64>,
    pub user_offset: i32,
    pub mask_path: Option<String>,
    pub updated_at: DateTime<Utc>,
}

impl AnnotationRecord {
    fn new(image_id: String, alpha: f64) -> Self {
        Self {
            image_id,
            status: Status::Pending,
            alpha,
            thv1: None,
            thv2: None,
            uthv: None,
            user_offset: 0,
            mask_path: None,
            updated_at: Utc::now(),
        }
    }

    fn set_thresholds(&mut self, t: &ThresholdSet) {
        self.thv1 = Some(t.thv1);
        self.thv2 = Some(t.thv2);
        self.uthv = Some(t.uthv);
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    version: u32,
    default_alpha: f64,
    records: Vec<AnnotationRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Next,
    Prev,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub image_count: usize,
    pub pending: usize,
    pub accepted: usize,
    pub failed: usize,
    pub cursor: usize,
    pub default_alpha: f64,
    pub current: Option<String>,
    pub orphaned: Vec<String>,
}

/// Everything needed to display one image.
#[derive(Clone, Debug)]
pub struct View {
    pub image: RgbImage,
    /// Empty when the image cannot be segmented.
    pub mask: BinaryMask,
    pub thresholds: Option<ThresholdSet>,
    pub record: AnnotationRecord,
    /// Set when no threshold exists; such an image belongs in the failed bucket.
    pub degenerate: Option<ThresholdError>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AuditIssue {
    MissingMask { image_id: String },
    MaskDimensions { image_id: String, mask: (u32, u32), image: (u32, u32) },
    StaleMask { image_id: String },
    MissingFailedCopy { image_id: String },
    StaleFailedCopy { image_id: String },
    Orphaned { image_id: String },
}

pub struct Session {
    root: PathBuf,
    records: Vec<AnnotationRecord>,
    cursor: usize,
    default_alpha: f64,
    orphaned: Mutex<BTreeSet<String>>,
}

impl Session {
    /// Scans `folder` (non-recursively), merges it with any existing sidecar
    /// and places the cursor on the first pending image.
    ///
    /// Records whose image has disappeared are kept and reported as
    /// orphaned. Pending records adopt `alpha`; accepted and failed ones
    /// keep the alpha they were decided with.
    pub fn open(folder: impl AsRef<Path>, alpha: f64) -> Result<Self, SessionError> {
        let (session, changed) = Self::load(folder.as_ref(), Some(check_alpha(alpha)?))?;
        if changed {
            session.persist()?;
        }
        Ok(session)
    }

    /// Like [`Session::open`] but never writes. The alpha stored in the
    /// sidecar is kept, or the default one when there is no sidecar yet.
    pub fn inspect(folder: impl AsRef<Path>) -> Result<Self, SessionError> {
        Self::load(folder.as_ref(), None).map(|(s, _)| s)
    }

    fn load(root: &Path, alpha: Option<f64>) -> Result<(Self, bool), SessionError> {
        let root = root.to_path_buf();
        let images = list_images(&root).map_err(SessionError::io(&root))?;
        if images.is_empty() {
            return Err(SessionError::EmptySession(root));
        }

        let sidecar_path = root.join(SIDECAR);
        let stored = match std::fs::read(&sidecar_path) {
            Ok(bytes) => {
                let doc: Sidecar = serde_json::from_slice(&bytes)
                    .map_err(|e| SessionError::Corrupt { path: sidecar_path.clone(), message: e.to_string() })?;
                if doc.version != SIDECAR_VERSION {
                    return Err(SessionError::Corrupt {
                        path: sidecar_path,
                        message: format!("unsupported version {}", doc.version),
                    });
                }
                Some(doc)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(SessionError::Io { path: sidecar_path, source: e }),
        };

        let mut changed = stored.is_none();
        let alpha = alpha.or(stored.as_ref().map(|d| d.default_alpha)).unwrap_or(crate::DEFAULT_ALPHA);
        let mut records = stored.map(|d| {
            changed |= d.default_alpha != alpha;
            d.records
        }).unwrap_or_default();
        let known: BTreeSet<String> = records.iter().map(|r| r.image_id.clone()).collect();
        let on_disk: BTreeSet<String> = images
            .iter()
            .filter_map(|p| p.file_name().and_then(|n| n.to_str()).map(str::to_string))
            .collect();
        for id in on_disk.difference(&known) {
            records.push(AnnotationRecord::new(id.clone(), alpha));
            changed = true;
        }
        for rec in records.iter_mut().filter(|r| r.status == Status::Pending && r.alpha != alpha) {
            rec.alpha = alpha;
            if let (Some(t1), Some(t2)) = (rec.thv1, rec.thv2) {
                rec.uthv = Some(alpha * t1 + (1.0 - alpha) * t2);
            }
            changed = true;
        }
        records.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        records.dedup_by(|a, b| a.image_id == b.image_id);

        let orphaned = records.iter().filter(|r| !on_disk.contains(&r.image_id)).map(|r| r.image_id.clone()).collect();
        let mut session = Session { root, records, cursor: 0, default_alpha: alpha, orphaned: Mutex::new(orphaned) };
        session.cursor = session.first_pending_from(0).unwrap_or(0);
        Ok((session, changed))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn records(&self) -> &[AnnotationRecord] {
        &self.records
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn default_alpha(&self) -> f64 {
        self.default_alpha
    }

    pub fn record(&self, image_id: &str) -> Result<&AnnotationRecord, SessionError> {
        self.index_of(image_id).map(|i| &self.records[i])
    }

    pub fn current(&self) -> &AnnotationRecord {
        &self.records[self.cursor]
    }

    pub fn image_path(&self, image_id: &str) -> Result<PathBuf, SessionError> {
        self.index_of(image_id).map(|i| self.root.join(&self.records[i].image_id))
    }

    pub fn is_orphaned(&self, image_id: &str) -> bool {
        self.orphaned.lock().expect("orphan set poisoned").contains(image_id)
    }

    pub fn summary(&self) -> Summary {
        let count = |s| self.records.iter().filter(|r| r.status == s).count();
        Summary {
            image_count: self.records.len(),
            pending: count(Status::Pending),
            accepted: count(Status::Accepted),
            failed: count(Status::Failed),
            cursor: self.cursor,
            default_alpha: self.default_alpha,
            current: Some(self.current().image_id.clone()),
            orphaned: self.orphaned.lock().expect("orphan set poisoned").iter().cloned().collect(),
        }
    }

    fn index_of(&self, image_id: &str) -> Result<usize, SessionError> {
        self.records
            .binary_search_by(|r| r.image_id.as_str().cmp(image_id))
            .map_err(|_| SessionError::UnknownImage(image_id.to_string()))
    }

    fn first_pending_from(&self, start: usize) -> Option<usize> {
        let orphaned = self.orphaned.lock().expect("orphan set poisoned");
        (start..self.records.len())
            .find(|&i| self.records[i].status == Status::Pending && !orphaned.contains(&self.records[i].image_id))
    }

    fn advance_from(&mut self, index: usize) {
        self.cursor = self.first_pending_from(index + 1).or_else(|| self.first_pending_from(0)).unwrap_or(index);
    }

    /// Marks a record whose image file has gone missing.
    pub fn flag_orphaned(&self, image_id: &str) {
        self.orphaned.lock().expect("orphan set poisoned").insert(image_id.to_string());
    }

    /// Loads a session image, flagging the record as orphaned if the file is gone.
    pub fn load_image(&self, image_id: &str) -> Result<RgbImage, SessionError> {
        let path = self.image_path(image_id)?;
        match RgbImage::load(&path) {
            Ok(img) => Ok(img),
            Err(e) => {
                if !path.exists() {
                    self.flag_orphaned(image_id);
                    return Err(SessionError::Io {
                        path,
                        source: std::io::Error::new(std::io::ErrorKind::NotFound, "image vanished"),
                    });
                }
                Err(e.into())
            }
        }
    }

    /// Segments `image_id` at the record's alpha and the given offset
    /// without touching any state.
    pub fn preview(&self, image_id: &str, user_offset: i32) -> Result<View, SessionError> {
        let alpha = self.record(image_id)?.alpha;
        self.preview_with(image_id, alpha, user_offset)
    }

    pub fn preview_with(&self, image_id: &str, alpha: f64, user_offset: i32) -> Result<View, SessionError> {
        let record = self.record(image_id)?.clone();
        let image = self.load_image(image_id)?;
        let (mask, thresholds, degenerate) = match analyze(&image) {
            Ok(analysis) => {
                let t = analysis.thresholds(alpha, user_offset)?;
                (analysis.mask(&t), Some(t), None)
            }
            Err(e) => (BinaryMask::empty(image.width(), image.height()), None, Some(e)),
        };
        Ok(View { image, mask, thresholds, record, degenerate })
    }

    /// The image under the cursor, segmented at its stored offset.
    pub fn current_view(&self) -> Result<View, SessionError> {
        let rec = self.current();
        self.preview(&rec.image_id, rec.user_offset)
    }

    /// Shifts the threshold offset of `image_id` by `delta`, keeping the
    /// effective threshold inside `[0, 255]`. An accepted record drops back
    /// to pending and its mask file is removed.
    pub fn adjust_threshold(&mut self, image_id: &str, delta: i32) -> Result<AnnotationRecord, SessionError> {
        let idx = self.index_of(image_id)?;
        let mut rec = self.records[idx].clone();
        let thresholds = self
            .load_image(image_id)
            .ok()
            .and_then(|img| analyze(&img).ok())
            .map(|a| a.thresholds(rec.alpha, 0))
            .transpose()?;

        let (lo, hi) = match &thresholds {
            Some(t) => offset_bounds(t.uthv),
            None => (-MAX_ABS_OFFSET, MAX_ABS_OFFSET),
        };
        rec.user_offset = rec.user_offset.saturating_add(delta).clamp(lo, hi);
        if let Some(t) = &thresholds {
            rec.set_thresholds(t);
        }
        let stale_mask = if rec.status == Status::Accepted {
            rec.status = Status::Pending;
            rec.mask_path.take()
        } else {
            None
        };
        rec.updated_at = Utc::now();

        self.records[idx] = rec.clone();
        self.cursor = idx;
        self.persist()?;
        if let Some(rel) = stale_mask {
            remove_if_exists(&self.root.join(rel))?;
        }
        Ok(rec)
    }

    /// Writes the mask at the record's effective threshold, marks the record
    /// accepted and moves the cursor to the next pending image.
    pub fn accept(&mut self, image_id: &str) -> Result<AnnotationRecord, SessionError> {
        let idx = self.index_of(image_id)?;
        let mut rec = self.records[idx].clone();
        let image = self.load_image(image_id)?;
        let analysis = analyze(&image).map_err(|source| SessionError::Degenerate { id: image_id.to_string(), source })?;
        let thresholds = analysis.thresholds(rec.alpha, rec.user_offset)?;
        let mask = analysis.mask(&thresholds);

        let rel = self.mask_rel_path(image_id);
        let mask_path = self.root.join(&rel);
        std::fs::create_dir_all(mask_path.parent().expect("mask path has a parent"))
            .map_err(SessionError::io(&mask_path))?;
        mask.save_png(&mask_path)?;

        let was_failed = rec.status == Status::Failed;
        rec.status = Status::Accepted;
        rec.set_thresholds(&thresholds);
        rec.mask_path = Some(rel);
        rec.updated_at = Utc::now();
        self.records[idx] = rec.clone();
        self.advance_from(idx);
        self.persist()?;
        if was_failed {
            remove_if_exists(&self.failed_copy_path(image_id))?;
        }
        Ok(rec)
    }

    /// Copies the image into the failed bucket, removes any accepted mask and
    /// moves the cursor to the next pending image.
    pub fn mark_failed(&mut self, image_id: &str) -> Result<AnnotationRecord, SessionError> {
        let idx = self.index_of(image_id)?;
        let src = self.image_path(image_id)?;
        let bytes = std::fs::read(&src).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                self.flag_orphaned(image_id);
            }
            SessionError::Io { path: src.clone(), source: e }
        })?;
        let dst = self.failed_copy_path(image_id);
        std::fs::create_dir_all(dst.parent().expect("failed path has a parent")).map_err(SessionError::io(&dst))?;
        write_file(&dst, &bytes)?;

        let mut rec = self.records[idx].clone();
        let old_mask = rec.mask_path.take();
        rec.status = Status::Failed;
        rec.updated_at = Utc::now();
        self.records[idx] = rec.clone();
        self.advance_from(idx);
        self.persist()?;
        if let Some(rel) = old_mask {
            remove_if_exists(&self.root.join(rel))?;
        }
        Ok(rec)
    }

    /// Moves the cursor one step, saturating at both ends.
    pub fn navigate(&mut self, direction: Direction) -> usize {
        self.cursor = match direction {
            Direction::Next => (self.cursor + 1).min(self.records.len() - 1),
            Direction::Prev => self.cursor.saturating_sub(1),
        };
        self.cursor
    }

    pub fn adjust_current(&mut self, delta: i32) -> Result<AnnotationRecord, SessionError> {
        let id = self.current().image_id.clone();
        self.adjust_threshold(&id, delta)
    }

    pub fn accept_current(&mut self) -> Result<AnnotationRecord, SessionError> {
        let id = self.current().image_id.clone();
        self.accept(&id)
    }

    pub fn fail_current(&mut self) -> Result<AnnotationRecord, SessionError> {
        let id = self.current().image_id.clone();
        self.mark_failed(&id)
    }

    /// Mask file for `image_id`, relative to the root. Uses the image stem
    /// unless another image in the session shares it.
    pub fn mask_rel_path(&self, image_id: &str) -> String {
        let stem = |id: &str| Path::new(id).file_stem().and_then(|s| s.to_str()).unwrap_or(id).to_string();
        let own = stem(image_id);
        let clash = self.records.iter().any(|r| r.image_id != image_id && stem(&r.image_id) == own);
        let name = if clash { image_id.to_string() } else { own };
        format!("{MASKS_DIR}/{name}.png")
    }

    pub fn failed_copy_path(&self, image_id: &str) -> PathBuf {
        self.root.join(FAILED_DIR).join(image_id)
    }

    /// Checks that every record agrees with the files on disk.
    pub fn audit(&self) -> Vec<AuditIssue> {
        let mut issues = Vec::new();
        for rec in &self.records {
            let id = rec.image_id.clone();
            let image_path = self.root.join(&rec.image_id);
            if !image_path.exists() {
                issues.push(AuditIssue::Orphaned { image_id: id.clone() });
            }
            let expected_mask = self.root.join(self.mask_rel_path(&rec.image_id));
            let failed_copy = self.failed_copy_path(&rec.image_id).exists();
            match rec.status {
                Status::Accepted => {
                    let path = rec.mask_path.as_ref().map(|m| self.root.join(m));
                    match path.map(BinaryMask::load) {
                        Some(Ok(mask)) => {
                            if let Ok(dims) = image::image_dimensions(&image_path) {
                                if dims != (mask.width(), mask.height()) {
                                    issues.push(AuditIssue::MaskDimensions {
                                        image_id: id.clone(),
                                        mask: (mask.width(), mask.height()),
                                        image: dims,
                                    });
                                }
                            }
                        }
                        _ => issues.push(AuditIssue::MissingMask { image_id: id.clone() }),
                    }
                    if failed_copy {
                        issues.push(AuditIssue::StaleFailedCopy { image_id: id });
                    }
                }
                Status::Failed => {
                    if !failed_copy {
                        issues.push(AuditIssue::MissingFailedCopy { image_id: id.clone() });
                    }
                    if rec.mask_path.is_some() || expected_mask.exists() {
                        issues.push(AuditIssue::StaleMask { image_id: id });
                    }
                }
                Status::Pending => {
                    if rec.mask_path.is_some() || expected_mask.exists() {
                        issues.push(AuditIssue::StaleMask { image_id: id.clone() });
                    }
                    if failed_copy {
                        issues.push(AuditIssue::StaleFailedCopy { image_id: id });
                    }
                }
            }
        }
        issues
    }

    fn persist(&self) -> Result<(), SessionError> {
        let doc = Sidecar { version: SIDECAR_VERSION, default_alpha: self.default_alpha, records: self.records.clone() };
        let mut bytes = serde_json::to_vec_pretty(&doc).expect("records serialize");
        bytes.push(b'\n');
        write_file(&self.root.join(SIDECAR), &bytes)?;
        Ok(())
    }
}

fn remove_if_exists(path: &Path) -> Result<(), SessionError> {
    match std::fs::remove_file(path) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
        Err(e) => Err(SessionError::Io { path: path.to_path_buf(), source: e }),
    }
}
