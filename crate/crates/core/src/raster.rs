//! Plain 8-bit rasters used throughout the pipeline, plus decoding and
//! encoding to the on-disk formats.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageFormat, Luma};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("image not found: {0}")]
    NotFound(PathBuf),
    #[error("cannot decode {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid dimensions {width}x{height} for {len} samples")]
    Dimensions { width: u32, height: u32, len: usize },
    #[error("png encoding failed: {0}")]
    Encode(String),
}

fn check_dims(width: u32, height: u32, expected: usize, len: usize) -> Result<(), RasterError> {
    if width == 0 || height == 0 || expected != len {
        return Err(RasterError::Dimensions { width, height, len });
    }
    Ok(())
}

/// Row-major interleaved RGB raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl RgbImage {
    /// Builds an image from interleaved `R, G, B` bytes.
    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self, RasterError> {
        let px = width as usize * height as usize;
        check_dims(width, height, px * 3, data.len())?;
        Ok(Self { width, height, data })
    }

    pub fn from_pixels(width: u32, height: u32, pixels: &[[u8; 3]]) -> Result<Self, RasterError> {
        Self::from_raw(width, height, pixels.iter().flatten().copied().collect())
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self, RasterError> {
        let px = width as usize * height as usize;
        Self::from_raw(width, height, rgb.repeat(px))
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl ExactSizeIterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    /// Decodes a PNG, JPEG or BMP file. Any alpha channel is dropped.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, RasterError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| {
            if source.kind() == std::io::ErrorKind::NotFound {
                RasterError::NotFound(path.to_path_buf())
            } else {
                RasterError::Io { path: path.to_path_buf(), source }
            }
        })?;
        Self::decode(&bytes).map_err(|message| RasterError::Decode { path: path.to_path_buf(), message })
    }

    /// Decodes an in-memory image, guessing the format from its magic bytes.
    pub fn decode(bytes: &[u8]) -> Result<Self, String> {
        let img = image::load_from_memory(bytes).map_err(|e| e.to_string())?;
        let rgb = img.into_rgb8();
        let (width, height) = rgb.dimensions();
        Ok(Self { width, height, data: rgb.into_raw() })
    }

    pub fn to_png(&self) -> Result<Vec<u8>, RasterError> {
        let buf = image::RgbImage::from_raw(self.width, self.height, self.data.clone())
            .expect("buffer length checked at construction");
        encode_png(DynamicImage::ImageRgb8(buf))
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), RasterError> {
        write_file(path.as_ref(), &self.to_png()?)
    }
}

/// Row-major single-channel 8-bit raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self, RasterError> {
        check_dims(width, height, width as usize * height as usize, data.len())?;
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }
}

pub(crate) fn encode_png(img: DynamicImage) -> Result<Vec<u8>, RasterError> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| RasterError::Encode(e.to_string()))?;
    Ok(out.into_inner())
}

pub(crate) fn gray_png(width: u32, height: u32, data: Vec<u8>) -> Result<Vec<u8>, RasterError> {
    let buf = image::ImageBuffer::<Luma<u8>, _>::from_raw(width, height, data)
        .expect("buffer length checked by caller");
    encode_png(DynamicImage::ImageLuma8(buf))
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// followed by a rename, so readers never observe a partial file.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), RasterError> {
    use std::io::Write;

    let io_err = |source| RasterError::Io { path: path.to_path_buf(), source };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}
