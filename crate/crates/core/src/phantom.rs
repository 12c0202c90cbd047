//! Seeded synthetic blood-smear images with exact nucleus ground truth.
//!
//! A phantom is painted back to front: a pale background, red cells drawn
//! as discs with a lighter centre, a white-cell cytoplasm ellipse and a
//! nucleus made of one to five overlapping ellipse lobes. Region boundaries
//! are blended over a short ramp to mimic optical blur, and independent
//! Gaussian noise is added per channel. The ground-truth mask is the set of
//! pixels whose centre lies inside any nucleus lobe.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::RgbImage;
use crate::threshold::BinaryMask;

pub const MAX_LOBES: usize = 5;
pub const DEFAULT_SIZE: u32 = 575;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhantomError {
    #[error("invalid phantom spec: {0}")]
    InvalidSpec(String),
}

/// Rotated ellipse in pixel coordinates; `angle` in radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub semi_major: f64,
    pub semi_minor: f64,
    pub angle: f64,
}

impl Ellipse {
    /// Coordinates of `(x, y)` in the ellipse frame, scaled to the axes.
    fn local(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.angle.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        ((dx * c + dy * s) / self.semi_major, (-dx * s + dy * c) / self.semi_minor)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (u, v) = self.local(x, y);
        u * u + v * v <= 1.0
    }

    /// First-order signed distance to the boundary, negative inside.
    fn signed_distance(&self, x: f64, y: f64) -> f64 {
        let (u, v) = self.local(x, y);
        let r = (u * u + v * v).sqrt();
        let gu = u / self.semi_major;
        let gv = v / self.semi_minor;
        let grad = (gu * gu + gv * gv).sqrt();
        if grad == 0.0 || r == 0.0 {
            return -self.semi_minor;
        }
        (r - 1.0) * r / grad
    }

    /// Axis-aligned bounding box `(x0, y0, x1, y1)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let (s, c) = self.angle.sin_cos();
        let hx = ((self.semi_major * c).powi(2) + (self.semi_minor * s).powi(2)).sqrt();
        let hy = ((self.semi_major * s).powi(2) + (self.semi_minor * c).powi(2)).sqrt();
        (self.cx - hx, self.cy - hy, self.cx + hx, self.cy + hy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disc {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
}

impl Disc {
    fn signed_distance(&self, x: f64, y: f64) -> f64 {
        ((x - self.cx).powi(2) + (y - self.cy).powi(2)).sqrt() - self.radius
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    pub background: [f64; 3],
    pub red_cell: [f64; 3],
    /// Colour at the centre of a red cell.
    pub red_cell_center: [f64; 3],
    pub cytoplasm: [f64; 3],
    pub nucleus: [f64; 3],
}

impl Default for Palette {
    fn default() -> Self {
        Self {
            background: [232.0, 222.0, 218.0],
            red_cell: [218.0, 160.0, 168.0],
            red_cell_center: [228.0, 190.0, 192.0],
            cytoplasm: [180.0, 138.0, 200.0],
            nucleus: [96.0, 52.0, 142.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub width: u32,
    pub height: u32,
    pub lobes: Vec<Ellipse>,
    pub cytoplasm: Option<Ellipse>,
    pub red_cells: Vec<Disc>,
    pub palette: Palette,
    /// Per-channel noise standard deviation in intensity levels.
    pub noise_sigma: f64,
    /// Width in pixels of the colour ramp across each boundary.
    pub edge_width: f64,
    /// Strength of the chromatin texture: the fraction by which the nucleus
    /// colour may fade toward the cytoplasm colour in lightly stained spots.
    pub chromatin: f64,
    pub seed: u64,
}

impl PhantomSpec {
    /// Draws a plausible cell layout from `seed`.
    pub fn random(seed: u64, width: u32, height: u32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (width as f64, height as f64);
        let scale = w.min(h) / DEFAULT_SIZE as f64;

        let cell_r = rng.random_range(95.0..125.0) * scale;
        let cx = w / 2.0 + rng.random_range(-0.08..0.08) * w;
        let cy = h / 2.0 + rng.random_range(-0.08..0.08) * h;
        let cytoplasm = Ellipse {
            cx,
            cy,
            semi_major: cell_r,
            semi_minor: cell_r * rng.random_range(0.85..1.0),
            angle: rng.random_range(0.0..std::f64::consts::PI),
        };

        let lobe_count = rng.random_range(1..=MAX_LOBES);
        let lobes = if lobe_count == 1 {
            let a = cell_r * rng.random_range(0.55..0.7);
            vec![Ellipse {
                cx: cx + rng.random_range(-0.1..0.1) * cell_r,
                cy: cy + rng.random_range(-0.1..0.1) * cell_r,
                semi_major: a,
                semi_minor: a * rng.random_range(0.7..0.95),
                angle: rng.random_range(0.0..std::f64::consts::PI),
            }]
        } else {
            // lobes strung along an arc, neighbours overlapping
            let arc_r = cell_r * rng.random_range(0.35..0.45);
            let start = rng.random_range(0.0..std::f64::consts::TAU);
            let sweep = rng.random_range(2.2..3.6);
            let lobe_a = cell_r * rng.random_range(0.3..0.38);
            (0..lobe_count)
                .map(|i| {
                    let t = start + sweep * i as f64 / (lobe_count - 1) as f64;
                    Ellipse {
                        cx: cx + arc_r * t.cos(),
                        cy: cy + arc_r * t.sin(),
                        semi_major: lobe_a,
                        semi_minor: lobe_a * rng.random_range(0.7..0.9),
                        angle: t + std::f64::consts::FRAC_PI_2 + rng.random_range(-0.3..0.3),
                    }
                })
                .collect()
        };

        let mut red_cells: Vec<Disc> = Vec::new();
        for _ in 0..200 {
            if red_cells.len() >= 14 {
                break;
            }
            let radius = rng.random_range(48.0..60.0) * scale;
            let disc = Disc { cx: rng.random_range(0.0..w), cy: rng.random_range(0.0..h), radius };
            let clear_of_cell = ((disc.cx - cx).powi(2) + (disc.cy - cy).powi(2)).sqrt() > radius + cell_r + 4.0 * scale;
            let clear_of_others = red_cells.iter().all(|o| ((disc.cx - o.cx).powi(2) + (disc.cy - o.cy).powi(2)).sqrt() > 0.8 * (radius + o.radius));
            if clear_of_cell && clear_of_others {
                red_cells.push(disc);
            }
        }

        let mut jitter = |base: [f64; 3], amount: f64| base.map(|v| v + rng.random_range(-amount..amount));
        let base = Palette::default();
        let background = jitter(base.background, 6.0);
        let red_cell = jitter(base.red_cell, 8.0);
        let red_cell_center = jitter(base.red_cell_center, 8.0);
        let cytoplasm_color = jitter(base.cytoplasm, 8.0);
        let nucleus = jitter(base.nucleus, 10.0);
        // cytoplasm staining ranges from faint to strong across cell types
        let stain = rng.random_range(0.3..0.8);
        let palette = Palette { background, red_cell, red_cell_center, cytoplasm: mix(background, cytoplasm_color, stain), nucleus };

        Self {
            width,
            height,
            lobes,
            cytoplasm: Some(cytoplasm),
            red_cells,
            palette,
            noise_sigma: 4.0,
            edge_width: 2.0,
            chromatin: 0.55,
            seed,
        }
    }

    fn validate(&self) -> Result<(), PhantomError> {
        let invalid = |msg: String| Err(PhantomError::InvalidSpec(msg));
        if self.width == 0 || self.height == 0 {
            return invalid(format!("frame {}x{} is empty", self.width, self.height));
        }
        if self.lobes.is_empty() || self.lobes.len() > MAX_LOBES {
            return invalid(format!("nucleus needs 1 to {MAX_LOBES} lobes, got {}", self.lobes.len()));
        }
        for (i, lobe) in self.lobes.iter().enumerate() {
            if !(lobe.semi_major > 0.0 && lobe.semi_minor > 0.0) {
                return invalid(format!("lobe {i} has non-positive axes"));
            }
            let (x0, y0, x1, y1) = lobe.bounds();
            if x0 < 0.0 || y0 < 0.0 || x1 > self.width as f64 || y1 > self.height as f64 {
                return invalid(format!("lobe {i} exceeds the {}x{} frame", self.width, self.height));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.edge_width > 0.0 && (0.0..=1.0).contains(&self.chromatin)) {
            return invalid("need noise sigma >= 0, edge width > 0 and chromatin in [0, 1]".into());
        }
        Ok(())
    }
}

/// Fraction of a pixel covered by a shape at signed distance `d`.
fn coverage(d: f64, edge_width: f64) -> f64 {
    (0.5 - d / edge_width).clamp(0.0, 1.0)
}

fn mix(under: [f64; 3], over: [f64; 3], t: f64) -> [f64; 3] {
    [0, 1, 2].map(|c| under[c] + (over[c] - under[c]) * t)
}

/// Renders the phantom and its exact nucleus mask. Identical specs give
/// bit-identical output.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<(RgbImage, BinaryMask), PhantomError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
    let noise = Normal::new(0.0, spec.noise_sigma).expect("sigma validated");
    let pal = &spec.palette;
    // three plane waves with 14 to 32 px wavelengths form the chromatin field
    let waves: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            let k = std::f64::consts::TAU / rng.random_range(14.0..32.0);
            let dir: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            (k * dir.cos(), k * dir.sin(), rng.random_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    let chromatin = |x: f64, y: f64| {
        let s: f64 = waves.iter().map(|(kx, ky, phase)| (kx * x + ky * y + phase).sin()).sum();
        spec.chromatin * (0.5 + s / 6.0)
    };

    let n = spec.width as usize * spec.height as usize;
    let mut data = Vec::with_capacity(n * 3);
    let mut truth = Vec::with_capacity(n);

    for y in 0..spec.height {
        for x in 0..spec.width {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut color = pal.background;

            for rc in &spec.red_cells {
                let d = rc.signed_distance(px, py);
                let cover = coverage(d, spec.edge_width);
                if cover > 0.0 {
                    // lighter centre, fading in over the inner half of the disc
                    let depth = (-d / rc.radius).clamp(0.0, 1.0);
                    let pallor = ((depth - 0.5) * 2.0).clamp(0.0, 1.0);
                    let body = mix(pal.red_cell, pal.red_cell_center, pallor);
                    color = mix(color, body, cover);
                }
            }

            if let Some(cyto) = &spec.cytoplasm {
                color = mix(color, pal.cytoplasm, coverage(cyto.signed_distance(px, py), spec.edge_width));
            }

            let nucleus_d = spec.lobes.iter().map(|l| l.signed_distance(px, py)).fold(f64::INFINITY, f64::min);
            let nucleus = mix(pal.nucleus, pal.cytoplasm, chromatin(px, py));
            color = mix(color, nucleus, coverage(nucleus_d, spec.edge_width));
            truth.push(spec.lobes.iter().any(|l| l.contains(px, py)));

            for c in color {
                let v = if spec.noise_sigma > 0.0 { c + noise.sample(&mut rng) } else { c };
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }

    if !truth.iter().any(|&b| b) {
        return Err(PhantomError::InvalidSpec("nucleus covers no pixel centre".into()));
    }
    let image = RgbImage::from_raw(spec.width, spec.height, data).expect("sized to frame");
    let mask = BinaryMask::new(spec.width, spec.height, truth).expect("sized to frame");
    Ok((image, mask))
}

/// Specs for a suite of `count` phantoms derived from one master seed.
pub fn suite_specs(count: usize, seed: u64, size: u32) -> Vec<PhantomSpec> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| PhantomSpec::random(master.random(), size, size)).collect()
}
