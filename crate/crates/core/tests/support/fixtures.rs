#![allow(dead_code)]

use std::path::Path;

use nucleus_core::phantom::{generate_phantom, PhantomSpec};
use nucleus_core::{BinaryMask, RgbImage};

pub const SMALL: u32 = 96;

pub fn small_phantom(seed: u64) -> (RgbImage, BinaryMask) {
    generate_phantom(&PhantomSpec::random(seed, SMALL, SMALL)).expect("valid phantom")
}

/// Writes `count` small phantoms as `cell_<i>.png` and returns their names.
pub fn phantom_folder(dir: &Path, count: usize, seed: u64) -> Vec<String> {
    (0..count)
        .map(|i| {
            let name = format!("cell_{i}.png");
            small_phantom(seed + i as u64).0.save_png(dir.join(&name)).unwrap();
            name
        })
        .collect()
}

pub fn black_image(path: &Path) {
    RgbImage::filled(SMALL, SMALL, [0, 0, 0]).unwrap().save_png(path).unwrap();
}
