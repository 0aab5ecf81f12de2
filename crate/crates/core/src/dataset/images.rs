use std::path::Path;

use image::imageops::{self, FilterType};
use image::RgbImage;
use ndarray::{Array4, ArrayViewMut3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ndarray::parallel::prelude::*;

use super::index::SampleRecord;
use crate::error::{Error, Result};

pub const DEFAULT_INPUT_SIZE: usize = 299;

/// Decoded images in NHWC layout with intensities in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBatch {
    pub pixels: Array4<f32>,
    pub labels: Vec<usize>,
}

impl ImageBatch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_size(&self) -> usize {
        self.pixels.shape()[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadOptions {
    pub input_size: usize,
    /// Random flips, seeded per sample from `seed` and the sample id.
    pub augment: bool,
    pub seed: u64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            input_size: DEFAULT_INPUT_SIZE,
            augment: false,
            seed: 0,
        }
    }
}

pub fn decode_rgb(path: &Path) -> Result<RgbImage> {
    image::open(path)
        .map(|img| img.to_rgb8())
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

fn sample_seed(seed: u64, id: &str) -> u64 {
    // FNV-1a over the id, mixed with the caller's seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Bilinear resize to `size x size`, then `x / 127.5 - 1`.
pub fn write_normalized(img: &RgbImage, size: usize, mut out: ArrayViewMut3<f32>) {
    let size32 = size as u32;
    let resized;
    let img = if img.width() == size32 && img.height() == size32 {
        img
    } else {
        resized = imageops::resize(img, size32, size32, FilterType::Triangle);
        &resized
    };
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            out[[y as usize, x as usize, c]] = f32::from(px[c]) / 127.5 - 1.0;
        }
    }
}

/// Decodes `records` in parallel into one batch. The first undecodable file
/// (in record order) aborts the whole batch.
pub fn load_batch(records: &[SampleRecord], opts: &LoadOptions) -> Result<ImageBatch> {
    if opts.input_size == 0 {
        return Err(Error::invalid("input size must be positive"));
    }
    let s = opts.input_size;
    let mut pixels = Array4::<f32>::zeros((records.len(), s, s, 3));
    let results: Vec<Result<()>> = pixels
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(records.par_iter())
        .map(|(mut slot, rec)| {
            let mut img = decode_rgb(&rec.path)?;
            if opts.augment {
                let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(opts.seed, &rec.id));
                if rng.random_bool(0.5) {
                    imageops::flip_horizontal_in_place(&mut img);
                }
                if rng.random_bool(0.5) {
                    imageops::flip_vertical_in_place(&mut img);
                }
            }
            write_normalized(&img, s, slot.view_mut());
            Ok(())
        })
        .collect();
    results.into_iter().collect::<Result<()>>()?;
    Ok(ImageBatch {
        pixels,
        labels: records.iter().map(|r| r.label).collect(),
    })
}
