//! Procedurally generated class-folder trees for desk-scale runs.
//!
//! Each class gets a fixed colour code and stripe texture
//! inside a central disc; per-image position jitter and pixel noise come
//! from the seed. The class is recoverable from mean colour alone.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::taxonomy::ClassTaxonomy;
use crate::error::{Error, Result};

/// Images to generate per class code.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FixtureSpec {
    pub counts: BTreeMap<String, usize>,
}

impl FixtureSpec {
    pub fn uniform<'a>(codes: impl IntoIterator<Item = &'a str>, per_class: usize) -> Self {
        Self {
            counts: codes.into_iter().map(|c| (c.to_string(), per_class)).collect(),
        }
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

/// Class colour: the base-3 digits of the class index pick one of three
/// intensity levels per channel, so any two classes differ by at least 100
/// in some channel.
fn class_color(class: usize) -> [f64; 3] {
    const LEVELS: [f64; 3] = [35.0, 135.0, 235.0];
    [LEVELS[class % 3], LEVELS[(class / 3) % 3], LEVELS[(class / 9) % 3]]
}

fn image_seed(seed: u64, class: usize, n: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (class as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9)
        ^ (n as u64).wrapping_mul(0x94d0_49bb_1331_11eb)
}

/// Renders one synthetic cell image of class `class`.
pub fn render_cell(class: usize, size: u32, rng: &mut impl Rng) -> RgbImage {
    let color = class_color(class % 27);
    let period = 3.0 + (class % 4) as f64 * 2.0;
    let angle = std::f64::consts::PI * (class / 4) as f64 / 6.0;
    let (dir_x, dir_y) = (angle.cos(), angle.sin());
    let s = f64::from(size);
    let cx = s * (0.5 + rng.random_range(-0.05..0.05));
    let cy = s * (0.5 + rng.random_range(-0.05..0.05));
    let radius = s * rng.random_range(0.40..0.46);
    RgbImage::from_fn(size, size, |x, y| {
        let (fx, fy) = (f64::from(x) + 0.5, f64::from(y) + 0.5);
        let inside = (fx - cx).powi(2) + (fy - cy).powi(2) <= radius * radius;
        let base = if inside {
            let phase = (fx * dir_x + fy * dir_y) / period;
            let stripe = 0.85 + 0.15 * (2.0 * std::f64::consts::PI * phase).sin();
            [color[0] * stripe, color[1] * stripe, color[2] * stripe]
        } else {
            [232.0, 218.0, 226.0]
        };
        let mut px = [0u8; 3];
        for (c, out) in px.iter_mut().enumerate() {
            let noisy = base[c] + rng.random_range(-12.0..12.0);
            *out = noisy.round().clamp(0.0, 255.0) as u8;
        }
        Rgb(px)
    })
}

/// Writes `<out>/<CODE>/<CODE>_<nnnn>.png` for every requested image.
/// Output bytes depend only on (spec, image_size, seed).
pub fn generate_synthetic_fixture(
    spec: &FixtureSpec,
    image_size: u32,
    seed: u64,
    out: &Path,
    taxonomy: &ClassTaxonomy,
) -> Result<PathBuf> {
    if image_size == 0 {
        return Err(Error::invalid("fixture image size must be positive"));
    }
    let mut classes = Vec::with_capacity(spec.counts.len());
    for (code, &count) in &spec.counts {
        let label = taxonomy
            .index_of(code)
            .map_err(|_| Error::invalid(format!("fixture class `{code}` is not in the taxonomy")))?;
        classes.push((code, label, count));
    }
    for (code, label, count) in classes {
        let dir = out.join(code);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for n in 0..count {
            let mut rng = ChaCha8Rng::seed_from_u64(image_seed(seed, label, n));
            let img = render_cell(label, image_size, &mut rng);
            let path = dir.join(format!("{code}_{n:04}.png"));
            img.save(&path).map_err(|e| match e {
                image::ImageError::IoError(io) => Error::io(&path, io),
                other => Error::Image {
                    path: path.clone(),
                    message: other.to_string(),
                },
            })?;
        }
    }
    Ok(out.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::scan_dataset;

    #[test]
    fn round_trip_through_scan() {
        let dir = tempfile::tempdir().unwrap();
        let t = ClassTaxonomy::bone_marrow();
        let spec = FixtureSpec::uniform(["BAS", "BLA"], 10);
        generate_synthetic_fixture(&spec, 24, 1, dir.path(), &t).unwrap();
        let counts = scan_dataset(dir.path(), &t).unwrap().index.class_counts_by_code(&t).unwrap();
        assert_eq!(counts.len(), 2);
        assert_eq!(counts["BAS"], 10);
        assert_eq!(counts["BLA"], 10);
    }

    #[test]
    fn all_classes() {
        let dir = tempfile::tempdir().unwrap();
        let t = ClassTaxonomy::bone_marrow();
        let spec = FixtureSpec::uniform(t.codes(), 10);
        generate_synthetic_fixture(&spec, 8, 0, dir.path(), &t).unwrap();
        let files = walkdir::WalkDir::new(dir.path())
            .into_iter()
            .filter(|e| e.as_ref().unwrap().file_type().is_file())
            .count();
        assert_eq!(files, 210);
    }

    #[test]
    fn byte_identical_per_seed() {
        let t = ClassTaxonomy::bone_marrow();
        let spec = FixtureSpec::uniform(["EOS"], 3);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate_synthetic_fixture(&spec, 32, 77, a.path(), &t).unwrap();
        generate_synthetic_fixture(&spec, 32, 77, b.path(), &t).unwrap();
        for n in 0..3 {
            let name = format!("EOS/EOS_{n:04}.png");
            assert_eq!(
                std::fs::read(a.path().join(&name)).unwrap(),
                std::fs::read(b.path().join(&name)).unwrap()
            );
        }
    }

    #[test]
    fn rejects_unknown_code() {
        let dir = tempfile::tempdir().unwrap();
        let spec = FixtureSpec::uniform(["ZZZ"], 1);
        let r = generate_synthetic_fixture(&spec, 8, 0, dir.path(), &ClassTaxonomy::bone_marrow());
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
        assert!(!dir.path().join("ZZZ").exists());
    }
}
