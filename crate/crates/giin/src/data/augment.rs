//! Training-time image augmentation.
//!
//! Each call applies exactly one transform, chosen uniformly from eight
//! options. Augmentation runs on the raw image, before resizing and
//! normalization, so the right-angle rotations may swap width and height.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::image::{resize_bilinear, Image, CHANNELS};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Augmentation {
    Identity,
    FlipHorizontal,
    FlipVertical,
    Rotate90,
    Rotate180,
    Rotate270,
    /// Crop a 0.9-scale window at a random offset, resize back.
    CropResize,
    /// Additive Gaussian noise with sigma drawn from [0, 0.2 * 255).
    GaussianNoise,
}

pub const ALL_AUGMENTATIONS: [Augmentation; 8] = [
    Augmentation::Identity,
    Augmentation::FlipHorizontal,
    Augmentation::FlipVertical,
    Augmentation::Rotate90,
    Augmentation::Rotate180,
    Augmentation::Rotate270,
    Augmentation::CropResize,
    Augmentation::GaussianNoise,
];

pub const CROP_FRACTION: f64 = 0.9;
pub const NOISE_SIGMA_MAX: f64 = 0.2 * 255.0;

/// Pick one transform uniformly and apply it. Parameter draws (crop offset,
/// noise sigma) come from the same stream, so a given RNG state fixes the
/// result completely.
pub fn augment(img: &Image, rng: &mut impl Rng) -> Result<Image> {
    let choice = ALL_AUGMENTATIONS[rng.random_range(0..ALL_AUGMENTATIONS.len())];
    apply(img, choice, rng)
}

pub fn apply(img: &Image, aug: Augmentation, rng: &mut impl Rng) -> Result<Image> {
    Ok(match aug {
        Augmentation::Identity => img.clone(),
        Augmentation::FlipHorizontal => flip_horizontal(img),
        Augmentation::FlipVertical => flip_vertical(img),
        Augmentation::Rotate90 => rotate90(img),
        Augmentation::Rotate180 => rotate180(img),
        Augmentation::Rotate270 => rotate270(img),
        Augmentation::CropResize => {
            let crop_w = ((img.width() as f64 * CROP_FRACTION).round() as usize).max(1);
            let crop_h = ((img.height() as f64 * CROP_FRACTION).round() as usize).max(1);
            let ox = rng.random_range(0..=img.width() - crop_w);
            let oy = rng.random_range(0..=img.height() - crop_h);
            crop_resize(img, ox, oy, crop_w, crop_h)?
        }
        Augmentation::GaussianNoise => {
            let sigma = rng.random_range(0.0..NOISE_SIGMA_MAX);
            gaussian_noise(img, sigma, rng)
        }
    })
}

pub fn flip_horizontal(img: &Image) -> Image {
    let (w, h) = (img.width(), img.height());
    let mut out = Image::new(w, h).expect("same dims");
    for c in 0..CHANNELS {
        for y in 0..h {
            for x in 0..w {
                out.set(c, y, x, img.get(c, y, w - 1 - x));
            }
        }
    }
    out
}

pub fn flip_vertical(img: &Image) -> Image {
    let (w, h) = (img.width(), img.height());
    let mut out = Image::new(w, h).expect("same dims");
    for c in 0..CHANNELS {
        for y in 0..h {
            for x in 0..w {
                out.set(c, y, x, img.get(c, h - 1 - y, x));
            }
        }
    }
    out
}

/// Quarter turn clockwise. Output is `height x width`.
pub fn rotate90(img: &Image) -> Image {
    let (w, h) = (img.width(), img.height());
    let mut out = Image::new(h, w).expect("swapped dims");
    for c in 0..CHANNELS {
        for y in 0..w {
            for x in 0..h {
                out.set(c, y, x, img.get(c, h - 1 - x, y));
            }
        }
    }
    out
}

pub fn rotate180(img: &Image) -> Image {
    flip_horizontal(&flip_vertical(img))
}

/// Quarter turn counterclockwise. Output is `height x width`.
pub fn rotate270(img: &Image) -> Image {
    let (w, h) = (img.width(), img.height());
    let mut out = Image::new(h, w).expect("swapped dims");
    for c in 0..CHANNELS {
        for y in 0..w {
            for x in 0..h {
                out.set(c, y, x, img.get(c, x, w - 1 - y));
            }
        }
    }
    out
}

pub fn crop_resize(img: &Image, ox: usize, oy: usize, crop_w: usize, crop_h: usize) -> Result<Image> {
    let mut crop = Image::new(crop_w, crop_h)?;
    for c in 0..CHANNELS {
        for y in 0..crop_h {
            for x in 0..crop_w {
                crop.set(c, y, x, img.get(c, oy + y, ox + x));
            }
        }
    }
    resize_bilinear(&crop, img.width(), img.height())
}

/// Additive zero-mean Gaussian noise, clamped back to the raw sample range.
pub fn gaussian_noise(img: &Image, sigma: f64, rng: &mut impl Rng) -> Image {
    let mut out = img.clone();
    if sigma == 0.0 {
        return out;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma checked nonnegative");
    for v in out.data_mut() {
        *v = (*v + normal.sample(rng)).clamp(0.0, 255.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn sample_image() -> Image {
        let mut img = Image::new(6, 4).unwrap();
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            *v = (i * 37 % 256) as f64;
        }
        img
    }

    #[test]
    fn flips_are_involutions() {
        let img = sample_image();
        assert_eq!(flip_horizontal(&flip_horizontal(&img)), img);
        assert_eq!(flip_vertical(&flip_vertical(&img)), img);
    }

    #[test]
    fn four_quarter_turns_are_identity() {
        let img = sample_image();
        let once = rotate90(&img);
        assert_eq!(once.width(), img.height());
        assert_eq!(once.height(), img.width());
        let back = rotate90(&rotate90(&rotate90(&once)));
        assert_eq!(back, img);
    }

    #[test]
    fn rotate270_undoes_rotate90() {
        let img = sample_image();
        assert_eq!(rotate270(&rotate90(&img)), img);
        assert_eq!(rotate90(&rotate270(&img)), img);
    }

    #[test]
    fn rotate180_matches_double_quarter_turn() {
        let img = sample_image();
        assert_eq!(rotate180(&img), rotate90(&rotate90(&img)));
    }

    #[test]
    fn crop_resize_keeps_dimensions_and_constants() {
        let mut img = Image::new(10, 8).unwrap();
        img.data_mut().fill(99.0);
        let out = crop_resize(&img, 1, 0, 9, 7).unwrap();
        assert_eq!(out.width(), 10);
        assert_eq!(out.height(), 8);
        assert!(out.data().iter().all(|&v| (v - 99.0).abs() < 1e-12));
    }

    #[test]
    fn zero_sigma_noise_is_identity() {
        let img = sample_image();
        let mut rng = stream(3, &["noise"]);
        assert_eq!(gaussian_noise(&img, 0.0, &mut rng), img);
    }

    #[test]
    fn noise_stays_in_sample_range() {
        let img = sample_image();
        let mut rng = stream(3, &["noise"]);
        let out = gaussian_noise(&img, NOISE_SIGMA_MAX, &mut rng);
        assert!(out.data().iter().all(|&v| (0.0..=255.0).contains(&v)));
    }

    #[test]
    fn augment_is_deterministic_per_stream() {
        let img = sample_image();
        let a = augment(&img, &mut stream(11, &["aug", "ex-3", "epoch-2"])).unwrap();
        let b = augment(&img, &mut stream(11, &["aug", "ex-3", "epoch-2"])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn augment_draws_every_variant() {
        let img = sample_image();
        let mut rng = stream(5, &["aug-coverage"]);
        let mut seen_identity = false;
        let mut seen_swap = false;
        let mut seen_same_dims_changed = false;
        for _ in 0..512 {
            let out = augment(&img, &mut rng).unwrap();
            if out == img {
                seen_identity = true;
            } else if out.width() != img.width() {
                seen_swap = true;
            } else {
                seen_same_dims_changed = true;
            }
        }
        assert!(seen_identity && seen_swap && seen_same_dims_changed);
    }
}
