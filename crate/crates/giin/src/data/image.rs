//! RGB images: binary PPM I/O, align-corners bilinear resampling, and
//! per-channel normalization statistics.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;

/// RGB image with channel-planar f64 samples on the raw 0..=255 scale.
/// Layout is `[channel][row][column]`, matching convolution input tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Domain(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        Ok(Image {
            width,
            height,
            data: vec![0.0; CHANNELS * width * height],
        })
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != CHANNELS * width * height {
            return Err(Error::shape(
                "image data",
                &[CHANNELS, height, width],
                &[data.len()],
            ));
        }
        if width == 0 || height == 0 {
            return Err(Error::Domain("empty image".into()));
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Tensor view `[3, height, width]`, consuming the image.
    pub fn into_tensor(self) -> Tensor {
        Tensor::from_vec(&[CHANNELS, self.height, self.width], self.data)
            .expect("image data length is consistent by construction")
    }
}

/// Read a binary (P6) PPM with 8-bit samples.
pub fn read_ppm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_ppm(&bytes).map_err(|m| Error::Format(format!("{}: {m}", path.display())))
}

fn parse_ppm(bytes: &[u8]) -> std::result::Result<Image, String> {
    let mut pos = 0;
    let token = |pos: &mut usize| -> std::result::Result<String, String> {
        // Whitespace-separated header tokens; '#' starts a comment to EOL.
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err("truncated header".into());
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };

    if token(&mut pos)? != "P6" {
        return Err("not a binary PPM (expected magic P6)".into());
    }
    let width: usize = token(&mut pos)?.parse().map_err(|_| "bad width")?;
    let height: usize = token(&mut pos)?.parse().map_err(|_| "bad height")?;
    let maxval: usize = token(&mut pos)?.parse().map_err(|_| "bad maxval")?;
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval}, expected 255"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let need = width * height * CHANNELS;
    let raster = bytes
        .get(pos..pos + need)
        .ok_or_else(|| format!("raster truncated: need {need} bytes"))?;

    let mut img = Image::new(width, height).map_err(|e| e.to_string())?;
    for y in 0..height {
        for x in 0..width {
            for c in 0..CHANNELS {
                img.set(c, y, x, raster[(y * width + x) * CHANNELS + c] as f64);
            }
        }
    }
    Ok(img)
}

/// Write a binary (P6) PPM, clamping and rounding samples to 8 bits.
pub fn write_ppm(path: &Path, img: &Image) -> Result<()> {
    let mut out = Vec::with_capacity(32 + img.width * img.height * CHANNELS);
    write!(out, "P6\n{} {}\n255\n", img.width, img.height).expect("vec write");
    for y in 0..img.height {
        for x in 0..img.width {
            for c in 0..CHANNELS {
                out.push(img.get(c, y, x).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

/// Bilinear resample with corner alignment: output corners sample input
/// corners exactly, interior points interpolate at
/// `src = dst * (in - 1) / (out - 1)`.
pub fn resize_bilinear(img: &Image, out_w: usize, out_h: usize) -> Result<Image> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::Domain("resize target must be positive".into()));
    }
    let mut out = Image::new(out_w, out_h)?;
    let sx = if out_w > 1 {
        (img.width - 1) as f64 / (out_w - 1) as f64
    } else {
        0.0
    };
    let sy = if out_h > 1 {
        (img.height - 1) as f64 / (out_h - 1) as f64
    } else {
        0.0
    };
    for y in 0..out_h {
        let fy = y as f64 * sy;
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(img.height - 1);
        let wy = fy - y0 as f64;
        for x in 0..out_w {
            let fx = x as f64 * sx;
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(img.width - 1);
            let wx = fx - x0 as f64;
            for c in 0..CHANNELS {
                let top = img.get(c, y0, x0) * (1.0 - wx) + img.get(c, y0, x1) * wx;
                let bot = img.get(c, y1, x0) * (1.0 - wx) + img.get(c, y1, x1) * wx;
                out.set(c, y, x, top * (1.0 - wy) + bot * wy);
            }
        }
    }
    Ok(out)
}

/// Per-channel mean and standard deviation of one modality's training set.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub mean: [f64; CHANNELS],
    pub std: [f64; CHANNELS],
}

impl ChannelStats {
    /// Population statistics over every pixel of every image.
    pub fn from_images<'a>(images: impl Iterator<Item = &'a Image> + Clone) -> Result<Self> {
        let mut count = 0usize;
        let mut mean = [0.0; CHANNELS];
        for img in images.clone() {
            let plane = img.width * img.height;
            for c in 0..CHANNELS {
                mean[c] += img.data[c * plane..(c + 1) * plane].iter().sum::<f64>();
            }
            count += plane;
        }
        if count == 0 {
            return Err(Error::Domain("statistics over zero pixels".into()));
        }
        for m in &mut mean {
            *m /= count as f64;
        }
        let mut var = [0.0; CHANNELS];
        for img in images {
            let plane = img.width * img.height;
            for c in 0..CHANNELS {
                var[c] += img.data[c * plane..(c + 1) * plane]
                    .iter()
                    .map(|v| (v - mean[c]) * (v - mean[c]))
                    .sum::<f64>();
            }
        }
        let mut std = [0.0; CHANNELS];
        for c in 0..CHANNELS {
            std[c] = (var[c] / count as f64).sqrt();
            if std[c] < 1e-12 {
                return Err(Error::Invariant(format!(
                    "channel {c} has zero variance; normalization undefined"
                )));
            }
        }
        Ok(ChannelStats { mean, std })
    }

    /// Standardize in place: subtract the channel mean, divide by std.
    pub fn normalize(&self, img: &mut Image) {
        let plane = img.width * img.height;
        for c in 0..CHANNELS {
            for v in &mut img.data[c * plane..(c + 1) * plane] {
                *v = (*v - self.mean[c]) / self.std[c];
            }
        }
    }
}
