//! Image decoding and raw map persistence.
//!
//! Maps are written as raw little-endian `f32` values in row-major order,
//! with a sidecar `{path}.meta` text file holding `width height min max`.
//! The format is trivially readable from any language, which makes it the
//! exchange format for golden-file comparisons.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageFormat, ImageReader};

use crate::error::{Error, Result};

/// Smallest image side the pipeline accepts.
pub const MIN_IMAGE_SIDE: usize = 32;

/// 8-bit RGB image, row-major, three interleaved channels per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<[u8; 3]>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::SizeMismatch(format!(
                "{} pixels for a {width}x{height} image",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Gray image with all three channels equal to `gray`.
    pub fn from_gray(gray: &ScalarMap) -> Self {
        Self::from_fn(gray.width(), gray.height(), |x, y| {
            let v = gray.get(x, y).round().clamp(0.0, 255.0) as u8;
            [v, v, v]
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        self.data[y * self.width + x]
    }

    /// One channel as a real-valued map in the `[0, 255]` range.
    pub fn channel(&self, c: usize) -> ScalarMap {
        ScalarMap {
            width: self.width,
            height: self.height,
            values: self.data.iter().map(|p| f64::from(p[c])).collect(),
        }
    }

    /// Fails with [`Error::ImageTooSmall`] below the pipeline minimum.
    pub fn check_min_size(&self) -> Result<()> {
        if self.width < MIN_IMAGE_SIDE || self.height < MIN_IMAGE_SIDE {
            return Err(Error::ImageTooSmall {
                width: self.width,
                height: self.height,
                min: MIN_IMAGE_SIDE,
            });
        }
        Ok(())
    }

    /// Writes the image as a binary PPM (P6).
    pub fn save_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut bytes = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        bytes.extend(self.data.iter().flatten());
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

/// Row-major grid of finite real values.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ScalarMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::SizeMismatch(format!(
                "{} values for a {width}x{height} map",
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            values,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.values[y * self.width + x] = v;
    }

    /// Value at `(x, y)` with coordinates clamped to the map (edge replication).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.values[y * self.width + x]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_size(&self, other: &ScalarMap) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarMap {
        ScalarMap {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `(min, max)`; `(0, 0)` for an empty map.
    pub fn min_max(&self) -> (f64, f64) {
        if self.values.is_empty() {
            return (0.0, 0.0);
        }
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Decodes an image without the minimum-size gate.
///
/// Grayscale inputs are replicated into three channels and alpha is dropped.
/// Only 8-bit PNG, BMP and PNM inputs are accepted.
pub fn read_image(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    match reader.format() {
        Some(ImageFormat::Png | ImageFormat::Bmp | ImageFormat::Pnm) => {}
        Some(other) => return Err(Error::UnsupportedFormat(format!("{other:?} ({})", path.display()))),
        None => {
            return Err(Error::UnsupportedFormat(format!(
                "unrecognized container ({})",
                path.display()
            )))
        }
    }
    let decoded = reader.decode().map_err(|e| match e {
        image::ImageError::Unsupported(u) => Error::UnsupportedFormat(u.to_string()),
        other => Error::CorruptFile {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })?;
    let rgb = match decoded {
        DynamicImage::ImageLuma8(_)
        | DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageRgb8(_)
        | DynamicImage::ImageRgba8(_) => decoded.to_rgb8(),
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "{:?} pixels in {}; only 8-bit gray or RGB is supported",
                other.color(),
                path.display()
            )))
        }
    };
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let data = rgb.pixels().map(|p| p.0).collect();
    RgbImage::new(w, h, data)
}

/// Decodes an image and rejects anything smaller than [`MIN_IMAGE_SIDE`].
pub fn load_image(path: impl AsRef<Path>) -> Result<RgbImage> {
    let img = read_image(path)?;
    img.check_min_size()?;
    Ok(img)
}

fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Writes `map` as raw little-endian `f32` plus a `{path}.meta` sidecar.
///
/// Values are narrowed to `f32`; maps whose values are already
/// `f32`-representable round-trip bit-exactly through [`load_map`].
pub fn dump_map(map: &ScalarMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let narrowed: Vec<f32> = map.values().iter().map(|&v| v as f32).collect();
    let mut payload = Vec::with_capacity(narrowed.len() * 4);
    for v in &narrowed {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    let (lo, hi) = narrowed
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let (lo, hi) = if narrowed.is_empty() { (0.0, 0.0) } else { (lo, hi) };

    fs::write(path, &payload).map_err(|e| Error::io(path, e))?;
    let meta = meta_path(path);
    let mut f = fs::File::create(&meta).map_err(|e| Error::io(&meta, e))?;
    writeln!(f, "{} {} {} {}", map.width(), map.height(), lo, hi).map_err(|e| Error::io(&meta, e))
}

/// Inverse of [`dump_map`].
pub fn load_map(path: impl AsRef<Path>) -> Result<ScalarMap> {
    let path = path.as_ref();
    let meta = meta_path(path);
    let text = fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
    let mut fields = text.split_whitespace();
    let mut dim = |name: &str| -> Result<usize> {
        fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::SizeMismatch(format!("{}: missing or invalid {name}", meta.display())))
    };
    let width = dim("width")?;
    let height = dim("height")?;

    let payload = fs::read(path).map_err(|e| Error::io(path, e))?;
    if payload.len() != width * height * 4 {
        return Err(Error::SizeMismatch(format!(
            "{}: {} payload bytes, meta declares {width}x{height}",
            path.display(),
            payload.len()
        )));
    }
    let values = payload
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
        .collect();
    ScalarMap::new(width, height, values)
}
