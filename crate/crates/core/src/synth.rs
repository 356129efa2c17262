//! Deterministic synthetic images and distortions for tests, examples and
//! desk-scale benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::imageio::{RgbImage, ScalarMap};
use crate::prefilter::gaussian_blur;

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn from_planes(planes: &[ScalarMap; 3]) -> RgbImage {
    let (w, h) = (planes[0].width(), planes[0].height());
    RgbImage::from_fn(w, h, |x, y| std::array::from_fn(|c| to_u8(planes[c].get(x, y))))
}

fn planes(img: &RgbImage) -> [ScalarMap; 3] {
    std::array::from_fn(|c| img.channel(c))
}

/// A "dead leaves" texture: overlapping coloured discs of random size over a
/// faint sinusoidal background, with a fine grain over everything so that no
/// region is perfectly flat. Rich in blob-like structure at many scales.
pub fn textured_image(width: usize, height: usize, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fx = rng.gen_range(0.02..0.08);
    let fy = rng.gen_range(0.02..0.08);
    let mut canvas: Vec<[f64; 3]> = (0..width * height)
        .map(|i| {
            let (x, y) = ((i % width) as f64, (i / width) as f64);
            let v = 128.0 + 40.0 * (fx * x).sin() * (fy * y).cos();
            [v, v, v]
        })
        .collect();

    let area = (width * height) as f64;
    let discs = (area / 90.0) as usize;
    let r_max = (width.min(height) as f64 / 6.0).max(4.0);
    for _ in 0..discs {
        let cx = rng.gen_range(0.0..width as f64);
        let cy = rng.gen_range(0.0..height as f64);
        // Roughly scale-invariant radius distribution.
        let r = 2.0 * (r_max / 2.0).powf(rng.gen::<f64>());
        let colour: [f64; 3] = std::array::from_fn(|_| rng.gen_range(10.0..245.0));
        let (x0, x1) = ((cx - r).floor().max(0.0) as usize, ((cx + r).ceil() as usize).min(width));
        let (y0, y1) = ((cy - r).floor().max(0.0) as usize, ((cy + r).ceil() as usize).min(height));
        for y in y0..y1 {
            for x in x0..x1 {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                if dx * dx + dy * dy <= r * r {
                    canvas[y * width + x] = colour;
                }
            }
        }
    }
    let grain = Normal::new(0.0, GRAIN_SIGMA).expect("finite sigma");
    let grain = ScalarMap::from_fn(width, height, |_, _| grain.sample(&mut rng));
    let grain = gaussian_blur(&grain, 1.0);
    RgbImage::from_fn(width, height, |x, y| canvas[y * width + x].map(|v| to_u8(v + grain.get(x, y))))
}

/// Amplitude of the grain before its blur, in grey levels.
const GRAIN_SIGMA: f64 = 12.0;

/// Gaussian blur of each channel with replicate borders.
pub fn blur(img: &RgbImage, sigma: f64) -> RgbImage {
    let p = planes(img);
    from_planes(&p.map(|m| gaussian_blur(&m, sigma)))
}

/// Additive white Gaussian noise with standard deviation `sigma` grey levels,
/// independent per channel, clipped to `[0, 255]`.
pub fn add_noise(img: &RgbImage, sigma: f64, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
    let data = img
        .pixels()
        .iter()
        .map(|p| p.map(|v| to_u8(f64::from(v) + normal.sample(&mut rng))))
        .collect();
    RgbImage::new(img.width(), img.height(), data).expect("same size")
}

/// The standard JPEG luminance quantization table.
const JPEG_LUMA: [f64; 64] = [
    16., 11., 10., 16., 24., 40., 51., 61., 12., 12., 14., 19., 26., 58., 60., 55., 14., 13., 16., 24., 40., 57., 69., 56.,
    14., 17., 22., 29., 51., 87., 80., 62., 18., 22., 37., 56., 68., 109., 103., 77., 24., 35., 55., 64., 81., 104., 113.,
    92., 49., 64., 78., 87., 103., 121., 120., 101., 72., 92., 95., 98., 112., 100., 103., 99.,
];

fn dct_basis() -> [[f64; 8]; 8] {
    std::array::from_fn(|k| {
        let a = if k == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
        std::array::from_fn(|n| a * (std::f64::consts::PI * (2 * n + 1) as f64 * k as f64 / 16.0).cos())
    })
}

/// JPEG-like compression: each channel is split into 8×8 blocks, transformed
/// by an orthonormal DCT, quantized with the luminance table scaled to
/// `quality` (1 worst, 100 best, IJG scaling) and transformed back.
/// Partial edge blocks replicate their last row and column.
pub fn jpeg_like(img: &RgbImage, quality: u32) -> RgbImage {
    let q = quality.clamp(1, 100) as f64;
    let scale = if q < 50.0 { 5000.0 / q } else { 200.0 - 2.0 * q };
    let table: [f64; 64] = JPEG_LUMA.map(|t| ((t * scale + 50.0) / 100.0).floor().max(1.0));
    let basis = dct_basis();
    let (w, h) = (img.width(), img.height());

    let out = planes(img).map(|plane| {
        let mut res = plane.clone();
        for by in (0..h).step_by(8) {
            for bx in (0..w).step_by(8) {
                let block: [[f64; 8]; 8] = std::array::from_fn(|y| {
                    std::array::from_fn(|x| plane.get((bx + x).min(w - 1), (by + y).min(h - 1)) - 128.0)
                });
                let mut coef = [[0.0; 8]; 8];
                for (v, row) in coef.iter_mut().enumerate() {
                    for (u, c) in row.iter_mut().enumerate() {
                        let mut s = 0.0;
                        for y in 0..8 {
                            for x in 0..8 {
                                s += basis[v][y] * basis[u][x] * block[y][x];
                            }
                        }
                        let t = table[v * 8 + u];
                        *c = (s / t).round() * t;
                    }
                }
                for y in 0..8.min(h - by) {
                    for x in 0..8.min(w - bx) {
                        let mut s = 0.0;
                        for v in 0..8 {
                            for u in 0..8 {
                                s += basis[v][y] * basis[u][x] * coef[v][u];
                            }
                        }
                        res.set(bx + x, by + y, s + 128.0);
                    }
                }
            }
        }
        res
    });
    from_planes(&out)
}

/// Window of `img` starting at `(x0, y0)`.
pub fn crop(img: &RgbImage, x0: usize, y0: usize, width: usize, height: usize) -> RgbImage {
    assert!(x0 + width <= img.width() && y0 + height <= img.height(), "crop out of bounds");
    RgbImage::from_fn(width, height, |x, y| img.pixel(x0 + x, y0 + y))
}

/// Bilinear sample with replicate borders.
pub fn sample_bilinear(map: &ScalarMap, x: f64, y: f64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (xi, yi) = (x0 as isize, y0 as isize);
    let a = map.get_clamped(xi, yi);
    let b = map.get_clamped(xi + 1, yi);
    let c = map.get_clamped(xi, yi + 1);
    let d = map.get_clamped(xi + 1, yi + 1);
    (a * (1.0 - fx) + b * fx) * (1.0 - fy) + (c * (1.0 - fx) + d * fx) * fy
}

/// Rotates by `angle` radians counter-clockwise (in image coordinates, y
/// down) about the map centre. Output has the input's size.
pub fn rotate_map(map: &ScalarMap, angle: f64) -> ScalarMap {
    let (cx, cy) = ((map.width() as f64 - 1.0) / 2.0, (map.height() as f64 - 1.0) / 2.0);
    let (s, c) = angle.sin_cos();
    ScalarMap::from_fn(map.width(), map.height(), |x, y| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        // Inverse rotation maps each output pixel back into the source.
        sample_bilinear(map, cx + c * dx + s * dy, cy - s * dx + c * dy)
    })
}

/// Where a source point lands after [`rotate_map`] with the same arguments.
pub fn rotate_point(width: usize, height: usize, angle: f64, x: f64, y: f64) -> (f64, f64) {
    let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
    let (s, c) = angle.sin_cos();
    let (dx, dy) = (x - cx, y - cy);
    (cx + c * dx - s * dy, cy + s * dx + c * dy)
}

pub fn rotate(img: &RgbImage, angle: f64) -> RgbImage {
    from_planes(&planes(img).map(|m| rotate_map(&m, angle)))
}
