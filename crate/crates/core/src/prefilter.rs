//! Gaussian low-pass smoothing and the RGB to CIE lightness transform.

use serde::{Deserialize, Serialize};

use crate::config::ReSiftConfig;
use crate::error::{Error, Result};
use crate::imageio::{RgbImage, ScalarMap};

/// Square Gaussian window: `size` taps per side, standard deviation `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianKernelSpec {
    pub size: usize,
    pub sigma: f64,
}

impl Default for GaussianKernelSpec {
    fn default() -> Self {
        Self { size: 4, sigma: 5.0 }
    }
}

/// Linear RGB to XYZ matrix and the CIE lightness constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorTransformParams {
    pub matrix: [[f64; 3]; 3],
    pub kappa: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub white_point: [f64; 3],
}

/// Adobe RGB (1998) primaries with D65 white.
pub const ADOBE_RGB_1998_TO_XYZ: [[f64; 3]; 3] = [
    [0.5767309, 0.1855540, 0.1881852],
    [0.2973769, 0.6273491, 0.0752741],
    [0.0270343, 0.0706872, 0.9911085],
];

/// Adobe RGB (1998) decoding exponent, 2 + 51/256.
pub const ADOBE_RGB_1998_GAMMA: f64 = 563.0 / 256.0;

pub const D65_WHITE: [f64; 3] = [0.95047, 1.0, 1.08883];

impl Default for ColorTransformParams {
    fn default() -> Self {
        Self {
            matrix: ADOBE_RGB_1998_TO_XYZ,
            kappa: 903.3,
            epsilon: 0.008856,
            gamma: ADOBE_RGB_1998_GAMMA,
            white_point: D65_WHITE,
        }
    }
}

/// Normalized `size × size` Gaussian window.
///
/// Taps sit on a grid symmetric about the window centre, so even sizes use
/// half-integer offsets (`±0.5, ±1.5` for size 4).
pub fn make_gaussian_kernel(spec: GaussianKernelSpec) -> Result<ScalarMap> {
    if spec.size == 0 {
        return Err(Error::InvalidSpec("kernel size must be at least 1".into()));
    }
    if !(spec.sigma > 0.0) || !spec.sigma.is_finite() {
        return Err(Error::InvalidSpec(format!("sigma must be positive, got {}", spec.sigma)));
    }
    let centre = (spec.size as f64 - 1.0) / 2.0;
    let two_var = 2.0 * spec.sigma * spec.sigma;
    let mut k = ScalarMap::from_fn(spec.size, spec.size, |x, y| {
        let dx = x as f64 - centre;
        let dy = y as f64 - centre;
        (-(dx * dx + dy * dy) / two_var).exp()
    });
    let sum: f64 = k.values().iter().sum();
    k.values_mut().iter_mut().for_each(|v| *v /= sum);
    Ok(k)
}

/// Same-size 2-D correlation with edge replication.
///
/// The kernel anchor is `((kw - 1) / 2, (kh - 1) / 2)`, so for even sizes the
/// extra tap falls on the right/bottom side.
pub fn convolve_replicate(map: &ScalarMap, kernel: &ScalarMap) -> Result<ScalarMap> {
    let (w, h) = (map.width(), map.height());
    let (kw, kh) = (kernel.width(), kernel.height());
    if kw > w || kh > h || kw == 0 || kh == 0 {
        return Err(Error::KernelTooLarge {
            kernel_width: kw,
            kernel_height: kh,
            width: w,
            height: h,
        });
    }
    let ax = (kw as isize - 1) / 2;
    let ay = (kh as isize - 1) / 2;
    let src = map.values();
    let mut out = vec![0.0; w * h];

    for y in 0..h {
        let out_row = &mut out[y * w..(y + 1) * w];
        for j in 0..kh {
            let sy = (y as isize + j as isize - ay).clamp(0, h as isize - 1) as usize;
            let src_row = &src[sy * w..(sy + 1) * w];
            for i in 0..kw {
                let weight = kernel.get(i, j);
                let shift = i as isize - ax;
                accumulate_shifted(out_row, src_row, shift, weight);
            }
        }
    }
    ScalarMap::new(w, h, out)
}

/// `out[x] += weight * src[clamp(x + shift)]`.
#[inline]
pub(crate) fn accumulate_shifted(out: &mut [f64], src: &[f64], shift: isize, weight: f64) {
    let n = out.len() as isize;
    // Output indices whose source index lies inside the row.
    let lo = (-shift).clamp(0, n);
    let hi = (n - shift).clamp(0, n);
    let (first, last) = (src[0], src[n as usize - 1]);
    for o in &mut out[..lo as usize] {
        *o += weight * first;
    }
    if lo < hi {
        let s0 = (lo + shift) as usize;
        let len = (hi - lo) as usize;
        for (o, s) in out[lo as usize..hi as usize].iter_mut().zip(&src[s0..s0 + len]) {
            *o += weight * s;
        }
    }
    for o in &mut out[hi.max(lo) as usize..] {
        *o += weight * last;
    }
}

/// Sampled, normalized 1-D Gaussian with radius `ceil(4σ)`.
pub fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil().max(1.0) as isize;
    let two_var = 2.0 * sigma * sigma;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / two_var).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Separable Gaussian blur with edge replication. `sigma <= 0` is a copy.
pub fn gaussian_blur(map: &ScalarMap, sigma: f64) -> ScalarMap {
    if !(sigma > 0.0) {
        return map.clone();
    }
    let taps = gaussian_taps(sigma);
    let radius = (taps.len() / 2) as isize;
    let (w, h) = (map.width(), map.height());

    let mut horiz = vec![0.0; w * h];
    for y in 0..h {
        let src = &map.values()[y * w..(y + 1) * w];
        let out = &mut horiz[y * w..(y + 1) * w];
        for (k, &t) in taps.iter().enumerate() {
            accumulate_shifted(out, src, k as isize - radius, t);
        }
    }

    // Vertical pass on whole rows keeps memory access sequential.
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let row = &mut out[y * w..(y + 1) * w];
        for (k, &t) in taps.iter().enumerate() {
            let sy = (y as isize + k as isize - radius).clamp(0, h as isize - 1) as usize;
            for (o, s) in row.iter_mut().zip(&horiz[sy * w..(sy + 1) * w]) {
                *o += t * s;
            }
        }
    }
    ScalarMap::new(w, h, out).expect("same size")
}

/// Lightness of three `[0, 255]` channel planes.
pub fn lightness_from_planes(planes: [&ScalarMap; 3], params: &ColorTransformParams) -> ScalarMap {
    let row = params.matrix[1];
    let white_y = params.white_point[1];
    let (r, g, b) = (planes[0].values(), planes[1].values(), planes[2].values());
    let values = r
        .iter()
        .zip(g)
        .zip(b)
        .map(|((&r, &g), &b)| {
            let decode = |v: f64| (v / 255.0).clamp(0.0, 1.0).powf(params.gamma);
            let y = (row[0] * decode(r) + row[1] * decode(g) + row[2] * decode(b)) / white_y;
            cie_lightness(y, params.kappa, params.epsilon)
        })
        .collect();
    ScalarMap::new(planes[0].width(), planes[0].height(), values).expect("planes share a size")
}

/// CIE L* of relative luminance `y`, clamped to `[0, 100]`.
#[inline]
pub fn cie_lightness(y: f64, kappa: f64, epsilon: f64) -> f64 {
    let f = if y > epsilon { y.cbrt() } else { (kappa * y + 16.0) / 116.0 };
    (116.0 * f - 16.0).clamp(0.0, 100.0)
}

pub fn rgb_to_lightness(img: &RgbImage, params: &ColorTransformParams) -> ScalarMap {
    let planes = [img.channel(0), img.channel(1), img.channel(2)];
    lightness_from_planes([&planes[0], &planes[1], &planes[2]], params)
}

/// Smooths each RGB channel, then converts to lightness.
pub fn preprocess(img: &RgbImage, cfg: &ReSiftConfig) -> Result<ScalarMap> {
    let kernel = make_gaussian_kernel(cfg.filter)?;
    let smooth = |c| convolve_replicate(&img.channel(c), &kernel);
    let planes = [smooth(0)?, smooth(1)?, smooth(2)?];
    Ok(lightness_from_planes([&planes[0], &planes[1], &planes[2]], &cfg.color))
}
