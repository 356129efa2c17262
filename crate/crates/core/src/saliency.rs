//! Spectral residual saliency with min-max normalization, and the
//! multiplicative pooling of saliency with the normalized lightness map.
//!
//! Transforms run at the native map size; no padding or resizing.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageio::ScalarMap;
use crate::prefilter::{convolve_replicate, make_gaussian_kernel, GaussianKernelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralParams {
    /// Side of the uniform filter that averages the log spectrum.
    pub avg_size: usize,
    /// Side of the Gaussian that smooths the reconstructed map.
    pub smooth_size: usize,
    pub smooth_sigma: f64,
    /// Added to the magnitude before taking the logarithm.
    pub log_floor: f64,
}

impl Default for SpectralParams {
    fn default() -> Self {
        Self {
            avg_size: 3,
            smooth_size: 10,
            smooth_sigma: 3.8,
            log_floor: 1e-8,
        }
    }
}

/// Polar form of a 2-D DFT, unshifted (DC at `(0, 0)`).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub magnitude: ScalarMap,
    pub phase: ScalarMap,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Direction {
    Forward,
    Inverse,
}

/// In-place 2-D DFT of a row-major buffer. The inverse is scaled by `1/(w·h)`.
fn fft2(buf: &mut [Complex64], width: usize, height: usize, dir: Direction) {
    let mut planner = FftPlanner::new();
    let mut plan = |len| match dir {
        Direction::Forward => planner.plan_fft_forward(len),
        Direction::Inverse => planner.plan_fft_inverse(len),
    };
    let row_fft = plan(width);
    let col_fft = plan(height);

    row_fft.process(buf);

    let mut column = vec![Complex64::default(); height];
    for x in 0..width {
        for (y, c) in column.iter_mut().enumerate() {
            *c = buf[y * width + x];
        }
        col_fft.process(&mut column);
        for (y, c) in column.iter().enumerate() {
            buf[y * width + x] = *c;
        }
    }

    if dir == Direction::Inverse {
        let scale = 1.0 / (width * height) as f64;
        buf.iter_mut().for_each(|c| *c *= scale);
    }
}

pub fn forward_spectrum(l_norm: &ScalarMap) -> Spectrum {
    let (w, h) = (l_norm.width(), l_norm.height());
    let mut buf: Vec<Complex64> = l_norm.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2(&mut buf, w, h, Direction::Forward);
    let magnitude = buf.iter().map(|c| c.norm()).collect();
    let phase = buf.iter().map(|c| c.arg()).collect();
    Spectrum {
        magnitude: ScalarMap::new(w, h, magnitude).expect("same size"),
        phase: ScalarMap::new(w, h, phase).expect("same size"),
    }
}

/// Real part of the inverse transform of `magnitude · e^{i·phase}`.
pub fn inverse_spectrum(spec: &Spectrum) -> ScalarMap {
    let field = polar_field(spec.magnitude.values().iter().copied(), &spec.phase);
    field_to_map(field, &spec.phase, |c| c.re)
}

fn polar_field(magnitude: impl Iterator<Item = f64>, phase: &ScalarMap) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = magnitude
        .zip(phase.values())
        .map(|(m, &p)| Complex64::from_polar(m, p))
        .collect();
    fft2(&mut buf, phase.width(), phase.height(), Direction::Inverse);
    buf
}

fn field_to_map(buf: Vec<Complex64>, like: &ScalarMap, f: impl Fn(Complex64) -> f64) -> ScalarMap {
    ScalarMap::new(like.width(), like.height(), buf.into_iter().map(f).collect()).expect("same size")
}

/// Log spectrum minus its local average.
pub fn spectral_residual(spec: &Spectrum, params: &SpectralParams) -> Result<ScalarMap> {
    let log_mag = spec.magnitude.map(|m| (m + params.log_floor).ln());
    let n = params.avg_size;
    let avg = ScalarMap::filled(n, n, 1.0 / (n * n) as f64);
    let local = convolve_replicate(&log_mag, &avg)?;
    let values = log_mag
        .values()
        .iter()
        .zip(local.values())
        .map(|(a, b)| a - b)
        .collect();
    ScalarMap::new(log_mag.width(), log_mag.height(), values)
}

/// Reconstructs the saliency map from the residual and the original phase.
///
/// The residual is a log magnitude, so it is exponentiated before recombining
/// with the phase; the squared modulus of the inverse transform is smoothed
/// and min-max normalized to `[0, 1]`. A flat pre-normalization map gives all
/// zeros.
pub fn reconstruct_saliency(sr: &ScalarMap, phase: &ScalarMap, params: &SpectralParams) -> Result<ScalarMap> {
    if !sr.same_size(phase) {
        return Err(Error::DimensionMismatch(format!(
            "residual {}x{} vs phase {}x{}",
            sr.width(),
            sr.height(),
            phase.width(),
            phase.height()
        )));
    }
    let field = polar_field(sr.values().iter().map(|v| v.exp()), phase);
    let energy = field_to_map(field, phase, |c| c.norm_sqr());
    let kernel = make_gaussian_kernel(GaussianKernelSpec {
        size: params.smooth_size,
        sigma: params.smooth_sigma,
    })?;
    let smoothed = convolve_replicate(&energy, &kernel)?;
    Ok(min_max_normalize(&smoothed))
}

/// Affine map of `[min, max]` onto `[0, 1]`; flat maps become zeros.
pub fn min_max_normalize(map: &ScalarMap) -> ScalarMap {
    let (lo, hi) = map.min_max();
    let span = hi - lo;
    if !(span > 16.0 * f64::EPSILON * hi.abs().max(lo.abs())) {
        return ScalarMap::filled(map.width(), map.height(), 0.0);
    }
    map.map(|v| ((v - lo) / span).clamp(0.0, 1.0))
}

/// Full spectral-residual chain on a normalized lightness map.
pub fn saliency_map(l_norm: &ScalarMap, params: &SpectralParams) -> Result<ScalarMap> {
    let spec = forward_spectrum(l_norm);
    let sr = spectral_residual(&spec, params)?;
    reconstruct_saliency(&sr, &spec.phase, params)
}

/// Pixel-wise product.
pub fn multiplicative_pool(l_norm: &ScalarMap, s: &ScalarMap) -> Result<ScalarMap> {
    if !l_norm.same_size(s) {
        return Err(Error::DimensionMismatch(format!(
            "normalized map {}x{} vs saliency {}x{}",
            l_norm.width(),
            l_norm.height(),
            s.width(),
            s.height()
        )));
    }
    let values = l_norm.values().iter().zip(s.values()).map(|(a, b)| a * b).collect();
    ScalarMap::new(s.width(), s.height(), values)
}
