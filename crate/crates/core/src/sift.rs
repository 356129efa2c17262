//! Scale-invariant keypoints and 128-D gradient-orientation descriptors.
//!
//! The scale space follows the usual DoG construction: `S` intervals per
//! octave, `S + 3` Gaussian levels with `σ_s = σ₀·2^(s/S)` (octave-pixel units),
//! and the next octave seeded by decimating level `S`. Every level is blurred
//! directly from its octave seed rather than incrementally, so each level is an
//! exact (truncated) Gaussian of the seed.
//!
//! Keypoint coordinates and scales are reported in input-map pixels.

use std::cmp::Ordering;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageio::{ScalarMap, MIN_IMAGE_SIDE};
use crate::prefilter::gaussian_blur;

pub const ORIENTATION_BINS: usize = 36;
pub const PEAK_ACCEPT_RATIO: f64 = 0.8;
pub const DESCRIPTOR_GRID: usize = 4;
pub const DESCRIPTOR_ORIENTATIONS: usize = 8;
pub const DESCRIPTOR_LEN: usize = DESCRIPTOR_GRID * DESCRIPTOR_GRID * DESCRIPTOR_ORIENTATIONS;

/// Upper bound on any descriptor component.
pub const DESCRIPTOR_CLAMP: f64 = 0.2;

/// Pixels next to an octave border never host a keypoint.
const BORDER: usize = 5;
const MAX_REFINE_STEPS: usize = 5;
/// Orientation window σ and radius, in multiples of the keypoint scale.
const ORI_SIGMA_FACTOR: f64 = 1.5;
const ORI_RADIUS_FACTOR: f64 = 3.0 * ORI_SIGMA_FACTOR;
/// Width of one descriptor cell in multiples of the keypoint scale.
const DESCR_CELL_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiftParams {
    pub levels_per_octave: usize,
    /// Blur of level 0 in each octave.
    pub base_sigma: f64,
    /// Blur already present in the input map.
    pub input_sigma: f64,
    /// Minimum interpolated |DoG| contrast, in units of the unscaled map.
    pub peak_threshold: f64,
    /// Bound `r` of the principal-curvature ratio test.
    pub edge_threshold: f64,
    /// Start from a 2× bilinear upsampling of the input (octave −1).
    pub upsample: bool,
    /// Multiplier applied to the map before extraction.
    pub input_scale: f64,
}

impl Default for SiftParams {
    fn default() -> Self {
        Self {
            levels_per_octave: 3,
            base_sigma: 1.6,
            input_sigma: 0.5,
            peak_threshold: 0.0,
            edge_threshold: 10.0,
            upsample: false,
            input_scale: 64.0,
        }
    }
}

impl SiftParams {
    /// Contrast threshold on the scaled map.
    fn scaled_threshold(&self) -> f64 {
        self.peak_threshold * self.input_scale
    }

    /// `σ₀·2^(s/S)` in octave pixels.
    pub fn level_sigma(&self, level: f64) -> f64 {
        self.base_sigma * 2f64.powf(level / self.levels_per_octave as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    /// Blur σ in input pixels.
    pub scale: f64,
    /// Radians in `[0, 2π)`, measured from +x towards +y (image rows grow down).
    pub orientation: f64,
    /// Octave index; −1 is the upsampled octave.
    pub octave: i32,
    /// Interpolated DoG value.
    pub response: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub keypoint: Keypoint,
    pub vector: [f64; DESCRIPTOR_LEN],
}

impl Descriptor {
    pub fn norm(&self) -> f64 {
        self.vector.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct Octave {
    /// −1 for the upsampled octave, then 0, 1, ...
    pub index: i32,
    pub gaussians: Vec<ScalarMap>,
    pub dogs: Vec<ScalarMap>,
}

impl Octave {
    /// Input pixels per octave pixel.
    pub fn pixel_size(&self) -> f64 {
        2f64.powi(self.index)
    }

    fn width(&self) -> usize {
        self.gaussians[0].width()
    }

    fn height(&self) -> usize {
        self.gaussians[0].height()
    }
}

#[derive(Debug, Clone)]
pub struct ScaleSpace {
    pub octaves: Vec<Octave>,
}

/// Octave count for a `width × height` input: `floor(log2(min side)) − 3`.
pub fn octave_count(width: usize, height: usize) -> usize {
    let side = width.min(height).max(1);
    (side.ilog2() as usize).saturating_sub(3)
}

/// Bilinear 2× upsampling; output sample `j` sits at input coordinate `j/2`.
fn upsample2(map: &ScalarMap) -> ScalarMap {
    let (w, h) = (map.width(), map.height());
    let half = |j: usize, n: usize| {
        let lo = j / 2;
        let hi = if j % 2 == 1 { (lo + 1).min(n - 1) } else { lo };
        (lo, hi)
    };
    ScalarMap::from_fn(2 * w, 2 * h, |x, y| {
        let (x0, x1) = half(x, w);
        let (y0, y1) = half(y, h);
        0.25 * (map.get(x0, y0) + map.get(x1, y0) + map.get(x0, y1) + map.get(x1, y1))
    })
}

fn downsample2(map: &ScalarMap) -> ScalarMap {
    ScalarMap::from_fn(map.width() / 2, map.height() / 2, |x, y| map.get(2 * x, 2 * y))
}

fn difference(a: &ScalarMap, b: &ScalarMap) -> ScalarMap {
    let values = a.values().iter().zip(b.values()).map(|(a, b)| a - b).collect();
    ScalarMap::new(a.width(), a.height(), values).expect("same size")
}

fn build_octave(index: i32, seed: &ScalarMap, seed_sigma: f64, params: &SiftParams) -> Octave {
    let levels = params.levels_per_octave + 3;
    let gaussians: Vec<ScalarMap> = (0..levels)
        .map(|s| {
            let target = params.level_sigma(s as f64);
            gaussian_blur(seed, (target * target - seed_sigma * seed_sigma).max(0.0).sqrt())
        })
        .collect();
    let dogs = gaussians.windows(2).map(|w| difference(&w[1], &w[0])).collect();
    Octave { index, gaussians, dogs }
}

/// Gaussian and DoG pyramids of `map`. The map is used as given; callers
/// apply `input_scale` beforehand.
pub fn build_scale_space(map: &ScalarMap, params: &SiftParams) -> Result<ScaleSpace> {
    if map.width() < MIN_IMAGE_SIDE || map.height() < MIN_IMAGE_SIDE {
        return Err(Error::ImageTooSmall {
            width: map.width(),
            height: map.height(),
            min: MIN_IMAGE_SIDE,
        });
    }
    let count = octave_count(map.width(), map.height());
    let (mut seed, mut seed_sigma, first) = if params.upsample {
        (upsample2(map), 2.0 * params.input_sigma, -1)
    } else {
        (map.clone(), params.input_sigma, 0)
    };
    let mut octaves = Vec::with_capacity(count);
    for k in 0..count {
        let octave = build_octave(first + k as i32, &seed, seed_sigma, params);
        seed = downsample2(&octave.gaussians[params.levels_per_octave]);
        seed_sigma = params.base_sigma;
        octaves.push(octave);
    }
    Ok(ScaleSpace { octaves })
}

/// A refined DoG extremum before orientation assignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    /// Position in `ScaleSpace::octaves`.
    pub octave: usize,
    /// Integer DoG layer the refinement settled on.
    pub layer: usize,
    /// Sub-pixel position in octave pixels.
    pub x: f64,
    pub y: f64,
    /// σ in octave pixels.
    pub sigma: f64,
    pub response: f64,
}

impl Candidate {
    fn to_keypoint(self, space: &ScaleSpace, orientation: f64) -> Keypoint {
        let oct = &space.octaves[self.octave];
        let px = oct.pixel_size();
        Keypoint {
            x: self.x * px,
            y: self.y * px,
            scale: self.sigma * px,
            orientation,
            octave: oct.index,
            response: self.response,
        }
    }
}

fn is_strict_extremum(dogs: &[ScalarMap], s: usize, x: usize, y: usize) -> bool {
    let v = dogs[s].get(x, y);
    let (mut greater, mut less) = (true, true);
    for layer in &dogs[s - 1..=s + 1] {
        for yy in y - 1..=y + 1 {
            for xx in x - 1..=x + 1 {
                if std::ptr::eq(layer, &dogs[s]) && xx == x && yy == y {
                    continue;
                }
                let n = layer.get(xx, yy);
                greater &= v > n;
                less &= v < n;
                if !greater && !less {
                    return false;
                }
            }
        }
    }
    greater || less
}

/// Solves the 3×3 system `h·x = b`; `None` when singular.
fn solve3(h: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(h);
    if d.abs() < 1e-300 || !d.is_finite() {
        return None;
    }
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let mut m = h;
        for r in 0..3 {
            m[r][c] = b[r];
        }
        *o = det(m) / d;
    }
    Some(out)
}

/// Gradient and Hessian of the DoG stack at an integer sample, `(x, y, s)` order.
fn derivatives(dogs: &[ScalarMap], s: usize, x: usize, y: usize) -> ([f64; 3], [[f64; 3]; 3]) {
    let at = |ds: isize, dx: isize, dy: isize| {
        dogs[(s as isize + ds) as usize].get((x as isize + dx) as usize, (y as isize + dy) as usize)
    };
    let v = at(0, 0, 0);
    let g = [
        0.5 * (at(0, 1, 0) - at(0, -1, 0)),
        0.5 * (at(0, 0, 1) - at(0, 0, -1)),
        0.5 * (at(1, 0, 0) - at(-1, 0, 0)),
    ];
    let dxx = at(0, 1, 0) + at(0, -1, 0) - 2.0 * v;
    let dyy = at(0, 0, 1) + at(0, 0, -1) - 2.0 * v;
    let dss = at(1, 0, 0) + at(-1, 0, 0) - 2.0 * v;
    let dxy = 0.25 * (at(0, 1, 1) - at(0, -1, 1) - at(0, 1, -1) + at(0, -1, -1));
    let dxs = 0.25 * (at(1, 1, 0) - at(1, -1, 0) - at(-1, 1, 0) + at(-1, -1, 0));
    let dys = 0.25 * (at(1, 0, 1) - at(1, 0, -1) - at(-1, 0, 1) + at(-1, 0, -1));
    (g, [[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]])
}

fn refine(
    octave: &Octave,
    octave_pos: usize,
    mut s: usize,
    mut x: usize,
    mut y: usize,
    params: &SiftParams,
) -> Option<Candidate> {
    let dogs = &octave.dogs;
    let (w, h) = (octave.width(), octave.height());
    let intervals = params.levels_per_octave;
    for _ in 0..MAX_REFINE_STEPS {
        let (g, hess) = derivatives(dogs, s, x, y);
        let off = solve3(hess, [-g[0], -g[1], -g[2]])?;
        if off.iter().all(|o| o.abs() < 0.5) {
            let contrast = dogs[s].get(x, y) + 0.5 * (g[0] * off[0] + g[1] * off[1] + g[2] * off[2]);
            if contrast.abs() < params.scaled_threshold() {
                return None;
            }
            let (dxx, dyy, dxy) = (hess[0][0], hess[1][1], hess[0][1]);
            let tr = dxx + dyy;
            let det = dxx * dyy - dxy * dxy;
            let r = params.edge_threshold;
            if det <= 0.0 || tr * tr * r >= (r + 1.0) * (r + 1.0) * det {
                return None;
            }
            let level = s as f64 + off[2];
            return Some(Candidate {
                octave: octave_pos,
                layer: s,
                x: x as f64 + off[0],
                y: y as f64 + off[1],
                sigma: params.level_sigma(level),
                response: contrast,
            });
        }
        if off.iter().any(|o| o.abs() > 1e6) {
            return None;
        }
        let step = |p: usize, o: f64| p as isize + o.round() as isize;
        let (nx, ny, ns) = (step(x, off[0]), step(y, off[1]), step(s, off[2]));
        if ns < 1
            || ns > intervals as isize
            || nx < BORDER as isize
            || ny < BORDER as isize
            || nx >= (w - BORDER) as isize
            || ny >= (h - BORDER) as isize
        {
            return None;
        }
        (x, y, s) = (nx as usize, ny as usize, ns as usize);
    }
    None
}

/// Refined, contrast- and edge-filtered DoG extrema.
pub fn detect_keypoints(space: &ScaleSpace, params: &SiftParams) -> Vec<Candidate> {
    let pre_threshold = 0.5 * params.scaled_threshold();
    let mut out = Vec::new();
    for (pos, octave) in space.octaves.iter().enumerate() {
        let (w, h) = (octave.width(), octave.height());
        if w <= 2 * BORDER || h <= 2 * BORDER {
            continue;
        }
        for s in 1..=params.levels_per_octave {
            let dog = &octave.dogs[s];
            for y in BORDER..h - BORDER {
                for x in BORDER..w - BORDER {
                    let v = dog.get(x, y);
                    if v.abs() <= pre_threshold || !is_strict_extremum(&octave.dogs, s, x, y) {
                        continue;
                    }
                    if let Some(c) = refine(octave, pos, s, x, y, params) {
                        out.push(c);
                    }
                }
            }
        }
    }
    out
}

/// Central-difference gradient `(magnitude, angle)` at an interior pixel.
#[inline]
fn gradient(img: &ScalarMap, x: usize, y: usize) -> (f64, f64) {
    let dx = img.get(x + 1, y) - img.get(x - 1, y);
    let dy = img.get(x, y + 1) - img.get(x, y - 1);
    ((dx * dx + dy * dy).sqrt(), dy.atan2(dx))
}

fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r >= 2.0 * PI {
        0.0
    } else {
        r
    }
}

/// Smoothed 36-bin gradient orientation histogram around a candidate.
fn orientation_histogram(img: &ScalarMap, c: &Candidate) -> [f64; ORIENTATION_BINS] {
    let mut hist = [0.0; ORIENTATION_BINS];
    let sigma = ORI_SIGMA_FACTOR * c.sigma;
    let radius = (ORI_RADIUS_FACTOR * c.sigma).round() as isize;
    let (cx, cy) = (c.x.round() as isize, c.y.round() as isize);
    let (w, h) = (img.width() as isize, img.height() as isize);
    let denom = 2.0 * sigma * sigma;
    for py in (cy - radius).max(1)..=(cy + radius).min(h - 2) {
        for px in (cx - radius).max(1)..=(cx + radius).min(w - 2) {
            let (dx, dy) = (px as f64 - c.x, py as f64 - c.y);
            let r2 = dx * dx + dy * dy;
            if r2 > (radius * radius) as f64 {
                continue;
            }
            let (mag, ang) = gradient(img, px as usize, py as usize);
            let bin = ((ORIENTATION_BINS as f64 * wrap_angle(ang) / (2.0 * PI)).round() as usize) % ORIENTATION_BINS;
            hist[bin] += (-r2 / denom).exp() * mag;
        }
    }
    // [1 4 6 4 1]/16 circular smoothing.
    let n = ORIENTATION_BINS;
    let mut smooth = [0.0; ORIENTATION_BINS];
    for (i, out) in smooth.iter_mut().enumerate() {
        let at = |d: isize| hist[(i as isize + d).rem_euclid(n as isize) as usize];
        *out = (at(-2) + at(2)) / 16.0 + (at(-1) + at(1)) * 4.0 / 16.0 + at(0) * 6.0 / 16.0;
    }
    smooth
}

/// One keypoint per histogram peak within [`PEAK_ACCEPT_RATIO`] of the maximum.
pub fn assign_orientations(space: &ScaleSpace, candidates: &[Candidate]) -> Vec<(Candidate, Keypoint)> {
    let n = ORIENTATION_BINS;
    let mut out = Vec::new();
    for c in candidates {
        let img = &space.octaves[c.octave].gaussians[c.layer];
        let hist = orientation_histogram(img, c);
        let max = hist.iter().fold(0.0f64, |a, &b| a.max(b));
        if !(max > 0.0) {
            continue;
        }
        for i in 0..n {
            let (l, v, r) = (hist[(i + n - 1) % n], hist[i], hist[(i + 1) % n]);
            if v > l && v > r && v >= PEAK_ACCEPT_RATIO * max {
                let shift = 0.5 * (l - r) / (l - 2.0 * v + r);
                let angle = wrap_angle(2.0 * PI * (i as f64 + shift) / n as f64);
                out.push((*c, c.to_keypoint(space, angle)));
            }
        }
    }
    out
}

/// Rotated, Gaussian-weighted 4×4×8 gradient histograms with trilinear binning.
pub fn compute_descriptors(space: &ScaleSpace, oriented: &[(Candidate, Keypoint)]) -> Vec<Descriptor> {
    oriented.iter().map(|(c, kp)| describe(space, c, kp)).collect()
}

fn describe(space: &ScaleSpace, c: &Candidate, kp: &Keypoint) -> Descriptor {
    const D: usize = DESCRIPTOR_GRID;
    const N: usize = DESCRIPTOR_ORIENTATIONS;
    let img = &space.octaves[c.octave].gaussians[c.layer];
    let (w, h) = (img.width() as isize, img.height() as isize);

    let cell = DESCR_CELL_FACTOR * c.sigma;
    let radius = (cell * std::f64::consts::SQRT_2 * (D as f64 + 1.0) * 0.5).round() as isize;
    let radius = radius.min(((w * w + h * h) as f64).sqrt() as isize);
    let (cos_t, sin_t) = (kp.orientation.cos() / cell, kp.orientation.sin() / cell);
    // Window σ is half the descriptor width, in cell units.
    let half = D as f64 / 2.0;
    let weight_scale = -1.0 / (2.0 * half * half);
    let bins_per_rad = N as f64 / (2.0 * PI);

    // Padded by one cell on each spatial side and one orientation bin for wrapping.
    let mut hist = vec![0.0; (D + 2) * (D + 2) * (N + 2)];
    let idx = |r: usize, c: usize, o: usize| (r * (D + 2) + c) * (N + 2) + o;

    let (cx, cy) = (c.x.round() as isize, c.y.round() as isize);
    for py in (cy - radius).max(1)..=(cy + radius).min(h - 2) {
        for px in (cx - radius).max(1)..=(cx + radius).min(w - 2) {
            let (dx, dy) = (px as f64 - c.x, py as f64 - c.y);
            // Offset expressed in the keypoint frame, in cell units.
            let c_rot = dx * cos_t + dy * sin_t;
            let r_rot = -dx * sin_t + dy * cos_t;
            let rbin = r_rot + half - 0.5;
            let cbin = c_rot + half - 0.5;
            if !(rbin > -1.0 && rbin < D as f64 && cbin > -1.0 && cbin < D as f64) {
                continue;
            }
            let (mag, ang) = gradient(img, px as usize, py as usize);
            let obin = wrap_angle(ang - kp.orientation) * bins_per_rad;
            let weight = ((c_rot * c_rot + r_rot * r_rot) * weight_scale).exp() * mag;

            let (r0, c0, o0) = (rbin.floor(), cbin.floor(), obin.floor());
            let (fr, fc, fo) = (rbin - r0, cbin - c0, obin - o0);
            // Shift by one for the padding cell.
            let (r0, c0, o0) = ((r0 + 1.0) as usize, (c0 + 1.0) as usize, (o0 as usize) % N);
            for (dr, wr) in [(0, 1.0 - fr), (1, fr)] {
                for (dc, wc) in [(0, 1.0 - fc), (1, fc)] {
                    for (d_o, wo) in [(0, 1.0 - fo), (1, fo)] {
                        hist[idx(r0 + dr, c0 + dc, o0 + d_o)] += weight * wr * wc * wo;
                    }
                }
            }
        }
    }

    let mut vector = [0.0; DESCRIPTOR_LEN];
    for r in 0..D {
        for cc in 0..D {
            for o in 0..N {
                let mut v = hist[idx(r + 1, cc + 1, o)];
                if o < 2 {
                    // Orientation bins N and N+1 wrap to 0 and 1.
                    v += hist[idx(r + 1, cc + 1, o + N)];
                }
                vector[(r * D + cc) * N + o] = v;
            }
        }
    }
    normalize_descriptor(&mut vector);
    Descriptor { keypoint: *kp, vector }
}

/// Unit-normalizes `v` and caps every component at [`DESCRIPTOR_CLAMP`].
///
/// The result is the fixed point of repeated clamp-and-renormalize: the
/// largest components sit exactly at the cap and the rest share one scale
/// factor, chosen so the vector has unit norm. A unit vector needs at least
/// `1/0.2² = 25` non-zero components to satisfy the cap; sparser vectors, and
/// vectors with no energy, become zero.
pub fn normalize_descriptor(v: &mut [f64; DESCRIPTOR_LEN]) {
    let cap = DESCRIPTOR_CLAMP;
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nonzero = v.iter().filter(|&&x| x > 0.0).count();
    if !(norm > 1e-12) || (nonzero as f64) * cap * cap < 1.0 {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    v.iter_mut().for_each(|x| *x /= norm);

    let mut sorted = *v;
    sorted.sort_by(|a, b| b.total_cmp(a));
    // Energy of sorted[k..], summed from the small end so the tails of
    // heavily clamped vectors do not suffer cancellation.
    let mut tails = [0.0; DESCRIPTOR_LEN + 1];
    for k in (0..DESCRIPTOR_LEN).rev() {
        tails[k] = tails[k + 1] + sorted[k] * sorted[k];
    }
    let mut scale = None;
    for (clamped, &next) in sorted.iter().enumerate() {
        let room = 1.0 - cap * cap * clamped as f64;
        let tail = tails[clamped];
        if room <= 0.0 || tail <= 0.0 {
            break;
        }
        let t = (room / tail).sqrt();
        if t * next <= cap {
            scale = Some(t);
            break;
        }
    }
    match scale {
        Some(t) => v.iter_mut().for_each(|x| *x = (t * *x).min(cap)),
        None => v.iter_mut().for_each(|x| *x = 0.0),
    }
}

fn canonical_order(a: &Descriptor, b: &Descriptor) -> Ordering {
    let (ka, kb) = (&a.keypoint, &b.keypoint);
    ka.octave
        .cmp(&kb.octave)
        .then(ka.y.total_cmp(&kb.y))
        .then(ka.x.total_cmp(&kb.x))
        .then(ka.orientation.total_cmp(&kb.orientation))
        .then(ka.scale.total_cmp(&kb.scale))
}

/// Scales the map by `input_scale` and runs the full extraction chain.
/// Output is sorted by octave, then y, x, orientation.
pub fn extract(map: &ScalarMap, params: &SiftParams) -> Result<Vec<Descriptor>> {
    let scaled = map.map(|v| v * params.input_scale);
    let space = build_scale_space(&scaled, params)?;
    let candidates = detect_keypoints(&space, params);
    let oriented = assign_orientations(&space, &candidates);
    let mut descriptors = compute_descriptors(&space, &oriented);
    descriptors.sort_by(canonical_order);
    Ok(descriptors)
}
