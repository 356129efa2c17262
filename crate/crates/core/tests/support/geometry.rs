//! Keypoint repeatability measurements shared by the property tests and the
//! acceptance suite.

#![allow(dead_code)]

use resift::prefilter::rgb_to_lightness;
use resift::sift::{extract, Descriptor, SiftParams};
use resift::synth::{rotate_map, rotate_point, textured_image};
use resift::ScalarMap;

pub fn texture_map(width: usize, height: usize, seed: u64) -> ScalarMap {
    let img = textured_image(width, height, seed);
    rgb_to_lightness(&img, &Default::default()).map(|v| v / 100.0)
}

fn window(map: &ScalarMap, x0: usize, y0: usize, w: usize, h: usize) -> ScalarMap {
    ScalarMap::from_fn(w, h, |x, y| map.get(x0 + x, y0 + y))
}

/// True if some keypoint in `set` sits within `tol` pixels of `(x, y)` at a
/// scale within 25% of `scale`.
fn has_counterpart(set: &[Descriptor], x: f64, y: f64, scale: f64, tol: f64) -> bool {
    set.iter().any(|d| {
        let k = &d.keypoint;
        (k.x - x).hypot(k.y - y) <= tol && (k.scale / scale - 1.0).abs() <= 0.25
    })
}

/// Keypoints of the shifted window reappear at the shifted location.
pub fn translation_repeatability(seed: u64, dx: usize, dy: usize) -> f64 {
    let big = texture_map(320, 320, seed);
    let a = extract(&window(&big, 20, 20, 256, 256), &SiftParams::default()).unwrap();
    let b = extract(&window(&big, 20 + dx, 20 + dy, 256, 256), &SiftParams::default()).unwrap();
    let margin = 24.0;
    let (mut total, mut found) = (0, 0);
    for d in &a {
        let k = &d.keypoint;
        let (x, y) = (k.x - dx as f64, k.y - dy as f64);
        if x < margin || y < margin || x > 256.0 - margin || y > 256.0 - margin {
            continue;
        }
        total += 1;
        if has_counterpart(&b, x, y, k.scale, 2.0_f64.max(0.5 * k.scale)) {
            found += 1;
        }
    }
    assert!(total > 20, "too few interior keypoints: {total}");
    found as f64 / total as f64
}

/// Keypoints of the central disc survive a rotation of the map.
pub fn rotation_survival(seed: u64, angle: f64) -> f64 {
    let map = texture_map(256, 256, seed);
    let rotated = rotate_map(&map, angle);
    let a = extract(&map, &SiftParams::default()).unwrap();
    let b = extract(&rotated, &SiftParams::default()).unwrap();
    let (mut total, mut found) = (0, 0);
    for d in &a {
        let k = &d.keypoint;
        if (k.x - 127.5).hypot(k.y - 127.5) > 90.0 {
            continue;
        }
        total += 1;
        let (x, y) = rotate_point(256, 256, angle, k.x, k.y);
        if has_counterpart(&b, x, y, k.scale, 2.0_f64.max(0.5 * k.scale)) {
            found += 1;
        }
    }
    assert!(total > 20, "too few central keypoints: {total}");
    found as f64 / total as f64
}

/// Keypoints of a map reappear at twice the position and scale in a 2×
/// enlarged copy.
pub fn scale_repeatability(seed: u64) -> f64 {
    // Pixel replication smoothed with a small blur.
    let map = texture_map(128, 128, seed);
    let big = resift::prefilter::gaussian_blur(&ScalarMap::from_fn(256, 256, |x, y| map.get(x / 2, y / 2)), 0.8);
    let small = extract(&map, &SiftParams::default()).unwrap();
    let large = extract(&big, &SiftParams::default()).unwrap();
    let (mut total, mut found) = (0, 0);
    for d in &small {
        let k = &d.keypoint;
        if k.scale < 2.5 || k.x < 16.0 || k.y < 16.0 || k.x > 112.0 || k.y > 112.0 {
            continue;
        }
        total += 1;
        if has_counterpart(&large, 2.0 * k.x + 0.5, 2.0 * k.y + 0.5, 2.0 * k.scale, k.scale.max(2.0) + 2.0) {
            found += 1;
        }
    }
    assert!(total > 5, "too few keypoints: {total}");
    found as f64 / total as f64
}
