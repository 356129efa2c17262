//! Tile-wise mean subtraction and divisive normalization of the lightness map.
//!
//! The map is split into non-overlapping `W × W` tiles anchored at the
//! origin. Trailing tiles on the right and bottom edges may be smaller; their
//! statistics use the pixels they actually contain.

use serde::{Deserialize, Serialize};

use crate::imageio::ScalarMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalNormParams {
    /// Tile side length in pixels.
    pub window: usize,
    /// Added to the tile standard deviation before dividing.
    pub sigma_floor: f64,
}

impl Default for LocalNormParams {
    fn default() -> Self {
        Self {
            window: 20,
            sigma_floor: 1e-6,
        }
    }
}

/// Calls `f(x0, y0, x1, y1)` for every tile, half-open bounds.
fn for_each_tile(width: usize, height: usize, window: usize, mut f: impl FnMut(usize, usize, usize, usize)) {
    assert!(window > 0, "tile window must be positive");
    for y0 in (0..height).step_by(window) {
        for x0 in (0..width).step_by(window) {
            f(x0, y0, (x0 + window).min(width), (y0 + window).min(height));
        }
    }
}

fn fill_tile(out: &mut ScalarMap, (x0, y0, x1, y1): (usize, usize, usize, usize), v: f64) {
    for y in y0..y1 {
        for x in x0..x1 {
            out.set(x, y, v);
        }
    }
}

/// Per-tile mean broadcast to every pixel of the tile.
///
/// The sum is taken relative to the tile's first pixel so that a constant
/// tile reproduces its value exactly; otherwise the rounding residue would
/// be blown up by the small divisive floor downstream.
pub fn block_mean(l: &ScalarMap, window: usize) -> ScalarMap {
    let mut out = ScalarMap::filled(l.width(), l.height(), 0.0);
    for_each_tile(l.width(), l.height(), window, |x0, y0, x1, y1| {
        let origin = l.get(x0, y0);
        let mut sum = 0.0;
        for y in y0..y1 {
            sum += l.values()[y * l.width() + x0..y * l.width() + x1].iter().map(|v| v - origin).sum::<f64>();
        }
        let mean = origin + sum / ((x1 - x0) * (y1 - y0)) as f64;
        fill_tile(&mut out, (x0, y0, x1, y1), mean);
    });
    out
}

/// Per-tile population standard deviation around `mu`.
pub fn block_std(l: &ScalarMap, mu: &ScalarMap, window: usize) -> ScalarMap {
    let mut out = ScalarMap::filled(l.width(), l.height(), 0.0);
    for_each_tile(l.width(), l.height(), window, |x0, y0, x1, y1| {
        let mut ss = 0.0;
        for y in y0..y1 {
            for x in x0..x1 {
                let d = l.get(x, y) - mu.get(x, y);
                ss += d * d;
            }
        }
        let sd = (ss / ((x1 - x0) * (y1 - y0)) as f64).sqrt();
        fill_tile(&mut out, (x0, y0, x1, y1), sd);
    });
    out
}

pub fn local_normalize(l: &ScalarMap, params: &LocalNormParams) -> ScalarMap {
    let mu = block_mean(l, params.window);
    let sigma = block_std(l, &mu, params.window);
    let values = l
        .values()
        .iter()
        .zip(mu.values())
        .zip(sigma.values())
        .map(|((&v, &m), &s)| (v - m) / (s + params.sigma_floor))
        .collect();
    ScalarMap::new(l.width(), l.height(), values).expect("same size")
}
