//! Ratio-test descriptor matching and displacement-consistency filtering.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::sift::{Descriptor, Keypoint, DESCRIPTOR_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchParams {
    /// A match is accepted when `ratio_thresh · d1 < d2`.
    pub ratio_thresh: f64,
    /// Largest allowed deviation (pixels, per axis) from the median displacement.
    pub geo_radius: f64,
    /// Descriptors are compared after multiplying by this factor.
    pub descriptor_scale: f64,
    /// Report squared distances instead of plain Euclidean ones.
    pub squared_distance: bool,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            ratio_thresh: 1.4,
            geo_radius: 30.0,
            descriptor_scale: 512.0,
            squared_distance: true,
        }
    }
}

impl MatchParams {
    /// Unscaled Euclidean distance, for callers that want textbook units.
    pub fn euclidean(ratio_thresh: f64) -> Self {
        Self {
            ratio_thresh,
            descriptor_scale: 1.0,
            squared_distance: false,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub ref_index: usize,
    pub dist_index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    pub pairs: Vec<Match>,
}

impl MatchSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn distances(&self) -> Vec<f64> {
        self.pairs.iter().map(|m| m.distance).collect()
    }
}

/// Distance between two descriptor vectors in the units selected by `params`.
pub fn descriptor_distance(a: &[f64; DESCRIPTOR_LEN], b: &[f64; DESCRIPTOR_LEN], params: &MatchParams) -> f64 {
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let s = params.descriptor_scale;
    if params.squared_distance {
        s * s * ss
    } else {
        s * ss.sqrt()
    }
}

/// The ratio rule. With no second neighbour only an exact match is accepted.
pub fn ratio_accepts(d1: f64, d2: Option<f64>, ratio_thresh: f64) -> bool {
    match d2 {
        Some(d2) => ratio_thresh * d1 < d2,
        None => d1 == 0.0,
    }
}

/// Exhaustive nearest/second-nearest search from each reference descriptor
/// into `dist_set`. Equal distances resolve to the lower index.
pub fn match_descriptors(ref_set: &[Descriptor], dist_set: &[Descriptor], params: &MatchParams) -> MatchSet {
    let found: Vec<Option<Match>> = ref_set
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let mut best: Option<(usize, f64)> = None;
            let mut second: Option<f64> = None;
            for (j, d) in dist_set.iter().enumerate() {
                let dist = descriptor_distance(&r.vector, &d.vector, params);
                match best {
                    Some((_, b)) if dist >= b => {
                        if second.is_none_or(|s| dist < s) {
                            second = Some(dist);
                        }
                    }
                    _ => {
                        second = best.map(|(_, b)| b);
                        best = Some((j, dist));
                    }
                }
            }
            let (j, d1) = best?;
            ratio_accepts(d1, second, params.ratio_thresh).then_some(Match {
                ref_index: i,
                dist_index: j,
                distance: d1,
            })
        })
        .collect();
    MatchSet {
        pairs: found.into_iter().flatten().collect(),
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Drops pairs whose displacement strays more than `geo_radius` (per axis)
/// from the component-wise median displacement.
///
/// Filtering repeats until nothing more is removed, so the output is a fixed
/// point and the filter is idempotent. Sets of two or fewer pairs pass through.
pub fn geometric_filter(matches: &MatchSet, ref_kps: &[Keypoint], dist_kps: &[Keypoint], params: &MatchParams) -> MatchSet {
    let mut pairs = matches.pairs.clone();
    while pairs.len() > 2 {
        let disp: Vec<(f64, f64)> = pairs
            .iter()
            .map(|m| {
                let (r, d) = (&ref_kps[m.ref_index], &dist_kps[m.dist_index]);
                (d.x - r.x, d.y - r.y)
            })
            .collect();
        let mx = median(&mut disp.iter().map(|d| d.0).collect::<Vec<_>>());
        let my = median(&mut disp.iter().map(|d| d.1).collect::<Vec<_>>());
        let before = pairs.len();
        let mut keep = disp
            .iter()
            .map(|(dx, dy)| (dx - mx).abs().max((dy - my).abs()) <= params.geo_radius);
        pairs.retain(|_| keep.next().unwrap());
        if pairs.len() == before {
            break;
        }
    }
    MatchSet { pairs }
}
