//! Percentile pooling of matched distances, the reciprocal score mapping, and
//! the end-to-end pipeline.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::ReSiftConfig;
use crate::error::{Error, Result};
use crate::imageio::{RgbImage, ScalarMap};
use crate::matching::{geometric_filter, match_descriptors, MatchSet};
use crate::normalize::local_normalize;
use crate::prefilter::preprocess;
use crate::saliency::{forward_spectrum, multiplicative_pool, reconstruct_saliency, spectral_residual};
use crate::sift::{extract, Descriptor, Keypoint};

/// Wall-clock time per stage in milliseconds, summed over both images.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub preprocess_ms: f64,
    pub normalize_ms: f64,
    pub saliency_ms: f64,
    pub sift_ms: f64,
    pub matching_ms: f64,
    pub pooling_ms: f64,
}

impl StageTimings {
    fn add(&mut self, other: &StageTimings) {
        self.preprocess_ms += other.preprocess_ms;
        self.normalize_ms += other.normalize_ms;
        self.saliency_ms += other.saliency_ms;
        self.sift_ms += other.sift_ms;
        self.matching_ms += other.matching_ms;
        self.pooling_ms += other.pooling_ms;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityResult {
    /// In `(0, 100]`, or exactly 0 when no match survived.
    pub score: f64,
    pub matched_count: usize,
    /// Pooled distance; `None` when no match survived.
    pub percentile_distance: Option<f64>,
    pub timings: StageTimings,
}

/// Nearest-rank percentile: the element at sorted index `ceil(perc·N/100) − 1`.
pub fn percentile_threshold(distances: &[f64], perc: f64) -> Result<f64> {
    if distances.is_empty() {
        return Err(Error::EmptyDistances);
    }
    let mut sorted = distances.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = (perc * n as f64 / 100.0).ceil() as isize - 1;
    Ok(sorted[rank.clamp(0, n as isize - 1) as usize])
}

/// `1 / (dist/c1 + c2)`.
pub fn nonlinear_map(dist: f64, c1: f64, c2: f64) -> f64 {
    1.0 / (dist / c1 + c2)
}

/// Every intermediate map of the reliability-weighting chain for one image.
#[derive(Debug, Clone)]
pub struct ReliabilityMaps {
    pub lightness: ScalarMap,
    pub normalized: ScalarMap,
    pub residual: ScalarMap,
    pub saliency: ScalarMap,
    pub pooled: ScalarMap,
}

fn timed<T>(slot: &mut f64, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    *slot += start.elapsed().as_secs_f64() * 1e3;
    out
}

fn maps_timed(img: &RgbImage, cfg: &ReSiftConfig, t: &mut StageTimings) -> Result<ReliabilityMaps> {
    img.check_min_size()?;
    let lightness = timed(&mut t.preprocess_ms, || preprocess(img, cfg))?;
    let normalized = timed(&mut t.normalize_ms, || local_normalize(&lightness, &cfg.norm));
    let (residual, saliency) = timed(&mut t.saliency_ms, || -> Result<_> {
        let spec = forward_spectrum(&normalized);
        let residual = spectral_residual(&spec, &cfg.spectral)?;
        let saliency = reconstruct_saliency(&residual, &spec.phase, &cfg.spectral)?;
        Ok((residual, saliency))
    })?;
    let pooled = multiplicative_pool(&normalized, &saliency)?;
    Ok(ReliabilityMaps {
        lightness,
        normalized,
        residual,
        saliency,
        pooled,
    })
}

pub fn reliability_maps(img: &RgbImage, cfg: &ReSiftConfig) -> Result<ReliabilityMaps> {
    maps_timed(img, cfg, &mut StageTimings::default())
}

fn descriptors_timed(img: &RgbImage, cfg: &ReSiftConfig) -> Result<(Vec<Descriptor>, StageTimings)> {
    let mut t = StageTimings::default();
    let maps = maps_timed(img, cfg, &mut t)?;
    let descriptors = timed(&mut t.sift_ms, || extract(&maps.pooled, &cfg.sift))?;
    Ok((descriptors, t))
}

/// Reliability-weighted descriptors of one image.
pub fn image_descriptors(img: &RgbImage, cfg: &ReSiftConfig) -> Result<Vec<Descriptor>> {
    Ok(descriptors_timed(img, cfg)?.0)
}

/// Surviving matches between two descriptor sets.
pub fn match_and_filter(ref_desc: &[Descriptor], dist_desc: &[Descriptor], cfg: &ReSiftConfig) -> MatchSet {
    let matches = match_descriptors(ref_desc, dist_desc, &cfg.matching);
    let ref_kps: Vec<Keypoint> = ref_desc.iter().map(|d| d.keypoint).collect();
    let dist_kps: Vec<Keypoint> = dist_desc.iter().map(|d| d.keypoint).collect();
    geometric_filter(&matches, &ref_kps, &dist_kps, &cfg.matching)
}

/// Score from an already-filtered match set; zero matches score 0.
pub fn score_matches(matches: &MatchSet, cfg: &ReSiftConfig) -> (f64, Option<f64>) {
    match percentile_threshold(&matches.distances(), cfg.perc) {
        Ok(dist) => (nonlinear_map(dist, cfg.c1, cfg.c2), Some(dist)),
        Err(_) => (0.0, None),
    }
}

/// Full-reference quality of `dist_img` against `reference`.
///
/// Not symmetric: the ratio test runs from reference descriptors into the
/// distorted set.
pub fn resift_score(reference: &RgbImage, dist_img: &RgbImage, cfg: &ReSiftConfig) -> Result<QualityResult> {
    if reference.width() != dist_img.width() || reference.height() != dist_img.height() {
        return Err(Error::DimensionMismatch(format!(
            "reference {}x{} vs distorted {}x{}",
            reference.width(),
            reference.height(),
            dist_img.width(),
            dist_img.height()
        )));
    }
    let (a, b) = rayon::join(|| descriptors_timed(reference, cfg), || descriptors_timed(dist_img, cfg));
    let (ref_desc, mut timings) = a?;
    let (dist_desc, tb) = b?;
    timings.add(&tb);

    let filtered = timed(&mut timings.matching_ms, || match_and_filter(&ref_desc, &dist_desc, cfg));
    let (score, percentile_distance) = timed(&mut timings.pooling_ms, || score_matches(&filtered, cfg));
    Ok(QualityResult {
        score,
        matched_count: filtered.len(),
        percentile_distance,
        timings,
    })
}
