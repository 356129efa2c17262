//! Estimator configuration and its flat `key = value` text form.
//!
//! Keys carry the conventional parameter names (`f_size`, `W`, `thresh`,
//! `C1`, ...). Lines starting with `#` are comments; unknown or repeated keys
//! are errors. Missing keys keep their default.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bench::RegressionForm;
use crate::error::{Error, Result};
use crate::matching::MatchParams;
use crate::normalize::LocalNormParams;
use crate::prefilter::{ColorTransformParams, GaussianKernelSpec};
use crate::saliency::SpectralParams;
use crate::sift::SiftParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReSiftConfig {
    pub filter: GaussianKernelSpec,
    pub color: ColorTransformParams,
    pub norm: LocalNormParams,
    pub spectral: SpectralParams,
    pub sift: SiftParams,
    #[serde(rename = "match")]
    pub matching: MatchParams,
    /// Percentile of matched distances, in `(0, 100]`.
    pub perc: f64,
    pub c1: f64,
    pub c2: f64,
    pub regression: RegressionForm,
}

impl Default for ReSiftConfig {
    fn default() -> Self {
        Self {
            filter: GaussianKernelSpec::default(),
            color: ColorTransformParams::default(),
            norm: LocalNormParams::default(),
            spectral: SpectralParams::default(),
            sift: SiftParams::default(),
            matching: MatchParams::default(),
            perc: 5.0,
            c1: 100_000.0,
            c2: 0.01,
            regression: RegressionForm::Literal,
        }
    }
}

fn parse_num<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config {
        line,
        reason: format!("invalid value {value:?} for {key}"),
    })
}

fn parse_list<const N: usize>(line: usize, key: &str, value: &str) -> Result<[f64; N]> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(Error::Config {
            line,
            reason: format!("{key} needs {N} comma-separated values, got {}", parts.len()),
        });
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = parse_num(line, key, p)?;
    }
    Ok(out)
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(", ")
}

impl ReSiftConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse()
    }

    fn set(&mut self, line: usize, key: &str, value: &str) -> Result<()> {
        match key {
            "f_size" => self.filter.size = parse_num(line, key, value)?,
            "f_sigma" => self.filter.sigma = parse_num(line, key, value)?,
            "kappa" => self.color.kappa = parse_num(line, key, value)?,
            "epsilon" => self.color.epsilon = parse_num(line, key, value)?,
            "gamma" => self.color.gamma = parse_num(line, key, value)?,
            "M" => {
                let m: [f64; 9] = parse_list(line, key, value)?;
                for (r, row) in self.color.matrix.iter_mut().enumerate() {
                    row.copy_from_slice(&m[3 * r..3 * r + 3]);
                }
            }
            "white_point" => self.color.white_point = parse_list(line, key, value)?,
            "W" => self.norm.window = parse_num(line, key, value)?,
            "sigma_floor" => self.norm.sigma_floor = parse_num(line, key, value)?,
            "g_size" => self.spectral.avg_size = parse_num(line, key, value)?,
            "h_size" => self.spectral.smooth_size = parse_num(line, key, value)?,
            "h_sigma" => self.spectral.smooth_sigma = parse_num(line, key, value)?,
            "log_floor" => self.spectral.log_floor = parse_num(line, key, value)?,
            "levels_per_octave" => self.sift.levels_per_octave = parse_num(line, key, value)?,
            "base_sigma" => self.sift.base_sigma = parse_num(line, key, value)?,
            "input_sigma" => self.sift.input_sigma = parse_num(line, key, value)?,
            "peak_threshold" => self.sift.peak_threshold = parse_num(line, key, value)?,
            "edge_threshold" => self.sift.edge_threshold = parse_num(line, key, value)?,
            "upsample" => self.sift.upsample = parse_num(line, key, value)?,
            "input_scale" => self.sift.input_scale = parse_num(line, key, value)?,
            "thresh" => self.matching.ratio_thresh = parse_num(line, key, value)?,
            "geo_radius" => self.matching.geo_radius = parse_num(line, key, value)?,
            "descriptor_scale" => self.matching.descriptor_scale = parse_num(line, key, value)?,
            "squared_distance" => self.matching.squared_distance = parse_num(line, key, value)?,
            "perc" => self.perc = parse_num(line, key, value)?,
            "C1" => self.c1 = parse_num(line, key, value)?,
            "C2" => self.c2 = parse_num(line, key, value)?,
            "regression" => self.regression = parse_num(line, key, value)?,
            _ => {
                return Err(Error::Config {
                    line,
                    reason: format!("unknown key {key:?}"),
                })
            }
        }
        Ok(())
    }

    /// Checks every parameter range the pipeline relies on.
    pub fn validate(&self) -> Result<()> {
        let checks: [(bool, &str); 17] = [
            (self.filter.size >= 1, "f_size must be at least 1"),
            (self.filter.sigma > 0.0, "f_sigma must be positive"),
            (self.color.kappa > 0.0 && self.color.epsilon > 0.0, "kappa and epsilon must be positive"),
            (self.color.gamma > 0.0, "gamma must be positive"),
            (self.color.white_point[1] > 0.0, "white_point Y must be positive"),
            (self.norm.window >= 2, "W must be at least 2"),
            (self.norm.sigma_floor > 0.0, "sigma_floor must be positive"),
            (self.spectral.avg_size >= 1 && self.spectral.smooth_size >= 1, "g_size and h_size must be at least 1"),
            (self.spectral.smooth_sigma > 0.0, "h_sigma must be positive"),
            (self.spectral.log_floor > 0.0, "log_floor must be positive"),
            (self.sift.levels_per_octave >= 1, "levels_per_octave must be at least 1"),
            (self.sift.base_sigma > self.sift.input_sigma * if self.sift.upsample { 2.0 } else { 1.0 } && self.sift.input_sigma >= 0.0, "base_sigma must exceed the (upsampled) input blur"),
            (self.sift.edge_threshold > 0.0 && self.sift.peak_threshold >= 0.0 && self.sift.input_scale > 0.0, "SIFT thresholds and input_scale out of range"),
            (self.matching.ratio_thresh > 1.0, "thresh must exceed 1"),
            (self.matching.geo_radius > 0.0 && self.matching.descriptor_scale > 0.0, "geo_radius and descriptor_scale must be positive"),
            (self.perc > 0.0 && self.perc <= 100.0, "perc must lie in (0, 100]"),
            (self.c1 > 0.0 && self.c2 > 0.0, "C1 and C2 must be positive"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, reason)) => Err(Error::Config {
                line: 0,
                reason: (*reason).to_string(),
            }),
            None => Ok(()),
        }
    }
}

impl FromStr for ReSiftConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = ReSiftConfig::default();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
                line,
                reason: format!("expected `key = value`, got {content:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config {
                    line,
                    reason: format!("repeated key {key:?}"),
                });
            }
            cfg.set(line, key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for ReSiftConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flat: Vec<f64> = self.color.matrix.iter().flatten().copied().collect();
        writeln!(f, "# low-pass filter")?;
        writeln!(f, "f_size = {}", self.filter.size)?;
        writeln!(f, "f_sigma = {}", self.filter.sigma)?;
        writeln!(f, "# colour transform (Adobe RGB 1998, D65)")?;
        writeln!(f, "kappa = {}", self.color.kappa)?;
        writeln!(f, "epsilon = {}", self.color.epsilon)?;
        writeln!(f, "gamma = {}", self.color.gamma)?;
        writeln!(f, "M = {}", join(&flat))?;
        writeln!(f, "white_point = {}", join(&self.color.white_point))?;
        writeln!(f, "# local normalization")?;
        writeln!(f, "W = {}", self.norm.window)?;
        writeln!(f, "sigma_floor = {}", self.norm.sigma_floor)?;
        writeln!(f, "# spectral residual")?;
        writeln!(f, "g_size = {}", self.spectral.avg_size)?;
        writeln!(f, "h_size = {}", self.spectral.smooth_size)?;
        writeln!(f, "h_sigma = {}", self.spectral.smooth_sigma)?;
        writeln!(f, "log_floor = {}", self.spectral.log_floor)?;
        writeln!(f, "# SIFT")?;
        writeln!(f, "levels_per_octave = {}", self.sift.levels_per_octave)?;
        writeln!(f, "base_sigma = {}", self.sift.base_sigma)?;
        writeln!(f, "input_sigma = {}", self.sift.input_sigma)?;
        writeln!(f, "peak_threshold = {}", self.sift.peak_threshold)?;
        writeln!(f, "edge_threshold = {}", self.sift.edge_threshold)?;
        writeln!(f, "upsample = {}", self.sift.upsample)?;
        writeln!(f, "input_scale = {}", self.sift.input_scale)?;
        writeln!(f, "# descriptor matching")?;
        writeln!(f, "thresh = {}", self.matching.ratio_thresh)?;
        writeln!(f, "geo_radius = {}", self.matching.geo_radius)?;
        writeln!(f, "descriptor_scale = {}", self.matching.descriptor_scale)?;
        writeln!(f, "squared_distance = {}", self.matching.squared_distance)?;
        writeln!(f, "# percentile pooling and score mapping")?;
        writeln!(f, "perc = {}", self.perc)?;
        writeln!(f, "C1 = {}", self.c1)?;
        writeln!(f, "C2 = {}", self.c2)?;
        writeln!(f, "# benchmark regression: literal | canonical")?;
        writeln!(f, "regression = {}", self.regression)
    }
}
