//! Full-reference image quality estimation by matching SIFT descriptors over
//! reliability-weighted lightness maps.
//!
//! Both images go through the same chain: Gaussian smoothing, conversion to
//! CIE lightness, tile-wise local normalization, and weighting by a spectral
//! residual saliency map. SIFT descriptors are extracted from the weighted
//! maps, matched with a ratio test, and a low percentile of the matched
//! distances is mapped to a score in `(0, 100]`.
//!
//! ```
//! use resift::{resift_score, synth, ReSiftConfig};
//!
//! let reference = synth::textured_image(96, 96, 7);
//! let cfg = ReSiftConfig::default();
//! let same = resift_score(&reference, &reference, &cfg).unwrap();
//! assert_eq!(same.score, 100.0);
//!
//! let blurred = synth::blur(&reference, 2.0);
//! let worse = resift_score(&reference, &blurred, &cfg).unwrap();
//! assert!(worse.score < same.score);
//! ```

// `!(x > 0.0)` is used on purpose so that NaN parameters are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod config;
pub mod error;
pub mod imageio;
pub mod matching;
pub mod normalize;
pub mod prefilter;
pub mod saliency;
pub mod score;
pub mod sift;
pub mod synth;

pub use config::ReSiftConfig;
pub use error::{Error, Result};
pub use imageio::{load_image, read_image, RgbImage, ScalarMap};
pub use score::{reliability_maps, resift_score, QualityResult};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/preprocessing.md")]
    mod preprocessing {}
    #[doc = include_str!("../../../book/src/saliency.md")]
    mod saliency {}
    #[doc = include_str!("../../../book/src/matching.md")]
    mod matching {}
    #[doc = include_str!("../../../book/src/scoring.md")]
    mod scoring {}
    #[doc = include_str!("../../../book/src/benchmarking.md")]
    mod benchmarking {}
    #[doc = include_str!("../../../book/src/configuration.md")]
    mod configuration {}
}
