//! Geometric behaviour of the detector on textured maps.

#[path = "support/geometry.rs"]
mod geometry;

use geometry::{rotation_survival, scale_repeatability, texture_map, translation_repeatability};
use resift::sift::{extract, SiftParams, DESCRIPTOR_CLAMP, DESCRIPTOR_LEN};

#[test]
fn translation_keeps_most_keypoints() {
    for (seed, dx, dy) in [(1, 7, 5), (2, 16, 0), (3, 3, 11)] {
        let r = translation_repeatability(seed, dx, dy);
        assert!(r >= 0.8, "seed {seed} shift ({dx},{dy}): {r:.3}");
    }
}

#[test]
fn rotation_keeps_most_keypoints() {
    for (seed, deg) in [(4, 30.0f64), (5, 45.0), (6, 90.0)] {
        let r = rotation_survival(seed, deg.to_radians());
        assert!(r >= 0.6, "seed {seed} rotation {deg}: {r:.3}");
    }
}

#[test]
fn emitted_descriptors_satisfy_invariants() {
    for seed in 0..3 {
        let descs = extract(&texture_map(128, 96, seed), &SiftParams::default()).unwrap();
        assert!(!descs.is_empty());
        for d in &descs {
            assert_eq!(d.vector.len(), DESCRIPTOR_LEN);
            let n = d.norm();
            assert!(n == 0.0 || (n - 1.0).abs() < 1e-9, "norm {n}");
            assert!(d.vector.iter().all(|&v| (0.0..=DESCRIPTOR_CLAMP + 1e-12).contains(&v)));
        }
    }
}

#[test]
fn doubling_the_map_doubles_keypoint_scales() {
    let r = scale_repeatability(8);
    assert!(r >= 0.5, "scale repeatability {r:.3}");
}
