//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints exactly one PASS, FAIL or SKIP line, and exits non-zero
//! if a blocking criterion fails.
//!
//! Criterion 7 needs licensed databases. Point `RESIFT_LIVE_MANIFEST` and
//! `RESIFT_MULTI_MANIFEST` at manifests for them to run it.

mod common;

#[path = "../../core/tests/support/geometry.rs"]
mod geometry;

use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resift::bench::{self, BenchFilter, BenchmarkReport, Category};
use resift::matching::{descriptor_distance, match_descriptors, ratio_accepts, Match, MatchParams};
use resift::normalize::{block_mean, block_std};
use resift::prefilter::convolve_replicate;
use resift::saliency::{forward_spectrum, inverse_spectrum};
use resift::score::percentile_threshold;
use resift::sift::{extract, Descriptor, Keypoint, SiftParams, DESCRIPTOR_CLAMP, DESCRIPTOR_LEN};
use resift::synth::{add_noise, blur, jpeg_like, rotate, textured_image};
use resift::{resift_score, ReSiftConfig, RgbImage, ScalarMap};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

use Outcome::{Fail, Pass, Skip};

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

/// Number, name, whether it blocks acceptance, and the check itself.
type Criterion = (u32, &'static str, bool, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        (1, "identity pinning", true, identity_pinning),
        (2, "default table fidelity", true, table_fidelity),
        (3, "degradation ordering", true, degradation_ordering),
        (4, "synthetic corpus correlation", true, synthetic_correlation),
        (5, "oracle equivalence", true, oracle_equivalence),
        (6, "SIFT properties", true, sift_properties),
        (7, "full-scale reproduction", false, full_scale_reproduction),
        (8, "determinism across --jobs", true, determinism),
    ];
    let mut blocking_failed = false;
    for (n, name, blocking, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Fail(format!("panicked: {msg}"))
        });
        let (tag, detail) = match outcome {
            Pass(d) => ("PASS", d),
            Fail(d) => {
                blocking_failed |= blocking;
                ("FAIL", d)
            }
            Skip(d) => ("SKIP", d),
        };
        let kind = if blocking { "" } else { " (non-blocking)" };
        println!("criterion {n} {name}{kind}: {tag}: {detail}");
    }
    if blocking_failed {
        std::process::exit(1);
    }
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(f)
}

fn identity_pinning() -> Outcome {
    let cfg = ReSiftConfig::default();
    let base = textured_image(160, 120, 7);
    let mut images: Vec<RgbImage> = (0..6).map(|s| textured_image(64 + 32 * s, 96, 300 + s as u64)).collect();
    images.push(blur(&base, 1.5));
    images.push(add_noise(&base, 12.0, 3));
    images.push(jpeg_like(&base, 20));
    images.push(rotate(&base, 0.4));
    let mut bad = Vec::new();
    for (i, img) in images.iter().enumerate() {
        let q = resift_score(img, img, &cfg).unwrap();
        if q.score != 100.0 {
            bad.push(format!("image {i} scored {}", q.score));
        }
    }

    let a = textured_image(512, 512, 11);
    let b = blur(&a, 1.0);
    let (elapsed, score) = single_threaded(|| {
        let t = Instant::now();
        let q = resift_score(&a, &b, &cfg).unwrap();
        (t.elapsed(), q.score)
    });
    let fast = elapsed < Duration::from_secs(5);
    if !fast {
        bad.push(format!("512x512 pair took {elapsed:.2?}"));
    }
    verdict(
        bad.is_empty(),
        format!(
            "{} images scored 100 exactly; 512x512 pair on one thread {elapsed:.2?} (score {score:.4}){}",
            images.len() - bad.len().min(images.len()),
            if bad.is_empty() { String::new() } else { format!("; {}", bad.join(", ")) }
        ),
    )
}

fn table_fidelity() -> Outcome {
    let out = common::run(&["config", "--show"]);
    let text = common::stdout(&out);
    let expected = [
        "f_size = 4",
        "f_sigma = 5",
        "kappa = 903.3",
        "epsilon = 0.008856",
        "W = 20",
        "g_size = 3",
        "h_size = 10",
        "h_sigma = 3.8",
        "thresh = 1.4",
        "perc = 5",
        "C1 = 100000",
        "C2 = 0.01",
    ];
    let missing: Vec<&str> = expected.iter().copied().filter(|l| !text.lines().any(|t| t == *l)).collect();
    verdict(
        out.status.success() && missing.is_empty(),
        if missing.is_empty() {
            format!("all {} values present", expected.len())
        } else {
            format!("missing {missing:?}")
        },
    )
}

fn degradation_ordering() -> Outcome {
    let cfg = ReSiftConfig::default();
    let mut violations = Vec::new();
    for seed in 200..205u64 {
        let img = textured_image(256, 256, seed);
        let s = |d: &RgbImage| resift_score(&img, d, &cfg).unwrap().score;
        let blurs = [s(&blur(&img, 0.5)), s(&blur(&img, 2.0)), s(&blur(&img, 4.0))];
        let (hi, lo) = (s(&jpeg_like(&img, 90)), s(&jpeg_like(&img, 10)));
        if !(blurs[0] > blurs[1] && blurs[1] > blurs[2]) {
            violations.push(format!("seed {seed} blur {blurs:.3?}"));
        }
        if hi <= lo {
            violations.push(format!("seed {seed} jpeg q90 {hi:.3} <= q10 {lo:.3}"));
        }
    }
    verdict(violations.is_empty(), format!("{} violations over 5 references{}", violations.len(), violations.iter().map(|v| format!("; {v}")).collect::<String>()))
}

/// Five references, eight strengths each of blur followed by noise. MOS
/// falls linearly with strength.
fn write_corpus(dir: &Path) -> PathBuf {
    let mut manifest = bench::MANIFEST_HEADER.join(",");
    manifest.push('\n');
    for r in 0..5u64 {
        let img = textured_image(256, 256, 100 + r);
        let ref_name = format!("ref{r}.ppm");
        img.save_ppm(dir.join(&ref_name)).unwrap();
        for t in 1..=8u64 {
            let d = add_noise(&blur(&img, 0.4 * t as f64), 2.5 * t as f64, 1000 + r * 10 + t);
            let name = format!("ref{r}_t{t}.ppm");
            d.save_ppm(dir.join(&name)).unwrap();
            let category = if t % 2 == 0 { "gblur" } else { "blur-noise" };
            writeln!(manifest, "{ref_name},{name},{},SYN,{category}", 100 - 10 * t).unwrap();
        }
    }
    let path = dir.join("corpus.csv");
    std::fs::write(&path, manifest).unwrap();
    path
}

fn synthetic_correlation() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_corpus(dir.path());
    let t = Instant::now();
    let report = bench::run_benchmark(&manifest, &ReSiftConfig::default(), &BenchFilter::default(), None).unwrap();
    let elapsed = t.elapsed();
    let syn = &report.databases["SYN"];
    let (rho, r) = (syn.spearman_raw.unwrap_or(f64::NAN), syn.pearson_fitted.unwrap_or(f64::NAN));
    verdict(
        syn.n == 40 && rho >= 0.85 && r >= 0.85 && elapsed < Duration::from_secs(300),
        format!("n={} spearman_raw={rho:.4} pearson_fitted={r:.4} in {elapsed:.1?}", syn.n),
    )
}

fn random_map(rng: &mut ChaCha8Rng, w: usize, h: usize) -> ScalarMap {
    ScalarMap::from_fn(w, h, |_, _| rng.gen_range(-50.0..150.0))
}

fn oracle_tile_stats(l: &ScalarMap, win: usize) -> (ScalarMap, ScalarMap) {
    let (w, h) = (l.width(), l.height());
    let mut mu = ScalarMap::filled(w, h, 0.0);
    let mut sd = ScalarMap::filled(w, h, 0.0);
    for ty in (0..h).step_by(win) {
        for tx in (0..w).step_by(win) {
            let cells: Vec<(usize, usize)> = (ty..(ty + win).min(h)).flat_map(|y| (tx..(tx + win).min(w)).map(move |x| (x, y))).collect();
            let n = cells.len() as f64;
            let m = cells.iter().map(|&(x, y)| l.get(x, y)).sum::<f64>() / n;
            let v = cells.iter().map(|&(x, y)| (l.get(x, y) - m).powi(2)).sum::<f64>() / n;
            for &(x, y) in &cells {
                mu.set(x, y, m);
                sd.set(x, y, v.sqrt());
            }
        }
    }
    (mu, sd)
}

fn oracle_convolve(map: &ScalarMap, k: &ScalarMap) -> ScalarMap {
    let (w, h) = (map.width() as isize, map.height() as isize);
    let (ax, ay) = ((k.width() as isize - 1) / 2, (k.height() as isize - 1) / 2);
    ScalarMap::from_fn(map.width(), map.height(), |x, y| {
        let mut acc = 0.0;
        for j in 0..k.height() {
            for i in 0..k.width() {
                let sx = (x as isize + i as isize - ax).clamp(0, w - 1);
                let sy = (y as isize + j as isize - ay).clamp(0, h - 1);
                acc += k.get(i, j) * map.get(sx as usize, sy as usize);
            }
        }
        acc
    })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn descriptor_at(vector: [f64; DESCRIPTOR_LEN], x: f64) -> Descriptor {
    Descriptor {
        keypoint: Keypoint {
            x,
            y: 0.0,
            scale: 2.0,
            orientation: 0.0,
            octave: 0,
            response: 1.0,
        },
        vector,
    }
}

fn oracle_matches(r: &[Descriptor], d: &[Descriptor], p: &MatchParams) -> Vec<Match> {
    let mut out = Vec::new();
    for (i, a) in r.iter().enumerate() {
        let mut all: Vec<(f64, usize)> = d.iter().enumerate().map(|(j, b)| (descriptor_distance(&a.vector, &b.vector, p), j)).collect();
        all.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        if let Some(&(d1, j)) = all.first() {
            if ratio_accepts(d1, all.get(1).map(|s| s.0), p.ratio_thresh) {
                out.push(Match {
                    ref_index: i,
                    dist_index: j,
                    distance: d1,
                });
            }
        }
    }
    out
}

fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

fn oracle_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|a| {
            let less = v.iter().filter(|b| *b < a).count() as f64;
            let equal = v.iter().filter(|b| *b == a).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

fn oracle_equivalence() -> Outcome {
    const INSTANCES: usize = 100;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut failures: Vec<String> = Vec::new();
    let mut worst = [0.0f64; 4];

    for i in 0..INSTANCES {
        let (w, h) = (rng.gen_range(1..60), rng.gen_range(1..60));
        let win = rng.gen_range(1..25);
        let l = random_map(&mut rng, w, h);
        let (mu_o, sd_o) = oracle_tile_stats(&l, win);
        let mu = block_mean(&l, win);
        let e = max_abs_diff(mu.values(), mu_o.values()).max(max_abs_diff(block_std(&l, &mu, win).values(), sd_o.values()));
        worst[0] = worst[0].max(e);
        if e > 1e-9 {
            failures.push(format!("tile stats instance {i}: {e:e}"));
        }
    }

    for i in 0..INSTANCES {
        let (kw, kh) = (rng.gen_range(1..8), rng.gen_range(1..8));
        let (w, h) = (rng.gen_range(kw..40), rng.gen_range(kh..40));
        let map = random_map(&mut rng, w, h);
        let k = ScalarMap::from_fn(kw, kh, |_, _| rng.gen_range(-1.0..1.0));
        let got = convolve_replicate(&map, &k).unwrap();
        let want = oracle_convolve(&map, &k);
        let scale = want.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let e = max_abs_diff(got.values(), want.values()) / scale;
        worst[1] = worst[1].max(e);
        if e > 1e-9 {
            failures.push(format!("convolution instance {i}: {e:e}"));
        }
    }

    const PRIMES: [usize; 8] = [2, 3, 7, 13, 31, 37, 61, 97];
    for i in 0..INSTANCES {
        let (w, h) = if i < PRIMES.len() * 2 {
            (PRIMES[i % PRIMES.len()], PRIMES[(i + 3) % PRIMES.len()])
        } else {
            (rng.gen_range(1..80), rng.gen_range(1..80))
        };
        let map = random_map(&mut rng, w, h);
        let back = inverse_spectrum(&forward_spectrum(&map));
        let e = max_abs_diff(back.values(), map.values());
        worst[2] = worst[2].max(e);
        if e > 1e-9 {
            failures.push(format!("FFT round trip {w}x{h}: {e:e}"));
        }
    }

    for i in 0..INSTANCES {
        let n = rng.gen_range(1..200);
        // Few distinct values so ties are common.
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0..40) as f64 * 0.25).collect();
        let perc = if i % 5 == 0 { 100.0 } else { rng.gen_range(0.01..100.0) };
        let rank = ((perc * n as f64 / 100.0).ceil() as usize).clamp(1, n) - 1;
        let got = percentile_threshold(&v, perc).unwrap();
        let below = v.iter().filter(|&&x| x < got).count();
        let at_most = v.iter().filter(|&&x| x <= got).count();
        if !(below <= rank && rank < at_most) {
            failures.push(format!("percentile instance {i}"));
        }
    }

    for i in 0..INSTANCES {
        let params = if i % 2 == 0 { MatchParams::default() } else { MatchParams::euclidean(1.5) };
        let gen = |rng: &mut ChaCha8Rng| {
            let mut v = [0.0; DESCRIPTOR_LEN];
            v.iter_mut().for_each(|c| *c = rng.gen_range(0..4) as f64 * 0.05);
            v
        };
        let r: Vec<Descriptor> = (0..rng.gen_range(0..25)).map(|k| descriptor_at(gen(&mut rng), k as f64)).collect();
        let mut d: Vec<Descriptor> = (0..rng.gen_range(0..25)).map(|k| descriptor_at(gen(&mut rng), k as f64)).collect();
        // Copies of reference vectors produce exact matches and ties.
        for (k, a) in r.iter().enumerate().filter(|(k, _)| k % 3 == 0) {
            d.push(descriptor_at(a.vector, 100.0 + k as f64));
        }
        if match_descriptors(&r, &d, &params).pairs != oracle_matches(&r, &d, &params) {
            failures.push(format!("matching instance {i}"));
        }
    }

    for i in 0..INSTANCES {
        let n = rng.gen_range(3..60);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0..15) as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v * rng.gen_range(-1.0..2.0) + rng.gen_range(0..10) as f64).collect();
        let (Ok(p), Ok(s)) = (bench::pearson(&x, &y), bench::spearman(&x, &y)) else {
            continue;
        };
        let e = (p - oracle_pearson(&x, &y)).abs().max((s - oracle_pearson(&oracle_ranks(&x), &oracle_ranks(&y))).abs());
        worst[3] = worst[3].max(e);
        if e > 1e-12 {
            failures.push(format!("correlation instance {i}: {e:e}"));
        }
    }

    verdict(
        failures.is_empty(),
        format!(
            "6 suites x {INSTANCES} instances; worst tile {:.1e}, conv rel {:.1e}, fft {:.1e}, corr {:.1e}{}",
            worst[0],
            worst[1],
            worst[2],
            worst[3],
            failures.iter().take(5).map(|f| format!("; {f}")).collect::<String>()
        ),
    )
}

fn sift_properties() -> Outcome {
    let p = SiftParams::default();
    let mut notes = Vec::new();
    let mut ok = true;

    let constant = extract(&ScalarMap::filled(128, 128, 0.7), &p).unwrap().len();
    ok &= constant == 0;
    notes.push(format!("constant map {constant} keypoints"));

    let (cx, cy) = (47.3, 50.6);
    let blob = ScalarMap::from_fn(96, 96, |x, y| (-((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) / 32.0).exp());
    let offset = extract(&blob, &p)
        .unwrap()
        .iter()
        .map(|d| (d.keypoint.x - cx).hypot(d.keypoint.y - cy))
        .fold(f64::INFINITY, f64::min);
    ok &= offset <= 2.0;
    notes.push(format!("blob offset {offset:.2} px"));

    let translation = [(1, 7, 5), (2, 16, 0), (3, 3, 11)].map(|(s, dx, dy)| geometry::translation_repeatability(s, dx, dy));
    let t_min = translation.iter().copied().fold(1.0, f64::min);
    ok &= t_min >= 0.8;
    notes.push(format!("translation min {:.0}%", 100.0 * t_min));

    let rotation = [(4, 30.0f64), (5, 45.0), (6, 90.0)].map(|(s, deg)| geometry::rotation_survival(s, deg.to_radians()));
    let r_min = rotation.iter().copied().fold(1.0, f64::min);
    ok &= r_min >= 0.6;
    notes.push(format!("rotation min {:.0}%", 100.0 * r_min));

    let mut checked = 0;
    let mut bad = 0;
    for seed in 0..5 {
        for d in extract(&geometry::texture_map(160, 128, seed), &p).unwrap() {
            let n = d.norm();
            let unit_or_zero = n == 0.0 || (n - 1.0).abs() < 1e-9;
            let clamped = d.vector.iter().all(|&v| (0.0..=DESCRIPTOR_CLAMP + 1e-12).contains(&v));
            checked += 1;
            bad += usize::from(d.vector.len() != 128 || !unit_or_zero || !clamped);
        }
    }
    ok &= checked > 0 && bad == 0;
    notes.push(format!("{bad} of {checked} descriptors violate invariants"));
    verdict(ok, notes.join(", "))
}

fn full_scale_reproduction() -> Outcome {
    let targets = [("RESIFT_LIVE_MANIFEST", "LIVE", 0.961, 0.962), ("RESIFT_MULTI_MANIFEST", "MULTI", 0.906, 0.887)];
    let present: Vec<_> = targets.iter().filter_map(|t| std::env::var_os(t.0).map(|p| (t, PathBuf::from(p)))).collect();
    if present.is_empty() {
        return Skip("set RESIFT_LIVE_MANIFEST and RESIFT_MULTI_MANIFEST to run".into());
    }
    let cfg = ReSiftConfig::default();
    let mut ok = true;
    let mut notes = Vec::new();
    let mut counts = [0usize; 4];
    for ((var, label, want_r, want_rho), path) in &present {
        let report = match bench::run_benchmark(path, &cfg, &BenchFilter::default(), None) {
            Ok(r) => r,
            Err(e) => {
                ok = false;
                notes.push(format!("{var}: {e}"));
                continue;
            }
        };
        for (db, r) in &report.databases {
            let (pr, sr) = (r.pearson_fitted.unwrap_or(f64::NAN), r.spearman_raw.unwrap_or(f64::NAN));
            ok &= (pr - want_r).abs() <= 0.03 && (sr - want_rho).abs() <= 0.03;
            notes.push(format!("{label}/{db} n={} pearson {pr:.3} (target {want_r}) spearman {sr:.3} (target {want_rho})", r.n));
            for (i, c) in Category::ALL.iter().enumerate() {
                counts[i] += r.categories.get(c).map_or(0, |c| c.n);
            }
        }
    }
    if present.len() == targets.len() {
        ok &= counts == [685, 399, 174, 624];
        notes.push(format!("category counts {counts:?} (target [685, 399, 174, 624])"));
    } else {
        ok = false;
        notes.push("only one database manifest set".into());
    }
    verdict(ok, notes.join("; "))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let manifest = common::path_str(&write_corpus(dir.path()));
    let mut outputs = Vec::new();
    for jobs in ["1", "8"] {
        let report = dir.path().join(format!("jobs{jobs}.json"));
        let out = common::run(&["bench", "--manifest", &manifest, "--report", &common::path_str(&report), "--jobs", jobs]);
        if !out.status.success() {
            return Fail(format!("bench --jobs {jobs} failed: {}", common::stderr(&out)));
        }
        let json = std::fs::read(&report).unwrap();
        let scatter = std::fs::read(BenchmarkReport::scatter_path(&report, "SYN")).unwrap();
        outputs.push((json, scatter, out.stdout));
    }
    let same = outputs[0] == outputs[1];
    verdict(
        same,
        format!(
            "report {} bytes, scatter {} bytes, stdout {}",
            outputs[0].0.len(),
            outputs[0].1.len(),
            if same { "all identical" } else { "differ" }
        ),
    )
}
