//! Benchmark harness: manifest ingestion, monotonic regression, Pearson and
//! Spearman correlation per database and per distortion category.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ReSiftConfig;
use crate::error::{Error, Result};
use crate::imageio::load_image;
use crate::score::{image_descriptors, match_and_filter, score_matches};
use crate::sift::Descriptor;

pub const MANIFEST_HEADER: [&str; 5] = ["ref", "dist", "mos", "database", "category"];

/// Fraction of failed records above which a benchmark run aborts.
pub const MAX_FAILURE_FRACTION: f64 = 0.10;

/// Which five-parameter logistic is fitted between raw scores and MOS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressionForm {
    /// `b1·(1 − 1/(2 + e^{b2(x − b3)})) + b4·x + b5`
    #[default]
    Literal,
    /// `b1·(1/2 − 1/(1 + e^{b2(x − b3)})) + b4·x + b5`
    Canonical,
}

impl FromStr for RegressionForm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "literal" => Ok(Self::Literal),
            "canonical" => Ok(Self::Canonical),
            other => Err(format!("unknown regression form {other:?}")),
        }
    }
}

impl fmt::Display for RegressionForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Literal => "literal",
            Self::Canonical => "canonical",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Compression,
    Noise,
    Communication,
    Blur,
}

impl Category {
    pub const ALL: [Category; 4] = [Self::Compression, Self::Noise, Self::Communication, Self::Blur];

    /// Categories a distortion label belongs to. Combined distortions of a
    /// blurred image count in two categories.
    pub fn from_label(label: &str) -> Option<&'static [Category]> {
        let key: String = label
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        use Category::*;
        Some(match key.as_str() {
            "compression" | "jpeg" | "jpg" | "jp2k" | "jpeg2000" => &[Compression],
            "noise" | "wn" | "whitenoise" | "awgn" => &[Noise],
            "communication" | "ff" | "fastfading" => &[Communication],
            "blur" | "gblur" | "gaussianblur" => &[Blur],
            "blurjpeg" | "blurjpg" => &[Compression, Blur],
            "blurnoise" => &[Noise, Blur],
            _ => return None,
        })
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Category::ALL
            .into_iter()
            .find(|c| c.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown category {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub ref_path: PathBuf,
    pub dist_path: PathBuf,
    pub mos: f64,
    pub database: String,
    /// The label as written in the manifest.
    pub distortion: String,
    pub categories: Vec<Category>,
}

/// Reads a manifest. Relative image paths resolve against the manifest's
/// directory.
pub fn parse_manifest(path: impl AsRef<Path>) -> Result<Vec<BenchmarkRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    parse_manifest_str(&text, base)
}

pub fn parse_manifest_str(text: &str, base: &Path) -> Result<Vec<BenchmarkRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    let mut header_seen = false;
    for row in reader.records() {
        let row = row.map_err(|e| Error::MalformedRow {
            line: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        if !header_seen {
            let fields: Vec<String> = row.iter().map(str::to_ascii_lowercase).collect();
            if fields != MANIFEST_HEADER {
                return Err(Error::MalformedRow {
                    line,
                    reason: format!("expected header {:?}", MANIFEST_HEADER.join(",")),
                });
            }
            header_seen = true;
            continue;
        }
        if row.len() != MANIFEST_HEADER.len() {
            return Err(Error::MalformedRow {
                line,
                reason: format!("expected 5 fields, found {}", row.len()),
            });
        }
        let mos: f64 = row[2].parse().map_err(|_| Error::MalformedRow {
            line,
            reason: format!("mos {:?} is not a number", &row[2]),
        })?;
        if !mos.is_finite() {
            return Err(Error::MalformedRow {
                line,
                reason: "mos must be finite".into(),
            });
        }
        if row[0].is_empty() || row[1].is_empty() || row[3].is_empty() {
            return Err(Error::MalformedRow {
                line,
                reason: "empty path or database field".into(),
            });
        }
        let categories = Category::from_label(&row[4]).ok_or_else(|| Error::UnknownCategory {
            line,
            label: row[4].to_string(),
        })?;
        let ref_path = base.join(&row[0]);
        let dist_path = base.join(&row[1]);
        if !seen.insert((ref_path.clone(), dist_path.clone())) {
            return Err(Error::DuplicatePair { line });
        }
        records.push(BenchmarkRecord {
            ref_path,
            dist_path,
            mos,
            database: row[3].to_string(),
            distortion: row[4].to_string(),
            categories: categories.to_vec(),
        });
    }
    if !header_seen {
        return Err(Error::MalformedRow {
            line: 1,
            reason: "missing header".into(),
        });
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// Correlation

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DegenerateData(format!("lengths {} and {} differ", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::DegenerateData(format!("{} samples, need at least 3", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateData("non-finite sample".into()));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample Pearson correlation, two-pass.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateData("constant input".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the average of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && v[order[j]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

// ---------------------------------------------------------------------------
// Regression

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionParams {
    pub beta: [f64; 5],
    pub form: RegressionForm,
}

fn logistic_term(form: RegressionForm, z: f64) -> f64 {
    // Clamped so large arguments saturate instead of producing NaN.
    let e = z.clamp(-700.0, 700.0).exp();
    match form {
        RegressionForm::Literal => 1.0 - 1.0 / (2.0 + e),
        RegressionForm::Canonical => 0.5 - 1.0 / (1.0 + e),
    }
}

fn eval(form: RegressionForm, b: &[f64; 5], x: f64) -> f64 {
    b[0] * logistic_term(form, b[1] * (x - b[2])) + b[3] * x + b[4]
}

impl RegressionParams {
    pub fn apply(&self, raw: f64) -> f64 {
        eval(self.form, &self.beta, raw)
    }

    pub fn apply_all(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter().map(|&x| self.apply(x)).collect()
    }
}

fn sse(form: RegressionForm, b: &[f64; 5], raw: &[f64], mos: &[f64]) -> f64 {
    let s: f64 = raw.iter().zip(mos).map(|(&x, &y)| (eval(form, b, x) - y).powi(2)).sum();
    if s.is_finite() {
        s
    } else {
        f64::INFINITY
    }
}

const NM_TOLERANCE: f64 = 1e-10;
const NM_MAX_ITER: usize = 2000;

/// Nelder–Mead on five parameters. The best vertex never gets worse, so the
/// result is at least as good as `start`.
fn nelder_mead(f: impl Fn(&[f64; 5]) -> f64, start: [f64; 5], steps: [f64; 5]) -> ([f64; 5], f64) {
    const N: usize = 5;
    let mut simplex: Vec<([f64; N], f64)> = Vec::with_capacity(N + 1);
    simplex.push((start, f(&start)));
    for i in 0..N {
        let mut p = start;
        p[i] += steps[i];
        simplex.push((p, f(&p)));
    }
    let lerp = |a: &[f64; N], b: &[f64; N], t: f64| -> [f64; N] { std::array::from_fn(|i| a[i] + t * (b[i] - a[i])) };

    for _ in 0..NM_MAX_ITER {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[N].1);
        if (worst - best).abs() <= NM_TOLERANCE * (1.0 + best.abs()) {
            break;
        }
        let centroid: [f64; N] = std::array::from_fn(|i| simplex[..N].iter().map(|v| v.0[i]).sum::<f64>() / N as f64);
        let w = simplex[N].0;
        let reflected = lerp(&centroid, &w, -1.0);
        let fr = f(&reflected);
        if fr < simplex[0].1 {
            let expanded = lerp(&centroid, &w, -2.0);
            let fe = f(&expanded);
            simplex[N] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[N - 1].1 {
            simplex[N] = (reflected, fr);
        } else {
            let (target, ft) = if fr < simplex[N].1 { (reflected, fr) } else { (w, simplex[N].1) };
            let contracted = lerp(&centroid, &target, 0.5);
            let fc = f(&contracted);
            if fc < ft {
                simplex[N] = (contracted, fc);
            } else {
                let b = simplex[0].0;
                for v in simplex.iter_mut().skip(1) {
                    v.0 = lerp(&b, &v.0, 0.5);
                    v.1 = f(&v.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0]
}

/// Least-squares affine fit `y ≈ a·x + c`.
fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let a = sxy / sxx;
    (a, my - a * mx)
}

/// The five deterministic starting points, derived from data statistics.
///
/// The first is the least-squares line with no logistic component, so the
/// fitted Pearson is never below the magnitude of the raw Pearson.
fn starts(raw: &[f64], mos: &[f64], form: RegressionForm) -> Vec<[f64; 5]> {
    let (lo, hi) = raw.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let xr = hi - lo;
    let (mlo, mhi) = mos.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let mr = mhi - mlo;
    let mut sorted = raw.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let (a, c) = ols(raw, mos);
    let sign = if a >= 0.0 { 1.0 } else { -1.0 };
    // Offset of the logistic term at its midpoint, so b5 centres the curve.
    let mid = logistic_term(form, 0.0);
    let my = mean(mos);
    vec![
        [0.0, sign * 4.0 / xr, median, a, c],
        [sign * mr, 4.0 / xr, median, 0.0, my - sign * mr * mid],
        [sign * mr, 10.0 / xr, mean(raw), 0.0, my - sign * mr * mid],
        [sign * mr / 2.0, 2.0 / xr, median, a / 2.0, my - a / 2.0 * median - sign * mr / 2.0 * mid],
        [sign * 2.0 * mr, 1.0 / xr, lo + 0.25 * xr, 0.0, my - sign * 2.0 * mr * mid],
    ]
}

/// Fits the configured logistic to `(raw, mos)` by multi-start simplex search.
pub fn fit_regression(raw: &[f64], mos: &[f64], form: RegressionForm) -> Result<RegressionParams> {
    if raw.len() != mos.len() {
        return Err(Error::DegenerateData(format!("lengths {} and {} differ", raw.len(), mos.len())));
    }
    if raw.len() < 5 {
        return Err(Error::DegenerateData(format!("{} samples, need at least 5", raw.len())));
    }
    if raw.iter().chain(mos).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateData("non-finite sample".into()));
    }
    let constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    if constant(raw) || constant(mos) {
        return Err(Error::DegenerateData("constant raw scores or MOS".into()));
    }

    let objective = |b: &[f64; 5]| sse(form, b, raw, mos);
    let mut best: Option<([f64; 5], f64)> = None;
    for start in starts(raw, mos, form) {
        let steps: [f64; 5] = std::array::from_fn(|i| if start[i] != 0.0 { 0.1 * start[i].abs() } else { 0.1 });
        let candidate = nelder_mead(objective, start, steps);
        if best.is_none_or(|b| candidate.1 < b.1) {
            best = Some(candidate);
        }
    }
    let (beta, _) = best.expect("at least one start");
    Ok(RegressionParams { beta, form })
}

// ---------------------------------------------------------------------------
// Running a benchmark

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BenchFilter {
    pub database: Option<String>,
    pub category: Option<Category>,
}

impl BenchFilter {
    pub fn accepts(&self, r: &BenchmarkRecord) -> bool {
        self.database.as_ref().is_none_or(|d| d.eq_ignore_ascii_case(&r.database))
            && self.category.is_none_or(|c| r.categories.contains(&c))
    }
}

/// Outcome of scoring one manifest row.
#[derive(Debug, Clone, PartialEq)]
pub struct PairScore {
    pub score: f64,
    pub matched_count: usize,
    pub percentile_distance: Option<f64>,
}

type RefEntry = (usize, usize, Vec<Descriptor>);

fn reference_descriptors(path: &Path, cfg: &ReSiftConfig) -> Result<RefEntry> {
    let img = load_image(path)?;
    Ok((img.width(), img.height(), image_descriptors(&img, cfg)?))
}

fn score_against(reference: &Result<RefEntry>, dist_path: &Path, cfg: &ReSiftConfig) -> Result<PairScore> {
    let (w, h, ref_desc) = match reference {
        Ok(r) => r,
        Err(e) => return Err(clone_error(e)),
    };
    let img = load_image(dist_path)?;
    if img.width() != *w || img.height() != *h {
        return Err(Error::DimensionMismatch(format!(
            "reference {w}x{h} vs distorted {}x{} ({})",
            img.width(),
            img.height(),
            dist_path.display()
        )));
    }
    let dist_desc = image_descriptors(&img, cfg)?;
    let matches = match_and_filter(ref_desc, &dist_desc, cfg);
    let (score, percentile_distance) = score_matches(&matches, cfg);
    Ok(PairScore {
        score,
        matched_count: matches.len(),
        percentile_distance,
    })
}

// A reference that fails to load is shared by several rows; each row gets
// its own copy of the error.
fn clone_error(e: &Error) -> Error {
    match e {
        Error::Io { path, source } => Error::Io {
            path: path.clone(),
            source: std::io::Error::new(source.kind(), source.to_string()),
        },
        Error::UnsupportedFormat(s) => Error::UnsupportedFormat(s.clone()),
        Error::CorruptFile { path, reason } => Error::CorruptFile {
            path: path.clone(),
            reason: reason.clone(),
        },
        Error::ImageTooSmall { width, height, min } => Error::ImageTooSmall {
            width: *width,
            height: *height,
            min: *min,
        },
        other => Error::DegenerateData(other.to_string()),
    }
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match jobs {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        None => f(),
    }
}

/// Scores every record, in manifest order. Each reference image is analysed
/// once and shared by the rows that use it.
pub fn score_records(records: &[BenchmarkRecord], cfg: &ReSiftConfig, jobs: Option<usize>) -> Vec<Result<PairScore>> {
    with_pool(jobs, || {
        let mut unique: Vec<&Path> = Vec::new();
        let mut index: HashMap<&Path, usize> = HashMap::new();
        for r in records {
            index.entry(r.ref_path.as_path()).or_insert_with(|| {
                unique.push(r.ref_path.as_path());
                unique.len() - 1
            });
        }
        let refs: Vec<Result<RefEntry>> = unique.par_iter().map(|p| reference_descriptors(p, cfg)).collect();
        records
            .par_iter()
            .map(|r| score_against(&refs[index[r.ref_path.as_path()]], &r.dist_path, cfg))
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub n: usize,
    pub pearson_fitted: Option<f64>,
    pub spearman_raw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureEntry {
    /// Zero-based row index among the manifest's data rows.
    pub row: usize,
    pub reference: String,
    pub distorted: String,
    pub error: String,
}

/// Correlations published with the original method, copied verbatim for
/// side-by-side reading. Not computed here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedReference {
    pub pearson: f64,
    pub spearman: f64,
    pub note: String,
}

fn published_reference(database: &str) -> Option<PublishedReference> {
    let (pearson, spearman) = match database.to_ascii_uppercase().as_str() {
        "LIVE" => (0.961, 0.962),
        "MULTI" | "LIVE-MULTI" | "LIVEMD" => (0.906, 0.887),
        _ => return None,
    };
    Some(PublishedReference {
        pearson,
        spearman,
        note: "transcribed published values, not computed by this run".into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatabaseReport {
    pub n: usize,
    pub pearson_fitted: Option<f64>,
    pub spearman_raw: Option<f64>,
    pub beta: Option<[f64; 5]>,
    pub regression: RegressionForm,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<String>,
    pub categories: BTreeMap<Category, CategoryReport>,
    pub failures: Vec<FailureEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_published: Option<PublishedReference>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub raw_score: f64,
    pub regressed_score: Option<f64>,
    pub mos: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchmarkReport {
    pub databases: BTreeMap<String, DatabaseReport>,
    pub scatter: BTreeMap<String, Vec<ScatterRow>>,
}

fn correlations(raw: &[f64], mos: &[f64], fit: Option<&RegressionParams>) -> (Option<f64>, Option<f64>, Option<String>) {
    let spearman_raw = spearman(raw, mos);
    let pearson_fitted = match fit {
        Some(p) => pearson(&p.apply_all(raw), mos),
        None => Err(Error::DegenerateData("no regression fit".into())),
    };
    let status = match (&pearson_fitted, &spearman_raw) {
        (Err(e), _) | (_, Err(e)) => Some(e.to_string()),
        _ => None,
    };
    (pearson_fitted.ok(), spearman_raw.ok(), status)
}

/// Scores every selected pair and aggregates correlations per database and
/// category. Regression is fitted per database; categories reuse that fit.
pub fn run_benchmark(
    manifest: impl AsRef<Path>,
    cfg: &ReSiftConfig,
    filter: &BenchFilter,
    jobs: Option<usize>,
) -> Result<BenchmarkReport> {
    let records: Vec<BenchmarkRecord> = parse_manifest(manifest)?.into_iter().filter(|r| filter.accepts(r)).collect();
    let scores = score_records(&records, cfg, jobs);
    let failed = scores.iter().filter(|s| s.is_err()).count();
    if failed as f64 > MAX_FAILURE_FRACTION * records.len() as f64 {
        return Err(Error::TooManyFailures {
            failed,
            total: records.len(),
        });
    }
    Ok(aggregate(&records, &scores, cfg.regression))
}

/// Builds the report from already-scored records.
pub fn aggregate(records: &[BenchmarkRecord], scores: &[Result<PairScore>], form: RegressionForm) -> BenchmarkReport {
    let mut by_db: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_db.entry(r.database.as_str()).or_default().push(i);
    }

    let mut report = BenchmarkReport::default();
    for (db, rows) in by_db {
        let mut failures = Vec::new();
        let mut ok: Vec<(usize, f64)> = Vec::new();
        for &i in &rows {
            match &scores[i] {
                Ok(s) => ok.push((i, s.score)),
                Err(e) => failures.push(FailureEntry {
                    row: i,
                    reference: records[i].ref_path.display().to_string(),
                    distorted: records[i].dist_path.display().to_string(),
                    error: e.to_string(),
                }),
            }
        }
        let raw: Vec<f64> = ok.iter().map(|&(_, s)| s).collect();
        let mos: Vec<f64> = ok.iter().map(|&(i, _)| records[i].mos).collect();
        let fit = fit_regression(&raw, &mos, form);
        let (pearson_fitted, spearman_raw, mut status) = correlations(&raw, &mos, fit.as_ref().ok());
        if let Err(e) = &fit {
            status = Some(e.to_string());
        }

        let mut categories = BTreeMap::new();
        for cat in Category::ALL {
            let members: Vec<usize> = (0..ok.len())
                .filter(|&k| records[ok[k].0].categories.contains(&cat))
                .collect();
            if members.is_empty() {
                continue;
            }
            let r: Vec<f64> = members.iter().map(|&k| raw[k]).collect();
            let m: Vec<f64> = members.iter().map(|&k| mos[k]).collect();
            let (p, s, st) = correlations(&r, &m, fit.as_ref().ok());
            categories.insert(
                cat,
                CategoryReport {
                    n: members.len(),
                    pearson_fitted: p,
                    spearman_raw: s,
                    status: st,
                },
            );
        }

        let scatter = raw
            .iter()
            .zip(&mos)
            .map(|(&x, &y)| ScatterRow {
                raw_score: x,
                regressed_score: fit.as_ref().ok().map(|p| p.apply(x)),
                mos: y,
            })
            .collect();
        report.scatter.insert(db.to_string(), scatter);
        report.databases.insert(
            db.to_string(),
            DatabaseReport {
                n: ok.len(),
                pearson_fitted,
                spearman_raw,
                beta: fit.as_ref().ok().map(|p| p.beta),
                regression: form,
                status,
                categories,
                failures,
                reference_published: published_reference(db),
            },
        );
    }
    report
}

impl BenchmarkReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.databases).expect("report serializes") + "\n"
    }

    /// Path of the scatter CSV for `database` next to `report_path`.
    pub fn scatter_path(report_path: &Path, database: &str) -> PathBuf {
        let stem = report_path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
        let safe: String = database
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        report_path.with_file_name(format!("{stem}.{safe}.scatter.csv"))
    }

    /// Writes the JSON report and one scatter CSV per database. Returns the
    /// scatter paths.
    pub fn write(&self, report_path: &Path) -> Result<Vec<PathBuf>> {
        std::fs::write(report_path, self.to_json()).map_err(|e| Error::io(report_path, e))?;
        let mut written = Vec::new();
        for (db, rows) in &self.scatter {
            let path = Self::scatter_path(report_path, db);
            let mut w = csv::Writer::from_path(&path).map_err(|e| csv_io(&path, e))?;
            w.write_record(["raw_score", "regressed_score", "mos"]).map_err(|e| csv_io(&path, e))?;
            for r in rows {
                let reg = r.regressed_score.map_or_else(|| "NA".to_string(), |v| v.to_string());
                w.write_record([r.raw_score.to_string(), reg, r.mos.to_string()])
                    .map_err(|e| csv_io(&path, e))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}
