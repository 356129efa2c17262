//! `resift` command-line tool.
//!
//! Exit status is 0 on success, 2 for usage and input errors (bad flags,
//! unreadable images, malformed manifests or configuration) and 1 for
//! anything else.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use resift::bench::{self, BenchFilter, BenchmarkReport, Category, MAX_FAILURE_FRACTION};
use resift::imageio::{dump_map, load_image, MIN_IMAGE_SIDE};
use resift::sift::{
    build_scale_space, DESCRIPTOR_CLAMP, DESCRIPTOR_GRID, DESCRIPTOR_ORIENTATIONS, ORIENTATION_BINS, PEAK_ACCEPT_RATIO,
};
use resift::{reliability_maps, resift_score, Error, ReSiftConfig};

#[derive(Parser)]
#[command(name = "resift", version, about = "Full-reference image quality from reliability-weighted SIFT matching")]
struct Cli {
    /// Configuration file (`key = value` lines); defaults apply to missing keys.
    #[arg(long, global = true, env = "RESIFT_CONFIG")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score one distorted image against its reference.
    Score {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        dist: PathBuf,
        /// Print a JSON object instead of `key=value` text.
        #[arg(long)]
        json: bool,
    },
    /// Score every row of a manifest into a CSV.
    Batch {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        jobs: Jobs,
    },
    /// Correlate scores with MOS per database and category.
    Bench {
        #[arg(long)]
        manifest: PathBuf,
        /// JSON report path; scatter CSVs are written next to it.
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        database: Option<String>,
        #[arg(long, value_parser = parse_category)]
        category: Option<Category>,
        #[command(flatten)]
        jobs: Jobs,
    },
    /// Dump every intermediate map of one image as raw f32 files.
    Maps {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        dump_dir: PathBuf,
    },
    /// Print the effective configuration.
    Config {
        #[arg(long, required = true)]
        show: bool,
    },
}

#[derive(Args)]
struct Jobs {
    /// Worker threads; results do not depend on this.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    jobs: Option<u32>,
}

impl Jobs {
    fn get(&self) -> Option<usize> {
        self.jobs.map(|j| j as usize)
    }
}

fn parse_category(s: &str) -> Result<Category, String> {
    s.parse()
}

/// Failure of a command, already classified by exit status.
struct Failure {
    input: bool,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            input: e.is_input_error(),
            message: e.to_string(),
        }
    }
}

fn internal(message: impl Into<String>) -> Failure {
    Failure {
        input: false,
        message: message.into(),
    }
}

fn load_config(path: Option<&Path>) -> Result<ReSiftConfig, Failure> {
    match path {
        Some(p) => ReSiftConfig::from_file(p).map_err(|e| Failure {
            input: true,
            message: format!("{}: {e}", p.display()),
        }),
        None => Ok(ReSiftConfig::default()),
    }
}

/// Writes to stdout; a closed pipe (`resift ... | head`) is not an error.
fn emit(text: &str) -> Result<(), Failure> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(internal(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |d| d.to_string())
}

fn cmd_score(cfg: &ReSiftConfig, reference: &Path, dist: &Path, json: bool) -> Result<(), Failure> {
    let a = load_image(reference)?;
    let b = load_image(dist)?;
    let q = resift_score(&a, &b, cfg)?;
    if json {
        let value = serde_json::json!({
            "score": q.score,
            "matches": q.matched_count,
            "dist": q.percentile_distance,
            "timings_ms": q.timings,
        });
        emit(&format!("{value}\n"))
    } else {
        emit(&format!(
            "score={} matches={} dist={}\n",
            q.score,
            q.matched_count,
            fmt_opt(q.percentile_distance)
        ))
    }
}

fn csv_failure(path: &Path, e: csv::Error) -> Failure {
    internal(format!("writing {}: {e}", path.display()))
}

fn cmd_batch(cfg: &ReSiftConfig, manifest: &Path, out: &Path, jobs: Option<usize>) -> Result<(), Failure> {
    let records = bench::parse_manifest(manifest)?;
    let scores = bench::score_records(&records, cfg, jobs);

    let mut w = csv::Writer::from_path(out).map_err(|e| Failure {
        input: true,
        message: format!("{}: {e}", out.display()),
    })?;
    w.write_record(["ref", "dist", "score", "matches", "dist_threshold"])
        .map_err(|e| csv_failure(out, e))?;
    let mut errors = Vec::new();
    for (i, (r, s)) in records.iter().zip(&scores).enumerate() {
        let (refp, distp) = (r.ref_path.display().to_string(), r.dist_path.display().to_string());
        let row = match s {
            Ok(p) => [refp, distp, p.score.to_string(), p.matched_count.to_string(), fmt_opt(p.percentile_distance)],
            Err(e) => {
                errors.push((i, refp.clone(), distp.clone(), e.to_string()));
                [refp, distp, "NA".into(), "NA".into(), "NA".into()]
            }
        };
        w.write_record(&row).map_err(|e| csv_failure(out, e))?;
    }
    w.flush().map_err(|e| internal(format!("writing {}: {e}", out.display())))?;

    let sidecar = errors_path(out);
    if errors.is_empty() {
        // A sidecar left by an earlier run would describe stale failures.
        let _ = fs::remove_file(&sidecar);
    } else {
        let mut w = csv::Writer::from_path(&sidecar).map_err(|e| csv_failure(&sidecar, e))?;
        w.write_record(["row", "ref", "dist", "error"]).map_err(|e| csv_failure(&sidecar, e))?;
        for (i, a, b, e) in &errors {
            w.write_record([i.to_string(), a.clone(), b.clone(), e.clone()])
                .map_err(|e| csv_failure(&sidecar, e))?;
        }
        w.flush().map_err(|e| internal(e.to_string()))?;
        eprintln!("{} of {} rows failed, see {}", errors.len(), records.len(), sidecar.display());
    }
    Ok(())
}

fn errors_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".errors.csv");
    out.with_file_name(name)
}

fn cmd_bench(cfg: &ReSiftConfig, manifest: &Path, report_path: &Path, filter: BenchFilter, jobs: Option<usize>) -> Result<(), Failure> {
    let report: BenchmarkReport = bench::run_benchmark(manifest, cfg, &filter, jobs)?;
    report.write(report_path)?;
    let mut text = String::new();
    for (db, r) in &report.databases {
        let _ = writeln!(
            text,
            "database={db} n={} pearson_fitted={} spearman_raw={} failures={}",
            r.n,
            fmt_opt(r.pearson_fitted),
            fmt_opt(r.spearman_raw),
            r.failures.len()
        );
    }
    emit(&text)
}

fn cmd_maps(cfg: &ReSiftConfig, reference: &Path, dir: &Path) -> Result<(), Failure> {
    let img = load_image(reference)?;
    let maps = reliability_maps(&img, cfg)?;
    fs::create_dir_all(dir).map_err(|e| Failure {
        input: true,
        message: format!("{}: {e}", dir.display()),
    })?;
    let mut written = Vec::new();
    let mut dump = |name: String, map: &resift::ScalarMap| -> Result<(), Failure> {
        let path = dir.join(name);
        dump_map(map, &path)?;
        written.push(path);
        Ok(())
    };
    dump("lightness.f32".into(), &maps.lightness)?;
    dump("lnorm.f32".into(), &maps.normalized)?;
    dump("sr.f32".into(), &maps.residual)?;
    dump("saliency.f32".into(), &maps.saliency)?;
    dump("pooled.f32".into(), &maps.pooled)?;
    let scaled = maps.pooled.map(|v| v * cfg.sift.input_scale);
    let space = build_scale_space(&scaled, &cfg.sift)?;
    for octave in &space.octaves {
        for (s, dog) in octave.dogs.iter().enumerate() {
            dump(format!("dog_o{}_s{s}.f32", octave.index), dog)?;
        }
    }
    let listing: String = written.iter().map(|p| format!("{}\n", p.display())).collect();
    emit(&listing)
}

fn cmd_config(cfg: &ReSiftConfig) -> Result<(), Failure> {
    emit(&format!(
        "{cfg}# fixed constants
# orientation_bins = {ORIENTATION_BINS}
# peak_accept_ratio = {PEAK_ACCEPT_RATIO}
# descriptor_grid = {DESCRIPTOR_GRID}
# descriptor_orientations = {DESCRIPTOR_ORIENTATIONS}
# descriptor_clamp = {DESCRIPTOR_CLAMP}
# min_image_side = {MIN_IMAGE_SIDE}
# max_failure_fraction = {MAX_FAILURE_FRACTION}
"
    ))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Score { reference, dist, json } => cmd_score(&cfg, &reference, &dist, json),
        Command::Batch { manifest, out, jobs } => cmd_batch(&cfg, &manifest, &out, jobs.get()),
        Command::Bench {
            manifest,
            report,
            database,
            category,
            jobs,
        } => cmd_bench(&cfg, &manifest, &report, BenchFilter { database, category }, jobs.get()),
        Command::Maps { reference, dump_dir } => cmd_maps(&cfg, &reference, &dump_dir),
        Command::Config { .. } => cmd_config(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(if f.input { 2 } else { 1 })
        }
    }
}
