//! Sweeps over the lattice toolkit that write one CSV table and one JSON
//! summary per experiment.
//!
//! Results are cached under `<out>/.qpt-cache/<sha256 of the canonical
//! config>/`; a cache hit rewrites the same table body and summary with a
//! fresh metadata header.

pub mod config;
pub mod experiments;

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use jch_core::jumps::JumpDetector;
use jch_core::metrics::psd_clip_count;
use serde_json::{json, Map, Value as Json};

use crate::config::{ConfigError, RunConfig, Value};
use crate::experiments::{Outcome, Table};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Longest failure list written into a summary.
const LISTED_FAILURES: usize = 50;

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Numeric(String),
    Io { path: PathBuf, source: io::Error },
}

impl RunError {
    /// Process exit status: 1 for config and file problems, 2 for numerics.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Io { .. } => 1,
            RunError::Numeric(_) => 2,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "config error: {e}"),
            RunError::Numeric(m) => write!(f, "numeric failure: {m}"),
            RunError::Io { path, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub rows: usize,
    pub cache_hit: bool,
    /// Rows holding a NaN.
    pub nan_points: usize,
    /// Point evaluations (or fits) that returned an error.
    pub failed_evaluations: usize,
}

impl RunReport {
    pub fn numeric_trouble(&self) -> bool {
        self.nan_points > 0 || self.failed_evaluations > 0
    }
}

/// Numbers in 17 significant digits.
fn number(v: f64) -> String {
    format!("{v:.16e}")
}

fn render_body(table: &Table) -> String {
    let mut out = table.columns.join(",");
    out.push('\n');
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(|&v| number(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn render_header(cfg: &RunConfig, hash: &str, cache_hit: bool) -> String {
    let stamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    let mut out = format!("# qpt {VERSION} {}\n", cfg.experiment);
    out.push_str(&format!("# generated: {stamp}\n"));
    out.push_str(&format!("# config_hash: {hash}\n"));
    out.push_str(&format!("# cache: {}\n", if cache_hit { "hit" } else { "miss" }));
    for (k, v) in cfg.entries() {
        out.push_str(&format!("# {k} = {v}\n"));
    }
    out
}

fn config_json(cfg: &RunConfig) -> Json {
    let mut map = Map::new();
    for (k, v) in cfg.values() {
        let j = match v {
            Value::Count(n) => json!(n),
            Value::Real(x) => json!(x),
            Value::List(xs) => json!(xs),
            Value::Flag(b) => json!(b),
        };
        map.insert(k.to_string(), j);
    }
    Json::Object(map)
}

fn render_summary(cfg: &RunConfig, hash: &str, outcome: &Outcome, psd_clips: usize) -> String {
    let d = JumpDetector::default();
    let listed: Vec<Json> = outcome
        .failures
        .iter()
        .take(LISTED_FAILURES)
        .map(|f| json!({ "row": f.row, "message": f.message }))
        .collect();
    let nan_points = outcome
        .table
        .rows
        .iter()
        .filter(|r| r.iter().any(|v| v.is_nan()))
        .count();
    let summary = json!({
        "experiment": cfg.experiment.name(),
        "version": VERSION,
        "config_hash": hash,
        "config": config_json(cfg),
        "columns": outcome.table.columns,
        "rows": outcome.table.rows.len(),
        "jump_detector": {
            "window": d.window,
            "sigmas": d.sigmas,
            "median_factor": d.median_factor,
            "min_floor": d.min_floor,
        },
        "diagnostics": {
            "nan_points": nan_points,
            "failed_evaluations": outcome.failures.len(),
            "failures": listed,
            "psd_clips": psd_clips,
        },
        "results": outcome.results,
    });
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    text
}

struct Rendered {
    body: String,
    summary: String,
}

impl Rendered {
    /// `(rows, nan_points, failed_evaluations)` read back from the summary.
    fn counts(&self) -> (usize, usize, usize) {
        let parsed: Json = serde_json::from_str(&self.summary).unwrap_or(Json::Null);
        let get = |v: &Json| v.as_u64().unwrap_or(0) as usize;
        let diag = &parsed["diagnostics"];
        (
            get(&parsed["rows"]),
            get(&diag["nan_points"]),
            get(&diag["failed_evaluations"]),
        )
    }
}

fn read_cache(dir: &Path) -> Option<Rendered> {
    let body = fs::read_to_string(dir.join("body.csv")).ok()?;
    let summary = fs::read_to_string(dir.join("summary.json")).ok()?;
    Some(Rendered { body, summary })
}

/// Writes the cache entry through a temporary directory so readers never see
/// half an entry.
fn write_cache(dir: &Path, rendered: &Rendered) -> Result<(), RunError> {
    let parent = dir.parent().expect("cache entry has a parent");
    fs::create_dir_all(parent).map_err(io_err(parent))?;
    let tmp = parent.join(format!(".tmp-{}", std::process::id()));
    let _ = fs::remove_dir_all(&tmp);
    fs::create_dir_all(&tmp).map_err(io_err(&tmp))?;
    fs::write(tmp.join("body.csv"), &rendered.body).map_err(io_err(&tmp))?;
    fs::write(tmp.join("summary.json"), &rendered.summary).map_err(io_err(&tmp))?;
    if fs::rename(&tmp, dir).is_err() {
        // another run filled the entry first; its content is the same
        let _ = fs::remove_dir_all(&tmp);
    }
    Ok(())
}

/// Cache directory under an output directory.
pub fn cache_root(out_dir: &Path) -> PathBuf {
    out_dir.join(".qpt-cache")
}

/// Runs one experiment and writes `<experiment>.csv` and
/// `<experiment>.summary.json` into `out_dir`.
pub fn execute(cfg: &RunConfig, out_dir: &Path) -> Result<RunReport, RunError> {
    let hash = cfg.hash();
    let entry = cache_root(out_dir).join(&hash);
    let use_cache = cfg.flag("cache");

    let cached = if use_cache { read_cache(&entry) } else { None };
    let cache_hit = cached.is_some();
    let rendered = match cached {
        Some(r) => r,
        None => {
            let clips = psd_clip_count();
            let outcome = experiments::run(cfg).map_err(|e| RunError::Numeric(e.0))?;
            let clips = psd_clip_count() - clips;
            let rendered = Rendered {
                body: render_body(&outcome.table),
                summary: render_summary(cfg, &hash, &outcome, clips),
            };
            if use_cache {
                write_cache(&entry, &rendered)?;
            }
            rendered
        }
    };

    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let csv = out_dir.join(format!("{}.csv", cfg.experiment));
    let summary = out_dir.join(format!("{}.summary.json", cfg.experiment));
    let mut text = render_header(cfg, &hash, cache_hit);
    text.push_str(&rendered.body);
    fs::write(&csv, text).map_err(io_err(&csv))?;
    fs::write(&summary, &rendered.summary).map_err(io_err(&summary))?;

    let (rows, nan_points, failed_evaluations) = rendered.counts();
    Ok(RunReport {
        csv,
        summary,
        rows,
        cache_hit,
        nan_points,
        failed_evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Experiment;

    #[test]
    fn numbers_carry_seventeen_digits() {
        assert_eq!(number(0.1), "1.0000000000000001e-1");
        assert_eq!(number(-2.0), "-2.0000000000000000e0");
        assert_eq!(number(f64::NAN), "NaN");
        for v in [std::f64::consts::PI, 1.0 / 3.0, 2.449489742783178] {
            assert_eq!(number(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn body_is_rectangular() {
        let table = Table {
            columns: vec!["g".into(), "D".into()],
            rows: vec![vec![0.5, 0.0], vec![1.0, f64::NAN]],
        };
        let body = render_body(&table);
        let lines: Vec<&str> = body.lines().collect();
        assert_eq!(lines[0], "g,D");
        assert!(lines.iter().all(|l| l.split(',').count() == 2));
    }

    #[test]
    fn header_echoes_config() {
        let cfg = RunConfig::defaults(Experiment::TraceDistance);
        let h = render_header(&cfg, "abc", false);
        assert!(h.lines().all(|l| l.starts_with("# ")));
        assert!(h.contains("# beta = 800.0\n"));
        assert!(h.contains("# g_steps = 480\n"));
    }
}
