//! Result files. `result.json` is a pure function of the configuration;
//! wall-clock data goes to `run-meta.json` so it never disturbs that.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde_json::json;

use crate::experiments::{Outcome, Series};

/// Shortest decimal that parses back to the same `f64`.
fn number(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:?}")
    }
}

pub fn csv(series: &Series) -> String {
    let mut out = series.header.join(",");
    out.push('\n');
    for row in &series.rows {
        out.push_str(&row.iter().map(|&x| number(x)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

pub fn write(dir: &Path, outcome: &Outcome, experiment: &str, elapsed: Duration) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let result = dir.join("result.json");
    let mut text = serde_json::to_string_pretty(&outcome.result).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(&result, text)?;
    written.push(result);
    let series = dir.join("series.csv");
    match &outcome.series {
        Some(s) => {
            fs::write(&series, csv(s))?;
            written.push(series);
        }
        None => {
            // Do not leave a stale table from an earlier run beside new results.
            if series.exists() {
                fs::remove_file(&series)?;
            }
        }
    }
    let meta = dir.join("run-meta.json");
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut f = fs::File::create(&meta)?;
    writeln!(
        f,
        "{}",
        json!({
            "experiment": experiment,
            "finished_unix_seconds": stamp,
            "elapsed_seconds": elapsed.as_secs_f64(),
            "version": env!("CARGO_PKG_VERSION"),
        })
    )?;
    written.push(meta);
    Ok(written)
}
