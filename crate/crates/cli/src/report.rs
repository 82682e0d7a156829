//! Cross-run summary built from manifests and `summary.json` files.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use shear_mhd::output::{read_json, read_manifest};
use shear_mhd::Result;

#[derive(Debug, Serialize)]
pub struct Entry {
    pub dir: String,
    pub command: String,
    pub config_hash: String,
    pub code_version: String,
    pub seeds: Vec<u64>,
    pub exit_code: Option<i32>,
    pub outputs: usize,
    pub summary: Option<Value>,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub root: String,
    pub runs: Vec<Entry>,
}

/// Every finished or unfinished run under `root`, skipping earlier reports.
pub fn collect(root: &Path) -> Result<Report> {
    let mut runs = Vec::new();
    if root.is_dir() {
        let mut dirs: Vec<_> = std::fs::read_dir(root)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.join("manifest.json").is_file())
            .collect();
        dirs.sort();
        for d in dirs {
            let Ok(m) = read_manifest(&d) else { continue };
            if m.command == "report" {
                continue;
            }
            let summary = read_json::<Value>(&d.join("summary.json")).ok();
            runs.push(Entry {
                dir: d.file_name().unwrap_or_default().to_string_lossy().into_owned(),
                command: m.command,
                config_hash: m.config_hash,
                code_version: m.code_version,
                seeds: m.seeds,
                exit_code: m.exit_code,
                outputs: m.outputs.len(),
                summary,
            });
        }
    }
    runs.sort_by(|a, b| a.command.cmp(&b.command).then(a.dir.cmp(&b.dir)));
    Ok(Report {
        root: root.display().to_string(),
        runs,
    })
}

fn status(code: Option<i32>) -> String {
    match code {
        None => "running".into(),
        Some(0) => "ok".into(),
        Some(c) => format!("exit {c}"),
    }
}

/// Short per-command highlights pulled from a summary.
fn highlights(command: &str, s: &Value) -> String {
    let get = |k: &str| match s.get(k) {
        Some(Value::String(v)) => v.clone(),
        Some(v) => v.to_string(),
        None => "-".into(),
    };
    match command {
        "multipliers check" => format!(
            "regime {}, M2 bound {}, M6 bound {}, M6 constant {}",
            get("regime"),
            get("lower_bound_m2"),
            get("lower_bound_m6"),
            get("m6_constant")
        ),
        "linear run" => format!(
            "regime {}, variant {}, steps {}",
            get("regime"),
            get("variant"),
            get("steps")
        ),
        "linear sweep" => format!("{} points, monotone {}", get("points"), get("monotone")),
        "nonlinear run" => {
            let slope = s
                .pointer("/rate_fit/slope")
                .map(|v| v.to_string())
                .unwrap_or_else(|| "-".into());
            format!("t {}, steps {}, decay slope {}", get("t"), get("steps"), slope)
        }
        "threshold sweep" => format!("{} points, {} saturated", get("points"), get("saturated")),
        "fit rates" => format!("slope {}, predicted {}, ratio {}", get("slope"), get("predicted_slope"), get("ratio")),
        _ => String::new(),
    }
}

pub fn markdown(r: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Run report\n\nRoot: `{}`, {} runs.\n", r.root, r.runs.len());
    let _ = writeln!(s, "| run | command | status | version | outputs | highlights |");
    let _ = writeln!(s, "|---|---|---|---|---|---|");
    for e in &r.runs {
        let h = e.summary.as_ref().map(|v| highlights(&e.command, v)).unwrap_or_default();
        let _ = writeln!(
            s,
            "| `{}` | {} | {} | {} | {} | {} |",
            e.dir,
            e.command,
            status(e.exit_code),
            e.code_version,
            e.outputs,
            h.replace('|', "/")
        );
    }
    s
}
