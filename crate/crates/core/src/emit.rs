//! File output: per-run CSV series, text summaries, sweep and comparison
//! reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::sim::{Event, Row, ScenarioResult};
use crate::sweep::SweepReport;

pub const CSV_HEADER: &str = "t,x,y,x_meas,y_meas,x_ref,y_ref,u1,u2,nu1,nu2,Fhat_x,Fhat_y,p";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    SummaryText,
}

/// Formats like C's `%.9g`: 9 significant digits, trailing zeros removed,
/// scientific notation outside `[1e-5, 1e9)`.
pub fn fmt_sig(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa.to_string()), exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_sig).unwrap_or_default()
}

fn csv_line(r: &Row) -> String {
    let cells = [
        fmt_sig(r.t),
        fmt_sig(r.x),
        fmt_sig(r.y),
        fmt_sig(r.x_meas),
        fmt_sig(r.y_meas),
        fmt_sig(r.x_ref),
        fmt_sig(r.y_ref),
        fmt_sig(r.u1),
        fmt_sig(r.u2),
        opt(r.nu1),
        opt(r.nu2),
        fmt_sig(r.fhat_x),
        fmt_sig(r.fhat_y),
        fmt_sig(r.p),
    ];
    cells.join(",")
}

pub fn csv_string(result: &ScenarioResult) -> String {
    let mut out = String::with_capacity(160 * (result.rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &result.rows {
        out.push_str(&csv_line(r));
        out.push('\n');
    }
    out
}

fn event_line(e: &Event) -> String {
    match e {
        Event::Sync { t, tau, reason } => {
            format!("t={} sync reason={} tau={}", fmt_sig(*t), serde_name(reason), fmt_sig(*tau))
        }
        Event::Discovery { t, obstacle } => format!("t={} discovery obstacle={obstacle}", fmt_sig(*t)),
        Event::BypassStart {
            t,
            obstacle,
            side,
            detour_length,
            t_start,
            t_end,
        } => format!(
            "t={} bypass_start obstacle={obstacle} side={side} detour={} interval=[{}, {}]",
            fmt_sig(*t),
            fmt_sig(*detour_length),
            fmt_sig(*t_start),
            fmt_sig(*t_end)
        ),
        Event::BypassEnd { t, obstacle } => format!("t={} bypass_end obstacle={obstacle}", fmt_sig(*t)),
        Event::Clamp(c) => format!(
            "t={} clamp input={} requested={} applied={}",
            fmt_sig(c.t),
            serde_name(&c.input),
            fmt_sig(c.requested),
            fmt_sig(c.applied)
        ),
        Event::Abort { t, reason } => format!("t={} abort {reason}", fmt_sig(*t)),
    }
}

fn serde_name<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|j| j.as_str().map(str::to_string))
        .unwrap_or_default()
}

pub fn summary_string(result: &ScenarioResult) -> String {
    let mut s = String::new();
    let status = match &result.aborted {
        Some(reason) => format!("aborted: {reason}"),
        None => "completed".into(),
    };
    let _ = writeln!(s, "scenario: {}", result.name);
    let _ = writeln!(s, "controller: {}", result.controller);
    let _ = writeln!(s, "status: {status}");
    let _ = writeln!(s, "samples: {}", result.rows.len());
    let _ = writeln!(s, "\n[metrics]");
    for (name, v) in result.metrics.scalars() {
        let _ = writeln!(s, "{name} = {}", fmt_sig(v));
    }
    for (i, c) in result.metrics.min_clearance.iter().enumerate() {
        let _ = writeln!(s, "min_clearance[{i}] = {}", c.map_or("none".into(), fmt_sig));
    }
    let _ = writeln!(s, "\n[events]");
    for e in &result.events {
        let _ = writeln!(s, "{}", event_line(e));
    }
    s
}

pub fn sweep_summary_string(report: &SweepReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "sweep: {}", report.name);
    let _ = writeln!(s, "controller: {}", report.controller);
    let _ = writeln!(s, "master_seed: {}", report.master_seed);
    let _ = writeln!(s, "runs: {}", report.runs.len());
    let _ = writeln!(s, "aborted: {}", report.aborted);
    let _ = writeln!(s, "safety_violations: {}", report.safety_violations);
    let _ = writeln!(s, "\n[metrics] name min median max");
    for (name, st) in &report.stats {
        let _ = writeln!(s, "{name} {} {} {}", fmt_sig(st.min), fmt_sig(st.median), fmt_sig(st.max));
    }
    s
}

pub fn sweep_runs_csv(report: &SweepReport) -> String {
    let names = crate::sim::Metrics::scalar_names();
    let mut s = format!("index,seed,aborted,{}\n", names.join(","));
    for r in &report.runs {
        let values: Vec<String> = r.metrics.scalars().iter().map(|(_, v)| fmt_sig(*v)).collect();
        let _ = writeln!(s, "{},{},{},{}", r.index, r.seed, r.aborted.is_some(), values.join(","));
    }
    s
}

/// `b − a` for every scalar metric.
pub fn compare_string(a: &ScenarioResult, b: &ScenarioResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "a: {} ({}){}", a.name, a.controller, if a.is_aborted() { " aborted" } else { "" });
    let _ = writeln!(s, "b: {} ({}){}", b.name, b.controller, if b.is_aborted() { " aborted" } else { "" });
    let _ = writeln!(s, "\nmetric,a,b,delta");
    for ((name, va), (_, vb)) in a.metrics.scalars().into_iter().zip(b.metrics.scalars()) {
        let _ = writeln!(s, "{name},{},{},{}", fmt_sig(va), fmt_sig(vb), fmt_sig(vb - va));
    }
    s
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `<stem>.csv` or `<stem>.summary.txt` into `dir`.
pub fn emit(result: &ScenarioResult, format: Format, dir: &Path, stem: &str) -> Result<PathBuf> {
    let (path, body) = match format {
        Format::Csv => (dir.join(format!("{stem}.csv")), csv_string(result)),
        Format::SummaryText => (dir.join(format!("{stem}.summary.txt")), summary_string(result)),
    };
    write_file(&path, &body)?;
    Ok(path)
}

/// CSV series plus its summary sidecar.
pub fn emit_run(result: &ScenarioResult, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    Ok(vec![
        emit(result, Format::Csv, dir, stem)?,
        emit(result, Format::SummaryText, dir, stem)?,
    ])
}

pub fn emit_sweep(report: &SweepReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let summary = dir.join("sweep.summary.txt");
    let runs = dir.join("sweep_runs.csv");
    write_file(&summary, &sweep_summary_string(report))?;
    write_file(&runs, &sweep_runs_csv(report))?;
    Ok(vec![summary, runs])
}
