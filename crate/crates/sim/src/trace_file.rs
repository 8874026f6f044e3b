//! Trace files: `time_s,voltage_v` rows, `#` comments, optional header row.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};

use eam_core::EnergyTrace;

use crate::output::write_atomic;

/// Measurement resistor assumed for trace files.
pub const DEFAULT_LOAD_RESISTANCE: f64 = 30e3;

pub fn read_trace(path: &Path) -> Result<EnergyTrace> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading trace {}", path.display()))?;
    let name = path
        .file_stem()
        .map_or_else(|| "trace".into(), |s| s.to_string_lossy().into_owned());
    parse_trace(&text, &name).with_context(|| format!("in trace {}", path.display()))
}

pub fn parse_trace(text: &str, name: &str) -> Result<EnergyTrace> {
    let mut samples = Vec::new();
    let mut seen_data = false;
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',').map(str::trim);
        let (Some(t), Some(v), None) = (fields.next(), fields.next(), fields.next()) else {
            bail!("line {}: expected two comma-separated fields", n + 1);
        };
        match (t.parse::<f64>(), v.parse::<f64>()) {
            (Ok(t), Ok(v)) => {
                samples.push((t, v));
                seen_data = true;
            }
            _ if !seen_data && samples.is_empty() && t.parse::<f64>().is_err() => {
                // header row
            }
            _ => bail!("line {}: cannot parse {line:?} as numbers", n + 1),
        }
    }
    Ok(EnergyTrace::new(name, samples, DEFAULT_LOAD_RESISTANCE)?)
}

pub fn format_trace(trace: &EnergyTrace) -> String {
    let mut out = String::from("time_s,voltage_v\n");
    for (t, v) in trace.samples() {
        let _ = writeln!(out, "{t},{v}");
    }
    out
}

pub fn write_trace(path: &Path, trace: &EnergyTrace) -> Result<()> {
    write_atomic(path, format_trace(trace).as_bytes())
}
