//! Result files: `metrics.csv`, `timeline.csv`, `events.log`, `compare.csv`.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use anyhow::{Context, Result};

use eam_core::{AppSpec, Event, EventLog, MetricsReport, TaskId};

/// Writes via a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Flat `(key, value)` view of a report; shared by `metrics.csv` and `compare.csv`.
pub fn metric_rows(r: &MetricsReport) -> Vec<(String, String)> {
    let mut rows: Vec<(String, String)> = vec![
        ("policy".into(), r.policy.to_string()),
        ("app".into(), r.app.clone()),
        ("hours".into(), r.hours.to_string()),
        ("completions".into(), r.completions.to_string()),
        ("app_exec_rate_per_h".into(), r.app_exec_rate.to_string()),
        ("attack_hours".into(), r.attack_hours.to_string()),
        ("attack_completions".into(), r.attack_completions.to_string()),
        ("attack_window_rate_per_h".into(), r.attack_window_rate.to_string()),
        ("mean_schedulability".into(), r.mean_schedulability.to_string()),
    ];
    for t in &r.tasks {
        rows.push((format!("schedulability_{}", t.task), t.schedulability.to_string()));
        rows.push((format!("releases_{}", t.task), t.releases.to_string()));
        rows.push((format!("served_{}", t.task), t.served.to_string()));
        rows.push((format!("missed_{}", t.task), t.missed.to_string()));
    }
    for c in &r.components {
        let name = c.component.as_str();
        rows.push((format!("availability_{name}"), c.availability.to_string()));
        rows.push((format!("availability_latency_s_{name}"), opt(c.availability_latency)));
    }
    rows.extend([
        ("slots".into(), r.slots.to_string()),
        ("invocations".into(), r.invocations.to_string()),
        ("overhead_energy_j".into(), r.overhead_energy.to_string()),
        ("overhead_time_s".into(), r.overhead_time.to_string()),
        ("aborts".into(), r.aborts.to_string()),
        ("wasted_energy_j".into(), r.wasted_energy.to_string()),
    ]);
    rows
}

pub fn metrics_csv(r: &MetricsReport) -> String {
    let mut out = String::from("key,value\n");
    for (k, v) in metric_rows(r) {
        let _ = writeln!(out, "{k},{v}");
    }
    out
}

/// Parses a `metrics.csv` back into rows.
pub fn parse_metrics_csv(text: &str) -> Vec<(String, String)> {
    text.lines()
        .skip(1)
        .filter_map(|l| l.split_once(','))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn task_name(app: &AppSpec, t: Option<TaskId>) -> &str {
    t.map_or("-", |t| app.tasks[t.0].id.as_str())
}

pub fn timeline_csv(log: &EventLog, app: &AppSpec) -> String {
    let buffers = log
        .iter()
        .find_map(|r| match &r.event {
            Event::Sample { energies, .. } => Some(energies.len()),
            _ => None,
        })
        .unwrap_or(0);
    let mut out = String::from("time_s,power_w,profile,running");
    for i in 0..buffers {
        let _ = write!(out, ",energy_uj_{i},voltage_v_{i},share_w_{i}");
    }
    out.push('\n');
    for r in log.iter() {
        if let Event::Sample {
            energies,
            voltages,
            profile,
            executing,
            shares,
            power,
        } = &r.event
        {
            let _ = write!(out, "{},{},{},{}", r.time, power, profile, task_name(app, *executing));
            for i in 0..buffers {
                let _ = write!(
                    out,
                    ",{},{},{}",
                    energies[i] * 1e6,
                    voltages[i],
                    shares.get(i).copied().unwrap_or(0.0)
                );
            }
            out.push('\n');
        }
    }
    out
}

/// One line per event except samples, which go to the timeline.
pub fn events_log(log: &EventLog, app: &AppSpec) -> String {
    let mut out = String::new();
    for r in log.iter() {
        let detail = match &r.event {
            Event::Sample { .. } => continue,
            Event::ProfileChange { from, to } => format!("{from} -> {to}"),
            Event::Decision {
                profile,
                info,
                states,
                executing,
                weights,
                power,
            } => {
                let states: String = states.iter().map(|s| s.short()).collect();
                let weights: Vec<String> = weights.iter().map(|w| format!("{w:.4}")).collect();
                format!(
                    "profile={profile} attack={} remaining_s={:.3} states={states} running={} weights={} power_w={power:e}",
                    info.ongoing,
                    info.remaining,
                    task_name(app, *executing),
                    weights.join("/"),
                )
            }
            Event::Release { task } | Event::Missed { task } => task_name(app, Some(*task)).to_string(),
            Event::Start {
                task,
                buffer,
                available,
                cost,
                queues,
            } => format!(
                "{} buffer={buffer} available_uj={:.6} cost_uj={:.6} queued={}",
                task_name(app, Some(*task)),
                available * 1e6,
                cost * 1e6,
                queues.tokens
            ),
            Event::Finish {
                task,
                lineage,
                completion,
            } => format!(
                "{} lineage={:#x} completion={completion}",
                task_name(app, Some(*task)),
                lineage.bits()
            ),
            Event::Abort { task, wasted, queues } => format!(
                "{} wasted_uj={:.6} queued={}",
                task_name(app, Some(*task)),
                wasted * 1e6,
                queues.tokens
            ),
            Event::Gate { buffer, on } => format!("buffer={buffer} on={on}"),
            Event::Threshold { buffer, above } => format!("buffer={buffer} above_von={above}"),
        };
        let _ = writeln!(out, "{:.6}\t{}\t{}\t{detail}", r.time, r.slot, r.event.kind());
    }
    out
}
