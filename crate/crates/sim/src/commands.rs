//! The `run`, `compare` and `inject` commands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use eam_core::trace::{AttackKind, AttackScenario};
use eam_core::{MetricsReport, PolicyKind, SimConfig};

use crate::config::RunConfig;
use crate::output::{events_log, metric_rows, metrics_csv, timeline_csv, write_atomic};
use crate::trace_file::{read_trace, write_trace};

/// Loads a config with `--set` overrides, then the `--seed` override.
pub fn load_config(path: &Path, overrides: &[String], seed: Option<u64>) -> Result<RunConfig> {
    let mut all = overrides.to_vec();
    if let Some(s) = seed {
        all.push(format!("sim.seed={s}"));
    }
    RunConfig::load(path, &all)
}

/// Simulates `config` and writes its result files into `out`.
pub fn run_to_dir(config: SimConfig, out: &Path) -> Result<MetricsReport> {
    let app = config.effective_app();
    let (report, log) = eam_core::sim::run(config)?;
    write_atomic(&out.join("metrics.csv"), metrics_csv(&report).as_bytes())?;
    write_atomic(&out.join("timeline.csv"), timeline_csv(&log, &app).as_bytes())?;
    write_atomic(&out.join("events.log"), events_log(&log, &app).as_bytes())?;
    Ok(report)
}

pub fn cmd_run(config: &RunConfig, out: &Path) -> Result<MetricsReport> {
    let sim = config.to_sim_config()?;
    run_to_dir(sim, out)
}

/// Attack start drawn uniformly so the window lies in the middle 80% of
/// `[start, horizon)`. The draw depends only on the seed and the duration.
pub fn draw_attack_start(seed: u64, duration: f64, start: f64, horizon: f64) -> Result<f64> {
    let span = horizon - start;
    let lo = start + 0.1 * span;
    let hi = horizon - 0.1 * span - duration;
    if hi < lo {
        bail!("attack of {duration} s does not fit in the middle 80% of the run ({span} s)");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(duration.to_bits());
    Ok(if hi > lo { rng.gen_range(lo..hi) } else { lo })
}

/// One compare cell: the configured run for `policy` with a single attack.
/// With `equal_budget` the run starts at the attack onset with the
/// configured initial energies.
pub fn cell_config(
    base: &RunConfig,
    policy: PolicyKind,
    start: f64,
    duration: f64,
    equal_budget: bool,
) -> Result<SimConfig> {
    let mut cfg = base.to_sim_config()?;
    cfg.policy = policy;
    let kind = if duration > cfg.params.alpha {
        AttackKind::Long
    } else {
        AttackKind::Short
    };
    cfg.attacks = vec![AttackScenario::new(
        format!("attack_{duration}s"),
        start,
        duration,
        kind,
    )?];
    if equal_budget {
        cfg.start = start;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone)]
pub struct CompareCell {
    pub policy: PolicyKind,
    pub duration: f64,
    pub attack_start: f64,
    pub report: MetricsReport,
}

pub fn cell_dir(out: &Path, policy: PolicyKind, duration: f64) -> PathBuf {
    out.join("cells").join(format!("{policy}_{duration}s"))
}

pub fn cmd_compare(
    base: &RunConfig,
    out: &Path,
    policies: &[PolicyKind],
    durations: &[f64],
    equal_budget: bool,
) -> Result<Vec<CompareCell>> {
    if policies.is_empty() || durations.is_empty() {
        bail!("compare needs at least one policy and one attack duration");
    }
    let span = base.to_sim_config()?;
    let starts = durations
        .iter()
        .map(|&d| draw_attack_start(base.seed(), d, span.start, span.horizon))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(PolicyKind, f64, f64)> = durations
        .iter()
        .zip(&starts)
        .flat_map(|(&d, &s)| policies.iter().map(move |&p| (p, d, s)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(policy, duration, start)| {
            let cfg = cell_config(base, policy, start, duration, equal_budget)?;
            let report = run_to_dir(cfg, &cell_dir(out, policy, duration))
                .with_context(|| format!("cell {policy} / {duration} s"))?;
            Ok(CompareCell {
                policy,
                duration,
                attack_start: start,
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_atomic(&out.join("compare.csv"), compare_csv(&cells, equal_budget).as_bytes())?;
    Ok(cells)
}

pub fn compare_csv(cells: &[CompareCell], equal_budget: bool) -> String {
    let mut out = String::new();
    let Some(first) = cells.first() else {
        return out;
    };
    let keys: Vec<String> = metric_rows(&first.report).into_iter().map(|(k, _)| k).collect();
    let _ = writeln!(out, "attack_duration_s,attack_start_s,equal_budget,{}", keys.join(","));
    for c in cells {
        let values: Vec<String> = metric_rows(&c.report).into_iter().map(|(_, v)| v).collect();
        let _ = writeln!(
            out,
            "{},{},{},{}",
            c.duration,
            c.attack_start,
            equal_budget,
            values.join(",")
        );
    }
    out
}

/// Zeroes `[start, start + duration)` of the trace at `input`.
pub fn cmd_inject(input: &Path, output: &Path, start: f64, duration: f64) -> Result<()> {
    let trace = read_trace(input)?;
    let attack = AttackScenario::new("inject", start, duration, AttackKind::Short)?;
    let attacked = trace.inject_attack(&attack)?;
    write_trace(output, &attacked)
}
