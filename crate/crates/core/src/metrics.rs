//! Evaluation metrics computed from an [`EventLog`].

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::app::Component;
use crate::log::{Event, EventLog};
use crate::policy::PolicyKind;
use crate::sim::SimConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct TaskMetrics {
    pub task: String,
    pub releases: u64,
    pub served: u64,
    pub missed: u64,
    pub schedulability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentMetrics {
    pub component: Component,
    pub buffer: usize,
    /// Fraction of slots with the buffer at or above `v_on`.
    pub availability: f64,
    /// Mean seconds from an attack's end until the buffer is back at `v_on`;
    /// `None` without attacks. A buffer that never recovers counts the time
    /// to the end of the run.
    pub availability_latency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub policy: PolicyKind,
    pub app: String,
    pub hours: f64,
    pub completions: u64,
    /// Application completions per hour.
    pub app_exec_rate: f64,
    pub attack_hours: f64,
    pub attack_completions: u64,
    /// Completions per hour of attack, counted inside attack windows only.
    pub attack_window_rate: f64,
    pub tasks: Vec<TaskMetrics>,
    pub mean_schedulability: f64,
    pub components: Vec<ComponentMetrics>,
    pub slots: u64,
    pub invocations: u64,
    /// Joules spent on policy decisions.
    pub overhead_energy: f64,
    /// Seconds of MCU time spent on policy decisions.
    pub overhead_time: f64,
    pub aborts: u64,
    /// Joules drawn by executions that were later aborted.
    pub wasted_energy: f64,
    /// `(time, cumulative completions)` at every completion.
    pub completions_timeline: Vec<(f64, u64)>,
}

impl MetricsReport {
    pub fn component(&self, c: Component) -> &ComponentMetrics {
        self.components
            .iter()
            .find(|m| m.component == c)
            .expect("every component is reported")
    }
}

pub fn compute_metrics(log: &EventLog, config: &SimConfig) -> MetricsReport {
    let app = config.effective_app();
    let components = config.effective_bank().components;
    let n = app.tasks.len();
    let start = log.start;
    let end = log.slot_time(log.slots);
    let hours = (end - start) / 3600.0;

    let mut releases = vec![0u64; n];
    let mut served = vec![0u64; n];
    let mut missed = vec![0u64; n];
    let mut completions = 0u64;
    let mut attack_completions = 0u64;
    let mut timeline = Vec::new();
    let mut aborts = 0u64;
    let mut wasted = 0.0;
    let buffers = components.mcu.max(components.sensing).max(components.actuation) + 1;
    let buffers = buffers.max(app.tasks.iter().map(|t| t.buffer + 1).max().unwrap_or(1));
    let mut crossings: Vec<Vec<(u64, bool)>> = vec![Vec::new(); buffers];

    for r in log.iter() {
        match &r.event {
            Event::Release { task } => releases[task.0] += 1,
            Event::Missed { task } => missed[task.0] += 1,
            Event::Finish { task, completion, .. } => {
                served[task.0] += 1;
                if *completion {
                    completions += 1;
                    timeline.push((r.time, completions));
                    if config.attacks.iter().any(|a| a.contains(r.time)) {
                        attack_completions += 1;
                    }
                }
            }
            Event::Abort { wasted: w, .. } => {
                aborts += 1;
                wasted += w;
            }
            Event::Threshold { buffer, above } if *buffer < buffers => crossings[*buffer].push((r.slot, *above)),
            _ => {}
        }
    }

    let tasks: Vec<TaskMetrics> = (0..n)
        .map(|i| TaskMetrics {
            task: app.tasks[i].id.clone(),
            releases: releases[i],
            served: served[i],
            missed: missed[i],
            schedulability: schedulability(releases[i], served[i], missed[i]),
        })
        .collect();
    let mean_schedulability = if n == 0 {
        0.0
    } else {
        tasks.iter().map(|t| t.schedulability).sum::<f64>() / n as f64
    };

    let attack_hours: f64 = config
        .attacks
        .iter()
        .map(|a| (a.end().min(end) - a.start.max(start)).max(0.0))
        .sum::<f64>()
        / 3600.0;

    let components = Component::ALL
        .iter()
        .map(|&c| {
            let b = components.buffer_for(c);
            let series = &crossings[b];
            ComponentMetrics {
                component: c,
                buffer: b,
                availability: availability(series, log.slots),
                availability_latency: latency(series, log, config),
            }
        })
        .collect();

    MetricsReport {
        policy: config.policy,
        app: app.name.clone(),
        hours,
        completions,
        app_exec_rate: per_hour(completions, hours),
        attack_hours,
        attack_completions,
        attack_window_rate: per_hour(attack_completions, attack_hours),
        tasks,
        mean_schedulability,
        components,
        slots: log.slots,
        invocations: log.invocations,
        overhead_energy: config.params.decision_cost * log.invocations as f64,
        overhead_time: config.params.decision_time * log.invocations as f64,
        aborts,
        wasted_energy: wasted,
        completions_timeline: timeline,
    }
}

fn per_hour(count: u64, hours: f64) -> f64 {
    if hours > 0.0 {
        count as f64 / hours
    } else {
        0.0
    }
}

/// Served releases over closed ones (served or dropped). With nothing closed
/// yet: 1 if nothing was ever released, else 0.
pub fn schedulability(releases: u64, served: u64, missed: u64) -> f64 {
    let closed = served + missed;
    if closed > 0 {
        served as f64 / closed as f64
    } else if releases == 0 {
        1.0
    } else {
        0.0
    }
}

/// Fraction of `slots` spent above threshold, from the crossing series.
pub fn availability(crossings: &[(u64, bool)], slots: u64) -> f64 {
    if slots == 0 {
        return 0.0;
    }
    let mut above_slots = 0;
    for (k, &(slot, above)) in crossings.iter().enumerate() {
        if above {
            let until = crossings.get(k + 1).map_or(slots, |c| c.0);
            above_slots += until.min(slots) - slot.min(slots);
        }
    }
    above_slots as f64 / slots as f64
}

fn latency(crossings: &[(u64, bool)], log: &EventLog, config: &SimConfig) -> Option<f64> {
    let end = log.slot_time(log.slots);
    let mut total = 0.0;
    let mut count = 0;
    for a in &config.attacks {
        let te = a.end();
        if te < log.start || te >= end {
            continue;
        }
        let first = libm::ceil((te - log.start) / log.dt - 1e-9) as u64;
        let status = crossings.iter().rev().find(|c| c.0 <= first).is_some_and(|c| c.1);
        let back = if status {
            Some(first)
        } else {
            crossings.iter().find(|c| c.0 > first && c.1).map(|c| c.0)
        };
        total += back.map_or(end, |s| log.slot_time(s)) - te;
        count += 1;
    }
    (count > 0).then(|| (total / count as f64).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn availability_counts_slots() {
        let c = [(0, true), (3400, false)];
        assert!((availability(&c, 3600) - 0.944_444_444_444_444_4).abs() < 1e-12);
        assert_eq!(availability(&[(0, false)], 10), 0.0);
        assert_eq!(availability(&[(0, true)], 10), 1.0);
    }

    #[test]
    fn schedulability_bounds() {
        assert_eq!(schedulability(5, 5, 0), 1.0);
        assert_eq!(schedulability(5, 0, 5), 0.0);
        assert_eq!(schedulability(0, 0, 0), 1.0);
        assert_eq!(schedulability(3, 0, 0), 0.0);
        assert_eq!(schedulability(4, 3, 1), 0.75);
    }

    #[test]
    fn rate_is_a_division() {
        assert_eq!(per_hour(10, 0.5), 20.0);
        assert_eq!(per_hour(3, 0.0), 0.0);
    }
}
