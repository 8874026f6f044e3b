//! Append-only event log of a simulation run.

use alloc::vec::Vec;

use crate::app::{Lineage, Profile, QueueFingerprint, TaskId};
use crate::attack::AttackInfo;
use crate::policy::{PerBuffer, TaskState};

use smallvec::SmallVec;

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    ProfileChange {
        from: Profile,
        to: Profile,
    },
    /// Policy output; logged whenever profile, states, running task or weights change.
    Decision {
        profile: Profile,
        info: AttackInfo,
        states: SmallVec<[TaskState; 8]>,
        executing: Option<TaskId>,
        weights: PerBuffer,
        power: f64,
    },
    Release {
        task: TaskId,
    },
    /// A release dropped without being served.
    Missed {
        task: TaskId,
    },
    Start {
        task: TaskId,
        buffer: usize,
        /// Energy above the brown-out level at selection time, joules.
        available: f64,
        cost: f64,
        queues: QueueFingerprint,
    },
    Finish {
        task: TaskId,
        lineage: Lineage,
        /// A sink execution carrying source data: one application completion.
        completion: bool,
    },
    Abort {
        task: TaskId,
        /// Energy already drawn by the aborted execution, joules.
        wasted: f64,
        queues: QueueFingerprint,
    },
    /// Load switch of a buffer turned on or off.
    Gate {
        buffer: usize,
        on: bool,
    },
    /// Buffer voltage crossed `v_on` (availability bookkeeping).
    Threshold {
        buffer: usize,
        above: bool,
    },
    /// Periodic snapshot for time-series output.
    Sample {
        energies: PerBuffer,
        voltages: PerBuffer,
        profile: Profile,
        executing: Option<TaskId>,
        shares: PerBuffer,
        power: f64,
    },
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::ProfileChange { .. } => "profile",
            Event::Decision { .. } => "decision",
            Event::Release { .. } => "release",
            Event::Missed { .. } => "missed",
            Event::Start { .. } => "start",
            Event::Finish { .. } => "finish",
            Event::Abort { .. } => "abort",
            Event::Gate { .. } => "gate",
            Event::Threshold { .. } => "threshold",
            Event::Sample { .. } => "sample",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub slot: u64,
    pub time: f64,
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventLog {
    pub start: f64,
    pub dt: f64,
    /// Slots simulated so far.
    pub slots: u64,
    /// Policy invocations (slots in which the MCU was powered).
    pub invocations: u64,
    records: Vec<Record>,
}

impl EventLog {
    pub fn new(start: f64, dt: f64) -> Self {
        Self {
            start,
            dt,
            ..Self::default()
        }
    }

    pub fn push(&mut self, slot: u64, time: f64, event: Event) {
        debug_assert!(self.records.last().is_none_or(|r| r.time <= time));
        self.records.push(Record { slot, time, event });
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Record> {
        self.records.iter()
    }

    pub fn slot_time(&self, slot: u64) -> f64 {
        self.start + slot as f64 * self.dt
    }
}
