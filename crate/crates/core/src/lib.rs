//! Simulation core for application-aware energy-attack mitigation on
//! battery-less, intermittently powered devices.
//!
//! The crate is `no_std` (it needs `alloc`) so the policy and physics code can
//! be reused on the device side. File formats, configuration and the CLI live
//! in the `eam-sim` companion crate.
//!
//! Layout:
//!
//! - [`trace`]: harvester voltage traces, synthetic shapes, attack injection.
//! - [`energy`]: capacitor physics and the per-slot energy-buffer update.
//! - [`attack`]: ground-truth attack detector producing [`AttackInfo`].
//! - [`app`]: tasks, profiles, per-profile rates, data queues, built-in apps.
//! - [`policy`]: the mitigation policy (profile selection, task states,
//!   federated harvest allocation).
//! - [`baseline`]: static federated charging and the single-capacitor baseline.
//! - [`sim`]: the discrete-time engine.
//! - [`log`] and [`metrics`]: the event log and the evaluation metrics.

#![no_std]
// `!(x >= 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod app;
pub mod attack;
pub mod baseline;
pub mod energy;
pub mod log;
pub mod metrics;
pub mod policy;
pub mod sim;
pub mod trace;

pub use app::{AppSpec, BuiltinApp, Component, DataQueue, Lineage, Profile, QueueSet, TaskId, TaskSpec};
pub use attack::{AttackInfo, DetectorConfig};
pub use baseline::BaselineKind;
pub use energy::{Capacitor, CapacitorBank, ComponentMap, Withdrawal};
pub use log::{Event, EventLog, Record};
pub use metrics::MetricsReport;
pub use policy::{Decision, PolicyKind, PolicyParams, SchedulerState, TaskState};
pub use sim::{BankParams, SimConfig, SimError, Simulation};
pub use trace::{AttackKind, AttackScenario, EnergyTrace, TraceError, TraceShape};

/// Relative/absolute float tolerance used for time comparisons on slot grids.
pub(crate) const TIME_EPS: f64 = 1e-9;
