//! The mitigation policy: profile selection, active task set and rates,
//! attack-aware task states, dispatch, and federated harvest allocation.
//!
//! All functions operate on an explicit [`SchedulerState`], so a slot of the
//! policy is a pure transition that can be replayed and tested in isolation.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use smallvec::SmallVec;
use thiserror::Error;

use crate::app::{AppSpec, Profile, QueueSet, TaskId};
use crate::attack::AttackInfo;
use crate::energy::CapacitorBank;
use crate::TIME_EPS;

/// Per-buffer values (weights, power shares).
pub type PerBuffer = SmallVec<[f64; 4]>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("invalid policy parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("unknown policy {0}")]
    UnknownPolicy(alloc::string::String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyParams {
    /// Seconds of remaining attack above which the long-attack profile is used.
    pub alpha: f64,
    /// Joules; below this the system is in CTL.
    pub omega0: f64,
    /// Joules; above this the system is in NML.
    pub omega1: f64,
    /// Weight of a buffer backing a ready or running task.
    pub lambda_hi: f64,
    /// Weight of any other buffer.
    pub lambda_lo: f64,
    /// Joules charged to the MCU buffer per invocation.
    pub decision_cost: f64,
    /// Seconds of MCU time per invocation (reported only).
    pub decision_time: f64,
    /// Ignore detector reports whose accuracy is at or below `accuracy_threshold`.
    pub accuracy_gate: bool,
    pub accuracy_threshold: f64,
}

impl PolicyParams {
    pub const DECISION_COST: f64 = 1.781e-9;
    pub const DECISION_TIME: f64 = 1.237e-6;

    /// Defaults scaled to a bank whose full charge holds `capacity_energy` joules.
    pub fn defaults_for(capacity_energy: f64) -> Self {
        Self {
            alpha: 60.0,
            omega0: 0.2 * capacity_energy,
            omega1: 0.6 * capacity_energy,
            lambda_hi: 0.8,
            lambda_lo: 0.2,
            decision_cost: Self::DECISION_COST,
            decision_time: Self::DECISION_TIME,
            accuracy_gate: false,
            accuracy_threshold: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = PolicyError::InvalidParameter;
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(bad("alpha must be >= 0"));
        }
        if !(self.omega0 >= 0.0 && self.omega1 > self.omega0 && self.omega1.is_finite()) {
            return Err(bad("need omega1 > omega0 >= 0"));
        }
        if !(self.lambda_lo >= 0.0 && self.lambda_hi > self.lambda_lo && self.lambda_hi.is_finite()) {
            return Err(bad("need lambda_hi > lambda_lo >= 0"));
        }
        if !(self.decision_cost >= 0.0 && self.decision_cost.is_finite()) {
            return Err(bad("decision cost must be >= 0"));
        }
        if !(self.decision_time >= 0.0 && self.decision_time.is_finite()) {
            return Err(bad("decision time must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.accuracy_threshold) {
            return Err(bad("accuracy threshold must be in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Eam,
    Fh,
    Central,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Eam, PolicyKind::Fh, PolicyKind::Central];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Eam => "eam",
            PolicyKind::Fh => "fh",
            PolicyKind::Central => "central",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| PolicyError::UnknownPolicy(s.into()))
    }
}

/// How harvested power is split across buffers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Allocation {
    /// Λ/λ weights by task state, normalized.
    Demand,
    /// Fixed split proportional to capacitance.
    CapacitanceProportional,
}

/// Knobs of the mitigation policy. The default is the full policy; turning
/// features off yields the baselines' behavior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EamVariant {
    pub adaptive_profiles: bool,
    pub attack_aware: bool,
    pub allocation: Allocation,
}

impl Default for EamVariant {
    fn default() -> Self {
        Self {
            adaptive_profiles: true,
            attack_aware: true,
            allocation: Allocation::Demand,
        }
    }
}

/// Order in which Ready tasks are considered for dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dispatch {
    #[default]
    IndexOrder,
    EarliestDeadline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskState {
    Ready,
    Running,
    Blocked,
    Suspended,
}

impl TaskState {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskState::Ready => "ready",
            TaskState::Running => "running",
            TaskState::Blocked => "blocked",
            TaskState::Suspended => "suspended",
        }
    }

    pub fn short(self) -> char {
        match self {
            TaskState::Ready => 'R',
            TaskState::Running => 'X',
            TaskState::Blocked => 'B',
            TaskState::Suspended => 'S',
        }
    }

    /// Edges of the task state machine. A task only becomes Running from
    /// Ready; every other move is allowed.
    pub fn can_transition(self, to: TaskState) -> bool {
        self == to || to != TaskState::Running || self == TaskState::Ready
    }
}

/// Bookkeeping for one task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskSlot {
    pub state: TaskState,
    /// Holds an unserved release (source) or has input data waiting (others).
    pub pending: bool,
    pub pending_since: f64,
    pub next_release: f64,
    pub last_release: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Executing {
    pub task: TaskId,
    /// Seconds of work left.
    pub remaining: f64,
    /// Joules withdrawn so far.
    pub consumed: f64,
    pub started: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReleaseEvent {
    Released(TaskId),
    /// A release was dropped unserved.
    Superseded(TaskId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerState {
    pub profile: Profile,
    pub active_set: Vec<TaskId>,
    /// Executions per hour per task in the current profile, 0 when inactive.
    pub rates: Vec<f64>,
    pub tasks: Vec<TaskSlot>,
    pub executing: Option<Executing>,
    pub dispatch: Dispatch,
    sources: Vec<bool>,
}

impl SchedulerState {
    /// Fresh state: every source task is due at `start`.
    pub fn new(spec: &AppSpec, profile: Profile, start: f64, dispatch: Dispatch) -> Self {
        let (active_set, rates) = build_active_set(spec, profile);
        let tasks = spec
            .tasks
            .iter()
            .map(|_| TaskSlot {
                state: TaskState::Blocked,
                pending: false,
                pending_since: start,
                next_release: start,
                last_release: None,
            })
            .collect();
        Self {
            profile,
            active_set,
            rates,
            tasks,
            executing: None,
            dispatch,
            sources: spec.tasks.iter().map(|t| t.is_source()).collect(),
        }
    }

    pub fn period(&self, task: TaskId) -> Option<f64> {
        let r = self.rates[task.0];
        (r > 0.0).then(|| 3600.0 / r)
    }

    pub fn states(&self) -> SmallVec<[TaskState; 8]> {
        self.tasks.iter().map(|t| t.state).collect()
    }

    pub fn running(&self) -> Option<TaskId> {
        self.executing.map(|e| e.task)
    }

    /// Switches profile: rebuilds the active set and rates and re-phases
    /// periodic releases on the new period.
    pub fn set_profile(&mut self, spec: &AppSpec, profile: Profile) {
        if profile == self.profile {
            return;
        }
        self.profile = profile;
        let (active, rates) = build_active_set(spec, profile);
        self.active_set = active;
        self.rates = rates;
        for i in 0..self.tasks.len() {
            if !self.sources[i] {
                continue;
            }
            if let (Some(last), Some(period)) = (self.tasks[i].last_release, self.period(TaskId(i))) {
                self.tasks[i].next_release = last + period;
            }
        }
    }

    /// Generates the releases due at `now`.
    pub fn advance_releases(&mut self, queues: &QueueSet, now: f64) -> SmallVec<[ReleaseEvent; 4]> {
        let mut out = SmallVec::new();
        let running = self.running();
        for i in 0..self.tasks.len() {
            let id = TaskId(i);
            let period = self.period(id);
            let slot = &mut self.tasks[i];
            if self.sources[i] {
                let Some(period) = period else {
                    if slot.pending {
                        slot.pending = false;
                        out.push(ReleaseEvent::Superseded(id));
                    }
                    continue;
                };
                if now + TIME_EPS >= slot.next_release {
                    if slot.pending {
                        out.push(ReleaseEvent::Superseded(id));
                    }
                    slot.pending = true;
                    slot.pending_since = now;
                    slot.last_release = Some(now);
                    slot.next_release += period;
                    if slot.next_release <= now + TIME_EPS {
                        slot.next_release = now + period;
                    }
                    out.push(ReleaseEvent::Released(id));
                }
            } else {
                let want = queues.has_input(id) && running != Some(id);
                if want && !slot.pending {
                    slot.pending = true;
                    slot.pending_since = now;
                    out.push(ReleaseEvent::Released(id));
                } else if !want && running != Some(id) {
                    slot.pending = false;
                }
            }
        }
        out
    }

    /// Abandons the running execution; its release becomes pending again.
    pub fn abort(&mut self) -> Option<(Executing, Option<ReleaseEvent>)> {
        let exec = self.executing.take()?;
        let slot = &mut self.tasks[exec.task.0];
        let lost = if slot.pending {
            Some(ReleaseEvent::Superseded(exec.task))
        } else {
            slot.pending = true;
            None
        };
        slot.state = TaskState::Suspended;
        Some((exec, lost))
    }

    /// Ends the running execution after its output has been committed.
    pub fn finish(&mut self) -> Option<Executing> {
        let exec = self.executing.take()?;
        self.tasks[exec.task.0].state = TaskState::Blocked;
        Some(exec)
    }
}

/// Profile selection.
///
/// | a_o | condition        | profile |
/// |-----|------------------|---------|
/// | 1   | a_rt > α         | LA      |
/// | 1   | a_rt ≤ α         | SA      |
/// | 0   | E > Ω₁           | NML     |
/// | 0   | E < Ω₀           | CTL     |
/// | 0   | Ω₀ ≤ E ≤ Ω₁      | LP      |
pub fn select_profile(info: &AttackInfo, total_energy: f64, params: &PolicyParams) -> Profile {
    if info.ongoing {
        if info.remaining > params.alpha {
            Profile::La
        } else {
            Profile::Sa
        }
    } else if total_energy > params.omega1 {
        Profile::Nml
    } else if total_energy < params.omega0 {
        Profile::Ctl
    } else {
        Profile::Lp
    }
}

/// Tasks enabled in `profile`, in spec order, with every task's rate.
pub fn build_active_set(spec: &AppSpec, profile: Profile) -> (Vec<TaskId>, Vec<f64>) {
    let rates: Vec<f64> = spec.tasks.iter().map(|t| t.rates.get(profile)).collect();
    let active = spec.ids().filter(|t| rates[t.0] > 0.0).collect();
    (active, rates)
}

/// Re-evaluates every task state.
///
/// `attack_remaining` is `Some(a_rt)` when the policy acts on an ongoing
/// attack. A pending task is then Ready only if `a_rt` exceeds its period and
/// its buffer holds strictly more than its cost. Without an attack a pending
/// task is Ready when its buffer is powered and holds at least its cost above
/// the brown-out level. A pending task kept back for lack of energy is
/// Suspended; tasks without a release or excluded by the attack rule are
/// Blocked.
pub fn set_task_states(
    state: &mut SchedulerState,
    spec: &AppSpec,
    bank: &CapacitorBank,
    attack_remaining: Option<f64>,
) {
    let running = state.running();
    for i in 0..state.tasks.len() {
        let id = TaskId(i);
        if running == Some(id) {
            state.tasks[i].state = TaskState::Running;
            continue;
        }
        let period = state.period(id);
        let slot = &mut state.tasks[i];
        let Some(period) = period.filter(|_| slot.pending) else {
            slot.state = TaskState::Blocked;
            continue;
        };
        let task = spec.task(id);
        let cap = &bank.capacitors[task.buffer];
        slot.state = match attack_remaining {
            Some(a_rt) if a_rt <= period => TaskState::Blocked,
            Some(_) if cap.is_powered() && cap.available() > task.energy_cost => TaskState::Ready,
            None if cap.is_powered() && cap.available() >= task.energy_cost => TaskState::Ready,
            _ => TaskState::Suspended,
        };
    }
}

/// Starts the first funded Ready task, if the MCU is idle.
pub fn pick_execution_task(
    state: &mut SchedulerState,
    spec: &AppSpec,
    bank: &CapacitorBank,
    now: f64,
) -> Option<TaskId> {
    if state.executing.is_some() {
        return None;
    }
    let mut order: SmallVec<[TaskId; 8]> = state
        .active_set
        .iter()
        .copied()
        .filter(|t| state.tasks[t.0].state == TaskState::Ready)
        .collect();
    if state.dispatch == Dispatch::EarliestDeadline {
        let deadline = |t: &TaskId| state.tasks[t.0].pending_since + state.period(*t).unwrap_or(f64::INFINITY);
        order.sort_by(|a, b| deadline(a).total_cmp(&deadline(b)).then(a.cmp(b)));
    }
    let chosen = order.into_iter().find(|&t| {
        let task = spec.task(t);
        let cap = &bank.capacitors[task.buffer];
        cap.is_powered() && cap.available() >= task.energy_cost
    })?;
    let slot = &mut state.tasks[chosen.0];
    slot.state = TaskState::Running;
    slot.pending = false;
    state.executing = Some(Executing {
        task: chosen,
        remaining: spec.task(chosen).duration,
        consumed: 0.0,
        started: now,
    });
    Some(chosen)
}

/// Normalized Λ/λ weights. A buffer gets Λ when it backs a task that holds
/// a release it may serve now: Ready, Running, or Suspended while it waits for
/// that buffer to fill. Buffers that back no task get weight 0.
pub fn demand_weights(
    state: &SchedulerState,
    spec: &AppSpec,
    buffers: usize,
    lambda_hi: f64,
    lambda_lo: f64,
) -> PerBuffer {
    let mut used: SmallVec<[bool; 4]> = SmallVec::from_elem(false, buffers);
    let mut hot: SmallVec<[bool; 4]> = SmallVec::from_elem(false, buffers);
    for (i, t) in spec.tasks.iter().enumerate() {
        used[t.buffer] = true;
        if state.rates[i] > 0.0
            && matches!(
                state.tasks[i].state,
                TaskState::Ready | TaskState::Running | TaskState::Suspended
            )
        {
            hot[t.buffer] = true;
        }
    }
    let raw: PerBuffer = (0..buffers)
        .map(|b| match (used[b], hot[b]) {
            (false, _) => 0.0,
            (true, true) => lambda_hi,
            (true, false) => lambda_lo,
        })
        .collect();
    normalize(raw, &used)
}

fn normalize(mut raw: PerBuffer, eligible: &[bool]) -> PerBuffer {
    let sum: f64 = raw.iter().sum();
    if sum > 0.0 {
        raw.iter_mut().for_each(|w| *w /= sum);
        return raw;
    }
    let n = eligible.iter().filter(|&&e| e).count().max(1);
    raw.iter_mut()
        .zip(eligible)
        .for_each(|(w, &e)| *w = if e { 1.0 / n as f64 } else { 0.0 });
    raw
}

/// Splits `power` by `weights`; the last weighted buffer takes the remainder
/// so the shares add up to `power` exactly.
pub fn split_power(weights: &[f64], power: f64) -> PerBuffer {
    let mut shares: PerBuffer = weights.iter().map(|w| w * power).collect();
    if let Some(last) = weights.iter().rposition(|&w| w > 0.0) {
        let others: f64 = shares
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != last)
            .map(|(_, s)| s)
            .sum();
        shares[last] = (power - others).max(0.0);
    }
    shares
}

/// Demand-driven split of the harvested power across buffers.
pub fn allocate_harvest(
    state: &SchedulerState,
    spec: &AppSpec,
    buffers: usize,
    params: &PolicyParams,
    power: f64,
) -> PerBuffer {
    split_power(
        &demand_weights(state, spec, buffers, params.lambda_hi, params.lambda_lo),
        power,
    )
}

/// Everything the policy decided in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub profile: Profile,
    pub profile_changed: bool,
    pub info: AttackInfo,
    pub releases: SmallVec<[ReleaseEvent; 4]>,
    pub states: SmallVec<[TaskState; 8]>,
    pub started: Option<TaskId>,
    pub executing: Option<TaskId>,
    pub weights: PerBuffer,
    pub shares: PerBuffer,
}

/// Applies the accuracy gate and awareness switch to the detector report.
pub fn effective_attack(info: &AttackInfo, params: &PolicyParams, aware: bool) -> AttackInfo {
    let trusted = !params.accuracy_gate || info.accuracy > params.accuracy_threshold;
    if aware && info.ongoing && trusted {
        *info
    } else {
        AttackInfo::none(info.accuracy)
    }
}

/// One slot of the mitigation policy.
#[allow(clippy::too_many_arguments)]
pub fn policy_step(
    state: &mut SchedulerState,
    spec: &AppSpec,
    bank: &CapacitorBank,
    info: &AttackInfo,
    queues: &QueueSet,
    params: &PolicyParams,
    variant: &EamVariant,
    now: f64,
    harvested_power: f64,
) -> Decision {
    let seen = effective_attack(info, params, variant.attack_aware);
    let profile = if variant.adaptive_profiles {
        select_profile(&seen, bank.total_energy(), params)
    } else {
        Profile::Nml
    };
    let profile_changed = profile != state.profile;
    state.set_profile(spec, profile);
    let releases = state.advance_releases(queues, now);
    set_task_states(state, spec, bank, seen.ongoing.then_some(seen.remaining));
    let started = pick_execution_task(state, spec, bank, now);
    let weights = match variant.allocation {
        Allocation::Demand => demand_weights(state, spec, bank.len(), params.lambda_hi, params.lambda_lo),
        Allocation::CapacitanceProportional => crate::baseline::capacitance_weights(bank),
    };
    Decision {
        profile,
        profile_changed,
        info: *info,
        releases,
        states: state.states(),
        started,
        executing: state.running(),
        shares: split_power(&weights, harvested_power),
        weights,
    }
}
