//! Discrete-time simulation loop.
//!
//! Each slot of length `dt`:
//!
//! 1. harvested power `P(t)` from the attacked trace;
//! 2. detector report;
//! 3. policy decision (only while the MCU buffer is powered; the decision
//!    cost is drawn from that buffer);
//! 4. per-buffer update with the allotted power share;
//! 5. progress of the running task, drawing `ε·dt/duration` from its buffer.
//!    A failed draw or a load switch turning off aborts the task without
//!    publishing any output;
//! 6. load-switch and `v_on` bookkeeping.
//!
//! While the MCU buffer is off no policy runs; the charging switches keep the
//! split of the last decision (for the baselines that split never changes).

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::app::{AppSpec, QueueSet};
use crate::attack::{detect, AttackInfo, DetectorConfig};
use crate::baseline::{capacitance_weights, central_bank, rts_schedule};
use crate::energy::{energy_of, voltage_of, Capacitor, CapacitorBank, ComponentMap, EnergyError, Withdrawal};
use crate::log::{Event, EventLog};
use crate::metrics::{compute_metrics, MetricsReport};
use crate::policy::{
    demand_weights, policy_step, split_power, Allocation, Decision, Dispatch, EamVariant, PerBuffer, PolicyError,
    PolicyKind, PolicyParams, ReleaseEvent, SchedulerState,
};
use crate::trace::{check_non_overlapping, AttackScenario, EnergyTrace, TraceError};
use crate::{Profile, TaskState, TIME_EPS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("trace: {0}")]
    Trace(#[from] TraceError),
    #[error("bank: {0}")]
    Energy(#[from] EnergyError),
    #[error("params: {0}")]
    Policy(#[from] PolicyError),
    #[error("app: {0}")]
    App(String),
    #[error("sim: {0}")]
    Config(&'static str),
}

/// Capacitor bank description; turned into a [`CapacitorBank`] for a given slot length.
#[derive(Debug, Clone, PartialEq)]
pub struct BankParams {
    /// Farads, one entry per buffer.
    pub capacitances: Vec<f64>,
    pub parallel_resistance: f64,
    pub efficiency: f64,
    /// Fraction of stored energy lost per second.
    pub sigma_per_s: f64,
    pub v_on: f64,
    pub v_off: f64,
    pub v_max: f64,
    /// Joules per buffer; `None` starts every buffer at `v_max`.
    pub initial_energy: Option<Vec<f64>>,
    pub components: ComponentMap,
}

impl Default for BankParams {
    fn default() -> Self {
        Self {
            capacitances: vec![33e-6, 220e-6],
            parallel_resistance: 30e3,
            efficiency: 0.9,
            sigma_per_s: 1e-3,
            v_on: 2.4,
            v_off: 1.8,
            v_max: 3.0,
            initial_energy: None,
            components: ComponentMap::default(),
        }
    }
}

impl BankParams {
    /// Per-slot drain fraction equivalent to `sigma_per_s`.
    pub fn drain_fraction(&self, dt: f64) -> f64 {
        1.0 - libm::pow(1.0 - self.sigma_per_s, dt)
    }

    pub fn capacity_energy(&self) -> f64 {
        self.capacitances.iter().map(|&c| energy_of(c, self.v_max)).sum()
    }

    pub fn build(&self, dt: f64) -> Result<CapacitorBank, SimError> {
        if !(0.0..1.0).contains(&self.sigma_per_s) {
            return Err(SimError::Config("sigma_per_s must be in [0, 1)"));
        }
        if let Some(e) = &self.initial_energy {
            if e.len() != self.capacitances.len() {
                return Err(SimError::Config("one initial energy per capacitor is required"));
            }
        }
        let sigma = self.drain_fraction(dt);
        let mut caps = Vec::with_capacity(self.capacitances.len());
        for (i, &c) in self.capacitances.iter().enumerate() {
            let initial = self.initial_energy.as_ref().map(|e| e[i]);
            if let Some(e) = initial {
                if !(e >= 0.0 && e <= energy_of(c, self.v_max) * (1.0 + 1e-12)) {
                    return Err(SimError::Config("initial energy outside [0, capacity]"));
                }
            }
            let voltage = initial.map_or(self.v_max, |e| voltage_of(e, c).min(self.v_max));
            let mut cap = Capacitor::new(
                c,
                self.parallel_resistance,
                self.efficiency,
                sigma,
                self.v_on,
                self.v_off,
                self.v_max,
                voltage,
            )?;
            if let Some(e) = initial {
                cap.set_energy(e);
            }
            caps.push(cap);
        }
        Ok(CapacitorBank::new(caps, self.components)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub trace: EnergyTrace,
    pub attacks: Vec<AttackScenario>,
    pub app: AppSpec,
    pub queue_capacity: usize,
    pub policy: PolicyKind,
    /// Feature switches of the mitigation policy; ignored by the baselines.
    pub variant: EamVariant,
    pub params: PolicyParams,
    pub bank: BankParams,
    pub detector: DetectorConfig,
    pub dispatch: Dispatch,
    /// Slot length, seconds.
    pub dt: f64,
    /// First simulated instant, seconds.
    pub start: f64,
    /// End of the run (exclusive), seconds.
    pub horizon: f64,
    /// Seconds between timeline samples.
    pub timeline_interval: f64,
}

impl SimConfig {
    /// Defaults over the whole trace with the default bank.
    pub fn new(trace: EnergyTrace, app: AppSpec, policy: PolicyKind) -> Self {
        let bank = BankParams::default();
        Self {
            horizon: trace.end(),
            start: trace.start(),
            trace,
            attacks: Vec::new(),
            app,
            queue_capacity: 4,
            policy,
            variant: EamVariant::default(),
            params: PolicyParams::defaults_for(bank.capacity_energy()),
            bank,
            detector: DetectorConfig::default(),
            dispatch: Dispatch::IndexOrder,
            dt: 1e-3,
            timeline_interval: 1.0,
        }
    }

    /// The bank actually simulated (one summed capacitor for Central).
    pub fn effective_bank(&self) -> BankParams {
        match self.policy {
            PolicyKind::Central => central_bank(&self.bank),
            _ => self.bank.clone(),
        }
    }

    /// The application actually simulated (all tasks on buffer 0 for Central).
    pub fn effective_app(&self) -> AppSpec {
        match self.policy {
            PolicyKind::Central => self.app.with_single_buffer(),
            _ => self.app.clone(),
        }
    }

    pub fn slot_count(&self) -> u64 {
        libm::round((self.horizon - self.start) / self.dt) as u64
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::Config("dt must be > 0"));
        }
        if !(self.horizon - self.start >= self.dt * (1.0 - 1e-9)) {
            return Err(SimError::Config("horizon must be at least one slot after start"));
        }
        if self.start < self.trace.start() - TIME_EPS || self.horizon > self.trace.end() + self.dt {
            return Err(SimError::Config("simulated span must lie within the trace"));
        }
        if !(self.timeline_interval > 0.0) {
            return Err(SimError::Config("timeline interval must be > 0"));
        }
        if self.queue_capacity == 0 {
            return Err(SimError::Config("queue capacity must be >= 1"));
        }
        self.params.validate()?;
        self.detector.validate().map_err(SimError::Config)?;
        check_non_overlapping(&self.attacks)?;
        let bank = self.effective_bank();
        bank.build(self.dt)?;
        if let Some(v) = self.effective_app().validate(bank.capacitances.len()).first() {
            return Err(SimError::App(v.to_string()));
        }
        Ok(())
    }
}

/// Energy flows of one slot, joules (for conservation checks).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SlotAccount {
    pub time: f64,
    pub power: f64,
    pub shares: PerBuffer,
    pub energy_before: f64,
    pub energy_after: f64,
    pub harvested: f64,
    pub drained: f64,
    pub withdrawn: f64,
    pub decision: f64,
    pub spill: f64,
}

impl SlotAccount {
    /// `after − before − (harvested − drained − withdrawn − decision − spill)`.
    pub fn residual(&self) -> f64 {
        (self.energy_after - self.energy_before)
            - (self.harvested - self.drained - self.withdrawn - self.decision - self.spill)
    }
}

type DecisionKey = (
    Profile,
    smallvec::SmallVec<[TaskState; 8]>,
    Option<crate::TaskId>,
    PerBuffer,
);

pub struct Simulation {
    config: SimConfig,
    app: AppSpec,
    trace: EnergyTrace,
    bank: CapacitorBank,
    queues: QueueSet,
    state: SchedulerState,
    log: EventLog,
    slot: u64,
    total_slots: u64,
    sample_every: u64,
    trace_hint: usize,
    above: Vec<Option<bool>>,
    last_logged: Option<DecisionKey>,
    /// Split applied while the MCU is off.
    weights: PerBuffer,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let app = config.effective_app();
        let bank = config.effective_bank().build(config.dt)?;
        let mut trace = config.trace.clone();
        for a in &config.attacks {
            trace = trace.inject_attack(a)?;
        }
        let queues = QueueSet::new(&app, config.queue_capacity);
        let state = SchedulerState::new(&app, Profile::Nml, config.start, config.dispatch);
        let sample_every = (libm::round(config.timeline_interval / config.dt) as u64).max(1);
        let weights = match config.policy {
            PolicyKind::Eam if config.variant.allocation == Allocation::Demand => {
                let p = &config.params;
                demand_weights(&state, &app, bank.len(), p.lambda_hi, p.lambda_lo)
            }
            _ => capacitance_weights(&bank),
        };
        Ok(Self {
            log: EventLog::new(config.start, config.dt),
            total_slots: config.slot_count(),
            above: vec![None; bank.len()],
            app,
            trace,
            bank,
            queues,
            state,
            slot: 0,
            sample_every,
            trace_hint: 0,
            last_logged: None,
            weights,
            config,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn app(&self) -> &AppSpec {
        &self.app
    }

    pub fn bank(&self) -> &CapacitorBank {
        &self.bank
    }

    pub fn queues(&self) -> &QueueSet {
        &self.queues
    }

    pub fn state(&self) -> &SchedulerState {
        &self.state
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn into_log(self) -> EventLog {
        self.log
    }

    /// Start time of the next slot.
    pub fn time(&self) -> f64 {
        self.config.start + self.slot as f64 * self.config.dt
    }

    pub fn is_done(&self) -> bool {
        self.slot >= self.total_slots
    }

    /// Advances one slot; `None` once the horizon is reached.
    pub fn step(&mut self) -> Option<SlotAccount> {
        if self.is_done() {
            return None;
        }
        let n = self.slot;
        let t = self.time();
        let dt = self.config.dt;
        let power = self
            .trace
            .power_seek(&mut self.trace_hint, t)
            .expect("slot time inside the validated trace span");
        let info = detect(t, &self.config.attacks, &self.config.detector);
        let mcu = self.bank.components.mcu;
        let mut acct = SlotAccount {
            time: t,
            power,
            energy_before: self.bank.total_energy(),
            ..SlotAccount::default()
        };

        let shares = if self.bank.capacitors[mcu].is_powered() {
            let decision = self.decide(&info, t, power);
            self.log_decision(n, t, &decision, power);
            self.log.invocations += 1;
            acct.decision = self.bank.capacitors[mcu].drain(self.config.params.decision_cost);
            self.weights = decision.weights;
            decision.shares
        } else {
            let releases = self.state.advance_releases(&self.queues, t);
            self.log_releases(n, t, &releases);
            split_power(&self.weights, power)
        };

        for (cap, &share) in self.bank.capacitors.iter_mut().zip(&shares) {
            let s = cap.step_accounted(share, dt).expect("non-negative share and dt");
            acct.harvested += s.harvested;
            acct.drained += s.drained;
            acct.spill += s.spill;
        }
        acct.shares = shares;

        if let Some(mut exec) = self.state.executing {
            let task = self.app.task(exec.task);
            let work = exec.remaining.min(dt);
            let amount = task.energy_cost * work / task.duration;
            match self.bank.capacitors[task.buffer]
                .withdraw(amount)
                .expect("non-negative draw")
            {
                Withdrawal::Ok => {
                    acct.withdrawn += amount;
                    exec.consumed += amount;
                    exec.remaining -= work;
                    self.state.executing = Some(exec);
                    if exec.remaining <= 1e-12 {
                        self.complete(n, t);
                    }
                }
                Withdrawal::Insufficient => self.abort(n, t),
            }
        }

        for (i, cap) in self.bank.capacitors.iter_mut().enumerate() {
            if let Some(on) = cap.update_gate() {
                self.log.push(n, t, Event::Gate { buffer: i, on });
            }
        }
        if let Some(exec) = self.state.executing {
            let buffer = self.app.task(exec.task).buffer;
            if !self.bank.capacitors[mcu].is_powered() || !self.bank.capacitors[buffer].is_powered() {
                self.abort(n, t);
            }
        }
        for (i, cap) in self.bank.capacitors.iter().enumerate() {
            let above = cap.at_or_above_on();
            if self.above[i] != Some(above) {
                self.above[i] = Some(above);
                self.log.push(n, t, Event::Threshold { buffer: i, above });
            }
        }
        if n.is_multiple_of(self.sample_every) {
            self.log.push(
                n,
                t,
                Event::Sample {
                    energies: self.bank.capacitors.iter().map(Capacitor::energy).collect(),
                    voltages: self.bank.capacitors.iter().map(Capacitor::voltage).collect(),
                    profile: self.state.profile,
                    executing: self.state.running(),
                    shares: acct.shares.clone(),
                    power,
                },
            );
        }

        self.slot += 1;
        self.log.slots = self.slot;
        acct.energy_after = self.bank.total_energy();
        Some(acct)
    }

    /// Runs to the horizon and computes the metrics.
    pub fn finish(mut self) -> (MetricsReport, EventLog) {
        while self.step().is_some() {}
        let report = compute_metrics(&self.log, &self.config);
        (report, self.log)
    }

    fn decide(&mut self, info: &AttackInfo, t: f64, power: f64) -> Decision {
        match self.config.policy {
            PolicyKind::Eam => policy_step(
                &mut self.state,
                &self.app,
                &self.bank,
                info,
                &self.queues,
                &self.config.params,
                &self.config.variant,
                t,
                power,
            ),
            PolicyKind::Fh | PolicyKind::Central => {
                rts_schedule(&mut self.state, &self.app, &self.bank, info, &self.queues, t, power)
            }
        }
    }

    fn log_releases(&mut self, n: u64, t: f64, releases: &[ReleaseEvent]) {
        for r in releases {
            let event = match *r {
                ReleaseEvent::Released(task) => Event::Release { task },
                ReleaseEvent::Superseded(task) => Event::Missed { task },
            };
            self.log.push(n, t, event);
        }
    }

    fn log_decision(&mut self, n: u64, t: f64, d: &Decision, power: f64) {
        if d.profile_changed {
            let from = self.last_logged.as_ref().map_or(Profile::Nml, |k| k.0);
            self.log.push(n, t, Event::ProfileChange { from, to: d.profile });
        }
        self.log_releases(n, t, &d.releases);
        let key: DecisionKey = (d.profile, d.states.clone(), d.executing, d.weights.clone());
        if self.last_logged.as_ref() != Some(&key) {
            self.log.push(
                n,
                t,
                Event::Decision {
                    profile: d.profile,
                    info: d.info,
                    states: d.states.clone(),
                    executing: d.executing,
                    weights: d.weights.clone(),
                    power,
                },
            );
            self.last_logged = Some(key);
        }
        if let Some(task) = d.started {
            let spec = self.app.task(task);
            self.log.push(
                n,
                t,
                Event::Start {
                    task,
                    buffer: spec.buffer,
                    available: self.bank.capacitors[spec.buffer].available(),
                    cost: spec.energy_cost,
                    queues: self.queues.fingerprint(),
                },
            );
        }
    }

    fn complete(&mut self, n: u64, t: f64) {
        let Some(exec) = self.state.finish() else { return };
        let commit = self.queues.commit(exec.task, t);
        let completion = exec.task == self.app.sink && self.app.sources().any(|s| commit.lineage.contains(s));
        self.log.push(
            n,
            t,
            Event::Finish {
                task: exec.task,
                lineage: commit.lineage,
                completion,
            },
        );
    }

    fn abort(&mut self, n: u64, t: f64) {
        let Some((exec, lost)) = self.state.abort() else { return };
        self.log.push(
            n,
            t,
            Event::Abort {
                task: exec.task,
                wasted: exec.consumed,
                queues: self.queues.fingerprint(),
            },
        );
        if let Some(ReleaseEvent::Superseded(task)) = lost {
            self.log.push(n, t, Event::Missed { task });
        }
    }
}

/// Runs `config` to its horizon.
pub fn run(config: SimConfig) -> Result<(MetricsReport, EventLog), SimError> {
    Ok(Simulation::new(config)?.finish())
}
