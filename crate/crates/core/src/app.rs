//! Application specification: tasks, per-profile rates, finish-to-start
//! dependencies, and the non-volatile queues that carry data between tasks.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

/// System profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Profile {
    /// Short attack.
    Sa,
    /// Long attack.
    La,
    /// Normal operation.
    Nml,
    /// Low power.
    Lp,
    /// Critical energy scarcity.
    Ctl,
}

impl Profile {
    pub const ALL: [Profile; 5] = [Profile::Sa, Profile::La, Profile::Nml, Profile::Lp, Profile::Ctl];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Profile::Sa => "SA",
            Profile::La => "LA",
            Profile::Nml => "NML",
            Profile::Lp => "LP",
            Profile::Ctl => "CTL",
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Profile {
    type Err = AppError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Profile::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| AppError::UnknownProfile(s.to_string()))
    }
}

/// Hardware component a task keeps busy (used for availability metrics).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Component {
    Mcu,
    Sensing,
    Actuation,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::Mcu, Component::Sensing, Component::Actuation];

    pub fn as_str(self) -> &'static str {
        match self {
            Component::Mcu => "mcu",
            Component::Sensing => "sensing",
            Component::Actuation => "actuation",
        }
    }
}

impl FromStr for Component {
    type Err = AppError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Component::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| AppError::UnknownComponent(s.to_string()))
    }
}

/// Energy/duration classes measured for the example applications.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskClass {
    Sensing,
    Decision,
    Control,
}

impl TaskClass {
    /// Joules per execution.
    pub fn energy(self) -> f64 {
        match self {
            TaskClass::Sensing => 19.066e-6,
            TaskClass::Decision => 15.731e-6,
            TaskClass::Control => 92.931e-6,
        }
    }

    /// Seconds per execution.
    pub fn duration(self) -> f64 {
        match self {
            TaskClass::Sensing => 12.030e-3,
            TaskClass::Decision => 10.182e-3,
            TaskClass::Control => 60.150e-3,
        }
    }

    pub fn component(self) -> Component {
        match self {
            TaskClass::Sensing => Component::Sensing,
            TaskClass::Decision => Component::Mcu,
            TaskClass::Control => Component::Actuation,
        }
    }

    /// Sensing and decision run from the MCU buffer, control from the actuation buffer.
    pub fn default_buffer(self) -> usize {
        match self {
            TaskClass::Sensing | TaskClass::Decision => 0,
            TaskClass::Control => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TaskId(pub usize);

/// Executions per hour, indexed by profile. Zero disables the task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileRates(pub [f64; 5]);

impl ProfileRates {
    /// Rates in the order SA, LA, LP, CTL, NML.
    pub fn new(sa: f64, la: f64, lp: f64, ctl: f64, nml: f64) -> Self {
        let mut r = [0.0; 5];
        r[Profile::Sa.index()] = sa;
        r[Profile::La.index()] = la;
        r[Profile::Lp.index()] = lp;
        r[Profile::Ctl.index()] = ctl;
        r[Profile::Nml.index()] = nml;
        Self(r)
    }

    pub fn get(&self, profile: Profile) -> f64 {
        self.0[profile.index()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub id: String,
    /// Joules per execution.
    pub energy_cost: f64,
    /// Seconds per execution.
    pub duration: f64,
    pub buffer: usize,
    pub rates: ProfileRates,
    /// Finish-to-start predecessors; the task may start once any of them has produced data.
    pub predecessors: Vec<TaskId>,
    pub component: Component,
}

impl TaskSpec {
    pub fn from_class(id: &str, class: TaskClass, rates: ProfileRates, predecessors: Vec<TaskId>) -> Self {
        Self {
            id: id.to_string(),
            energy_cost: class.energy(),
            duration: class.duration(),
            buffer: class.default_buffer(),
            rates,
            predecessors,
            component: class.component(),
        }
    }

    pub fn is_source(&self) -> bool {
        self.predecessors.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AppError {
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("task {task} is disabled in profile {profile}")]
    Disabled { task: String, profile: Profile },
    #[error("unknown profile {0}")]
    UnknownProfile(String),
    #[error("unknown component {0}")]
    UnknownComponent(String),
    #[error("unknown application {0}")]
    UnknownApp(String),
}

/// A broken invariant found by [`AppSpec::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NoTasks,
    TooManyTasks(usize),
    DuplicateId(String),
    NonPositiveCost(String),
    NonPositiveDuration(String),
    BadRate {
        task: String,
        profile: Profile,
    },
    BufferOutOfRange {
        task: String,
        buffer: usize,
        buffers: usize,
    },
    UnknownPredecessor {
        task: String,
        index: usize,
    },
    Cycle(Vec<String>),
    UnknownSink(String),
    SinkUnreachable {
        source: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoTasks => write!(f, "tasks: at least one task is required"),
            Violation::TooManyTasks(n) => write!(f, "tasks: {n} tasks exceeds the limit of {}", Lineage::CAPACITY),
            Violation::DuplicateId(id) => write!(f, "tasks.id: duplicate task id {id}"),
            Violation::NonPositiveCost(id) => write!(f, "tasks[{id}].energy_cost: must be > 0"),
            Violation::NonPositiveDuration(id) => write!(f, "tasks[{id}].duration: must be > 0"),
            Violation::BadRate { task, profile } => {
                write!(f, "tasks[{task}].rates.{profile}: must be finite and >= 0")
            }
            Violation::BufferOutOfRange { task, buffer, buffers } => {
                write!(f, "tasks[{task}].buffer: index {buffer} is not < {buffers}")
            }
            Violation::UnknownPredecessor { task, index } => {
                write!(f, "tasks[{task}].predecessors: no task with index {index}")
            }
            Violation::Cycle(ids) => write!(f, "tasks.predecessors: dependency cycle through {}", ids.join(", ")),
            Violation::UnknownSink(id) => write!(f, "sink: no task named {id}"),
            Violation::SinkUnreachable { source } => {
                write!(f, "sink: not reachable from source task {source}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppSpec {
    pub name: String,
    pub tasks: Vec<TaskSpec>,
    pub sink: TaskId,
}

impl AppSpec {
    pub fn task(&self, id: TaskId) -> &TaskSpec {
        &self.tasks[id.0]
    }

    pub fn task_id(&self, name: &str) -> Option<TaskId> {
        self.tasks.iter().position(|t| t.id == name).map(TaskId)
    }

    pub fn ids(&self) -> impl Iterator<Item = TaskId> {
        (0..self.tasks.len()).map(TaskId)
    }

    pub fn sources(&self) -> impl Iterator<Item = TaskId> + '_ {
        self.ids().filter(|&t| self.task(t).is_source())
    }

    pub fn rate_for(&self, task: TaskId, profile: Profile) -> Result<f64, AppError> {
        self.tasks
            .get(task.0)
            .map(|t| t.rates.get(profile))
            .ok_or_else(|| AppError::UnknownTask(format!("#{}", task.0)))
    }

    /// Seconds between releases, `3600 / rate`.
    pub fn period_for(&self, task: TaskId, profile: Profile) -> Result<f64, AppError> {
        let rate = self.rate_for(task, profile)?;
        if rate > 0.0 {
            Ok(3600.0 / rate)
        } else {
            Err(AppError::Disabled {
                task: self.task(task).id.clone(),
                profile,
            })
        }
    }

    /// Copy with every task drawing from buffer 0 (single-capacitor bank).
    pub fn with_single_buffer(&self) -> AppSpec {
        let mut spec = self.clone();
        for t in &mut spec.tasks {
            t.buffer = 0;
        }
        spec
    }

    /// Lists every broken invariant; empty means the spec is usable with `buffers` capacitors.
    pub fn validate(&self, buffers: usize) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.tasks.len();
        if n == 0 {
            out.push(Violation::NoTasks);
            return out;
        }
        if n > Lineage::CAPACITY {
            out.push(Violation::TooManyTasks(n));
        }
        for (i, t) in self.tasks.iter().enumerate() {
            if self.tasks[..i].iter().any(|o| o.id == t.id) {
                out.push(Violation::DuplicateId(t.id.clone()));
            }
            if !(t.energy_cost > 0.0 && t.energy_cost.is_finite()) {
                out.push(Violation::NonPositiveCost(t.id.clone()));
            }
            if !(t.duration > 0.0 && t.duration.is_finite()) {
                out.push(Violation::NonPositiveDuration(t.id.clone()));
            }
            for p in Profile::ALL {
                let r = t.rates.get(p);
                if !(r >= 0.0 && r.is_finite()) {
                    out.push(Violation::BadRate {
                        task: t.id.clone(),
                        profile: p,
                    });
                }
            }
            if t.buffer >= buffers {
                out.push(Violation::BufferOutOfRange {
                    task: t.id.clone(),
                    buffer: t.buffer,
                    buffers,
                });
            }
            for p in &t.predecessors {
                if p.0 >= n {
                    out.push(Violation::UnknownPredecessor {
                        task: t.id.clone(),
                        index: p.0,
                    });
                }
            }
        }
        if self.sink.0 >= n {
            out.push(Violation::UnknownSink(format!("#{}", self.sink.0)));
        }
        if out
            .iter()
            .any(|v| matches!(v, Violation::UnknownPredecessor { .. } | Violation::UnknownSink(_)))
        {
            return out;
        }

        // Kahn's algorithm over predecessor -> successor edges
        let mut indegree: Vec<usize> = self.tasks.iter().map(|t| t.predecessors.len()).collect();
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut seen = 0;
        while let Some(i) = queue.pop_front() {
            seen += 1;
            for (j, t) in self.tasks.iter().enumerate() {
                for p in &t.predecessors {
                    if p.0 == i {
                        indegree[j] -= 1;
                        if indegree[j] == 0 {
                            queue.push_back(j);
                        }
                    }
                }
            }
        }
        if seen < n {
            let stuck = (0..n)
                .filter(|&i| indegree[i] > 0)
                .map(|i| self.tasks[i].id.clone())
                .collect();
            out.push(Violation::Cycle(stuck));
            return out;
        }

        for src in self.sources() {
            if !self.reaches(src, self.sink) {
                out.push(Violation::SinkUnreachable {
                    source: self.task(src).id.clone(),
                });
            }
        }
        out
    }

    fn reaches(&self, from: TaskId, to: TaskId) -> bool {
        let mut seen = vec![false; self.tasks.len()];
        let mut stack = vec![from];
        while let Some(cur) = stack.pop() {
            if cur == to {
                return true;
            }
            if core::mem::replace(&mut seen[cur.0], true) {
                continue;
            }
            for (j, t) in self.tasks.iter().enumerate() {
                if t.predecessors.contains(&cur) {
                    stack.push(TaskId(j));
                }
            }
        }
        false
    }
}

/// The three example applications.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinApp {
    Hvac,
    Greenhouse,
    Ventilation,
}

impl FromStr for BuiltinApp {
    type Err = AppError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hvac" => Ok(BuiltinApp::Hvac),
            "greenhouse" => Ok(BuiltinApp::Greenhouse),
            "ventilation" => Ok(BuiltinApp::Ventilation),
            _ => Err(AppError::UnknownApp(s.to_string())),
        }
    }
}

impl BuiltinApp {
    pub fn spec(self) -> AppSpec {
        use TaskClass::*;
        match self {
            BuiltinApp::Hvac => {
                let r = ProfileRates::new(8.0, 4.0, 12.0, 4.0, 30.0);
                AppSpec {
                    name: "hvac".to_string(),
                    tasks: vec![
                        TaskSpec::from_class("TS", Sensing, r, vec![]),
                        TaskSpec::from_class("HS", Sensing, r, vec![]),
                        TaskSpec::from_class("D", Decision, r, vec![TaskId(1), TaskId(0)]),
                        TaskSpec::from_class("AC", Control, r, vec![TaskId(2)]),
                    ],
                    sink: TaskId(3),
                }
            }
            BuiltinApp::Greenhouse => {
                let r = ProfileRates::new(4.0, 2.0, 6.0, 2.0, 12.0);
                AppSpec {
                    name: "greenhouse".to_string(),
                    tasks: vec![
                        TaskSpec::from_class("HS", Sensing, r, vec![]),
                        TaskSpec::from_class("D", Decision, r, vec![TaskId(0)]),
                        TaskSpec::from_class("SC", Control, r, vec![TaskId(1)]),
                    ],
                    sink: TaskId(2),
                }
            }
            BuiltinApp::Ventilation => {
                let r = ProfileRates::new(20.0, 6.0, 15.0, 6.0, 45.0);
                AppSpec {
                    name: "ventilation".to_string(),
                    tasks: vec![
                        TaskSpec::from_class("TS", Sensing, r, vec![]),
                        TaskSpec::from_class("CS", Sensing, r, vec![]),
                        TaskSpec::from_class("D", Decision, r, vec![TaskId(0), TaskId(1)]),
                        TaskSpec::from_class("WC", Control, r, vec![TaskId(2)]),
                    ],
                    sink: TaskId(3),
                }
            }
        }
    }
}

/// Set of source tasks whose data contributed to a token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Lineage(u64);

impl Lineage {
    pub const CAPACITY: usize = 64;

    pub fn of(task: TaskId) -> Self {
        Lineage(1u64 << task.0)
    }

    pub fn union(self, other: Lineage) -> Self {
        Lineage(self.0 | other.0)
    }

    pub fn contains(self, task: TaskId) -> bool {
        task.0 < Self::CAPACITY && self.0 & (1u64 << task.0) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn bits(self) -> u64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Token {
    pub payload: u64,
    pub birth: f64,
    pub lineage: Lineage,
}

/// Bounded FIFO on one dependency edge. Survives power failures; on overflow
/// the oldest token is dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct DataQueue {
    pub from: TaskId,
    pub to: TaskId,
    capacity: usize,
    tokens: VecDeque<Token>,
}

impl DataQueue {
    pub fn new(from: TaskId, to: TaskId, capacity: usize) -> Self {
        Self {
            from,
            to,
            capacity: capacity.max(1),
            tokens: VecDeque::new(),
        }
    }

    /// Appends a token, returning the one dropped on overflow.
    pub fn push(&mut self, token: Token) -> Option<Token> {
        let dropped = if self.tokens.len() >= self.capacity {
            self.tokens.pop_front()
        } else {
            None
        };
        self.tokens.push_back(token);
        dropped
    }

    pub fn pop(&mut self) -> Option<Token> {
        self.tokens.pop_front()
    }

    pub fn peek(&self) -> Option<&Token> {
        self.tokens.front()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }
}

/// Compact summary of all queue contents, used to check that aborted
/// executions leave no trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct QueueFingerprint {
    pub tokens: u64,
    pub payload_sum: u64,
    pub newest: u64,
}

/// What a committed execution produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Commit {
    pub lineage: Lineage,
    pub consumed: usize,
    pub dropped: usize,
}

/// All dependency-edge queues of one application.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueSet {
    queues: Vec<DataQueue>,
    inputs: Vec<Vec<usize>>,
    outputs: Vec<Vec<usize>>,
    sources: Vec<bool>,
    next_payload: u64,
}

impl QueueSet {
    pub fn new(spec: &AppSpec, capacity: usize) -> Self {
        let n = spec.tasks.len();
        let mut queues = Vec::new();
        let mut inputs = vec![Vec::new(); n];
        let mut outputs = vec![Vec::new(); n];
        for (j, t) in spec.tasks.iter().enumerate() {
            for p in &t.predecessors {
                let q = queues.len();
                queues.push(DataQueue::new(*p, TaskId(j), capacity));
                inputs[j].push(q);
                outputs[p.0].push(q);
            }
        }
        Self {
            queues,
            inputs,
            outputs,
            sources: spec.tasks.iter().map(TaskSpec::is_source).collect(),
            next_payload: 1,
        }
    }

    pub fn queues(&self) -> &[DataQueue] {
        &self.queues
    }

    /// True when at least one input queue of `task` holds data.
    pub fn has_input(&self, task: TaskId) -> bool {
        self.inputs[task.0].iter().any(|&q| !self.queues[q].is_empty())
    }

    /// Lineage an execution of `task` would carry if it committed now.
    pub fn pending_lineage(&self, task: TaskId) -> Lineage {
        let mut lineage = if self.sources[task.0] {
            Lineage::of(task)
        } else {
            Lineage::default()
        };
        for &q in &self.inputs[task.0] {
            if let Some(tok) = self.queues[q].peek() {
                lineage = lineage.union(tok.lineage);
            }
        }
        lineage
    }

    /// Consumes the head of every non-empty input queue and publishes one
    /// output token on each outgoing edge.
    pub fn commit(&mut self, task: TaskId, now: f64) -> Commit {
        let mut lineage = if self.sources[task.0] {
            Lineage::of(task)
        } else {
            Lineage::default()
        };
        let mut consumed = 0;
        for &q in &self.inputs[task.0] {
            if let Some(tok) = self.queues[q].pop() {
                lineage = lineage.union(tok.lineage);
                consumed += 1;
            }
        }
        let mut dropped = 0;
        let payload = self.next_payload;
        self.next_payload += 1;
        for &q in &self.outputs[task.0] {
            let token = Token {
                payload,
                birth: now,
                lineage,
            };
            if self.queues[q].push(token).is_some() {
                dropped += 1;
            }
        }
        Commit {
            lineage,
            consumed,
            dropped,
        }
    }

    pub fn fingerprint(&self) -> QueueFingerprint {
        let mut fp = QueueFingerprint::default();
        for q in &self.queues {
            for t in &q.tokens {
                fp.tokens += 1;
                fp.payload_sum = fp.payload_sum.wrapping_add(t.payload);
                fp.newest = fp.newest.max(t.payload);
            }
        }
        fp
    }
}
