//! Run-config files (TOML).
//!
//! Every physical quantity carries its unit in the key name. Unknown keys
//! are rejected. `--set key=value` overrides are applied to the parsed
//! document before it is converted, so they go through the same checks.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;
use toml::{Table, Value};

use eam_core::app::{AppSpec, BuiltinApp, Component, ProfileRates, TaskClass, TaskId, TaskSpec};
use eam_core::energy::ComponentMap;
use eam_core::policy::{Allocation, Dispatch, EamVariant, PolicyKind, PolicyParams};
use eam_core::trace::{AttackKind, AttackScenario, EnergyTrace, TraceShape};
use eam_core::{BankParams, DetectorConfig, SimConfig};

use crate::trace_file;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    #[serde(default)]
    pub trace: TraceSection,
    #[serde(default)]
    pub attacks: Vec<AttackSection>,
    #[serde(default)]
    pub app: AppSection,
    #[serde(default)]
    pub policy: PolicySection,
    #[serde(default)]
    pub params: ParamsSection,
    #[serde(default)]
    pub bank: BankSection,
    #[serde(default)]
    pub detector: DetectorSection,
    #[serde(default)]
    pub sim: SimSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSection {
    /// `constant`, `sinusoid`, `step` or `file`.
    #[serde(default = "default_trace_kind")]
    pub kind: String,
    pub path: Option<PathBuf>,
    #[serde(default = "default_amplitude")]
    pub amplitude_v: f64,
    #[serde(default = "default_period")]
    pub period_s: f64,
    #[serde(default = "default_length")]
    pub length_s: f64,
    #[serde(default = "default_interval")]
    pub interval_s: f64,
    pub load_resistance_ohm: Option<f64>,
}

fn default_trace_kind() -> String {
    "constant".into()
}
fn default_amplitude() -> f64 {
    1.0
}
fn default_period() -> f64 {
    600.0
}
fn default_length() -> f64 {
    3600.0
}
fn default_interval() -> f64 {
    1.0
}

impl Default for TraceSection {
    fn default() -> Self {
        Self {
            kind: default_trace_kind(),
            path: None,
            amplitude_v: default_amplitude(),
            period_s: default_period(),
            length_s: default_length(),
            interval_s: default_interval(),
            load_resistance_ohm: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    pub id: Option<String>,
    pub start_s: f64,
    pub duration_s: f64,
    /// `short` or `long`; inferred from `params.alpha_s` when absent.
    pub kind: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppSection {
    pub builtin: Option<String>,
    pub name: Option<String>,
    pub sink: Option<String>,
    #[serde(default)]
    pub tasks: Vec<TaskSection>,
    #[serde(default = "default_queue_capacity")]
    pub queue_capacity: usize,
}

fn default_queue_capacity() -> usize {
    4
}

impl Default for AppSection {
    fn default() -> Self {
        Self {
            builtin: Some("hvac".into()),
            name: None,
            sink: None,
            tasks: Vec::new(),
            queue_capacity: default_queue_capacity(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSection {
    pub id: String,
    /// `sensing`, `decision` or `control`: fills cost, duration, buffer and component.
    pub class: Option<String>,
    pub energy_uj: Option<f64>,
    pub duration_ms: Option<f64>,
    pub buffer: Option<usize>,
    pub component: Option<String>,
    #[serde(default)]
    pub predecessors: Vec<String>,
    pub rates_per_h: RatesSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSection {
    #[serde(default)]
    pub sa: f64,
    #[serde(default)]
    pub la: f64,
    #[serde(default)]
    pub nml: f64,
    #[serde(default)]
    pub lp: f64,
    #[serde(default)]
    pub ctl: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    #[serde(default = "default_policy")]
    pub kind: String,
    /// `index` or `edf`.
    #[serde(default = "default_dispatch")]
    pub dispatch: String,
    #[serde(default = "yes")]
    pub adaptive_profiles: bool,
    #[serde(default = "yes")]
    pub attack_aware: bool,
    /// `demand` or `capacitance`.
    #[serde(default = "default_allocation")]
    pub allocation: String,
}

fn default_policy() -> String {
    "eam".into()
}
fn default_dispatch() -> String {
    "index".into()
}
fn default_allocation() -> String {
    "demand".into()
}
fn yes() -> bool {
    true
}

impl Default for PolicySection {
    fn default() -> Self {
        Self {
            kind: default_policy(),
            dispatch: default_dispatch(),
            adaptive_profiles: true,
            attack_aware: true,
            allocation: default_allocation(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub alpha_s: Option<f64>,
    pub omega0_uj: Option<f64>,
    pub omega1_uj: Option<f64>,
    pub lambda_hi: Option<f64>,
    pub lambda_lo: Option<f64>,
    pub decision_cost_nj: Option<f64>,
    pub decision_time_us: Option<f64>,
    pub accuracy_gate: Option<bool>,
    pub accuracy_threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankSection {
    pub capacitances_uf: Option<Vec<f64>>,
    pub parallel_resistance_ohm: Option<f64>,
    pub efficiency: Option<f64>,
    pub sigma_per_s: Option<f64>,
    pub v_on_v: Option<f64>,
    pub v_off_v: Option<f64>,
    pub v_max_v: Option<f64>,
    pub initial_energy_uj: Option<Vec<f64>>,
    pub mcu_buffer: Option<usize>,
    pub sensing_buffer: Option<usize>,
    pub actuation_buffer: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub detection_delay_s: Option<f64>,
    pub remaining_time_error: Option<f64>,
    pub reported_accuracy: Option<f64>,
    /// Defaults to `sim.seed`.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt_s: Option<f64>,
    pub start_s: Option<f64>,
    pub horizon_s: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    pub timeline_interval_s: Option<f64>,
}

/// A parsed run configuration plus the directory relative paths resolve against.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub file: RunConfigFile,
    pub base_dir: PathBuf,
}

impl RunConfig {
    /// Reads `path` and applies `key=value` overrides.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, overrides, base_dir).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(text: &str, overrides: &[String], base_dir: PathBuf) -> Result<Self> {
        let mut table: Table = text.parse().context("malformed TOML")?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let file = RunConfigFile::deserialize(Value::Table(table)).map_err(|e| anyhow!("{}", e.message()))?;
        Ok(Self { file, base_dir })
    }

    pub fn seed(&self) -> u64 {
        self.file.sim.seed
    }

    pub fn policy(&self) -> Result<PolicyKind> {
        self.file.policy.kind.parse().map_err(|_| {
            anyhow!(
                "policy.kind: expected eam, fh or central, got {:?}",
                self.file.policy.kind
            )
        })
    }

    pub fn trace(&self) -> Result<EnergyTrace> {
        let t = &self.file.trace;
        let trace = match t.kind.as_str() {
            "file" => {
                let path = t
                    .path
                    .as_ref()
                    .ok_or_else(|| anyhow!("trace.path: required when trace.kind = \"file\""))?;
                let path = self.base_dir.join(path);
                trace_file::read_trace(&path)?
            }
            "constant" => EnergyTrace::synthesize(
                TraceShape::Constant {
                    amplitude: t.amplitude_v,
                },
                t.length_s,
                t.interval_s,
            )
            .context("trace")?,
            "sinusoid" => EnergyTrace::synthesize(
                TraceShape::Sinusoid {
                    amplitude: t.amplitude_v,
                    period: t.period_s,
                },
                t.length_s,
                t.interval_s,
            )
            .context("trace")?,
            "step" => EnergyTrace::synthesize(
                TraceShape::Step {
                    amplitude: t.amplitude_v,
                },
                t.length_s,
                t.interval_s,
            )
            .context("trace")?,
            other => bail!("trace.kind: expected constant, sinusoid, step or file, got {other:?}"),
        };
        match t.load_resistance_ohm {
            Some(r) => trace.with_load_resistance(r).context("trace.load_resistance_ohm"),
            None => Ok(trace),
        }
    }

    pub fn app(&self) -> Result<AppSpec> {
        let a = &self.file.app;
        match (&a.builtin, a.tasks.is_empty()) {
            (Some(_), false) => bail!("app: set either builtin or tasks, not both"),
            (Some(name), true) => name
                .parse::<BuiltinApp>()
                .map(BuiltinApp::spec)
                .map_err(|_| anyhow!("app.builtin: expected hvac, greenhouse or ventilation, got {name:?}")),
            (None, true) => bail!("app: set builtin or list tasks"),
            (None, false) => custom_app(a),
        }
    }

    pub fn bank(&self) -> Result<BankParams> {
        let b = &self.file.bank;
        let d = BankParams::default();
        let mut components = ComponentMap::default();
        let capacitances: Vec<f64> = b
            .capacitances_uf
            .as_ref()
            .map_or(d.capacitances.clone(), |c| c.iter().map(|x| x / 1e6).collect());
        if capacitances.len() == 1 {
            components = ComponentMap::single();
        }
        components.mcu = b.mcu_buffer.unwrap_or(components.mcu);
        components.sensing = b.sensing_buffer.unwrap_or(components.sensing);
        components.actuation = b.actuation_buffer.unwrap_or(components.actuation);
        Ok(BankParams {
            capacitances,
            parallel_resistance: b.parallel_resistance_ohm.unwrap_or(d.parallel_resistance),
            efficiency: b.efficiency.unwrap_or(d.efficiency),
            sigma_per_s: b.sigma_per_s.unwrap_or(d.sigma_per_s),
            v_on: b.v_on_v.unwrap_or(d.v_on),
            v_off: b.v_off_v.unwrap_or(d.v_off),
            v_max: b.v_max_v.unwrap_or(d.v_max),
            initial_energy: b
                .initial_energy_uj
                .as_ref()
                .map(|e| e.iter().map(|x| x / 1e6).collect()),
            components,
        })
    }

    pub fn params(&self, bank: &BankParams) -> PolicyParams {
        let p = &self.file.params;
        let d = PolicyParams::defaults_for(bank.capacity_energy());
        PolicyParams {
            alpha: p.alpha_s.unwrap_or(d.alpha),
            omega0: p.omega0_uj.map_or(d.omega0, |x| x / 1e6),
            omega1: p.omega1_uj.map_or(d.omega1, |x| x / 1e6),
            lambda_hi: p.lambda_hi.unwrap_or(d.lambda_hi),
            lambda_lo: p.lambda_lo.unwrap_or(d.lambda_lo),
            decision_cost: p.decision_cost_nj.map_or(d.decision_cost, |x| x / 1e9),
            decision_time: p.decision_time_us.map_or(d.decision_time, |x| x / 1e6),
            accuracy_gate: p.accuracy_gate.unwrap_or(d.accuracy_gate),
            accuracy_threshold: p.accuracy_threshold.unwrap_or(d.accuracy_threshold),
        }
    }

    pub fn attacks(&self, alpha: f64) -> Result<Vec<AttackScenario>> {
        self.file
            .attacks
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let kind = match a.kind.as_deref() {
                    Some("short") => AttackKind::Short,
                    Some("long") => AttackKind::Long,
                    Some(other) => bail!("attacks[{i}].kind: expected short or long, got {other:?}"),
                    None if a.duration_s > alpha => AttackKind::Long,
                    None => AttackKind::Short,
                };
                let id = a.id.clone().unwrap_or_else(|| format!("attack{i}"));
                AttackScenario::new(id, a.start_s, a.duration_s, kind).with_context(|| format!("attacks[{i}]"))
            })
            .collect()
    }

    /// Builds the simulation configuration.
    pub fn to_sim_config(&self) -> Result<SimConfig> {
        let trace = self.trace()?;
        let app = self.app()?;
        let policy = self.policy()?;
        let bank = self.bank()?;
        let params = self.params(&bank);
        let attacks = self.attacks(params.alpha)?;
        let p = &self.file.policy;
        let dispatch = match p.dispatch.as_str() {
            "index" => Dispatch::IndexOrder,
            "edf" => Dispatch::EarliestDeadline,
            other => bail!("policy.dispatch: expected index or edf, got {other:?}"),
        };
        let allocation = match p.allocation.as_str() {
            "demand" => Allocation::Demand,
            "capacitance" => Allocation::CapacitanceProportional,
            other => bail!("policy.allocation: expected demand or capacitance, got {other:?}"),
        };
        let det = &self.file.detector;
        let dd = DetectorConfig::default();
        let detector = DetectorConfig {
            detection_delay: det.detection_delay_s.unwrap_or(dd.detection_delay),
            remaining_time_error: det.remaining_time_error.unwrap_or(dd.remaining_time_error),
            reported_accuracy: det.reported_accuracy.unwrap_or(dd.reported_accuracy),
            rng_seed: det.seed.unwrap_or(self.file.sim.seed),
        };
        let s = &self.file.sim;
        let mut cfg = SimConfig::new(trace, app, policy);
        cfg.attacks = attacks;
        cfg.queue_capacity = self.file.app.queue_capacity;
        cfg.variant = EamVariant {
            adaptive_profiles: p.adaptive_profiles,
            attack_aware: p.attack_aware,
            allocation,
        };
        cfg.params = params;
        cfg.bank = bank;
        cfg.detector = detector;
        cfg.dispatch = dispatch;
        cfg.dt = s.dt_s.unwrap_or(cfg.dt);
        cfg.start = s.start_s.unwrap_or(cfg.start);
        cfg.horizon = s.horizon_s.unwrap_or(cfg.horizon);
        cfg.timeline_interval = s.timeline_interval_s.unwrap_or(cfg.timeline_interval);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn custom_app(a: &AppSection) -> Result<AppSpec> {
    let index = |name: &str, field: &str| -> Result<TaskId> {
        a.tasks
            .iter()
            .position(|t| t.id == name)
            .map(TaskId)
            .ok_or_else(|| anyhow!("{field}: no task named {name:?}"))
    };
    let mut tasks = Vec::with_capacity(a.tasks.len());
    for (i, t) in a.tasks.iter().enumerate() {
        let field = format!("app.tasks[{i}]");
        let class = match t.class.as_deref() {
            None => None,
            Some("sensing") => Some(TaskClass::Sensing),
            Some("decision") => Some(TaskClass::Decision),
            Some("control") => Some(TaskClass::Control),
            Some(other) => bail!("{field}.class: expected sensing, decision or control, got {other:?}"),
        };
        let need = |v: Option<f64>, key: &str, from_class: fn(TaskClass) -> f64| -> Result<f64> {
            v.or(class.map(from_class))
                .ok_or_else(|| anyhow!("{field}.{key}: required without a class"))
        };
        let energy = t.energy_uj.map(|e| e / 1e6);
        let duration = t.duration_ms.map(|d| d / 1e3);
        let component = match t.component.as_deref() {
            Some(c) => c.parse::<Component>().map_err(|e| anyhow!("{field}.component: {e}"))?,
            None => class
                .map(TaskClass::component)
                .ok_or_else(|| anyhow!("{field}.component: required without a class"))?,
        };
        let predecessors = t
            .predecessors
            .iter()
            .map(|p| index(p, &format!("{field}.predecessors")))
            .collect::<Result<Vec<_>>>()?;
        let r = &t.rates_per_h;
        tasks.push(TaskSpec {
            id: t.id.clone(),
            energy_cost: need(energy, "energy_uj", TaskClass::energy)?,
            duration: need(duration, "duration_ms", TaskClass::duration)?,
            buffer: t.buffer.or(class.map(TaskClass::default_buffer)).unwrap_or(0),
            rates: ProfileRates::new(r.sa, r.la, r.lp, r.ctl, r.nml),
            predecessors,
            component,
        });
    }
    let sink = match &a.sink {
        Some(s) => index(s, "app.sink")?,
        None => TaskId(tasks.len().saturating_sub(1)),
    };
    Ok(AppSpec {
        name: a.name.clone().unwrap_or_else(|| "custom".into()),
        tasks,
        sink,
    })
}

/// Applies one `key=value` override. Keys are dotted paths; numeric
/// segments index arrays. The bare keys `policy` and `app` stand for
/// `policy.kind` and `app.builtin`.
pub fn apply_override(table: &mut Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("override {spec:?}: expected key=value"))?;
    let key = match key.trim() {
        "policy" => "policy.kind",
        "app" => "app.builtin",
        k => k,
    };
    let value = parse_value(raw.trim());
    let segments: Vec<&str> = key.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        bail!("override {spec:?}: empty key segment");
    }
    let mut cursor: &mut Value = &mut Value::Table(std::mem::take(table));
    let result = set_path(&mut cursor, &segments, value, spec);
    if let Value::Table(t) = std::mem::replace(cursor, Value::Boolean(false)) {
        *table = t;
    }
    result
}

fn set_path(root: &mut &mut Value, segments: &[&str], value: Value, spec: &str) -> Result<()> {
    let mut node: &mut Value = root;
    for (depth, seg) in segments.iter().enumerate() {
        let last = depth + 1 == segments.len();
        node = match node {
            Value::Table(t) => {
                if last {
                    t.insert((*seg).to_string(), value);
                    return Ok(());
                }
                t.entry((*seg).to_string())
                    .or_insert_with(|| Value::Table(Table::new()))
            }
            Value::Array(a) => {
                let i: usize = seg
                    .parse()
                    .map_err(|_| anyhow!("override {spec:?}: {seg:?} is not an array index"))?;
                let len = a.len();
                let slot = a
                    .get_mut(i)
                    .ok_or_else(|| anyhow!("override {spec:?}: index {i} out of range (len {len})"))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => bail!("override {spec:?}: {seg:?} is below a scalar"),
        };
    }
    Ok(())
}

/// Parses a TOML value; anything that is not valid TOML becomes a string.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}
