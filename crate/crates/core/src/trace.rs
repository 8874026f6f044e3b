//! Harvester voltage traces.
//!
//! A trace records the harvester output voltage across a known load resistor.
//! Instantaneous power is `V(t)^2 / R_load`, with a zero-order hold between
//! samples.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error("trace has no samples")]
    Empty,
    #[error("sample {index}: time {time} does not strictly increase")]
    NonMonotonic { index: usize, time: f64 },
    #[error("sample {index}: negative voltage {voltage}")]
    NegativeVoltage { index: usize, voltage: f64 },
    #[error("sample {index}: non-finite value")]
    NonFinite { index: usize },
    #[error("load resistance must be > 0 (got {0})")]
    BadResistance(f64),
    #[error("time {t} outside trace span [{start}, {end}]")]
    OutOfSpan { t: f64, start: f64, end: f64 },
    #[error("attack window [{start}, {end}) does not intersect trace span")]
    AttackOutsideSpan { start: f64, end: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

/// Harvester voltage samples plus the measurement resistor.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTrace {
    name: String,
    times: Vec<f64>,
    volts: Vec<f64>,
    load_resistance: f64,
}

impl EnergyTrace {
    pub fn new(name: impl Into<String>, samples: Vec<(f64, f64)>, load_resistance: f64) -> Result<Self, TraceError> {
        if !(load_resistance > 0.0 && load_resistance.is_finite()) {
            return Err(TraceError::BadResistance(load_resistance));
        }
        if samples.is_empty() {
            return Err(TraceError::Empty);
        }
        let mut times = Vec::with_capacity(samples.len());
        let mut volts = Vec::with_capacity(samples.len());
        for (index, &(time, voltage)) in samples.iter().enumerate() {
            if !time.is_finite() || !voltage.is_finite() {
                return Err(TraceError::NonFinite { index });
            }
            if let Some(&prev) = times.last() {
                if time <= prev {
                    return Err(TraceError::NonMonotonic { index, time });
                }
            }
            if voltage < 0.0 {
                return Err(TraceError::NegativeVoltage { index, voltage });
            }
            times.push(time);
            volts.push(voltage);
        }
        Ok(Self {
            name: name.into(),
            times,
            volts,
            load_resistance,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn load_resistance(&self) -> f64 {
        self.load_resistance
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.volts.iter().copied())
    }

    fn check_span(&self, t: f64) -> Result<(), TraceError> {
        if t < self.start() || t > self.end() || !t.is_finite() {
            return Err(TraceError::OutOfSpan {
                t,
                start: self.start(),
                end: self.end(),
            });
        }
        Ok(())
    }

    /// Voltage at `t` under zero-order hold (the latest sample at or before `t`).
    pub fn voltage_at(&self, t: f64) -> Result<f64, TraceError> {
        self.check_span(t)?;
        let idx = self.times.partition_point(|&s| s <= t) - 1;
        Ok(self.volts[idx])
    }

    /// `P(t) = V(t)^2 / R_load`.
    pub fn power_at(&self, t: f64) -> Result<f64, TraceError> {
        let v = self.voltage_at(t)?;
        Ok(v * v / self.load_resistance)
    }

    /// A forward-only reader for monotone time queries (the simulation loop).
    pub fn cursor(&self) -> TraceCursor<'_> {
        TraceCursor { trace: self, idx: 0 }
    }

    /// Returns a copy with the voltage forced to zero on `[start, end)`.
    ///
    /// Breakpoints are inserted at the window edges so the hold rule yields
    /// zero for every instant inside the window, not only at sample times.
    pub fn inject_attack(&self, scenario: &AttackScenario) -> Result<EnergyTrace, TraceError> {
        let (a, b) = (scenario.start, scenario.end());
        if a > self.end() || b <= self.start() {
            return Err(TraceError::AttackOutsideSpan { start: a, end: b });
        }
        let mut samples: Vec<(f64, f64)> = Vec::with_capacity(self.len() + 2);
        let hold_at_end = if b < self.end() {
            Some(self.voltage_at(b)?)
        } else {
            None
        };
        let mut pushed_start = a <= self.start();
        let mut pushed_end = hold_at_end.is_none();
        for (t, v) in self.samples() {
            if !pushed_start && t >= a {
                if t > a {
                    samples.push((a, 0.0));
                }
                pushed_start = true;
            }
            if !pushed_end && t >= b {
                if t > b {
                    samples.push((b, hold_at_end.unwrap_or(0.0)));
                }
                pushed_end = true;
            }
            let inside = t >= a && t < b;
            samples.push((t, if inside { 0.0 } else { v }));
        }
        EnergyTrace::new(self.name.clone(), samples, self.load_resistance)
    }

    pub fn synthesize(shape: TraceShape, length: f64, interval: f64) -> Result<Self, TraceError> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(TraceError::InvalidParameter("length must be > 0"));
        }
        if !(interval > 0.0) || !interval.is_finite() {
            return Err(TraceError::InvalidParameter("interval must be > 0"));
        }
        let amplitude = shape.amplitude();
        if !(amplitude >= 0.0) || !amplitude.is_finite() {
            return Err(TraceError::InvalidParameter("amplitude must be >= 0"));
        }
        if let TraceShape::Sinusoid { period, .. } = shape {
            if !(period > 0.0) || !period.is_finite() {
                return Err(TraceError::InvalidParameter("period must be > 0"));
            }
        }
        let steps = libm::ceil(length / interval - 1e-12) as usize;
        let mut samples = Vec::with_capacity(steps + 1);
        for k in 0..=steps {
            let t = if k == steps { length } else { k as f64 * interval };
            samples.push((t, shape.voltage(t, length)));
        }
        // a final step can coincide with the previous sample after rounding
        samples.dedup_by(|b, a| b.0 <= a.0);
        EnergyTrace::new(shape.label(), samples, DEFAULT_LOAD_RESISTANCE)
    }

    pub fn with_load_resistance(mut self, ohms: f64) -> Result<Self, TraceError> {
        if !(ohms > 0.0 && ohms.is_finite()) {
            return Err(TraceError::BadResistance(ohms));
        }
        self.load_resistance = ohms;
        Ok(self)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

/// The measurement resistor used for the recorded solar traces.
pub const DEFAULT_LOAD_RESISTANCE: f64 = 30_000.0;

pub struct TraceCursor<'a> {
    trace: &'a EnergyTrace,
    idx: usize,
}

impl TraceCursor<'_> {
    /// Power at `t`; `t` must not decrease between calls.
    pub fn power_at(&mut self, t: f64) -> Result<f64, TraceError> {
        self.trace.power_seek(&mut self.idx, t)
    }
}

impl EnergyTrace {
    /// [`EnergyTrace::power_at`] resuming the sample search from `hint`,
    /// which is updated. Cheap when `t` grows monotonically.
    pub fn power_seek(&self, hint: &mut usize, t: f64) -> Result<f64, TraceError> {
        self.check_span(t)?;
        let times = &self.times;
        if *hint >= times.len() || times[*hint] > t {
            *hint = times.partition_point(|&s| s <= t) - 1;
        }
        while *hint + 1 < times.len() && times[*hint + 1] <= t {
            *hint += 1;
        }
        let v = self.volts[*hint];
        Ok(v * v / self.load_resistance)
    }
}

/// Deterministic synthetic trace shapes used as stand-ins for recordings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TraceShape {
    Constant {
        amplitude: f64,
    },
    /// Rectified sine `A·|sin(2πt/period)|`.
    Sinusoid {
        amplitude: f64,
        period: f64,
    },
    /// Zero for the first half of the trace, `A` from `length/2` on.
    Step {
        amplitude: f64,
    },
}

impl TraceShape {
    fn amplitude(&self) -> f64 {
        match *self {
            TraceShape::Constant { amplitude }
            | TraceShape::Sinusoid { amplitude, .. }
            | TraceShape::Step { amplitude } => amplitude,
        }
    }

    fn voltage(&self, t: f64, length: f64) -> f64 {
        match *self {
            TraceShape::Constant { amplitude } => amplitude,
            TraceShape::Sinusoid { amplitude, period } => amplitude * libm::fabs(libm::sin(2.0 * PI * t / period)),
            TraceShape::Step { amplitude } => {
                if t >= length / 2.0 {
                    amplitude
                } else {
                    0.0
                }
            }
        }
    }

    fn label(&self) -> &'static str {
        match self {
            TraceShape::Constant { .. } => "constant",
            TraceShape::Sinusoid { .. } => "sinusoid",
            TraceShape::Step { .. } => "step",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    Short,
    Long,
}

/// A window during which the adversary zeroes the harvester input.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackScenario {
    pub id: String,
    pub start: f64,
    pub duration: f64,
    pub kind: AttackKind,
}

impl AttackScenario {
    pub fn new(id: impl Into<String>, start: f64, duration: f64, kind: AttackKind) -> Result<Self, TraceError> {
        if !(start >= 0.0) || !start.is_finite() {
            return Err(TraceError::InvalidParameter("attack start must be >= 0"));
        }
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(TraceError::InvalidParameter("attack duration must be > 0"));
        }
        Ok(Self {
            id: id.into(),
            start,
            duration,
            kind,
        })
    }

    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end()
    }
}

/// Rejects scenario lists whose windows overlap.
pub fn check_non_overlapping(scenarios: &[AttackScenario]) -> Result<(), TraceError> {
    let mut sorted: Vec<&AttackScenario> = scenarios.iter().collect();
    sorted.sort_by(|a, b| a.start.total_cmp(&b.start));
    for pair in sorted.windows(2) {
        if pair[1].start < pair[0].end() {
            return Err(TraceError::InvalidParameter("attack windows overlap"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn constant(len: f64) -> EnergyTrace {
        EnergyTrace::synthesize(TraceShape::Constant { amplitude: 1.0 }, len, 1.0).unwrap()
    }

    #[test]
    fn new_rejects_bad_input() {
        assert!(matches!(
            EnergyTrace::new("x", vec![(1.0, 1.0), (0.0, 1.2)], 30e3),
            Err(TraceError::NonMonotonic { index: 1, .. })
        ));
        assert!(matches!(
            EnergyTrace::new("x", vec![(0.0, -0.5)], 30e3),
            Err(TraceError::NegativeVoltage { index: 0, .. })
        ));
        assert!(matches!(
            EnergyTrace::new("x", vec![(0.0, 1.0)], 0.0),
            Err(TraceError::BadResistance(_))
        ));
        assert_eq!(EnergyTrace::new("x", vec![], 1.0), Err(TraceError::Empty));
    }

    #[test]
    fn synthesize_constant_sinusoid_step() {
        let c = constant(10.0);
        assert_eq!(c.len(), 11);
        assert!(c.samples().all(|(_, v)| v == 1.0));

        let s = EnergyTrace::synthesize(
            TraceShape::Sinusoid {
                amplitude: 1.0,
                period: 10.0,
            },
            10.0,
            0.5,
        )
        .unwrap();
        assert!((s.voltage_at(2.5).unwrap() - 1.0).abs() < 1e-12);
        assert!(s.samples().all(|(_, v)| v >= 0.0));

        let st = EnergyTrace::synthesize(TraceShape::Step { amplitude: 2.0 }, 4.0, 1.0).unwrap();
        let v: Vec<f64> = st.samples().map(|(_, v)| v).collect();
        assert_eq!(v, vec![0.0, 0.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn synthesize_caps_last_sample_at_length() {
        let t = EnergyTrace::synthesize(TraceShape::Constant { amplitude: 1.0 }, 10.0, 3.0).unwrap();
        assert_eq!(t.len(), 5);
        assert_eq!(t.end(), 10.0);
    }

    #[test]
    fn synthesize_rejects_non_positive_length_or_interval() {
        let shape = TraceShape::Constant { amplitude: 1.0 };
        assert!(EnergyTrace::synthesize(shape, 0.0, 1.0).is_err());
        assert!(EnergyTrace::synthesize(shape, 10.0, 0.0).is_err());
        assert!(EnergyTrace::synthesize(shape, -1.0, 1.0).is_err());
        assert!(EnergyTrace::synthesize(TraceShape::Constant { amplitude: -1.0 }, 1.0, 1.0).is_err());
    }

    #[test]
    fn inject_zeroes_window_only() {
        let t = constant(10.0);
        let s = AttackScenario::new("a", 3.0, 2.0, AttackKind::Short).unwrap();
        let z = t.inject_attack(&s).unwrap();
        assert_eq!(z.voltage_at(3.0).unwrap(), 0.0);
        assert_eq!(z.voltage_at(4.0).unwrap(), 0.0);
        assert_eq!(z.voltage_at(2.0).unwrap(), 1.0);
        assert_eq!(z.voltage_at(5.0).unwrap(), 1.0);
        // original untouched
        assert_eq!(t.voltage_at(3.0).unwrap(), 1.0);
    }

    #[test]
    fn inject_between_samples_inserts_breakpoints() {
        let t = constant(10.0);
        let s = AttackScenario::new("a", 2.5, 1.0, AttackKind::Short).unwrap();
        let z = t.inject_attack(&s).unwrap();
        assert_eq!(z.power_at(2.5).unwrap(), 0.0);
        assert_eq!(z.power_at(2.9).unwrap(), 0.0);
        assert_eq!(z.power_at(3.4).unwrap(), 0.0);
        assert_eq!(z.voltage_at(3.5).unwrap(), 1.0);
        assert_eq!(z.voltage_at(2.4).unwrap(), 1.0);
    }

    #[test]
    fn inject_whole_trace_and_outside() {
        let t = constant(10.0);
        let all = AttackScenario::new("a", 0.0, 100.0, AttackKind::Long).unwrap();
        assert!(t.inject_attack(&all).unwrap().samples().all(|(_, v)| v == 0.0));
        let out = AttackScenario::new("b", 20.0, 5.0, AttackKind::Short).unwrap();
        assert!(matches!(
            t.inject_attack(&out),
            Err(TraceError::AttackOutsideSpan { .. })
        ));
    }

    #[test]
    fn power_conversion_and_hold() {
        let t = EnergyTrace::new("x", vec![(0.0, 1.0), (1.0, 2.0)], 30e3).unwrap();
        let p = t.power_at(0.0).unwrap();
        assert!((p - 3.333_333_333_333_333_5e-5).abs() < 1e-18);
        assert_eq!(t.power_at(0.5).unwrap(), p);
        assert!(matches!(t.power_at(1.5), Err(TraceError::OutOfSpan { .. })));
        let z = EnergyTrace::new("z", vec![(0.0, 0.0)], 30e3).unwrap();
        assert_eq!(z.power_at(0.0).unwrap(), 0.0);
    }

    #[test]
    fn cursor_matches_random_access() {
        let t = EnergyTrace::synthesize(
            TraceShape::Sinusoid {
                amplitude: 2.0,
                period: 7.0,
            },
            30.0,
            0.3,
        )
        .unwrap();
        let mut c = t.cursor();
        let mut x = 0.0;
        while x <= 30.0 {
            assert_eq!(c.power_at(x).unwrap(), t.power_at(x).unwrap());
            x += 0.07;
        }
    }

    #[test]
    fn scenario_validation_and_overlap() {
        assert!(AttackScenario::new("a", -1.0, 1.0, AttackKind::Short).is_err());
        assert!(AttackScenario::new("a", 1.0, 0.0, AttackKind::Short).is_err());
        let a = AttackScenario::new("a", 0.0, 10.0, AttackKind::Short).unwrap();
        let b = AttackScenario::new("b", 5.0, 10.0, AttackKind::Short).unwrap();
        let c = AttackScenario::new("c", 10.0, 10.0, AttackKind::Short).unwrap();
        assert!(check_non_overlapping(&[a.clone(), b]).is_err());
        assert!(check_non_overlapping(&[c, a]).is_ok());
    }
}
