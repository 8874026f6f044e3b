//! Capacitor physics for the federated energy buffers.
//!
//! Two views of the same buffer are kept consistent through `E = ½·C·V²`:
//!
//! - the RC charging law of a capacitor `C` in parallel with the equivalent
//!   load `R_p`, fed by a source of power `P`:
//!
//!   ```text
//!   V(t) = sqrt( P·R_p − exp(−2t / (C·R_p)) · (P·R_p − V0²) )
//!   ```
//!
//! - the per-slot buffer update used by the simulation loop:
//!
//!   ```text
//!   E(n+1) = (1 − σ)·E(n) + η·P(n)·t
//!   ```
//!
//!   where `σ` is the fraction drained per slot and `η` the charging efficiency.

use alloc::vec::Vec;

use thiserror::Error;

use crate::app::Component;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnergyError {
    #[error("{0} must be non-negative")]
    Negative(&'static str),
    #[error("invalid capacitor: {0}")]
    InvalidCapacitor(&'static str),
    #[error("invalid bank: {0}")]
    InvalidBank(&'static str),
}

pub fn energy_of(capacitance: f64, voltage: f64) -> f64 {
    0.5 * capacitance * voltage * voltage
}

pub fn voltage_of(energy: f64, capacitance: f64) -> f64 {
    libm::sqrt(2.0 * energy.max(0.0) / capacitance)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Withdrawal {
    Ok,
    Insufficient,
}

/// Energy flows of one [`Capacitor::step_accounted`] call, in joules.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BufferStep {
    pub energy: f64,
    pub harvested: f64,
    pub drained: f64,
    pub spill: f64,
}

/// One energy buffer.
///
/// Stored energy is the primary state; voltage is derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct Capacitor {
    /// Farads.
    pub capacitance: f64,
    /// Equivalent parallel load, ohms.
    pub parallel_resistance: f64,
    /// Charging efficiency in (0, 1].
    pub efficiency: f64,
    /// Fraction of stored energy drained per slot, in [0, 1).
    pub drain_fraction: f64,
    pub v_on: f64,
    pub v_off: f64,
    pub v_max: f64,
    energy: f64,
    powered: bool,
}

impl Capacitor {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        capacitance: f64,
        parallel_resistance: f64,
        efficiency: f64,
        drain_fraction: f64,
        v_on: f64,
        v_off: f64,
        v_max: f64,
        voltage: f64,
    ) -> Result<Self, EnergyError> {
        let mut cap = Self {
            capacitance,
            parallel_resistance,
            efficiency,
            drain_fraction,
            v_on,
            v_off,
            v_max,
            energy: 0.0,
            powered: false,
        };
        cap.validate()?;
        if !(voltage >= 0.0 && voltage <= v_max) {
            return Err(EnergyError::InvalidCapacitor("voltage must be within [0, v_max]"));
        }
        cap.energy = energy_of(capacitance, voltage);
        cap.powered = voltage >= v_on;
        Ok(cap)
    }

    pub fn validate(&self) -> Result<(), EnergyError> {
        let finite = [
            self.capacitance,
            self.parallel_resistance,
            self.efficiency,
            self.drain_fraction,
            self.v_on,
            self.v_off,
            self.v_max,
        ]
        .iter()
        .all(|x| x.is_finite());
        if !finite {
            return Err(EnergyError::InvalidCapacitor("non-finite parameter"));
        }
        if self.capacitance <= 0.0 {
            return Err(EnergyError::InvalidCapacitor("capacitance must be > 0"));
        }
        if self.parallel_resistance <= 0.0 {
            return Err(EnergyError::InvalidCapacitor("parallel resistance must be > 0"));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(EnergyError::InvalidCapacitor("efficiency must be in (0, 1]"));
        }
        if !(self.drain_fraction >= 0.0 && self.drain_fraction < 1.0) {
            return Err(EnergyError::InvalidCapacitor("drain fraction must be in [0, 1)"));
        }
        if !(0.0 <= self.v_off && self.v_off < self.v_on && self.v_on <= self.v_max) {
            return Err(EnergyError::InvalidCapacitor("need 0 <= v_off < v_on <= v_max"));
        }
        Ok(())
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn voltage(&self) -> f64 {
        voltage_of(self.energy, self.capacitance)
    }

    /// Sets the stored energy, clamped to `[0, E(v_max)]`.
    pub fn set_energy(&mut self, energy: f64) {
        self.energy = energy.clamp(0.0, self.max_energy());
    }

    pub fn max_energy(&self) -> f64 {
        energy_of(self.capacitance, self.v_max)
    }

    pub fn off_energy(&self) -> f64 {
        energy_of(self.capacitance, self.v_off)
    }

    pub fn on_energy(&self) -> f64 {
        energy_of(self.capacitance, self.v_on)
    }

    /// Energy that can be drawn before the voltage falls under `v_off`.
    pub fn available(&self) -> f64 {
        (self.energy - self.off_energy()).max(0.0)
    }

    /// Load-switch state: turns on at `v_on`, off below `v_off`.
    pub fn is_powered(&self) -> bool {
        self.powered
    }

    pub fn at_or_above_on(&self) -> bool {
        self.energy >= self.on_energy()
    }

    /// Re-evaluates the hysteretic load switch; returns the new state on a transition.
    pub fn update_gate(&mut self) -> Option<bool> {
        let next = if self.powered {
            self.energy >= self.off_energy()
        } else {
            self.energy >= self.on_energy()
        };
        if next != self.powered {
            self.powered = next;
            Some(next)
        } else {
            None
        }
    }

    /// Voltage after charging for `dt` seconds at constant `power`, starting
    /// from the current voltage. Does not mutate the capacitor.
    pub fn charge_voltage(&self, power: f64, dt: f64) -> Result<f64, EnergyError> {
        if !(power >= 0.0) {
            return Err(EnergyError::Negative("power"));
        }
        if !(dt >= 0.0) {
            return Err(EnergyError::Negative("dt"));
        }
        let v0 = self.voltage();
        let pr = power * self.parallel_resistance;
        let decay = libm::exp(-2.0 * dt / (self.capacitance * self.parallel_resistance));
        let v2 = pr - decay * (pr - v0 * v0);
        Ok(libm::sqrt(v2.max(0.0)).clamp(0.0, self.v_max))
    }

    /// Time for the RC charging law to reach `target` volts, if it ever does.
    pub fn charge_time(&self, power: f64, target: f64) -> Option<f64> {
        let v0 = self.voltage();
        if target <= v0 {
            return Some(0.0);
        }
        let pr = power * self.parallel_resistance;
        if target * target >= pr {
            return None;
        }
        let ratio = (pr - target * target) / (pr - v0 * v0);
        Some(-0.5 * self.capacitance * self.parallel_resistance * libm::log(ratio))
    }

    /// Applies one slot of the buffer update and returns the new stored energy.
    pub fn buffer_step(&mut self, allotted_power: f64, dt: f64) -> Result<f64, EnergyError> {
        self.step_accounted(allotted_power, dt).map(|s| s.energy)
    }

    /// [`Capacitor::buffer_step`] with every energy flow reported.
    pub fn step_accounted(&mut self, allotted_power: f64, dt: f64) -> Result<BufferStep, EnergyError> {
        if !(allotted_power >= 0.0) {
            return Err(EnergyError::Negative("allotted power"));
        }
        if !(dt > 0.0) {
            return Err(EnergyError::Negative("dt"));
        }
        let raw = (1.0 - self.drain_fraction) * self.energy + self.efficiency * allotted_power * dt;
        let ceiling = self.max_energy();
        let next = raw.min(ceiling).max(0.0);
        let step = BufferStep {
            energy: next,
            harvested: self.efficiency * allotted_power * dt,
            drained: self.drain_fraction * self.energy,
            spill: (raw - ceiling).max(0.0),
        };
        self.energy = next;
        Ok(step)
    }

    /// Draws `amount` joules if the voltage stays at or above `v_off`.
    pub fn withdraw(&mut self, amount: f64) -> Result<Withdrawal, EnergyError> {
        if !(amount >= 0.0) {
            return Err(EnergyError::Negative("amount"));
        }
        let post = self.energy - amount;
        if post >= self.off_energy() {
            self.energy = post;
            Ok(Withdrawal::Ok)
        } else {
            Ok(Withdrawal::Insufficient)
        }
    }

    /// Unconditional draw floored at zero; returns what was actually taken.
    pub fn drain(&mut self, amount: f64) -> f64 {
        let taken = amount.min(self.energy).max(0.0);
        self.energy -= taken;
        taken
    }
}

/// Which buffer powers each hardware component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComponentMap {
    pub mcu: usize,
    pub sensing: usize,
    pub actuation: usize,
}

impl ComponentMap {
    pub fn buffer_for(&self, component: Component) -> usize {
        match component {
            Component::Mcu => self.mcu,
            Component::Sensing => self.sensing,
            Component::Actuation => self.actuation,
        }
    }

    pub fn single() -> Self {
        Self {
            mcu: 0,
            sensing: 0,
            actuation: 0,
        }
    }
}

impl Default for ComponentMap {
    /// MCU and sensing on the first buffer, actuation on the second.
    fn default() -> Self {
        Self {
            mcu: 0,
            sensing: 0,
            actuation: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacitorBank {
    pub capacitors: Vec<Capacitor>,
    pub components: ComponentMap,
}

impl CapacitorBank {
    pub fn new(capacitors: Vec<Capacitor>, components: ComponentMap) -> Result<Self, EnergyError> {
        if capacitors.is_empty() {
            return Err(EnergyError::InvalidBank("at least one capacitor is required"));
        }
        let m = capacitors.len();
        if components.mcu >= m || components.sensing >= m || components.actuation >= m {
            return Err(EnergyError::InvalidBank("component mapped to a missing buffer"));
        }
        Ok(Self { capacitors, components })
    }

    pub fn len(&self) -> usize {
        self.capacitors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.capacitors.is_empty()
    }

    /// Aggregate available energy `E`: the sum of stored energies.
    pub fn total_energy(&self) -> f64 {
        self.capacitors.iter().map(Capacitor::energy).sum()
    }

    /// Energy of the whole bank charged to `v_max`.
    pub fn capacity_energy(&self) -> f64 {
        self.capacitors.iter().map(Capacitor::max_energy).sum()
    }

    pub fn total_capacitance(&self) -> f64 {
        self.capacitors.iter().map(|c| c.capacitance).sum()
    }

    pub fn mcu(&self) -> &Capacitor {
        &self.capacitors[self.components.mcu]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cap(c: f64, rp: f64, v: f64) -> Capacitor {
        Capacitor::new(c, rp, 1.0, 0.0, 2.4, 1.0, 5.0, v).unwrap()
    }

    #[test]
    fn charge_voltage_examples() {
        let c = cap(100e-6, 10e3, 0.0);
        assert_eq!(c.charge_voltage(0.0, 3.0).unwrap(), 0.0);
        let v = c.charge_voltage(1e-3, 1.0).unwrap();
        assert!((v - 2.940_518_180_122_998_7).abs() < 1e-9, "{v}");
        let steady = c.charge_voltage(1e-3, 100.0 * 100e-6 * 10e3).unwrap();
        assert!((steady - 10f64.sqrt()).abs() / 10f64.sqrt() < 1e-6);
    }

    #[test]
    fn charge_voltage_clamps_and_rejects_negative() {
        let c = Capacitor::new(100e-6, 10e3, 1.0, 0.0, 2.4, 1.0, 3.0, 0.0).unwrap();
        assert_eq!(c.charge_voltage(1.0, 10.0).unwrap(), 3.0);
        assert!(c.charge_voltage(-1.0, 1.0).is_err());
        assert!(c.charge_voltage(1.0, -1.0).is_err());
    }

    #[test]
    fn zero_power_decay_is_rc() {
        let c = cap(33e-6, 30e3, 3.0);
        let tau = 33e-6 * 30e3;
        let v = c.charge_voltage(0.0, tau).unwrap();
        let expect = 3.0 / core::f64::consts::E;
        assert!((v - expect).abs() / expect < 1e-9);
    }

    #[test]
    fn charge_time_inverts_charge_voltage() {
        let c = cap(220e-6, 30e3, 1.0);
        let t = c.charge_time(5e-4, 2.4).unwrap();
        let v = c.charge_voltage(5e-4, t).unwrap();
        assert!((v - 2.4).abs() < 1e-9);
        assert_eq!(c.charge_time(5e-4, 0.5), Some(0.0));
        // steady state sqrt(P·Rp) = sqrt(15) < 4 V
        assert_eq!(c.charge_time(5e-4, 4.0), None);
    }

    #[test]
    fn buffer_step_examples() {
        let mut c = Capacitor::new(1.0, 1e3, 1.0, 0.0, 0.2, 0.1, 10.0, 0.0).unwrap();
        assert_eq!(c.buffer_step(1e-3, 1.0).unwrap(), 1e-3);

        let mut c = Capacitor::new(1.0, 1e3, 0.8, 0.1, 0.2, 0.1, 10.0, 0.0).unwrap();
        c.set_energy(10e-3);
        let e = c.buffer_step(5e-3, 1.0).unwrap();
        assert!((e - 13e-3).abs() < 1e-15);

        let mut small = Capacitor::new(1e-6, 1e3, 1.0, 0.0, 2.0, 1.0, 3.0, 0.0).unwrap();
        let e = small.buffer_step(1.0, 1.0).unwrap();
        assert_eq!(e, 0.5 * 1e-6 * 9.0);
        assert!(small.voltage() <= 3.0 + 1e-12);
        assert!(small.buffer_step(-1.0, 1.0).is_err());
        assert!(small.buffer_step(1.0, 0.0).is_err());
    }

    #[test]
    fn step_accounted_reports_spill() {
        let mut c = Capacitor::new(1e-6, 1e3, 1.0, 0.0, 2.0, 1.0, 3.0, 3.0).unwrap();
        let s = c.step_accounted(1e-3, 1.0).unwrap();
        assert!((s.spill - 1e-3).abs() < 1e-15);
        assert_eq!(s.energy, c.max_energy());
    }

    #[test]
    fn energy_voltage_bridge() {
        assert!((energy_of(100e-6, 3.0) - 450e-6).abs() < 1e-18);
        assert_eq!(energy_of(100e-6, 0.0), 0.0);
        let c = cap(100e-6, 1e3, 2.7);
        let back = voltage_of(c.energy(), c.capacitance);
        assert!((back - 2.7).abs() / 2.7 < 1e-12);
    }

    #[test]
    fn withdraw_examples() {
        // v_off = 1 V on 100 µF is 50 µJ
        let mut c = cap(100e-6, 1e3, 3.0);
        assert!((c.off_energy() - 50e-6).abs() < 1e-18);
        assert_eq!(c.withdraw(19.066e-6).unwrap(), Withdrawal::Ok);
        assert!((c.energy() - 430.934e-6).abs() < 1e-15);

        let before = c.energy();
        assert_eq!(c.withdraw(before - 40e-6).unwrap(), Withdrawal::Insufficient);
        assert_eq!(c.energy(), before);

        assert_eq!(c.withdraw(0.0).unwrap(), Withdrawal::Ok);
        assert_eq!(c.energy(), before);
        assert!(c.withdraw(-1.0).is_err());
    }

    #[test]
    fn gate_hysteresis() {
        let mut c = Capacitor::new(100e-6, 1e3, 1.0, 0.0, 2.4, 1.8, 3.0, 2.0).unwrap();
        assert!(!c.is_powered());
        c.set_energy(energy_of(100e-6, 2.3));
        assert_eq!(c.update_gate(), None);
        c.set_energy(energy_of(100e-6, 2.4));
        assert_eq!(c.update_gate(), Some(true));
        c.set_energy(energy_of(100e-6, 1.9));
        assert_eq!(c.update_gate(), None);
        c.set_energy(energy_of(100e-6, 1.7));
        assert_eq!(c.update_gate(), Some(false));
    }

    #[test]
    fn capacitor_validation() {
        assert!(Capacitor::new(0.0, 1.0, 1.0, 0.0, 2.0, 1.0, 3.0, 0.0).is_err());
        assert!(Capacitor::new(1.0, 1.0, 0.0, 0.0, 2.0, 1.0, 3.0, 0.0).is_err());
        assert!(Capacitor::new(1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0, 0.0).is_err());
        assert!(Capacitor::new(1.0, 1.0, 1.0, 0.0, 1.0, 2.0, 3.0, 0.0).is_err());
        assert!(Capacitor::new(1.0, 1.0, 1.0, 0.0, 2.0, 1.0, 3.0, 3.5).is_err());
    }

    #[test]
    fn bank_rejects_bad_component_map() {
        let c = cap(1e-6, 1.0, 0.0);
        assert!(CapacitorBank::new(alloc::vec![c.clone()], ComponentMap::default()).is_err());
        assert!(CapacitorBank::new(alloc::vec![], ComponentMap::single()).is_err());
        let b = CapacitorBank::new(alloc::vec![c], ComponentMap::single()).unwrap();
        assert_eq!(b.len(), 1);
    }
}
