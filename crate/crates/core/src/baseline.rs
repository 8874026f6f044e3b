//! Comparison systems: static federated charging (FH) and a single
//! capacitor (Central). Both run the same periodic energy-aware scheduler as
//! the mitigation policy, with the profile fixed to NML and no attack input.

use crate::app::{AppSpec, Profile, QueueSet};
use crate::attack::AttackInfo;
use crate::energy::{CapacitorBank, ComponentMap};
use crate::policy::{pick_execution_task, set_task_states, split_power, Decision, PerBuffer, SchedulerState};
use crate::sim::BankParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Fh,
    Central,
}

/// Weights `C_i / ΣC`.
pub fn capacitance_weights(bank: &CapacitorBank) -> PerBuffer {
    let total = bank.total_capacitance();
    bank.capacitors.iter().map(|c| c.capacitance / total).collect()
}

/// Splits `power` in proportion to capacitance, independent of task states.
pub fn fh_allocate(bank: &CapacitorBank, power: f64) -> PerBuffer {
    split_power(&capacitance_weights(bank), power)
}

/// One capacitor holding the summed capacitance and initial energy of `params`.
pub fn central_bank(params: &BankParams) -> BankParams {
    let capacitance = params.capacitances.iter().sum();
    BankParams {
        capacitances: alloc::vec![capacitance],
        initial_energy: params.initial_energy.as_ref().map(|e| alloc::vec![e.iter().sum()]),
        components: ComponentMap::single(),
        ..params.clone()
    }
}

/// One slot of the periodic scheduler at NML rates with FH allocation.
/// `info` is recorded but never acted upon.
pub fn rts_schedule(
    state: &mut SchedulerState,
    spec: &AppSpec,
    bank: &CapacitorBank,
    info: &AttackInfo,
    queues: &QueueSet,
    now: f64,
    harvested_power: f64,
) -> Decision {
    state.set_profile(spec, Profile::Nml);
    let releases = state.advance_releases(queues, now);
    set_task_states(state, spec, bank, None);
    let started = pick_execution_task(state, spec, bank, now);
    let weights = capacitance_weights(bank);
    Decision {
        profile: Profile::Nml,
        profile_changed: false,
        info: *info,
        releases,
        states: state.states(),
        started,
        executing: state.running(),
        shares: split_power(&weights, harvested_power),
        weights,
    }
}
