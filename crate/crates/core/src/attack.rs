//! Ground-truth attack detector.
//!
//! The detector looks at the injected scenarios and reports what a real
//! detector would hand to the policy: whether an attack is ongoing, how
//! reliable that claim is, and its elapsed and remaining time. Detection lag
//! and a bounded error on the remaining time emulate an imperfect detector.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::trace::AttackScenario;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackInfo {
    pub ongoing: bool,
    pub accuracy: f64,
    /// Seconds since the attack started.
    pub elapsed: f64,
    /// Seconds the attack is expected to continue.
    pub remaining: f64,
}

impl AttackInfo {
    pub fn none(accuracy: f64) -> Self {
        Self {
            ongoing: false,
            accuracy,
            elapsed: 0.0,
            remaining: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    /// Lag, in seconds, between the true window and the reported one.
    pub detection_delay: f64,
    /// Relative half-width `e` of the uniform error applied to the remaining time.
    pub remaining_time_error: f64,
    pub reported_accuracy: f64,
    pub rng_seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            detection_delay: 0.0,
            remaining_time_error: 0.0,
            reported_accuracy: 1.0,
            rng_seed: 0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if !(self.detection_delay >= 0.0) || !self.detection_delay.is_finite() {
            return Err("detection delay must be >= 0");
        }
        if !(self.remaining_time_error >= 0.0) || !self.remaining_time_error.is_finite() {
            return Err("remaining-time error must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.reported_accuracy) {
            return Err("reported accuracy must be in [0, 1]");
        }
        Ok(())
    }
}

/// Reports the detector's view at time `t`.
///
/// The reported window is the true window shifted later by the detection
/// delay. The output depends only on the arguments, so replays are exact.
pub fn detect(t: f64, scenarios: &[AttackScenario], cfg: &DetectorConfig) -> AttackInfo {
    let hit = scenarios.iter().enumerate().find(|(_, s)| {
        let lo = s.start + cfg.detection_delay;
        let hi = s.end() + cfg.detection_delay;
        t >= lo && t < hi
    });
    let Some((index, s)) = hit else {
        return AttackInfo::none(cfg.reported_accuracy);
    };
    let elapsed = (t - s.start).max(0.0);
    let mut remaining = (s.end() - t).max(0.0);
    if cfg.remaining_time_error > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        rng.set_stream(t.to_bits());
        let e = cfg.remaining_time_error;
        let u: f64 = rng.gen_range(-e..=e);
        remaining = (remaining * (1.0 + u)).max(0.0);
    }
    AttackInfo {
        ongoing: true,
        accuracy: cfg.reported_accuracy,
        elapsed,
        remaining,
    }
}
