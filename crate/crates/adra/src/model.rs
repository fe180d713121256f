//! Shared protocol domain types: network configuration, access policy, and
//! the age-threshold decomposition used by the analytic model, the simulator
//! and the optimizer.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Floor below which a per-frame success probability is treated as zero.
/// Below it the recurrent class of the frame-level age chain vanishes and the
/// average age is unbounded.
pub const SUCCESS_FLOOR: f64 = 1e-12;

/// How a device picks its transmit probability once its age has reached the
/// threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessPolicy {
    /// Transmit with a fixed probability in (0, 1].
    Fixed(f64),
    /// Transmit with probability `1/u` where `u` is the number of devices
    /// contending in the current slot (provided out of band).
    Adaptive,
}

impl AccessPolicy {
    /// Transmit probability of a single contender when `contenders` devices
    /// contend in a slot. Returns 0 when nobody contends.
    pub fn tx_prob(&self, contenders: usize) -> f64 {
        if contenders == 0 {
            return 0.0;
        }
        match self {
            AccessPolicy::Fixed(p) => *p,
            AccessPolicy::Adaptive => 1.0 / contenders as f64,
        }
    }

    pub fn is_adaptive(&self) -> bool {
        matches!(self, AccessPolicy::Adaptive)
    }
}

impl std::fmt::Display for AccessPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AccessPolicy::Fixed(p) => write!(f, "fixed:{p}"),
            AccessPolicy::Adaptive => write!(f, "adaptive"),
        }
    }
}

/// Validated protocol parameters: `n_devices` stations share frames of
/// `frame_len` slots and contend only once their age reaches `age_threshold`
/// slots.
///
/// The threshold is stored as the single user-facing integer; its
/// frame/offset decomposition is always derived, never stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub n_devices: u32,
    pub frame_len: u32,
    pub age_threshold: u32,
    pub policy: AccessPolicy,
}

impl ProtocolConfig {
    pub fn new(
        n_devices: u32,
        frame_len: u32,
        age_threshold: u32,
        policy: AccessPolicy,
    ) -> Result<Self, ConfigError> {
        validate_config(ProtocolConfig {
            n_devices,
            frame_len,
            age_threshold,
            policy,
        })
    }

    /// Whole frames contained in the age threshold.
    pub fn threshold_frames(&self) -> u32 {
        decompose_threshold(self.age_threshold, self.frame_len).0
    }

    /// Slot offset of the age threshold within a frame, in `[0, frame_len)`.
    pub fn threshold_offset(&self) -> u32 {
        decompose_threshold(self.age_threshold, self.frame_len).1
    }
}

/// Splits an age threshold into whole frames and a slot offset:
/// `delta = frames * frame_len + offset` with `0 <= offset < frame_len`.
pub fn decompose_threshold(delta: u32, frame_len: u32) -> (u32, u32) {
    assert!(frame_len >= 1, "frame_len must be positive");
    (delta / frame_len, delta % frame_len)
}

/// Machine-readable reason a configuration was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigViolation {
    NDevicesOutOfRange,
    FrameLenOutOfRange,
    ProbabilityOutOfRange,
    HorizonNotWholeFrames,
    WarmupExceedsHorizon,
    RunsOutOfRange,
}

impl ConfigViolation {
    /// Stable identifier used in CLI error records.
    pub fn code(&self) -> &'static str {
        match self {
            ConfigViolation::NDevicesOutOfRange => "n_devices_out_of_range",
            ConfigViolation::FrameLenOutOfRange => "frame_len_out_of_range",
            ConfigViolation::ProbabilityOutOfRange => "probability_out_of_range",
            ConfigViolation::HorizonNotWholeFrames => "horizon_not_whole_frames",
            ConfigViolation::WarmupExceedsHorizon => "warmup_exceeds_horizon",
            ConfigViolation::RunsOutOfRange => "runs_out_of_range",
        }
    }
}

impl std::fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

/// Invalid configuration, carrying every violated invariant.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid configuration: {}", .violations.iter().map(|v| v.code()).collect::<Vec<_>>().join(", "))]
pub struct ConfigError {
    pub violations: Vec<ConfigViolation>,
}

/// Returns the configuration unchanged iff every type invariant holds,
/// otherwise reports all violated invariants at once.
pub fn validate_config(config: ProtocolConfig) -> Result<ProtocolConfig, ConfigError> {
    let mut violations = Vec::new();
    if config.n_devices < 1 {
        violations.push(ConfigViolation::NDevicesOutOfRange);
    }
    if config.frame_len < 1 {
        violations.push(ConfigViolation::FrameLenOutOfRange);
    }
    if let AccessPolicy::Fixed(p) = config.policy {
        if !p.is_finite() || p <= 0.0 || p > 1.0 {
            violations.push(ConfigViolation::ProbabilityOutOfRange);
        }
    }
    if violations.is_empty() {
        Ok(config)
    } else {
        Err(ConfigError { violations })
    }
}

/// Instantaneous age of a device at the beginning of a slot: slots elapsed
/// since the generation of its newest delivered update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct AgeState(pub u64);

impl AgeState {
    /// Age at the beginning of the next slot. `delivered_this_frame` says
    /// whether the update generated at the current frame start has been
    /// delivered by the end of slot `slot_in_frame` (0-based offset); if so
    /// the age tracks that update's generation time, otherwise it grows by
    /// one slot.
    pub fn step(self, delivered_this_frame: bool, slot_in_frame: u32) -> AgeState {
        if delivered_this_frame {
            AgeState(u64::from(slot_in_frame) + 1)
        } else {
            AgeState(self.0 + 1)
        }
    }
}
