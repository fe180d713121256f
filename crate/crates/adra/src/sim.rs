//! Slot-accurate Monte-Carlo simulation of the frame-synchronous random
//! access protocol, plus an exhaustive per-frame enumeration oracle used to
//! cross-check the analytic chains.
//!
//! Protocol rules simulated here: every device generates a one-slot update at
//! each frame start; a device contends in a slot iff that update is still
//! pending and its age has reached the threshold; a slot delivers iff exactly
//! one device transmits; pending updates are discarded at frame end.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::model::{AccessPolicy, AgeState, ConfigError, ConfigViolation, ProtocolConfig};

/// Bounds for the exhaustive oracle were exceeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("oracle size exceeded: requires s1+s2 <= 3 and frame_len <= 4")]
pub struct SizeExceeded;

/// Exact per-slot probabilities that the tagged device delivers its update in
/// slot `h` of a frame, computed by enumerating every transmission outcome
/// sequence of the frame.
///
/// `s1` other devices sit exactly at the threshold age at frame start (they
/// contend from the threshold slot offset on), `s2` sit above it (they
/// contend from slot 0). `tagged_above` selects whether the tagged device
/// itself starts the frame above the threshold or exactly at it.
///
/// Independent of the absorbing-chain computation; intended for tests.
pub fn brute_force_frame_oracle(
    s1: usize,
    s2: usize,
    config: &ProtocolConfig,
    tagged_above: bool,
) -> Result<Vec<f64>, SizeExceeded> {
    if s1 + s2 > 3 || config.frame_len > 4 {
        return Err(SizeExceeded);
    }
    let d = config.frame_len as usize;
    let offset = config.threshold_offset() as usize;
    let mut out = vec![0.0; d];
    let all_pending: u8 = if s1 + s2 == 0 { 0 } else { (1u8 << (s1 + s2)) - 1 };
    enumerate_frame(
        0,
        all_pending,
        1.0,
        s1,
        offset,
        tagged_above,
        config.policy,
        &mut out,
    );
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn enumerate_frame(
    h: usize,
    others_pending: u8,
    prob: f64,
    s1: usize,
    offset: usize,
    tagged_above: bool,
    policy: AccessPolicy,
    out: &mut [f64],
) {
    if h == out.len() {
        return;
    }
    // Contenders this slot: the tagged device unless still below threshold,
    // at-threshold others from slot `offset` on, above-threshold others from
    // slot 0; delivered devices have nothing left to send.
    let tagged_contends = tagged_above || h >= offset;
    let mut others: Vec<usize> = Vec::new();
    for i in 0..8 {
        if others_pending & (1 << i) != 0 {
            let at_threshold = i < s1;
            if !at_threshold || h >= offset {
                others.push(i);
            }
        }
    }
    let u = others.len() + usize::from(tagged_contends);
    if u == 0 {
        enumerate_frame(h + 1, others_pending, prob, s1, offset, tagged_above, policy, out);
        return;
    }
    let p = policy.tx_prob(u);
    for mask in 0u32..(1 << u) {
        let tx_count = mask.count_ones();
        let mut branch = prob;
        for bit in 0..u {
            branch *= if mask & (1 << bit) != 0 { p } else { 1.0 - p };
        }
        if branch == 0.0 {
            continue;
        }
        if tx_count == 1 {
            let bit = mask.trailing_zeros() as usize;
            if tagged_contends && bit == u - 1 {
                // tagged delivered alone; later slots are irrelevant to it
                out[h] += branch;
                continue;
            }
            let winner = others[bit];
            enumerate_frame(
                h + 1,
                others_pending & !(1 << winner),
                branch,
                s1,
                offset,
                tagged_above,
                policy,
                out,
            );
        } else {
            enumerate_frame(h + 1, others_pending, branch, s1, offset, tagged_above, policy, out);
        }
    }
}

/// A simulation experiment: protocol, horizon, warmup and replication plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub protocol: ProtocolConfig,
    /// Total simulated slots per run; must cover whole frames.
    pub horizon_slots: u64,
    /// Slots discarded before age sampling starts.
    pub warmup_slots: u64,
    pub seed: u64,
    pub runs: u32,
    /// Re-derive every state transition from first principles and panic on
    /// mismatch. Slow; meant for tests.
    #[serde(skip)]
    pub check_invariants: bool,
}

impl SimConfig {
    pub fn new(
        protocol: ProtocolConfig,
        horizon_slots: u64,
        warmup_slots: u64,
        seed: u64,
        runs: u32,
    ) -> Result<Self, ConfigError> {
        let mut violations = Vec::new();
        if horizon_slots == 0 || horizon_slots % u64::from(protocol.frame_len) != 0 {
            violations.push(ConfigViolation::HorizonNotWholeFrames);
        }
        if warmup_slots >= horizon_slots {
            violations.push(ConfigViolation::WarmupExceedsHorizon);
        }
        if runs == 0 {
            violations.push(ConfigViolation::RunsOutOfRange);
        }
        if !violations.is_empty() {
            return Err(ConfigError { violations });
        }
        Ok(SimConfig {
            protocol,
            horizon_slots,
            warmup_slots,
            seed,
            runs,
            check_invariants: false,
        })
    }

    /// Default warmup: 100 frames.
    pub fn default_warmup(frame_len: u32) -> u64 {
        100 * u64::from(frame_len)
    }

    pub fn with_invariant_checks(mut self, on: bool) -> Self {
        self.check_invariants = on;
        self
    }
}

/// Aggregated simulation outcome across replications.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    /// Time-average network-wide age per run, in run order.
    pub per_run_aoi: Vec<f64>,
    pub mean_aoi: f64,
    /// Standard error across runs; absent for a single run.
    pub std_err: Option<f64>,
    /// Fraction of (device, frame) pairs after warmup that delivered.
    pub success_rate: f64,
}

/// Runs one replication and returns the time-average network-wide age.
/// The random stream is a pure function of `(config.seed, run_index)`.
pub fn run_once(config: &SimConfig, run_index: u32) -> f64 {
    run_once_detailed(config, run_index).0
}

fn run_once_detailed(config: &SimConfig, run_index: u32) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(u64::from(run_index));

    let n = config.protocol.n_devices as usize;
    let d = u64::from(config.protocol.frame_len);
    let d_us = d as usize;
    let delta = u64::from(config.protocol.age_threshold);
    let policy = config.protocol.policy;
    let fixed_p = match policy {
        AccessPolicy::Fixed(p) => p,
        AccessPolicy::Adaptive => f64::NAN,
    };
    let frames = config.horizon_slots / d;
    let warmup = config.warmup_slots;

    // Frame-start ages; within a frame a pending device's age is
    // frame_age + h and a delivered one's is h - success_slot offset, so no
    // per-slot age vector is needed.
    let mut frame_age: Vec<u64> = vec![0; n];
    let mut delivered: Vec<bool> = vec![false; n];
    // Devices whose age reaches the threshold at slot offset r enter the
    // contender set when the frame reaches r.
    let mut activation: Vec<Vec<u32>> = vec![Vec::new(); d_us];
    let mut active: Vec<u32> = Vec::with_capacity(n);

    let mut age_acc: u128 = 0;
    let mut sampled_slots: u64 = 0;
    let mut successes_after_warmup: u64 = 0;
    let mut frames_after_warmup: u64 = 0;

    let mut shadow = ShadowState::new(config);

    for m in 0..frames {
        let frame_start = m * d;
        for (dev, &age) in frame_age.iter().enumerate() {
            let rel = delta.saturating_sub(age);
            if rel < d {
                activation[rel as usize].push(dev as u32);
            }
        }
        active.clear();
        let counted_frame = frame_start >= warmup;
        if counted_frame {
            frames_after_warmup += 1;
        }
        // Sum of ages at the beginning of the current slot.
        let mut slot_total: u64 = frame_age.iter().sum();

        for h in 0..d_us {
            let t = frame_start + h as u64;
            active.append(&mut activation[h]);

            if let Some(s) = shadow.as_mut() {
                s.check_slot_start(&active, &frame_age, slot_total, h);
            }
            if t >= warmup {
                age_acc += u128::from(slot_total);
                sampled_slots += 1;
            }

            let u = active.len();
            let mut winner: Option<u32> = None;
            if u > 0 {
                let p = if policy.is_adaptive() { 1.0 / u as f64 } else { fixed_p };
                let mut tx_count = 0u32;
                let mut winner_pos = 0usize;
                for (pos, _) in active.iter().enumerate() {
                    if rng.random::<f64>() < p {
                        tx_count += 1;
                        winner_pos = pos;
                    }
                }
                if policy.is_adaptive() && u == 1 {
                    debug_assert_eq!(tx_count, 1, "a lone adaptive contender always transmits");
                }
                if tx_count == 1 {
                    let dev = active.swap_remove(winner_pos);
                    winner = Some(dev);
                    delivered[dev as usize] = true;
                    if counted_frame {
                        successes_after_warmup += 1;
                    }
                }
            }

            // Ages at the next slot: +1 for everyone except a winner, whose
            // age restarts at h+1; see AgeState::step.
            slot_total += n as u64;
            if let Some(dev) = winner {
                slot_total -= frame_age[dev as usize];
            }
            if let Some(s) = shadow.as_mut() {
                s.step(winner, h as u32);
            }
        }

        for (dev, age) in frame_age.iter_mut().enumerate() {
            if delivered[dev] {
                *age = d;
                delivered[dev] = false;
            } else {
                *age += d;
            }
        }
        if let Some(s) = shadow.as_mut() {
            s.check_frame_end(&frame_age);
        }
    }

    let aoi = age_acc as f64 / (sampled_slots as f64 * n as f64);
    let success_rate = if frames_after_warmup == 0 {
        0.0
    } else {
        successes_after_warmup as f64 / (frames_after_warmup as f64 * n as f64)
    };
    (aoi, success_rate)
}

/// Runs all replications with independent streams and aggregates them in run
/// order. Deterministic for a given seed.
pub fn run_replicated(config: &SimConfig) -> SimReport {
    let mut per_run_aoi = Vec::with_capacity(config.runs as usize);
    let mut rates = Vec::with_capacity(config.runs as usize);
    for run_index in 0..config.runs {
        let (aoi, rate) = run_once_detailed(config, run_index);
        per_run_aoi.push(aoi);
        rates.push(rate);
    }
    let runs = per_run_aoi.len() as f64;
    let mean_aoi = per_run_aoi.iter().sum::<f64>() / runs;
    let std_err = if per_run_aoi.len() >= 2 {
        let var = per_run_aoi.iter().map(|x| (x - mean_aoi).powi(2)).sum::<f64>() / (runs - 1.0);
        Some((var / runs).sqrt())
    } else {
        None
    };
    let success_rate = rates.iter().sum::<f64>() / runs;
    SimReport {
        per_run_aoi,
        mean_aoi,
        std_err,
        success_rate,
    }
}

/// Reference state evolved directly from the per-slot protocol definition,
/// compared against the incremental fast path when `check_invariants` is on.
struct Shadow {
    ages: Vec<AgeState>,
    delivered_this_frame: Vec<bool>,
    threshold: u64,
}

type ShadowState = Option<Shadow>;

trait ShadowExt {
    fn new(config: &SimConfig) -> ShadowState;
}

impl ShadowExt for ShadowState {
    fn new(config: &SimConfig) -> ShadowState {
        config.check_invariants.then(|| Shadow {
            ages: vec![AgeState(0); config.protocol.n_devices as usize],
            delivered_this_frame: vec![false; config.protocol.n_devices as usize],
            threshold: u64::from(config.protocol.age_threshold),
        })
    }
}

impl Shadow {
    fn check_slot_start(&self, active: &[u32], frame_age: &[u64], slot_total: u64, h: usize) {
        let total: u64 = self.ages.iter().map(|a| a.0).sum();
        assert_eq!(slot_total, total, "incremental age total diverged");
        let mut is_active = vec![false; self.ages.len()];
        for &dev in active {
            is_active[dev as usize] = true;
        }
        for dev in 0..self.ages.len() {
            let eligible = !self.delivered_this_frame[dev] && self.ages[dev].0 >= self.threshold;
            assert_eq!(
                is_active[dev], eligible,
                "contender set mismatch at offset {h} for device {dev}"
            );
            if !self.delivered_this_frame[dev] {
                assert_eq!(self.ages[dev].0, frame_age[dev] + h as u64);
            }
        }
    }

    fn step(&mut self, winner: Option<u32>, h: u32) {
        if let Some(dev) = winner {
            assert!(
                !self.delivered_this_frame[dev as usize],
                "device delivered twice in one frame"
            );
            self.delivered_this_frame[dev as usize] = true;
        }
        for dev in 0..self.ages.len() {
            self.ages[dev] = self.ages[dev].step(self.delivered_this_frame[dev], h);
        }
        if let Some(dev) = winner {
            assert_eq!(self.ages[dev as usize], AgeState(u64::from(h) + 1));
        }
    }

    fn check_frame_end(&mut self, frame_age: &[u64]) {
        for dev in 0..self.ages.len() {
            assert_eq!(self.ages[dev].0, frame_age[dev]);
            self.delivered_this_frame[dev] = false;
        }
    }
}
