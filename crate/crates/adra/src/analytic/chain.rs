//! Within-frame absorbing chains for the tagged device.
//!
//! For a frame in which the tagged device starts with `s1` rivals exactly at
//! the threshold age and `s2` above it, the chain state counts how many
//! rivals have already delivered; the extra absorbing state records the
//! tagged device's own delivery. Transition rows are time-varying: before
//! the threshold slot offset only part of the population contends.

use crate::model::AccessPolicy;

/// Frame-start age of the tagged device relative to the threshold. Devices
/// exactly at the threshold stay silent until the threshold slot offset;
/// devices above it contend from slot 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaggedStart {
    AtThreshold,
    Above,
}

/// `solo[u]` is the probability that one specific contender among `u`
/// transmits while the other `u-1` stay silent.
pub(crate) fn solo_table(max_contenders: usize, policy: AccessPolicy) -> Vec<f64> {
    let mut solo = vec![0.0; max_contenders + 1];
    for (u, entry) in solo.iter_mut().enumerate().skip(1) {
        let p = policy.tx_prob(u);
        *entry = p * (1.0 - p).powi(u as i32 - 1);
    }
    solo
}

/// One row of the time-varying transition kernel, reduced to its three
/// nonzero destinations: stay at `y`, advance to `y+1` (a rival delivered),
/// absorb (the tagged device delivered).
fn kernel(
    kind: TaggedStart,
    silent_phase: bool,
    s1: usize,
    s2: usize,
    y: usize,
    solo: &[f64],
) -> (f64, f64, f64) {
    let s = s1 + s2;
    debug_assert!(y <= s);
    if !silent_phase {
        // everyone still holding an update contends, tagged included
        let k = s - y;
        let u = k + 1;
        let one = solo[u];
        return (1.0 - u as f64 * one, k as f64 * one, one);
    }
    match kind {
        TaggedStart::AtThreshold => {
            // tagged silent; only above-threshold rivals contend
            if y >= s2 {
                return (1.0, 0.0, 0.0);
            }
            let c = s2 - y;
            let one = solo[c];
            (1.0 - c as f64 * one, c as f64 * one, 0.0)
        }
        TaggedStart::Above => {
            // tagged contends alongside the above-threshold rivals
            if y > s2 {
                // not reachable while the silent phase lasts
                return (1.0, 0.0, 0.0);
            }
            let k = s2 - y;
            let u = k + 1;
            let one = solo[u];
            (1.0 - u as f64 * one, k as f64 * one, one)
        }
    }
}

/// Full transition row out of state `y` (or the absorbing state for
/// `y == s1+s2+1`) at slot offset `h`, over the `s1+s2+2` chain states.
/// Diagnostic surface for stochasticity checks.
pub fn transition_row(
    kind: TaggedStart,
    s1: usize,
    s2: usize,
    h: u32,
    y: usize,
    frame_len: u32,
    threshold_offset: u32,
    policy: AccessPolicy,
) -> Vec<f64> {
    let s = s1 + s2;
    assert!(h < frame_len && y <= s + 1);
    let mut row = vec![0.0; s + 2];
    if y == s + 1 {
        row[y] = 1.0;
        return row;
    }
    let solo = solo_table(s + 1, policy);
    let (stay, advance, absorb) = kernel(kind, h < threshold_offset, s1, s2, y, &solo);
    row[y] += stay;
    if advance != 0.0 {
        row[y + 1] += advance;
    }
    row[s + 1] += absorb;
    row
}

/// Propagates the chain one slot in place. `v[0..=s]` are the transient
/// state masses, `v[s+1]` the absorbed mass. Descending order makes each
/// `y -> y+1` flow land on an already-updated entry.
fn propagate_slot(
    kind: TaggedStart,
    silent_phase: bool,
    s1: usize,
    s2: usize,
    solo: &[f64],
    v: &mut [f64],
) {
    let s = s1 + s2;
    for y in (0..=s).rev() {
        let mass = v[y];
        if mass == 0.0 {
            continue;
        }
        let (stay, advance, absorb) = kernel(kind, silent_phase, s1, s2, y, solo);
        v[s + 1] += mass * absorb;
        if advance != 0.0 {
            v[y + 1] += mass * advance;
        }
        v[y] = mass * stay;
    }
}

/// Writes the per-slot absorption increments (the tagged device's success
/// probability in each slot) into `alpha`, which must have `frame_len`
/// entries. `scratch` must hold `s1+s2+2` entries.
pub(crate) fn fill_profile(
    kind: TaggedStart,
    s1: usize,
    s2: usize,
    frame_len: u32,
    threshold_offset: u32,
    solo: &[f64],
    scratch: &mut [f64],
    alpha: &mut [f64],
) {
    let s = s1 + s2;
    debug_assert_eq!(scratch.len(), s + 2);
    debug_assert_eq!(alpha.len(), frame_len as usize);
    scratch.fill(0.0);
    scratch[0] = 1.0;
    let mut absorbed = 0.0;
    for h in 0..frame_len {
        propagate_slot(kind, h < threshold_offset, s1, s2, solo, scratch);
        alpha[h as usize] = scratch[s + 1] - absorbed;
        absorbed = scratch[s + 1];
    }
}

fn profile(kind: TaggedStart, s1: usize, s2: usize, config: &crate::model::ProtocolConfig) -> Vec<f64> {
    assert!(
        (s1 + s2) as u32 <= config.n_devices.saturating_sub(1),
        "rival counts exceed the population"
    );
    let solo = solo_table(s1 + s2 + 1, config.policy);
    let mut scratch = vec![0.0; s1 + s2 + 2];
    let mut alpha = vec![0.0; config.frame_len as usize];
    fill_profile(
        kind,
        s1,
        s2,
        config.frame_len,
        config.threshold_offset(),
        &solo,
        &mut scratch,
        &mut alpha,
    );
    alpha
}

/// Per-slot success probabilities of a tagged device starting the frame
/// exactly at the threshold age, against `s1` at-threshold and `s2`
/// above-threshold rivals.
pub fn success_profile_at(s1: usize, s2: usize, config: &crate::model::ProtocolConfig) -> Vec<f64> {
    profile(TaggedStart::AtThreshold, s1, s2, config)
}

/// Same, for a tagged device starting the frame above the threshold age.
pub fn success_profile_above(s1: usize, s2: usize, config: &crate::model::ProtocolConfig) -> Vec<f64> {
    profile(TaggedStart::Above, s1, s2, config)
}

/// State vectors after 0, 1, ..., frame_len slots; diagnostic surface for
/// absorption-monotonicity checks.
pub fn state_vectors(
    kind: TaggedStart,
    s1: usize,
    s2: usize,
    config: &crate::model::ProtocolConfig,
) -> Vec<Vec<f64>> {
    let s = s1 + s2;
    let solo = solo_table(s + 1, config.policy);
    let offset = config.threshold_offset();
    let mut v = vec![0.0; s + 2];
    v[0] = 1.0;
    let mut history = vec![v.clone()];
    for h in 0..config.frame_len {
        propagate_slot(kind, h < offset, s1, s2, &solo, &mut v);
        history.push(v.clone());
    }
    history
}
