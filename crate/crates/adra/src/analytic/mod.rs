//! Frame-level Markov model of the protocol: steady state of the tagged
//! device's frame-start age, the joint law of rival ages, within-frame
//! success profiles, the two-unknown fixed point tying them together, and
//! the closed-form network-wide average age.

pub mod chain;

pub use chain::{success_profile_above, success_profile_at, state_vectors, transition_row, TaggedStart};

use serde::Serialize;
use thiserror::Error;

use crate::model::{AccessPolicy, ProtocolConfig, SUCCESS_FLOOR};

/// Model-level failures.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ModelError {
    /// The per-frame success probability from above the threshold collapsed
    /// (below `SUCCESS_FLOOR`): no recurrent success, unbounded average age.
    #[error("degenerate chain: per-frame success probability vanishes, average age is unbounded")]
    DegenerateChain,
    #[error("fixed point did not converge: residual {residual:e} after {iterations} iterations")]
    NonConvergence { residual: f64, iterations: u32 },
}

impl ModelError {
    /// Stable identifier used in CLI error records.
    pub fn name(&self) -> &'static str {
        match self {
            ModelError::DegenerateChain => "DegenerateChain",
            ModelError::NonConvergence { .. } => "NonConvergence",
        }
    }
}

/// Steady-state distribution of the tagged device's age at frame starts.
/// The age at a frame start is always a whole number of frames; `pi(l)` is
/// the stationary probability of starting a frame at age `l` frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteadyState {
    /// Per-frame success probability from the threshold age.
    pub beta_at: f64,
    /// Per-frame success probability from above the threshold age.
    pub beta_above: f64,
    /// Whole frames in the age threshold.
    pub threshold_frames: u32,
    /// Balance normalizer `threshold_frames + (1 - beta_at) / beta_above`.
    pub normalizer: f64,
}

impl SteadyState {
    /// Builds the steady state from the two per-frame success probabilities.
    /// Fails when success from above the threshold is effectively impossible,
    /// since then no stationary distribution exists.
    pub fn new(beta_at: f64, beta_above: f64, threshold_frames: u32) -> Result<Self, ModelError> {
        debug_assert!((0.0..=1.0 + 1e-9).contains(&beta_at));
        debug_assert!(beta_above <= 1.0 + 1e-9);
        if !(beta_above >= SUCCESS_FLOOR) {
            return Err(ModelError::DegenerateChain);
        }
        let normalizer = f64::from(threshold_frames) + (1.0 - beta_at) / beta_above;
        Ok(SteadyState {
            beta_at,
            beta_above,
            threshold_frames,
            normalizer,
        })
    }

    /// Stationary probability of frame-start age `l` frames (`l >= 1`;
    /// age 0 is transient and carries no stationary mass).
    ///
    /// States up to the threshold share mass `1/normalizer`; past it the
    /// mass decays geometrically at rate `1 - beta_above`. With a zero-frame
    /// threshold the whole distribution is geometric in `beta_above`.
    pub fn pi(&self, l: u64) -> f64 {
        if l == 0 {
            return 0.0;
        }
        let lam = u64::from(self.threshold_frames);
        if lam == 0 {
            return self.beta_above * (1.0 - self.beta_above).powf((l - 1) as f64);
        }
        if l <= lam {
            1.0 / self.normalizer
        } else if l == lam + 1 {
            (1.0 - self.beta_at) / self.normalizer
        } else {
            (1.0 - self.beta_at) * (1.0 - self.beta_above).powf((l - lam - 1) as f64)
                / self.normalizer
        }
    }
}

/// Stationary mass of a rival device's frame-start age relative to the
/// threshold: strictly below it, exactly at it, strictly above it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupSplit {
    pub below: f64,
    pub at: f64,
    pub above: f64,
}

/// Splits the steady state into the three age groups a rival can occupy at
/// a frame start. With a zero-frame threshold every recurrent state lies
/// above the threshold.
pub fn group_split(steady: &SteadyState) -> GroupSplit {
    let lam = steady.threshold_frames;
    if lam == 0 {
        return GroupSplit {
            below: 0.0,
            at: 0.0,
            above: 1.0,
        };
    }
    let z = steady.normalizer;
    GroupSplit {
        below: f64::from(lam - 1) / z,
        at: 1.0 / z,
        above: (1.0 - steady.beta_at) / (steady.beta_above * z),
    }
}

/// Joint law of the rival counts at a frame start: entry `(s1, s2)` is the
/// probability that `s1` of the `n_devices - 1` rivals sit exactly at the
/// threshold age and `s2` above it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointPmf {
    rows: Vec<Vec<f64>>,
}

impl JointPmf {
    pub fn chi(&self, s1: usize, s2: usize) -> f64 {
        self.rows
            .get(s1)
            .and_then(|row| row.get(s2).copied())
            .unwrap_or(0.0)
    }

    /// Number of rivals the law is over.
    pub fn n_rivals(&self) -> usize {
        self.rows.len().saturating_sub(1)
    }

    pub fn total_mass(&self) -> f64 {
        self.rows.iter().flatten().sum()
    }
}

/// Multinomial law of the rival group counts under the given split.
pub fn joint_pmf(split: &GroupSplit, n_devices: u32) -> JointPmf {
    let n = n_devices.saturating_sub(1) as usize;
    let lnf = ln_factorials(n);
    let mut rows = Vec::with_capacity(n + 1);
    for s1 in 0..=n {
        let mut row = Vec::with_capacity(n - s1 + 1);
        for s2 in 0..=(n - s1) {
            row.push(multinomial_mass(split, n, s1, s2, &lnf));
        }
        rows.push(row);
    }
    JointPmf { rows }
}

fn ln_factorials(n: usize) -> Vec<f64> {
    // compensated summation keeps ln(n!) accurate enough for 1e-12 mass checks
    let mut lnf = Vec::with_capacity(n + 1);
    let mut sum = 0.0;
    let mut carry = 0.0;
    lnf.push(0.0);
    for k in 1..=n {
        let term = (k as f64).ln() - carry;
        let next = sum + term;
        carry = (next - sum) - term;
        sum = next;
        lnf.push(sum);
    }
    lnf
}

fn multinomial_mass(split: &GroupSplit, n: usize, s1: usize, s2: usize, lnf: &[f64]) -> f64 {
    let rem = n - s1 - s2;
    // zero-probability groups must carry zero draws; 0^0 counts as 1
    if (s1 > 0 && split.at <= 0.0) || (s2 > 0 && split.above <= 0.0) || (rem > 0 && split.below <= 0.0)
    {
        return 0.0;
    }
    let mut ln = lnf[n] - lnf[s1] - lnf[s2] - lnf[rem];
    if s1 > 0 {
        ln += s1 as f64 * split.at.ln();
    }
    if s2 > 0 {
        ln += s2 as f64 * split.above.ln();
    }
    if rem > 0 {
        ln += rem as f64 * split.below.ln();
    }
    ln.exp()
}

/// Success profile of the tagged device averaged over the rival law: per-slot
/// success probabilities for frames started at and above the threshold age,
/// plus their per-frame totals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuccessProfile {
    pub alpha_at: Vec<f64>,
    pub alpha_above: Vec<f64>,
    pub beta_at: f64,
    pub beta_above: f64,
}

/// Averages the per-rival-count success profiles under the given joint law.
pub fn aggregate_profiles(chi: &JointPmf, config: &ProtocolConfig) -> SuccessProfile {
    let table = PairProfiles::compute(config.n_devices, config.frame_len, config.threshold_offset(), config.policy);
    let weights: Vec<f64> = table
        .pairs
        .iter()
        .map(|&(s1, s2)| chi.chi(s1 as usize, s2 as usize))
        .collect();
    table.aggregate(&weights)
}

/// Per-rival-count success profiles for one `(population, frame length,
/// threshold offset, policy)` tuple, in a fixed pair order. The expensive
/// part of a model evaluation; independent of the threshold's whole-frame
/// part, so a threshold sweep can reuse one table per offset.
pub struct PairProfiles {
    n_devices: u32,
    frame_len: u32,
    /// `(s1, s2)` rival counts, s1-major.
    pairs: Vec<(u32, u32)>,
    /// ln of the multinomial coefficient for each pair.
    ln_coeff: Vec<f64>,
    /// Per-pair per-slot success probabilities, pair-major.
    alpha_at: Vec<f64>,
    alpha_above: Vec<f64>,
    /// Per-pair per-frame success probabilities.
    beta_at: Vec<f64>,
    beta_above: Vec<f64>,
}

impl PairProfiles {
    pub fn compute(n_devices: u32, frame_len: u32, threshold_offset: u32, policy: AccessPolicy) -> Self {
        let n = n_devices.saturating_sub(1) as usize;
        let d = frame_len as usize;
        let lnf = ln_factorials(n);
        let solo = chain::solo_table(n + 1, policy);
        let n_pairs = (n + 1) * (n + 2) / 2;

        let mut pairs = Vec::with_capacity(n_pairs);
        let mut ln_coeff = Vec::with_capacity(n_pairs);
        let mut alpha_at = vec![0.0; n_pairs * d];
        let mut alpha_above = vec![0.0; n_pairs * d];
        let mut beta_at = Vec::with_capacity(n_pairs);
        let mut beta_above = Vec::with_capacity(n_pairs);
        let mut scratch = vec![0.0; n + 2];

        let mut idx = 0;
        for s1 in 0..=n {
            for s2 in 0..=(n - s1) {
                pairs.push((s1 as u32, s2 as u32));
                ln_coeff.push(lnf[n] - lnf[s1] - lnf[s2] - lnf[n - s1 - s2]);
                let span = idx * d..(idx + 1) * d;
                chain::fill_profile(
                    TaggedStart::AtThreshold,
                    s1,
                    s2,
                    frame_len,
                    threshold_offset,
                    &solo,
                    &mut scratch[..s1 + s2 + 2],
                    &mut alpha_at[span.clone()],
                );
                beta_at.push(alpha_at[span.clone()].iter().sum());
                chain::fill_profile(
                    TaggedStart::Above,
                    s1,
                    s2,
                    frame_len,
                    threshold_offset,
                    &solo,
                    &mut scratch[..s1 + s2 + 2],
                    &mut alpha_above[span.clone()],
                );
                beta_above.push(alpha_above[span].iter().sum());
                idx += 1;
            }
        }
        PairProfiles {
            n_devices,
            frame_len,
            pairs,
            ln_coeff,
            alpha_at,
            alpha_above,
            beta_at,
            beta_above,
        }
    }

    pub fn for_config(config: &ProtocolConfig) -> Self {
        Self::compute(config.n_devices, config.frame_len, config.threshold_offset(), config.policy)
    }

    /// Rival-law weights for the given split, in pair order.
    fn fill_weights(&self, split: &GroupSplit, out: &mut [f64]) {
        let n = self.n_devices.saturating_sub(1) as usize;
        let ln_at = if split.at > 0.0 { split.at.ln() } else { 0.0 };
        let ln_above = if split.above > 0.0 { split.above.ln() } else { 0.0 };
        let ln_below = if split.below > 0.0 { split.below.ln() } else { 0.0 };
        for (idx, &(s1, s2)) in self.pairs.iter().enumerate() {
            let (s1, s2) = (s1 as usize, s2 as usize);
            let rem = n - s1 - s2;
            if (s1 > 0 && split.at <= 0.0)
                || (s2 > 0 && split.above <= 0.0)
                || (rem > 0 && split.below <= 0.0)
            {
                out[idx] = 0.0;
                continue;
            }
            let ln = self.ln_coeff[idx]
                + s1 as f64 * ln_at
                + s2 as f64 * ln_above
                + rem as f64 * ln_below;
            out[idx] = ln.exp();
        }
    }

    fn weighted_betas(&self, weights: &[f64]) -> (f64, f64) {
        let mut at = 0.0;
        let mut above = 0.0;
        for idx in 0..weights.len() {
            at += weights[idx] * self.beta_at[idx];
            above += weights[idx] * self.beta_above[idx];
        }
        (at, above)
    }

    fn aggregate(&self, weights: &[f64]) -> SuccessProfile {
        let d = self.frame_len as usize;
        let mut alpha_at = vec![0.0; d];
        let mut alpha_above = vec![0.0; d];
        for (idx, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for h in 0..d {
                alpha_at[h] += w * self.alpha_at[idx * d + h];
                alpha_above[h] += w * self.alpha_above[idx * d + h];
            }
        }
        let (beta_at, beta_above) = self.weighted_betas(weights);
        SuccessProfile {
            alpha_at,
            alpha_above,
            beta_at,
            beta_above,
        }
    }

    /// One evaluation of the fixed-point map: success probabilities induced
    /// by rivals whose frame-start ages follow the steady state of `x`.
    fn map(
        &self,
        x: (f64, f64),
        threshold_frames: u32,
        weights: &mut [f64],
    ) -> Result<(f64, f64), ModelError> {
        let steady = SteadyState::new(x.0, x.1, threshold_frames)?;
        let split = group_split(&steady);
        self.fill_weights(&split, weights);
        let (f_at, f_above) = self.weighted_betas(weights);
        if f_above < SUCCESS_FLOOR {
            // the map collapsed: success from above the threshold vanishes
            return Err(ModelError::DegenerateChain);
        }
        Ok((f_at, f_above))
    }

    /// Damped fixed-point iteration on the two per-frame success
    /// probabilities for a threshold of `threshold_frames` whole frames plus
    /// this table's slot offset.
    pub fn solve(&self, threshold_frames: u32, options: &SolverOptions) -> Result<FixedPointSolution, ModelError> {
        let mut x = options.init;
        let mut weights = vec![0.0; self.pairs.len()];
        let mut residual = f64::INFINITY;
        for iteration in 1..=options.max_iters {
            let f = self.map(x, threshold_frames, &mut weights)?;
            residual = (f.0 - x.0).abs().max((f.1 - x.1).abs());
            if residual <= options.tol {
                // Polish: the image of a converged point is at least as
                // self-consistent for a contractive map and is exact for
                // constant maps (single device, zero-frame threshold).
                if let Ok(ff) = self.map(f, threshold_frames, &mut weights) {
                    let polished = (ff.0 - f.0).abs().max((ff.1 - f.1).abs());
                    if polished <= residual {
                        return Ok(FixedPointSolution {
                            steady: SteadyState::new(f.0, f.1, threshold_frames)?,
                            profile: self.aggregate(&weights),
                            residual: polished,
                            iterations: iteration + 1,
                        });
                    }
                }
                let steady = SteadyState::new(x.0, x.1, threshold_frames)?;
                let split = group_split(&steady);
                self.fill_weights(&split, &mut weights);
                return Ok(FixedPointSolution {
                    steady,
                    profile: self.aggregate(&weights),
                    residual,
                    iterations: iteration,
                });
            }
            x.0 += options.damping * (f.0 - x.0);
            x.1 += options.damping * (f.1 - x.1);
        }
        Err(ModelError::NonConvergence {
            residual,
            iterations: options.max_iters,
        })
    }
}

/// Fixed-point solver settings. The iteration is plain damped Picard:
/// `x <- x + damping * (F(x) - x)` from `init`, stopping when the larger of
/// the two absolute self-consistency gaps falls below `tol`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iters: u32,
    pub damping: f64,
    pub init: (f64, f64),
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_iters: 10_000,
            damping: 0.5,
            init: (0.5, 0.5),
        }
    }
}

/// A converged fixed point: self-consistent steady state and success profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointSolution {
    pub steady: SteadyState,
    pub profile: SuccessProfile,
    /// Self-consistency gap of the returned point.
    pub residual: f64,
    /// Fixed-point map evaluations performed.
    pub iterations: u32,
}

/// Converged model solution with the network-wide average age attached.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticSolution {
    pub steady: SteadyState,
    pub profile: SuccessProfile,
    /// Time-average age of an arbitrary device, in slots.
    pub avg_aoi: f64,
    pub residual: f64,
    pub iterations: u32,
}

/// Solves the two-unknown fixed point for the given configuration.
pub fn solve_fixed_point(
    config: &ProtocolConfig,
    options: &SolverOptions,
) -> Result<FixedPointSolution, ModelError> {
    PairProfiles::for_config(config).solve(config.threshold_frames(), options)
}

/// Network-wide time-average age of a converged solution, in slots.
///
/// A frame started at age `l` frames contributes `l*(h+1) + (D-1)/2` when
/// the update goes out in slot `h` and `l*D + (D-1)/2` when it does not; the
/// geometric tail over `l` is folded in closed form.
pub fn average_aoi(config: &ProtocolConfig, solution: &FixedPointSolution) -> f64 {
    let d = f64::from(config.frame_len);
    let lam = solution.steady.threshold_frames;
    let beta_at = solution.steady.beta_at;
    let beta_above = solution.steady.beta_above;
    let half = (d - 1.0) / 2.0;
    let moment_above: f64 = solution
        .profile
        .alpha_above
        .iter()
        .enumerate()
        .map(|(h, a)| a * (h as f64 + 1.0))
        .sum();
    // per-frame contribution slope of a frame started above the threshold
    let slope = moment_above + (1.0 - beta_above) * d;

    if lam == 0 {
        return slope / beta_above + half;
    }

    let z = solution.steady.normalizer;
    let lam_f = f64::from(lam);
    let moment_at: f64 = solution
        .profile
        .alpha_at
        .iter()
        .enumerate()
        .map(|(h, a)| a * (h as f64 + 1.0))
        .sum();

    // ages strictly below the threshold: silent frames
    let below = if lam >= 2 {
        (d * (lam_f - 1.0) * lam_f / 2.0 + (lam_f - 1.0) * half) / z
    } else {
        0.0
    };
    // the threshold state itself
    let at = (lam_f * moment_at + (1.0 - beta_at) * lam_f * d + half) / z;
    // geometric tail above the threshold, via its zeroth and first moments
    let tail_mass = (1.0 - beta_at) / (beta_above * z);
    let tail_first = (1.0 - beta_at) / z
        * ((lam_f + 1.0) / beta_above + (1.0 - beta_above) / (beta_above * beta_above));
    let above = slope * tail_first + half * tail_mass;

    below + at + above
}

/// Reference evaluation of the average age by direct summation over
/// frame-start ages, truncated once the exact geometric remainder is below
/// `1e-12` of the running total. Cross-checks the closed form.
pub fn average_aoi_by_summation(config: &ProtocolConfig, solution: &FixedPointSolution) -> f64 {
    let d = f64::from(config.frame_len);
    let lam = u64::from(solution.steady.threshold_frames);
    let beta_at = solution.steady.beta_at;
    let beta_above = solution.steady.beta_above;
    let half = (d - 1.0) / 2.0;
    let moment_at: f64 = solution
        .profile
        .alpha_at
        .iter()
        .enumerate()
        .map(|(h, a)| a * (h as f64 + 1.0))
        .sum();
    let moment_above: f64 = solution
        .profile
        .alpha_above
        .iter()
        .enumerate()
        .map(|(h, a)| a * (h as f64 + 1.0))
        .sum();
    let slope = moment_above + (1.0 - beta_above) * d;
    let decay = 1.0 - beta_above;

    let mut acc = 0.0;
    let mut l = 1u64;
    loop {
        let pi = solution.steady.pi(l);
        let lf = l as f64;
        let term = if l < lam {
            pi * (lf * d + half)
        } else if l == lam {
            pi * (lf * moment_at + (1.0 - beta_at) * lf * d + half)
        } else {
            pi * (lf * slope + half)
        };
        acc += term;
        if l > lam {
            // exact remainder of the geometric tail past l
            let ratio = decay / beta_above;
            let remainder = pi
                * (slope * (lf * ratio + decay / (beta_above * beta_above))
                    + half * ratio);
            if remainder <= 1e-12 * acc || l > lam + 100_000_000 {
                break;
            }
        }
        l += 1;
    }
    acc
}

/// Full model evaluation: fixed point plus average age.
pub fn analyze(config: &ProtocolConfig, options: &SolverOptions) -> Result<AnalyticSolution, ModelError> {
    let fixed_point = solve_fixed_point(config, options)?;
    let avg_aoi = average_aoi(config, &fixed_point);
    Ok(AnalyticSolution {
        avg_aoi,
        steady: fixed_point.steady,
        profile: fixed_point.profile,
        residual: fixed_point.residual,
        iterations: fixed_point.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AccessPolicy;

    fn cfg(n: u32, d: u32, delta: u32, policy: AccessPolicy) -> ProtocolConfig {
        ProtocolConfig::new(n, d, delta, policy).unwrap()
    }

    fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
        assert!((a - b).abs() <= tol, "{what}: {a} vs {b}");
    }

    #[test]
    fn steady_state_hand_values() {
        let s = SteadyState::new(0.5, 0.5, 1).unwrap();
        assert_eq!(s.normalizer, 2.0);
        assert_eq!(s.pi(1), 0.5);
        assert_eq!(s.pi(2), 0.25);
        assert_eq!(s.pi(3), 0.125);
        assert_eq!(s.pi(0), 0.0);

        // certain success at the threshold concentrates all mass there
        let s = SteadyState::new(1.0, 0.7, 1).unwrap();
        assert_eq!(s.normalizer, 1.0);
        assert_eq!(s.pi(1), 1.0);
        assert_eq!(s.pi(2), 0.0);

        // zero-frame threshold: geometric law
        let s = SteadyState::new(0.9, 0.3, 0).unwrap();
        for l in 1..=20u64 {
            let expect = 0.3 * 0.7f64.powi(l as i32 - 1);
            assert_close(s.pi(l), expect, 1e-15, "geometric pi");
        }
    }

    #[test]
    fn steady_state_rejects_vanishing_success() {
        assert_eq!(SteadyState::new(0.5, 0.0, 1), Err(ModelError::DegenerateChain));
        assert_eq!(SteadyState::new(0.5, 1e-13, 0), Err(ModelError::DegenerateChain));
    }

    #[test]
    fn steady_state_mass_sums_to_one() {
        for (beta_at, beta_above, lam) in
            [(0.5, 0.5, 1), (0.2, 0.7, 4), (1.0, 0.5, 2), (0.3, 0.9, 0), (0.0, 0.4, 3)]
        {
            let s = SteadyState::new(beta_at, beta_above, lam).unwrap();
            let numeric: f64 = (1..2000).map(|l| s.pi(l)).sum();
            assert_close(numeric, 1.0, 1e-12, "sum pi");
            let split = group_split(&s);
            assert_close(split.below + split.at + split.above, 1.0, 1e-12, "split sum");
        }
    }

    #[test]
    fn group_split_hand_values() {
        let s = SteadyState::new(0.5, 0.5, 1).unwrap();
        let g = group_split(&s);
        assert_eq!((g.below, g.at, g.above), (0.0, 0.5, 0.5));

        let s = SteadyState::new(0.4, 0.3, 0).unwrap();
        let g = group_split(&s);
        assert_eq!((g.below, g.at, g.above), (0.0, 0.0, 1.0));

        let s = SteadyState::new(1.0, 0.5, 2).unwrap();
        let g = group_split(&s);
        assert_eq!((g.below, g.at, g.above), (0.5, 0.5, 0.0));
    }

    #[test]
    fn joint_pmf_small_cases() {
        let split = GroupSplit { below: 0.0, at: 0.5, above: 0.5 };
        let chi = joint_pmf(&split, 2);
        assert_close(chi.chi(1, 0), 0.5, 1e-15, "chi(1,0)");
        assert_close(chi.chi(0, 1), 0.5, 1e-15, "chi(0,1)");
        assert_eq!(chi.chi(0, 0), 0.0);

        let chi = joint_pmf(&split, 1);
        assert_eq!(chi.chi(0, 0), 1.0);
        assert_close(chi.total_mass(), 1.0, 1e-12, "mass N=1");

        let split = GroupSplit { below: 0.0, at: 0.0, above: 1.0 };
        let chi = joint_pmf(&split, 3);
        assert_eq!(chi.chi(0, 2), 1.0);
        assert_close(chi.total_mass(), 1.0, 1e-12, "point mass");
    }

    #[test]
    fn joint_pmf_mass_and_range() {
        for n in [2u32, 5, 20, 40, 120] {
            let split = GroupSplit { below: 0.35, at: 0.2, above: 0.45 };
            let chi = joint_pmf(&split, n);
            assert_close(chi.total_mass(), 1.0, 1e-12, "mass");
            for s1 in 0..n as usize {
                for s2 in 0..(n as usize - s1) {
                    let x = chi.chi(s1, s2);
                    assert!((0.0..=1.0).contains(&x));
                }
            }
        }
    }

    #[test]
    fn aggregation_is_linear_in_the_weights() {
        let c = cfg(2, 4, 6, AccessPolicy::Fixed(0.4));
        let split = GroupSplit { below: 0.0, at: 0.5, above: 0.5 };
        let chi = joint_pmf(&split, 2);
        let profile = aggregate_profiles(&chi, &c);
        let at_10 = success_profile_at(1, 0, &c);
        let at_01 = success_profile_at(0, 1, &c);
        for h in 0..4 {
            let expect = 0.5 * at_10[h] + 0.5 * at_01[h];
            assert_close(profile.alpha_at[h], expect, 1e-15, "mixture");
        }

        // single device: profile equals the lone-pair profile
        let c1 = cfg(1, 4, 6, AccessPolicy::Fixed(0.4));
        let chi1 = joint_pmf(&split, 1);
        let profile1 = aggregate_profiles(&chi1, &c1);
        assert_eq!(profile1.alpha_at, success_profile_at(0, 0, &c1));
        assert_eq!(profile1.alpha_above, success_profile_above(0, 0, &c1));

        // a point-mass law picks out exactly one pair profile
        let c3 = cfg(3, 4, 6, AccessPolicy::Fixed(0.4));
        let all_above = GroupSplit { below: 0.0, at: 0.0, above: 1.0 };
        let chi3 = joint_pmf(&all_above, 3);
        let profile3 = aggregate_profiles(&chi3, &c3);
        assert_eq!(profile3.alpha_above, success_profile_above(0, 2, &c3));
        assert_eq!(profile3.alpha_at, success_profile_at(0, 2, &c3));
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let c = cfg(20, 10, 47, AccessPolicy::Adaptive);
        let opts = SolverOptions { max_iters: 3, ..SolverOptions::default() };
        match solve_fixed_point(&c, &opts) {
            Err(ModelError::NonConvergence { residual, iterations }) => {
                assert_eq!(iterations, 3);
                assert!(residual > opts.tol);
            }
            other => panic!("expected NonConvergence, got {other:?}"),
        }
    }

    #[test]
    fn lone_device_fixed_point_closed_form() {
        for (d, delta, p) in [(10u32, 0u32, 0.3), (10, 25, 0.8), (7, 7, 0.5), (1, 3, 0.6)] {
            let c = cfg(1, d, delta, AccessPolicy::Fixed(p));
            let fp = solve_fixed_point(&c, &SolverOptions::default()).unwrap();
            let offset = c.threshold_offset();
            let expect_at = 1.0 - (1.0 - p).powi((d - offset) as i32);
            let expect_above = 1.0 - (1.0 - p).powi(d as i32);
            assert_close(fp.steady.beta_at, expect_at, 1e-10, "lone beta_at");
            assert_close(fp.steady.beta_above, expect_above, 1e-10, "lone beta_above");
            assert!(fp.residual <= 1e-10);
        }
    }

    #[test]
    fn zero_threshold_equalizes_the_two_betas() {
        let c = cfg(12, 6, 0, AccessPolicy::Fixed(0.15));
        let fp = solve_fixed_point(&c, &SolverOptions::default()).unwrap();
        assert_close(fp.steady.beta_at, fp.steady.beta_above, 1e-10, "betas");
        // geometric steady state (independent per-frame success)
        let beta = fp.steady.beta_above;
        for l in 1..=30u64 {
            let expect = beta * (1.0 - beta).powi(l as i32 - 1);
            assert_close(fp.steady.pi(l), expect, 1e-10, "geometric reduction");
        }
    }

    #[test]
    fn unit_frame_reduces_to_single_slot_model() {
        // With one-slot frames the per-frame success probability solves
        // beta = p * (1 - p * mass_at_or_above)^(N-1).
        for (n, delta, p) in [(2u32, 0u32, 0.5), (5, 2, 0.3), (10, 4, 0.2)] {
            let c = cfg(n, 1, delta, AccessPolicy::Fixed(p));
            let fp = solve_fixed_point(&c, &SolverOptions::default()).unwrap();
            let split = group_split(&fp.steady);
            let expect = p * (1.0 - p * (split.at + split.above)).powi(n as i32 - 1);
            assert_close(fp.steady.beta_at, expect, 1e-10, "single-slot beta_at");
            assert_close(fp.steady.beta_above, expect, 1e-10, "single-slot beta_above");
        }
    }

    #[test]
    fn certain_collision_is_degenerate() {
        let c = cfg(2, 10, 0, AccessPolicy::Fixed(1.0));
        assert_eq!(
            solve_fixed_point(&c, &SolverOptions::default()).unwrap_err(),
            ModelError::DegenerateChain
        );
    }

    #[test]
    fn lone_device_certain_success_aoi() {
        for d in [1u32, 10, 30] {
            let c = cfg(1, d, 0, AccessPolicy::Fixed(1.0));
            let sol = analyze(&c, &SolverOptions::default()).unwrap();
            assert_eq!(sol.avg_aoi, f64::from(d + 1) / 2.0);
        }
    }

    #[test]
    fn lone_device_with_threshold_aoi() {
        // Deterministic cycle: silent for lam-1 frames, then delivery at the
        // offset slot; time-average age has a closed form.
        for (d, delta) in [(5u32, 7u32), (10, 25), (4, 12)] {
            let c = cfg(1, d, delta, AccessPolicy::Adaptive);
            let sol = analyze(&c, &SolverOptions::default()).unwrap();
            let (lam, offset) = (f64::from(c.threshold_frames()), f64::from(c.threshold_offset()));
            let expect = f64::from(d) * (lam - 1.0).max(0.0) / 2.0
                + (f64::from(d) - 1.0) / 2.0
                + offset
                + 1.0;
            assert_close(sol.avg_aoi, expect, 1e-12, "lone threshold cycle");
        }
    }

    #[test]
    fn closed_form_matches_direct_summation() {
        let cases = [
            cfg(8, 5, 0, AccessPolicy::Fixed(0.2)),
            cfg(8, 5, 13, AccessPolicy::Fixed(0.2)),
            cfg(20, 10, 40, AccessPolicy::Adaptive),
            cfg(3, 7, 22, AccessPolicy::Adaptive),
            cfg(5, 4, 2, AccessPolicy::Fixed(0.9)),
        ];
        for c in cases {
            let fp = solve_fixed_point(&c, &SolverOptions::default()).unwrap();
            let closed = average_aoi(&c, &fp);
            let summed = average_aoi_by_summation(&c, &fp);
            assert!(
                (closed - summed).abs() <= 1e-9 * summed.abs(),
                "closed {closed} vs summed {summed} for {c:?}"
            );
        }
    }

    #[test]
    fn average_aoi_never_beats_the_floor() {
        for c in [
            cfg(4, 6, 9, AccessPolicy::Fixed(0.35)),
            cfg(2, 3, 0, AccessPolicy::Adaptive),
            cfg(15, 8, 31, AccessPolicy::Adaptive),
        ] {
            let sol = analyze(&c, &SolverOptions::default()).unwrap();
            assert!(sol.avg_aoi >= f64::from(c.frame_len + 1) / 2.0 - 1e-12);
        }
    }

    #[test]
    fn returned_point_is_self_consistent() {
        let c = cfg(20, 10, 47, AccessPolicy::Adaptive);
        let fp = solve_fixed_point(&c, &SolverOptions::default()).unwrap();
        // feed the solution back through one evaluation of the map
        let split = group_split(&fp.steady);
        let chi = joint_pmf(&split, c.n_devices);
        let profile = aggregate_profiles(&chi, &c);
        assert_close(profile.beta_at, fp.steady.beta_at, 1e-10, "beta_at replay");
        assert_close(profile.beta_above, fp.steady.beta_above, 1e-10, "beta_above replay");
        assert!(fp.profile.alpha_at[..c.threshold_offset() as usize]
            .iter()
            .all(|&a| a == 0.0));
    }
}
