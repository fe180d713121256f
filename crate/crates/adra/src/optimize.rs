//! Exhaustive grid searches for the age threshold (and fixed transmit
//! probability) minimizing the analytic average age, and the improvement of
//! the tuned threshold over the zero-threshold baseline.

use serde::Serialize;
use thiserror::Error;

use crate::analytic::{average_aoi, PairProfiles, SolverOptions};
use crate::model::{AccessPolicy, ProtocolConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum OptimizeError {
    /// Every grid point was degenerate or failed to converge.
    #[error("no grid point produced a convergent model")]
    AllDegenerate,
    #[error("probability grid must be non-empty with finite entries in (0, 1]")]
    InvalidProbabilityGrid,
}

/// One evaluated grid point; `aoi` is NaN where the model is degenerate or
/// did not converge (such points are skipped by the argmin).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub delta: u32,
    /// Fixed transmit probability; absent under the adaptive policy.
    pub p: Option<f64>,
    pub aoi: f64,
}

/// Outcome of a grid search. The curve covers every requested point in
/// threshold-major, probability-minor order; ties go to the smaller
/// threshold, then the smaller probability.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult {
    pub best_delta: u32,
    pub best_p: Option<f64>,
    pub best_aoi: f64,
    pub curve: Vec<CurvePoint>,
}

/// Default threshold-grid ceiling: three round-trips of the whole population.
pub fn default_delta_max(n_devices: u32, frame_len: u32) -> u32 {
    3 * n_devices * frame_len
}

/// Default probability grid: fine steps where the collision-limited optimum
/// lives, coarse steps up to 1.
pub fn default_p_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = (1..=20).map(|k| f64::from(k) / 100.0).collect();
    grid.extend((5..=20).map(|k| f64::from(k) / 20.0));
    grid
}

/// Average-age curve over thresholds `0..=delta_max` for one policy; NaN
/// marks skipped points. Per-rival-count profiles depend on the threshold
/// only through its slot offset, so one table per offset serves the whole
/// column of whole-frame values.
fn delta_curve(
    n_devices: u32,
    frame_len: u32,
    delta_max: u32,
    policy: AccessPolicy,
    options: &SolverOptions,
) -> Vec<f64> {
    let mut out = vec![f64::NAN; delta_max as usize + 1];
    for offset in 0..frame_len.min(delta_max + 1) {
        let table = PairProfiles::compute(n_devices, frame_len, offset, policy);
        let mut frames = 0u32;
        loop {
            let delta = match frames.checked_mul(frame_len).and_then(|x| x.checked_add(offset)) {
                Some(d) if d <= delta_max => d,
                _ => break,
            };
            if let Ok(fp) = table.solve(frames, options) {
                let config = ProtocolConfig {
                    n_devices,
                    frame_len,
                    age_threshold: delta,
                    policy,
                };
                out[delta as usize] = average_aoi(&config, &fp);
            }
            frames += 1;
        }
    }
    out
}

fn best_point(curve: &[CurvePoint]) -> Result<(u32, Option<f64>, f64), OptimizeError> {
    let mut best: Option<(u32, Option<f64>, f64)> = None;
    for point in curve {
        if point.aoi.is_nan() {
            continue;
        }
        if best.map_or(true, |(_, _, aoi)| point.aoi < aoi) {
            best = Some((point.delta, point.p, point.aoi));
        }
    }
    best.ok_or(OptimizeError::AllDegenerate)
}

/// One-dimensional threshold search under the template's policy.
pub fn optimize_delta(template: &ProtocolConfig, delta_max: u32) -> Result<SearchResult, OptimizeError> {
    optimize_delta_with(template, delta_max, &SolverOptions::default())
}

pub fn optimize_delta_with(
    template: &ProtocolConfig,
    delta_max: u32,
    options: &SolverOptions,
) -> Result<SearchResult, OptimizeError> {
    let p = match template.policy {
        AccessPolicy::Fixed(p) => Some(p),
        AccessPolicy::Adaptive => None,
    };
    let aois = delta_curve(template.n_devices, template.frame_len, delta_max, template.policy, options);
    let curve: Vec<CurvePoint> = aois
        .iter()
        .enumerate()
        .map(|(delta, &aoi)| CurvePoint { delta: delta as u32, p, aoi })
        .collect();
    let (best_delta, best_p, best_aoi) = best_point(&curve)?;
    Ok(SearchResult { best_delta, best_p, best_aoi, curve })
}

/// Joint search over thresholds `0..=delta_max` and the probability grid.
/// The grid is evaluated in ascending order after sorting and deduplication.
pub fn optimize_joint(
    template: &ProtocolConfig,
    delta_max: u32,
    p_grid: &[f64],
) -> Result<SearchResult, OptimizeError> {
    optimize_joint_with(template, delta_max, p_grid, &SolverOptions::default())
}

pub fn optimize_joint_with(
    template: &ProtocolConfig,
    delta_max: u32,
    p_grid: &[f64],
    options: &SolverOptions,
) -> Result<SearchResult, OptimizeError> {
    let grid = sanitize_p_grid(p_grid)?;
    let columns: Vec<Vec<f64>> = grid
        .iter()
        .map(|&p| {
            delta_curve(
                template.n_devices,
                template.frame_len,
                delta_max,
                AccessPolicy::Fixed(p),
                options,
            )
        })
        .collect();
    let mut curve = Vec::with_capacity((delta_max as usize + 1) * grid.len());
    for delta in 0..=delta_max {
        for (pi, &p) in grid.iter().enumerate() {
            curve.push(CurvePoint {
                delta,
                p: Some(p),
                aoi: columns[pi][delta as usize],
            });
        }
    }
    let (best_delta, best_p, best_aoi) = best_point(&curve)?;
    Ok(SearchResult { best_delta, best_p, best_aoi, curve })
}

fn sanitize_p_grid(p_grid: &[f64]) -> Result<Vec<f64>, OptimizeError> {
    if p_grid.is_empty() || p_grid.iter().any(|&p| !p.is_finite() || p <= 0.0 || p > 1.0) {
        return Err(OptimizeError::InvalidProbabilityGrid);
    }
    let mut grid = p_grid.to_vec();
    grid.sort_by(|a, b| a.total_cmp(b));
    grid.dedup();
    Ok(grid)
}

/// A tuned configuration against its zero-threshold baseline of the same
/// policy class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AiraComparison {
    /// Relative age reduction `(baseline - tuned) / baseline`; non-negative,
    /// since the tuned search space contains the baseline grid.
    pub improvement: f64,
    pub aira_aoi: f64,
    /// Probability chosen for the baseline (fixed class only).
    pub aira_p: Option<f64>,
    pub adra: SearchResult,
}

/// Optimizes the threshold (jointly with the probability for the fixed
/// class) and reports the improvement over the best zero-threshold
/// configuration of the same class.
pub fn compare_to_aira(
    template: &ProtocolConfig,
    delta_max: u32,
    p_grid: &[f64],
) -> Result<AiraComparison, OptimizeError> {
    let (aira, adra) = match template.policy {
        AccessPolicy::Adaptive => (
            optimize_delta(template, 0)?,
            optimize_delta(template, delta_max)?,
        ),
        AccessPolicy::Fixed(_) => (
            optimize_joint(template, 0, p_grid)?,
            optimize_joint(template, delta_max, p_grid)?,
        ),
    };
    let improvement = (aira.best_aoi - adra.best_aoi) / aira.best_aoi;
    Ok(AiraComparison {
        improvement,
        aira_aoi: aira.best_aoi,
        aira_p: aira.best_p,
        adra,
    })
}
