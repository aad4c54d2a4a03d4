//! Coarse-to-fine pairwise registration.
//!
//! Each level warps the original (downsampled) source by the accumulated
//! field, solves one inner increment, and composes it onto the total:
//! `total <- compose(total, increment)`. A level ends after `n_warp` warps,
//! when the relative change of `|I1w - I0|^2` drops below `difference`, or
//! when a step would make the alignment worse than the previous one.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::flow::{admm_solve_increment, HsParams};
use crate::grid::{compose, downsample, level_dims, upsample_flow, warp_bilinear, FlowField, Image};

/// Levels whose images would be smaller than this on either side are skipped.
pub const MIN_LEVEL_SIZE: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationConfig {
    /// Downsampling factors, coarsest first, ending in 1.
    pub levels: Vec<usize>,
    pub n_warp: usize,
    /// Relative outer stopping threshold.
    pub difference: f64,
    pub inner: HsParams,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self { levels: vec![4, 2, 1], n_warp: 20, difference: 1e-3, inner: HsParams::default() }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        validate_levels(&self.levels)?;
        if self.n_warp < 1 {
            return invalid("n_warp must be >= 1");
        }
        if !(self.difference > 0.0) {
            return invalid(format!("difference must be > 0, got {}", self.difference));
        }
        self.inner.validate()
    }
}

pub(crate) fn validate_levels(levels: &[usize]) -> Result<()> {
    if levels.last() != Some(&1) {
        return invalid(format!("levels must end in 1, got {levels:?}"));
    }
    if levels.iter().any(|&f| f == 0 || !f.is_power_of_two()) {
        return invalid(format!("levels must be powers of two, got {levels:?}"));
    }
    if levels.windows(2).any(|p| p[0] <= p[1]) {
        return invalid(format!("levels must be strictly descending, got {levels:?}"));
    }
    Ok(())
}

/// Factors that are actually run for an image of this size. The finest level
/// is always kept.
pub fn active_levels(height: usize, width: usize, levels: &[usize]) -> Vec<usize> {
    levels
        .iter()
        .copied()
        .filter(|&f| {
            let (h, w) = level_dims(height, width, f);
            f == 1 || (h >= MIN_LEVEL_SIZE && w >= MIN_LEVEL_SIZE)
        })
        .collect()
}

/// Carries a field from level `from` to the finer level `to`, one octave at a
/// time so every step doubles both the grid and the displacement values.
pub fn carry_flow(flow: &FlowField, height: usize, width: usize, from: usize, to: usize) -> Result<FlowField> {
    let mut f = from;
    let mut out = flow.clone();
    while f > to {
        f /= 2;
        let (h, w) = level_dims(height, width, f);
        out = upsample_flow(&out, h, w)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelExit {
    /// Relative residual change fell below `difference`, or the match is exact.
    Converged,
    /// All `n_warp` warps were used.
    MaxWarps,
    /// The last step increased the residual and was discarded.
    Rollback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub factor: usize,
    pub height: usize,
    pub width: usize,
    /// Accepted warp iterations.
    pub warps: usize,
    pub inner_iterations: Vec<usize>,
    /// `|I1w - I0|^2` before the first warp of the level.
    pub initial_residual: f64,
    pub final_residual: f64,
    pub exit: LevelExit,
}

#[derive(Debug, Clone)]
pub struct RegistrationResult {
    pub flow: FlowField,
    /// `warp_bilinear(source, flow)`.
    pub warped_source: Image,
    pub levels: Vec<LevelReport>,
}

impl RegistrationResult {
    pub fn final_residual(&self) -> f64 {
        self.levels.last().map_or(0.0, |l| l.final_residual)
    }
}

/// Outer criterion: stop once `|diff - prev| / diff < difference`, or when
/// the match is exact. Returns `(stop, diff)`.
pub fn outer_stopping(warped: &Image, target: &Image, prev_diff: f64, difference: f64) -> (bool, f64) {
    let diff = warped.squared_distance(target);
    (relative_stop(diff, prev_diff, difference), diff)
}

pub(crate) fn relative_stop(diff: f64, prev_diff: f64, difference: f64) -> bool {
    diff == 0.0 || (diff - prev_diff).abs() / diff < difference
}

pub fn register_pair(source: &Image, target: &Image, config: &RegistrationConfig) -> Result<RegistrationResult> {
    config.validate()?;
    if source.dims() != target.dims() {
        return invalid(format!(
            "source {:?} and target {:?} differ in size",
            source.dims(),
            target.dims()
        ));
    }
    if !source.all_finite() || !target.all_finite() {
        return invalid("non-finite input image");
    }
    let (h, w) = source.dims();
    let mut reports = Vec::new();
    let mut total: Option<(usize, FlowField)> = None;

    for factor in active_levels(h, w, &config.levels) {
        let src = downsample(source, factor)?;
        let tgt = downsample(target, factor)?;
        let (lh, lw) = src.dims();
        let mut field = match &total {
            None => FlowField::zeros(lh, lw),
            Some((from, f)) => carry_flow(f, h, w, *from, factor)?,
        };
        let mut warped = warp_bilinear(&src, &field)?;
        let initial = warped.squared_distance(&tgt);
        let mut prev = initial;
        let mut report = LevelReport {
            factor,
            height: lh,
            width: lw,
            warps: 0,
            inner_iterations: Vec::new(),
            initial_residual: initial,
            final_residual: initial,
            exit: LevelExit::MaxWarps,
        };
        for k in 0..config.n_warp {
            let inc = admm_solve_increment(&warped, &tgt, &config.inner)?;
            report.inner_iterations.push(inc.iterations);
            let candidate = compose(&field, &inc.flow)?;
            let cand_warped = warp_bilinear(&src, &candidate)?;
            let diff = cand_warped.squared_distance(&tgt);
            if !diff.is_finite() {
                return Err(crate::Error::NumericFailure(format!(
                    "residual became non-finite at level {factor}"
                )));
            }
            // The first step is always taken; later ones must not undo progress.
            if k > 0 && diff > prev {
                report.exit = LevelExit::Rollback;
                break;
            }
            field = candidate;
            warped = cand_warped;
            report.warps += 1;
            report.final_residual = diff;
            let stop = relative_stop(diff, prev, config.difference);
            prev = diff;
            if stop {
                report.exit = LevelExit::Converged;
                break;
            }
        }
        reports.push(report);
        total = Some((factor, field));
    }

    let flow = total.map(|(_, f)| f).unwrap_or_else(|| FlowField::zeros(h, w));
    let warped_source = warp_bilinear(source, &flow)?;
    Ok(RegistrationResult { flow, warped_source, levels: reports })
}
