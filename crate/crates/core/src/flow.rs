//! Over-relaxed ADMM solver for the linearized variational flow model
//!
//! ```text
//! min_v  1/2 |Jx Vx + Jy Vy + I1w - I0|^2 + lambda/2 |grad^n v|^2
//! ```
//!
//! split as `w = v` with scaled multiplier `b`. The `v` step is a per-pixel
//! 2x2 solve done in closed form via Sherman-Morrison, and the `w` step is a
//! periodic Fourier filter. A Lucas-Kanade window estimate is included as a
//! baseline.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{gradient_central, FlowField, Image};
use crate::spectral::{laplacian_spectrum, Fft2};

/// Inner-solver hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HsParams {
    /// Regularization weight.
    pub lambda: f64,
    /// ADMM penalty.
    pub theta: f64,
    /// Relaxation factor in (0, 2].
    pub alpha: f64,
    /// Order of the regularizing Laplacian power.
    pub order: u32,
    pub max_iter: usize,
    /// Inner stopping threshold on the relative L1 change of each component.
    pub tolerance: f64,
    /// Denominator guard of the stopping ratio.
    pub epsilon: f64,
}

impl Default for HsParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            theta: 0.01,
            alpha: 1.8,
            order: 2,
            max_iter: 1000,
            tolerance: 1e-2,
            epsilon: f64::EPSILON,
        }
    }
}

impl HsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return invalid(format!("lambda must be > 0, got {}", self.lambda));
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return invalid(format!("theta must be > 0, got {}", self.theta));
        }
        if !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return invalid(format!("alpha must be in (0, 2], got {}", self.alpha));
        }
        if self.order < 1 {
            return invalid("order must be >= 1");
        }
        if self.max_iter < 1 {
            return invalid("max_iter must be >= 1");
        }
        if !(self.tolerance > 0.0) {
            return invalid(format!("tolerance must be > 0, got {}", self.tolerance));
        }
        if !(self.epsilon > 0.0) {
            return invalid(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        Ok(())
    }
}

/// Linearized data term of one warped source against the target.
#[derive(Debug, Clone)]
pub struct DataTermCache {
    height: usize,
    width: usize,
    /// Gradient of the warped source along x.
    pub jx: Vec<f64>,
    /// Gradient of the warped source along y.
    pub jy: Vec<f64>,
    /// Temporal difference, warped source minus target.
    pub it: Vec<f64>,
    /// `Jx^2 + Jy^2 + theta`, bounded below by theta.
    pub denom: Vec<f64>,
}

impl DataTermCache {
    pub fn new(warped_source: &Image, target: &Image, theta: f64) -> Result<Self> {
        if warped_source.dims() != target.dims() {
            return invalid(format!(
                "source {:?} and target {:?} differ in size",
                warped_source.dims(),
                target.dims()
            ));
        }
        let (jx, jy) = gradient_central(warped_source)?;
        Ok(Self::from_parts(
            jx.into_data(),
            jy.into_data(),
            warped_source.data().iter().zip(target.data()).map(|(a, b)| a - b).collect(),
            warped_source.height(),
            warped_source.width(),
            theta,
        ))
    }

    pub fn from_parts(
        jx: Vec<f64>,
        jy: Vec<f64>,
        it: Vec<f64>,
        height: usize,
        width: usize,
        theta: f64,
    ) -> Self {
        let denom = jx.iter().zip(&jy).map(|(a, b)| a * a + b * b + theta).collect();
        Self { height, width, jx, jy, it, denom }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

/// ADMM iterates, all zero at the start of every inner solve.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub v: FlowField,
    pub v_hat: FlowField,
    pub w: FlowField,
    pub b: FlowField,
    pub iteration: usize,
}

impl AdmmState {
    pub fn zeros(height: usize, width: usize) -> Self {
        let z = FlowField::zeros(height, width);
        Self { v: z.clone(), v_hat: z.clone(), w: z.clone(), b: z, iteration: 0 }
    }
}

/// Closed-form `v` step: `(J J^T + theta I) v = theta (w - b) - J It`.
///
/// Uses the explicit inverse
/// `[[Jy^2 + theta, -Jx Jy], [-Jx Jy, Jx^2 + theta]] / (theta (|J|^2 + theta))`
/// together with `adj(A) J = theta J`.
pub fn v_update(state: &AdmmState, cache: &DataTermCache, theta: f64) -> FlowField {
    let (h, w) = cache.dims();
    let n = h * w;
    let mut vx = Vec::with_capacity(n);
    let mut vy = Vec::with_capacity(n);
    let (wx, wy) = (state.w.vx(), state.w.vy());
    let (bx, by) = (state.b.vx(), state.b.vy());
    for i in 0..n {
        let (jx, jy, it) = (cache.jx[i], cache.jy[i], cache.it[i]);
        let ax = wx[i] - bx[i];
        let ay = wy[i] - by[i];
        let d = cache.denom[i];
        vx.push(((jy * jy + theta) * ax - jx * jy * ay - jx * it) / d);
        vy.push((-jx * jy * ax + (jx * jx + theta) * ay - jy * it) / d);
    }
    FlowField::from_parts_unchecked(h, w, vx, vy)
}

/// `alpha * v_new + (1 - alpha) * w_prev`.
pub fn overrelax(v_new: &FlowField, w_prev: &FlowField, alpha: f64) -> Result<FlowField> {
    if v_new.dims() != w_prev.dims() {
        return invalid("overrelax: dimension mismatch");
    }
    let (h, w) = v_new.dims();
    let mix = |a: &[f64], b: &[f64]| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| alpha * x + (1.0 - alpha) * y).collect()
    };
    Ok(FlowField::from_parts_unchecked(
        h,
        w,
        mix(v_new.vx(), w_prev.vx()),
        mix(v_new.vy(), w_prev.vy()),
    ))
}

/// `b + v_hat - w`.
pub fn b_update(b: &FlowField, v_hat: &FlowField, w: &FlowField) -> Result<FlowField> {
    if b.dims() != v_hat.dims() || b.dims() != w.dims() {
        return invalid("b_update: dimension mismatch");
    }
    let (h, wd) = b.dims();
    let step = |b: &[f64], v: &[f64], w: &[f64]| -> Vec<f64> {
        b.iter().zip(v).zip(w).map(|((b, v), w)| b + v - w).collect()
    };
    Ok(FlowField::from_parts_unchecked(
        h,
        wd,
        step(b.vx(), v_hat.vx(), w.vx()),
        step(b.vy(), v_hat.vy(), w.vy()),
    ))
}

/// The `w` step as a reusable operator: `w = IDFT(theta DFT(v_hat + b) /
/// (lambda * spectrum + theta))`, applied to both components.
#[derive(Debug, Clone)]
pub struct RegularizerFilter {
    fft: Fft2,
    gains: Vec<f64>,
}

impl RegularizerFilter {
    pub fn new(height: usize, width: usize, lambda: f64, theta: f64, order: u32) -> Self {
        Self::from_spectrum(height, width, lambda, theta, &laplacian_spectrum(height, width, order))
    }

    pub fn from_spectrum(height: usize, width: usize, lambda: f64, theta: f64, spectrum: &[f64]) -> Self {
        let gains = spectrum.iter().map(|s| theta / (lambda * s + theta)).collect();
        Self { fft: Fft2::new(height, width), gains }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.fft.dims()
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn apply(&self, v_hat: &FlowField, b: &FlowField) -> FlowField {
        let (h, w) = self.fft.dims();
        let sx: Vec<f64> = v_hat.vx().iter().zip(b.vx()).map(|(a, c)| a + c).collect();
        let sy: Vec<f64> = v_hat.vy().iter().zip(b.vy()).map(|(a, c)| a + c).collect();
        let (wx, wy) = self.fft.filter_pair(&sx, &sy, &self.gains);
        FlowField::from_parts_unchecked(h, w, wx, wy)
    }
}

/// One-shot `w` step for a given spectrum (see [`RegularizerFilter`]).
pub fn w_update(
    v_hat: &FlowField,
    b: &FlowField,
    lambda: f64,
    theta: f64,
    spectrum: &[f64],
) -> Result<FlowField> {
    let (h, w) = v_hat.dims();
    if b.dims() != (h, w) || spectrum.len() != h * w {
        return invalid("w_update: dimension mismatch");
    }
    Ok(RegularizerFilter::from_spectrum(h, w, lambda, theta, spectrum).apply(v_hat, b))
}

/// Relative L1 change of one component, guarded by `epsilon`.
pub(crate) fn relative_change(new: &[f64], old: &[f64], epsilon: f64) -> f64 {
    let num: f64 = new.iter().zip(old).map(|(a, b)| (a - b).abs()).sum();
    let den: f64 = old.iter().map(|v| v.abs()).sum();
    num / (den + epsilon)
}

pub(crate) fn l2_distance(a: &FlowField, b: &FlowField) -> f64 {
    let sx: f64 = a.vx().iter().zip(b.vx()).map(|(x, y)| (x - y) * (x - y)).sum();
    let sy: f64 = a.vy().iter().zip(b.vy()).map(|(x, y)| (x - y) * (x - y)).sum();
    (sx + sy).sqrt()
}

/// Diagnostics of one inner iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub change_x: f64,
    pub change_y: f64,
    /// `|v_hat - w|_2` after the step.
    pub primal_residual: f64,
}

/// Outcome of one inner solve.
#[derive(Debug, Clone)]
pub struct InnerOutcome {
    /// Over-relaxed iterate at exit; this is the increment handed to the warp loop.
    pub flow: FlowField,
    pub iterations: usize,
    pub converged: bool,
    pub first_primal_residual: f64,
    pub last_primal_residual: f64,
}

/// Stepwise inner solver over a fixed data term.
#[derive(Debug, Clone)]
pub struct InnerSolver {
    cache: DataTermCache,
    filter: RegularizerFilter,
    params: HsParams,
    state: AdmmState,
}

impl InnerSolver {
    pub fn new(cache: DataTermCache, params: HsParams) -> Result<Self> {
        params.validate()?;
        let (h, w) = cache.dims();
        let filter = RegularizerFilter::new(h, w, params.lambda, params.theta, params.order);
        Ok(Self { cache, filter, params, state: AdmmState::zeros(h, w) })
    }

    pub fn state(&self) -> &AdmmState {
        &self.state
    }

    pub fn step(&mut self) -> StepStats {
        let p = &self.params;
        let v = v_update(&self.state, &self.cache, p.theta);
        let v_hat = overrelax(&v, &self.state.w, p.alpha).expect("conformant fields");
        let w = self.filter.apply(&v_hat, &self.state.b);
        let b = b_update(&self.state.b, &v_hat, &w).expect("conformant fields");
        let stats = StepStats {
            change_x: relative_change(v.vx(), self.state.v.vx(), p.epsilon),
            change_y: relative_change(v.vy(), self.state.v.vy(), p.epsilon),
            primal_residual: l2_distance(&v_hat, &w),
        };
        self.state = AdmmState { v, v_hat, w, b, iteration: self.state.iteration + 1 };
        stats
    }

    pub fn run(mut self) -> InnerOutcome {
        let mut first = None;
        let mut last = 0.0;
        let mut converged = false;
        while self.state.iteration < self.params.max_iter {
            let s = self.step();
            first.get_or_insert(s.primal_residual);
            last = s.primal_residual;
            if s.change_x < self.params.tolerance && s.change_y < self.params.tolerance {
                converged = true;
                break;
            }
        }
        InnerOutcome {
            flow: self.state.v_hat,
            iterations: self.state.iteration,
            converged,
            first_primal_residual: first.unwrap_or(0.0),
            last_primal_residual: last,
        }
    }
}

/// Solve for the flow increment that moves `warped_source` towards `target`.
pub fn admm_solve_increment(warped_source: &Image, target: &Image, params: &HsParams) -> Result<InnerOutcome> {
    if !warped_source.all_finite() || !target.all_finite() {
        return invalid("non-finite input image");
    }
    let cache = DataTermCache::new(warped_source, target, params.theta)?;
    Ok(InnerSolver::new(cache, *params)?.run())
}

/// Result of a Lucas-Kanade window solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LucasKanade {
    Flow { vx: f64, vy: f64 },
    /// The 2x2 normal matrix was (numerically) singular.
    Singular,
}

/// Least-squares flow over a `(2r+1)^2` window: rows of `A` are the source
/// gradients, `b = I0 - I1`, solved via the normal equations.
pub fn lucas_kanade_window(
    source: &Image,
    target: &Image,
    center: (usize, usize),
    radius: usize,
) -> Result<LucasKanade> {
    if source.dims() != target.dims() {
        return invalid("lucas_kanade_window: dimension mismatch");
    }
    let (h, w) = source.dims();
    let (cx, cy) = center;
    if cx < radius || cy < radius || cx + radius >= w || cy + radius >= h {
        return invalid(format!("window of radius {radius} at {center:?} leaves the {h}x{w} image"));
    }
    let (gx, gy) = gradient_central(source)?;
    let (mut sxx, mut sxy, mut syy, mut sxb, mut syb) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for y in cy - radius..=cy + radius {
        for x in cx - radius..=cx + radius {
            let (ix, iy) = (gx.get(x, y), gy.get(x, y));
            let b = target.get(x, y) - source.get(x, y);
            sxx += ix * ix;
            sxy += ix * iy;
            syy += iy * iy;
            sxb += ix * b;
            syb += iy * b;
        }
    }
    let det = sxx * syy - sxy * sxy;
    if det.abs() < 1e-12 {
        return Ok(LucasKanade::Singular);
    }
    Ok(LucasKanade::Flow {
        vx: (syy * sxb - sxy * syb) / det,
        vy: (sxx * syb - sxy * sxb) / det,
    })
}
