//! Low-rank groupwise registration of a frame stack onto one target.
//!
//! Frames are vectorized row-major into the columns of a Casorati matrix.
//! Inside every warp iteration the residual `M = M1w - M0` is split into a
//! low-rank part `L` and a sparse part `S` while each frame's flow increment
//! is pulled towards explaining `L + S`:
//!
//! ```text
//! Mk = M + J . v^k                    (linearized residual at the current v)
//! L  = D_{1/rho}(Mk - S + Y/rho)
//! S  = S_{mu/rho}(Mk - L + Y/rho)
//! v  = (theta I + rho J J^T)^-1 (theta (w - b) + rho J (L + S - Y/rho - M))
//! v^ = alpha v + (1 - alpha) w,  w = filter(v^ + b),  b += v^ - w
//! Y += rho (Mk - L - S)
//! ```

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::flow::{b_update, overrelax, AdmmState, HsParams, RegularizerFilter};
use crate::grid::{compose, downsample, gradient_central, warp_bilinear, FlowField, Image, ImageStack};
use crate::registration::{active_levels, carry_flow, relative_stop, LevelExit, RegistrationConfig};
use crate::rpca::{shrink, svt, Matrix};

/// Columns are frames scanned row by row, x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct CasoratiMatrix {
    height: usize,
    width: usize,
    data: Matrix,
}

impl CasoratiMatrix {
    pub fn new(height: usize, width: usize, data: Matrix) -> Result<Self> {
        if data.nrows() != height * width || data.ncols() == 0 {
            return invalid(format!(
                "matrix {}x{} does not hold frames of {height}x{width}",
                data.nrows(),
                data.ncols()
            ));
        }
        Ok(Self { height, width, data })
    }

    pub fn frame_dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn frame_count(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.data
    }

    pub fn into_matrix(self) -> Matrix {
        self.data
    }

    pub fn frame(&self, j: usize) -> Image {
        let col = self.data.column(j);
        Image::from_fn(self.height, self.width, |x, y| col[y * self.width + x])
    }

    pub fn devectorize(&self) -> Result<ImageStack> {
        ImageStack::new((0..self.frame_count()).map(|j| self.frame(j)).collect())
    }
}

pub fn vectorize_stack(stack: &ImageStack) -> CasoratiMatrix {
    let (h, w) = stack.frame_dims();
    let frames = stack.frames();
    let data = DMatrix::from_fn(h * w, frames.len(), |i, j| frames[j].data()[i]);
    CasoratiMatrix { height: h, width: w, data }
}

pub fn build_target_matrix(target: &Image, t: usize) -> Result<CasoratiMatrix> {
    if t < 1 {
        return invalid("target matrix needs at least one column");
    }
    let (h, w) = target.dims();
    let data = DMatrix::from_fn(h * w, t, |i, _| target.data()[i]);
    Ok(CasoratiMatrix { height: h, width: w, data })
}

/// `devectorize(L + M0)`.
pub fn recover_lowrank_stack(l: &CasoratiMatrix, m0: &CasoratiMatrix) -> Result<ImageStack> {
    if l.frame_dims() != m0.frame_dims() || l.frame_count() != m0.frame_count() {
        return invalid("recover_lowrank_stack: dimension mismatch");
    }
    CasoratiMatrix { height: l.height, width: l.width, data: &l.data + &m0.data }.devectorize()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingConfig {
    pub registration: RegistrationConfig,
    /// Sparsity weight.
    pub mu: f64,
    /// Penalty on the low-rank plus sparse coupling.
    pub rho: f64,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self { registration: RegistrationConfig::default(), mu: 0.2, rho: 0.1 }
    }
}

impl TrackingConfig {
    /// Smaller sparsity weight, trading accuracy for a lower-rank `L`.
    pub fn low_rank() -> Self {
        Self { mu: 0.01, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.registration.validate()?;
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return invalid(format!("mu must be > 0, got {}", self.mu));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return invalid(format!("rho must be > 0, got {}", self.rho));
        }
        Ok(())
    }
}

/// Per-pixel groupwise `v` step for one frame. `residual` is the frame's
/// column of `L + S - Y/rho - M`.
///
/// `(theta I + rho J J^T)^-1 = adj / (theta (rho |J|^2 + theta))` and
/// `adj J = theta J`, so the data force reduces to `rho J r / (rho |J|^2 + theta)`.
pub fn v_update_groupwise_frame(
    jx: &[f64],
    jy: &[f64],
    residual: &[f64],
    w: &FlowField,
    b: &FlowField,
    theta: f64,
    rho: f64,
) -> FlowField {
    let (h, wd) = w.dims();
    let n = h * wd;
    let mut vx = Vec::with_capacity(n);
    let mut vy = Vec::with_capacity(n);
    for i in 0..n {
        let (gx, gy, r) = (jx[i], jy[i], residual[i]);
        let ax = w.vx()[i] - b.vx()[i];
        let ay = w.vy()[i] - b.vy()[i];
        let d = rho * (gx * gx + gy * gy) + theta;
        let rgxy = rho * gx * gy;
        vx.push(((rho * gy * gy + theta) * ax - rgxy * ay + rho * gx * r) / d);
        vy.push((-rgxy * ax + (rho * gx * gx + theta) * ay + rho * gy * r) / d);
    }
    FlowField::from_parts_unchecked(h, wd, vx, vy)
}

/// Matrix-level form of [`v_update_groupwise_frame`], one field per column.
#[allow(clippy::too_many_arguments)]
pub fn v_update_groupwise(
    jacobians: &[(Image, Image)],
    m: &Matrix,
    l: &Matrix,
    s: &Matrix,
    y: &Matrix,
    w: &[FlowField],
    b: &[FlowField],
    theta: f64,
    rho: f64,
) -> Result<Vec<FlowField>> {
    let t = jacobians.len();
    if [m.ncols(), l.ncols(), s.ncols(), y.ncols(), w.len(), b.len()].iter().any(|&c| c != t) {
        return invalid("v_update_groupwise: frame count mismatch");
    }
    let r = l + s - y / rho - m;
    Ok((0..t)
        .map(|j| {
            let (jx, jy) = &jacobians[j];
            v_update_groupwise_frame(jx.data(), jy.data(), r.column(j).as_slice(), &w[j], &b[j], theta, rho)
        })
        .collect())
}

/// Stepwise inner solver of one warp iteration.
#[derive(Debug, Clone)]
pub struct GroupwiseSolver {
    height: usize,
    width: usize,
    jx: Vec<Vec<f64>>,
    jy: Vec<Vec<f64>>,
    jx_mat: Matrix,
    jy_mat: Matrix,
    m: Matrix,
    filter: RegularizerFilter,
    params: HsParams,
    mu: f64,
    rho: f64,
    pub l: Matrix,
    pub s: Matrix,
    pub y: Matrix,
    /// Linearized residual used by the most recent step.
    pub mk: Matrix,
    pub rank: usize,
    pub frames: Vec<AdmmState>,
    pub iteration: usize,
}

/// What one inner step changed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupwiseStep {
    /// Relative L1 change of vx, summed over frames.
    pub change_x: f64,
    pub change_y: f64,
}

impl GroupwiseSolver {
    pub fn new(warped: &[Image], target: &Image, params: HsParams, mu: f64, rho: f64) -> Result<Self> {
        params.validate()?;
        let (h, w) = target.dims();
        if warped.is_empty() || warped.iter().any(|f| f.dims() != (h, w)) {
            return invalid("groupwise solver needs frames matching the target");
        }
        let t = warped.len();
        let mut jx = Vec::with_capacity(t);
        let mut jy = Vec::with_capacity(t);
        for f in warped {
            let (gx, gy) = gradient_central(f)?;
            jx.push(gx.into_data());
            jy.push(gy.into_data());
        }
        let jx_mat = DMatrix::from_fn(h * w, t, |i, j| jx[j][i]);
        let jy_mat = DMatrix::from_fn(h * w, t, |i, j| jy[j][i]);
        let m = DMatrix::from_fn(h * w, t, |i, j| warped[j].data()[i] - target.data()[i]);
        let zeros = Matrix::zeros(h * w, t);
        Ok(Self {
            height: h,
            width: w,
            jx,
            jy,
            jx_mat,
            jy_mat,
            filter: RegularizerFilter::new(h, w, params.lambda, params.theta, params.order),
            params,
            mu,
            rho,
            l: zeros.clone(),
            s: zeros.clone(),
            y: zeros.clone(),
            mk: m.clone(),
            m,
            rank: 0,
            frames: (0..t).map(|_| AdmmState::zeros(h, w)).collect(),
            iteration: 0,
        })
    }

    /// Unlinearized residual `M1w - M0`.
    pub fn residual(&self) -> &Matrix {
        &self.m
    }

    pub fn step(&mut self) -> Result<GroupwiseStep> {
        let (h, w) = (self.height, self.width);
        let n = h * w;
        let t = self.frames.len();
        let rho = self.rho;
        let inv_rho = 1.0 / rho;

        let mut mk = self.m.clone();
        for (j, st) in self.frames.iter().enumerate() {
            let (vx, vy) = (st.v.vx(), st.v.vy());
            let (jx, jy) = (self.jx_mat.column(j), self.jy_mat.column(j));
            let mut col = mk.column_mut(j);
            for i in 0..n {
                col[i] += jx[i] * vx[i] + jy[i] * vy[i];
            }
        }
        let (l, rank) = svt(&(&mk - &self.s + &self.y * inv_rho), inv_rho)?;
        self.l = l;
        self.rank = rank;
        self.s = shrink(&(&mk - &self.l + &self.y * inv_rho), self.mu * inv_rho);
        let r = &self.l + &self.s - &self.y * inv_rho - &self.m;

        let theta = self.params.theta;
        let alpha = self.params.alpha;
        let filter = &self.filter;
        let updates: Vec<(AdmmState, [f64; 4])> = self
            .frames
            .par_iter()
            .enumerate()
            .map(|(j, st)| {
                let v = v_update_groupwise_frame(&self.jx[j], &self.jy[j], r.column(j).as_slice(), &st.w, &st.b, theta, rho);
                let v_hat = overrelax(&v, &st.w, alpha).expect("conformant fields");
                let wf = filter.apply(&v_hat, &st.b);
                let b = b_update(&st.b, &v_hat, &wf).expect("conformant fields");
                let l1 = |a: &[f64], o: &[f64]| a.iter().zip(o).map(|(p, q)| (p - q).abs()).sum::<f64>();
                let norm = |a: &[f64]| a.iter().map(|p| p.abs()).sum::<f64>();
                let sums = [l1(v.vx(), st.v.vx()), norm(st.v.vx()), l1(v.vy(), st.v.vy()), norm(st.v.vy())];
                (AdmmState { v, v_hat, w: wf, b, iteration: st.iteration + 1 }, sums)
            })
            .collect();
        let mut acc = [0.0; 4];
        let mut frames = Vec::with_capacity(t);
        for (st, sums) in updates {
            for k in 0..4 {
                acc[k] += sums[k];
            }
            frames.push(st);
        }
        self.frames = frames;
        self.y += (&mk - &self.l - &self.s) * rho;
        self.mk = mk;
        self.iteration += 1;
        let eps = self.params.epsilon;
        Ok(GroupwiseStep { change_x: acc[0] / (acc[1] + eps), change_y: acc[2] / (acc[3] + eps) })
    }

    /// Iterates until both aggregated changes fall below the tolerance or
    /// `max_iter` is reached.
    pub fn run(&mut self) -> Result<bool> {
        while self.iteration < self.params.max_iter {
            let s = self.step()?;
            if s.change_x < self.params.tolerance && s.change_y < self.params.tolerance {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Over-relaxed iterates, one increment per frame.
    pub fn increments(&self) -> Vec<FlowField> {
        self.frames.iter().map(|s| s.v_hat.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingLevelReport {
    pub factor: usize,
    pub height: usize,
    pub width: usize,
    pub warps: usize,
    pub inner_iterations: Vec<usize>,
    /// `|M1w - M0|_F^2` before the first warp of the level.
    pub initial_residual: f64,
    pub final_residual: f64,
    pub exit: LevelExit,
}

#[derive(Debug, Clone)]
pub struct TrackingResult {
    pub flows: Vec<FlowField>,
    pub l: CasoratiMatrix,
    pub s: CasoratiMatrix,
    /// Exact rank of `L` from its final thresholding.
    pub rank: usize,
    pub warped_stack: ImageStack,
    /// Frames of `L + M0`.
    pub lowrank_stack: ImageStack,
    pub levels: Vec<TrackingLevelReport>,
}

fn stack_residual(warped: &[Image], target: &Image) -> f64 {
    warped.iter().map(|f| f.squared_distance(target)).sum()
}

pub fn track(sources: &ImageStack, target: &Image, config: &TrackingConfig) -> Result<TrackingResult> {
    config.validate()?;
    let (h, w) = target.dims();
    if sources.frame_dims() != (h, w) {
        return invalid(format!(
            "frames {:?} and target {:?} differ in size",
            sources.frame_dims(),
            target.dims()
        ));
    }
    if !target.all_finite() || sources.frames().iter().any(|f| !f.all_finite()) {
        return invalid("non-finite input image");
    }
    let reg = &config.registration;
    let t = sources.len();
    let mut fields: Option<(usize, Vec<FlowField>)> = None;
    let mut decomposition: Option<(Matrix, Matrix, usize)> = None;
    let mut reports = Vec::new();

    for factor in active_levels(h, w, &reg.levels) {
        let srcs = sources
            .frames()
            .iter()
            .map(|f| downsample(f, factor))
            .collect::<Result<Vec<_>>>()?;
        let tgt = downsample(target, factor)?;
        let (lh, lw) = tgt.dims();
        let mut current = match &fields {
            None => vec![FlowField::zeros(lh, lw); t],
            Some((from, fs)) => fs
                .iter()
                .map(|f| carry_flow(f, h, w, *from, factor))
                .collect::<Result<Vec<_>>>()?,
        };
        let mut warped = warp_all(&srcs, &current)?;
        let initial = stack_residual(&warped, &tgt);
        let mut prev = initial;
        let mut report = TrackingLevelReport {
            factor,
            height: lh,
            width: lw,
            warps: 0,
            inner_iterations: Vec::new(),
            initial_residual: initial,
            final_residual: initial,
            exit: LevelExit::MaxWarps,
        };
        let mut level_decomposition = None;
        for k in 0..reg.n_warp {
            let mut solver = GroupwiseSolver::new(&warped, &tgt, reg.inner, config.mu, config.rho)?;
            solver.run()?;
            report.inner_iterations.push(solver.iteration);
            let candidate = current
                .par_iter()
                .zip(solver.increments().par_iter())
                .map(|(f, inc)| compose(f, inc))
                .collect::<Result<Vec<_>>>()?;
            let cand_warped = warp_all(&srcs, &candidate)?;
            let diff = stack_residual(&cand_warped, &tgt);
            if !diff.is_finite() {
                return Err(Error::NumericFailure(format!("stack residual became non-finite at level {factor}")));
            }
            if k > 0 && diff > prev {
                report.exit = LevelExit::Rollback;
                break;
            }
            current = candidate;
            warped = cand_warped;
            level_decomposition = Some((solver.l, solver.s, solver.rank));
            report.warps += 1;
            report.final_residual = diff;
            let stop = relative_stop(diff, prev, reg.difference);
            prev = diff;
            if stop {
                report.exit = LevelExit::Converged;
                break;
            }
        }
        reports.push(report);
        fields = Some((factor, current));
        decomposition = level_decomposition;
    }

    let flows = fields.map(|(_, f)| f).unwrap_or_else(|| vec![FlowField::zeros(h, w); t]);
    let (l, s, rank) = decomposition.expect("finest level always accepts its first step");
    let l = CasoratiMatrix::new(h, w, l)?;
    let s = CasoratiMatrix::new(h, w, s)?;
    let warped_stack = ImageStack::new(warp_all(sources.frames(), &flows)?)?;
    let lowrank_stack = recover_lowrank_stack(&l, &build_target_matrix(target, t)?)?;
    Ok(TrackingResult { flows, l, s, rank, warped_stack, lowrank_stack, levels: reports })
}

fn warp_all(frames: &[Image], flows: &[FlowField]) -> Result<Vec<Image>> {
    frames.par_iter().zip(flows.par_iter()).map(|(f, v)| warp_bilinear(f, v)).collect()
}
