//! Image and displacement-field primitives.
//!
//! Every grid is stored row-major (`index = y * width + x`), x indexes columns
//! and y indexes rows. Flow components are always ordered `(vx, vy)`.
//! Samples that fall outside the domain are clamped to the nearest edge pixel.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::error::{invalid, Result};

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return invalid(format!("zero-sized grid {height}x{width}"));
    }
    Ok(())
}

/// Clamped bilinear sample of a row-major grid.
#[inline]
pub(crate) fn bilinear(data: &[f64], height: usize, width: usize, x: f64, y: f64) -> f64 {
    let xmax = (width - 1) as f64;
    let ymax = (height - 1) as f64;
    let xc = x.clamp(0.0, xmax);
    let yc = y.clamp(0.0, ymax);
    let x0 = xc.floor() as usize;
    let y0 = yc.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = xc - x0 as f64;
    let fy = yc - y0 as f64;
    let top = data[y0 * width + x0] * (1.0 - fx) + data[y0 * width + x1] * fx;
    let bottom = data[y1 * width + x0] * (1.0 - fx) + data[y1 * width + x1] * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Single-channel intensity image, 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width {
            return invalid(format!(
                "image data has {} values, expected {}x{}",
                data.len(),
                height,
                width
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return invalid(format!("non-finite intensity at index {i}"));
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "zero-sized image");
        Self { height, width, data: vec![0.0; height * width] }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(height > 0 && width > 0, "zero-sized image");
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    /// Bilinear sample at a real-valued location, clamped to the edges.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        bilinear(&self.data, self.height, self.width, x, y)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Sum of squared differences, accumulated in index order.
    pub fn squared_distance(&self, other: &Image) -> f64 {
        debug_assert_eq!(self.dims(), other.dims());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Pixels above `level` as a binary label map (1 = foreground).
    pub fn threshold(&self, level: f64) -> LabelMap {
        LabelMap {
            height: self.height,
            width: self.width,
            labels: self.data.iter().map(|&v| u16::from(v > level)).collect(),
        }
    }
}

/// Min-max normalize a set of images to [0, 1] with one shared range.
///
/// A constant set maps to all zeros.
pub fn normalize_shared(images: &[&Image]) -> Vec<Image> {
    let (lo, hi) = images.iter().map(|im| im.min_max()).fold(
        (f64::INFINITY, f64::NEG_INFINITY),
        |(lo, hi), (a, b)| (lo.min(a), hi.max(b)),
    );
    let span = hi - lo;
    images
        .iter()
        .map(|im| {
            let data = im
                .data
                .iter()
                .map(|&v| if span > 0.0 { ((v - lo) / span).clamp(0.0, 1.0) } else { 0.0 })
                .collect();
            Image { height: im.height, width: im.width, data }
        })
        .collect()
}

/// Small-integer label grid; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    labels: Vec<u16>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, labels: Vec<u16>) -> Result<Self> {
        check_dims(height, width)?;
        if labels.len() != height * width {
            return invalid(format!(
                "label data has {} values, expected {}x{}",
                labels.len(),
                height,
                width
            ));
        }
        Ok(Self { height, width, labels })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> u16) -> Self {
        assert!(height > 0 && width > 0, "zero-sized label map");
        let mut labels = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                labels.push(f(x, y));
            }
        }
        Self { height, width, labels }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.labels[y * self.width + x]
    }

    /// Distinct label values present, background included.
    pub fn label_set(&self) -> BTreeSet<u16> {
        self.labels.iter().copied().collect()
    }

    pub fn count(&self, label: u16) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

/// Per-pixel displacement field in pixel units.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    height: usize,
    width: usize,
    vx: Vec<f64>,
    vy: Vec<f64>,
}

impl FlowField {
    pub fn new(height: usize, width: usize, vx: Vec<f64>, vy: Vec<f64>) -> Result<Self> {
        check_dims(height, width)?;
        let n = height * width;
        if vx.len() != n || vy.len() != n {
            return invalid(format!(
                "flow components have {}/{} values, expected {n}",
                vx.len(),
                vy.len()
            ));
        }
        if vx.iter().chain(&vy).any(|v| !v.is_finite()) {
            return invalid("non-finite flow component");
        }
        Ok(Self { height, width, vx, vy })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::constant(height, width, 0.0, 0.0)
    }

    pub fn constant(height: usize, width: usize, vx: f64, vy: f64) -> Self {
        assert!(height > 0 && width > 0, "zero-sized flow");
        let n = height * width;
        Self { height, width, vx: vec![vx; n], vy: vec![vy; n] }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> (f64, f64),
    ) -> Self {
        assert!(height > 0 && width > 0, "zero-sized flow");
        let n = height * width;
        let mut vx = Vec::with_capacity(n);
        let mut vy = Vec::with_capacity(n);
        for y in 0..height {
            for x in 0..width {
                let (a, b) = f(x, y);
                vx.push(a);
                vy.push(b);
            }
        }
        Self { height, width, vx, vy }
    }

    pub(crate) fn from_parts_unchecked(height: usize, width: usize, vx: Vec<f64>, vy: Vec<f64>) -> Self {
        debug_assert_eq!(vx.len(), height * width);
        debug_assert_eq!(vy.len(), height * width);
        Self { height, width, vx, vy }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.vx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vx.is_empty()
    }

    pub fn vx(&self) -> &[f64] {
        &self.vx
    }

    pub fn vy(&self) -> &[f64] {
        &self.vy
    }

    pub fn vx_mut(&mut self) -> &mut [f64] {
        &mut self.vx
    }

    pub fn vy_mut(&mut self) -> &mut [f64] {
        &mut self.vy
    }

    pub fn components_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.vx, &mut self.vy)
    }

    pub fn into_components(self) -> (Vec<f64>, Vec<f64>) {
        (self.vx, self.vy)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.vx[i], self.vy[i])
    }

    /// Bilinear sample of both components, clamped to the edges.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> (f64, f64) {
        (
            bilinear(&self.vx, self.height, self.width, x, y),
            bilinear(&self.vy, self.height, self.width, x, y),
        )
    }

    pub fn all_finite(&self) -> bool {
        self.vx.iter().chain(&self.vy).all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.vx.iter().chain(&self.vy).fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &FlowField) -> f64 {
        let dx = self.vx.iter().zip(&other.vx).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let dy = self.vy.iter().zip(&other.vy).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        dx.max(dy)
    }

    pub fn scaled(&self, factor: f64) -> FlowField {
        FlowField {
            height: self.height,
            width: self.width,
            vx: self.vx.iter().map(|v| v * factor).collect(),
            vy: self.vy.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn magnitude(&self, index: usize) -> f64 {
        self.vx[index].hypot(self.vy[index])
    }
}

/// Ordered frames sharing one size.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageStack {
    frames: Vec<Image>,
}

impl ImageStack {
    pub fn new(frames: Vec<Image>) -> Result<Self> {
        let Some(first) = frames.first() else {
            return invalid("image stack needs at least one frame");
        };
        let dims = first.dims();
        if let Some(j) = frames.iter().position(|f| f.dims() != dims) {
            return invalid(format!(
                "frame {j} is {:?}, expected {:?}",
                frames[j].dims(),
                dims
            ));
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[Image] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Image> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }
}

/// Pixel coordinates of every grid point: `x[y][x] = x`, `y[y][x] = y`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateGrid {
    pub height: usize,
    pub width: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

pub fn identity_grid(height: usize, width: usize) -> Result<CoordinateGrid> {
    check_dims(height, width)?;
    let mut x = Vec::with_capacity(height * width);
    let mut y = Vec::with_capacity(height * width);
    for row in 0..height {
        for col in 0..width {
            x.push(col as f64);
            y.push(row as f64);
        }
    }
    Ok(CoordinateGrid { height, width, x, y })
}

fn check_same(a: (usize, usize), b: (usize, usize), what: &str) -> Result<()> {
    if a != b {
        return invalid(format!("{what}: dimension mismatch {a:?} vs {b:?}"));
    }
    Ok(())
}

/// `output[p] = image(p + flow[p])` with clamped bilinear sampling.
pub fn warp_bilinear(image: &Image, flow: &FlowField) -> Result<Image> {
    check_same(image.dims(), flow.dims(), "warp_bilinear")?;
    let (h, w) = image.dims();
    let mut out = vec![0.0; h * w];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            let i = y * w + x;
            *o = image.sample(x as f64 + flow.vx[i], y as f64 + flow.vy[i]);
        }
    });
    Ok(Image { height: h, width: w, data: out })
}

/// Pull-back label warp: nearest integer source coordinate, clamped.
pub fn warp_nearest(labels: &LabelMap, flow: &FlowField) -> Result<LabelMap> {
    check_same(labels.dims(), flow.dims(), "warp_nearest")?;
    let (h, w) = labels.dims();
    let mut out = vec![0u16; h * w];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            let i = y * w + x;
            let sx = (x as f64 + flow.vx[i]).round().clamp(0.0, (w - 1) as f64) as usize;
            let sy = (y as f64 + flow.vy[i]).round().clamp(0.0, (h - 1) as f64) as usize;
            *o = labels.labels[sy * w + sx];
        }
    });
    Ok(LabelMap { height: h, width: w, labels: out })
}

/// Field equivalent to warping by `outer` and then by `inner`:
/// `c[p] = inner[p] + outer(p + inner[p])`.
pub fn compose(outer: &FlowField, inner: &FlowField) -> Result<FlowField> {
    check_same(outer.dims(), inner.dims(), "compose")?;
    let (h, w) = outer.dims();
    let n = h * w;
    let mut vx = vec![0.0; n];
    let mut vy = vec![0.0; n];
    vx.par_chunks_mut(w)
        .zip(vy.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (rx, ry))| {
            for x in 0..w {
                let i = y * w + x;
                let (ix, iy) = (inner.vx[i], inner.vy[i]);
                let (ox, oy) = outer.sample(x as f64 + ix, y as f64 + iy);
                rx[x] = ix + ox;
                ry[x] = iy + oy;
            }
        });
    Ok(FlowField { height: h, width: w, vx, vy })
}

/// Central differences with replicated borders: `(I[x+1] - I[x-1]) / 2`,
/// where out-of-range neighbours repeat the edge pixel.
pub fn gradient_central(image: &Image) -> Result<(Image, Image)> {
    let (h, w) = image.dims();
    if h < 2 || w < 2 {
        return invalid(format!("gradient needs at least 2x2 pixels, got {h}x{w}"));
    }
    let mut dx = vec![0.0; h * w];
    let mut dy = vec![0.0; h * w];
    let d = &image.data;
    for y in 0..h {
        let up = y.saturating_sub(1);
        let down = (y + 1).min(h - 1);
        for x in 0..w {
            let left = x.saturating_sub(1);
            let right = (x + 1).min(w - 1);
            let i = y * w + x;
            dx[i] = 0.5 * (d[y * w + right] - d[y * w + left]);
            dy[i] = 0.5 * (d[down * w + x] - d[up * w + x]);
        }
    }
    Ok((
        Image { height: h, width: w, data: dx },
        Image { height: h, width: w, data: dy },
    ))
}

/// Size of a pyramid level: `ceil(dim / factor)`.
pub fn level_dims(height: usize, width: usize, factor: usize) -> (usize, usize) {
    (height.div_ceil(factor), width.div_ceil(factor))
}

/// Block-average downsampling by a power-of-two factor.
///
/// Blocks that overhang the border reuse the clamped edge pixels.
pub fn downsample(image: &Image, factor: usize) -> Result<Image> {
    if factor == 0 || !factor.is_power_of_two() {
        return invalid(format!("downsample factor {factor} is not a power of two"));
    }
    if factor == 1 {
        return Ok(image.clone());
    }
    let (h, w) = image.dims();
    let (oh, ow) = level_dims(h, w, factor);
    let norm = 1.0 / (factor * factor) as f64;
    let mut out = Vec::with_capacity(oh * ow);
    for by in 0..oh {
        for bx in 0..ow {
            let mut acc = 0.0;
            for dy in 0..factor {
                let y = (by * factor + dy).min(h - 1);
                for dx in 0..factor {
                    let x = (bx * factor + dx).min(w - 1);
                    acc += image.data[y * w + x];
                }
            }
            out.push(acc * norm);
        }
    }
    Ok(Image { height: oh, width: ow, data: out })
}

/// Resample a coarse-level flow onto a finer grid and double its values.
///
/// Pixel centres are aligned (`src = (dst + 0.5) * src_dim / dst_dim - 0.5`),
/// which matches the footprint of [`downsample`]. The factor of two converts
/// one-octave coarse displacements into fine-grid pixels.
pub fn upsample_flow(flow: &FlowField, target_height: usize, target_width: usize) -> Result<FlowField> {
    let (h, w) = flow.dims();
    if target_height < h || target_width < w {
        return invalid(format!(
            "upsample_flow cannot shrink {h}x{w} to {target_height}x{target_width}"
        ));
    }
    let sy = h as f64 / target_height as f64;
    let sx = w as f64 / target_width as f64;
    let n = target_height * target_width;
    let mut vx = Vec::with_capacity(n);
    let mut vy = Vec::with_capacity(n);
    for y in 0..target_height {
        let src_y = (y as f64 + 0.5) * sy - 0.5;
        for x in 0..target_width {
            let src_x = (x as f64 + 0.5) * sx - 0.5;
            let (a, b) = flow.sample(src_x, src_y);
            vx.push(2.0 * a);
            vy.push(2.0 * b);
        }
    }
    Ok(FlowField { height: target_height, width: target_width, vx, vy })
}
