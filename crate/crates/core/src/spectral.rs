//! Periodic 2-D DFT helpers and the discrete Laplacian spectrum.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Eigenvalues of the n-th power of the periodic 5-point Laplacian,
/// `2^n (2 - cos(2 pi p / M) - cos(2 pi q / N))^n`, row-major `M x N`.
///
/// The stencil is taken with the sign that makes it positive semi-definite,
/// so entry (0, 0) is exactly zero and every other entry is positive.
pub fn laplacian_spectrum(height: usize, width: usize, order: u32) -> Vec<f64> {
    let mut out = Vec::with_capacity(height * width);
    for p in 0..height {
        let cp = (2.0 * PI * p as f64 / height as f64).cos();
        for q in 0..width {
            let cq = (2.0 * PI * q as f64 / width as f64).cos();
            let base = 2.0 * (2.0 - cp - cq);
            out.push(if p == 0 && q == 0 { 0.0 } else { base.powi(order as i32) });
        }
    }
    out
}

/// Planned forward/inverse 2-D transforms for one grid size.
#[derive(Clone)]
pub struct Fft2 {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish()
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

impl Fft2 {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn run(&self, buf: &mut [Complex64], rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
        assert_eq!(buf.len(), self.height * self.width);
        rows.process(buf);
        let mut t = vec![Complex64::new(0.0, 0.0); buf.len()];
        transpose(buf, &mut t, self.height, self.width);
        cols.process(&mut t);
        transpose(&t, buf, self.width, self.height);
    }

    /// Unnormalized forward DFT, in place.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.row_fwd, &self.col_fwd);
    }

    /// Inverse DFT including the `1 / (M N)` normalization, in place.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.row_inv, &self.col_inv);
        let scale = 1.0 / buf.len() as f64;
        for z in buf.iter_mut() {
            *z *= scale;
        }
    }

    /// `IDFT(multiplier * DFT(data))` for a real field, returning the real part.
    pub fn filter_real(&self, data: &[f64], multiplier: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        for (z, &m) in buf.iter_mut().zip(multiplier) {
            *z *= m;
        }
        self.inverse(&mut buf);
        buf.into_iter().map(|z| z.re).collect()
    }

    /// Filters two real fields with one complex transform.
    ///
    /// The multiplier must be real and symmetric under `p -> M - p`,
    /// `q -> N - q`; then the filtered real and imaginary parts stay
    /// separated and equal the two filtered inputs.
    pub fn filter_pair(&self, a: &[f64], b: &[f64], multiplier: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut buf: Vec<Complex64> =
            a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect();
        self.forward(&mut buf);
        for (z, &m) in buf.iter_mut().zip(multiplier) {
            *z *= m;
        }
        self.inverse(&mut buf);
        buf.into_iter().map(|z| (z.re, z.im)).unzip()
    }
}
