//! Robust PCA by alternating proximal steps: `M = L + S` with `L` low rank
//! and `S` sparse.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type Matrix = DMatrix<f64>;

/// Elementwise soft threshold `sign(x) max(|x| - tau, 0)`.
pub fn shrink(x: &Matrix, tau: f64) -> Matrix {
    x.map(|v| shrink_scalar(v, tau))
}

#[inline]
pub fn shrink_scalar(v: f64, tau: f64) -> f64 {
    let m = v.abs() - tau;
    if m > 0.0 {
        m.copysign(v)
    } else {
        0.0
    }
}

/// Singular value thresholding. Returns the reconstruction and the number of
/// singular values that survived, which is its exact rank.
pub fn svt(x: &Matrix, tau: f64) -> Result<(Matrix, usize)> {
    let (m, n) = x.shape();
    if m == 0 || n == 0 {
        return Ok((x.clone(), 0));
    }
    let svd = x
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::NumericFailure(format!("SVD of a {m}x{n} matrix did not converge")))?;
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let mut out = Matrix::zeros(m, n);
    let mut kept = 0;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        let s = s - tau;
        if s > 0.0 {
            kept += 1;
            out += (u.column(i) * s) * v_t.row(i);
        }
    }
    Ok((out, kept))
}

/// Which thresholds and multiplier sign the iteration uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdConvention {
    /// `L = D_mu(M - S - Y/mu)`, `S = S_{lambda mu}(M - L + Y/mu)`.
    #[default]
    Paper,
    /// Augmented-Lagrangian form: `L = D_{1/mu}(M - S + Y/mu)`,
    /// `S = S_{lambda/mu}(M - L + Y/mu)`.
    Classical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RpcaConfig {
    pub max_iter: usize,
    /// Bound on `|M - L - S|_F^2 / |M|_F^2`.
    pub tol: f64,
    /// Sparsity weight; `1 / (3 max(m, n))` when unset.
    pub lambda: Option<f64>,
    /// Penalty; `10 lambda` when unset.
    pub mu: Option<f64>,
    pub convention: ThresholdConvention,
    /// Overrides the low-rank threshold implied by `convention`.
    pub l_threshold: Option<f64>,
    /// Overrides the sparse threshold implied by `convention`.
    pub s_threshold: Option<f64>,
}

impl Default for RpcaConfig {
    fn default() -> Self {
        Self {
            max_iter: 300,
            tol: 1e-7,
            lambda: None,
            mu: None,
            convention: ThresholdConvention::Paper,
            l_threshold: None,
            s_threshold: None,
        }
    }
}

/// Parameters after defaults are resolved against a matrix shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedRpca {
    pub lambda: f64,
    pub mu: f64,
    pub l_threshold: f64,
    pub s_threshold: f64,
    /// Sign of `Y / mu` in the low-rank step.
    pub l_multiplier_sign: f64,
}

impl RpcaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter < 1 {
            return invalid("rpca max_iter must be >= 1");
        }
        if !(self.tol > 0.0) {
            return invalid(format!("rpca tol must be > 0, got {}", self.tol));
        }
        for (name, v) in [
            ("lambda", self.lambda),
            ("mu", self.mu),
            ("l_threshold", self.l_threshold),
            ("s_threshold", self.s_threshold),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return invalid(format!("rpca {name} must be > 0, got {v}"));
                }
            }
        }
        Ok(())
    }

    pub fn resolve(&self, rows: usize, cols: usize) -> ResolvedRpca {
        let lambda = self.lambda.unwrap_or(1.0 / (3.0 * rows.max(cols) as f64));
        let mu = self.mu.unwrap_or(10.0 * lambda);
        let (lt, st, sign) = match self.convention {
            ThresholdConvention::Paper => (mu, lambda * mu, -1.0),
            ThresholdConvention::Classical => (1.0 / mu, lambda / mu, 1.0),
        };
        ResolvedRpca {
            lambda,
            mu,
            l_threshold: self.l_threshold.unwrap_or(lt),
            s_threshold: self.s_threshold.unwrap_or(st),
            l_multiplier_sign: sign,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RpcaResult {
    pub l: Matrix,
    pub s: Matrix,
    pub y: Matrix,
    pub iterations: usize,
    /// `|M - L - S|_F^2 / |M|_F^2` after each iteration.
    pub residuals: Vec<f64>,
    /// Exact rank of the final `L`.
    pub rank: usize,
    pub converged: bool,
    pub params: ResolvedRpca,
}

impl RpcaResult {
    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(0.0)
    }
}

/// State of the iteration, exposed so callers can step it.
#[derive(Debug, Clone)]
pub struct RpcaSolver {
    m: Matrix,
    m_norm2: f64,
    pub l: Matrix,
    pub s: Matrix,
    pub y: Matrix,
    pub rank: usize,
    pub params: ResolvedRpca,
}

impl RpcaSolver {
    pub fn new(m: Matrix, config: &RpcaConfig) -> Result<Self> {
        config.validate()?;
        if m.iter().any(|v| !v.is_finite()) {
            return invalid("rpca input contains non-finite entries");
        }
        let (r, c) = m.shape();
        let params = config.resolve(r, c);
        let m_norm2 = m.norm_squared();
        Ok(Self { l: Matrix::zeros(r, c), s: Matrix::zeros(r, c), y: Matrix::zeros(r, c), rank: 0, m, m_norm2, params })
    }

    /// One L, S, Y sweep; returns the squared relative residual.
    pub fn step(&mut self) -> Result<f64> {
        let p = self.params;
        let inv_mu = 1.0 / p.mu;
        let l_arg = &self.m - &self.s + &self.y * (p.l_multiplier_sign * inv_mu);
        let (l, rank) = svt(&l_arg, p.l_threshold)?;
        self.l = l;
        self.rank = rank;
        let s_arg = &self.m - &self.l + &self.y * inv_mu;
        self.s = shrink(&s_arg, p.s_threshold);
        let r = &self.m - &self.l - &self.s;
        self.y += &r * p.mu;
        Ok(r.norm_squared() / self.m_norm2)
    }
}

pub fn rpca_decompose(m: &Matrix, config: &RpcaConfig) -> Result<RpcaResult> {
    let mut solver = RpcaSolver::new(m.clone(), config)?;
    let mut residuals = Vec::new();
    let mut converged = false;
    if solver.m_norm2 > 0.0 {
        while residuals.len() < config.max_iter {
            let r = solver.step()?;
            residuals.push(r);
            if r <= config.tol {
                converged = true;
                break;
            }
        }
    } else {
        converged = true;
    }
    Ok(RpcaResult {
        iterations: residuals.len(),
        residuals,
        rank: solver.rank,
        converged,
        params: solver.params,
        l: solver.l,
        s: solver.s,
        y: solver.y,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shrink_scalar_cases() {
        assert_eq!(shrink_scalar(3.0, 1.0), 2.0);
        assert_eq!(shrink_scalar(-0.5, 1.0), 0.0);
        assert_eq!(shrink_scalar(-2.5, 1.0), -1.5);
        let x = Matrix::from_row_slice(2, 2, &[1.0, -2.0, 0.0, 4.0]);
        assert_eq!(shrink(&x, 0.0), x);
    }

    #[test]
    fn svt_diagonal_case() {
        let x = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0]));
        let (out, rank) = svt(&x, 2.0).unwrap();
        assert_eq!(rank, 1);
        assert!((out[(0, 0)] - 1.0).abs() < 1e-14);
        assert!(out[(0, 1)].abs() < 1e-14 && out[(1, 0)].abs() < 1e-14 && out[(1, 1)].abs() < 1e-14);
    }

    #[test]
    fn svt_zero_threshold_reconstructs() {
        let x = Matrix::from_fn(7, 4, |i, j| ((i * 5 + j * 3) % 7) as f64 - 3.0);
        let (out, _) = svt(&x, 0.0).unwrap();
        assert!((out - x).amax() < 1e-10);
    }

    #[test]
    fn zero_matrix_returns_immediately() {
        let r = rpca_decompose(&Matrix::zeros(5, 3), &RpcaConfig::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.l, Matrix::zeros(5, 3));
        assert_eq!(r.s, Matrix::zeros(5, 3));
    }

    #[test]
    fn default_parameters_follow_shape() {
        let p = RpcaConfig::default().resolve(60, 40);
        assert!((p.lambda - 1.0 / 180.0).abs() < 1e-15);
        assert!((p.mu - 10.0 / 180.0).abs() < 1e-15);
        assert_eq!(p.l_threshold, p.mu);
        assert!((p.s_threshold - p.lambda * p.mu).abs() < 1e-18);
        let c = RpcaConfig { convention: ThresholdConvention::Classical, ..Default::default() }.resolve(60, 40);
        assert!((c.l_threshold - 1.0 / c.mu).abs() < 1e-12);
    }
}
