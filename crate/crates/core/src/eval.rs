//! Overlap, rank and endpoint-error measurements.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{FlowField, LabelMap};
use crate::rpca::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiceReport {
    pub scores: BTreeMap<u16, f64>,
    /// Unweighted mean over `scores`; 0 when no label is present.
    pub mean: f64,
    pub labels: BTreeSet<u16>,
}

/// Per-label Dice `2 |A & B| / (|A| + |B|)`. Without an explicit label set,
/// every nonzero label present in either map is scored. Labels absent from
/// both maps are left out of the mean.
pub fn dice(a: &LabelMap, b: &LabelMap, labels: Option<&BTreeSet<u16>>) -> Result<DiceReport> {
    if a.dims() != b.dims() {
        return invalid(format!("dice: dimension mismatch {:?} vs {:?}", a.dims(), b.dims()));
    }
    let labels: BTreeSet<u16> = match labels {
        Some(l) => l.clone(),
        None => a.label_set().union(&b.label_set()).copied().filter(|&l| l != 0).collect(),
    };
    let mut scores = BTreeMap::new();
    for &l in &labels {
        let (mut na, mut nb, mut both) = (0usize, 0usize, 0usize);
        for (&x, &y) in a.labels().iter().zip(b.labels()) {
            let (ia, ib) = (x == l, y == l);
            na += ia as usize;
            nb += ib as usize;
            both += (ia && ib) as usize;
        }
        if na + nb > 0 {
            scores.insert(l, 2.0 * both as f64 / (na + nb) as f64);
        }
    }
    let mean = if scores.is_empty() { 0.0 } else { scores.values().sum::<f64>() / scores.len() as f64 };
    Ok(DiceReport { scores, mean, labels })
}

pub const DEFAULT_RANK_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    /// Descending.
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub rel_tol: f64,
}

/// Number of singular values above `rel_tol * sigma_1`.
pub fn numerical_rank(x: &Matrix, rel_tol: f64) -> Result<RankReport> {
    if x.iter().any(|v| !v.is_finite()) {
        return invalid("numerical_rank: non-finite entries");
    }
    let mut sv: Vec<f64> = if x.is_empty() {
        Vec::new()
    } else {
        x.clone()
            .try_svd(false, false, f64::EPSILON, 0)
            .ok_or_else(|| Error::NumericFailure("SVD did not converge".into()))?
            .singular_values
            .iter()
            .copied()
            .collect()
    };
    sv.sort_by(|a, b| b.total_cmp(a));
    let top = sv.first().copied().unwrap_or(0.0);
    let rank = if top > 0.0 { sv.iter().filter(|&&s| s > rel_tol * top).count() } else { 0 };
    Ok(RankReport { singular_values: sv, rank, rel_tol })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndpointError {
    pub mean: f64,
    pub median: f64,
    pub count: usize,
}

/// Euclidean distance between two fields over pixels at least `margin` away
/// from every border.
pub fn endpoint_error(flow: &FlowField, truth: &FlowField, margin: usize) -> Result<EndpointError> {
    if flow.dims() != truth.dims() {
        return invalid(format!("endpoint_error: dimension mismatch {:?} vs {:?}", flow.dims(), truth.dims()));
    }
    let (h, w) = flow.dims();
    if 2 * margin >= h || 2 * margin >= w {
        return invalid(format!("margin {margin} leaves no interior in {h}x{w}"));
    }
    let mut errs = Vec::with_capacity((h - 2 * margin) * (w - 2 * margin));
    for y in margin..h - margin {
        for x in margin..w - margin {
            let (a, b) = flow.get(x, y);
            let (c, d) = truth.get(x, y);
            errs.push((a - c).hypot(b - d));
        }
    }
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    Ok(EndpointError { mean, median: median(&mut errs), count: errs.len() })
}

/// Median of a non-empty slice; averages the two central values for even
/// lengths.
pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dice_hand_cases() {
        let a = LabelMap::from_fn(4, 4, |_, y| (y == 0) as u16);
        assert_eq!(dice(&a, &a, None).unwrap().mean, 1.0);
        let b = LabelMap::from_fn(4, 4, |_, y| (y == 3) as u16);
        assert_eq!(dice(&a, &b, None).unwrap().mean, 0.0);
        let c = LabelMap::from_fn(4, 4, |x, y| (x < 2 && y < 2) as u16);
        let d = LabelMap::from_fn(4, 4, |x, y| ((1..3).contains(&x) && y < 2) as u16);
        assert_eq!(dice(&c, &d, None).unwrap().mean, 0.5);
    }

    #[test]
    fn dice_label_absent_from_one_scores_zero() {
        let a = LabelMap::from_fn(3, 3, |x, _| if x == 0 { 1 } else { 2 });
        let b = LabelMap::from_fn(3, 3, |x, _| if x == 0 { 1 } else { 0 });
        let r = dice(&a, &b, None).unwrap();
        assert_eq!(r.scores[&1], 1.0);
        assert_eq!(r.scores[&2], 0.0);
        assert_eq!(r.mean, 0.5);
        let only: BTreeSet<u16> = [1, 7].into_iter().collect();
        let r = dice(&a, &b, Some(&only)).unwrap();
        assert_eq!(r.scores.len(), 1);
    }

    #[test]
    fn rank_cases() {
        assert_eq!(numerical_rank(&Matrix::zeros(4, 3), 1e-3).unwrap().rank, 0);
        let cols = Matrix::from_fn(5, 4, |i, _| i as f64 + 1.0);
        assert_eq!(numerical_rank(&cols, 0.5).unwrap().rank, 1);
        let d = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1e-2, 1e-8]));
        let r = numerical_rank(&d, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(r.rank, 2);
        assert!(r.singular_values.windows(2).all(|p| p[0] >= p[1]));
    }

    #[test]
    fn endpoint_error_cases() {
        let a = FlowField::from_fn(10, 10, |x, y| (x as f64, y as f64));
        let e = endpoint_error(&a, &a, 2).unwrap();
        assert_eq!((e.mean, e.median), (0.0, 0.0));
        let b = FlowField::from_fn(10, 10, |x, y| (x as f64 + 3.0, y as f64 + 4.0));
        let e = endpoint_error(&a, &b, 0).unwrap();
        assert!((e.mean - 5.0).abs() < 1e-12 && (e.median - 5.0).abs() < 1e-12);
        assert!(endpoint_error(&a, &a, 5).is_err());
    }
}
