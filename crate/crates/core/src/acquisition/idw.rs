//! Inverse-distance weighting: weights, variance proxy and exploration term.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Squared-distance threshold below which a query counts as an exact hit.
pub const HIT_D2: f64 = 1e-24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdwKernel {
    /// `w = 1/d²`
    #[default]
    InverseSquare,
    /// `w = e^{-d²}/d²`
    ExpInverseSquare,
}

impl IdwKernel {
    #[inline]
    pub fn weight(self, d2: f64) -> f64 {
        match self {
            IdwKernel::InverseSquare => 1.0 / d2,
            IdwKernel::ExpInverseSquare => (-d2).exp() / d2,
        }
    }
}

/// Stored points as one row-major buffer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlatPoints {
    dim: usize,
    data: Vec<f64>,
}

impl FlatPoints {
    pub fn new(dim: usize) -> Self {
        FlatPoints { dim, data: Vec::new() }
    }

    pub fn from_rows<'a, I: IntoIterator<Item = &'a [f64]>>(dim: usize, rows: I) -> Self {
        let mut p = Self::new(dim);
        for r in rows {
            p.push(r);
        }
        p
    }

    pub fn push(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.dim, "point dimension");
        self.data.extend_from_slice(row);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 { 0 } else { self.data.len() / self.dim }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn d2_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.rows().map(|r| sq_dist(r, x)));
    }

    pub fn d2(&self, x: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        self.d2_into(x, &mut v);
        v
    }
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// First stored index within the hit threshold.
#[inline]
pub fn first_hit(d2: &[f64]) -> Option<usize> {
    d2.iter().position(|&d| d <= HIT_D2)
}

/// Normalized weights `v_j` from squared distances.
pub fn coeffs_from_d2(d2: &[f64], kernel: IdwKernel) -> Vec<f64> {
    let mut v = vec![0.0; d2.len()];
    if let Some(h) = first_hit(d2) {
        v[h] = 1.0;
        return v;
    }
    match kernel {
        IdwKernel::InverseSquare => {
            for (vi, d) in v.iter_mut().zip(d2) {
                *vi = 1.0 / d;
            }
        }
        IdwKernel::ExpInverseSquare => {
            // shift by the smallest d² so the largest weight never underflows
            let dmin = d2.iter().cloned().fold(f64::INFINITY, f64::min);
            for (vi, d) in v.iter_mut().zip(d2) {
                *vi = (dmin - d).exp() / d;
            }
        }
    }
    let s: f64 = v.iter().sum();
    for vi in &mut v {
        *vi /= s;
    }
    v
}

/// `(s², z)` for one query from its squared distances to the stored set and
/// the stored residuals `r_j`.
pub fn variance_and_exploration(d2: &[f64], residuals: &[f64], kernel: IdwKernel) -> (f64, f64) {
    debug_assert_eq!(d2.len(), residuals.len());
    if let Some(h) = first_hit(d2) {
        return (residuals[h], 0.0);
    }
    match kernel {
        IdwKernel::InverseSquare => {
            let (mut sw, mut swr) = (0.0, 0.0);
            for (d, r) in d2.iter().zip(residuals) {
                let w = 1.0 / d;
                sw += w;
                swr += w * r;
            }
            (swr / sw, exploration_from_sum(sw))
        }
        IdwKernel::ExpInverseSquare => {
            let dmin = d2.iter().cloned().fold(f64::INFINITY, f64::min);
            let (mut sw, mut swr) = (0.0, 0.0);
            for (d, r) in d2.iter().zip(residuals) {
                let w = (dmin - d).exp() / d;
                sw += w;
                swr += w * r;
            }
            // Σw = e^{-dmin} · Σ(shifted); 1/Σw computed in log space
            let inv = (dmin - sw.ln()).exp();
            (swr / sw, (2.0 / std::f64::consts::PI) * inv.atan())
        }
    }
}

/// Exploration term alone.
pub fn exploration_from_d2(d2: &[f64], kernel: IdwKernel) -> f64 {
    if first_hit(d2).is_some() {
        return 0.0;
    }
    match kernel {
        IdwKernel::InverseSquare => exploration_from_sum(d2.iter().map(|d| 1.0 / d).sum()),
        IdwKernel::ExpInverseSquare => {
            let dmin = d2.iter().cloned().fold(f64::INFINITY, f64::min);
            let sw: f64 = d2.iter().map(|d| (dmin - d).exp() / d).sum();
            let inv = (dmin - sw.ln()).exp();
            (2.0 / std::f64::consts::PI) * inv.atan()
        }
    }
}

#[inline]
fn exploration_from_sum(sw: f64) -> f64 {
    (2.0 / std::f64::consts::PI) * (1.0 / sw).atan()
}

pub fn idw_coeffs(points: &[DVector<f64>], x: &DVector<f64>, kernel: IdwKernel) -> Vec<f64> {
    let d2: Vec<f64> = points.iter().map(|p| sq_dist(p.as_slice(), x.as_slice())).collect();
    coeffs_from_d2(&d2, kernel)
}

pub fn idw_exploration(points: &[DVector<f64>], x: &DVector<f64>, kernel: IdwKernel) -> f64 {
    let d2: Vec<f64> = points.iter().map(|p| sq_dist(p.as_slice(), x.as_slice())).collect();
    exploration_from_d2(&d2, kernel)
}

/// `s²(x) = Σ v_j(x) r_j` over stored points with residuals `r_j`.
pub fn idw_variance(points: &[DVector<f64>], residuals: &[f64], x: &DVector<f64>, kernel: IdwKernel) -> f64 {
    let d2: Vec<f64> = points.iter().map(|p| sq_dist(p.as_slice(), x.as_slice())).collect();
    variance_and_exploration(&d2, residuals, kernel).0
}
