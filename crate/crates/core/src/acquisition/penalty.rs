//! Soft output-constraint penalties and the IDW confidence scaling `κ_α`.

use serde::{Deserialize, Serialize};

use super::idw::{FlatPoints, IdwKernel, HIT_D2};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyMode {
    #[default]
    None,
    Plain,
    /// Bounds tightened by `min(κ_α s(x), β (y_max − y_min))`.
    Shrunk,
}

/// Output bounds are in scaled units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub y_min: Vec<f64>,
    pub y_max: Vec<f64>,
    pub rho: f64,
    pub mode: PenaltyMode,
    pub alpha_quantile: f64,
    pub beta_cap: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig::none()
    }
}

impl PenaltyConfig {
    pub fn none() -> Self {
        PenaltyConfig { y_min: vec![], y_max: vec![], rho: 0.0, mode: PenaltyMode::None, alpha_quantile: 0.9, beta_cap: 1.0 / 3.0 }
    }

    pub fn new(y_min: Vec<f64>, y_max: Vec<f64>, rho: f64, mode: PenaltyMode) -> Result<Self> {
        let c = PenaltyConfig { y_min, y_max, rho, mode, alpha_quantile: 0.9, beta_cap: 1.0 / 3.0 };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == PenaltyMode::None {
            return Ok(());
        }
        if self.y_min.len() != self.y_max.len() || self.y_min.is_empty() {
            return Err(Error::InvalidConfig("output bounds must be non-empty and of equal length".into()));
        }
        if self.y_min.iter().zip(&self.y_max).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidConfig("y_min must be below y_max".into()));
        }
        if !(self.rho >= 0.0) {
            return Err(Error::InvalidConfig("rho must be nonnegative".into()));
        }
        if !(self.alpha_quantile > 0.0 && self.alpha_quantile <= 1.0) {
            return Err(Error::InvalidConfig("alpha_quantile must lie in (0, 1]".into()));
        }
        if !(self.beta_cap > 0.0) {
            return Err(Error::InvalidConfig("beta_cap must be positive".into()));
        }
        Ok(())
    }

    /// Whether evaluating the penalty can ever return nonzero.
    pub fn is_active(&self) -> bool {
        self.mode != PenaltyMode::None && self.rho > 0.0
    }

    pub fn needs_kappa(&self) -> bool {
        self.is_active() && self.mode == PenaltyMode::Shrunk
    }

    pub fn plain(&self, yhat: &[f64]) -> f64 {
        self.with_margin(yhat, |_| 0.0)
    }

    /// `margin = κ_α s(x)` before the β cap.
    pub fn shrunk(&self, yhat: &[f64], margin: f64) -> f64 {
        self.with_margin(yhat, |i| margin.min(self.beta_cap * (self.y_max[i] - self.y_min[i])))
    }

    fn with_margin(&self, yhat: &[f64], m: impl Fn(usize) -> f64) -> f64 {
        if self.rho == 0.0 {
            return 0.0;
        }
        let mut v = 0.0;
        for (i, y) in yhat.iter().enumerate() {
            let t = m(i);
            v += (y - self.y_max[i] + t).max(0.0) + (self.y_min[i] - y + t).max(0.0);
        }
        self.rho * v
    }

    /// Dispatch on the configured mode; `margin` is ignored unless shrunk.
    pub fn evaluate(&self, yhat: &[f64], margin: f64) -> f64 {
        match self.mode {
            PenaltyMode::None => 0.0,
            PenaltyMode::Plain => self.plain(yhat),
            PenaltyMode::Shrunk => self.shrunk(yhat, margin),
        }
    }
}

/// Type-7 sample quantile of unsorted data.
pub fn quantile(values: &mut [f64], alpha: f64) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    let h = (n - 1) as f64 * alpha;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return values[n - 1];
    }
    values[lo] + (h - lo as f64) * (values[lo + 1] - values[lo])
}

/// Pairwise IDW weights among stored points, kept so leave-one-out variances
/// cost `O(k²)` multiply-adds per evaluation instead of `O(k²·dim)`.
#[derive(Debug, Clone)]
pub struct LooCache {
    kernel: IdwKernel,
    points: FlatPoints,
    /// Strict lower triangle, row `i` holds `w(d_ij)` for `j < i`; hits are stored as `∞`.
    w: Vec<f64>,
}

impl LooCache {
    pub fn new(dim: usize, kernel: IdwKernel) -> Self {
        LooCache { kernel, points: FlatPoints::new(dim), w: Vec::new() }
    }

    pub fn from_points(points: &FlatPoints, kernel: IdwKernel) -> Self {
        let mut c = Self::new(points.dim(), kernel);
        for r in points.rows() {
            c.push(r);
        }
        c
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn push(&mut self, x: &[f64]) {
        for r in self.points.rows() {
            let d2: f64 = r.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            self.w.push(if d2 <= HIT_D2 { f64::INFINITY } else { self.kernel.weight(d2) });
        }
        self.points.push(x);
    }

    /// `s²_{−i}(x_i)` for every stored `i`; `None` when nothing else is stored.
    ///
    /// One pass over the triangle adds each pair to both ends. Per point the
    /// terms still arrive in ascending `j`, and an exact hit resolves to the
    /// lowest-index duplicate.
    pub fn loo_variances(&self, residuals: &[f64]) -> Vec<Option<f64>> {
        let n = self.len();
        let mut sw = vec![0.0; n];
        let mut swr = vec![0.0; n];
        let mut hit: Vec<Option<usize>> = vec![None; n];
        for i in 1..n {
            let row = &self.w[i * (i - 1) / 2..i * (i + 1) / 2];
            for (j, &w) in row.iter().enumerate() {
                if w.is_infinite() {
                    hit[i].get_or_insert(j);
                    hit[j].get_or_insert(i);
                    continue;
                }
                sw[i] += w;
                swr[i] += w * residuals[j];
                sw[j] += w;
                swr[j] += w * residuals[i];
            }
        }
        (0..n)
            .map(|i| match hit[i] {
                Some(j) => Some(residuals[j]),
                None => (sw[i] > 0.0).then(|| swr[i] / sw[i]),
            })
            .collect()
    }

    /// Upper-α quantile of `|CV_i| / s_{−i}(x_i)`, ignoring denominators below `1e-12`.
    pub fn kappa(&self, residuals: &[f64], cv_abs: &[f64], alpha: f64) -> Result<f64> {
        let mut ratios: Vec<f64> = self
            .loo_variances(residuals)
            .into_iter()
            .zip(cv_abs)
            .filter_map(|(s2, cv)| {
                let s = s2?.max(0.0).sqrt();
                (s >= 1e-12).then(|| cv / s)
            })
            .collect();
        if ratios.len() < 2 {
            return Err(Error::InsufficientData(format!("{} usable cross-validation ratios", ratios.len())));
        }
        Ok(quantile(&mut ratios, alpha))
    }
}

/// One-shot `κ_α` over a stored set.
pub fn kappa_alpha(points: &FlatPoints, residuals: &[f64], cv_abs: &[f64], kernel: IdwKernel, alpha: f64) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InsufficientData("at least two stored samples are needed".into()));
    }
    LooCache::from_points(points, kernel).kappa(residuals, cv_abs, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(mode: PenaltyMode) -> PenaltyConfig {
        PenaltyConfig::new(vec![0.03], vec![0.08], 1e12, mode).unwrap()
    }

    #[test]
    fn plain_penalty_values() {
        let c = cfg(PenaltyMode::Plain);
        assert_eq!(c.plain(&[0.05]), 0.0);
        assert!((c.plain(&[0.09]) - 1e10).abs() < 1e-3);
        assert!((c.plain(&[0.01]) - 2e10).abs() < 1e-3);
        let mut z = c.clone();
        z.rho = 0.0;
        assert_eq!(z.plain(&[5.0]), 0.0);
        assert_eq!(z.shrunk(&[5.0], 1.0), 0.0);
    }

    #[test]
    fn shrunk_degenerates_and_saturates() {
        let c = cfg(PenaltyMode::Shrunk);
        for y in [0.0, 0.04, 0.079, 0.2] {
            assert_eq!(c.shrunk(&[y], 0.0), c.plain(&[y]));
        }
        // cap is β (y_max − y_min) = 0.05/3
        let cap: f64 = 0.05 / 3.0;
        let expect = 1e12 * (0.05 - 0.08 + cap).max(0.0) + 1e12 * (0.03 - 0.05 + cap).max(0.0);
        assert_eq!(c.shrunk(&[0.05], 1e9), expect);
        assert_eq!(c.shrunk(&[0.05], 1e9), c.shrunk(&[0.05], cap));
    }

    #[test]
    fn shrunk_dominates_plain() {
        let c = cfg(PenaltyMode::Shrunk);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let y = rng.random_range(-0.1..0.2);
            let m = rng.random_range(0.0..0.1);
            assert!(c.shrunk(&[y], m) >= c.plain(&[y]));
        }
    }

    #[test]
    fn never_both_bounds_violated() {
        let c = cfg(PenaltyMode::Plain);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let y: f64 = rng.random_range(-1.0..1.0);
            assert!(!(y > c.y_max[0] && y < c.y_min[0]));
        }
    }

    #[test]
    fn quantile_endpoints() {
        let mut v = vec![3.0, 1.0, 2.0, 10.0];
        assert_eq!(quantile(&mut v, 1.0), 10.0);
        assert_eq!(quantile(&mut v, 0.0), 1.0);
        assert!((quantile(&mut v, 0.5) - 2.5).abs() < 1e-15);
    }

    /// Leave-one-out recomputed from scratch for each i.
    fn brute_kappa(pts: &[Vec<f64>], r: &[f64], cv: &[f64], alpha: f64) -> f64 {
        let mut ratios = Vec::new();
        for i in 0..pts.len() {
            let mut sw = 0.0;
            let mut swr = 0.0;
            for j in 0..pts.len() {
                if j != i {
                    let d2: f64 = pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b).powi(2)).sum();
                    sw += 1.0 / d2;
                    swr += r[j] / d2;
                }
            }
            let s = (swr / sw).sqrt();
            if s >= 1e-12 {
                ratios.push(cv[i] / s);
            }
        }
        ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let h = (ratios.len() - 1) as f64 * alpha;
        let lo = h.floor() as usize;
        if lo + 1 >= ratios.len() {
            return ratios[lo];
        }
        ratios[lo] + (h - lo as f64) * (ratios[lo + 1] - ratios[lo])
    }

    #[test]
    fn kappa_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vec<f64>> = (0..20).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let cv: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..0.5)).collect();
        let r: Vec<f64> = cv.iter().map(|c| c * c).collect();
        let flat = FlatPoints::from_rows(3, pts.iter().map(|p| p.as_slice()));
        for alpha in [0.5, 0.9, 1.0] {
            let k = kappa_alpha(&flat, &r, &cv, IdwKernel::InverseSquare, alpha).unwrap();
            assert!((k - brute_kappa(&pts, &r, &cv, alpha)).abs() < 1e-10);
        }
    }

    #[test]
    fn kappa_zero_residuals_and_errors() {
        let flat = FlatPoints::from_rows(1, [[0.0].as_slice(), &[1.0], &[2.0]]);
        // zero residuals: every denominator vanishes, no usable ratio
        assert!(matches!(kappa_alpha(&flat, &[0.0; 3], &[0.0; 3], IdwKernel::InverseSquare, 0.9), Err(Error::InsufficientData(_))));
        // zero CV errors with nonzero variance: κ = 0
        assert_eq!(kappa_alpha(&flat, &[1.0; 3], &[0.0; 3], IdwKernel::InverseSquare, 0.9).unwrap(), 0.0);
        let one = FlatPoints::from_rows(1, [[0.0].as_slice()]);
        assert!(kappa_alpha(&one, &[1.0], &[1.0], IdwKernel::InverseSquare, 0.9).is_err());
    }

    #[test]
    fn incremental_cache_equals_rebuilt() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut c = LooCache::new(2, IdwKernel::InverseSquare);
        let mut flat = FlatPoints::new(2);
        for _ in 0..15 {
            let p = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            c.push(&p);
            flat.push(&p);
        }
        c.push(&[0.5, 0.5]);
        flat.push(&[0.5, 0.5]);
        c.push(&[0.5, 0.5]);
        flat.push(&[0.5, 0.5]);
        let r: Vec<f64> = (0..17).map(|i| 0.01 * i as f64).collect();
        assert_eq!(c.loo_variances(&r), LooCache::from_points(&flat, IdwKernel::InverseSquare).loo_variances(&r));
        // duplicates see each other as exact hits
        let v = c.loo_variances(&r);
        assert_eq!(v[15], Some(r[16]));
        assert_eq!(v[16], Some(r[15]));
    }

    #[test]
    fn loo_variances_match_refitting_without_each_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<[f64; 3]> = (0..40).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let r: Vec<f64> = (0..40).map(|_| rng.random_range(0.0..0.2)).collect();
        let c = LooCache::from_points(&FlatPoints::from_rows(3, pts.iter().map(|p| &p[..])), IdwKernel::InverseSquare);
        let v = c.loo_variances(&r);
        for i in 0..40 {
            let (mut sw, mut swr) = (0.0, 0.0);
            for j in (0..40).filter(|&j| j != i) {
                let d2: f64 = (0..3).map(|t| (pts[i][t] - pts[j][t]).powi(2)).sum();
                sw += 1.0 / d2;
                swr += r[j] / d2;
            }
            assert!((v[i].unwrap() - swr / sw).abs() < 1e-12);
        }
    }
}
