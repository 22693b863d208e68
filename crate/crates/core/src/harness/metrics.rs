use serde::{Deserialize, Serialize};

use crate::acquisition::Strategy;
use crate::error::{Error, Result};

/// Root-mean-square error over all components of all samples.
pub fn rmse(y: &[Vec<f64>], yhat: &[Vec<f64>]) -> f64 {
    let mut sse = 0.0;
    let mut n = 0usize;
    for (a, b) in y.iter().zip(yhat) {
        for (p, q) in a.iter().zip(b) {
            sse += (p - q) * (p - q);
            n += 1;
        }
    }
    if n == 0 {
        f64::NAN
    } else {
        (sse / n as f64).sqrt()
    }
}

/// Coefficient of determination in percent, pooled over output components.
pub fn r2_percent(y: &[Vec<f64>], yhat: &[Vec<f64>]) -> f64 {
    let ny = y.first().map_or(0, |v| v.len());
    let n = y.len() as f64;
    let mut sse = 0.0;
    let mut sst = 0.0;
    for i in 0..ny {
        let mean = y.iter().map(|v| v[i]).sum::<f64>() / n;
        for (a, b) in y.iter().zip(yhat) {
            sse += (a[i] - b[i]) * (a[i] - b[i]);
            sst += (a[i] - mean) * (a[i] - mean);
        }
    }
    (1.0 - sse / sst) * 100.0
}

/// `max(0, y − y_max, y_min − y)` summed over components.
pub fn violation(y: &[f64], y_min: &[f64], y_max: &[f64]) -> f64 {
    y.iter().enumerate().map(|(i, v)| (v - y_max[i]).max(y_min[i] - v).max(0.0)).sum()
}

/// Mean constraint violation of one run: outputs `y_k` for `k = n_init … n`,
/// summed and divided by `n − n_init`. Zero when `n = n_init`.
pub fn mcv(outputs: &[Vec<f64>], n_init: usize, n: usize, y_min: &[f64], y_max: &[f64]) -> f64 {
    if n <= n_init {
        return 0.0;
    }
    let hi = n.min(outputs.len().saturating_sub(1));
    let total: f64 = (n_init..=hi).map(|k| violation(&outputs[k], y_min, y_max)).sum();
    total / (n - n_init) as f64
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Mean absolute deviation around the mean.
pub fn mean_abs_dev(values: &[f64]) -> f64 {
    let v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - mean).abs()).sum::<f64>() / v.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub mad: f64,
    pub mean: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
        let mean = if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
        Summary { median: median(&v), mad: mean_abs_dev(&v), mean }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub strategy: Strategy,
    pub seed: u64,
    pub completed: bool,
    pub rmse_train: f64,
    pub rmse_test: f64,
    /// Percent.
    pub r2_test: f64,
    pub mcv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub strategy: Strategy,
    pub runs: usize,
    pub aborted: usize,
    pub rmse_train: Summary,
    pub rmse_test: Summary,
    pub r2_test: Summary,
    /// The mean is the MCV over runs.
    pub mcv: Summary,
}

impl Aggregate {
    /// Aborted runs are counted but excluded from the statistics.
    pub fn of(strategy: Strategy, runs: &[RunMetrics]) -> Self {
        let ok: Vec<&RunMetrics> = runs.iter().filter(|r| r.completed && r.strategy == strategy).collect();
        let total = runs.iter().filter(|r| r.strategy == strategy).count();
        let col = |f: fn(&RunMetrics) -> f64| Summary::of(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
        Aggregate {
            strategy,
            runs: ok.len(),
            aborted: total - ok.len(),
            rmse_train: col(|r| r.rmse_train),
            rmse_test: col(|r| r.rmse_test),
            r2_test: col(|r| r.r2_test),
            mcv: col(|r| r.mcv),
        }
    }
}

/// Per-run blocks and one aggregate block per strategy.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(default)]
    pub run: Vec<RunMetrics>,
    #[serde(default)]
    pub aggregate: Vec<Aggregate>,
}

impl MetricsReport {
    pub fn from_runs(runs: Vec<RunMetrics>) -> Self {
        let mut strategies: Vec<Strategy> = Vec::new();
        for r in &runs {
            if !strategies.contains(&r.strategy) {
                strategies.push(r.strategy);
            }
        }
        let aggregate = strategies.iter().map(|s| Aggregate::of(*s, &runs)).collect();
        MetricsReport { run: runs, aggregate }
    }

    pub fn aggregate_for(&self, s: Strategy) -> Option<&Aggregate> {
        self.aggregate.iter().find(|a| a.strategy == s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("metrics are always representable")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::parse(e.to_string()))
    }
}
