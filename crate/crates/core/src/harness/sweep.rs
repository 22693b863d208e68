use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use super::metrics::{mean_abs_dev, median, MetricsReport};
use super::{Experiment, RunOutcome};
use crate::acquisition::Strategy;
use crate::error::{Error, Result};

/// Median and mean absolute deviation of the test RMSE across runs, per recorded step.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub strategy: Strategy,
    pub k: Vec<usize>,
    pub median: Vec<f64>,
    pub mad: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub report: MetricsReport,
    pub curves: Vec<Curve>,
    pub outcomes: Vec<RunOutcome>,
}

/// Run every strategy for seeds `base, base + 1, …, base + runs − 1`.
/// Seeds run in parallel when `parallel` is set; results are ordered by
/// strategy, then seed, either way.
pub fn sweep(exp: &Experiment, strategies: &[Strategy], runs: usize, parallel: bool) -> Result<SweepResult> {
    let base = exp.cfg.run.seed;
    let jobs: Vec<(Strategy, u64)> = strategies.iter().flat_map(|s| (0..runs as u64).map(move |i| (*s, base + i))).collect();
    let outcomes: Vec<RunOutcome> = if parallel {
        jobs.par_iter().map(|(s, seed)| exp.run(*s, *seed)).collect::<Result<_>>()?
    } else {
        jobs.iter().map(|(s, seed)| exp.run(*s, *seed)).collect::<Result<_>>()?
    };
    let aborted = outcomes.iter().filter(|o| !o.trace.status.is_completed()).count();
    if aborted > 0 {
        log::warn!("{aborted} of {} runs aborted and are left out of the medians", outcomes.len());
    }
    let report = MetricsReport::from_runs(outcomes.iter().map(|o| o.metrics.clone()).collect());
    let per_run: Vec<(Strategy, bool, Vec<(usize, f64)>)> =
        outcomes.iter().map(|o| (o.strategy, o.trace.status.is_completed(), o.curve.clone())).collect();
    let curves = build_curves(strategies, &per_run);
    Ok(SweepResult { report, curves, outcomes })
}

/// Aggregate per-run curves; aborted runs are skipped.
pub fn build_curves(strategies: &[Strategy], runs: &[(Strategy, bool, Vec<(usize, f64)>)]) -> Vec<Curve> {
    strategies
        .iter()
        .map(|s| {
            let mut at: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            for (_, _, c) in runs.iter().filter(|(rs, ok, _)| rs == s && *ok) {
                for (k, v) in c {
                    at.entry(*k).or_default().push(*v);
                }
            }
            Curve {
                strategy: *s,
                k: at.keys().copied().collect(),
                median: at.values().map(|v| median(v)).collect(),
                mad: at.values().map(|v| mean_abs_dev(v)).collect(),
            }
        })
        .collect()
}

/// Plot-ready CSV: `k,<s>_median,<s>_mad,…`; missing points are left empty.
pub fn write_curves_csv<W: Write>(curves: &[Curve], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["k".to_string()];
    for c in curves {
        header.push(format!("{}_median", c.strategy));
        header.push(format!("{}_mad", c.strategy));
    }
    wr.write_record(&header)?;
    let mut ks: Vec<usize> = curves.iter().flat_map(|c| c.k.iter().copied()).collect();
    ks.sort_unstable();
    ks.dedup();
    for k in ks {
        let mut row = vec![k.to_string()];
        for c in curves {
            match c.k.binary_search(&k) {
                Ok(i) => {
                    row.push(format!("{:e}", c.median[i]));
                    row.push(format!("{:e}", c.mad[i]));
                }
                Err(_) => row.extend([String::new(), String::new()]),
            }
        }
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

fn run_stem(s: Strategy, seed: u64) -> String {
    format!("{s}-{seed}")
}

impl SweepResult {
    /// `metrics.toml`, `rmse_curves.csv`, and per run under `runs/`: the trace,
    /// its RMSE curve and the final model.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let runs = dir.join("runs");
        std::fs::create_dir_all(&runs)?;
        std::fs::write(dir.join("metrics.toml"), self.report.to_toml_string())?;
        write_curves_csv(&self.curves, std::fs::File::create(dir.join("rmse_curves.csv"))?)?;
        for o in &self.outcomes {
            let stem = run_stem(o.strategy, o.seed);
            o.trace.save_csv(&runs.join(format!("{stem}.csv")))?;
            save_curve(&o.curve, &runs.join(format!("{stem}.curve.csv")))?;
            if let Some(ck) = &o.trace.checkpoint {
                ck.save(runs.join(format!("{stem}.ckpt")))?;
            }
        }
        Ok(())
    }
}

pub fn save_curve(curve: &[(usize, f64)], path: &Path) -> Result<()> {
    let mut wr = csv::Writer::from_path(path)?;
    wr.write_record(["k", "rmse_test"])?;
    for (k, v) in curve {
        wr.write_record([k.to_string(), format!("{v:e}")])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn load_curve(path: &Path) -> Result<Vec<(usize, f64)>> {
    let mut rd = csv::Reader::from_path(path)?;
    rd.deserialize::<(usize, f64)>().map(|r| r.map_err(Error::from)).collect()
}

/// Rebuild the aggregated curves from a saved sweep directory.
pub fn curves_from_dir(dir: &Path) -> Result<Vec<Curve>> {
    let runs = dir.join("runs");
    let mut entries: Vec<_> = std::fs::read_dir(&runs)?.collect::<std::io::Result<Vec<_>>>()?;
    entries.sort_by_key(|e| e.file_name());
    let mut strategies: Vec<Strategy> = Vec::new();
    let mut per_run = Vec::new();
    for e in entries {
        let name = e.file_name().to_string_lossy().into_owned();
        let Some(stem) = name.strip_suffix(".curve.csv") else { continue };
        let s = stem
            .rsplit_once('-')
            .and_then(|(s, _)| Strategy::parse(s))
            .ok_or_else(|| Error::Parse { path: Some(e.path()), msg: "unrecognized run file name".into() })?;
        let trace = super::RunTrace::load_csv(&runs.join(format!("{stem}.csv")))?;
        if !strategies.contains(&s) {
            strategies.push(s);
        }
        per_run.push((s, trace.status.is_completed(), load_curve(&e.path())?));
    }
    if per_run.is_empty() {
        return Err(Error::InvalidConfig(format!("no run curves under {}", runs.display())));
    }
    // keep the sweep's column order when its report is present
    if let Ok(text) = std::fs::read_to_string(dir.join("metrics.toml")) {
        let order: Vec<Strategy> = MetricsReport::from_toml_str(&text)?.aggregate.iter().map(|a| a.strategy).collect();
        strategies.sort_by_key(|s| order.iter().position(|o| o == s).unwrap_or(usize::MAX));
    }
    Ok(build_curves(&strategies, &per_run))
}
