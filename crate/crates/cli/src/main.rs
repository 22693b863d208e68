use std::path::{Path, PathBuf};
use std::process::ExitCode;

use activeid::harness::{sweep, Experiment, MetricsReport, RunOutcome, TestSet};
use activeid::models::Checkpoint;
use activeid::{ExperimentConfig, RunTrace, Strategy};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "activeid", version, about = "Design identification experiments online by active learning")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment and save its trace, model and metrics.
    Run(RunArgs),
    /// Run several strategies over consecutive seeds and aggregate.
    Sweep(SweepArgs),
    /// Recompute metrics from a saved trace and test set.
    Metrics(MetricsArgs),
    /// Write the per-step median/MAD test RMSE of a saved sweep as CSV.
    ExportPlots(ExportArgs),
}

#[derive(Args)]
struct Overrides {
    /// Enable the output-constraint penalty regardless of the config.
    #[arg(long, conflicts_with = "no_penalty")]
    penalty: bool,
    /// Disable the output-constraint penalty regardless of the config.
    #[arg(long)]
    no_penalty: bool,
    /// Score pool candidates on all cores (results are identical).
    #[arg(long)]
    parallel_scoring: bool,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if self.penalty {
            cfg.penalty.enabled = true;
        }
        if self.no_penalty {
            cfg.penalty.enabled = false;
        }
        if self.parallel_scoring {
            cfg.run.parallel = true;
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<Strategy>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: out/<config name>]
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated strategies.
    #[arg(long, value_delimiter = ',', value_parser = parse_strategy, default_value = "passive,ideal,gsx,igs")]
    strategies: Vec<Strategy>,
    /// Add query-by-committee to the strategy list.
    #[arg(long)]
    with_qbc: bool,
    /// Seeds per strategy [default: from the config]
    #[arg(long)]
    runs: Option<usize>,
    /// First seed [default: from the config]
    #[arg(long)]
    seed: Option<u64>,
    /// Run seeds one after another instead of in parallel.
    #[arg(long)]
    serial: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct MetricsArgs {
    /// Trace CSV; `run.toml` and `model.ckpt` are read from the same directory.
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    test: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    sweep: PathBuf,
    /// Destination [default: <sweep>/rmse_curves.csv]
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_strategy(s: &str) -> std::result::Result<Strategy, String> {
    Strategy::parse(s).ok_or_else(|| format!("unknown strategy `{s}` (passive, ideal, gsx, igs, qbc)"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Sweep(a) => cmd_sweep(a),
        Cmd::Metrics(a) => cmd_metrics(a),
        Cmd::ExportPlots(a) => cmd_export(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn default_out(cfg: &ExperimentConfig) -> PathBuf {
    let name = if cfg.name.is_empty() { "experiment" } else { &cfg.name };
    PathBuf::from("out").join(name)
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let mut cfg = load_config(&a.config)?;
    a.overrides.apply(&mut cfg);
    if let Some(s) = a.strategy {
        cfg.strategy = s;
    }
    if let Some(seed) = a.seed {
        cfg.run.seed = seed;
    }
    cfg.validate()?;
    let out = a.out.unwrap_or_else(|| default_out(&cfg));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let exp = Experiment::new(cfg.clone())?;
    let o = exp.run(cfg.strategy, cfg.run.seed)?;
    std::fs::write(out.join("run.toml"), cfg.to_toml_string())?;
    exp.test.save_csv(&out.join("test.csv"))?;
    save_outcome(&out, &o)?;
    let report = MetricsReport::from_runs(vec![o.metrics.clone()]);
    std::fs::write(out.join("metrics.toml"), report.to_toml_string())?;

    let m = &o.metrics;
    println!(
        "{} seed {}: rmse_train {:.4e}  rmse_test {:.4e}  R² {:.2}%  MCV {:.3e}",
        m.strategy, m.seed, m.rmse_train, m.rmse_test, m.r2_test, m.mcv
    );
    if let activeid::harness::RunStatus::Aborted { at, reason } = &o.trace.status {
        eprintln!("warning: run aborted at step {at}: {reason}");
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn save_outcome(dir: &Path, o: &RunOutcome) -> Result<()> {
    o.trace.save_csv(&dir.join("trace.csv"))?;
    activeid::harness::sweep::save_curve(&o.curve, &dir.join("rmse_curve.csv"))?;
    if let Some(ck) = &o.trace.checkpoint {
        ck.save(dir.join("model.ckpt"))?;
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let mut cfg = load_config(&a.config)?;
    a.overrides.apply(&mut cfg);
    if let Some(seed) = a.seed {
        cfg.run.seed = seed;
    }
    let runs = a.runs.unwrap_or(cfg.run.runs);
    if runs == 0 {
        bail!("--runs must be at least 1");
    }
    let mut strategies = a.strategies;
    if a.with_qbc && !strategies.contains(&Strategy::Qbc) {
        strategies.push(Strategy::Qbc);
    }
    if strategies.contains(&Strategy::Qbc) {
        // the committee-size check lives in validate and keys off the configured strategy
        let mut probe = cfg.clone();
        probe.strategy = Strategy::Qbc;
        probe.validate()?;
    }
    let out = a.out.unwrap_or_else(|| default_out(&cfg).join("sweep"));
    let exp = Experiment::new(cfg.clone())?;
    let res = sweep(&exp, &strategies, runs, !a.serial)?;
    res.save(&out)?;
    std::fs::write(out.join("run.toml"), cfg.to_toml_string())?;
    exp.test.save_csv(&out.join("test.csv"))?;

    println!("{:<8} {:>5} {:>12} {:>12} {:>8} {:>11}", "strategy", "runs", "rmse_test", "mad", "R² %", "MCV");
    for g in &res.report.aggregate {
        println!(
            "{:<8} {:>5} {:>12.4e} {:>12.4e} {:>8.2} {:>11.3e}",
            g.strategy.to_string(),
            g.runs - g.aborted,
            g.rmse_test.median,
            g.rmse_test.mad,
            g.r2_test.median,
            g.mcv.median
        );
        if g.aborted > 0 {
            eprintln!("warning: {} {} runs aborted and were left out", g.aborted, g.strategy);
        }
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_metrics(a: MetricsArgs) -> Result<()> {
    let dir = a.trace.parent().map(Path::to_path_buf).unwrap_or_default();
    let cfg_path = dir.join("run.toml");
    let cfg = load_config(&cfg_path)?;
    let trace = RunTrace::load_csv(&a.trace).with_context(|| format!("reading {}", a.trace.display()))?;
    let ck_path = dir.join("model.ckpt");
    let model = Checkpoint::load(&ck_path).with_context(|| format!("reading {}", ck_path.display()))?;
    let test = TestSet::load_csv(&a.test, 0).with_context(|| format!("reading {}", a.test.display()))?;
    let exp = Experiment::with_test_set(cfg.clone(), test)?;
    let m = exp.evaluate(&trace, &model, cfg.strategy, cfg.run.seed)?;
    print!("{}", MetricsReport::from_runs(vec![m]).to_toml_string());
    Ok(())
}

fn cmd_export(a: ExportArgs) -> Result<()> {
    let curves = activeid::harness::sweep::curves_from_dir(&a.sweep)?;
    let out = a.out.unwrap_or_else(|| a.sweep.join("rmse_curves.csv"));
    let f = std::fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
    activeid::harness::sweep::write_curves_csv(&curves, f)?;
    println!("wrote {}", out.display());
    Ok(())
}
