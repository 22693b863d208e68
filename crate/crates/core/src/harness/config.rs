use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::acquisition::{IdwKernel, PenaltyMode, Strategy};
use crate::error::{Error, Result};
use crate::plants::{make_benchmark, CustomPlant, PlantSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    LinearArx,
    #[default]
    NarxNn,
    RnnSs,
}

impl ModelKind {
    pub fn is_state_space(self) -> bool {
        self == ModelKind::RnnSs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub na: usize,
    pub nb: usize,
    pub n1: usize,
    pub n2: usize,
    pub nx: usize,
    pub n1x: usize,
    pub n2x: usize,
    pub n1y: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { kind: ModelKind::NarxNn, na: 3, nb: 3, n1: 8, n2: 6, nx: 2, n1x: 8, n2x: 4, n1y: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Passively sampled inputs `N_i`.
    pub n_init: usize,
    /// Experiment length `N`.
    pub n: usize,
    pub n_test: usize,
    /// Receding horizon `L`.
    pub horizon: usize,
    /// Largest `M^L` searched exhaustively.
    pub horizon_budget: usize,
    /// EKF passes over the initial data for NARX models (`N_e`).
    pub epochs: usize,
    /// Quasi-Newton iterations for the initial state-space fit (`N_b`).
    pub lbfgs_iters: usize,
    /// State reconstruction interval `m`.
    pub recon_interval: usize,
    /// Committee size for QBC.
    pub committee: usize,
    pub delta: f64,
    pub alpha_state: f64,
    pub kernel: IdwKernel,
    pub seed: u64,
    /// Seed of the shared test set; not offset per run.
    pub test_seed: u64,
    pub runs: usize,
    pub parallel: bool,
    /// Test RMSE is recorded every `rmse_stride` steps from `N_i` on; 0 records only the end.
    pub rmse_stride: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_init: 80,
            n: 1000,
            n_test: 2000,
            horizon: 1,
            horizon_budget: crate::acquisition::multistep::DEFAULT_BUDGET,
            epochs: 50,
            lbfgs_iters: 1000,
            recon_interval: 10,
            committee: 5,
            delta: 100.0,
            alpha_state: 1.0,
            kernel: IdwKernel::InverseSquare,
            seed: 0,
            test_seed: 20_000,
            runs: 1,
            parallel: false,
            rmse_stride: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltySettings {
    pub enabled: bool,
    pub rho: f64,
    pub mode: PenaltyMode,
    pub alpha_quantile: f64,
    pub beta_cap: f64,
    /// Raw-unit bounds; the plant's bounds are used when absent.
    pub y_min: Option<Vec<f64>>,
    pub y_max: Option<Vec<f64>>,
}

impl Default for PenaltySettings {
    fn default() -> Self {
        PenaltySettings {
            enabled: false,
            rho: 1e12,
            mode: PenaltyMode::Shrunk,
            alpha_quantile: 0.9,
            beta_cap: 1.0 / 3.0,
            y_min: None,
            y_max: None,
        }
    }
}

/// Scalar multiples of identity. `p0_x` and `q_x` only apply to state-space models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EkfSettings {
    pub p0: f64,
    pub p0_x: f64,
    pub q_theta: f64,
    pub q_x: f64,
    pub r: f64,
}

impl Default for EkfSettings {
    fn default() -> Self {
        EkfSettings { p0: 1e-2, p0_x: 1e-2, q_theta: 1e-10, q_x: 1e-8, r: 1e-2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    /// Benchmark name.
    #[serde(default)]
    pub plant: Option<String>,
    /// Custom plant description, resolved relative to the config file.
    #[serde(default)]
    pub plant_file: Option<PathBuf>,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub penalty: PenaltySettings,
    #[serde(default)]
    pub ekf: EkfSettings,
}

fn default_strategy() -> Strategy {
    Strategy::Ideal
}

impl ExperimentConfig {
    /// Defaults on a benchmark plant.
    pub fn for_benchmark(plant: &str) -> Self {
        ExperimentConfig {
            name: plant.to_string(),
            plant: Some(plant.to_string()),
            plant_file: None,
            strategy: Strategy::Ideal,
            model: ModelConfig::default(),
            run: RunConfig::default(),
            penalty: PenaltySettings::default(),
            ekf: EkfSettings::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse { msg, .. } => Error::Parse { path: Some(path.to_path_buf()), msg },
            other => other,
        })?;
        if let (Some(f), Some(dir)) = (&cfg.plant_file, path.parent()) {
            if f.is_relative() {
                cfg.plant_file = Some(dir.join(f));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        match (&self.plant, &self.plant_file) {
            (Some(_), Some(_)) => return bad("set either `plant` or `plant_file`, not both"),
            (None, None) => return bad("no plant given"),
            _ => {}
        }
        let r = &self.run;
        // n = n_init is a purely passive experiment
        if r.n_init > r.n {
            return bad("need n_init ≤ n");
        }
        if r.horizon < 1 {
            return bad("horizon must be at least 1");
        }
        if r.recon_interval < 1 {
            return bad("recon_interval must be at least 1");
        }
        if r.runs < 1 {
            return bad("runs must be at least 1");
        }
        if !(r.delta >= 0.0) || !(r.alpha_state > 0.0) {
            return bad("need delta ≥ 0 and alpha_state > 0");
        }
        let m = &self.model;
        if self.model.kind.is_state_space() {
            if m.nx == 0 || m.n1x == 0 || m.n2x == 0 || m.n1y == 0 {
                return bad("state-space layer sizes must be positive");
            }
            if r.horizon > 1 {
                return bad("multi-step horizons are only available for NARX models");
            }
            if r.n_init < 2 {
                return bad("state-space models need n_init ≥ 2");
            }
        } else {
            if m.na == 0 && m.nb == 0 {
                return bad("NARX lags cannot both be zero");
            }
            if m.kind == ModelKind::NarxNn && (m.n1 == 0 || m.n2 == 0) {
                return bad("NARX layer sizes must be positive");
            }
            // the initial batch needs at least one regressor with a measured target
            if r.n_init < m.na.max(m.nb) + 1 {
                return bad("n_init is too short for the NARX lags");
            }
        }
        if self.strategy == Strategy::Qbc && r.committee < 2 {
            return bad("QBC needs a committee of at least 2");
        }
        let e = &self.ekf;
        if [e.p0, e.p0_x, e.q_theta, e.q_x].iter().any(|v| !(*v >= 0.0)) || !(e.r > 0.0) {
            return bad("EKF covariances must be nonnegative and r positive");
        }
        let p = &self.penalty;
        if p.enabled && (!(p.rho >= 0.0) || !(p.alpha_quantile > 0.0 && p.alpha_quantile <= 1.0) || !(p.beta_cap > 0.0)) {
            return bad("penalty needs rho ≥ 0, alpha_quantile in (0, 1] and beta_cap > 0");
        }
        if p.y_min.is_some() != p.y_max.is_some() {
            return bad("give both y_min and y_max or neither");
        }
        Ok(())
    }

    pub fn plant_spec(&self) -> Result<PlantSpec> {
        match (&self.plant, &self.plant_file) {
            (Some(name), None) => make_benchmark(name),
            (None, Some(path)) => CustomPlant::load(path),
            _ => Err(Error::InvalidConfig("set exactly one of `plant` and `plant_file`".into())),
        }
    }

    /// Raw-unit output bounds used by the penalty.
    pub fn bounds(&self, plant: &PlantSpec) -> (Vec<f64>, Vec<f64>) {
        match (&self.penalty.y_min, &self.penalty.y_max) {
            (Some(lo), Some(hi)) => (lo.clone(), hi.clone()),
            _ => (plant.y_min.clone(), plant.y_max.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_fills_defaults() {
        let c = ExperimentConfig::from_toml_str("plant = \"two-tank\"").unwrap();
        assert_eq!(c.strategy, Strategy::Ideal);
        assert_eq!((c.model.na, c.model.nb), (3, 3));
        assert_eq!((c.run.n_init, c.run.n, c.run.horizon, c.run.recon_interval), (80, 1000, 1, 10));
        assert!(!c.penalty.enabled);
        assert_eq!(c.penalty.rho, 1e12);
    }

    #[test]
    fn roundtrip() {
        let mut c = ExperimentConfig::for_benchmark("oxidation");
        c.strategy = Strategy::Gsx;
        c.model.kind = ModelKind::RnnSs;
        c.penalty.enabled = true;
        c.penalty.y_min = Some(vec![0.0]);
        c.penalty.y_max = Some(vec![1.0]);
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn invariants_are_enforced() {
        let with = |extra: &str| ExperimentConfig::from_toml_str(&format!("plant = \"two-tank\"\n{extra}"));
        assert!(with("[run]\nn_init = 101\nn = 100").is_err());
        assert!(with("[run]\nn_init = 100\nn = 100").is_ok());
        assert!(with("[run]\nhorizon = 0").is_err());
        assert!(with("[run]\nrecon_interval = 0").is_err());
        assert!(with("[model]\nkind = \"rnn-ss\"\n[run]\nhorizon = 2").is_err());
        assert!(with("strategy = \"qbc\"\n[run]\ncommittee = 1").is_err());
        assert!(with("[penalty]\ny_min = [0.0]").is_err());
        assert!(with("[run]\nbogus = 1").is_err());
        assert!(ExperimentConfig::from_toml_str("strategy = \"ideal\"").is_err());
        assert!(with("strategy = \"igs\"\n[run]\nn = 81").is_ok());
    }
}
