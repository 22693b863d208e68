//! Shared fixtures for the criterion benches.
//!
//! Data are deterministic but irregular enough that IDW distances never tie.

use activeid::acquisition::{NarxMemory, PenaltyConfig, PenaltyMode};
use activeid::estimation::{batch_init_narx, EkfHyper, EkfState};
use activeid::models::{RnnShape, RnnSs};
use activeid::rng::{stream, Stream};
use activeid::{DVector, Dataset, IdwKernel, InputPool, Lags, NarxModel, NarxNet, NarxPredictor, StateSpaceModel};

pub fn signal(t: usize) -> f64 {
    let t = t as f64;
    (0.37 * t).sin() + 0.5 * (0.113 * t + 1.0).cos() * (0.021 * t).sin()
}

pub fn pool(m: usize) -> InputPool {
    InputPool::grid(-1.5, 3.0 / (m - 1) as f64, 1.5).expect("valid grid")
}

/// Stored data of `k` samples under lags 3/3, a trained 8/6 network and a pool of `m` inputs.
pub struct NarxFixture {
    pub ds: Dataset,
    pub memory: NarxMemory,
    pub model: NarxModel,
    pub est: EkfState,
    pub hyper: EkfHyper,
    pub pool: InputPool,
    pub penalty: PenaltyConfig,
}

impl NarxFixture {
    pub fn new(k: usize, m: usize, penalized: bool) -> Self {
        let lags = Lags::new(3, 3, 1, 1);
        let pool = pool(m);
        let mut ds = Dataset::narx(lags);
        ds.push_output(DVector::from_element(1, signal(0))).unwrap();
        for t in 0..k {
            let u = pool.get((t * 7919 + t / 3) % m).clone();
            ds.append_sample(u, DVector::from_element(1, signal(t + 1))).unwrap();
        }
        let mut model = NarxModel::Net(NarxNet::init(lags.n_x(), 8, 6, 1, &mut stream(1, Stream::InitWeights)));
        let hyper = EkfHyper::narx(model.n_theta(), 1, 1e-2, 1e-10, 1e-2);
        let est = batch_init_narx(&mut model, &ds, &hyper, 1).unwrap();
        let penalty = if penalized {
            PenaltyConfig { y_min: vec![-0.8], y_max: vec![0.8], rho: 1e12, mode: PenaltyMode::Shrunk, alpha_quantile: 0.9, beta_cap: 1.0 / 3.0 }
        } else {
            PenaltyConfig::none()
        };
        let memory = NarxMemory::from_dataset(&ds, IdwKernel::InverseSquare, penalty.needs_kappa()).unwrap();
        NarxFixture { ds, memory, model, est, hyper, pool, penalty }
    }
}

/// A 2-state recurrent model with `k` steps of scaled input/output data.
pub struct SsFixture {
    pub model: RnnSs,
    pub hyper: EkfHyper,
    pub inputs: Vec<DVector<f64>>,
    pub outputs: Vec<DVector<f64>>,
    pub pool: InputPool,
}

impl SsFixture {
    pub fn new(k: usize, m: usize) -> Self {
        let shape = RnnShape { n_x: 2, n_u: 1, n_y: 1, n1x: 8, n2x: 4, n1y: 5 };
        let model = RnnSs::init(shape, &mut stream(2, Stream::InitWeights));
        let hyper = EkfHyper::joint(2, model.n_theta(), 1, 4e-2, 2e-1, 1e-8, 1e-8, 1.0);
        let pool = pool(m);
        let inputs: Vec<DVector<f64>> = (0..k).map(|t| pool.get((t * 7919 + t / 3) % m).clone()).collect();
        let outputs: Vec<DVector<f64>> = (0..=k).map(|t| DVector::from_element(1, signal(t))).collect();
        SsFixture { model, hyper, inputs, outputs, pool }
    }
}
