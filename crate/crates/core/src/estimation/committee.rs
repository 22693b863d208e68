use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Which replica sits out each update.
#[derive(Debug, Clone)]
pub enum SkipSchedule {
    RoundRobin,
    /// Uniformly drawn skip index from a seeded stream.
    Random(ChaCha8Rng),
    /// Every replica is updated every step.
    Disabled,
}

/// `K` independently updated replicas of an estimator.
#[derive(Debug, Clone)]
pub struct Committee<R> {
    replicas: Vec<R>,
    schedule: SkipSchedule,
    step: usize,
    counts: Vec<usize>,
    parallel: bool,
}

impl<R: Clone + Send> Committee<R> {
    /// `k` copies of `proto`.
    pub fn new(proto: R, k: usize, schedule: SkipSchedule) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidConfig(format!("a committee needs at least 2 replicas, got {k}")));
        }
        Ok(Committee { replicas: vec![proto; k], schedule, step: 0, counts: vec![0; k], parallel: false })
    }

    pub fn from_replicas(replicas: Vec<R>, schedule: SkipSchedule) -> Result<Self> {
        let k = replicas.len();
        if k < 2 {
            return Err(Error::InvalidConfig(format!("a committee needs at least 2 replicas, got {k}")));
        }
        Ok(Committee { replicas, schedule, step: 0, counts: vec![0; k], parallel: false })
    }

    pub fn with_parallel(mut self, on: bool) -> Self {
        self.parallel = on;
        self
    }

    pub fn len(&self) -> usize {
        self.replicas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replicas.is_empty()
    }

    pub fn replicas(&self) -> &[R] {
        &self.replicas
    }

    pub fn update_counts(&self) -> &[usize] {
        &self.counts
    }

    fn next_skip(&mut self) -> Option<usize> {
        let k = self.replicas.len();
        let s = match &mut self.schedule {
            SkipSchedule::RoundRobin => Some(self.step % k),
            SkipSchedule::Random(rng) => Some(rng.random_range(0..k)),
            SkipSchedule::Disabled => None,
        };
        self.step += 1;
        s
    }

    /// Apply `f` to every replica except the scheduled one. Returns the skipped index.
    pub fn update<F>(&mut self, f: F) -> Result<Option<usize>>
    where
        F: Fn(&mut R) -> Result<()> + Sync,
        R: Sync,
    {
        let skip = self.next_skip();
        let run = |(i, r): (usize, &mut R)| if Some(i) == skip { Ok(()) } else { f(r) };
        if self.parallel {
            self.replicas.par_iter_mut().enumerate().map(run).collect::<Result<Vec<()>>>()?;
        } else {
            self.replicas.iter_mut().enumerate().map(run).collect::<Result<Vec<()>>>()?;
        }
        for (i, c) in self.counts.iter_mut().enumerate() {
            if Some(i) != skip {
                *c += 1;
            }
        }
        Ok(skip)
    }
}
