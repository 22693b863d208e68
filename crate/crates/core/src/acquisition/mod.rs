//! Pool-based acquisition: IDW scores, penalties and every selection strategy.

pub mod idw;
pub mod multistep;
pub mod narx;
pub mod penalty;
pub mod ss;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use idw::{idw_coeffs, idw_exploration, idw_variance, FlatPoints, IdwKernel};
pub use multistep::{select_ideal_multistep, MultiStepSelection, ScoreParts};
pub use narx::{NarxContext, NarxMemory};
pub use penalty::{kappa_alpha, LooCache, PenaltyConfig, PenaltyMode};
pub use ss::SsContext;

use crate::signals::InputPool;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Passive,
    Ideal,
    Gsx,
    Igs,
    Qbc,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Passive => "passive",
            Strategy::Ideal => "ideal",
            Strategy::Gsx => "gsx",
            Strategy::Igs => "igs",
            Strategy::Qbc => "qbc",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s.trim().to_ascii_lowercase().as_str() {
            "passive" => Strategy::Passive,
            "ideal" => Strategy::Ideal,
            "gsx" => Strategy::Gsx,
            "igs" => Strategy::Igs,
            "qbc" => Strategy::Qbc,
            _ => return None,
        })
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Chosen pool index with its acquisition score and the penalty part of it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub score: f64,
    pub penalty: f64,
}

/// Per-candidate score with the penalty already subtracted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub score: f64,
    pub penalty: f64,
}

/// First index of the maximum; NaN never wins.
pub fn argmax(scores: &[Scored]) -> Selection {
    let mut best = Selection { index: 0, score: f64::NEG_INFINITY, penalty: 0.0 };
    let mut found = false;
    for (i, s) in scores.iter().enumerate() {
        if !found || s.score > best.score {
            if s.score.is_nan() && found {
                continue;
            }
            best = Selection { index: i, score: s.score, penalty: s.penalty };
            found = !s.score.is_nan();
        }
    }
    best
}

/// Score `n` candidates in parallel or serially; the result order is fixed either way.
pub(crate) fn score_all<F>(n: usize, parallel: bool, f: F) -> Vec<Scored>
where
    F: Fn(usize) -> Scored + Sync + Send,
{
    if parallel {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

pub fn select_passive<R: Rng + ?Sized>(pool: &InputPool, rng: &mut R) -> Selection {
    Selection { index: rng.random_range(0..pool.len()), score: 0.0, penalty: 0.0 }
}
