//! Receding-horizon ideal acquisition over input sequences of length `L`.
//!
//! Only the first step carries the IDW variance; later steps add `δz − p`
//! evaluated at regressors rolled out with the model's own predictions.
//! Exploration at future steps is measured against the stored samples only.

use nalgebra::DVector;

use super::idw::variance_and_exploration;
use super::narx::{base_d2, slot_d2, NarxContext, Prepared};
use super::Selection;
use crate::error::{Error, Result};
use crate::models::NarxPredictor;
use crate::signals::{Lags, Regressor};

/// Largest `M^L` searched exhaustively by default.
pub const DEFAULT_BUDGET: usize = 100_000;

/// `score = s2 + Σ_j (δ z[j] − p[j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreParts {
    pub s2: f64,
    pub z: Vec<f64>,
    pub p: Vec<f64>,
}

impl ScoreParts {
    pub fn total(&self, delta: f64) -> f64 {
        let mut acc = self.s2;
        for (z, p) in self.z.iter().zip(&self.p) {
            acc += delta * z - p;
        }
        acc
    }
}

#[derive(Debug, Clone)]
pub struct MultiStepSelection {
    /// Pool indices `u_k … u_{k+L−1}`.
    pub sequence: Vec<usize>,
    pub score: f64,
    pub parts: ScoreParts,
    /// False when the greedy stage-wise fallback was used.
    pub exhaustive: bool,
    /// Predicted regressors `x_k … x_{k+L−1}` along the chosen sequence.
    pub rollout: Vec<DVector<f64>>,
}

impl MultiStepSelection {
    /// The move actually applied.
    pub fn first(&self) -> Selection {
        Selection { index: self.sequence[0], score: self.score, penalty: self.parts.p.iter().sum() }
    }
}

/// History seen from a node of the search tree, newest first.
#[derive(Clone)]
struct Node {
    outputs: Vec<DVector<f64>>,
    inputs: Vec<DVector<f64>>,
}

impl Node {
    fn template(&self, lags: Lags, nu: usize) -> Regressor {
        let zero = DVector::zeros(nu);
        let ys: Vec<&DVector<f64>> = self.outputs.iter().collect();
        let mut us: Vec<&DVector<f64>> = vec![&zero];
        us.extend(self.inputs.iter());
        Regressor::from_parts(&ys, &us, lags)
    }

    fn advance(&self, u: &DVector<f64>, yhat: DVector<f64>, lags: Lags) -> Node {
        let mut outputs = Vec::with_capacity(lags.na);
        outputs.push(yhat);
        outputs.extend(self.outputs.iter().take(lags.na.saturating_sub(1)).cloned());
        let mut inputs = Vec::with_capacity(lags.nb);
        if lags.nb > 1 {
            inputs.push(u.clone());
            inputs.extend(self.inputs.iter().take(lags.nb - 2).cloned());
        }
        Node { outputs, inputs }
    }
}

/// One candidate evaluated at one node.
struct Eval {
    s2: f64,
    z: f64,
    p: f64,
    x: Vec<f64>,
}

struct Search<'c, 'a, M> {
    ctx: &'c NarxContext<'a, M>,
    prep: Prepared,
    lags: Lags,
}

impl<M: NarxPredictor> Search<'_, '_, M> {
    fn evaluate_node(&self, node: &Node, level: usize) -> Vec<Eval> {
        let ctx = self.ctx;
        let (template, base);
        let (template_ref, base_ref) = if level == 0 {
            (&self.prep.template, &self.prep.base)
        } else {
            template = node.template(self.lags, ctx.ds.nu());
            base = base_d2(ctx.memory.points(), template.as_slice(), &self.prep.slot);
            (&template, &base)
        };
        ctx.pool
            .candidates()
            .iter()
            .map(|u| {
                let mut x = template_ref.as_slice().to_vec();
                x[self.prep.slot.clone()].copy_from_slice(u.as_slice());
                let d2 = slot_d2(ctx.memory.points(), base_ref, &self.prep.slot, u.as_slice());
                let (s2, z) = variance_and_exploration(&d2, &self.prep.residuals, ctx.kernel);
                let p = if ctx.penalty.is_active() {
                    let yhat = ctx.model.predict_slice(&x);
                    ctx.penalty.evaluate(&yhat, self.prep.kappa * s2.max(0.0).sqrt())
                } else {
                    0.0
                };
                Eval { s2, z, p, x }
            })
            .collect()
    }

    fn child(&self, node: &Node, i: usize, x: &[f64]) -> Node {
        let yhat = DVector::from_vec(self.ctx.model.predict_slice(x));
        node.advance(self.ctx.pool.get(i), yhat, self.lags)
    }

    /// Depth-first enumeration in lexicographic order; strict improvement
    /// keeps the lowest sequence among ties.
    fn exhaustive(&self, node: &Node, level: usize, horizon: usize, acc: f64, path: &mut Vec<usize>, best: &mut Option<(f64, Vec<usize>)>) {
        let evals = self.evaluate_node(node, level);
        for (i, e) in evals.iter().enumerate() {
            let total = if level == 0 { e.s2 + (self.ctx.delta * e.z - e.p) } else { acc + (self.ctx.delta * e.z - e.p) };
            path.push(i);
            if level + 1 == horizon {
                if best.as_ref().is_none_or(|(b, _)| total > *b) && !total.is_nan() {
                    *best = Some((total, path.clone()));
                }
            } else {
                let next = self.child(node, i, &e.x);
                self.exhaustive(&next, level + 1, horizon, total, path, best);
            }
            path.pop();
        }
    }

    fn greedy(&self, root: &Node, horizon: usize) -> Vec<usize> {
        let mut node = root.clone();
        let mut seq = Vec::with_capacity(horizon);
        for level in 0..horizon {
            let evals = self.evaluate_node(&node, level);
            let stage = |e: &Eval| if level == 0 { e.s2 + (self.ctx.delta * e.z - e.p) } else { self.ctx.delta * e.z - e.p };
            let mut bi = 0;
            let mut bv = f64::NAN;
            for (i, e) in evals.iter().enumerate() {
                let v = stage(e);
                if bv.is_nan() || v > bv {
                    bi = i;
                    bv = v;
                }
            }
            seq.push(bi);
            if level + 1 < horizon {
                node = self.child(&node, bi, &evals[bi].x);
            }
        }
        seq
    }

    /// Score decomposition and rollout of a fixed sequence.
    fn replay(&self, root: &Node, seq: &[usize]) -> (ScoreParts, Vec<DVector<f64>>) {
        let mut node = root.clone();
        let mut parts = ScoreParts { s2: 0.0, z: vec![], p: vec![] };
        let mut rollout = Vec::with_capacity(seq.len());
        for (level, &i) in seq.iter().enumerate() {
            let evals = self.evaluate_node(&node, level);
            let e = &evals[i];
            if level == 0 {
                parts.s2 = e.s2;
            }
            parts.z.push(e.z);
            parts.p.push(e.p);
            rollout.push(DVector::from_column_slice(&e.x));
            if level + 1 < seq.len() {
                node = self.child(&node, i, &e.x);
            }
        }
        (parts, rollout)
    }
}

/// Maximize `s²(x_k) + Σ_{j<L} (δ z(x_{k+j}) − p(x_{k+j}))` over `poolᴸ`.
///
/// Enumerates every sequence when `Mᴸ ≤ budget`, otherwise picks stage by
/// stage. With `horizon = 1` the result equals [`NarxContext::select_ideal`].
pub fn select_ideal_multistep<M: NarxPredictor>(
    ctx: &NarxContext<'_, M>,
    horizon: usize,
    budget: usize,
) -> Result<MultiStepSelection> {
    if horizon == 0 {
        return Err(Error::InvalidConfig("horizon must be at least 1".into()));
    }
    let prep = ctx.prepare()?;
    let lags = ctx.ds.lags().expect("checked by prepare");
    let k = ctx.ds.len_outputs() - 1;
    let root = Node {
        outputs: (0..lags.na).map(|i| ctx.ds.outputs()[k - i].clone()).collect(),
        inputs: (1..lags.nb).map(|i| ctx.ds.inputs()[k - i].clone()).collect(),
    };
    let search = Search { ctx, prep, lags };
    let m = ctx.pool.len();
    let exhaustive = (m as f64).powi(horizon as i32) <= budget as f64;
    let seq = if exhaustive {
        let mut best = None;
        search.exhaustive(&root, 0, horizon, 0.0, &mut Vec::with_capacity(horizon), &mut best);
        best.map(|(_, s)| s).unwrap_or_else(|| vec![0; horizon])
    } else {
        log::debug!("multi-step search over {m}^{horizon} sequences exceeds budget {budget}; using greedy stages");
        search.greedy(&root, horizon)
    };
    let (parts, rollout) = search.replay(&root, &seq);
    let score = parts.total(ctx.delta);
    Ok(MultiStepSelection { sequence: seq, score, parts, exhaustive, rollout })
}
