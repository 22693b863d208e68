//! Limited-memory BFGS with optional box bounds (projected search).

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfgsStatus {
    Converged,
    MaxIterations,
    /// Line search failed to decrease the objective.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct LbfgsOptions {
    pub max_iter: usize,
    pub memory: usize,
    /// Stop when the projected gradient infinity-norm falls below this.
    pub gtol: f64,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions { max_iter: 1000, memory: 10, gtol: 1e-8, lower: None, upper: None }
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub status: LbfgsStatus,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Bounds<'a> {
    lo: Option<&'a [f64]>,
    hi: Option<&'a [f64]>,
}

impl Bounds<'_> {
    fn project(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            if let Some(l) = self.lo {
                *v = v.max(l[i]);
            }
            if let Some(h) = self.hi {
                *v = v.min(h[i]);
            }
        }
    }

    /// Variables pinned at a bound with the gradient pushing outward.
    fn active(&self, x: &[f64], g: &[f64], i: usize) -> bool {
        let at_lo = self.lo.is_some_and(|l| x[i] <= l[i] && g[i] > 0.0);
        let at_hi = self.hi.is_some_and(|h| x[i] >= h[i] && g[i] < 0.0);
        at_lo || at_hi
    }

    fn projected_gradient_norm(&self, x: &[f64], g: &[f64]) -> f64 {
        (0..x.len()).filter(|&i| !self.active(x, g, i)).map(|i| g[i].abs()).fold(0.0, f64::max)
    }
}

/// Minimize `f` where `fg(x)` returns `(f(x), ∇f(x))`.
pub fn minimize<F>(mut fg: F, x0: &[f64], opts: &LbfgsOptions) -> LbfgsResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let bounds = Bounds { lo: opts.lower.as_deref(), hi: opts.upper.as_deref() };
    let mut x = x0.to_vec();
    bounds.project(&mut x);
    let (mut f, mut g) = fg(&x);
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut status = LbfgsStatus::MaxIterations;
    let mut it = 0;
    while it < opts.max_iter {
        if !f.is_finite() {
            status = LbfgsStatus::Stalled;
            break;
        }
        if bounds.projected_gradient_norm(&x, &g) <= opts.gtol {
            status = LbfgsStatus::Converged;
            break;
        }
        let free: Vec<bool> = (0..n).map(|i| !bounds.active(&x, &g, i)).collect();
        // two-loop recursion on the free subspace
        let mut q: Vec<f64> = (0..n).map(|i| if free[i] { g[i] } else { 0.0 }).collect();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = hist.back().map(|(s, y, _)| dot(s, y) / dot(y, y)).unwrap_or_else(|| {
            let gn = dot(&g, &g).sqrt();
            if gn > 0.0 { 1.0 / gn } else { 1.0 }
        });
        for v in q.iter_mut() {
            *v *= gamma;
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        let mut d: Vec<f64> = (0..n).map(|i| if free[i] { -q[i] } else { 0.0 }).collect();
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            // not a descent direction: restart from steepest descent
            hist.clear();
            d = (0..n).map(|i| if free[i] { -g[i] } else { 0.0 }).collect();
            slope = dot(&g, &d);
            if !(slope < 0.0) {
                status = LbfgsStatus::Converged;
                break;
            }
        }
        // backtracking Armijo along the projected path
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            bounds.project(&mut xn);
            let (fn_, gn) = fg(&xn);
            let decrease: f64 = g.iter().zip(xn.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum();
            if fn_.is_finite() && fn_ <= f + 1e-4 * decrease.min(0.0) && fn_ <= f {
                accepted = Some((xn, fn_, gn));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            status = LbfgsStatus::Stalled;
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let moved = s.iter().any(|v| *v != 0.0);
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).max(f64::MIN_POSITIVE) && sy > 0.0 {
            if hist.len() == opts.memory {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        x = xn;
        f = fn_;
        g = gn;
        it += 1;
        if !moved {
            status = LbfgsStatus::Stalled;
            break;
        }
    }
    if it == opts.max_iter && bounds.projected_gradient_norm(&x, &g) <= opts.gtol {
        status = LbfgsStatus::Converged;
    }
    LbfgsResult { x, f, iterations: it, status }
}
