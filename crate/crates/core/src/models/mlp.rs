//! Dense feed-forward network with a flat parameter vector.
//!
//! Layer `l` maps `a_{l-1}` to `z_l = W_l a_{l-1} + b_l`; hidden layers apply
//! the activation elementwise, the last layer is affine. Parameters are laid
//! out layer by layer as `W_l` (row-major, `out × in`) followed by `b_l`.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Atan,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Atan => z.atan(),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and activation `a`.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Atan => 1.0 / (1.0 + z * z),
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    hidden: Activation,
    params: Vec<f64>,
}

/// Output value together with optional Jacobians.
#[derive(Debug, Clone)]
pub struct MlpJacobians {
    pub output: Vec<f64>,
    /// `∂out/∂params`, `n_out × n_params`.
    pub params: Option<DMatrix<f64>>,
    /// `∂out/∂input`, `n_out × n_in`.
    pub input: Option<DMatrix<f64>>,
}

impl Mlp {
    pub fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    pub fn zeros(sizes: Vec<usize>, hidden: Activation) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let n = Self::param_count(&sizes);
        Mlp { sizes, hidden, params: vec![0.0; n] }
    }

    /// Zero-mean uniform initialization, half-width `1/sqrt(fan_in)`.
    pub fn init_uniform<R: Rng + ?Sized>(sizes: Vec<usize>, hidden: Activation, rng: &mut R) -> Self {
        let mut m = Self::zeros(sizes, hidden);
        let mut off = 0;
        for w in m.sizes.clone().windows(2) {
            let (fan_in, out) = (w[0], w[1]);
            let h = 1.0 / (fan_in.max(1) as f64).sqrt();
            for p in &mut m.params[off..off + out * fan_in + out] {
                *p = rng.random_range(-h..h);
            }
            off += out * fan_in + out;
        }
        m
    }

    pub fn from_params(sizes: Vec<usize>, hidden: Activation, params: Vec<f64>) -> Option<Self> {
        (sizes.len() >= 2 && params.len() == Self::param_count(&sizes)).then_some(Mlp { sizes, hidden, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.hidden
    }

    pub fn n_in(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_out(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, p: &[f64]) {
        self.params.copy_from_slice(p);
    }

    /// Offsets of `(W_l, b_l)` in the flat vector for layer `l` (0-based).
    pub fn layer_offsets(&self, layer: usize) -> (usize, usize) {
        let mut off = 0;
        for w in self.sizes.windows(2).take(layer) {
            off += w[1] * w[0] + w[1];
        }
        let (fan_in, out) = (self.sizes[layer], self.sizes[layer + 1]);
        (off, off + out * fan_in)
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.n_in());
        let layers = self.sizes.len() - 1;
        let mut a: Vec<f64> = input.to_vec();
        let mut off = 0;
        for l in 0..layers {
            let (fan_in, out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + out * fan_in];
            let b = &self.params[off + out * fan_in..off + out * fan_in + out];
            let last = l + 1 == layers;
            let next: Vec<f64> = (0..out)
                .map(|r| {
                    let row = &w[r * fan_in..(r + 1) * fan_in];
                    let z = row.iter().zip(&a).fold(b[r], |acc, (wi, ai)| acc + wi * ai);
                    if last { z } else { self.hidden.apply(z) }
                })
                .collect();
            a = next;
            off += out * fan_in + out;
        }
        a
    }

    /// Forward pass plus backpropagated Jacobians for every output at once.
    pub fn jacobians(&self, input: &[f64], want_params: bool, want_input: bool) -> MlpJacobians {
        let layers = self.sizes.len() - 1;
        let n_out = self.n_out();
        // activations[0] = input; zs[l] = pre-activation of layer l+1
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layers + 1);
        let mut zs: Vec<Vec<f64>> = Vec::with_capacity(layers);
        acts.push(input.to_vec());
        let mut off = 0;
        for l in 0..layers {
            let (fan_in, out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + out * fan_in];
            let b = &self.params[off + out * fan_in..off + out * fan_in + out];
            let prev = &acts[l];
            let z: Vec<f64> = (0..out)
                .map(|r| w[r * fan_in..(r + 1) * fan_in].iter().zip(prev).fold(b[r], |acc, (wi, ai)| acc + wi * ai))
                .collect();
            let last = l + 1 == layers;
            let a = if last { z.clone() } else { z.iter().map(|&v| self.hidden.apply(v)).collect() };
            zs.push(z);
            acts.push(a);
            off += out * fan_in + out;
        }
        let output = acts[layers].clone();

        let mut jp = want_params.then(|| DMatrix::zeros(n_out, self.params.len()));
        // g: n_out × width, row-major in a Vec, gradient of outputs wrt z_l
        let mut width = n_out;
        let mut g: Vec<f64> = vec![0.0; n_out * n_out];
        for i in 0..n_out {
            g[i * n_out + i] = 1.0;
        }
        let mut jin = None;
        for l in (0..layers).rev() {
            let (fan_in, out) = (self.sizes[l], self.sizes[l + 1]);
            debug_assert_eq!(width, out);
            let (w_off, b_off) = self.layer_offsets(l);
            let prev = &acts[l];
            if let Some(jp) = jp.as_mut() {
                for i in 0..n_out {
                    for r in 0..out {
                        let gr = g[i * out + r];
                        jp[(i, b_off + r)] = gr;
                        let base = w_off + r * fan_in;
                        for c in 0..fan_in {
                            jp[(i, base + c)] = gr * prev[c];
                        }
                    }
                }
            }
            // propagate to the layer input: g W, then through the activation of layer l-1
            let w = &self.params[w_off..w_off + out * fan_in];
            let mut gn = vec![0.0; n_out * fan_in];
            for i in 0..n_out {
                for r in 0..out {
                    let gr = g[i * out + r];
                    if gr == 0.0 {
                        continue;
                    }
                    let row = &w[r * fan_in..(r + 1) * fan_in];
                    let dst = &mut gn[i * fan_in..(i + 1) * fan_in];
                    for (d, wv) in dst.iter_mut().zip(row) {
                        *d += gr * wv;
                    }
                }
            }
            if l == 0 {
                if want_input {
                    jin = Some(DMatrix::from_row_slice(n_out, fan_in, &gn));
                }
            } else {
                let z = &zs[l - 1];
                let a = &acts[l];
                for i in 0..n_out {
                    for c in 0..fan_in {
                        gn[i * fan_in + c] *= self.hidden.derivative(z[c], a[c]);
                    }
                }
            }
            g = gn;
            width = fan_in;
        }
        MlpJacobians { output, params: jp, input: jin }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn param_count_matches_layout() {
        assert_eq!(Mlp::param_count(&[6, 8, 6, 1]), 6 * 8 + 8 + 8 * 6 + 6 + 6 + 1);
        let m = Mlp::zeros(vec![3, 2, 1], Activation::Tanh);
        assert_eq!(m.layer_offsets(0), (0, 6));
        assert_eq!(m.layer_offsets(1), (8, 10));
    }

    #[test]
    fn input_jacobian_vs_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for act in [Activation::Atan, Activation::Tanh, Activation::Identity] {
            let m = Mlp::init_uniform(vec![4, 5, 3, 2], act, &mut rng);
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let j = m.jacobians(&x, false, true).input.unwrap();
            for c in 0..4 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[c] += 1e-6;
                xm[c] -= 1e-6;
                let (fp, fm) = (m.forward(&xp), m.forward(&xm));
                for r in 0..2 {
                    let fd = (fp[r] - fm[r]) / 2e-6;
                    assert!((fd - j[(r, c)]).abs() < 1e-7, "{act:?} {r} {c}");
                }
            }
        }
    }
}
