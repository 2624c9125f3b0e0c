//! Minimal dense networks: multilayer perceptrons with manual backprop and
//! Adam. Generic over the float type so gradient checks can run in `f64`
//! while training runs in `f32`.

use ndarray::{Array1, Array2, ArrayView2, Axis, NdFloat};
use num_traits::FromPrimitive;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

pub trait Scalar: NdFloat + FromPrimitive {}
impl<T: NdFloat + FromPrimitive> Scalar for T {}

fn lit<F: Scalar>(v: f64) -> F {
    F::from_f64(v).expect("representable constant")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear<F> {
    /// `[inputs, outputs]`
    pub w: Array2<F>,
    pub b: Array1<F>,
}

/// Fully connected network; the activation applies to every layer but the last.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<F> {
    pub layers: Vec<Linear<F>>,
    pub activation: Activation,
}

/// Per-layer gradients, shaped like [`Mlp::layers`].
#[derive(Clone, Debug)]
pub struct Gradients<F> {
    pub layers: Vec<Linear<F>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn zeros_like(net: &Mlp<F>) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| Linear {
                    w: Array2::zeros(l.w.raw_dim()),
                    b: Array1::zeros(l.b.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn norm_sq(&self) -> F {
        self.layers.iter().fold(F::zero(), |acc, l| {
            acc + l.w.iter().map(|v| *v * *v).fold(F::zero(), |a, b| a + b)
                + l.b.iter().map(|v| *v * *v).fold(F::zero(), |a, b| a + b)
        })
    }

    pub fn scale(&mut self, s: F) {
        for l in &mut self.layers {
            l.w.mapv_inplace(|v| v * s);
            l.b.mapv_inplace(|v| v * s);
        }
    }

    pub fn flatten(&self) -> Vec<F> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.w.iter().copied());
            out.extend(l.b.iter().copied());
        }
        out
    }
}

pub struct ForwardCache<F> {
    /// Input followed by each layer's output (post-activation for hidden
    /// layers, raw for the last).
    pub activations: Vec<Array2<F>>,
}

impl<F: Scalar> ForwardCache<F> {
    pub fn output(&self) -> &Array2<F> {
        self.activations.last().expect("non-empty cache")
    }
}

impl<F: Scalar> Mlp<F> {
    /// Uniform Glorot initialization; the final layer is scaled by `out_gain`.
    pub fn new(sizes: &[usize], activation: Activation, out_gain: f64, rng: &mut dyn RngCore) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let n = sizes.len() - 1;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, pair)| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let gain = if i + 1 == n { out_gain } else { 1.0 };
                let limit = gain * (6.0 / (fan_in + fan_out) as f64).sqrt();
                let w = Array2::from_shape_fn((fan_in, fan_out), |_| lit(rng.random_range(-limit..=limit)));
                Linear {
                    w,
                    b: Array1::zeros(fan_out),
                }
            })
            .collect();
        Mlp { layers, activation }
    }

    /// All-zero network of the given shape.
    pub fn zeros(sizes: &[usize], activation: Activation) -> Self {
        let layers = sizes
            .windows(2)
            .map(|pair| Linear {
                w: Array2::zeros((pair[0], pair[1])),
                b: Array1::zeros(pair[1]),
            })
            .collect();
        Mlp { layers, activation }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("layers").w.ncols()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.w.ncols()));
        s
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    fn activate(&self, z: &mut Array2<F>) {
        match self.activation {
            Activation::Tanh => z.mapv_inplace(|v| v.tanh()),
            Activation::Relu => z.mapv_inplace(|v| v.max(F::zero())),
        }
    }

    pub fn forward(&self, x: ArrayView2<F>) -> Array2<F> {
        let mut h = x.to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = h.dot(&l.w) + &l.b;
            if i + 1 < self.layers.len() {
                self.activate(&mut z);
            }
            h = z;
        }
        h
    }

    pub fn forward_cached(&self, x: ArrayView2<F>) -> ForwardCache<F> {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_owned());
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = activations[i].dot(&l.w) + &l.b;
            if i + 1 < self.layers.len() {
                self.activate(&mut z);
            }
            activations.push(z);
        }
        ForwardCache { activations }
    }

    /// Gradients of a scalar loss given `d loss / d output` for the cached batch.
    pub fn backward(&self, cache: &ForwardCache<F>, grad_out: Array2<F>) -> Gradients<F> {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = grad_out;
        for i in (0..self.layers.len()).rev() {
            let input = &cache.activations[i];
            let gw = input.t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut d = delta.dot(&self.layers[i].w.t());
                let a = &cache.activations[i];
                match self.activation {
                    Activation::Tanh => d.zip_mut_with(a, |g, &h| *g *= F::one() - h * h),
                    Activation::Relu => d.zip_mut_with(a, |g, &h| {
                        if h <= F::zero() {
                            *g = F::zero()
                        }
                    }),
                }
                delta = d;
            }
            grads.push(Linear { w: gw, b: gb });
        }
        grads.reverse();
        Gradients { layers: grads }
    }

    pub fn flatten(&self) -> Vec<F> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.w.iter().copied());
            out.extend(l.b.iter().copied());
        }
        out
    }

    /// Overwrite parameters from a flat slice in [`Mlp::flatten`] order.
    pub fn load_flat(&mut self, flat: &[F]) {
        assert_eq!(flat.len(), self.num_params(), "parameter count mismatch");
        let mut i = 0;
        for l in &mut self.layers {
            for v in l.w.iter_mut().chain(l.b.iter_mut()) {
                *v = flat[i];
                i += 1;
            }
        }
    }

    pub fn cast<G: Scalar>(&self) -> Mlp<G> {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Linear {
                    w: l.w.mapv(|v| lit::<G>(v.to_f64().unwrap_or(0.0))),
                    b: l.b.mapv(|v| lit::<G>(v.to_f64().unwrap_or(0.0))),
                })
                .collect(),
            activation: self.activation,
        }
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam<F> {
    pub lr: F,
    pub beta1: F,
    pub beta2: F,
    pub eps: F,
    step: i32,
    m: Gradients<F>,
    v: Gradients<F>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(net: &Mlp<F>, lr: f64) -> Self {
        Adam {
            lr: lit(lr),
            beta1: lit(0.9),
            beta2: lit(0.999),
            eps: lit(1e-5),
            step: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }

    /// Descend along `grads`.
    pub fn apply(&mut self, net: &mut Mlp<F>, grads: &Gradients<F>) {
        self.step += 1;
        let bc1 = F::one() - self.beta1.powi(self.step);
        let bc2 = F::one() - self.beta2.powi(self.step);
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.eps, self.lr);
        let one = F::one();
        for (((layer, g), m), v) in net
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m.layers)
            .zip(&mut self.v.layers)
        {
            let update = |p: &mut F, g: F, m: &mut F, v: &mut F| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let mh = *m / bc1;
                let vh = *v / bc2;
                *p -= lr * mh / (vh.sqrt() + eps);
            };
            ndarray::Zip::from(&mut layer.w)
                .and(&g.w)
                .and(&mut m.w)
                .and(&mut v.w)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut layer.b)
                .and(&g.b)
                .and(&mut m.b)
                .and(&mut v.b)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
    }
}

/// Log-probabilities of a categorical over `logits`, with masked entries at
/// negative infinity. At least one entry must be unmasked.
pub fn masked_log_softmax<F: Scalar>(logits: &[F], mask: Option<&[bool]>) -> Vec<F> {
    let allowed = |i: usize| mask.is_none_or(|m| m[i]);
    let max = logits
        .iter()
        .enumerate()
        .filter(|(i, _)| allowed(*i))
        .map(|(_, v)| *v)
        .fold(F::neg_infinity(), F::max);
    let sum = logits
        .iter()
        .enumerate()
        .filter(|(i, _)| allowed(*i))
        .map(|(_, v)| (*v - max).exp())
        .fold(F::zero(), |a, b| a + b);
    let lse = max + sum.ln();
    logits
        .iter()
        .enumerate()
        .map(|(i, v)| if allowed(i) { *v - lse } else { F::neg_infinity() })
        .collect()
}

/// Index of the largest allowed logit, lowest index on ties.
pub fn masked_argmax<F: Scalar>(logits: &[F], mask: Option<&[bool]>) -> usize {
    let mut best: Option<(usize, F)> = None;
    for (i, &v) in logits.iter().enumerate() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i).expect("at least one allowed action")
}

/// Inverse-CDF sample from log-probabilities.
pub fn sample_log_probs(log_probs: &[f32], rng: &mut dyn RngCore) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0f64;
    let mut last = 0;
    for (i, &lp) in log_probs.iter().enumerate() {
        if lp == f32::NEG_INFINITY {
            continue;
        }
        acc += (lp as f64).exp();
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for act in [Activation::Tanh, Activation::Relu] {
            let net: Mlp<f64> = Mlp::new(&[3, 4, 2], act, 1.0, &mut rng);
            let x = array![[0.3, -0.2, 0.9], [-1.0, 0.4, 0.1]];
            // loss = sum(output * c)
            let c = array![[1.0, -2.0], [0.5, 0.25]];
            let loss = |n: &Mlp<f64>| (n.forward(x.view()) * &c).sum();
            let cache = net.forward_cached(x.view());
            let g = net.backward(&cache, c.clone()).flatten();
            let base = net.flatten();
            for i in 0..base.len() {
                let h = 1e-6;
                let mut p = net.clone();
                let mut v = base.clone();
                v[i] += h;
                p.load_flat(&v);
                let up = loss(&p);
                v[i] -= 2.0 * h;
                p.load_flat(&v);
                let down = loss(&p);
                let fd = (up - down) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-6, "param {i}: fd {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn masked_softmax_zeroes_masked_entries() {
        let lp = masked_log_softmax(&[1.0f32, 5.0, 2.0], Some(&[true, false, true]));
        assert_eq!(lp[1], f32::NEG_INFINITY);
        let total: f32 = lp.iter().map(|v| v.exp()).sum();
        assert!((total - 1.0).abs() < 1e-6);
        assert_eq!(masked_argmax(&[1.0f32, 5.0, 2.0], Some(&[true, false, true])), 2);
        assert_eq!(masked_argmax(&[3.0f32, 3.0, 2.0], None), 0);
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net: Mlp<f64> = Mlp::new(&[1, 1], Activation::Tanh, 1.0, &mut rng);
        let mut opt = Adam::new(&net, 0.05);
        let x = array![[1.0], [2.0]];
        let y = array![[3.0], [5.0]];
        for _ in 0..2000 {
            let cache = net.forward_cached(x.view());
            let g = net.backward(&cache, (cache.output() - &y) * 2.0);
            opt.apply(&mut net, &g);
        }
        assert!((net.layers[0].w[[0, 0]] - 2.0).abs() < 1e-2);
        assert!((net.layers[0].b[0] - 1.0).abs() < 1e-2);
    }
}
