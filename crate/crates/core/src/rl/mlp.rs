//! Fully connected networks with hand-written backpropagation and Adam.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::Identity => {}
        }
    }

    /// Multiplies `grad` by the derivative, given the activation output `y`.
    fn backprop(self, grad: &mut Array2<f64>, y: &Array2<f64>) {
        match self {
            Activation::Relu => grad.zip_mut_with(y, |g, &y| {
                if y <= 0.0 {
                    *g = 0.0
                }
            }),
            Activation::Tanh => grad.zip_mut_with(y, |g, &y| *g *= 1.0 - y * y),
            Activation::Identity => {}
        }
    }
}

/// One affine layer, `y = x W + b` with `W` of shape `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub hidden: Activation,
    pub output: Activation,
}

/// Gradients with the same shapes as the network parameters.
pub type Grads = Vec<Dense>;

/// Layer outputs kept for the backward pass; `outputs[0]` is the input.
#[derive(Debug, Clone)]
pub struct Cache {
    outputs: Vec<Array2<f64>>,
}

impl Cache {
    pub fn output(&self) -> &Array2<f64> {
        self.outputs.last().expect("cache holds the input")
    }
}

impl Mlp {
    /// Uniform fan-in initialization; the last layer is drawn from
    /// `[-final_scale, final_scale]` when `final_scale` is given.
    pub fn new(sizes: &[usize], hidden: Activation, output: Activation, final_scale: Option<f64>, rng: &mut SimRng) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid("mlp needs at least two non-zero layer sizes"));
        }
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let (fan_in, fan_out) = (sizes[i], sizes[i + 1]);
                let bound = match final_scale {
                    Some(s) if i == n - 1 => s,
                    _ => 1.0 / (fan_in as f64).sqrt(),
                };
                let mut draw = || if bound > 0.0 { rng.random_range(-bound..=bound) } else { 0.0 };
                let w = Array2::from_shape_fn((fan_in, fan_out), |_| draw());
                let b = Array1::from_shape_fn(fan_out, |_| draw());
                Dense { w, b }
            })
            .collect();
        Ok(Mlp { layers, hidden, output })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.w.ncols()).unwrap_or(0)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.w.ncols()));
        s
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    fn activation(&self, i: usize) -> Activation {
        if i + 1 == self.layers.len() {
            self.output
        } else {
            self.hidden
        }
    }

    /// Batched forward pass; rows are samples.
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.w) + &layer.b;
            self.activation(i).apply(&mut z);
            h = z;
        }
        h
    }

    pub fn forward_one(&self, x: &[f64]) -> Vec<f64> {
        let x = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row vector");
        self.forward(&x).into_raw_vec_and_offset().0
    }

    pub fn forward_cached(&self, x: &Array2<f64>) -> Cache {
        let mut outputs = Vec::with_capacity(self.layers.len() + 1);
        outputs.push(x.to_owned());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = outputs[i].dot(&layer.w) + &layer.b;
            self.activation(i).apply(&mut z);
            outputs.push(z);
        }
        Cache { outputs }
    }

    /// Gradients of `sum(grad_out * output)` with respect to the parameters
    /// and to the input.
    pub fn backward(&self, cache: &Cache, grad_out: &Array2<f64>) -> (Grads, Array2<f64>) {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_out.to_owned();
        for i in (0..self.layers.len()).rev() {
            self.activation(i).backprop(&mut g, &cache.outputs[i + 1]);
            let gw = cache.outputs[i].t().dot(&g);
            let gb = g.sum_axis(Axis(0));
            let next = g.dot(&self.layers[i].w.t());
            grads.push(Dense { w: gw, b: gb });
            g = next;
        }
        grads.reverse();
        (grads, g)
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }

    pub fn flat_params(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        unflatten_into(&mut self.layers, flat)
    }

    pub fn zeros_like(&self) -> Grads {
        self.layers
            .iter()
            .map(|l| Dense { w: Array2::zeros(l.w.raw_dim()), b: Array1::zeros(l.b.raw_dim()) })
            .collect()
    }
}

pub(crate) fn flatten(layers: &[Dense]) -> Vec<f64> {
    let mut v = Vec::new();
    for l in layers {
        v.extend(l.w.iter());
        v.extend(l.b.iter());
    }
    v
}

pub(crate) fn unflatten_into(layers: &mut [Dense], flat: &[f64]) -> Result<()> {
    let need: usize = layers.iter().map(|l| l.w.len() + l.b.len()).sum();
    if flat.len() != need {
        return Err(Error::invalid(format!("expected {need} parameters, got {}", flat.len())));
    }
    let mut it = flat.iter();
    for l in layers.iter_mut() {
        for v in l.w.iter_mut().chain(l.b.iter_mut()) {
            *v = *it.next().expect("length checked");
        }
    }
    Ok(())
}

/// `target <- rate * main + (1 - rate) * target`.
pub fn soft_update(target: &mut Mlp, main: &Mlp, rate: f64) {
    for (t, m) in target.layers.iter_mut().zip(&main.layers) {
        t.w.zip_mut_with(&m.w, |t, &m| *t = rate * m + (1.0 - rate) * *t);
        t.b.zip_mut_with(&m.b, |t, &m| *t = rate * m + (1.0 - rate) * *t);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Grads,
    pub v: Grads,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: net.zeros_like(), v: net.zeros_like() }
    }

    /// One bias-corrected descent step along `grads`.
    pub fn step(&mut self, net: &mut Mlp, grads: &Grads) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t.min(i32::MAX as u64) as i32);
        let c2 = 1.0 - b2.powi(self.t.min(i32::MAX as u64) as i32);
        let (lr, eps) = (self.lr, self.eps);
        for (((p, g), m), v) in net.layers.iter_mut().zip(grads).zip(self.m.iter_mut()).zip(self.v.iter_mut()) {
            let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let mh = *m / c1;
                let vh = *v / c2;
                *p -= lr * mh / (vh.sqrt() + eps);
            };
            ndarray::Zip::from(&mut p.w).and(&g.w).and(&mut m.w).and(&mut v.w).for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut p.b).and(&g.b).and(&mut m.b).and(&mut v.b).for_each(|p, &g, m, v| update(p, g, m, v));
        }
    }
}
