use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Fully connected network: ReLU on hidden layers, identity on the output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    pub sizes: Vec<usize>,
    /// `weights[l]` maps layer `l` to `l + 1`, shape `(in, out)`.
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Activations kept from a batch forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input of each layer; `inputs[0]` is the batch itself.
    inputs: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl DenseNet {
    /// Uniform fan-in initialisation; the output layer is drawn from
    /// `±final_scale` so initial outputs sit near zero.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], final_scale: f64, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "a network needs input and output sizes");
        let layers = sizes.len() - 1;
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for l in 0..layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let bound = if l + 1 == layers { final_scale } else { 1.0 / (fan_in as f64).sqrt() };
            weights.push(Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-bound..=bound)));
            biases.push(Array1::from_shape_fn(fan_out, |_| rng.random_range(-bound..=bound)));
        }
        DenseNet { sizes: sizes.to_vec(), weights, biases }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        let weights = sizes.windows(2).map(|w| Array2::zeros((w[0], w[1]))).collect();
        let biases = sizes[1..].iter().map(|&n| Array1::zeros(n)).collect();
        DenseNet { sizes: sizes.to_vec(), weights, biases }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite())) && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> ForwardCache {
        let layers = self.weights.len();
        let mut inputs = Vec::with_capacity(layers);
        let mut h = x.to_owned();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = h.dot(w) + b;
            if l + 1 < layers {
                z.mapv_inplace(|v| v.max(0.0));
            }
            inputs.push(h);
            h = z;
        }
        ForwardCache { inputs, output: h }
    }

    /// Single-sample forward pass.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let layers = self.weights.len();
        let mut h = x.to_vec();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = b.to_vec();
            for (i, hi) in h.iter().enumerate() {
                if *hi != 0.0 {
                    for (zj, wij) in z.iter_mut().zip(w.row(i)) {
                        *zj += hi * wij;
                    }
                }
            }
            if l + 1 < layers {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            h = z;
        }
        h
    }

    /// Backpropagates `grad_out = dL/d(output)` and returns parameter
    /// gradients together with `dL/d(input)`.
    pub fn backward(&self, cache: &ForwardCache, grad_out: ArrayView2<f64>) -> (Gradients, Array2<f64>) {
        let layers = self.weights.len();
        let mut gw = Vec::with_capacity(layers);
        let mut gb = Vec::with_capacity(layers);
        let mut delta = grad_out.to_owned();
        for l in (0..layers).rev() {
            let input = &cache.inputs[l];
            gw.push(input.t().dot(&delta));
            gb.push(delta.sum_axis(Axis(0)));
            let mut prev = delta.dot(&self.weights[l].t());
            if l > 0 {
                // Input of layer l is the ReLU output of layer l − 1.
                prev.zip_mut_with(input, |g, a| {
                    if *a <= 0.0 {
                        *g = 0.0
                    }
                });
            }
            delta = prev;
        }
        gw.reverse();
        gb.reverse();
        (Gradients { weights: gw, biases: gb }, delta)
    }

    /// `θ ← (1 − ρ)·θ + ρ·source`.
    pub fn soft_update(&mut self, source: &DenseNet, rho: f64) {
        for (t, s) in self.weights.iter_mut().zip(&source.weights) {
            t.zip_mut_with(s, |a, b| *a = (1.0 - rho) * *a + rho * b);
        }
        for (t, s) in self.biases.iter_mut().zip(&source.biases) {
            t.zip_mut_with(s, |a, b| *a = (1.0 - rho) * *a + rho * b);
        }
    }

    /// Euclidean distance between parameter vectors.
    pub fn distance(&self, other: &DenseNet) -> f64 {
        let w: f64 = self.weights.iter().zip(&other.weights).map(|(a, b)| (a - b).mapv(|v| v * v).sum()).sum();
        let b: f64 = self.biases.iter().zip(&other.biases).map(|(a, b)| (a - b).mapv(|v| v * v).sum()).sum();
        (w + b).sqrt()
    }
}

/// Adam with the usual bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: DenseNet,
    v: DenseNet,
}

impl Adam {
    pub fn new(net: &DenseNet, lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: DenseNet::zeros(&net.sizes), v: DenseNet::zeros(&net.sizes) }
    }

    /// One descent step along `grads`.
    pub fn step(&mut self, net: &mut DenseNet, grads: &Gradients) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let lr = self.lr;
        let eps = self.eps;
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            // Moments of dead units decay geometrically; flushing them keeps
            // the arithmetic out of the (very slow) subnormal range.
            if m.abs() < 1e-100 {
                *m = 0.0;
            }
            if *v < 1e-200 {
                *v = 0.0;
            }
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for l in 0..net.weights.len() {
            ndarray::Zip::from(&mut net.weights[l])
                .and(&mut self.m.weights[l])
                .and(&mut self.v.weights[l])
                .and(&grads.weights[l])
                .for_each(|p, m, v, &g| update(p, m, v, g));
            ndarray::Zip::from(&mut net.biases[l])
                .and(&mut self.m.biases[l])
                .and(&mut self.v.biases[l])
                .and(&grads.biases[l])
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
    }
}
