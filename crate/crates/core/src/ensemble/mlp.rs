//! Fully connected ReLU network with a scalar linear output, trained on
//! mean-squared error.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense<T> {
    /// `fan_in x fan_out`.
    pub weights: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> Dense<T> {
    pub fn fan_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.ncols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    pub layers: Vec<Dense<T>>,
}

/// Gradient of the loss, shaped like the network.
pub type Gradient<T> = Mlp<T>;

impl<T: Real> Mlp<T> {
    /// Glorot-normal weights (stdev `sqrt(2 / (fan_in + fan_out))`), zero biases.
    pub fn glorot<R: Rng + ?Sized>(input_dim: usize, depth: usize, width: usize, rng: &mut R) -> Self {
        let mut dims = vec![input_dim];
        dims.extend(std::iter::repeat_n(width, depth));
        dims.push(1);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("positive stdev");
                Dense {
                    weights: Array2::from_shape_fn((fan_in, fan_out), |_| T::lit(normal.sample(rng))),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Mlp { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Dense { weights: Array2::zeros(l.weights.raw_dim()), bias: Array1::zeros(l.bias.len()) })
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Outputs for a batch of (already normalized) inputs.
    pub fn forward(&self, x: ArrayView2<T>) -> Array1<T> {
        let last = self.layers.len() - 1;
        let mut a = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weights) + &layer.bias;
            if i != last {
                z.mapv_inplace(|v| v.max(T::zero()));
            }
            a = z;
        }
        a.index_axis_move(Axis(1), 0)
    }

    pub fn forward_one(&self, x: ArrayView1<T>) -> T {
        let row = x.insert_axis(Axis(0));
        self.forward(row)[0]
    }

    pub fn params(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }
}

/// Mean-squared-error loss over a batch.
pub fn mse_loss<T: Real>(net: &Mlp<T>, x: ArrayView2<T>, y: ArrayView1<T>) -> T {
    let pred = net.forward(x);
    let n = T::from_len(y.len());
    pred.iter().zip(y.iter()).map(|(p, t)| (*p - *t) * (*p - *t)).sum::<T>() / n
}

/// Loss and exact gradient of the batch mean-squared error by backpropagation.
pub fn backprop_gradient<T: Real>(net: &Mlp<T>, x: ArrayView2<T>, y: ArrayView1<T>) -> (T, Gradient<T>) {
    assert!(x.nrows() > 0 && x.nrows() == y.len(), "batch must be nonempty and aligned");
    let last = net.layers.len() - 1;
    // activations[i] is the input to layer i.
    let mut activations: Vec<Array2<T>> = Vec::with_capacity(net.layers.len());
    let mut a = x.to_owned();
    for (i, layer) in net.layers.iter().enumerate() {
        let mut z = a.dot(&layer.weights) + &layer.bias;
        if i != last {
            z.mapv_inplace(|v| v.max(T::zero()));
        }
        activations.push(a);
        a = z;
    }
    let n = T::from_len(y.len());
    let two = T::lit(2.0);
    let mut loss = T::zero();
    let mut delta = Array2::zeros((y.len(), 1));
    for (i, (p, t)) in a.column(0).iter().zip(y.iter()).enumerate() {
        let r = *p - *t;
        loss = loss + r * r;
        delta[[i, 0]] = two * r / n;
    }
    loss = loss / n;

    let mut grad = net.zeros_like();
    for i in (0..net.layers.len()).rev() {
        let input = &activations[i];
        grad.layers[i].weights = input.t().dot(&delta);
        grad.layers[i].bias = delta.sum_axis(Axis(0));
        if i > 0 {
            let mut back = delta.dot(&net.layers[i].weights.t());
            // ReLU derivative: the layer input is the post-activation of layer i-1.
            Zip::from(&mut back).and(input).for_each(|d, &act| {
                if act <= T::zero() {
                    *d = T::zero();
                }
            });
            delta = back;
        }
    }
    (loss, grad)
}

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Real> Adam<T> {
    pub fn new(learning_rate: T, param_count: usize) -> Self {
        Adam {
            learning_rate,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            epsilon: T::lit(1e-8),
            m: vec![T::zero(); param_count],
            v: vec![T::zero(); param_count],
            t: 0,
        }
    }

    pub fn step(&mut self, net: &mut Mlp<T>, grad: &Gradient<T>) {
        self.t += 1;
        let c1 = T::one() - self.beta1.powi(self.t);
        let c2 = T::one() - self.beta2.powi(self.t);
        let lr = self.learning_rate * c2.sqrt() / c1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        for (((p, g), m), v) in net.params_mut().zip(grad.params()).zip(self.m.iter_mut()).zip(self.v.iter_mut()) {
            *m = b1 * *m + (T::one() - b1) * *g;
            *v = b2 * *v + (T::one() - b2) * *g * *g;
            *p = *p - lr * *m / (v.sqrt() + eps);
        }
    }
}
