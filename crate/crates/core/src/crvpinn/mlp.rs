use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::PinnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sin,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sin => "sin",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "sin" => Some(Activation::Sin),
            _ => None,
        }
    }

    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Sin => z.sin(),
        }
    }

    /// Derivative given the pre-activation `z` and the activation `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Sin => z.cos(),
        }
    }
}

/// Weights and biases of every layer; `weights[l]` maps width `l` to `l + 1`
/// as `(fan_in, fan_out)`. Gradients and optimizer moments share this shape.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl MlpParams {
    pub fn zeros(widths: &[usize]) -> Self {
        Self {
            weights: widths.windows(2).map(|w| Array2::zeros((w[0], w[1]))).collect(),
            biases: widths[1..].iter().map(|&w| Array1::zeros(w)).collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weights: self.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: self.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every parameter in a fixed order: per layer, weights row-major then biases.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| w.iter_mut().chain(b.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.weights.len() == other.weights.len()
            && self.weights.iter().zip(&other.weights).all(|(a, b)| a.dim() == b.dim())
            && self.biases.iter().zip(&other.biases).all(|(a, b)| a.dim() == b.dim())
    }
}

/// Fully connected network `R² → R` with a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    activation: Activation,
    pub params: MlpParams,
}

/// Intermediate values kept by [`Mlp::forward_cached`] for backpropagation.
pub struct ForwardCache {
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
}

impl Mlp {
    /// Glorot-uniform weights and zero biases.
    pub fn new(widths: &[usize], activation: Activation, seed: u64) -> Result<Self, PinnError> {
        Self::check_widths(widths)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = MlpParams::zeros(widths);
        for w in &mut params.weights {
            let (fan_in, fan_out) = w.dim();
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            w.mapv_inplace(|_| rng.gen_range(-limit..limit));
        }
        Ok(Self {
            widths: widths.to_vec(),
            activation,
            params,
        })
    }

    pub fn from_params(widths: &[usize], activation: Activation, params: MlpParams) -> Result<Self, PinnError> {
        Self::check_widths(widths)?;
        if !params.same_shape(&MlpParams::zeros(widths)) {
            return Err(PinnError::Shape("parameters do not match the layer widths".into()));
        }
        Ok(Self {
            widths: widths.to_vec(),
            activation,
            params,
        })
    }

    fn check_widths(widths: &[usize]) -> Result<(), PinnError> {
        if widths.len() < 2 || widths[0] != 2 || *widths.last().unwrap() != 1 {
            return Err(PinnError::Shape(format!(
                "layer widths {widths:?} must start at 2 and end at 1"
            )));
        }
        if widths.contains(&0) {
            return Err(PinnError::Shape(format!("layer widths {widths:?} contain 0")));
        }
        Ok(())
    }

    /// Starting point for pressure training: Glorot-uniform weights, hidden
    /// biases uniform in `[-1, 1]` and a zero output layer, so the network
    /// starts as the zero function. Nonzero biases keep the hidden features
    /// from being odd in the centered inputs, which would otherwise pin the
    /// output to a constant on point-symmetric problems.
    pub fn for_training(widths: &[usize], activation: Activation, seed: u64) -> Result<Self, PinnError> {
        let mut mlp = Self::new(widths, activation, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
        let last = mlp.params.weights.len() - 1;
        for b in &mut mlp.params.biases[..last] {
            b.mapv_inplace(|_| rng.gen_range(-1.0..=1.0));
        }
        mlp.params.weights[last].fill(0.0);
        mlp.params.biases[last].fill(0.0);
        Ok(mlp)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Network values at a batch of points `(batch, 2)`.
    pub fn forward(&self, points: ArrayView2<f64>) -> Array1<f64> {
        let mut a = points.to_owned();
        let last = self.params.weights.len() - 1;
        for (l, (w, b)) in self.params.weights.iter().zip(&self.params.biases).enumerate() {
            let mut z = a.dot(w);
            z += b;
            if l < last {
                z.mapv_inplace(|v| self.activation.apply(v));
            }
            a = z;
        }
        a.index_axis_move(Axis(1), 0)
    }

    pub fn forward_cached(&self, points: ArrayView2<f64>) -> (Array1<f64>, ForwardCache) {
        let last = self.params.weights.len() - 1;
        let mut pre = Vec::with_capacity(last);
        let mut post = vec![points.to_owned()];
        for (l, (w, b)) in self.params.weights.iter().zip(&self.params.biases).enumerate() {
            let mut z = post[l].dot(w);
            z += b;
            if l < last {
                let a = z.mapv(|v| self.activation.apply(v));
                pre.push(z);
                post.push(a);
            } else {
                let out = z.index_axis_move(Axis(1), 0);
                return (out, ForwardCache { pre, post });
            }
        }
        unreachable!("network has at least one layer")
    }

    /// Parameter gradient for `Σ_b seed[b] · net(point_b)`.
    pub fn backward(&self, cache: &ForwardCache, seed: &Array1<f64>) -> MlpParams {
        let mut grad = self.params.zeros_like();
        let mut delta = seed.clone().insert_axis(Axis(1));
        for l in (0..self.params.weights.len()).rev() {
            grad.weights[l] = cache.post[l].t().dot(&delta);
            grad.biases[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut back = delta.dot(&self.params.weights[l].t());
                let act = self.activation;
                ndarray::Zip::from(&mut back)
                    .and(&cache.pre[l - 1])
                    .and(&cache.post[l])
                    .for_each(|d, &z, &a| *d *= act.derivative(z, a));
                delta = back;
            }
        }
        grad
    }
}
