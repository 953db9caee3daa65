use log::{debug, error};
use ndarray::{Array1, Array2};

use super::mlp::{ForwardCache, Mlp, MlpParams};
use super::stencil::{cutoff, residual, residual_adjoint, CollocationGrid, GramOperator};
use super::PinnError;

/// Network with the hard boundary cutoff: `u = cutoff · scale · net` on the
/// reference square. The network sees coordinates mapped to `[-1, 1]²`.
#[derive(Debug, Clone, PartialEq)]
pub struct PinnModel {
    pub mlp: Mlp,
    output_scale: f64,
}

impl PinnModel {
    pub fn new(mlp: Mlp) -> Self {
        Self { mlp, output_scale: 1.0 }
    }

    pub fn with_scale(mlp: Mlp, output_scale: f64) -> Result<Self, PinnError> {
        if !(output_scale.is_finite() && output_scale > 0.0) {
            return Err(PinnError::Shape(format!(
                "output scale {output_scale} must be positive"
            )));
        }
        Ok(Self { mlp, output_scale })
    }

    pub fn output_scale(&self) -> f64 {
        self.output_scale
    }

    /// Changes the output scale while keeping `u` unchanged by compensating
    /// in the last layer.
    pub fn rescale_output(&mut self, scale: f64) -> Result<(), PinnError> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(PinnError::Shape(format!("output scale {scale} must be positive")));
        }
        let ratio = self.output_scale / scale;
        let last = self.mlp.params.weights.len() - 1;
        self.mlp.params.weights[last].mapv_inplace(|w| w * ratio);
        self.mlp.params.biases[last].mapv_inplace(|b| b * ratio);
        self.output_scale = scale;
        Ok(())
    }

    fn inputs(points: &Array2<f64>) -> Array2<f64> {
        points.mapv(|v| 2.0 * v - 1.0)
    }

    /// Values at reference points `(batch, 2)`.
    pub fn eval_points(&self, points: &Array2<f64>) -> Array1<f64> {
        let net = self.mlp.forward(Self::inputs(points).view());
        Array1::from_shape_fn(points.nrows(), |b| {
            cutoff(points[[b, 0]], points[[b, 1]]) * self.output_scale * net[b]
        })
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.eval_points(&ndarray::array![[x, y]])[0]
    }

    /// Values on the full collocation lattice; boundary entries are exactly 0.
    pub fn pressure_grid(&self, grid: &CollocationGrid) -> Array2<f64> {
        let pts = grid.interior_points();
        let vals = self.eval_points(&pts);
        scatter_interior(grid, &vals)
    }

    /// `cutoff · net` on the lattice, without the output scale.
    fn network_grid_cached(&self, grid: &CollocationGrid, pts: &Array2<f64>) -> (Array2<f64>, ForwardCache) {
        let (net, cache) = self.mlp.forward_cached(Self::inputs(pts).view());
        let vals = Array1::from_shape_fn(pts.nrows(), |b| cutoff(pts[[b, 0]], pts[[b, 1]]) * net[b]);
        (scatter_interior(grid, &vals), cache)
    }
}

fn scatter_interior(grid: &CollocationGrid, vals: &Array1<f64>) -> Array2<f64> {
    let m = grid.n() - 1;
    let mut u = grid.zeros();
    for (r, &v) in vals.iter().enumerate() {
        u[[r / m + 1, r % m + 1]] = v;
    }
    u
}

/// Data of one pressure problem `-∇·(α∇u) = f` on the lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct PinnProblem {
    pub alpha: Array2<f64>,
    pub load: Array2<f64>,
}

impl PinnProblem {
    pub fn new(grid: &CollocationGrid, alpha: Array2<f64>, load: Array2<f64>) -> Result<Self, PinnError> {
        grid.check(&alpha, "mobility")?;
        grid.check(&load, "load")?;
        if alpha.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(PinnError::NonFinite {
                epoch: 0,
                what: "mobility grid has non-positive or non-finite entries".into(),
            });
        }
        Ok(Self { alpha, load })
    }

    /// Problem for `∇·(α∇p) = rhs`, the sign convention of the pressure equation.
    pub fn from_pressure_rhs(grid: &CollocationGrid, alpha: Array2<f64>, rhs: &Array2<f64>) -> Result<Self, PinnError> {
        Self::new(grid, alpha, rhs.mapv(|v| -v))
    }
}

/// Robust loss `RESᵀG⁻¹RES`, measured in units of the model's output scale
/// so that well-scaled problems give O(1) values regardless of the pressure
/// magnitude.
pub fn loss(model: &PinnModel, problem: &PinnProblem, gram: &GramOperator) -> Result<f64, PinnError> {
    let grid = gram.grid();
    let scale = model.output_scale;
    let u = model.pressure_grid(grid).mapv(|v| v / scale);
    let load = problem.load.mapv(|v| v / scale);
    gram.loss(&residual(&u, &problem.alpha, &load, grid.h())?)
}

/// [`loss`] and its gradient with respect to the network parameters.
pub fn grad_loss(model: &PinnModel, problem: &PinnProblem, gram: &GramOperator) -> Result<(f64, MlpParams), PinnError> {
    let grid = *gram.grid();
    let pts = grid.interior_points();
    let (u, cache) = model.network_grid_cached(&grid, &pts);
    let scale = model.output_scale;
    let load = problem.load.mapv(|v| v / scale);
    let res = residual(&u, &problem.alpha, &load, grid.h())?;
    let flat: Vec<f64> = res.iter().copied().collect();
    let q = gram.apply_inverse(&flat)?;
    let value = flat.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>().max(0.0);
    let w = Array2::from_shape_vec(res.dim(), q.into_iter().map(|v| 2.0 * v).collect()).expect("residual grid shape");
    let du = residual_adjoint(&w, &problem.alpha);
    let m = grid.n() - 1;
    let seed = Array1::from_shape_fn(pts.nrows(), |b| {
        du[[b / m + 1, b % m + 1]] * cutoff(pts[[b, 0]], pts[[b, 1]])
    });
    Ok((value, model.mlp.backward(&cache, &seed)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: MlpParams,
    pub v: MlpParams,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &MlpParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn update(&mut self, params: &mut MlpParams, grad: &MlpParams, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powf(self.step as f64);
        let c2 = 1.0 - self.beta2.powf(self.step as f64);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grad.iter())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
    }
}

/// Full-batch Adam. Returns the loss before each epoch's update. On a
/// non-finite loss or gradient the model and optimizer keep their last
/// finite state.
pub fn train(
    model: &mut PinnModel,
    adam: &mut AdamState,
    problem: &PinnProblem,
    gram: &GramOperator,
    epochs: usize,
    lr: f64,
) -> Result<Vec<f64>, PinnError> {
    if epochs == 0 {
        return Err(PinnError::Shape("training needs at least one epoch".into()));
    }
    if !adam.m.same_shape(&model.mlp.params) {
        return Err(PinnError::Shape("optimizer state does not match the network".into()));
    }
    let mut history = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let (value, grad) = grad_loss(model, problem, gram)?;
        if !value.is_finite() || !grad.is_finite() {
            error!("training diverged at epoch {epoch}: loss {value}");
            return Err(PinnError::NonFinite {
                epoch,
                what: format!("loss {value} or its gradient"),
            });
        }
        history.push(value);
        let saved = (model.mlp.params.clone(), adam.clone());
        adam.update(&mut model.mlp.params, &grad, lr);
        if !model.mlp.params.is_finite() {
            (model.mlp.params, *adam) = saved;
            error!("parameter update at epoch {epoch} produced non-finite weights");
            return Err(PinnError::NonFinite {
                epoch,
                what: "parameters after the optimizer step".into(),
            });
        }
        if epoch % 500 == 0 {
            debug!("epoch {epoch}: loss {value:.6e}");
        }
    }
    Ok(history)
}
