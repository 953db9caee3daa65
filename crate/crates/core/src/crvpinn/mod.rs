//! Collocation-based robust variational network for the pressure equation.
//!
//! The network output is multiplied by a cutoff that vanishes on the
//! boundary, the discrete weak residual is tested with Kronecker deltas on a
//! uniform lattice, and the loss contracts the residual with the inverse of
//! the five-point Gram matrix, factorized once per lattice.

mod mlp;
mod stencil;
mod train;

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::spline::SplineError;

pub use mlp::{Activation, ForwardCache, Mlp, MlpParams};
pub use stencil::{
    alpha_grid, compute_rhs_grid, cutoff, discrete_gradient_forward, five_point_solve, residual, residual_adjoint,
    CollocationGrid, GramOperator, PressureScaling,
};
pub use train::{grad_loss, loss, train, AdamState, PinnModel, PinnProblem};

#[derive(Error, Debug)]
pub enum PinnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite {what} at epoch {epoch}")]
    NonFinite { epoch: usize, what: String },
    #[error("checkpoint line {line}: {message}")]
    Checkpoint { line: usize, message: String },
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// Default hidden architecture.
pub const DEFAULT_WIDTHS: [usize; 5] = [2, 64, 64, 64, 1];

/// Magnitude of the discrete solution with the mean mobility,
/// `‖G⁻¹ f‖∞ / mean(α)`; 1 for a zero load.
pub fn estimate_output_scale(problem: &PinnProblem, gram: &GramOperator) -> Result<f64, PinnError> {
    let n = gram.grid().n();
    let interior: Vec<f64> = (1..n)
        .flat_map(|i| (1..n).map(move |j| (i, j)))
        .map(|(i, j)| problem.load[[i, j]])
        .collect();
    let mean_alpha = problem.alpha.mean().unwrap_or(1.0);
    let u = gram.apply_inverse(&interior)?;
    let scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs())) / mean_alpha;
    Ok(if scale > 0.0 && scale.is_finite() { scale } else { 1.0 })
}

const MAGIC: &str = "crvpinn-checkpoint v1";

/// Trained network together with optimizer state and the pressure units.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: PinnModel,
    pub adam: AdamState,
    pub scaling: PressureScaling,
}

impl Checkpoint {
    /// Flat text: a header of `key value` lines, then the sections `params`,
    /// `adam_m` and `adam_v`, each one value per line in layer order
    /// (weights row-major, then biases).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let widths: Vec<String> = self.model.mlp.widths().iter().map(|w| w.to_string()).collect();
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "activation {}", self.model.mlp.activation().name());
        let _ = writeln!(out, "layers {}", widths.join(" "));
        let _ = writeln!(out, "output_scale {:e}", self.model.output_scale());
        let _ = writeln!(out, "length {:e}", self.scaling.length);
        let _ = writeln!(out, "p_ref {:e}", self.scaling.p_ref);
        let _ = writeln!(out, "alpha_ref {:e}", self.scaling.alpha_ref);
        let _ = writeln!(out, "adam_step {}", self.adam.step);
        for (name, params) in [
            ("params", &self.model.mlp.params),
            ("adam_m", &self.adam.m),
            ("adam_v", &self.adam.v),
        ] {
            let _ = writeln!(out, "{name}");
            for v in params.iter() {
                let _ = writeln!(out, "{v:e}");
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, PinnError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut next = |expect: &str| -> Result<(usize, String), PinnError> {
            lines
                .next()
                .map(|(n, l)| (n, l.to_string()))
                .ok_or(PinnError::Checkpoint {
                    line: 0,
                    message: format!("file ends before {expect}"),
                })
        };
        let bad = |line: usize, message: String| PinnError::Checkpoint { line, message };
        let (n, magic) = next("header")?;
        if magic != MAGIC {
            return Err(bad(n, format!("expected '{MAGIC}', found '{magic}'")));
        }
        let mut field = |key: &str| -> Result<(usize, String), PinnError> {
            let (n, l) = next(key)?;
            match l.split_once(' ') {
                Some((k, v)) if k == key => Ok((n, v.trim().to_string())),
                _ => Err(bad(n, format!("expected '{key} <value>', found '{l}'"))),
            }
        };
        let (n, act) = field("activation")?;
        let activation = Activation::parse(&act).ok_or_else(|| bad(n, format!("unknown activation '{act}'")))?;
        let (n, layers) = field("layers")?;
        let widths = layers
            .split_whitespace()
            .map(|w| w.parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| bad(n, format!("layer width: {e}")))?;
        let mut real = |key: &str| -> Result<f64, PinnError> {
            let (n, v) = field(key)?;
            v.parse::<f64>().map_err(|e| bad(n, format!("{key}: {e}")))
        };
        let output_scale = real("output_scale")?;
        let scaling = PressureScaling {
            length: real("length")?,
            p_ref: real("p_ref")?,
            alpha_ref: real("alpha_ref")?,
        };
        let (n, step) = field("adam_step")?;
        let step = step.parse::<u64>().map_err(|e| bad(n, format!("adam_step: {e}")))?;
        let template = MlpParams::zeros(&widths);
        let mut read_section = |name: &str| -> Result<MlpParams, PinnError> {
            let (n, l) = next(name)?;
            if l != name {
                return Err(bad(n, format!("expected section '{name}', found '{l}'")));
            }
            let mut p = template.clone();
            for slot in p.iter_mut() {
                let (n, l) = next(name)?;
                *slot = l.parse::<f64>().map_err(|e| bad(n, format!("{name}: {e}")))?;
            }
            Ok(p)
        };
        let params = read_section("params")?;
        let m = read_section("adam_m")?;
        let v = read_section("adam_v")?;
        let mlp = Mlp::from_params(&widths, activation, params)?;
        let mut adam = AdamState::new(&mlp.params);
        adam.m = m;
        adam.v = v;
        adam.step = step;
        Ok(Self {
            model: PinnModel::with_scale(mlp, output_scale)?,
            adam,
            scaling,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), PinnError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PinnError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}
