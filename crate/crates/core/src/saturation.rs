//! Explicit forward-Euler update of the gas saturation.
//!
//! Each step projects
//!
//! ```text
//! S + φ⁻¹τ q_g + φ⁻¹τ ∇·( S/μg K (∇p − ρg g⃗) )
//! ```
//!
//! onto the spline space in weak form: the divergence is moved onto the test
//! function and the resulting load is inverted with the Kronecker mass
//! solver. The gravity contribution enters as `+ρg g ∂v/∂y`, and boundary
//! coefficients are held at zero.
//!
//! The source increment is projected either with the consistent mass matrix
//! like the rest of the load, or with the row-sum (lumped) mass matrix. The
//! lumped form keeps the coefficients of a nonnegative source nonnegative and
//! adds exactly `∫ φ⁻¹τ q_g`, whereas the consistent projection of a sharp
//! disk rings below zero around its rim and clamping those lobes adds mass.

use log::{debug, warn};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::projection::{
    assemble_weak_load, KroneckerSolver, ProjectionError, QuadPoint, TensorQuadrature, TensorSplineField,
};
use crate::reservoir::{FluidParams, Reservoir};
use crate::spline::{QuadratureRule, SplineSpace1D};

#[derive(Debug, Clone, PartialEq)]
pub struct SaturationState {
    pub s_g: TensorSplineField,
    pub step_index: usize,
    /// s
    pub time: f64,
}

impl SaturationState {
    pub fn new(s_g: TensorSplineField) -> Self {
        Self {
            s_g,
            step_index: 0,
            time: 0.0,
        }
    }
}

/// Diagnostics from one step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepReport {
    /// Coefficients pulled back into `[0, 1]`.
    pub clamped: usize,
    /// Largest `τ |v| / h` over quadrature points, `v` the gas transport velocity.
    pub courant: f64,
}

/// Coefficients `(a, b)` of the weak right-hand side `a v + b·∇v` at one point,
/// with `∇v` in reference coordinates.
#[allow(clippy::too_many_arguments)]
pub fn integrand_terms(
    s: f64,
    grad_p: [f64; 2],
    k: f64,
    phi: f64,
    increment: f64,
    tau: f64,
    fluids: &FluidParams,
    lengths: [f64; 2],
) -> (f64, [f64; 2]) {
    let [lx, ly] = lengths;
    let c = tau / phi * s / fluids.mu_g * k;
    let bx = -c * grad_p[0] / (lx * lx);
    let by = c * (fluids.rho_g * fluids.gravity / ly - grad_p[1] / (ly * ly));
    (s + increment, [bx, by])
}

/// The weak saturation integrand for test function `B_k(x) B_l(y)` at `(x, y)`.
pub fn saturation_rhs_integrand(
    s_n: &TensorSplineField,
    p_n: &TensorSplineField,
    reservoir: &Reservoir,
    tau: f64,
    test: (usize, usize),
    x: f64,
    y: f64,
) -> Result<f64, ProjectionError> {
    let (s, _) = s_n.eval(x, y)?;
    let (_, grad_p) = p_n.eval(x, y)?;
    let (a, [bx, by]) = integrand_terms(
        s,
        grad_p,
        reservoir.k(x, y),
        reservoir.phi(x, y),
        reservoir.gas_increment(x, y),
        tau,
        &reservoir.fluids,
        [reservoir.domain.length_x, reservoir.domain.length_y],
    );
    let basis = |space: &SplineSpace1D, t: f64, idx: usize| -> Result<(f64, f64), ProjectionError> {
        Ok(space
            .eval_basis(t)?
            .into_iter()
            .find(|b| b.0 == idx)
            .map_or((0.0, 0.0), |b| (b.1, b.2)))
    };
    let (vx, dvx) = basis(&s_n.space_x, x, test.0)?;
    let (vy, dvy) = basis(&s_n.space_y, y, test.1)?;
    Ok(a * vx * vy + bx * dvx * vy + by * vx * dvy)
}

/// How the source increment is mapped onto spline coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceProjection {
    /// Row-sum mass matrix: `c_kl = ∫ q B_kl / ∫ B_kl`.
    #[default]
    Lumped,
    /// Consistent mass matrix, together with the rest of the load.
    L2,
}

impl SourceProjection {
    pub fn name(self) -> &'static str {
        match self {
            SourceProjection::Lumped => "lumped",
            SourceProjection::L2 => "l2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lumped" => Some(SourceProjection::Lumped),
            "l2" => Some(SourceProjection::L2),
            _ => None,
        }
    }
}

/// Material data frozen at the quadrature points, in visiting order.
#[derive(Debug, Clone)]
struct PointMaterial {
    k: f64,
    phi: f64,
    increment: f64,
}

/// Reusable stepping machinery for one mesh and reservoir.
#[derive(Debug, Clone)]
pub struct SaturationStepper {
    space_x: SplineSpace1D,
    space_y: SplineSpace1D,
    tq: TensorQuadrature,
    solver: KroneckerSolver,
    material: Vec<PointMaterial>,
    fluids: FluidParams,
    lengths: [f64; 2],
    /// Lumped source coefficients, present in [`SourceProjection::Lumped`] mode.
    lumped_source: Option<Array2<f64>>,
    /// Warn when the Courant number exceeds this.
    pub courant_limit: f64,
}

impl SaturationStepper {
    /// `load_quad` integrates the right-hand side; the mass matrix always uses
    /// the exact `degree + 1` point rule.
    pub fn new(
        space_x: &SplineSpace1D,
        space_y: &SplineSpace1D,
        load_quad: &QuadratureRule,
        reservoir: &Reservoir,
    ) -> Result<Self, ProjectionError> {
        let degree = space_x.degree().max(space_y.degree());
        let solver = KroneckerSolver::for_spaces(space_x, space_y, &QuadratureRule::for_degree(degree))?;
        let tq = TensorQuadrature::new(space_x, space_y, load_quad);
        let mut material = Vec::with_capacity(tq.n_points());
        tq.for_each_point(|p| {
            material.push(PointMaterial {
                k: reservoir.k(p.x, p.y),
                phi: reservoir.phi(p.x, p.y),
                increment: reservoir.gas_increment(p.x, p.y),
            })
        });
        let mut stepper = Self {
            space_x: space_x.clone(),
            space_y: space_y.clone(),
            tq,
            solver,
            material,
            fluids: reservoir.fluids,
            lengths: [reservoir.domain.length_x, reservoir.domain.length_y],
            lumped_source: None,
            courant_limit: 1.0,
        };
        stepper.set_source_projection(SourceProjection::default());
        Ok(stepper)
    }

    pub fn with_source_projection(mut self, mode: SourceProjection) -> Self {
        self.set_source_projection(mode);
        self
    }

    pub fn source_projection(&self) -> SourceProjection {
        if self.lumped_source.is_some() {
            SourceProjection::Lumped
        } else {
            SourceProjection::L2
        }
    }

    fn set_source_projection(&mut self, mode: SourceProjection) {
        self.lumped_source = match mode {
            SourceProjection::L2 => None,
            SourceProjection::Lumped => {
                let mut idx = 0;
                let source = assemble_weak_load(&self.space_x, &self.space_y, &self.tq, |_| {
                    idx += 1;
                    (self.material[idx - 1].increment, [0.0, 0.0])
                });
                let volume = assemble_weak_load(&self.space_x, &self.space_y, &self.tq, |_| (1.0, [0.0, 0.0]));
                Some(source / volume)
            }
        };
    }

    fn check_spaces(&self, f: &TensorSplineField) -> Result<(), ProjectionError> {
        if f.space_x != self.space_x || f.space_y != self.space_y {
            return Err(ProjectionError::ShapeMismatch {
                expected: (self.space_x.n_basis(), self.space_y.n_basis()),
                got: f.coeffs.dim(),
            });
        }
        Ok(())
    }

    /// Assembles the weak right-hand side for one step; also returns the
    /// Courant number. In lumped mode the source is left out and added by
    /// [`Self::finish_step`].
    pub fn assemble_rhs(
        &self,
        s_n: &TensorSplineField,
        p_n: &TensorSplineField,
        tau: f64,
    ) -> Result<(Array2<f64>, f64), ProjectionError> {
        self.check_spaces(s_n)?;
        self.check_spaces(p_n)?;
        let h = (self.lengths[0] * self.space_x.element_size()).min(self.lengths[1] * self.space_y.element_size());
        let mut idx = 0;
        let mut courant: f64 = 0.0;
        let f = &self.fluids;
        let [lx, ly] = self.lengths;
        let lumped = self.lumped_source.is_some();
        let load = assemble_weak_load(&self.space_x, &self.space_y, &self.tq, |p: &QuadPoint| {
            let m = &self.material[idx];
            idx += 1;
            let (s, _) = s_n.eval_at(&self.tq, p);
            let (_, grad_p) = p_n.eval_at(&self.tq, p);
            let vx = -grad_p[0] / lx;
            let vy = f.rho_g * f.gravity - grad_p[1] / ly;
            let speed = m.k / (m.phi * f.mu_g) * vx.hypot(vy);
            courant = courant.max(tau * speed / h);
            let increment = if lumped { 0.0 } else { m.increment };
            integrand_terms(s, grad_p, m.k, m.phi, increment, tau, f, self.lengths)
        });
        Ok((load, courant))
    }

    /// One forward-Euler step with pressure `p_n` held fixed.
    pub fn step(
        &self,
        state: &SaturationState,
        p_n: &TensorSplineField,
        tau: f64,
    ) -> Result<(SaturationState, StepReport), ProjectionError> {
        let (load, courant) = self.assemble_rhs(&state.s_g, p_n, tau)?;
        self.finish_step(state, load, courant, tau)
    }

    /// Projection half of [`Self::step`]: solves for the new coefficients
    /// from an assembled right-hand side, enforces the boundary and clamps.
    pub fn finish_step(
        &self,
        state: &SaturationState,
        mut load: Array2<f64>,
        courant: f64,
        tau: f64,
    ) -> Result<(SaturationState, StepReport), ProjectionError> {
        self.solver.solve_in_place(&mut load)?;
        if let Some(source) = &self.lumped_source {
            load += source;
        }
        let mut s_g = TensorSplineField::from_coeffs(self.space_x.clone(), self.space_y.clone(), load)?;
        s_g.zero_boundary();
        let mut clamped = 0;
        for c in s_g.coeffs.iter_mut() {
            if *c < 0.0 || *c > 1.0 {
                *c = c.clamp(0.0, 1.0);
                clamped += 1;
            }
        }
        if clamped > 0 {
            debug!(
                "step {}: clamped {clamped} saturation coefficients",
                state.step_index + 1
            );
        }
        if courant > self.courant_limit {
            warn!(
                "step {}: Courant number {courant:.3} exceeds {:.3}; explicit update may be unstable",
                state.step_index + 1,
                self.courant_limit
            );
        }
        Ok((
            SaturationState {
                s_g,
                step_index: state.step_index + 1,
                time: state.time + tau,
            },
            StepReport { clamped, courant },
        ))
    }
}

/// Convenience wrapper that builds a stepper for a single step.
pub fn step_saturation(
    state: &SaturationState,
    p_n: &TensorSplineField,
    reservoir: &Reservoir,
    tau: f64,
) -> Result<(SaturationState, StepReport), ProjectionError> {
    let degree = state.s_g.space_x.degree();
    let stepper = SaturationStepper::new(
        &state.s_g.space_x,
        &state.s_g.space_y,
        &QuadratureRule::for_degree(degree),
        reservoir,
    )?;
    stepper.step(state, p_n, tau)
}

/// `∫ φ S_g` over the reference square.
pub fn total_gas_mass(state: &SaturationState, reservoir: &Reservoir, quad: &QuadratureRule) -> f64 {
    let tq = TensorQuadrature::new(&state.s_g.space_x, &state.s_g.space_y, quad);
    let mut total = 0.0;
    tq.for_each_point(|p| {
        let (s, _) = state.s_g.eval_at(&tq, p);
        total += p.weight * reservoir.phi(p.x, p.y) * s;
    });
    total
}
