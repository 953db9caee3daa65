//! Tensor-product B-spline fields and isogeometric L2 projection.
//!
//! The 2D mass matrix of a tensor basis factors as `M = Mx ⊗ My`, so a
//! projection costs one banded solve per column followed by one per row.

use ndarray::Array2;

use crate::spline::{mass_matrix_1d, BandedLdl, BandedMatrix, BasisTable, QuadratureRule, SplineError, SplineSpace1D};

/// Coefficients over the tensor basis `B_i(x) B_j(y)`; `coeffs[[i, j]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSplineField {
    pub space_x: SplineSpace1D,
    pub space_y: SplineSpace1D,
    pub coeffs: Array2<f64>,
}

/// A point of the tensor quadrature together with its element/point indices.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub ex: usize,
    pub ey: usize,
    pub qx: usize,
    pub qy: usize,
    pub x: f64,
    pub y: f64,
    /// Product weight including element size.
    pub weight: f64,
}

/// Basis tables for both axes on a shared quadrature rule.
#[derive(Debug, Clone)]
pub struct TensorQuadrature {
    pub tx: BasisTable,
    pub ty: BasisTable,
}

impl TensorQuadrature {
    pub fn new(space_x: &SplineSpace1D, space_y: &SplineSpace1D, quad: &QuadratureRule) -> Self {
        Self {
            tx: space_x.tabulate(quad),
            ty: space_y.tabulate(quad),
        }
    }

    /// Visits every quadrature point element by element, x-elements outermost.
    pub fn for_each_point(&self, mut f: impl FnMut(&QuadPoint)) {
        for ex in 0..self.tx.n_elements() {
            for ey in 0..self.ty.n_elements() {
                for qx in 0..self.tx.n_quad() {
                    for qy in 0..self.ty.n_quad() {
                        f(&QuadPoint {
                            ex,
                            ey,
                            qx,
                            qy,
                            x: self.tx.point(ex, qx),
                            y: self.ty.point(ey, qy),
                            weight: self.tx.weight(ex, qx) * self.ty.weight(ey, qy),
                        });
                    }
                }
            }
        }
    }

    pub fn n_points(&self) -> usize {
        self.tx.n_elements() * self.tx.n_quad() * self.ty.n_elements() * self.ty.n_quad()
    }
}

impl TensorSplineField {
    pub fn zeros(space_x: SplineSpace1D, space_y: SplineSpace1D) -> Self {
        let coeffs = Array2::zeros((space_x.n_basis(), space_y.n_basis()));
        Self {
            space_x,
            space_y,
            coeffs,
        }
    }

    pub fn from_coeffs(
        space_x: SplineSpace1D,
        space_y: SplineSpace1D,
        coeffs: Array2<f64>,
    ) -> Result<Self, ProjectionError> {
        let expected = (space_x.n_basis(), space_y.n_basis());
        if coeffs.dim() != expected {
            return Err(ProjectionError::ShapeMismatch {
                expected,
                got: coeffs.dim(),
            });
        }
        Ok(Self {
            space_x,
            space_y,
            coeffs,
        })
    }

    /// Value and reference-coordinate gradient at `(x, y)`.
    pub fn eval(&self, x: f64, y: f64) -> Result<(f64, [f64; 2]), SplineError> {
        let ex = self.space_x.element_of(x)?;
        let ey = self.space_y.element_of(y)?;
        let nx = self.space_x.degree() + 1;
        let ny = self.space_y.degree() + 1;
        let mut vx = vec![0.0; nx];
        let mut dx = vec![0.0; nx];
        let mut vy = vec![0.0; ny];
        let mut dy = vec![0.0; ny];
        self.space_x.eval_local(ex, x, &mut vx, &mut dx);
        self.space_y.eval_local(ey, y, &mut vy, &mut dy);
        Ok(self.contract(ex, ey, &vx, &dx, &vy, &dy))
    }

    /// Value and gradient at a quadrature point of matching tables.
    pub fn eval_at(&self, tq: &TensorQuadrature, p: &QuadPoint) -> (f64, [f64; 2]) {
        self.contract(
            p.ex,
            p.ey,
            tq.tx.values(p.ex, p.qx),
            tq.tx.derivs(p.ex, p.qx),
            tq.ty.values(p.ey, p.qy),
            tq.ty.derivs(p.ey, p.qy),
        )
    }

    fn contract(&self, ex: usize, ey: usize, vx: &[f64], dx: &[f64], vy: &[f64], dy: &[f64]) -> (f64, [f64; 2]) {
        let mut value = 0.0;
        let mut gx = 0.0;
        let mut gy = 0.0;
        for a in 0..vx.len() {
            let mut row_v = 0.0;
            let mut row_d = 0.0;
            for b in 0..vy.len() {
                let c = self.coeffs[[ex + a, ey + b]];
                row_v += c * vy[b];
                row_d += c * dy[b];
            }
            value += vx[a] * row_v;
            gx += dx[a] * row_v;
            gy += vx[a] * row_d;
        }
        (value, [gx, gy])
    }

    /// Sets every coefficient on the boundary of the index rectangle to zero.
    pub fn zero_boundary(&mut self) {
        let (nx, ny) = self.coeffs.dim();
        for i in 0..nx {
            self.coeffs[[i, 0]] = 0.0;
            self.coeffs[[i, ny - 1]] = 0.0;
        }
        for j in 0..ny {
            self.coeffs[[0, j]] = 0.0;
            self.coeffs[[nx - 1, j]] = 0.0;
        }
    }

    pub fn is_boundary_index(&self, i: usize, j: usize) -> bool {
        let (nx, ny) = self.coeffs.dim();
        i == 0 || j == 0 || i + 1 == nx || j + 1 == ny
    }

    /// Samples the value on a uniform `rows × cols` lattice including the
    /// domain boundary; row `r` is the line `y = r / (rows - 1)`.
    pub fn sample_grid(&self, rows: usize, cols: usize) -> Array2<f64> {
        let at = |k: usize, n: usize| if n > 1 { k as f64 / (n - 1) as f64 } else { 0.5 };
        Array2::from_shape_fn((rows, cols), |(r, c)| {
            self.eval(at(c, cols), at(r, rows))
                .expect("lattice points lie in the unit square")
                .0
        })
    }

    /// ∫ field over the unit square.
    pub fn integral(&self, quad: &QuadratureRule) -> f64 {
        let tq = TensorQuadrature::new(&self.space_x, &self.space_y, quad);
        let mut total = 0.0;
        tq.for_each_point(|p| total += p.weight * self.eval_at(&tq, p).0);
        total
    }
}

#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum ProjectionError {
    #[error("coefficient matrix has shape {got:?}, spaces require {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error(transparent)]
    Spline(#[from] SplineError),
}

/// `load[[k, l]] = ∫∫ f(x, y) B_k(x) B_l(y) dx dy`.
pub fn assemble_load(
    space_x: &SplineSpace1D,
    space_y: &SplineSpace1D,
    quad: &QuadratureRule,
    f: impl Fn(f64, f64) -> f64,
) -> Array2<f64> {
    let tq = TensorQuadrature::new(space_x, space_y, quad);
    assemble_weak_load(space_x, space_y, &tq, |p| (f(p.x, p.y), [0.0, 0.0]))
}

/// `load[[k, l]] = ∫∫ a·v + b·∇v` with `v = B_k(x) B_l(y)` where
/// `(a, b) = integrand(point)`; gradients are in reference coordinates.
pub fn assemble_weak_load(
    space_x: &SplineSpace1D,
    space_y: &SplineSpace1D,
    tq: &TensorQuadrature,
    mut integrand: impl FnMut(&QuadPoint) -> (f64, [f64; 2]),
) -> Array2<f64> {
    let mut load = Array2::zeros((space_x.n_basis(), space_y.n_basis()));
    tq.for_each_point(|p| {
        let (a, [bx, by]) = integrand(p);
        if a == 0.0 && bx == 0.0 && by == 0.0 {
            return;
        }
        let vx = tq.tx.values(p.ex, p.qx);
        let dx = tq.tx.derivs(p.ex, p.qx);
        let vy = tq.ty.values(p.ey, p.qy);
        let dy = tq.ty.derivs(p.ey, p.qy);
        for ka in 0..vx.len() {
            let cv = p.weight * (a * vx[ka] + bx * dx[ka]);
            let cd = p.weight * by * vx[ka];
            for lb in 0..vy.len() {
                load[[p.ex + ka, p.ey + lb]] += cv * vy[lb] + cd * dy[lb];
            }
        }
    });
    load
}

/// Cached factorizations of `Mx` and `My`.
#[derive(Debug, Clone)]
pub struct KroneckerSolver {
    fx: BandedLdl,
    fy: BandedLdl,
}

impl KroneckerSolver {
    pub fn new(mass_x: &BandedMatrix, mass_y: &BandedMatrix) -> Result<Self, SplineError> {
        Ok(Self {
            fx: mass_x.factorize()?,
            fy: mass_y.factorize()?,
        })
    }

    pub fn for_spaces(
        space_x: &SplineSpace1D,
        space_y: &SplineSpace1D,
        quad: &QuadratureRule,
    ) -> Result<Self, SplineError> {
        Self::new(&mass_matrix_1d(space_x, quad)?, &mass_matrix_1d(space_y, quad)?)
    }

    /// Solves `(Mx ⊗ My) vec(C) = vec(load)` in place: x-sweeps over every
    /// column, then y-sweeps over every row.
    pub fn solve_in_place(&self, load: &mut Array2<f64>) -> Result<(), ProjectionError> {
        let (nx, ny) = load.dim();
        if nx != self.fx.size() || ny != self.fy.size() {
            return Err(ProjectionError::ShapeMismatch {
                expected: (self.fx.size(), self.fy.size()),
                got: (nx, ny),
            });
        }
        if !load.is_standard_layout() {
            *load = load.as_standard_layout().into_owned();
        }
        let data = load.as_slice_mut().expect("standard layout arrays are contiguous");
        let mut scratch = Vec::with_capacity(nx.max(ny));
        for j in 0..ny {
            self.fx.solve_strided(data, j, ny, &mut scratch)?;
        }
        for i in 0..nx {
            self.fy.solve_in_place(&mut data[i * ny..(i + 1) * ny])?;
        }
        Ok(())
    }
}

/// Returns `C` with `Mx C Myᵀ = load`.
pub fn solve_kronecker(
    mass_x: &BandedMatrix,
    mass_y: &BandedMatrix,
    load: &Array2<f64>,
) -> Result<Array2<f64>, ProjectionError> {
    let solver = KroneckerSolver::new(mass_x, mass_y)?;
    let mut c = load.clone();
    solver.solve_in_place(&mut c)?;
    Ok(c)
}

/// L2 projection of `f` onto the tensor spline space.
pub fn project_l2(
    f: impl Fn(f64, f64) -> f64,
    space_x: &SplineSpace1D,
    space_y: &SplineSpace1D,
    quad: &QuadratureRule,
) -> Result<TensorSplineField, ProjectionError> {
    let mut load = assemble_load(space_x, space_y, quad, f);
    KroneckerSolver::for_spaces(space_x, space_y, quad)?.solve_in_place(&mut load)?;
    TensorSplineField::from_coeffs(space_x.clone(), space_y.clone(), load)
}

/// Value and gradient of `field` at `(x, y)`.
pub fn eval_field(field: &TensorSplineField, x: f64, y: f64) -> Result<(f64, [f64; 2]), SplineError> {
    field.eval(x, y)
}
