//! Galerkin pressure solve on the tensor B-spline space.
//!
//! Assembles `∫ α ∇B_ij · ∇B_kl` with the gravity flux and source load,
//! eliminates the homogeneous Dirichlet boundary symmetrically and solves
//! with Jacobi-preconditioned conjugate gradients.

use thiserror::Error;

use crate::projection::{ProjectionError, QuadPoint, TensorQuadrature, TensorSplineField};
use crate::reservoir::{alpha_at, gravity_mobility, Reservoir};
use crate::spline::{QuadratureRule, SplineSpace1D};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum PressureError {
    #[error("conjugate gradients stopped after {iterations} iterations at relative residual {residual:e}")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("system has {expected} unknowns, got a vector of length {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in the pressure system")]
    NonFinite,
    #[error(transparent)]
    Projection(#[from] ProjectionError),
}

/// Compressed sparse rows with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted = triplets.to_vec();
        sorted.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0; n + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            assert!(r < n && c < n, "triplet ({r}, {c}) outside {n}x{n}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Zero matrix with the sparsity pattern of a tensor spline stiffness:
    /// `(i, j)` couples to `(k, l)` when `|i - k| <= px` and `|j - l| <= py`.
    fn tensor_pattern(nx: usize, ny: usize, px: usize, py: usize) -> Self {
        let n = nx * ny;
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for i in 0..nx {
            for j in 0..ny {
                for k in i.saturating_sub(px)..=(i + px).min(nx - 1) {
                    for l in j.saturating_sub(py)..=(j + py).min(ny - 1) {
                        col_idx.push(k * ny + l);
                    }
                }
                row_ptr.push(col_idx.len());
            }
        }
        let values = vec![0.0; col_idx.len()];
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    fn position(&self, r: usize, c: usize) -> Option<usize> {
        let row = &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]];
        row.binary_search(&c).ok().map(|k| self.row_ptr[r] + k)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.position(r, c).map_or(0.0, |k| self.values[k])
    }

    fn add(&mut self, r: usize, c: usize, v: f64) {
        let k = self
            .position(r, c)
            .unwrap_or_else(|| panic!("({r}, {c}) is outside the sparsity pattern"));
        self.values[k] += v;
    }

    /// Iterates the stored entries of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.col_idx[k], self.values[k]))
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *out = s;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, r)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|A(r, c) - A(c, r)|` over stored entries.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        d
    }
}

/// Outcome of a converged conjugate-gradient solve.
#[derive(Debug, Clone, PartialEq)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients from a zero initial guess.
pub fn conjugate_gradient(
    a: &CsrMatrix,
    b: &[f64],
    tolerance: f64,
    max_iterations: usize,
) -> Result<CgSolution, PressureError> {
    let n = a.size();
    if b.len() != n {
        return Err(PressureError::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let b_norm = dot(b, b).sqrt();
    if !b_norm.is_finite() {
        return Err(PressureError::NonFinite);
    }
    if b_norm == 0.0 {
        return Ok(CgSolution {
            x: vec![0.0; n],
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut residual = 1.0;
    for it in 1..=max_iterations {
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(PressureError::NotConverged {
                iterations: it,
                residual,
            });
        }
        let step = rz / pap;
        for k in 0..n {
            x[k] += step * p[k];
            r[k] -= step * ap[k];
        }
        residual = dot(&r, &r).sqrt() / b_norm;
        if residual <= tolerance {
            return Ok(CgSolution {
                x,
                iterations: it,
                relative_residual: residual,
            });
        }
        for k in 0..n {
            z[k] = r[k] * inv_diag[k];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(PressureError::NotConverged {
        iterations: max_iterations,
        residual,
    })
}

/// Coefficients of the weak elliptic problem at one quadrature point, with
/// derivatives in reference coordinates:
/// `∫ αx ∂xu ∂xv + αy ∂yu ∂yv = ∫ source·v + flux·∇v`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EllipticCoefficients {
    pub alpha_x: f64,
    pub alpha_y: f64,
    pub source: f64,
    pub flux: [f64; 2],
}

/// Assembled pressure system over the tensor spline space; unknown
/// `(i, j)` is stored at `i * n_basis_y + j`.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub space_x: SplineSpace1D,
    pub space_y: SplineSpace1D,
}

impl SparseSystem {
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.space_y.n_basis() + j
    }
}

/// Assembles the Galerkin system for arbitrary coefficients.
/// `dirichlet` zeroes boundary unknowns by symmetric row/column elimination.
pub fn assemble_elliptic(
    space_x: &SplineSpace1D,
    space_y: &SplineSpace1D,
    quad: &QuadratureRule,
    dirichlet: bool,
    mut coefficients: impl FnMut(&QuadPoint, &TensorQuadrature) -> EllipticCoefficients,
) -> SparseSystem {
    let (nx, ny) = (space_x.n_basis(), space_y.n_basis());
    let mut matrix = CsrMatrix::tensor_pattern(nx, ny, space_x.degree(), space_y.degree());
    let mut rhs = vec![0.0; nx * ny];
    let tq = TensorQuadrature::new(space_x, space_y, quad);
    let (lx, ly) = (space_x.degree() + 1, space_y.degree() + 1);
    let mut gx = vec![0.0; lx * ly];
    let mut gy = vec![0.0; lx * ly];
    let mut vv = vec![0.0; lx * ly];
    let mut dofs = vec![0usize; lx * ly];
    tq.for_each_point(|p| {
        let c = coefficients(p, &tq);
        let vx = tq.tx.values(p.ex, p.qx);
        let dx = tq.tx.derivs(p.ex, p.qx);
        let vy = tq.ty.values(p.ey, p.qy);
        let dy = tq.ty.derivs(p.ey, p.qy);
        for a in 0..lx {
            for b in 0..ly {
                let k = a * ly + b;
                vv[k] = vx[a] * vy[b];
                gx[k] = dx[a] * vy[b];
                gy[k] = vx[a] * dy[b];
                dofs[k] = (p.ex + a) * ny + (p.ey + b);
            }
        }
        let w = p.weight;
        for r in 0..lx * ly {
            rhs[dofs[r]] += w * (c.source * vv[r] + c.flux[0] * gx[r] + c.flux[1] * gy[r]);
            let wx = w * c.alpha_x * gx[r];
            let wy = w * c.alpha_y * gy[r];
            for s in 0..lx * ly {
                matrix.add(dofs[r], dofs[s], wx * gx[s] + wy * gy[s]);
            }
        }
    });
    if dirichlet {
        let boundary = |idx: usize| {
            let (i, j) = (idx / ny, idx % ny);
            i == 0 || j == 0 || i + 1 == nx || j + 1 == ny
        };
        let n = matrix.size();
        let mean_diag = {
            let interior: Vec<f64> = (0..n).filter(|&r| !boundary(r)).map(|r| matrix.get(r, r)).collect();
            if interior.is_empty() {
                1.0
            } else {
                interior.iter().sum::<f64>() / interior.len() as f64
            }
        };
        for r in 0..n {
            let row_is_boundary = boundary(r);
            for k in matrix.row_ptr[r]..matrix.row_ptr[r + 1] {
                let c = matrix.col_idx[k];
                if row_is_boundary || boundary(c) {
                    matrix.values[k] = if r == c { mean_diag } else { 0.0 };
                }
            }
            if row_is_boundary {
                rhs[r] = 0.0;
            }
        }
    }
    SparseSystem {
        matrix,
        rhs,
        space_x: space_x.clone(),
        space_y: space_y.clone(),
    }
}

/// Pressure system for saturation `s_g`: `∫ α ∇p·∇v = ∫ g⃗ K λρ·∇v + ∫ (q_w + q_g) v`,
/// integrated over the physical domain and divided by its area.
pub fn assemble_pressure_system(
    s_g: &TensorSplineField,
    reservoir: &Reservoir,
    tau: f64,
    quad: &QuadratureRule,
) -> SparseSystem {
    let lx = reservoir.domain.length_x;
    let ly = reservoir.domain.length_y;
    let fluids = reservoir.fluids;
    assemble_elliptic(&s_g.space_x, &s_g.space_y, quad, true, |p, tq| {
        let (s, _) = s_g.eval_at(tq, p);
        let k = reservoir.k(p.x, p.y);
        let alpha = alpha_at(s.clamp(0.0, 1.0), k, &fluids);
        EllipticCoefficients {
            alpha_x: alpha / (lx * lx),
            alpha_y: alpha / (ly * ly),
            source: reservoir.total_source_rate(p.x, p.y, tau),
            flux: [0.0, -fluids.gravity * gravity_mobility(s, k, &fluids) / ly],
        }
    })
}

/// Relative residual target for [`solve_pressure_direct`].
pub const CG_TOLERANCE: f64 = 1e-10;

pub fn solve_pressure_direct(system: &SparseSystem) -> Result<TensorSplineField, PressureError> {
    let n = system.matrix.size();
    let sol = conjugate_gradient(&system.matrix, &system.rhs, CG_TOLERANCE, 10 * n)?;
    let coeffs = ndarray::Array2::from_shape_vec((system.space_x.n_basis(), system.space_y.n_basis()), sol.x)
        .expect("system size matches the spaces");
    let mut field = TensorSplineField::from_coeffs(system.space_x.clone(), system.space_y.clone(), coeffs)?;
    field.zero_boundary();
    Ok(field)
}
