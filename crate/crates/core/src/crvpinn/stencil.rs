use ndarray::Array2;

use super::PinnError;
use crate::reservoir::{alpha_at, gravity_mobility, Reservoir};
use crate::spline::{BandedLdl, BandedMatrix};

/// Uniform `(N + 1) × (N + 1)` lattice on the reference square; grids are
/// indexed `[[i, j]]` at `(i h, j h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollocationGrid {
    n: usize,
    h: f64,
}

impl CollocationGrid {
    pub fn new(n: usize) -> Result<Self, PinnError> {
        if n < 2 {
            return Err(PinnError::Shape(format!("collocation grid needs N >= 2, got {n}")));
        }
        Ok(Self { n, h: 1.0 / n as f64 })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Points per axis including the boundary.
    pub fn side(&self) -> usize {
        self.n + 1
    }

    pub fn n_interior(&self) -> usize {
        (self.n - 1) * (self.n - 1)
    }

    pub fn point(&self, i: usize, j: usize) -> (f64, f64) {
        let coord = |k: usize| if k == self.n { 1.0 } else { k as f64 * self.h };
        (coord(i), coord(j))
    }

    pub fn is_interior(&self, i: usize, j: usize) -> bool {
        i >= 1 && j >= 1 && i < self.n && j < self.n
    }

    /// Interior points in row-major order, `(i - 1)(N - 1) + (j - 1)`.
    pub fn interior_points(&self) -> Array2<f64> {
        let m = self.n - 1;
        let mut pts = Array2::zeros((m * m, 2));
        for i in 1..self.n {
            for j in 1..self.n {
                let (x, y) = self.point(i, j);
                let r = (i - 1) * m + (j - 1);
                pts[[r, 0]] = x;
                pts[[r, 1]] = y;
            }
        }
        pts
    }

    pub fn zeros(&self) -> Array2<f64> {
        Array2::zeros((self.side(), self.side()))
    }

    pub fn from_fn(&self, mut f: impl FnMut(f64, f64) -> f64) -> Array2<f64> {
        Array2::from_shape_fn((self.side(), self.side()), |(i, j)| {
            let (x, y) = self.point(i, j);
            f(x, y)
        })
    }

    pub(crate) fn check(&self, grid: &Array2<f64>, what: &str) -> Result<(), PinnError> {
        if grid.dim() != (self.side(), self.side()) {
            return Err(PinnError::Shape(format!(
                "{what} grid is {:?}, expected {}x{}",
                grid.dim(),
                self.side(),
                self.side()
            )));
        }
        Ok(())
    }
}

/// Hard Dirichlet factor, 1 at the center and 0 on the boundary.
pub fn cutoff(x: f64, y: f64) -> f64 {
    16.0 * x * (1.0 - x) * y * (1.0 - y)
}

/// Forward differences `((u[i+1,j] - u[i,j]) / h, (u[i,j+1] - u[i,j]) / h)`
/// for `i, j < N`.
pub fn discrete_gradient_forward(u: &Array2<f64>, h: f64) -> Result<(Array2<f64>, Array2<f64>), PinnError> {
    let (r, c) = u.dim();
    if r < 2 || c < 2 {
        return Err(PinnError::Shape(format!(
            "gradient needs at least 2x2 points, got {r}x{c}"
        )));
    }
    let gx = Array2::from_shape_fn((r - 1, c - 1), |(i, j)| (u[[i + 1, j]] - u[[i, j]]) / h);
    let gy = Array2::from_shape_fn((r - 1, c - 1), |(i, j)| (u[[i, j + 1]] - u[[i, j]]) / h);
    Ok((gx, gy))
}

/// Discrete weak residual at interior points, returned as an
/// `(N - 1) × (N - 1)` grid indexed `[[k - 1, l - 1]]`:
///
/// `RES_kl = α_{k-1,l}(u_kl - u_{k-1,l}) + α_{k,l-1}(u_kl - u_{k,l-1})
///         - α_kl(u_{k+1,l} - u_kl) - α_kl(u_{k,l+1} - u_kl) - h² f_kl`.
pub fn residual(u: &Array2<f64>, alpha: &Array2<f64>, f: &Array2<f64>, h: f64) -> Result<Array2<f64>, PinnError> {
    let dim = u.dim();
    if alpha.dim() != dim || f.dim() != dim || dim.0 != dim.1 || dim.0 < 3 {
        return Err(PinnError::Shape(format!(
            "residual inputs must be matching square grids, got {:?}, {:?}, {:?}",
            dim,
            alpha.dim(),
            f.dim()
        )));
    }
    let m = dim.0 - 2;
    let h2 = h * h;
    Ok(Array2::from_shape_fn((m, m), |(a, b)| {
        let (k, l) = (a + 1, b + 1);
        let c = u[[k, l]];
        alpha[[k - 1, l]] * (c - u[[k - 1, l]]) + alpha[[k, l - 1]] * (c - u[[k, l - 1]])
            - alpha[[k, l]] * (u[[k + 1, l]] - c)
            - alpha[[k, l]] * (u[[k, l + 1]] - c)
            - h2 * f[[k, l]]
    }))
}

/// Transpose of the residual stencil applied to interior weights `w`; the
/// result covers the full grid.
pub fn residual_adjoint(w: &Array2<f64>, alpha: &Array2<f64>) -> Array2<f64> {
    let side = alpha.dim().0;
    let mut out = Array2::zeros((side, side));
    for ((a, b), &wv) in w.indexed_iter() {
        let (k, l) = (a + 1, b + 1);
        let west = alpha[[k - 1, l]];
        let south = alpha[[k, l - 1]];
        let here = alpha[[k, l]];
        out[[k, l]] += wv * (west + south + 2.0 * here);
        out[[k - 1, l]] -= wv * west;
        out[[k, l - 1]] -= wv * south;
        out[[k + 1, l]] -= wv * here;
        out[[k, l + 1]] -= wv * here;
    }
    out
}

/// Solves the interior five-point system `RES(u) = 0` with zero boundary
/// values by banded factorization.
pub fn five_point_solve(
    alpha: &Array2<f64>,
    f: &Array2<f64>,
    grid: &CollocationGrid,
) -> Result<Array2<f64>, PinnError> {
    grid.check(alpha, "mobility")?;
    grid.check(f, "load")?;
    let n = grid.n();
    let m = n - 1;
    let idx = |k: usize, l: usize| (k - 1) * m + (l - 1);
    let mut mat = BandedMatrix::zeros(m * m, m);
    let mut rhs = vec![0.0; m * m];
    let h2 = grid.h() * grid.h();
    for k in 1..n {
        for l in 1..n {
            let r = idx(k, l);
            mat.set(r, r, alpha[[k - 1, l]] + alpha[[k, l - 1]] + 2.0 * alpha[[k, l]]);
            if k + 1 < n {
                mat.set(r, idx(k + 1, l), -alpha[[k, l]]);
                mat.set(idx(k + 1, l), r, -alpha[[k, l]]);
            }
            if l + 1 < n {
                mat.set(r, idx(k, l + 1), -alpha[[k, l]]);
                mat.set(idx(k, l + 1), r, -alpha[[k, l]]);
            }
            rhs[r] = h2 * f[[k, l]];
        }
    }
    let sol = mat.factorize()?.solve(&rhs)?;
    let mut u = grid.zeros();
    for k in 1..n {
        for l in 1..n {
            u[[k, l]] = sol[idx(k, l)];
        }
    }
    Ok(u)
}

/// Factorized Gram matrix of the Kronecker-delta test functions under the
/// discrete gradient inner product.
#[derive(Debug, Clone)]
pub struct GramOperator {
    grid: CollocationGrid,
    factor: BandedLdl,
}

impl GramOperator {
    pub fn new(grid: CollocationGrid) -> Result<Self, PinnError> {
        let m = grid.n() - 1;
        let mut g = BandedMatrix::zeros(m * m, m);
        for r in 0..m * m {
            for c in r.saturating_sub(m)..=(r + m).min(m * m - 1) {
                let v = Self::entry_for(&grid, r, c);
                if v != 0.0 {
                    g.set(r, c, v);
                }
            }
        }
        Ok(Self {
            grid,
            factor: g.factorize()?,
        })
    }

    fn entry_for(grid: &CollocationGrid, r: usize, c: usize) -> f64 {
        let m = grid.n() - 1;
        let inv_h2 = (grid.n() * grid.n()) as f64;
        let (ri, rj) = (r / m, r % m);
        let (ci, cj) = (c / m, c % m);
        match (ri.abs_diff(ci), rj.abs_diff(cj)) {
            (0, 0) => 4.0 * inv_h2,
            (1, 0) | (0, 1) => -inv_h2,
            _ => 0.0,
        }
    }

    pub fn grid(&self) -> &CollocationGrid {
        &self.grid
    }

    pub fn size(&self) -> usize {
        self.factor.size()
    }

    /// `G[r, c]` in the row-major interior ordering.
    pub fn entry(&self, r: usize, c: usize) -> f64 {
        Self::entry_for(&self.grid, r, c)
    }

    pub fn apply_inverse(&self, v: &[f64]) -> Result<Vec<f64>, PinnError> {
        Ok(self.factor.solve(v)?)
    }

    /// `RESᵀ G⁻¹ RES` for an interior residual grid.
    pub fn loss(&self, res: &Array2<f64>) -> Result<f64, PinnError> {
        let flat: Vec<f64> = res.iter().copied().collect();
        let q = self.apply_inverse(&flat)?;
        Ok(flat.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>().max(0.0))
    }
}

/// Reference scales used to nondimensionalize the pressure problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressureScaling {
    /// Domain side in meters.
    pub length: f64,
    /// Pressure unit in Pa.
    pub p_ref: f64,
    /// Mobility unit in m²/(Pa·s).
    pub alpha_ref: f64,
}

impl PressureScaling {
    /// `p_ref = ρw g L` and `α_ref` the geometric mean of the water-phase mobility range.
    pub fn for_reservoir(reservoir: &Reservoir) -> Result<Self, PinnError> {
        let d = reservoir.domain;
        if (d.length_x - d.length_y).abs() > 1e-12 * d.length_x.max(d.length_y) {
            return Err(PinnError::Shape(format!(
                "collocation solver needs a square domain, got {} x {} m",
                d.length_x, d.length_y
            )));
        }
        let k = (reservoir.permeability.min() * reservoir.permeability.max()).sqrt();
        Ok(Self {
            length: d.length_x,
            p_ref: reservoir.fluids.pressure_scale(d.length_x),
            alpha_ref: k / reservoir.fluids.mu_w,
        })
    }

    /// Converts a physical right-hand side (1/s) to nondimensional units.
    pub fn rhs_factor(&self) -> f64 {
        self.length * self.length / (self.alpha_ref * self.p_ref)
    }
}

/// Nondimensional mobility `α(S, K) / α_ref` at every lattice point.
pub fn alpha_grid(
    grid: &CollocationGrid,
    saturation: &Array2<f64>,
    reservoir: &Reservoir,
    scaling: &PressureScaling,
) -> Result<Array2<f64>, PinnError> {
    grid.check(saturation, "saturation")?;
    Ok(Array2::from_shape_fn(saturation.dim(), |(i, j)| {
        let (x, y) = grid.point(i, j);
        alpha_at(saturation[[i, j]].clamp(0.0, 1.0), reservoir.k(x, y), &reservoir.fluids) / scaling.alpha_ref
    }))
}

const SOURCE_SUBSAMPLES: usize = 16;

/// Nondimensional `∇₊·F - (q_w + q_g)` with the gravity flux
/// `F = g⃗ K ((1 - S)ρw/μw + Sρg/μg)`, at interior points (boundary entries 0).
/// Sources are averaged over each point's cell so that sharp disks keep
/// their total rate on coarse lattices.
pub fn compute_rhs_grid(
    grid: &CollocationGrid,
    saturation: &Array2<f64>,
    reservoir: &Reservoir,
    tau: f64,
    scaling: &PressureScaling,
) -> Result<Array2<f64>, PinnError> {
    grid.check(saturation, "saturation")?;
    let fl = reservoir.fluids;
    let flux_y = Array2::from_shape_fn(saturation.dim(), |(i, j)| {
        let (x, y) = grid.point(i, j);
        -fl.gravity * gravity_mobility(saturation[[i, j]], reservoir.k(x, y), &fl)
    });
    let h = grid.h();
    let dh = h / SOURCE_SUBSAMPLES as f64;
    let mut rhs = grid.zeros();
    for i in 1..grid.n() {
        for j in 1..grid.n() {
            let (x, y) = grid.point(i, j);
            let div = (flux_y[[i, j + 1]] - flux_y[[i, j]]) / (h * scaling.length);
            let mut q = 0.0;
            for a in 0..SOURCE_SUBSAMPLES {
                for b in 0..SOURCE_SUBSAMPLES {
                    let sx = x - 0.5 * h + (a as f64 + 0.5) * dh;
                    let sy = y - 0.5 * h + (b as f64 + 0.5) * dh;
                    q += reservoir.total_source_rate(sx, sy, tau);
                }
            }
            q /= (SOURCE_SUBSAMPLES * SOURCE_SUBSAMPLES) as f64;
            rhs[[i, j]] = (div - q) * scaling.rhs_factor();
        }
    }
    Ok(rhs)
}
