//! One-dimensional B-spline spaces on `[0, 1]`, Gauss quadrature, 1D mass
//! matrices and banded symmetric solves.
//!
//! Knot vectors are open and uniform: the end knots are repeated
//! `degree + 1` times and the interior knots are spaced `1 / n_elements`.
//! Element `e` covers `[e / n_elements, (e + 1) / n_elements]` and the
//! basis functions that do not vanish on it are `e ..= e + degree`.

use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SplineError {
    #[error("spline degree must be at least 1, got {0}")]
    InvalidDegree(usize),
    #[error("a spline space needs at least one element")]
    NoElements,
    #[error("point {0} lies outside the reference interval [0, 1]")]
    OutOfDomain(f64),
    #[error("quadrature with {points} points is exact to degree {exact}, but {required} is required")]
    QuadratureTooWeak {
        points: usize,
        exact: usize,
        required: usize,
    },
    #[error("right-hand side has length {got}, matrix has size {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("pivot {pivot:e} at row {row} is below the singularity threshold {threshold:e}")]
    SingularPivot { row: usize, pivot: f64, threshold: f64 },
}

/// Relative pivot threshold used by [`BandedMatrix::factorize`].
pub const PIVOT_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct SplineSpace1D {
    degree: usize,
    n_elements: usize,
    knots: Vec<f64>,
}

impl SplineSpace1D {
    pub fn new(n_elements: usize, degree: usize) -> Result<Self, SplineError> {
        if degree == 0 {
            return Err(SplineError::InvalidDegree(degree));
        }
        if n_elements == 0 {
            return Err(SplineError::NoElements);
        }
        let mut knots = Vec::with_capacity(n_elements + 2 * degree + 1);
        knots.extend(std::iter::repeat_n(0.0, degree + 1));
        for e in 1..n_elements {
            knots.push(e as f64 / n_elements as f64);
        }
        knots.extend(std::iter::repeat_n(1.0, degree + 1));
        Ok(Self {
            degree,
            n_elements,
            knots,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn n_basis(&self) -> usize {
        self.n_elements + self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn element_size(&self) -> f64 {
        1.0 / self.n_elements as f64
    }

    /// Bounds of element `e` in reference coordinates.
    pub fn element_bounds(&self, e: usize) -> (f64, f64) {
        let h = self.element_size();
        (
            e as f64 * h,
            if e + 1 == self.n_elements {
                1.0
            } else {
                (e + 1) as f64 * h
            },
        )
    }

    /// Element containing `x`; the right end point belongs to the last element.
    pub fn element_of(&self, x: f64) -> Result<usize, SplineError> {
        if !(0.0..=1.0).contains(&x) {
            return Err(SplineError::OutOfDomain(x));
        }
        let e = (x * self.n_elements as f64).floor() as usize;
        Ok(e.min(self.n_elements - 1))
    }

    /// Values and first derivatives of the `degree + 1` basis functions that
    /// are nonzero on element `e`, evaluated at `x`.
    ///
    /// Writes into `values` and `derivs`, both of length `degree + 1`.
    pub fn eval_local(&self, e: usize, x: f64, values: &mut [f64], derivs: &mut [f64]) {
        let p = self.degree;
        let span = e + p;
        let u = &self.knots;
        // ndu[j][r]: upper triangle holds basis values, lower holds knot differences.
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - u[span + 1 - j];
            right[j] = u[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        for j in 0..=p {
            values[j] = ndu[j][p];
        }
        // First derivative from the degree p-1 values.
        for r in 0..=p {
            let mut d = 0.0;
            if r >= 1 {
                d += ndu[r - 1][p - 1] / ndu[p][r - 1];
            }
            if r < p {
                d -= ndu[r][p - 1] / ndu[p][r];
            }
            derivs[r] = d * p as f64;
        }
    }

    /// Nonzero basis functions at `x` as `(index, value, derivative)`.
    pub fn eval_basis(&self, x: f64) -> Result<Vec<(usize, f64, f64)>, SplineError> {
        let e = self.element_of(x)?;
        let mut values = vec![0.0; self.degree + 1];
        let mut derivs = vec![0.0; self.degree + 1];
        self.eval_local(e, x, &mut values, &mut derivs);
        Ok((0..=self.degree).map(|a| (e + a, values[a], derivs[a])).collect())
    }

    /// Basis values and derivatives at every quadrature point of every element.
    pub fn tabulate(&self, quad: &QuadratureRule) -> BasisTable {
        let nb = self.degree + 1;
        let nq = quad.len();
        let mut points = Vec::with_capacity(self.n_elements * nq);
        let mut weights = Vec::with_capacity(self.n_elements * nq);
        let mut values = vec![0.0; self.n_elements * nq * nb];
        let mut derivs = vec![0.0; self.n_elements * nq * nb];
        for e in 0..self.n_elements {
            let (a, b) = self.element_bounds(e);
            for (q, (&xi, &w)) in quad.abscissae().iter().zip(quad.weights()).enumerate() {
                let x = a + (b - a) * xi;
                points.push(x);
                weights.push(w * (b - a));
                let off = (e * nq + q) * nb;
                self.eval_local(e, x, &mut values[off..off + nb], &mut derivs[off..off + nb]);
            }
        }
        BasisTable {
            n_elements: self.n_elements,
            n_local: nb,
            n_quad: nq,
            points,
            weights,
            values,
            derivs,
        }
    }
}

/// Basis data precomputed at the quadrature points of a [`SplineSpace1D`].
#[derive(Debug, Clone)]
pub struct BasisTable {
    n_elements: usize,
    n_local: usize,
    n_quad: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    values: Vec<f64>,
    derivs: Vec<f64>,
}

impl BasisTable {
    pub fn n_elements(&self) -> usize {
        self.n_elements
    }
    pub fn n_local(&self) -> usize {
        self.n_local
    }
    pub fn n_quad(&self) -> usize {
        self.n_quad
    }
    /// Global index of the first basis function supported on element `e`.
    pub fn first_basis(&self, e: usize) -> usize {
        e
    }
    pub fn point(&self, e: usize, q: usize) -> f64 {
        self.points[e * self.n_quad + q]
    }
    /// Quadrature weight including the element length.
    pub fn weight(&self, e: usize, q: usize) -> f64 {
        self.weights[e * self.n_quad + q]
    }
    pub fn values(&self, e: usize, q: usize) -> &[f64] {
        let off = (e * self.n_quad + q) * self.n_local;
        &self.values[off..off + self.n_local]
    }
    pub fn derivs(&self, e: usize, q: usize) -> &[f64] {
        let off = (e * self.n_quad + q) * self.n_local;
        &self.derivs[off..off + self.n_local]
    }
}

/// Gauss–Legendre rule mapped to the reference element `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    abscissae: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn gauss_legendre(points: usize) -> Self {
        assert!(points >= 1, "quadrature needs at least one point");
        let n = points;
        let mut abscissae = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Chebyshev-like initial guess, then Newton on P_n.
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, z);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            // Map [-1, 1] to [0, 1].
            abscissae[i] = 0.5 * (1.0 - z);
            abscissae[n - 1 - i] = 0.5 * (1.0 + z);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        Self { abscissae, weights }
    }

    /// Rule with `degree + 1` points, exact for products of two degree-`degree` splines.
    pub fn for_degree(degree: usize) -> Self {
        Self::gauss_legendre(degree + 1)
    }

    pub fn len(&self) -> usize {
        self.abscissae.len()
    }

    pub fn is_empty(&self) -> bool {
        self.abscissae.is_empty()
    }

    pub fn abscissae(&self) -> &[f64] {
        &self.abscissae
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Highest polynomial degree integrated exactly.
    pub fn exactness(&self) -> usize {
        2 * self.len() - 1
    }
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    let d = n * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Square band matrix with `bandwidth` sub- and super-diagonals stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix {
    size: usize,
    bandwidth: usize,
    bands: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(size: usize, bandwidth: usize) -> Self {
        Self {
            size,
            bandwidth,
            bands: vec![0.0; size * (2 * bandwidth + 1)],
        }
    }

    pub fn identity(size: usize) -> Self {
        let mut m = Self::zeros(size, 0);
        for i in 0..size {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    fn offset(&self, i: usize, j: usize) -> Option<usize> {
        let b = self.bandwidth;
        if i >= self.size || j >= self.size || i.abs_diff(j) > b {
            return None;
        }
        Some(i * (2 * b + 1) + (j + b - i))
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.offset(i, j).map_or(0.0, |k| self.bands[k])
    }

    /// Panics if `(i, j)` lies outside the band.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let k = self
            .offset(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside band {}", self.bandwidth));
        self.bands[k] = value;
    }

    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        let k = self
            .offset(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside band {}", self.bandwidth));
        self.bands[k] += value;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let b = self.bandwidth;
        (0..self.size)
            .map(|i| {
                let lo = i.saturating_sub(b);
                let hi = (i + b).min(self.size - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    pub fn norm_inf(&self) -> f64 {
        let b = self.bandwidth;
        (0..self.size)
            .map(|i| {
                let lo = i.saturating_sub(b);
                let hi = (i + b).min(self.size - 1);
                (lo..=hi).map(|j| self.get(i, j).abs()).sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.size)
            .map(|i| (0..self.size).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// LDLᵀ factorization without pivoting. Reads the lower band only, so the
    /// matrix is assumed symmetric.
    pub fn factorize(&self) -> Result<BandedLdl, SplineError> {
        let n = self.size;
        let b = self.bandwidth;
        let scale = (0..n).map(|i| self.get(i, i).abs()).fold(0.0, f64::max);
        let threshold = PIVOT_TOLERANCE * scale.max(f64::MIN_POSITIVE);
        // lower[i * (b + 1) + (j + b - i)] holds L(i, j) for i - b <= j < i.
        let mut lower = vec![0.0; n * (b + 1)];
        let mut diag = vec![0.0; n];
        let w = b + 1;
        for i in 0..n {
            let lo = i.saturating_sub(b);
            for j in lo..i {
                // L(i,j) D(j) = A(i,j) - sum_k L(i,k) D(k) L(j,k)
                let mut s = self.get(i, j);
                let klo = lo.max(j.saturating_sub(b));
                for k in klo..j {
                    s -= lower[i * w + (k + b - i)] * diag[k] * lower[j * w + (k + b - j)];
                }
                lower[i * w + (j + b - i)] = s / diag[j];
            }
            let mut d = self.get(i, i);
            for k in lo..i {
                let l = lower[i * w + (k + b - i)];
                d -= l * l * diag[k];
            }
            if !(d.abs() > threshold) {
                return Err(SplineError::SingularPivot {
                    row: i,
                    pivot: d,
                    threshold,
                });
            }
            diag[i] = d;
        }
        Ok(BandedLdl {
            size: n,
            bandwidth: b,
            lower,
            diag,
        })
    }
}

/// Factor `L D Lᵀ` of a symmetric band matrix; `L` is unit lower triangular.
#[derive(Debug, Clone)]
pub struct BandedLdl {
    size: usize,
    bandwidth: usize,
    lower: Vec<f64>,
    diag: Vec<f64>,
}

impl BandedLdl {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn solve_in_place(&self, x: &mut [f64]) -> Result<(), SplineError> {
        if x.len() != self.size {
            return Err(SplineError::DimensionMismatch {
                expected: self.size,
                got: x.len(),
            });
        }
        let n = self.size;
        let b = self.bandwidth;
        let w = b + 1;
        for i in 0..n {
            let lo = i.saturating_sub(b);
            let mut s = x[i];
            for k in lo..i {
                s -= self.lower[i * w + (k + b - i)] * x[k];
            }
            x[i] = s;
        }
        for i in 0..n {
            x[i] /= self.diag[i];
        }
        for i in (0..n).rev() {
            let hi = (i + b).min(n - 1);
            let mut s = x[i];
            for k in i + 1..=hi {
                s -= self.lower[k * w + (i + b - k)] * x[k];
            }
            x[i] = s;
        }
        Ok(())
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, SplineError> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }

    /// Solves along a strided slice: `x[offset + k * stride]` for `k < size`.
    pub fn solve_strided(
        &self,
        data: &mut [f64],
        offset: usize,
        stride: usize,
        scratch: &mut Vec<f64>,
    ) -> Result<(), SplineError> {
        scratch.clear();
        scratch.extend((0..self.size).map(|k| data[offset + k * stride]));
        self.solve_in_place(scratch)?;
        for (k, v) in scratch.iter().enumerate() {
            data[offset + k * stride] = *v;
        }
        Ok(())
    }
}

/// Solves `m x = rhs` by banded LDLᵀ; linear cost for fixed bandwidth.
pub fn banded_solve(m: &BandedMatrix, rhs: &[f64]) -> Result<Vec<f64>, SplineError> {
    if rhs.len() != m.size() {
        return Err(SplineError::DimensionMismatch {
            expected: m.size(),
            got: rhs.len(),
        });
    }
    m.factorize()?.solve(rhs)
}

/// Mass matrix `M[i][k] = ∫ B_i B_k dx` over `[0, 1]`.
pub fn mass_matrix_1d(space: &SplineSpace1D, quad: &QuadratureRule) -> Result<BandedMatrix, SplineError> {
    let required = 2 * space.degree();
    if quad.exactness() < required {
        return Err(SplineError::QuadratureTooWeak {
            points: quad.len(),
            exact: quad.exactness(),
            required,
        });
    }
    let table = space.tabulate(quad);
    let mut m = BandedMatrix::zeros(space.n_basis(), space.degree());
    for e in 0..table.n_elements() {
        let first = table.first_basis(e);
        for q in 0..table.n_quad() {
            let w = table.weight(e, q);
            let v = table.values(e, q);
            for a in 0..v.len() {
                for b in 0..v.len() {
                    m.add(first + a, first + b, w * v[a] * v[b]);
                }
            }
        }
    }
    Ok(m)
}
