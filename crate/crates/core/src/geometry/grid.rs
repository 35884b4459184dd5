//! Quadrature grids for the two supported one-dimensional factors and their
//! tensor products.
//!
//! Circle factors use uniform nodes with the periodic trapezoidal rule and
//! FFT differentiation. Gaussian lines use Gauss-Hermite nodes for the weight
//! `e^{-x²/4}` together with the polynomial interpolation derivative, which is
//! exact on the polynomial fields the Hermite backend works with.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub const MIN_CIRCLE_NODES: usize = 8;
pub const MIN_HERMITE_ORDER: usize = 4;

/// Uniform periodic grid `θ_j = 2πj/N`.
#[derive(Clone)]
pub struct CircleGrid {
    n: usize,
    nodes: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for CircleGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CircleGrid").field("n", &self.n).finish()
    }
}

impl CircleGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < MIN_CIRCLE_NODES {
            return Err(Error::Config(format!(
                "circle resolution {n} below minimum {MIN_CIRCLE_NODES}"
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            n,
            nodes: (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect(),
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weight(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    /// Highest fully resolved wavenumber; the Nyquist mode of an even grid
    /// is excluded.
    pub fn max_mode(&self) -> usize {
        (self.n - 1) / 2
    }

    pub fn coefficients(&self, samples: &[f64]) -> Vec<Complex<f64>> {
        let mut buf: Vec<Complex<f64>> = samples.iter().map(|&x| Complex::new(x, 0.0)).collect();
        self.forward.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|c| *c *= scale);
        buf
    }

    fn synthesize(&self, mut coeffs: Vec<Complex<f64>>) -> Vec<f64> {
        self.inverse.process(&mut coeffs);
        coeffs.into_iter().map(|c| c.re).collect()
    }

    fn wavenumber(&self, index: usize) -> i64 {
        if index <= self.n / 2 {
            index as i64
        } else {
            index as i64 - self.n as i64
        }
    }

    /// Applies the Fourier multiplier `m(k)` to modes `|k| <= max_mode` and
    /// drops the rest.
    fn multiplier(&self, samples: &[f64], m: impl Fn(i64) -> Complex<f64>) -> Vec<f64> {
        let kmax = self.max_mode() as i64;
        let mut coeffs = self.coefficients(samples);
        for (i, c) in coeffs.iter_mut().enumerate() {
            let k = self.wavenumber(i);
            if k.abs() > kmax {
                *c = Complex::new(0.0, 0.0);
            } else {
                *c *= m(k);
            }
        }
        self.synthesize(coeffs)
    }

    pub fn derivative(&self, samples: &[f64]) -> Vec<f64> {
        self.multiplier(samples, |k| Complex::new(0.0, k as f64))
    }

    pub fn second_derivative(&self, samples: &[f64]) -> Vec<f64> {
        self.multiplier(samples, |k| Complex::new(-((k * k) as f64), 0.0))
    }

    /// Truncates to `|k| <= cutoff` and zeroes every surviving coefficient
    /// whose magnitude is below `floor · max(1, largest coefficient)`.
    pub fn filter(&self, samples: &[f64], cutoff: usize, floor: f64) -> Vec<f64> {
        let kmax = cutoff.min(self.max_mode()) as i64;
        let mut coeffs = self.coefficients(samples);
        let peak = coeffs.iter().map(|c| c.norm()).fold(1.0, f64::max);
        for (i, c) in coeffs.iter_mut().enumerate() {
            let k = self.wavenumber(i);
            if k.abs() > kmax || c.norm() < floor * peak {
                *c = Complex::new(0.0, 0.0);
            }
        }
        self.synthesize(coeffs)
    }

    /// Energy `Σ|c_k|²` split into modes `|k| <= split` and the rest.
    pub fn mode_energy(&self, samples: &[f64], split: usize) -> (f64, f64) {
        let coeffs = self.coefficients(samples);
        let (mut low, mut high) = (0.0, 0.0);
        for (i, c) in coeffs.iter().enumerate() {
            if self.wavenumber(i).unsigned_abs() as usize <= split {
                low += c.norm_sqr();
            } else {
                high += c.norm_sqr();
            }
        }
        (low, high)
    }

    /// Galerkin basis `1, cos θ, sin θ, …, cos Mθ, sin Mθ` at the nodes, with
    /// its exact derivative.
    pub fn basis(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let m = 2 * self.max_mode() + 1;
        let mut b = DMatrix::zeros(self.n, m);
        let mut db = DMatrix::zeros(self.n, m);
        for (j, &t) in self.nodes.iter().enumerate() {
            b[(j, 0)] = 1.0;
            for k in 1..=self.max_mode() {
                let kf = k as f64;
                let (s, c) = (kf * t).sin_cos();
                b[(j, 2 * k - 1)] = c;
                b[(j, 2 * k)] = s;
                db[(j, 2 * k - 1)] = -kf * s;
                db[(j, 2 * k)] = kf * c;
            }
        }
        (b, db)
    }
}

/// Gauss-Hermite grid for the weight `e^{-x²/4}` on the line.
#[derive(Debug, Clone)]
pub struct HermiteGrid {
    nodes: Vec<f64>,
    gauss_weights: Vec<f64>,
    diff: DMatrix<f64>,
    diff2: DMatrix<f64>,
}

impl HermiteGrid {
    pub fn new(order: usize) -> Result<Self> {
        if order < MIN_HERMITE_ORDER {
            return Err(Error::Config(format!(
                "hermite order {order} below minimum {MIN_HERMITE_ORDER}"
            )));
        }
        // Golub-Welsch for the probabilists' weight e^{-y²/2}, then x = √2 y.
        let jacobi = DMatrix::from_fn(order, order, |i, j| {
            if i + 1 == j || j + 1 == i {
                (i.max(j) as f64).sqrt()
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> = (0..order)
            .map(|j| {
                let v0 = eig.eigenvectors[(0, j)];
                (
                    SQRT_2 * eig.eigenvalues[j],
                    SQRT_2 * (2.0 * PI).sqrt() * v0 * v0,
                )
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Exact mirror symmetry.
        let mut nodes = vec![0.0; order];
        let mut gauss_weights = vec![0.0; order];
        for j in 0..order {
            let m = order - 1 - j;
            nodes[j] = 0.5 * (pairs[j].0 - pairs[m].0);
            gauss_weights[j] = 0.5 * (pairs[j].1 + pairs[m].1);
        }
        let mut grid = Self {
            nodes,
            gauss_weights,
            diff: DMatrix::zeros(0, 0),
            diff2: DMatrix::zeros(0, 0),
        };
        // Modal differentiation: project onto ψ_m by Gauss quadrature (exact
        // below degree q), differentiate the basis, resample.
        let (b, db) = grid.basis();
        let mut analysis = b.transpose();
        for (j, w) in grid.gauss_weights.iter().enumerate() {
            analysis.column_mut(j).scale_mut(w / (2.0 * PI.sqrt()));
        }
        let d2b = DMatrix::from_fn(order, order, |j, m| {
            if m < 2 {
                0.0
            } else {
                ((m * (m - 1)) as f64).sqrt() / 2.0 * b[(j, m - 2)]
            }
        });
        grid.diff = &db * &analysis;
        grid.diff2 = &d2b * &analysis;
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Weights for `∫ h(x) e^{-x²/4} dx`.
    pub fn gauss_weights(&self) -> &[f64] {
        &self.gauss_weights
    }

    pub fn derivative(&self, samples: &[f64]) -> Vec<f64> {
        (&self.diff * nalgebra::DVector::from_column_slice(samples))
            .iter()
            .copied()
            .collect()
    }

    pub fn second_derivative(&self, samples: &[f64]) -> Vec<f64> {
        (&self.diff2 * nalgebra::DVector::from_column_slice(samples))
            .iter()
            .copied()
            .collect()
    }

    /// Normalized Hermite basis `ψ_m(x) = He_m(x/√2)/√(m!)`, `m < order`, at
    /// the nodes, with its exact derivative `ψ_m' = √(m/2) ψ_{m-1}`.
    pub fn basis(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let q = self.len();
        let mut b = DMatrix::zeros(q, q);
        let mut db = DMatrix::zeros(q, q);
        for (j, &x) in self.nodes.iter().enumerate() {
            let y = x / SQRT_2;
            b[(j, 0)] = 1.0;
            if q > 1 {
                b[(j, 1)] = y;
            }
            for m in 1..q - 1 {
                let mf = m as f64;
                b[(j, m + 1)] = (y * b[(j, m)] - mf.sqrt() * b[(j, m - 1)]) / (mf + 1.0).sqrt();
            }
            for m in 1..q {
                db[(j, m)] = (m as f64 / 2.0).sqrt() * b[(j, m - 1)];
            }
        }
        (b, db)
    }
}

/// One axis of a product grid.
#[derive(Debug, Clone)]
pub enum Axis {
    Circle(CircleGrid),
    Gaussian(HermiteGrid),
}

impl Axis {
    pub fn len(&self) -> usize {
        match self {
            Axis::Circle(g) => g.len(),
            Axis::Gaussian(g) => g.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nodes(&self) -> &[f64] {
        match self {
            Axis::Circle(g) => g.nodes(),
            Axis::Gaussian(g) => g.nodes(),
        }
    }

    pub fn is_circle(&self) -> bool {
        matches!(self, Axis::Circle(_))
    }

    /// Coordinate quadrature weights: `2π/N` on a circle and
    /// `w_j e^{x_j²/4}` on a Gaussian line.
    pub fn weights(&self) -> Vec<f64> {
        match self {
            Axis::Circle(g) => vec![g.weight(); g.len()],
            Axis::Gaussian(g) => g
                .nodes()
                .iter()
                .zip(g.gauss_weights())
                .map(|(x, w)| w * (x * x / 4.0).exp())
                .collect(),
        }
    }

    pub fn derivative(&self, line: &[f64]) -> Vec<f64> {
        match self {
            Axis::Circle(g) => g.derivative(line),
            Axis::Gaussian(g) => g.derivative(line),
        }
    }

    pub fn second_derivative(&self, line: &[f64]) -> Vec<f64> {
        match self {
            Axis::Circle(g) => g.second_derivative(line),
            Axis::Gaussian(g) => g.second_derivative(line),
        }
    }

    pub fn basis(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        match self {
            Axis::Circle(g) => g.basis(),
            Axis::Gaussian(g) => g.basis(),
        }
    }
}

/// Tensor product of one-dimensional grids, row-major (axis 0 slowest).
#[derive(Debug, Clone)]
pub struct ProductGrid {
    axes: Vec<Axis>,
    shape: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

impl ProductGrid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::Config("product grid needs at least one axis".into()));
        }
        let shape: Vec<usize> = axes.iter().map(Axis::len).collect();
        let mut strides = vec![1; shape.len()];
        for a in (0..shape.len().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * shape[a + 1];
        }
        let len = shape.iter().product();
        Ok(Self {
            axes,
            shape,
            strides,
            len,
        })
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, a: usize) -> &Axis {
        &self.axes[a]
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Index along `axis` of flat node `idx`.
    pub fn coordinate_index(&self, idx: usize, axis: usize) -> usize {
        (idx / self.strides[axis]) % self.shape[axis]
    }

    pub fn coordinates(&self, idx: usize) -> Vec<f64> {
        (0..self.dim())
            .map(|a| self.axes[a].nodes()[self.coordinate_index(idx, a)])
            .collect()
    }

    /// Broadcasts a per-axis profile to the full grid.
    pub fn broadcast(&self, axis: usize, profile: &[f64]) -> Vec<f64> {
        (0..self.len)
            .map(|i| profile[self.coordinate_index(i, axis)])
            .collect()
    }

    /// Samples `f(coordinates)` at every node.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.len).map(|i| f(&self.coordinates(i))).collect()
    }

    /// Applies a line operator along one axis.
    pub fn apply_along(&self, field: &[f64], axis: usize, op: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
        let n = self.shape[axis];
        let stride = self.strides[axis];
        let outer = self.len / (n * stride);
        let mut out = vec![0.0; self.len];
        let mut line = vec![0.0; n];
        for o in 0..outer {
            for i in 0..stride {
                let start = o * n * stride + i;
                for (j, slot) in line.iter_mut().enumerate() {
                    *slot = field[start + j * stride];
                }
                let res = op(&line);
                for (j, v) in res.into_iter().enumerate() {
                    out[start + j * stride] = v;
                }
            }
        }
        out
    }

    pub fn partial(&self, field: &[f64], axis: usize) -> Vec<f64> {
        let ax = &self.axes[axis];
        self.apply_along(field, axis, |l| ax.derivative(l))
    }

    pub fn partial2(&self, field: &[f64], axis: usize) -> Vec<f64> {
        let ax = &self.axes[axis];
        self.apply_along(field, axis, |l| ax.second_derivative(l))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_derivative_is_spectral() {
        let g = CircleGrid::new(32).unwrap();
        let u: Vec<f64> = g.nodes().iter().map(|t| (3.0 * t).sin() + 0.5 * t.cos()).collect();
        let du = g.derivative(&u);
        let d2u = g.second_derivative(&u);
        for (j, t) in g.nodes().iter().enumerate() {
            assert!((du[j] - (3.0 * (3.0 * t).cos() - 0.5 * t.sin())).abs() < 1e-12);
            assert!((d2u[j] - (-9.0 * (3.0 * t).sin() - 0.5 * t.cos())).abs() < 1e-11);
        }
    }

    #[test]
    fn circle_filter_drops_high_modes_and_noise() {
        let g = CircleGrid::new(64).unwrap();
        let u: Vec<f64> = g
            .nodes()
            .iter()
            .map(|t| 1.0 + 0.1 * t.cos() + 1e-16 * (7.0 * t).sin() + 0.2 * (20.0 * t).cos())
            .collect();
        let v = g.filter(&u, 10, 1e-13);
        for (j, t) in g.nodes().iter().enumerate() {
            assert!((v[j] - (1.0 + 0.1 * t.cos())).abs() < 1e-14);
        }
    }

    #[test]
    fn hermite_quadrature_moments() {
        let g = HermiteGrid::new(12).unwrap();
        let sp = std::f64::consts::PI.sqrt();
        let m0: f64 = g.gauss_weights().iter().sum();
        let m2: f64 = g
            .nodes()
            .iter()
            .zip(g.gauss_weights())
            .map(|(x, w)| x * x * w)
            .sum();
        let m1: f64 = g.nodes().iter().zip(g.gauss_weights()).map(|(x, w)| x * w).sum();
        assert!((m0 - 2.0 * sp).abs() < 1e-13);
        assert!((m2 - 4.0 * sp).abs() < 1e-12);
        assert!(m1.abs() < 1e-14);
    }

    #[test]
    fn hermite_derivative_exact_on_polynomials() {
        let g = HermiteGrid::new(10).unwrap();
        let u: Vec<f64> = g.nodes().iter().map(|x| x.powi(3) - 2.0 * x).collect();
        let du = g.derivative(&u);
        for (j, x) in g.nodes().iter().enumerate() {
            assert!((du[j] - (3.0 * x * x - 2.0)).abs() < 1e-9 * (1.0 + x * x));
        }
    }

    #[test]
    fn hermite_basis_is_orthonormal() {
        let g = HermiteGrid::new(10).unwrap();
        let (b, _) = g.basis();
        let norm = 2.0 * std::f64::consts::PI.sqrt();
        for m in 0..10 {
            for n in 0..10 {
                let s: f64 = (0..10).map(|j| b[(j, m)] * b[(j, n)] * g.gauss_weights()[j]).sum();
                let expect = if m == n { norm } else { 0.0 };
                assert!((s - expect).abs() < 1e-11, "({m},{n}) -> {s}");
            }
        }
    }

    #[test]
    fn apply_along_second_axis() {
        let grid = ProductGrid::new(vec![
            Axis::Gaussian(HermiteGrid::new(6).unwrap()),
            Axis::Circle(CircleGrid::new(16).unwrap()),
        ])
        .unwrap();
        let u = grid.sample(|c| c[0] * c[1].sin());
        let du = grid.partial(&u, 1);
        let expect = grid.sample(|c| c[0] * c[1].cos());
        for (a, b) in du.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
        let dx = grid.partial(&u, 0);
        let expect = grid.sample(|c| c[1].sin());
        for (a, b) in dx.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_low_resolution() {
        assert!(matches!(CircleGrid::new(7), Err(Error::Config(_))));
        assert!(matches!(HermiteGrid::new(3), Err(Error::Config(_))));
    }
}
