use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{
    discretize, Axis, ContinuumState, DiscreteWeightedManifold, FactorGeometry, Geometry,
    ProductGrid, Resolution,
};
use crate::spectral::drift_laplacian;

/// A discrete weighted manifold along the flow.
#[derive(Debug, Clone)]
pub struct FlowState {
    manifold: DiscreteWeightedManifold,
}

impl FlowState {
    pub fn new(manifold: DiscreteWeightedManifold) -> Self {
        Self { manifold }
    }

    pub fn from_continuum(state: &ContinuumState, resolution: Resolution) -> Result<Self> {
        Ok(Self::new(discretize(state, resolution)?))
    }

    pub fn time(&self) -> f64 {
        self.manifold.time()
    }

    pub fn manifold(&self) -> &DiscreteWeightedManifold {
        &self.manifold
    }

    pub fn geometry(&self) -> &Geometry {
        self.manifold.geometry()
    }

    pub fn grid(&self) -> &Arc<ProductGrid> {
        self.manifold.grid()
    }

    pub fn volume(&self) -> f64 {
        self.manifold.total_volume()
    }

    /// Diagonal of `φ = ½g - Hess_f - Ric` along `axis`, one value per node
    /// of that axis.
    pub fn defect(&self, axis: usize) -> Vec<f64> {
        self.manifold.defect_profile(axis)
    }
}

/// Flat vector layout: per factor either `(a, f)` node samples or
/// `(scale, offset)`, then the weight constant, then scalar fields.
pub(crate) struct Dynamics<'g> {
    pub grid: &'g Arc<ProductGrid>,
    pub cutoff: usize,
    pub scalars: usize,
}

impl<'g> Dynamics<'g> {
    pub fn pack(&self, geometry: &Geometry, scalars: &[Vec<f64>]) -> Vec<f64> {
        let mut y = Vec::new();
        for f in &geometry.factors {
            match f {
                FactorGeometry::Circle { metric, weight } => {
                    y.extend_from_slice(metric);
                    y.extend_from_slice(weight);
                }
                FactorGeometry::Gaussian { scale, offset } => {
                    y.push(*scale);
                    y.push(*offset);
                }
            }
        }
        y.push(geometry.constant);
        for s in scalars {
            y.extend_from_slice(s);
        }
        y
    }

    pub fn unpack(&self, y: &[f64]) -> (Geometry, Vec<Vec<f64>>) {
        let mut pos = 0;
        let mut factors = Vec::with_capacity(self.grid.dim());
        for axis in self.grid.axes() {
            match axis {
                Axis::Circle(g) => {
                    let n = g.len();
                    factors.push(FactorGeometry::Circle {
                        metric: y[pos..pos + n].to_vec(),
                        weight: y[pos + n..pos + 2 * n].to_vec(),
                    });
                    pos += 2 * n;
                }
                Axis::Gaussian(_) => {
                    factors.push(FactorGeometry::Gaussian {
                        scale: y[pos],
                        offset: y[pos + 1],
                    });
                    pos += 2;
                }
            }
        }
        let constant = y[pos];
        pos += 1;
        let len = self.grid.len();
        let scalars = (0..self.scalars)
            .map(|i| y[pos + i * len..pos + (i + 1) * len].to_vec())
            .collect();
        (Geometry { factors, constant }, scalars)
    }

    pub fn manifold(&self, geometry: Geometry, time: f64) -> Result<DiscreteWeightedManifold> {
        check_positive(&geometry, time)?;
        DiscreteWeightedManifold::new(self.grid.clone(), geometry, time)
    }

    /// Right-hand side of `g_t = g - 2 Hess_f`, `f_t = n/2 - Δf` together
    /// with `u_t = ℒu + ½u` for each scalar.
    pub fn rhs(&self, y: &[f64], time: f64) -> Result<Vec<f64>> {
        let (geometry, scalars) = self.unpack(y);
        check_positive(&geometry, time)?;
        let mut rates = Vec::with_capacity(geometry.factors.len());
        for (factor, axis) in geometry.factors.iter().zip(self.grid.axes()) {
            rates.push(match (factor, axis) {
                (FactorGeometry::Circle { metric, weight }, Axis::Circle(g)) => {
                    let da = g.derivative(metric);
                    let df = g.derivative(weight);
                    let d2f = g.second_derivative(weight);
                    let n = metric.len();
                    let mut a_t = vec![0.0; n];
                    let mut f_t = vec![0.0; n];
                    for j in 0..n {
                        let gamma = da[j] / (2.0 * metric[j]);
                        let hess = d2f[j] - gamma * df[j];
                        a_t[j] = metric[j] - 2.0 * hess;
                        f_t[j] = 0.5 - hess / metric[j];
                    }
                    FactorGeometry::Circle {
                        metric: g.filter(&a_t, self.cutoff, 0.0),
                        weight: g.filter(&f_t, self.cutoff, 0.0),
                    }
                }
                (FactorGeometry::Gaussian { scale, .. }, Axis::Gaussian(_)) => {
                    FactorGeometry::Gaussian {
                        scale: scale - 1.0,
                        offset: 0.5 - 0.5 / scale,
                    }
                }
                _ => unreachable!("layout follows the grid"),
            });
        }
        let rate = Geometry {
            factors: rates,
            constant: 0.0,
        };
        let mut scalar_rates = Vec::with_capacity(scalars.len());
        if !scalars.is_empty() {
            let dm = DiscreteWeightedManifold::new(self.grid.clone(), geometry, time)?;
            for u in &scalars {
                let lu = drift_laplacian(u, &dm)?;
                scalar_rates.push(lu.iter().zip(u).map(|(l, u)| l + 0.5 * u).collect());
            }
        }
        Ok(self.pack(&rate, &scalar_rates))
    }

    pub fn rk4(&self, y: &[f64], time: f64, h: f64) -> Result<Vec<f64>> {
        let k1 = self.rhs(y, time)?;
        let k2 = self.rhs(&axpy(y, 0.5 * h, &k1), time + 0.5 * h)?;
        let k3 = self.rhs(&axpy(y, 0.5 * h, &k2), time + 0.5 * h)?;
        let k4 = self.rhs(&axpy(y, h, &k3), time + h)?;
        Ok((0..y.len())
            .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect())
    }

    /// Truncates circle fields to the cutoff and removes sub-floor modes.
    pub fn filter(&self, y: &mut [f64], floor: f64) {
        let mut pos = 0;
        for axis in self.grid.axes() {
            match axis {
                Axis::Circle(g) => {
                    let n = g.len();
                    for field in [pos..pos + n, pos + n..pos + 2 * n] {
                        let clean = g.filter(&y[field.clone()], self.cutoff, floor);
                        y[field].copy_from_slice(&clean);
                    }
                    pos += 2 * n;
                }
                Axis::Gaussian(_) => pos += 2,
            }
        }
    }

    /// Spectral radius estimate of `ℒ` on the grid, for the explicit step
    /// limit of the scalar equations.
    pub fn spectral_radius(&self, geometry: &Geometry) -> f64 {
        let mut rho = 0.0;
        for (factor, axis) in geometry.factors.iter().zip(self.grid.axes()) {
            rho += match (factor, axis) {
                (FactorGeometry::Circle { metric, weight }, Axis::Circle(g)) => {
                    let k = g.max_mode() as f64;
                    let amin = metric.iter().copied().fold(f64::INFINITY, f64::min);
                    let da = g.derivative(metric);
                    let df = g.derivative(weight);
                    let drift = (0..metric.len())
                        .map(|j| (da[j] / (2.0 * metric[j]) + df[j]).abs())
                        .fold(0.0, f64::max);
                    (k * k + k * drift) / amin
                }
                (FactorGeometry::Gaussian { scale, .. }, Axis::Gaussian(g)) => {
                    (g.len() as f64 - 1.0) / (2.0 * scale)
                }
                _ => 0.0,
            };
        }
        rho
    }

    /// Fluctuation energy and the share above half the cutoff, summed over
    /// circle fields.
    pub fn mode_energy(&self, y: &[f64]) -> (f64, f64, f64) {
        let (mut mean, mut fluct, mut high) = (0.0, 0.0, 0.0);
        let mut pos = 0;
        for axis in self.grid.axes() {
            match axis {
                Axis::Circle(g) => {
                    let n = g.len();
                    for field in [pos..pos + n, pos + n..pos + 2 * n] {
                        let (low0, rest0) = g.mode_energy(&y[field.clone()], 0);
                        let (_, rest_hi) = g.mode_energy(&y[field], self.cutoff / 2);
                        mean += low0;
                        fluct += rest0;
                        high += rest_hi;
                    }
                    pos += 2 * n;
                }
                Axis::Gaussian(_) => pos += 2,
            }
        }
        (mean, fluct, high)
    }
}

fn axpy(y: &[f64], a: f64, x: &[f64]) -> Vec<f64> {
    y.iter().zip(x).map(|(y, x)| y + a * x).collect()
}

pub(crate) fn check_positive(geometry: &Geometry, time: f64) -> Result<()> {
    for factor in &geometry.factors {
        match factor {
            FactorGeometry::Circle { metric, weight } => {
                if let Some((node, &value)) = metric
                    .iter()
                    .enumerate()
                    .find(|(_, v)| !(**v > 0.0) || !v.is_finite())
                {
                    return Err(Error::FlowBreakdown { time, node, value });
                }
                if weight.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Stability {
                        time,
                        reason: "weight became non-finite".into(),
                    });
                }
            }
            FactorGeometry::Gaussian { scale, offset } => {
                if !(*scale > 0.0) || !scale.is_finite() {
                    return Err(Error::FlowBreakdown {
                        time,
                        node: 0,
                        value: *scale,
                    });
                }
                if !offset.is_finite() {
                    return Err(Error::Stability {
                        time,
                        reason: "gaussian offset became non-finite".into(),
                    });
                }
            }
        }
    }
    Ok(())
}
