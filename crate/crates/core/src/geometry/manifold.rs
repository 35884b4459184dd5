use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::family::{ContinuumFactor, ContinuumState};
use super::grid::{Axis, CircleGrid, HermiteGrid, ProductGrid};
use crate::error::{Error, Result};

/// Per-factor resolution: node count on the circle factor and Hermite basis
/// order (= Gauss-Hermite node count) on each Gaussian factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Resolution {
    pub circle_nodes: usize,
    pub hermite_order: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Self {
            circle_nodes: 64,
            hermite_order: 16,
        }
    }
}

/// Node-sampled geometry of one factor.
#[derive(Debug, Clone, PartialEq)]
pub enum FactorGeometry {
    Circle { metric: Vec<f64>, weight: Vec<f64> },
    Gaussian { scale: f64, offset: f64 },
}

/// Node-sampled geometry of a product state; `constant` is the additive
/// constant of the weight, tracked explicitly and never renormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub factors: Vec<FactorGeometry>,
    pub constant: f64,
}

impl Geometry {
    pub fn sample(state: &ContinuumState, grid: &ProductGrid) -> Result<Self> {
        if state.factors.len() != grid.dim() {
            return Err(Error::Usage("state and grid dimensions differ".into()));
        }
        let factors = state
            .factors
            .iter()
            .zip(grid.axes())
            .map(|(f, axis)| match (f, axis) {
                (ContinuumFactor::Circle { metric, weight }, Axis::Circle(g)) => {
                    Ok(FactorGeometry::Circle {
                        metric: metric.sample(g.nodes()),
                        weight: weight.sample(g.nodes()),
                    })
                }
                (ContinuumFactor::Gaussian { scale, offset }, Axis::Gaussian(_)) => {
                    Ok(FactorGeometry::Gaussian {
                        scale: *scale,
                        offset: *offset,
                    })
                }
                _ => Err(Error::Usage("factor kind does not match grid axis".into())),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            factors,
            constant: state.constant,
        })
    }
}

/// Builds the product grid matching the factor kinds of `state`.
pub fn grid_for(state: &ContinuumState, resolution: Resolution) -> Result<Arc<ProductGrid>> {
    let axes = state
        .factors
        .iter()
        .map(|f| match f {
            ContinuumFactor::Circle { .. } => CircleGrid::new(resolution.circle_nodes).map(Axis::Circle),
            ContinuumFactor::Gaussian { .. } => {
                HermiteGrid::new(resolution.hermite_order).map(Axis::Gaussian)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Arc::new(ProductGrid::new(axes)?))
}

/// Per-axis profiles (one value per node of that axis).
#[derive(Debug, Clone, PartialEq)]
pub struct AxisProfile {
    /// Metric coefficient `g_aa`.
    pub metric: Vec<f64>,
    /// `∂_a g_aa / (2 g_aa)`, the only Christoffel symbol of a product of
    /// one-dimensional metrics.
    pub gamma: Vec<f64>,
    pub weight: Vec<f64>,
    pub weight_d1: Vec<f64>,
    pub weight_d2: Vec<f64>,
    /// Quadrature weight times `e^{-f_a} √g_aa`.
    pub measure: Vec<f64>,
}

/// Quadrature-ready weighted product manifold.
#[derive(Debug, Clone)]
pub struct DiscreteWeightedManifold {
    time: f64,
    grid: Arc<ProductGrid>,
    geometry: Geometry,
    profiles: Vec<AxisProfile>,
    weights: Vec<f64>,
    density: Vec<f64>,
    measure: Vec<f64>,
}

impl DiscreteWeightedManifold {
    pub fn new(grid: Arc<ProductGrid>, geometry: Geometry, time: f64) -> Result<Self> {
        if geometry.factors.len() != grid.dim() {
            return Err(Error::Usage("geometry and grid dimensions differ".into()));
        }
        let mut profiles = Vec::with_capacity(grid.dim());
        for (a, (factor, axis)) in geometry.factors.iter().zip(grid.axes()).enumerate() {
            let profile = match (factor, axis) {
                (FactorGeometry::Circle { metric, weight }, Axis::Circle(g)) => {
                    if metric.len() != g.len() || weight.len() != g.len() {
                        return Err(Error::Usage(format!("axis {a}: sample count mismatch")));
                    }
                    if let Some((j, &v)) = metric.iter().enumerate().find(|(_, &v)| !(v > 0.0) || !v.is_finite()) {
                        return Err(Error::Assembly(format!(
                            "degenerate metric sample {v} at node {j} of axis {a}"
                        )));
                    }
                    if weight.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Assembly(format!("non-finite weight on axis {a}")));
                    }
                    let da = g.derivative(metric);
                    let gamma = da.iter().zip(metric).map(|(d, m)| d / (2.0 * m)).collect();
                    let measure = metric
                        .iter()
                        .zip(weight)
                        .map(|(m, w)| g.weight() * (-w).exp() * m.sqrt())
                        .collect();
                    AxisProfile {
                        metric: metric.clone(),
                        gamma,
                        weight: weight.clone(),
                        weight_d1: g.derivative(weight),
                        weight_d2: g.second_derivative(weight),
                        measure,
                    }
                }
                (FactorGeometry::Gaussian { scale, offset }, Axis::Gaussian(g)) => {
                    if !(*scale > 0.0) || !scale.is_finite() {
                        return Err(Error::Assembly(format!(
                            "degenerate gaussian scale {scale} on axis {a}"
                        )));
                    }
                    let q = g.len();
                    let x = g.nodes();
                    AxisProfile {
                        metric: vec![*scale; q],
                        gamma: vec![0.0; q],
                        weight: x.iter().map(|x| x * x / 4.0 + offset).collect(),
                        weight_d1: x.iter().map(|x| x / 2.0).collect(),
                        weight_d2: vec![0.5; q],
                        measure: g
                            .gauss_weights()
                            .iter()
                            .map(|w| w * scale.sqrt() * (-offset).exp())
                            .collect(),
                    }
                }
                _ => return Err(Error::Usage(format!("axis {a}: factor kind mismatch"))),
            };
            profiles.push(profile);
        }

        let n = grid.len();
        let c = (-geometry.constant).exp();
        let axis_weights: Vec<Vec<f64>> = grid.axes().iter().map(Axis::weights).collect();
        let mut weights = vec![1.0; n];
        let mut density = vec![c; n];
        let mut measure = vec![c; n];
        for i in 0..n {
            for (a, p) in profiles.iter().enumerate() {
                let j = grid.coordinate_index(i, a);
                weights[i] *= axis_weights[a][j];
                density[i] *= (-p.weight[j]).exp() * p.metric[j].sqrt();
                measure[i] *= p.measure[j];
            }
        }
        Ok(Self {
            time,
            grid,
            geometry,
            profiles,
            weights,
            density,
            measure,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn dimension(&self) -> usize {
        self.grid.dim()
    }

    pub fn grid(&self) -> &Arc<ProductGrid> {
        &self.grid
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn profile(&self, axis: usize) -> &AxisProfile {
        &self.profiles[axis]
    }

    pub fn profiles(&self) -> &[AxisProfile] {
        &self.profiles
    }

    /// Tensor-product coordinate quadrature weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `e^{-f} √det g` per node.
    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// Combined weights for `∫ (·) e^{-f} dv`.
    pub fn measure(&self) -> &[f64] {
        &self.measure
    }

    pub fn integrate(&self, field: &[f64]) -> f64 {
        field.iter().zip(&self.measure).map(|(u, m)| u * m).sum()
    }

    pub fn total_volume(&self) -> f64 {
        self.measure.iter().sum()
    }

    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        self.grid.sample(f)
    }

    pub fn broadcast(&self, axis: usize, profile: &[f64]) -> Vec<f64> {
        self.grid.broadcast(axis, profile)
    }

    pub fn partial(&self, field: &[f64], axis: usize) -> Vec<f64> {
        self.grid.partial(field, axis)
    }

    pub fn partial2(&self, field: &[f64], axis: usize) -> Vec<f64> {
        self.grid.partial2(field, axis)
    }

    /// Full weight `f` per node, including the additive constant.
    pub fn weight_field(&self) -> Vec<f64> {
        let mut f = vec![self.geometry.constant; self.len()];
        for (a, p) in self.profiles.iter().enumerate() {
            for (i, v) in f.iter_mut().enumerate() {
                *v += p.weight[self.grid.coordinate_index(i, a)];
            }
        }
        f
    }

    /// Ricci curvature vanishes on every supported (flat) factor.
    pub fn ricci_diagonal(&self, _axis: usize) -> Vec<f64> {
        vec![0.0; self.len()]
    }

    pub fn scalar_curvature(&self) -> Vec<f64> {
        vec![0.0; self.len()]
    }

    /// Diagonal of the soliton defect `φ = ½g - Hess_f - Ric` along `axis`;
    /// off-diagonal entries vanish because `f` is a sum of factor terms.
    pub fn defect_profile(&self, axis: usize) -> Vec<f64> {
        let p = &self.profiles[axis];
        (0..p.metric.len())
            .map(|j| 0.5 * p.metric[j] - (p.weight_d2[j] - p.gamma[j] * p.weight_d1[j]))
            .collect()
    }

    pub fn is_compatible(&self, field: &[f64]) -> bool {
        field.len() == self.len()
    }

    pub(crate) fn check_field(&self, field: &[f64], what: &str) -> Result<()> {
        if self.is_compatible(field) {
            Ok(())
        } else {
            Err(Error::Usage(format!(
                "{what}: field has {} samples, manifold has {}",
                field.len(),
                self.len()
            )))
        }
    }
}

/// Samples `state` on a grid of the given resolution.
pub fn discretize(state: &ContinuumState, resolution: Resolution) -> Result<DiscreteWeightedManifold> {
    state.validate()?;
    let grid = grid_for(state, resolution)?;
    let geometry = Geometry::sample(state, &grid)?;
    DiscreteWeightedManifold::new(grid, geometry, state.time)
}
