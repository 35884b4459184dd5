//! Weighted product models: closed-form flow families, continuum states and
//! their quadrature-ready discretization.

pub mod family;
pub mod grid;
pub mod manifold;
pub mod trig;

pub use family::{
    product_family, round_circle_family, round_circle_family_with_weight, scaled_gaussian_family,
    AnalyticFamily, ContinuumFactor, ContinuumState, FamilyKind,
};
pub use grid::{Axis, CircleGrid, HermiteGrid, ProductGrid};
pub use manifold::{discretize, grid_for, AxisProfile, DiscreteWeightedManifold, FactorGeometry, Geometry, Resolution};
pub use trig::TrigPoly;
