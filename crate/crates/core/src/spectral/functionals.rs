//! Weighted integrals of fields on a discrete manifold.
//!
//! Fields are node samples in the row-major layout of the product grid.
//! Vector fields are stored as contravariant components, one vector per axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DiscreteWeightedManifold;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pairings {
    pub j: f64,
    pub d: f64,
}

/// `I = J(u,u)`, `E = D(u,u)` and the Rayleigh quotient `F = E / I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyProfile {
    pub i: f64,
    pub e: f64,
    pub f: f64,
}

/// Both sides of the integrated drift Bochner identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BochnerResidual {
    /// `∫ φ(∇u,∇u) e^{-f}`
    pub lhs: f64,
    /// `∫ (|Hess u|² + ½|∇u|² - (ℒu)²) e^{-f}`
    pub rhs: f64,
}

impl BochnerResidual {
    pub fn absolute(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }

    /// Relative to the larger side; zero when both sides vanish.
    pub fn relative(&self) -> f64 {
        let scale = self.lhs.abs().max(self.rhs.abs());
        if scale == 0.0 {
            0.0
        } else {
            self.absolute() / scale
        }
    }
}

fn axis_field(dm: &DiscreteWeightedManifold, axis: usize, pick: impl Fn(usize) -> f64) -> Vec<f64> {
    let n = dm.grid().axis(axis).len();
    let profile: Vec<f64> = (0..n).map(pick).collect();
    dm.broadcast(axis, &profile)
}

fn inverse_metric(dm: &DiscreteWeightedManifold, axis: usize) -> Vec<f64> {
    let p = dm.profile(axis);
    axis_field(dm, axis, |j| 1.0 / p.metric[j])
}

/// Contravariant gradient components `g^{aa} ∂_a u`.
pub fn gradient(u: &[f64], dm: &DiscreteWeightedManifold) -> Result<Vec<Vec<f64>>> {
    dm.check_field(u, "gradient")?;
    Ok((0..dm.dimension())
        .map(|a| {
            let inv = inverse_metric(dm, a);
            dm.partial(u, a).iter().zip(&inv).map(|(d, g)| d * g).collect()
        })
        .collect())
}

/// `⟨∇u, ∇v⟩` per node.
pub fn grad_dot(u: &[f64], v: &[f64], dm: &DiscreteWeightedManifold) -> Result<Vec<f64>> {
    dm.check_field(u, "grad_dot")?;
    dm.check_field(v, "grad_dot")?;
    let mut out = vec![0.0; dm.len()];
    for a in 0..dm.dimension() {
        let inv = inverse_metric(dm, a);
        let du = dm.partial(u, a);
        let dv = if u == v { du.clone() } else { dm.partial(v, a) };
        for i in 0..out.len() {
            out[i] += inv[i] * du[i] * dv[i];
        }
    }
    Ok(out)
}

pub fn weighted_pairings(u: &[f64], v: &[f64], dm: &DiscreteWeightedManifold) -> Result<Pairings> {
    dm.check_field(u, "weighted_pairings")?;
    dm.check_field(v, "weighted_pairings")?;
    let uv: Vec<f64> = u.iter().zip(v).map(|(a, b)| a * b).collect();
    Ok(Pairings {
        j: dm.integrate(&uv),
        d: dm.integrate(&grad_dot(u, v, dm)?),
    })
}

pub fn energy_profile(u: &[f64], dm: &DiscreteWeightedManifold) -> Result<EnergyProfile> {
    let p = weighted_pairings(u, u, dm)?;
    if !(p.j > 0.0) {
        return Err(Error::Degeneracy(
            "Rayleigh quotient undefined for a field with zero weighted norm".into(),
        ));
    }
    Ok(EnergyProfile {
        i: p.j,
        e: p.d,
        f: p.d / p.j,
    })
}

/// `ℒu = Δu - ⟨∇f, ∇u⟩` per node.
pub fn drift_laplacian(u: &[f64], dm: &DiscreteWeightedManifold) -> Result<Vec<f64>> {
    dm.check_field(u, "drift_laplacian")?;
    let mut out = vec![0.0; dm.len()];
    for a in 0..dm.dimension() {
        let p = dm.profile(a);
        let inv = inverse_metric(dm, a);
        let drift = axis_field(dm, a, |j| p.gamma[j] + p.weight_d1[j]);
        let d1 = dm.partial(u, a);
        let d2 = dm.partial2(u, a);
        for i in 0..out.len() {
            out[i] += inv[i] * (d2[i] - drift[i] * d1[i]);
        }
    }
    Ok(out)
}

/// `|Hess u|²` per node, including mixed partials across factors.
pub fn hessian_norm_sq_field(u: &[f64], dm: &DiscreteWeightedManifold) -> Result<Vec<f64>> {
    dm.check_field(u, "hessian_norm_sq")?;
    let d = dm.dimension();
    let inv: Vec<Vec<f64>> = (0..d).map(|a| inverse_metric(dm, a)).collect();
    let d1: Vec<Vec<f64>> = (0..d).map(|a| dm.partial(u, a)).collect();
    let mut out = vec![0.0; dm.len()];
    for a in 0..d {
        let p = dm.profile(a);
        let gamma = axis_field(dm, a, |j| p.gamma[j]);
        let d2 = dm.partial2(u, a);
        for i in 0..out.len() {
            let h = d2[i] - gamma[i] * d1[a][i];
            out[i] += (inv[a][i] * h).powi(2);
        }
        for b in a + 1..d {
            let mixed = dm.partial(&d1[a], b);
            for i in 0..out.len() {
                out[i] += 2.0 * (inv[a][i] * inv[b][i]) * mixed[i].powi(2);
            }
        }
    }
    Ok(out)
}

/// `∫ |Hess u|² e^{-f} dv`.
pub fn hessian_norm_sq(u: &[f64], dm: &DiscreteWeightedManifold) -> Result<f64> {
    Ok(dm.integrate(&hessian_norm_sq_field(u, dm)?))
}

/// `φ(∇u, ∇u)` per node with `φ = ½g - Hess_f - Ric`.
pub fn defect_quadratic(u: &[f64], dm: &DiscreteWeightedManifold) -> Result<Vec<f64>> {
    let grad = gradient(u, dm)?;
    let mut out = vec![0.0; dm.len()];
    for (a, g) in grad.iter().enumerate() {
        let phi = dm.broadcast(a, &dm.defect_profile(a));
        for i in 0..out.len() {
            out[i] += phi[i] * g[i] * g[i];
        }
    }
    Ok(out)
}

/// Contravariant components of `φ(∇u)` with the index raised.
pub fn defect_applied(u: &[f64], dm: &DiscreteWeightedManifold) -> Result<Vec<Vec<f64>>> {
    let grad = gradient(u, dm)?;
    Ok(grad
        .into_iter()
        .enumerate()
        .map(|(a, g)| {
            let phi = dm.broadcast(a, &dm.defect_profile(a));
            let inv = inverse_metric(dm, a);
            g.iter().zip(&phi).zip(&inv).map(|((g, p), i)| g * p * i).collect()
        })
        .collect())
}

pub fn bochner_residual(u: &[f64], dm: &DiscreteWeightedManifold) -> Result<BochnerResidual> {
    let lhs = dm.integrate(&defect_quadratic(u, dm)?);
    let hess = hessian_norm_sq_field(u, dm)?;
    let grad2 = grad_dot(u, u, dm)?;
    let lu = drift_laplacian(u, dm)?;
    let integrand: Vec<f64> = (0..dm.len())
        .map(|i| hess[i] + 0.5 * grad2[i] - lu[i] * lu[i])
        .collect();
    Ok(BochnerResidual {
        lhs,
        rhs: dm.integrate(&integrand),
    })
}

/// `div V - ⟨V, ∇f⟩` for contravariant components `V^a`.
pub fn drift_divergence(v: &[Vec<f64>], dm: &DiscreteWeightedManifold) -> Result<Vec<f64>> {
    if v.len() != dm.dimension() {
        return Err(Error::Usage(format!(
            "vector field has {} components, manifold dimension is {}",
            v.len(),
            dm.dimension()
        )));
    }
    let mut out = vec![0.0; dm.len()];
    for (a, va) in v.iter().enumerate() {
        dm.check_field(va, "drift_divergence")?;
        let p = dm.profile(a);
        let drift = axis_field(dm, a, |j| p.gamma[j] - p.weight_d1[j]);
        let dv = dm.partial(va, a);
        for i in 0..out.len() {
            out[i] += dv[i] + drift[i] * va[i];
        }
    }
    Ok(out)
}
