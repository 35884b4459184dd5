use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use super::run::FlowTrajectory;
use crate::error::{Error, Result};
use crate::geometry::DiscreteWeightedManifold;
use crate::oracle::finite_diff_time_derivative;
use crate::spectral::{
    defect_applied, drift_divergence, drift_laplacian, grad_dot, hessian_norm_sq,
};

/// Pairings of the tracked scalars at one output time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSnapshot {
    pub j: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
    /// `∫|Hess u_i|² e^{-f}`
    pub hessian: Vec<f64>,
    /// `∫u_i e^{-f}`
    pub mean: Vec<f64>,
    pub volume: f64,
}

impl FunctionalSnapshot {
    pub fn compute(fields: &[Vec<f64>], dm: &DiscreteWeightedManifold) -> Result<Self> {
        let m = fields.len();
        let mut j = vec![vec![0.0; m]; m];
        let mut d = vec![vec![0.0; m]; m];
        for a in 0..m {
            for b in a..m {
                let uv: Vec<f64> = fields[a].iter().zip(&fields[b]).map(|(x, y)| x * y).collect();
                j[a][b] = dm.integrate(&uv);
                d[a][b] = dm.integrate(&grad_dot(&fields[a], &fields[b], dm)?);
                j[b][a] = j[a][b];
                d[b][a] = d[a][b];
            }
        }
        Ok(Self {
            j,
            d,
            hessian: fields
                .iter()
                .map(|u| hessian_norm_sq(u, dm))
                .collect::<Result<_>>()?,
            mean: fields.iter().map(|u| dm.integrate(u)).collect(),
            volume: dm.total_volume(),
        })
    }

    pub fn energy(&self, i: usize) -> f64 {
        self.d[i][i]
    }

    pub fn norm(&self, i: usize) -> f64 {
        self.j[i][i]
    }

    pub fn quotient(&self, i: usize) -> f64 {
        self.d[i][i] / self.j[i][i]
    }
}

/// Maximum relative residuals of the evolution identities for the tracked
/// scalars, plus sign records and conservation checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalResiduals {
    /// `J_ij' = J_ij - 2 D_ij`
    pub pairing: f64,
    /// `I_i' = I_i - 2 E_i`
    pub norm: f64,
    /// `E_i' = -2 ∫|Hess u_i|²`
    pub energy: f64,
    /// `F_i' = -2 ∫|Hess u_i|² / I_i + F_i(2F_i - 1)`
    pub quotient: f64,
    /// Largest increase `E(τ_{n+1}) - E(τ_n)` relative to `|E|`.
    pub energy_increase: f64,
    /// Largest excess of forward quotients of `F` over `F(2F - 1)`.
    pub quotient_excess: f64,
    /// `max |∫u_i e^{-f}|`, meaningful when the initial means vanish.
    pub mean_drift: f64,
    /// `max |V(τ) - V(t₀)| / V(t₀)`.
    pub volume_drift: f64,
}

impl FunctionalResiduals {
    pub fn worst_identity(&self) -> f64 {
        self.pairing.max(self.norm).max(self.energy).max(self.quotient)
    }
}

fn relative_gap(lhs: &[f64], rhs: &[f64]) -> f64 {
    let scale = lhs
        .iter()
        .chain(rhs)
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    let gap = lhs
        .iter()
        .zip(rhs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if scale == 0.0 {
        gap
    } else {
        gap / scale
    }
}

pub fn functional_residuals(traj: &FlowTrajectory) -> Result<FunctionalResiduals> {
    let snaps = &traj.functionals;
    if snaps.len() < 3 {
        return Err(Error::Usage("functional residuals need at least 3 output times".into()));
    }
    let m = snaps[0].j.len();
    let dt = traj.output_dt;
    let mut out = FunctionalResiduals {
        pairing: 0.0,
        norm: 0.0,
        energy: 0.0,
        quotient: 0.0,
        energy_increase: 0.0,
        quotient_excess: 0.0,
        mean_drift: 0.0,
        volume_drift: 0.0,
    };
    for a in 0..m {
        for b in a..m {
            let j: Vec<f64> = snaps.iter().map(|s| s.j[a][b]).collect();
            let rhs: Vec<f64> = snaps.iter().map(|s| s.j[a][b] - 2.0 * s.d[a][b]).collect();
            let dj = finite_diff_time_derivative(&j, dt)?;
            let scale_src: Vec<f64> = snaps
                .iter()
                .map(|s| {
                    let size = |i: usize| s.j[i][i].abs() + 2.0 * s.d[i][i].abs();
                    (size(a) * size(b)).sqrt()
                })
                .collect();
            let r = gap_with_scale(&dj, &rhs, &scale_src);
            out.pairing = out.pairing.max(r);
            if a == b {
                out.norm = out.norm.max(r);
            }
        }
        let e: Vec<f64> = snaps.iter().map(|s| s.energy(a)).collect();
        let de = finite_diff_time_derivative(&e, dt)?;
        let rhs: Vec<f64> = snaps.iter().map(|s| -2.0 * s.hessian[a]).collect();
        let scale_src: Vec<f64> = e.iter().zip(&rhs).map(|(x, y)| x.abs().max(y.abs())).collect();
        out.energy = out.energy.max(gap_with_scale(&de, &rhs, &scale_src));

        let f: Vec<f64> = snaps.iter().map(|s| s.quotient(a)).collect();
        let df = finite_diff_time_derivative(&f, dt)?;
        let rhs: Vec<f64> = snaps
            .iter()
            .map(|s| {
                let q = s.quotient(a);
                -2.0 * s.hessian[a] / s.norm(a) + q * (2.0 * q - 1.0)
            })
            .collect();
        out.quotient = out.quotient.max(relative_gap(&df, &rhs));

        for w in e.windows(2) {
            let inc = (w[1] - w[0]) / w[0].abs().max(f64::MIN_POSITIVE);
            out.energy_increase = out.energy_increase.max(inc);
        }
        for (i, w) in f.windows(2).enumerate() {
            let q = (w[1] - w[0]) / dt;
            let bound = f[i] * (2.0 * f[i] - 1.0);
            out.quotient_excess = out.quotient_excess.max(q - bound);
        }
        for s in snaps {
            out.mean_drift = out.mean_drift.max(s.mean[a].abs());
        }
    }
    let v0 = snaps[0].volume;
    for s in snaps {
        out.volume_drift = out.volume_drift.max(((s.volume - v0) / v0).abs());
    }
    Ok(out)
}

/// Per output time, `max_i |I_i' - (I_i - 2E_i)| / (|I_i| + 2|E_i|)`.
pub fn norm_residual_series(traj: &FlowTrajectory) -> Result<Vec<f64>> {
    let snaps = &traj.functionals;
    if snaps.len() < 3 {
        return Err(Error::Usage("residual series needs at least 3 output times".into()));
    }
    let mut out = vec![0.0f64; snaps.len()];
    for a in 0..snaps[0].j.len() {
        let i: Vec<f64> = snaps.iter().map(|s| s.norm(a)).collect();
        let di = finite_diff_time_derivative(&i, traj.output_dt)?;
        for (t, s) in snaps.iter().enumerate() {
            let rhs = s.norm(a) - 2.0 * s.energy(a);
            let scale = s.norm(a).abs() + 2.0 * s.energy(a).abs();
            let r = (di[t] - rhs).abs();
            out[t] = out[t].max(if scale > 0.0 { r / scale } else { r });
        }
    }
    Ok(out)
}

fn gap_with_scale(lhs: &[f64], rhs: &[f64], scale: &[f64]) -> f64 {
    let s = scale.iter().copied().fold(0.0, f64::max);
    let gap = lhs
        .iter()
        .zip(rhs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if s == 0.0 {
        gap
    } else {
        gap / s
    }
}

/// `v_i = Σ_j a_ij u_j`, J-orthonormal, with `a` lower triangular.
#[derive(Debug, Clone, PartialEq)]
pub struct GramSchmidtFrame {
    pub frame: Vec<Vec<f64>>,
    pub mixing: DMatrix<f64>,
}

pub fn gram_schmidt_frame(scalars: &[Vec<f64>], dm: &DiscreteWeightedManifold) -> Result<GramSchmidtFrame> {
    let m = scalars.len();
    for s in scalars {
        dm.check_field(s, "gram_schmidt_frame")?;
    }
    let gram = DMatrix::from_fn(m, m, |a, b| {
        let uv: Vec<f64> = scalars[a].iter().zip(&scalars[b]).map(|(x, y)| x * y).collect();
        dm.integrate(&uv)
    });
    let scale = (0..m).map(|i| gram[(i, i)]).fold(0.0, f64::max);
    let chol = Cholesky::new(gram).ok_or_else(|| {
        Error::Degeneracy("scalars are linearly dependent in weighted L²".into())
    })?;
    let l = chol.l();
    if (0..m).any(|i| l[(i, i)] <= 1e-12 * scale.sqrt()) {
        return Err(Error::Degeneracy("scalars are numerically dependent".into()));
    }
    let mixing = l
        .solve_lower_triangular(&DMatrix::identity(m, m))
        .ok_or_else(|| Error::Degeneracy("singular Gram factor".into()))?;
    let frame = (0..m)
        .map(|i| {
            let mut v = vec![0.0; dm.len()];
            for j in 0..=i {
                let c = mixing[(i, j)];
                for (v, u) in v.iter_mut().zip(&scalars[j]) {
                    *v += c * u;
                }
            }
            v
        })
        .collect();
    Ok(GramSchmidtFrame { frame, mixing })
}

/// Weighted L² size of `∂_t(ℒu) - ℒu_t + 2 div_f(φ(∇u))` for a field `u`
/// fixed in coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommutatorResidual {
    pub absolute: f64,
    /// Size of `∂_t(ℒu)`.
    pub scale: f64,
}

impl CommutatorResidual {
    pub fn relative(&self) -> f64 {
        if self.scale == 0.0 {
            self.absolute
        } else {
            self.absolute / self.scale
        }
    }
}

pub fn commutator_residual(u: &[f64], traj: &FlowTrajectory, index: usize) -> Result<CommutatorResidual> {
    let n = traj.len();
    if n < 3 {
        return Err(Error::Usage("commutator residual needs at least 3 output times".into()));
    }
    if index >= n {
        return Err(Error::Usage(format!("output index {index} out of range")));
    }
    let lap = |i: usize| drift_laplacian(u, traj.states[i].manifold());
    let dt = traj.output_dt;
    let dtl: Vec<f64> = if index == 0 {
        let (a, b, c) = (lap(0)?, lap(1)?, lap(2)?);
        (0..a.len()).map(|i| (-3.0 * a[i] + 4.0 * b[i] - c[i]) / (2.0 * dt)).collect()
    } else if index == n - 1 {
        let (a, b, c) = (lap(n - 1)?, lap(n - 2)?, lap(n - 3)?);
        (0..a.len()).map(|i| (3.0 * a[i] - 4.0 * b[i] + c[i]) / (2.0 * dt)).collect()
    } else {
        let (a, b) = (lap(index + 1)?, lap(index - 1)?);
        (0..a.len()).map(|i| (a[i] - b[i]) / (2.0 * dt)).collect()
    };
    let dm = traj.states[index].manifold();
    let div = drift_divergence(&defect_applied(u, dm)?, dm)?;
    let res: Vec<f64> = dtl.iter().zip(&div).map(|(a, b)| (a + 2.0 * b).powi(2)).collect();
    let sq: Vec<f64> = dtl.iter().map(|a| a * a).collect();
    Ok(CommutatorResidual {
        absolute: dm.integrate(&res).max(0.0).sqrt(),
        scale: dm.integrate(&sq).max(0.0).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{discretize, round_circle_family, Resolution};

    #[test]
    fn orthonormal_inputs_give_identity() {
        let st = round_circle_family(1.0, 0.0).unwrap().evaluate(0.0).unwrap();
        let dm = discretize(&st, Resolution::default()).unwrap();
        let s = std::f64::consts::PI.sqrt();
        let u = vec![dm.sample(|c| c[0].cos() / s), dm.sample(|c| c[0].sin() / s)];
        let f = gram_schmidt_frame(&u, &dm).unwrap();
        assert!((f.mixing.clone() - DMatrix::identity(2, 2)).amax() < 1e-14);
        let dup = vec![u[0].clone(), u[0].clone()];
        assert!(matches!(gram_schmidt_frame(&dup, &dm), Err(Error::Degeneracy(_))));
    }

    #[test]
    fn frame_is_orthonormal() {
        let st = round_circle_family(2.0, 0.0).unwrap().evaluate(0.0).unwrap();
        let dm = discretize(&st, Resolution::default()).unwrap();
        let u = vec![
            dm.sample(|c| c[0].cos() + 0.3),
            dm.sample(|c| c[0].cos() + (2.0 * c[0]).sin()),
            dm.sample(|c| c[0].sin() - 2.0),
        ];
        let f = gram_schmidt_frame(&u, &dm).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let uv: Vec<f64> = f.frame[a].iter().zip(&f.frame[b]).map(|(x, y)| x * y).collect();
                let e = if a == b { 1.0 } else { 0.0 };
                assert!((dm.integrate(&uv) - e).abs() < 1e-12);
            }
            for b in a + 1..3 {
                assert_eq!(f.mixing[(a, b)], 0.0);
            }
        }
    }
}
