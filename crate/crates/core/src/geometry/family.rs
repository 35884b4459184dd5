//! Continuum models and the closed-form solution families of the modified
//! Ricci flow `g_t = g - 2 Hess_f - 2 Ric`, `f_t = n/2 - S - Δf` on flat
//! factors.

use serde::{Deserialize, Serialize};

use super::trig::TrigPoly;
use crate::error::{Error, Result};

/// One flat one-dimensional factor of a product model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ContinuumFactor {
    /// Circle with metric `a(θ) dθ²` and weight term `f(θ)`.
    Circle { metric: TrigPoly, weight: TrigPoly },
    /// Line with metric `scale · dx²` and weight term `x²/4 + offset`.
    Gaussian { scale: f64, offset: f64 },
}

/// A weighted product manifold at one instant.
///
/// The weight is `f = constant + Σ_i f_i(x_i)` with one term per factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuumState {
    pub factors: Vec<ContinuumFactor>,
    pub constant: f64,
    pub time: f64,
}

impl ContinuumState {
    pub fn new(factors: Vec<ContinuumFactor>, constant: f64, time: f64) -> Result<Self> {
        let state = Self {
            factors,
            constant,
            time,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn dimension(&self) -> usize {
        self.factors.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.factors.is_empty() {
            return Err(Error::Config("state has no factors".into()));
        }
        let circles = self
            .factors
            .iter()
            .filter(|f| matches!(f, ContinuumFactor::Circle { .. }))
            .count();
        if circles > 1 {
            return Err(Error::Config(
                "at most one circle factor is supported".into(),
            ));
        }
        if !self.constant.is_finite() {
            return Err(Error::Domain("weight constant is not finite".into()));
        }
        for factor in &self.factors {
            match factor {
                ContinuumFactor::Gaussian { scale, offset } => {
                    if !(*scale > 0.0) || !scale.is_finite() {
                        return Err(Error::Domain(format!(
                            "gaussian metric scale must be positive, got {scale}"
                        )));
                    }
                    if !offset.is_finite() {
                        return Err(Error::Domain("gaussian weight offset is not finite".into()));
                    }
                }
                ContinuumFactor::Circle { metric, weight } => {
                    let probes = 8 * (metric.degree() + weight.degree()) + 64;
                    for j in 0..probes {
                        let t = 2.0 * std::f64::consts::PI * j as f64 / probes as f64;
                        let a = metric.eval(t);
                        if !(a > 0.0) || !a.is_finite() {
                            return Err(Error::Domain(format!(
                                "circle metric coefficient {a} is not positive at θ = {t}"
                            )));
                        }
                        if !weight.eval(t).is_finite() {
                            return Err(Error::Domain("circle weight is not finite".into()));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FamilyKind {
    /// `g = u(t) δ`, `f = |x|²/4 + (n/2) log u(t)` on `ℝⁿ`.
    ScaledGaussian { u0: f64, n: usize },
    /// Round circle `a(t) dθ²` with spatially constant weight.
    RoundCircle { a0: f64, f0: f64 },
    Product(Vec<AnalyticFamily>),
}

/// Closed-form solution family with reference time `t0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticFamily {
    pub kind: FamilyKind,
    pub t0: f64,
}

pub fn scaled_gaussian_family(u0: f64, n: usize, t0: f64) -> Result<AnalyticFamily> {
    if !(u0 > 0.0) || !u0.is_finite() {
        return Err(Error::Domain(format!("u0 must be positive, got {u0}")));
    }
    if n == 0 {
        return Err(Error::Domain("dimension must be at least 1".into()));
    }
    Ok(AnalyticFamily {
        kind: FamilyKind::ScaledGaussian { u0, n },
        t0,
    })
}

pub fn round_circle_family(a0: f64, t0: f64) -> Result<AnalyticFamily> {
    round_circle_family_with_weight(a0, 0.0, t0)
}

pub fn round_circle_family_with_weight(a0: f64, f0: f64, t0: f64) -> Result<AnalyticFamily> {
    if !(a0 > 0.0) || !a0.is_finite() {
        return Err(Error::Domain(format!("a0 must be positive, got {a0}")));
    }
    Ok(AnalyticFamily {
        kind: FamilyKind::RoundCircle { a0, f0 },
        t0,
    })
}

pub fn product_family(factors: Vec<AnalyticFamily>) -> Result<AnalyticFamily> {
    let Some(first) = factors.first() else {
        return Err(Error::Config("product of zero factors".into()));
    };
    let t0 = first.t0;
    if let Some(bad) = factors.iter().find(|f| f.t0 != t0) {
        return Err(Error::Config(format!(
            "product factors disagree on reference time ({} vs {t0})",
            bad.t0
        )));
    }
    let family = AnalyticFamily {
        kind: FamilyKind::Product(factors),
        t0,
    };
    if family.circle_count() > 1 {
        return Err(Error::Config(
            "at most one circle factor is supported".into(),
        ));
    }
    Ok(family)
}

impl AnalyticFamily {
    fn circle_count(&self) -> usize {
        match &self.kind {
            FamilyKind::ScaledGaussian { .. } => 0,
            FamilyKind::RoundCircle { .. } => 1,
            FamilyKind::Product(fs) => fs.iter().map(Self::circle_count).sum(),
        }
    }

    /// Earliest extinction time over all Gaussian factors with `u0 < 1`.
    pub fn extinction_time(&self) -> Option<f64> {
        match &self.kind {
            FamilyKind::ScaledGaussian { u0, .. } if *u0 < 1.0 => {
                Some(self.t0 + (1.0 / (1.0 - u0)).ln())
            }
            FamilyKind::ScaledGaussian { .. } | FamilyKind::RoundCircle { .. } => None,
            FamilyKind::Product(fs) => fs
                .iter()
                .filter_map(Self::extinction_time)
                .min_by(|a, b| a.total_cmp(b)),
        }
    }

    /// `u(t) = 1 + (u0 - 1) e^{t - t0}`.
    pub fn gaussian_scale(u0: f64, t0: f64, t: f64) -> f64 {
        1.0 + (u0 - 1.0) * (t - t0).exp()
    }

    pub fn evaluate(&self, t: f64) -> Result<ContinuumState> {
        if let Some(ext) = self.extinction_time() {
            if t >= ext {
                return Err(Error::Extinction {
                    time: t,
                    extinction: ext,
                });
            }
        }
        let mut factors = Vec::new();
        self.push_factors(t, &mut factors)?;
        ContinuumState::new(factors, 0.0, t)
    }

    fn push_factors(&self, t: f64, out: &mut Vec<ContinuumFactor>) -> Result<()> {
        match &self.kind {
            FamilyKind::ScaledGaussian { u0, n } => {
                let u = Self::gaussian_scale(*u0, self.t0, t);
                if !(u > 0.0) {
                    return Err(Error::Extinction {
                        time: t,
                        extinction: self.extinction_time().unwrap_or(f64::NAN),
                    });
                }
                for _ in 0..*n {
                    out.push(ContinuumFactor::Gaussian {
                        scale: u,
                        offset: 0.5 * u.ln(),
                    });
                }
            }
            FamilyKind::RoundCircle { a0, f0 } => {
                let s = t - self.t0;
                out.push(ContinuumFactor::Circle {
                    metric: TrigPoly::constant(a0 * s.exp()),
                    weight: TrigPoly::constant(f0 + 0.5 * s),
                });
            }
            FamilyKind::Product(fs) => {
                for f in fs {
                    f.push_factors(t, out)?;
                }
            }
        }
        Ok(())
    }

    /// Lowest `count` drift-Laplacian eigenvalues at time `t`, with
    /// multiplicity.
    pub fn eigenvalues(&self, t: f64, count: usize) -> Result<Vec<f64>> {
        let state = self.evaluate(t)?;
        let mut spectrum = vec![0.0];
        for factor in &state.factors {
            let factor_spec: Vec<f64> = match factor {
                ContinuumFactor::Gaussian { scale, .. } => {
                    (0..count).map(|m| m as f64 / (2.0 * scale)).collect()
                }
                ContinuumFactor::Circle { metric, .. } => {
                    let a = metric.mean();
                    let mut v = vec![0.0];
                    let mut m = 1;
                    while v.len() < count {
                        let lam = (m * m) as f64 / a;
                        v.push(lam);
                        v.push(lam);
                        m += 1;
                    }
                    v
                }
            };
            let mut sums: Vec<f64> = spectrum
                .iter()
                .flat_map(|a| factor_spec.iter().map(move |b| a + b))
                .collect();
            sums.sort_by(f64::total_cmp);
            sums.truncate(count);
            spectrum = sums;
        }
        Ok(spectrum)
    }

    pub fn lambda1(&self, t: f64) -> Result<f64> {
        Ok(self.eigenvalues(t, 2)?[1])
    }
}
