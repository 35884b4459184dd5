//! Independent brute-force references: dense generalized eigensolves,
//! plain quadrature, RK4 on the equality-case ODE and finite differences.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::DiscreteWeightedManifold;
use crate::spectral::{cholesky_reduce, QuadraticForms};

pub const DENSE_LIMIT: usize = 2048;
const OVERFLOW_GUARD: f64 = 1e12;

/// Side-by-side comparison of an oracle value with a computed target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub oracle: String,
    pub inputs_digest: String,
    pub reference: Vec<f64>,
    pub target: Vec<f64>,
    pub abs_deviation: f64,
    pub rel_deviation: f64,
}

impl OracleReport {
    /// `inputs` is any canonical description of the oracle inputs; only its
    /// SHA-256 is stored.
    pub fn compare(oracle: &str, inputs: &str, reference: Vec<f64>, target: Vec<f64>) -> Result<Self> {
        if reference.len() != target.len() {
            return Err(Error::Usage(format!(
                "oracle {oracle}: {} reference values vs {} targets",
                reference.len(),
                target.len()
            )));
        }
        let mut abs = 0.0f64;
        let mut rel = 0.0f64;
        for (r, t) in reference.iter().zip(&target) {
            let d = (r - t).abs();
            abs = abs.max(d);
            let scale = r.abs().max(t.abs());
            if scale > 0.0 {
                rel = rel.max(d / scale);
            }
        }
        Ok(Self {
            oracle: oracle.into(),
            inputs_digest: hex::encode(Sha256::digest(inputs.as_bytes())),
            reference,
            target,
            abs_deviation: abs,
            rel_deviation: rel,
        })
    }

    pub fn within(&self, abs: f64, rel: f64) -> bool {
        self.abs_deviation <= abs || self.rel_deviation <= rel
    }
}

/// All generalized eigenvalues of the Kronecker-expanded forms, ascending.
pub fn dense_spectrum(forms: &QuadraticForms<'_>) -> Result<Vec<f64>> {
    let (k, m) = forms
        .full_matrices(DENSE_LIMIT)
        .map_err(|e| Error::Oracle(e.to_string()))?;
    dense_generalized_eigenvalues(&k, &m)
}

/// Eigenvalues of `K x = λ M x` by Cholesky reduction and a dense symmetric
/// solve.
pub fn dense_generalized_eigenvalues(k: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<Vec<f64>> {
    if k.shape() != m.shape() || !k.is_square() {
        return Err(Error::Oracle("stiffness and mass shapes differ".into()));
    }
    let (c, _) = cholesky_reduce(k, m)
        .ok_or_else(|| Error::Oracle("mass form is not positive definite".into()))?;
    let mut vals: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

/// RK4 solution of `F' = (2F - 1) F`, `F(0) = f0`, at `s`.
pub fn integrate_equality_ode(f0: f64, s: f64, dt: f64) -> Result<f64> {
    if !(dt > 0.0) || !(s >= 0.0) || !f0.is_finite() {
        return Err(Error::Usage(format!("invalid oracle inputs f0={f0}, s={s}, dt={dt}")));
    }
    let rhs = |f: f64| (2.0 * f - 1.0) * f;
    let steps = (s / dt).ceil().max(1.0) as usize;
    let h = s / steps as f64;
    let mut f = f0;
    for i in 0..steps {
        let k1 = rhs(f);
        let k2 = rhs(f + 0.5 * h * k1);
        let k3 = rhs(f + 0.5 * h * k2);
        let k4 = rhs(f + h * k3);
        let next = f + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let wrong_way = f0 > 0.5 && next < f;
        if !next.is_finite() || next.abs() > OVERFLOW_GUARD || wrong_way {
            return Err(Error::Horizon {
                horizon: (i + 1) as f64 * h,
            });
        }
        f = next;
    }
    Ok(f)
}

/// `Σ samples · weights · density`, independent of the stored measure.
pub fn quadrature_integral(samples: &[f64], dm: &DiscreteWeightedManifold) -> Result<f64> {
    if samples.len() != dm.len() {
        return Err(Error::Usage(format!(
            "quadrature: {} samples for {} nodes",
            samples.len(),
            dm.len()
        )));
    }
    Ok(samples
        .iter()
        .zip(dm.weights())
        .zip(dm.density())
        .map(|((u, w), d)| u * w * d)
        .sum())
}

/// Central differences inside, second-order one-sided at both ends.
pub fn finite_diff_time_derivative(series: &[f64], dt: f64) -> Result<Vec<f64>> {
    let n = series.len();
    if n < 3 {
        return Err(Error::Usage(format!("need at least 3 samples, got {n}")));
    }
    if !(dt > 0.0) {
        return Err(Error::Usage(format!("time step must be positive, got {dt}")));
    }
    let mut out = vec![0.0; n];
    out[0] = (-3.0 * series[0] + 4.0 * series[1] - series[2]) / (2.0 * dt);
    out[n - 1] = (3.0 * series[n - 1] - 4.0 * series[n - 2] + series[n - 3]) / (2.0 * dt);
    for i in 1..n - 1 {
        out[i] = (series[i + 1] - series[i - 1]) / (2.0 * dt);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{discretize, round_circle_family, scaled_gaussian_family, Resolution};
    use crate::spectral::assemble_forms;
    use std::f64::consts::PI;

    #[test]
    fn dense_round_circle() {
        let st = round_circle_family(1.0, 0.0).unwrap().evaluate(0.0).unwrap();
        let dm = discretize(&st, Resolution::default()).unwrap();
        let vals = dense_spectrum(&assemble_forms(&dm).unwrap()).unwrap();
        let expect = [0.0, 1.0, 1.0, 4.0, 4.0, 9.0, 9.0];
        for (a, b) in vals.iter().zip(expect) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        assert_eq!(vals.len(), 63);
    }

    #[test]
    fn dense_hermite_ladder() {
        let st = scaled_gaussian_family(1.0, 1, 0.0).unwrap().evaluate(0.0).unwrap();
        let dm = discretize(&st, Resolution { hermite_order: 8, ..Default::default() }).unwrap();
        let vals = dense_spectrum(&assemble_forms(&dm).unwrap()).unwrap();
        for (m, v) in vals.iter().enumerate() {
            assert!((v - 0.5 * m as f64).abs() < 1e-12, "{m}: {v}");
        }
    }

    #[test]
    fn dense_single_dimension() {
        let k = DMatrix::from_element(1, 1, 0.0);
        let m = DMatrix::from_element(1, 1, 2.0);
        assert_eq!(dense_generalized_eigenvalues(&k, &m).unwrap(), vec![0.0]);
        let bad = DMatrix::from_element(1, 1, -1.0);
        assert!(matches!(dense_generalized_eigenvalues(&k, &bad), Err(Error::Oracle(_))));
    }

    #[test]
    fn equality_ode() {
        assert_eq!(integrate_equality_ode(0.5, 3.0, 1e-3).unwrap(), 0.5);
        let v = integrate_equality_ode(0.25, 2f64.ln(), 1e-4).unwrap();
        assert!((v - 1.0 / 6.0).abs() < 1e-10);
        let near = integrate_equality_ode(1.0, 0.69, 1e-5).unwrap();
        assert!((near - 1.0 / (2.0 - 0.69f64.exp())).abs() < 1e-6 * near);
        assert!(matches!(integrate_equality_ode(1.0, 0.70, 1e-5), Err(Error::Horizon { .. })));
    }

    #[test]
    fn quadrature_examples() {
        let st = round_circle_family(1.0, 0.0).unwrap().evaluate(0.0).unwrap();
        let dm = discretize(&st, Resolution::default()).unwrap();
        assert!((quadrature_integral(&vec![1.0; dm.len()], &dm).unwrap() - 2.0 * PI).abs() < 1e-13);
        let st = scaled_gaussian_family(1.0, 1, 0.0).unwrap().evaluate(0.0).unwrap();
        let dm = discretize(&st, Resolution::default()).unwrap();
        let x2 = dm.sample(|c| c[0] * c[0]);
        assert!((quadrature_integral(&x2, &dm).unwrap() - 4.0 * PI.sqrt()).abs() < 1e-12);
        let x3 = dm.sample(|c| c[0].powi(3));
        assert!(quadrature_integral(&x3, &dm).unwrap().abs() < 1e-14);
        assert!(quadrature_integral(&x3[1..], &dm).is_err());
    }

    #[test]
    fn finite_differences() {
        let lin: Vec<f64> = (0..5).map(|i| 2.0 + 3.0 * i as f64 * 0.1).collect();
        for d in finite_diff_time_derivative(&lin, 0.1).unwrap() {
            assert!((d - 3.0).abs() < 1e-12);
        }
        let dt = 1e-3;
        let exp: Vec<f64> = (0..100).map(|i| (i as f64 * dt).exp()).collect();
        for (i, d) in finite_diff_time_derivative(&exp, dt).unwrap().iter().enumerate() {
            assert!((d / exp[i] - 1.0).abs() < 1e-6);
        }
        assert!(finite_diff_time_derivative(&[1.0; 4], dt).unwrap().iter().all(|d| *d == 0.0));
        assert!(matches!(finite_diff_time_derivative(&[1.0, 2.0], dt), Err(Error::Usage(_))));
    }

    #[test]
    fn reports_are_deterministic() {
        let a = OracleReport::compare("x", "in", vec![1.0, 2.0], vec![1.0, 2.1]).unwrap();
        let b = OracleReport::compare("x", "in", vec![1.0, 2.0], vec![1.0, 2.1]).unwrap();
        assert_eq!(a, b);
        assert!((a.abs_deviation - 0.1).abs() < 1e-15);
        assert!(a.rel_deviation >= 0.0 && a.inputs_digest.len() == 64);
    }
}
