//! Comparison principles for differential inequalities in the sense of
//! forward difference quotients, and the closed-form eigenvalue bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundCase {
    BelowHalf,
    AtHalf,
    AboveHalf,
}

/// Upper envelope for an eigenvalue whose forward derivative is at most
/// `(2λ - 1) λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCurve {
    pub lambda0: f64,
    pub case: BoundCase,
    /// `+∞` unless `lambda0 > ½`.
    pub horizon: f64,
}

impl BoundCurve {
    pub fn new(lambda0: f64) -> Result<Self> {
        if !(lambda0 > 0.0) || !lambda0.is_finite() {
            return Err(Error::Domain(format!("λ(t₀) must be positive, got {lambda0}")));
        }
        let case = if lambda0 < 0.5 {
            BoundCase::BelowHalf
        } else if lambda0 == 0.5 {
            BoundCase::AtHalf
        } else {
            BoundCase::AboveHalf
        };
        Ok(Self {
            lambda0,
            case,
            horizon: blowup_horizon(lambda0),
        })
    }

    pub fn eval(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::Domain(format!("elapsed time must be nonnegative, got {s}")));
        }
        if s >= self.horizon {
            return Err(Error::Horizon { horizon: self.horizon });
        }
        if self.case == BoundCase::AtHalf {
            return Ok(0.5);
        }
        let es = s.exp();
        let l = self.lambda0;
        Ok(l / (2.0 * l * (1.0 - es) + es))
    }

    pub fn is_valid_at(&self, s: f64) -> bool {
        s >= 0.0 && s < self.horizon
    }
}

/// `λ₀ / (2λ₀(1 - e^s) + e^s)`.
pub fn eigenvalue_bound(lambda0: f64, s: f64) -> Result<f64> {
    BoundCurve::new(lambda0)?.eval(s)
}

/// `log(2λ₀ / (2λ₀ - 1))` for `λ₀ > ½`, otherwise `+∞`.
pub fn blowup_horizon(lambda0: f64) -> f64 {
    if lambda0 > 0.5 {
        (2.0 * lambda0 / (2.0 * lambda0 - 1.0)).ln()
    } else {
        f64::INFINITY
    }
}

pub fn linear_comparison(h_a: f64, c: f64, s: f64) -> f64 {
    h_a + c * s
}

/// Upper bound at elapsed time `s` for any `h ≥ 0` with `h' ≤ h(h - 1)`.
///
/// For `h0 < 1` this is the exact logistic solution, which is stronger than
/// the bare statement `h(t) < h(t₀)`.
pub fn logistic_envelope(h0: f64, s: f64) -> Result<f64> {
    if !(h0 >= 0.0) || !(s >= 0.0) {
        return Err(Error::Domain(format!("need h0 ≥ 0 and s ≥ 0, got h0={h0}, s={s}")));
    }
    if h0 > 1.0 {
        return Err(Error::OutOfRegime(format!(
            "h0 = {h0} > 1 admits no forward bound"
        )));
    }
    if h0 == 1.0 {
        return Ok(1.0);
    }
    Ok(h0 / (h0 + (1.0 - h0) * s.exp()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForwardDiffVerdict {
    pub pass: bool,
    /// `max(0, max_i (q_i - G(t_i, h_i)))` over forward quotients `q_i`.
    pub slack: f64,
    /// Index of the worst quotient.
    pub worst: usize,
}

/// Tests `h' ≤ G(t, h)` on uniformly sampled `series` starting at `t0`
/// through forward difference quotients, allowing `tolerance` of slack.
pub fn forward_diff_check(
    t0: f64,
    dt: f64,
    series: &[f64],
    rhs: impl Fn(f64, f64) -> f64,
    tolerance: f64,
) -> Result<ForwardDiffVerdict> {
    if series.len() < 3 {
        return Err(Error::Usage(format!("need at least 3 samples, got {}", series.len())));
    }
    if !(dt > 0.0) {
        return Err(Error::Usage(format!("time step must be positive, got {dt}")));
    }
    let mut slack = 0.0f64;
    let mut worst = 0;
    for i in 0..series.len() - 1 {
        let q = (series[i + 1] - series[i]) / dt;
        let excess = q - rhs(t0 + i as f64 * dt, series[i]);
        if excess > slack {
            slack = excess;
            worst = i;
        }
    }
    Ok(ForwardDiffVerdict {
        pass: slack <= tolerance,
        slack,
        worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::integrate_equality_ode;
    use proptest::prelude::*;

    #[test]
    fn bound_examples() {
        for s in [0.0, 0.3, 10.0] {
            assert_eq!(eigenvalue_bound(0.5, s).unwrap(), 0.5);
        }
        assert_eq!(eigenvalue_bound(0.3, 0.0).unwrap(), 0.3);
        assert!((eigenvalue_bound(0.25, 2f64.ln()).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!((eigenvalue_bound(1.0, 0.5).unwrap() - 2.846742).abs() < 1e-6);
        match eigenvalue_bound(1.0, 0.7) {
            Err(Error::Horizon { horizon }) => assert!((horizon - 2f64.ln()).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
        assert!(eigenvalue_bound(0.0, 1.0).is_err());
    }

    #[test]
    fn horizons() {
        assert!((blowup_horizon(1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(blowup_horizon(0.5).is_infinite());
        assert!(blowup_horizon(0.25).is_infinite());
        assert_eq!(BoundCurve::new(0.25).unwrap().case, BoundCase::BelowHalf);
        assert_eq!(BoundCurve::new(0.5).unwrap().case, BoundCase::AtHalf);
        assert_eq!(BoundCurve::new(0.7).unwrap().case, BoundCase::AboveHalf);
    }

    #[test]
    fn linear_and_logistic() {
        assert_eq!(linear_comparison(0.0, 1.0, 2.0), 2.0);
        assert_eq!(linear_comparison(3.0, 0.0, 5.0), 3.0);
        for i in 0..=300 {
            let s = i as f64 * 0.01;
            assert!(s.sin() <= linear_comparison(0.0, 1.0, s));
        }
        assert_eq!(logistic_envelope(1.0, 4.0).unwrap(), 1.0);
        assert_eq!(logistic_envelope(0.3, 0.0).unwrap(), 0.3);
        assert!((logistic_envelope(0.5, 2f64.ln()).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(logistic_envelope(1.5, 0.1), Err(Error::OutOfRegime(_))));
    }

    #[test]
    fn forward_diff_examples() {
        let v = forward_diff_check(0.0, 0.1, &[2.0; 5], |_, _| 0.0, 0.0).unwrap();
        assert!(v.pass && v.slack == 0.0);
        let dt = 1e-5;
        let series: Vec<f64> = (0..2000)
            .map(|i| eigenvalue_bound(0.25, i as f64 * dt).unwrap())
            .collect();
        let v = forward_diff_check(0.0, dt, &series, |_, l| (2.0 * l - 1.0) * l, 1e-6).unwrap();
        assert!(v.pass, "{v:?}");
        let exp: Vec<f64> = (0..10).map(|i| (i as f64 * 0.1).exp()).collect();
        assert!(!forward_diff_check(0.0, 0.1, &exp, |_, _| 0.0, 0.0).unwrap().pass);
        assert!(forward_diff_check(0.0, 0.1, &[1.0, 2.0], |_, _| 0.0, 0.0).is_err());
    }

    #[test]
    fn bound_matches_equality_ode() {
        for l in [0.05, 0.25, 0.45, 0.5, 0.6, 1.0, 3.0] {
            let h = blowup_horizon(l);
            for frac in [0.0, 0.1, 0.5, 0.9] {
                let s = if h.is_finite() { frac * h } else { 4.0 * frac };
                let a = eigenvalue_bound(l, s).unwrap();
                let b = integrate_equality_ode(l, s, 1e-4).unwrap();
                assert!((a - b).abs() <= 1e-10 * a.max(1.0), "{l} {s}: {a} {b}");
            }
        }
    }

    proptest! {
        #[test]
        fn semigroup(l in 0.01f64..2.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let h = blowup_horizon(l);
            let (s1, s2) = if h.is_finite() { (a * h / 2.0, b * h / 2.0) } else { (a, b) };
            let two = eigenvalue_bound(eigenvalue_bound(l, s1).unwrap(), s2).unwrap();
            let one = eigenvalue_bound(l, s1 + s2).unwrap();
            prop_assert!((two - one).abs() <= 1e-12 * one.max(1.0));
        }

        #[test]
        fn monotone_in_lambda0(l in 0.01f64..1.5, dl in 1e-3f64..0.5, s in 0.0f64..0.5) {
            let hi = l + dl;
            prop_assume!(s < blowup_horizon(hi));
            prop_assert!(eigenvalue_bound(l, s).unwrap() < eigenvalue_bound(hi, s).unwrap());
        }

        #[test]
        fn below_half_strictly_decreases(l in 0.01f64..0.49, s in 1e-3f64..5.0) {
            prop_assert!(eigenvalue_bound(l, s).unwrap() < l);
        }

        #[test]
        fn chain_rule_consistency(h0 in 0.05f64..0.95, r in 1.0f64..3.0) {
            // h = logistic with rate r ≥ 1 satisfies h' ≤ h(h - 1).
            let dt = 1e-3;
            let h: Vec<f64> = (0..500)
                .map(|i| { let s = i as f64 * dt; h0 / (h0 + (1.0 - h0) * (r * s).exp()) })
                .collect();
            let logit: Vec<f64> = h.iter().map(|v| (v / (1.0 - v)).ln()).collect();
            let direct = forward_diff_check(0.0, dt, &h, |_, v| v * (v - 1.0), 1e-4).unwrap();
            let chained = forward_diff_check(0.0, dt, &logit, |_, _| -1.0, 1e-4).unwrap();
            prop_assert!(!direct.pass || chained.pass);
        }
    }
}
