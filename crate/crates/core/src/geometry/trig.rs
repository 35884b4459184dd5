use serde::{Deserialize, Serialize};

/// Real trigonometric polynomial on `[0, 2π)`.
///
/// `cos[k]` multiplies `cos(kθ)` (so `cos[0]` is the mean) and `sin[k]`
/// multiplies `sin((k + 1)θ)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrigPoly {
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl TrigPoly {
    pub fn new(cos: Vec<f64>, sin: Vec<f64>) -> Self {
        Self { cos, sin }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            cos: vec![c],
            sin: Vec::new(),
        }
    }

    /// Highest frequency with a nonzero slot.
    pub fn degree(&self) -> usize {
        self.cos.len().saturating_sub(1).max(self.sin.len())
    }

    pub fn mean(&self) -> f64 {
        self.cos.first().copied().unwrap_or(0.0)
    }

    pub fn is_constant(&self) -> bool {
        self.cos.iter().skip(1).all(|&c| c == 0.0) && self.sin.iter().all(|&s| s == 0.0)
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let mut v = 0.0;
        for (k, &c) in self.cos.iter().enumerate() {
            v += c * (k as f64 * theta).cos();
        }
        for (j, &s) in self.sin.iter().enumerate() {
            v += s * ((j + 1) as f64 * theta).sin();
        }
        v
    }

    pub fn derivative(&self, theta: f64) -> f64 {
        let mut v = 0.0;
        for (k, &c) in self.cos.iter().enumerate().skip(1) {
            let k = k as f64;
            v -= c * k * (k * theta).sin();
        }
        for (j, &s) in self.sin.iter().enumerate() {
            let k = (j + 1) as f64;
            v += s * k * (k * theta).cos();
        }
        v
    }

    pub fn second_derivative(&self, theta: f64) -> f64 {
        let mut v = 0.0;
        for (k, &c) in self.cos.iter().enumerate().skip(1) {
            let k = k as f64;
            v -= c * k * k * (k * theta).cos();
        }
        for (j, &s) in self.sin.iter().enumerate() {
            let k = (j + 1) as f64;
            v -= s * k * k * (k * theta).sin();
        }
        v
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            cos: self.cos.iter().map(|c| c * factor).collect(),
            sin: self.sin.iter().map(|s| s * factor).collect(),
        }
    }

    pub fn shifted(&self, delta: f64) -> Self {
        let mut out = self.clone();
        if out.cos.is_empty() {
            out.cos.push(0.0);
        }
        out.cos[0] += delta;
        out
    }

    /// Samples at `nodes`.
    pub fn sample(&self, nodes: &[f64]) -> Vec<f64> {
        nodes.iter().map(|&t| self.eval(t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn derivatives_match_closed_form() {
        let p = TrigPoly::new(vec![1.0, 0.5, 0.0, -0.25], vec![0.3, 0.0, 0.1]);
        let h = 1e-5;
        for &t in &[0.0, 0.3, 1.7, 2.0 * PI - 0.1] {
            let fd = (p.eval(t + h) - p.eval(t - h)) / (2.0 * h);
            assert!((fd - p.derivative(t)).abs() < 1e-8);
            let fd2 = (p.derivative(t + h) - p.derivative(t - h)) / (2.0 * h);
            assert!((fd2 - p.second_derivative(t)).abs() < 1e-8);
        }
        assert_eq!(p.degree(), 3);
    }

    #[test]
    fn constant_poly() {
        let p = TrigPoly::constant(2.5);
        assert!(p.is_constant());
        assert_eq!(p.eval(1.234), 2.5);
        assert_eq!(p.derivative(0.7), 0.0);
        assert_eq!(p.degree(), 0);
    }
}
