use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::DiscreteWeightedManifold;

/// Stiffness and mass matrices of one factor in its Galerkin basis
/// (trigonometric on a circle, normalized Hermite on a Gaussian line).
#[derive(Debug, Clone)]
pub struct FactorForms {
    pub stiffness: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    /// Basis functions sampled at the factor nodes (nodes × basis).
    pub basis: DMatrix<f64>,
}

impl FactorForms {
    pub fn size(&self) -> usize {
        self.mass.nrows()
    }
}

/// The weighted Dirichlet form `D(u,v) = ∫⟨∇u,∇v⟩e^{-f}dv` and mass form
/// `J(u,v) = ∫uv e^{-f}dv` of a product manifold.
///
/// Both separate over factors: `J = c ⊗_a J_a` and
/// `D = c Σ_a J_0 ⊗ … ⊗ D_a ⊗ … ⊗ J_{d-1}` with `c = e^{-constant}`.
#[derive(Debug, Clone)]
pub struct QuadraticForms<'a> {
    manifold: &'a DiscreteWeightedManifold,
    factors: Vec<FactorForms>,
    scale: f64,
}

pub fn assemble_forms(dm: &DiscreteWeightedManifold) -> Result<QuadraticForms<'_>> {
    let mut factors = Vec::with_capacity(dm.dimension());
    for (a, axis) in dm.grid().axes().iter().enumerate() {
        let p = dm.profile(a);
        if let Some((j, &g)) = p.metric.iter().enumerate().find(|(_, &g)| !(g > 0.0)) {
            return Err(Error::Assembly(format!(
                "degenerate metric sample {g} at node {j} of axis {a}"
            )));
        }
        let (b, db) = axis.basis();
        let mass_w = DVector::from_column_slice(&p.measure);
        let stiff_w = DVector::from_iterator(
            p.measure.len(),
            p.measure.iter().zip(&p.metric).map(|(m, g)| m / g),
        );
        let mass = weighted_gram(&b, &mass_w);
        let stiffness = weighted_gram(&db, &stiff_w);
        factors.push(FactorForms {
            stiffness,
            mass,
            basis: b,
        });
    }
    Ok(QuadraticForms {
        manifold: dm,
        factors,
        scale: (-dm.geometry().constant).exp(),
    })
}

fn weighted_gram(b: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut wb = b.clone();
    for (mut row, &wj) in wb.row_iter_mut().zip(w.iter()) {
        row *= wj;
    }
    let mut g = b.transpose() * wb;
    symmetrize(&mut g);
    g
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Applies `mats[a]` along axis `a` of a row-major tensor of shape
/// `(mats[0].ncols(), …)`, returning shape `(mats[0].nrows(), …)`.
pub fn kron_apply(mats: &[&DMatrix<f64>], x: &[f64]) -> Vec<f64> {
    let mut shape: Vec<usize> = mats.iter().map(|m| m.ncols()).collect();
    let mut cur = x.to_vec();
    for (a, m) in mats.iter().enumerate() {
        let n_in = shape[a];
        let n_out = m.nrows();
        let inner: usize = shape[a + 1..].iter().product();
        let outer: usize = shape[..a].iter().product();
        let mut next = vec![0.0; outer * n_out * inner];
        for o in 0..outer {
            for i in 0..inner {
                for r in 0..n_out {
                    let mut s = 0.0;
                    for c in 0..n_in {
                        s += m[(r, c)] * cur[o * n_in * inner + c * inner + i];
                    }
                    next[o * n_out * inner + r * inner + i] = s;
                }
            }
        }
        shape[a] = n_out;
        cur = next;
    }
    cur
}

impl<'a> QuadraticForms<'a> {
    pub fn manifold(&self) -> &'a DiscreteWeightedManifold {
        self.manifold
    }

    pub fn factors(&self) -> &[FactorForms] {
        &self.factors
    }

    /// `e^{-constant}` multiplying every product form.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn dim(&self) -> usize {
        self.factors.iter().map(FactorForms::size).product()
    }

    pub fn apply_mass(&self, c: &[f64]) -> Vec<f64> {
        let mats: Vec<&DMatrix<f64>> = self.factors.iter().map(|f| &f.mass).collect();
        kron_apply(&mats, c).into_iter().map(|v| v * self.scale).collect()
    }

    pub fn apply_stiffness(&self, c: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; c.len()];
        for a in 0..self.factors.len() {
            let mats: Vec<&DMatrix<f64>> = self
                .factors
                .iter()
                .enumerate()
                .map(|(b, f)| if a == b { &f.stiffness } else { &f.mass })
                .collect();
            for (o, v) in out.iter_mut().zip(kron_apply(&mats, c)) {
                *o += v * self.scale;
            }
        }
        out
    }

    /// Node samples of the function with basis coefficients `c`.
    pub fn synthesize(&self, c: &[f64]) -> Vec<f64> {
        let mats: Vec<&DMatrix<f64>> = self.factors.iter().map(|f| &f.basis).collect();
        kron_apply(&mats, c)
    }

    /// `J(c, c')` on coefficient vectors.
    pub fn mass_pairing(&self, c1: &[f64], c2: &[f64]) -> f64 {
        dot(c1, &self.apply_mass(c2))
    }

    pub fn stiffness_pairing(&self, c1: &[f64], c2: &[f64]) -> f64 {
        dot(c1, &self.apply_stiffness(c2))
    }

    /// Dense Kronecker-expanded `(D, J)`; refuses dimensions above `limit`.
    pub fn full_matrices(&self, limit: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let n = self.dim();
        if n > limit {
            return Err(Error::Usage(format!(
                "dense expansion of dimension {n} exceeds limit {limit}"
            )));
        }
        let mut mass = DMatrix::from_element(1, 1, self.scale);
        for f in &self.factors {
            mass = mass.kronecker(&f.mass);
        }
        let mut stiff = DMatrix::zeros(n, n);
        for a in 0..self.factors.len() {
            let mut term = DMatrix::from_element(1, 1, self.scale);
            for (b, f) in self.factors.iter().enumerate() {
                term = term.kronecker(if a == b { &f.stiffness } else { &f.mass });
            }
            stiff += term;
        }
        Ok((stiff, mass))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
