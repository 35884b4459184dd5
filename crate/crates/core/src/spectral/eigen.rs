//! Lowest eigenpairs of `D u = λ J u`.
//!
//! Each factor problem is solved on the `J`-orthogonal complement of the
//! constants, densely for small factors and by shift-inverted block subspace
//! iteration otherwise; product spectra are then assembled from factor eigenpairs,
//! since the forms separate.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::forms::{dot, symmetrize, QuadraticForms};
use crate::error::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
const MAX_ITERATIONS: usize = 1000;
/// Factor problems with a smaller complement are solved densely.
pub const DENSE_BELOW: usize = 512;

/// Lowest eigenvalues with J-orthonormal eigenfunctions.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResult {
    pub time: f64,
    pub eigenvalues: Vec<f64>,
    /// Node samples, normalized so that `J(u_i, u_i) = 1`.
    pub eigenfunctions: Vec<Vec<f64>>,
    /// Basis coefficients of the same functions.
    pub coefficients: Vec<Vec<f64>>,
    /// Relative residuals `‖Dc - λJc‖ / (‖Dc‖ + |λ|‖Jc‖)`.
    pub residuals: Vec<f64>,
}

/// Serialized form of a [`SpectralResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRecord {
    pub t: f64,
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    pub normalization: String,
}

impl SpectralResult {
    pub fn lambda(&self, k: usize) -> f64 {
        self.eigenvalues[k]
    }

    pub fn record(&self) -> SpectrumRecord {
        SpectrumRecord {
            t: self.time,
            eigenvalues: self.eigenvalues.clone(),
            residuals: self.residuals.clone(),
            normalization: "weighted-L2".into(),
        }
    }
}

/// Computes `λ_0 = 0 ≤ λ_1 ≤ … ≤ λ_k` and eigenfunctions.
pub fn lowest_eigenpairs(forms: &QuadraticForms<'_>, k: usize, tol: f64) -> Result<SpectralResult> {
    let dim = forms.dim();
    if k == 0 || k >= dim {
        return Err(Error::Usage(format!(
            "requested k = {k} eigenpairs beyond λ_0 but discrete dimension is {dim}"
        )));
    }
    let count = k + 1;
    let factor_pairs = forms
        .factors()
        .iter()
        .map(|f| lowest_generalized(&f.stiffness, &f.mass, count.min(f.size()), tol))
        .collect::<Result<Vec<_>>>()?;

    // Minkowski sum of factor spectra, ties broken by multi-index order.
    let mut combos: Vec<(f64, Vec<usize>)> = vec![(0.0, Vec::new())];
    for (vals, _) in &factor_pairs {
        let mut next = Vec::with_capacity(combos.len() * vals.len());
        for (s, idx) in &combos {
            for (j, v) in vals.iter().enumerate() {
                let mut idx = idx.clone();
                idx.push(j);
                next.push((s + v, idx));
            }
        }
        next.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        next.truncate(count);
        combos = next;
    }

    let norm = forms.scale().sqrt();
    let mut result = SpectralResult {
        time: forms.manifold().time(),
        eigenvalues: Vec::with_capacity(count),
        eigenfunctions: Vec::with_capacity(count),
        coefficients: Vec::with_capacity(count),
        residuals: Vec::with_capacity(count),
    };
    for (lambda, idx) in combos {
        let mut coeff = vec![1.0 / norm];
        for (a, &j) in idx.iter().enumerate() {
            let v = factor_pairs[a].1.column(j);
            coeff = coeff.iter().flat_map(|c| v.iter().map(move |x| c * x)).collect();
        }
        if let Some(pos) = coeff
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
        {
            if coeff[pos] < 0.0 {
                coeff.iter_mut().for_each(|c| *c = -*c);
            }
        }
        let dc = forms.apply_stiffness(&coeff);
        let jc = forms.apply_mass(&coeff);
        result.residuals.push(relative_residual(&dc, &jc, lambda));
        result.eigenfunctions.push(forms.synthesize(&coeff));
        result.coefficients.push(coeff);
        result.eigenvalues.push(lambda);
    }
    Ok(result)
}

fn relative_residual(kx: &[f64], mx: &[f64], lambda: f64) -> f64 {
    let r: f64 = kx
        .iter()
        .zip(mx)
        .map(|(a, b)| (a - lambda * b).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = dot(kx, kx).sqrt() + lambda.abs() * dot(mx, mx).sqrt();
    if scale == 0.0 {
        r
    } else {
        r / scale
    }
}

/// Lowest `count` eigenpairs of `K x = λ M x` where `K` is positive
/// semidefinite with the first basis vector spanning its kernel (the
/// constants), and `M` is positive definite. Columns of the returned matrix
/// are M-orthonormal.
pub fn lowest_generalized(
    stiffness: &DMatrix<f64>,
    mass: &DMatrix<f64>,
    count: usize,
    tol: f64,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let m = mass.nrows();
    if count == 0 || count > m {
        return Err(Error::Usage(format!("cannot extract {count} eigenpairs from dimension {m}")));
    }
    let mut z = DVector::zeros(m);
    z[0] = 1.0 / mass[(0, 0)].sqrt();
    let mut values = vec![0.0];
    let mut vectors = DMatrix::zeros(m, count);
    vectors.set_column(0, &z);
    let want = count - 1;
    if want == 0 {
        return Ok((values, vectors));
    }

    let (ritz_vals, ritz_vecs) = if m - 1 < DENSE_BELOW {
        dense_complement(stiffness, mass)?
    } else {
        subspace_iteration(stiffness, mass, want, tol)?
    };

    for (j, v) in ritz_vals.iter().take(want).enumerate() {
        values.push(v.max(0.0));
        vectors.set_column(j + 1, &ritz_vecs.column(j));
    }
    Ok((values, vectors))
}

/// Shift-inverted block subspace iteration for the lowest `want` pairs off
/// the constants. `pub` so the iterative path can be exercised on small
/// problems.
pub fn subspace_iteration(
    stiffness: &DMatrix<f64>,
    mass: &DMatrix<f64>,
    want: usize,
    tol: f64,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let m = mass.nrows();
    if want == 0 || want >= m {
        return Err(Error::Usage(format!("cannot extract {want} pairs from dimension {m}")));
    }
    let mut z = DVector::zeros(m);
    z[0] = 1.0 / mass[(0, 0)].sqrt();
    let block = (m - 1).min(2 * want + 4);
    let mz = mass * &z;
    let deflate = |x: &mut DMatrix<f64>| {
        for mut col in x.column_iter_mut() {
            let c = mz.dot(&col);
            col.axpy(-c, &z, 1.0);
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_d1f7);
    let sigma = shift(stiffness, mass);
    let shifted = stiffness + mass * sigma;
    let chol = Cholesky::new(shifted).ok_or_else(|| {
        Error::Assembly("shifted stiffness is not positive definite".into())
    })?;
    let mut x = DMatrix::from_fn(m, block, |_, _| rng.gen::<f64>() - 0.5);
    deflate(&mut x);
    m_orthonormalize(&mut x, mass, &mut rng);
    let mut best = f64::INFINITY;
    let mut converged = None;
    for _ in 0..MAX_ITERATIONS {
        let mut y = chol.solve(&(mass * &x));
        deflate(&mut y);
        m_orthonormalize(&mut y, mass, &mut rng);
        let (vals, vecs) = rayleigh_ritz(stiffness, &y);
        let worst = (0..want)
            .map(|j| {
                let col = vecs.column(j).into_owned();
                let kx = stiffness * &col;
                let mx = mass * &col;
                relative_residual(kx.as_slice(), mx.as_slice(), vals[j])
            })
            .fold(0.0, f64::max);
        best = best.min(worst);
        x = vecs;
        if worst <= tol {
            converged = Some(vals);
            break;
        }
    }
    match converged {
        Some(vals) => Ok((vals, x)),
        None => Err(Error::Solver {
            iterations: MAX_ITERATIONS,
            residual: best,
        }),
    }
}

/// Full spectrum on the M-orthogonal complement of the first basis vector.
fn dense_complement(stiffness: &DMatrix<f64>, mass: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let m = mass.nrows();
    let x = DMatrix::from_fn(m, m - 1, |i, j| {
        if i == j + 1 {
            1.0
        } else if i == 0 {
            -mass[(0, j + 1)] / mass[(0, 0)]
        } else {
            0.0
        }
    });
    let kt = x.transpose() * stiffness * &x;
    let mt = x.transpose() * mass * &x;
    let (c, chol) = cholesky_reduce(&kt, &mt)
        .ok_or_else(|| Error::Assembly("mass form is not positive definite".into()))?;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..m - 1).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut y = DMatrix::zeros(m - 1, m - 1);
    for (j, &i) in order.iter().enumerate() {
        y.set_column(j, &eig.eigenvectors.column(i));
    }
    let z = chol
        .l()
        .transpose()
        .solve_upper_triangular(&y)
        .ok_or_else(|| Error::Assembly("singular mass factor".into()))?;
    Ok((vals, x * z))
}

/// Half the smallest diagonal Rayleigh quotient off the constant mode.
fn shift(stiffness: &DMatrix<f64>, mass: &DMatrix<f64>) -> f64 {
    let est = (1..stiffness.nrows())
        .map(|j| stiffness[(j, j)] / mass[(j, j)])
        .filter(|v| *v > 0.0)
        .fold(f64::INFINITY, f64::min);
    if est.is_finite() {
        0.5 * est
    } else {
        1.0
    }
}

/// Ritz pairs of `K` on the span of the M-orthonormal columns of `x`,
/// ascending.
fn rayleigh_ritz(stiffness: &DMatrix<f64>, x: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let mut h = x.transpose() * stiffness * x;
    symmetrize(&mut h);
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut v = DMatrix::zeros(eig.eigenvectors.nrows(), order.len());
    for (j, &i) in order.iter().enumerate() {
        v.set_column(j, &eig.eigenvectors.column(i));
    }
    (vals, x * v)
}

/// Modified Gram-Schmidt in the M inner product, applied twice. Columns that
/// collapse are replaced by fresh random directions.
fn m_orthonormalize(x: &mut DMatrix<f64>, mass: &DMatrix<f64>, rng: &mut ChaCha8Rng) {
    let n = x.ncols();
    for _pass in 0..2 {
        for j in 0..n {
            for attempt in 0..4 {
                let mut col = x.column(j).into_owned();
                let before = col.dot(&(mass * &col)).sqrt();
                for i in 0..j {
                    let qi = x.column(i).into_owned();
                    let c = qi.dot(&(mass * &col));
                    col.axpy(-c, &qi, 1.0);
                }
                let nrm = col.dot(&(mass * &col)).sqrt();
                if nrm > 1e-10 * before && nrm > 0.0 {
                    x.set_column(j, &(col / nrm));
                    break;
                }
                let fresh: DVector<f64> = DVector::from_fn(x.nrows(), |i, _| {
                    if i == 0 {
                        0.0
                    } else {
                        rng.gen::<f64>() - 0.5
                    }
                });
                x.set_column(j, &fresh);
                debug_assert!(attempt < 3, "gram-schmidt failed to recover a column");
            }
        }
    }
}

/// Dense reduction `L^{-1} K L^{-T}` used where a full spectrum is required.
pub(crate) fn cholesky_reduce(
    stiffness: &DMatrix<f64>,
    mass: &DMatrix<f64>,
) -> Option<(DMatrix<f64>, Cholesky<f64, Dyn>)> {
    let chol = Cholesky::new(mass.clone())?;
    let l = chol.l();
    let linv_k = l.solve_lower_triangular(stiffness)?;
    let mut c = l.solve_lower_triangular(&linv_k.transpose())?;
    symmetrize(&mut c);
    Some((c, chol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{
        discretize, product_family, round_circle_family, scaled_gaussian_family, ContinuumFactor,
        ContinuumState, Resolution, TrigPoly,
    };
    use crate::spectral::assemble_forms;

    fn spectrum(state: &ContinuumState, res: Resolution, k: usize) -> SpectralResult {
        let dm = discretize(state, res).unwrap();
        let forms = assemble_forms(&dm).unwrap();
        lowest_eigenpairs(&forms, k, DEFAULT_TOLERANCE).unwrap()
    }

    #[test]
    fn round_circle_double_eigenvalue() {
        let st = round_circle_family(1.0, 0.0).unwrap().evaluate(0.0).unwrap();
        let s = spectrum(&st, Resolution::default(), 2);
        assert!(s.eigenvalues[0].abs() < 1e-14);
        assert!((s.eigenvalues[1] - 1.0).abs() < 1e-12);
        assert!((s.eigenvalues[2] - 1.0).abs() < 1e-12);
        assert!(s.residuals.iter().all(|r| *r < 1e-10));
    }

    #[test]
    fn gaussian_hermite_ladder() {
        let st = scaled_gaussian_family(1.0, 1, 0.0).unwrap().evaluate(0.0).unwrap();
        let s = spectrum(&st, Resolution::default(), 3);
        for (m, lam) in s.eigenvalues.iter().enumerate() {
            assert!((lam - 0.5 * m as f64).abs() < 1e-12, "{m}: {lam}");
        }
        let st = scaled_gaussian_family(2.0, 1, 0.0).unwrap().evaluate(0.0).unwrap();
        let s = spectrum(&st, Resolution::default(), 1);
        assert!((s.eigenvalues[1] - 0.25).abs() < 1e-13);
    }

    #[test]
    fn eigenfunctions_are_j_orthonormal_and_signed() {
        let fam = product_family(vec![
            scaled_gaussian_family(1.0, 1, 0.0).unwrap(),
            round_circle_family(4.0, 0.0).unwrap(),
        ])
        .unwrap();
        let st = fam.evaluate(0.0).unwrap();
        let dm = discretize(&st, Resolution { circle_nodes: 32, hermite_order: 10 }).unwrap();
        let forms = assemble_forms(&dm).unwrap();
        let s = lowest_eigenpairs(&forms, 5, DEFAULT_TOLERANCE).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let jij = dm.integrate(
                    &s.eigenfunctions[i]
                        .iter()
                        .zip(&s.eigenfunctions[j])
                        .map(|(a, b)| a * b)
                        .collect::<Vec<_>>(),
                );
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((jij - expect).abs() < 1e-10, "J({i},{j}) = {jij}");
            }
            let c = &s.coefficients[i];
            let big = c.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap();
            assert!(big > 0.0);
        }
        let expect = fam.eigenvalues(0.0, 6).unwrap();
        for (a, b) in s.eigenvalues.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-11);
        }
    }

    #[test]
    fn variable_metric_circle_uses_arclength() {
        // √a = 1 + 0.3 cos θ has length 2π, so λ_m = m² with f constant.
        let sqrt_a = TrigPoly::new(vec![1.0, 0.3], vec![]);
        let a = TrigPoly::new(vec![1.0 + 0.045, 0.6, 0.045], vec![]);
        for t in [0.0, 0.4, 2.0] {
            assert!((a.eval(t) - sqrt_a.eval(t).powi(2)).abs() < 1e-14);
        }
        let st = ContinuumState::new(
            vec![ContinuumFactor::Circle { metric: a, weight: TrigPoly::constant(0.3) }],
            0.0,
            0.0,
        )
        .unwrap();
        let s = spectrum(&st, Resolution { circle_nodes: 128, ..Default::default() }, 4);
        let expect = [0.0, 1.0, 1.0, 4.0, 4.0];
        for (a, b) in s.eigenvalues.iter().zip(expect) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn iterative_path_agrees_with_dense() {
        let st = ContinuumState::new(
            vec![ContinuumFactor::Circle {
                metric: TrigPoly::new(vec![1.2, 0.3], vec![0.1]),
                weight: TrigPoly::new(vec![0.0, 0.2], vec![0.0, 0.1]),
            }],
            0.0,
            0.0,
        )
        .unwrap();
        let dm = discretize(&st, Resolution { circle_nodes: 48, ..Default::default() }).unwrap();
        let forms = assemble_forms(&dm).unwrap();
        let f = &forms.factors()[0];
        let (dv, dvec) = dense_complement(&f.stiffness, &f.mass).unwrap();
        let (iv, ivec) = subspace_iteration(&f.stiffness, &f.mass, 4, 1e-12).unwrap();
        for j in 0..4 {
            assert!((dv[j] - iv[j]).abs() < 1e-10 * dv[j], "{j}: {} vs {}", dv[j], iv[j]);
        }
        // Non-degenerate lowest pair: vectors agree up to sign.
        let overlap = (dvec.column(0).transpose() * &f.mass * ivec.column(0))[(0, 0)];
        assert!((overlap.abs() - 1.0).abs() < 1e-9, "{overlap}");
    }

    #[test]
    fn k_too_large_is_usage_error() {
        let st = scaled_gaussian_family(1.0, 1, 0.0).unwrap().evaluate(0.0).unwrap();
        let dm = discretize(&st, Resolution { hermite_order: 4, ..Default::default() }).unwrap();
        let forms = assemble_forms(&dm).unwrap();
        assert!(matches!(lowest_eigenpairs(&forms, 4, 1e-10), Err(Error::Usage(_))));
        assert!(lowest_eigenpairs(&forms, 3, 1e-10).is_ok());
    }

    #[test]
    fn record_serializes() {
        let st = round_circle_family(1.0, 0.0).unwrap().evaluate(0.0).unwrap();
        let s = spectrum(&st, Resolution { circle_nodes: 16, ..Default::default() }, 2);
        let json = serde_json::to_value(s.record()).unwrap();
        assert_eq!(json["normalization"], "weighted-L2");
        assert_eq!(json["eigenvalues"].as_array().unwrap().len(), 3);
    }
}
