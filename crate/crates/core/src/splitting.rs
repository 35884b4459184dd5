//! Numerical certificates for the splitting rigidity: when `λ_k(t₀) = ½` and
//! `λ₁(t₁) ≥ ½`, the `λ = ½` eigenfunctions are stationary linear
//! coordinates and the state is a product with a Gaussian `ℝ^k` factor.
//!
//! The certificate checks measurable consequences (vanishing Hessians,
//! orthonormal parallel gradients, the weight decomposition and the factor
//! flow equations) rather than constructing the quotient factor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowState, FlowTrajectory};
use crate::geometry::DiscreteWeightedManifold;
use crate::spectral::{drift_laplacian, grad_dot, gradient, hessian_norm_sq};

/// Half-width of the window around `½` that defines the eigencluster.
/// Fixed so that the cluster size never depends on the tolerances.
pub const CLUSTER_WINDOW: f64 = 1e-3;

/// An axis counts as a split axis when it carries more than this share of
/// some direction's Dirichlet energy.
const SPLIT_SHARE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplittingTolerances {
    pub eigenvalue: f64,
    pub hessian_energy: f64,
    /// Gradient norms and pairwise gradient products.
    pub gradient: f64,
    /// Weight decomposition and metric block.
    pub decomposition: f64,
    /// Factor flow equations.
    pub equations: f64,
    pub stationarity: f64,
}

impl Default for SplittingTolerances {
    fn default() -> Self {
        Self::analytic()
    }
}

impl SplittingTolerances {
    /// For runs started from closed-form families.
    pub fn analytic() -> Self {
        Self {
            eigenvalue: 1e-8,
            hessian_energy: 1e-10,
            gradient: 1e-8,
            decomposition: 1e-8,
            equations: 1e-8,
            stationarity: 1e-8,
        }
    }

    /// For runs from general initial data.
    pub fn galerkin() -> Self {
        Self {
            eigenvalue: 1e-5,
            hessian_energy: 1e-6,
            gradient: 1e-5,
            decomposition: 1e-5,
            equations: 1e-5,
            stationarity: 1e-5,
        }
    }

    pub fn for_trajectory(traj: &FlowTrajectory) -> Self {
        if traj.analytic.is_some() {
            Self::analytic()
        } else {
            Self::galerkin()
        }
    }

    /// Every tolerance multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            eigenvalue: self.eigenvalue * c,
            hessian_energy: self.hessian_energy * c,
            gradient: self.gradient * c,
            decomposition: self.decomposition * c,
            equations: self.equations * c,
            stationarity: self.stationarity * c,
        }
    }
}

/// The spectral data the hypotheses are read from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisRecord {
    pub t0: f64,
    pub t1: f64,
    /// Size of the `½` cluster at `t₀` (0 if there is none).
    pub k: usize,
    /// `λ_k(t₀)`, or the tracked eigenvalue closest to `½` if `k = 0`.
    pub lambda_k_t0: Option<f64>,
    pub lambda_1_t1: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypothesis {
    /// `λ_k(t₀) = ½` for some `k ≥ 1`.
    LambdaKAtHalf,
    /// `λ₁(t₁) ≥ ½`.
    Lambda1AtT1,
}

impl Hypothesis {
    pub fn describe(&self) -> &'static str {
        match self {
            Hypothesis::LambdaKAtHalf => "lambda_k(t0) = 1/2",
            Hypothesis::Lambda1AtT1 => "lambda_1(t1) >= 1/2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisFailure {
    pub violated: Hypothesis,
    pub description: String,
    pub record: HypothesisRecord,
    pub tolerances: SplittingTolerances,
}

/// Residuals of a certificate; every entry is nonnegative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateResiduals {
    /// `max |λ_i(t) - ½|` over the cluster and the sampled times.
    pub eigenvalue_cluster: f64,
    /// `∫ |Hess u_i|² e^{-f}` per direction.
    pub hessian_energy: Vec<f64>,
    /// `sup | |∇u_i| - 1 |` per direction.
    pub gradient_norm: Vec<f64>,
    /// Largest weighted mean of `|⟨∇u_i, ∇u_j⟩ - δ_ij|` over pairs.
    pub pairing_mean: f64,
    /// Largest pointwise `|⟨∇u_i, ∇u_j⟩ - δ_ij|`.
    pub pairing_max: f64,
    /// `sup |f - ¼Σu_i² - f_N|` with `f_N` the weighted average over the
    /// split axes.
    pub f_decomposition: f64,
    /// Largest derivative of `g - Σ du_i²` along the `∇u_i`, in units of
    /// the metric.
    pub metric_block: f64,
    /// `sup |∂_t g - (g_N - 2 Hess f_N)|` relative to `g`.
    pub flow_metric: f64,
    /// `sup |∂_t f - ((n-k)/2 - Δ f_N)|`.
    pub flow_weight: f64,
    /// `‖ℒu_i + ½u_i‖ / ‖u_i‖` per direction.
    pub stationarity: Vec<f64>,
}

impl CertificateResiduals {
    pub fn empty() -> Self {
        Self {
            eigenvalue_cluster: 0.0,
            hessian_energy: Vec::new(),
            gradient_norm: Vec::new(),
            pairing_mean: 0.0,
            pairing_max: 0.0,
            f_decomposition: 0.0,
            metric_block: 0.0,
            flow_metric: 0.0,
            flow_weight: 0.0,
            stationarity: Vec::new(),
        }
    }

    pub fn within(&self, tol: &SplittingTolerances) -> bool {
        let all = |v: &[f64], t: f64| v.iter().all(|x| *x <= t);
        self.eigenvalue_cluster <= tol.eigenvalue
            && all(&self.hessian_energy, tol.hessian_energy)
            && all(&self.gradient_norm, tol.gradient)
            && self.pairing_mean <= tol.gradient
            && self.pairing_max <= tol.gradient
            && self.f_decomposition <= tol.decomposition
            && self.metric_block <= tol.decomposition
            && self.flow_metric <= tol.equations
            && self.flow_weight <= tol.equations
            && all(&self.stationarity, tol.stationarity)
    }

    /// Entrywise maximum, used to aggregate over sampled times.
    fn merge(&mut self, other: &Self) {
        let vmax = |a: &mut Vec<f64>, b: &[f64]| {
            for (x, y) in a.iter_mut().zip(b) {
                *x = x.max(*y);
            }
        };
        self.eigenvalue_cluster = self.eigenvalue_cluster.max(other.eigenvalue_cluster);
        vmax(&mut self.hessian_energy, &other.hessian_energy);
        vmax(&mut self.gradient_norm, &other.gradient_norm);
        self.pairing_mean = self.pairing_mean.max(other.pairing_mean);
        self.pairing_max = self.pairing_max.max(other.pairing_max);
        self.f_decomposition = self.f_decomposition.max(other.f_decomposition);
        self.metric_block = self.metric_block.max(other.metric_block);
        self.flow_metric = self.flow_metric.max(other.flow_metric);
        self.flow_weight = self.flow_weight.max(other.flow_weight);
        vmax(&mut self.stationarity, &other.stationarity);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplittingCertificate {
    pub k: usize,
    pub record: HypothesisRecord,
    /// `λ₁ … λ_k` at `t₀`.
    pub eigenvalues: Vec<f64>,
    /// Node samples of the directions, scaled to unit mean gradient norm.
    pub directions: Vec<Vec<f64>>,
    pub split_axes: Vec<usize>,
    /// Output times the residuals were aggregated over.
    pub sampled_times: Vec<f64>,
    pub residuals: CertificateResiduals,
    pub tolerances: SplittingTolerances,
    pub valid: bool,
}

impl SplittingCertificate {
    /// The empty certificate; trivially valid.
    pub fn trivial(t0: f64, t1: f64, tolerances: SplittingTolerances) -> Self {
        Self {
            k: 0,
            record: HypothesisRecord {
                t0,
                t1,
                k: 0,
                lambda_k_t0: None,
                lambda_1_t1: None,
            },
            eigenvalues: Vec::new(),
            directions: Vec::new(),
            split_axes: Vec::new(),
            sampled_times: Vec::new(),
            residuals: CertificateResiduals::empty(),
            tolerances,
            valid: true,
        }
    }

    /// Re-judges the stored residuals against `tolerances`.
    pub fn with_tolerances(mut self, tolerances: SplittingTolerances) -> Self {
        self.valid = self.residuals.within(&tolerances);
        self.tolerances = tolerances;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum SplittingOutcome {
    Certificate(SplittingCertificate),
    HypothesisFailure(HypothesisFailure),
}

impl SplittingOutcome {
    pub fn is_valid(&self) -> bool {
        matches!(self, SplittingOutcome::Certificate(c) if c.valid)
    }

    pub fn certificate(&self) -> Option<&SplittingCertificate> {
        match self {
            SplittingOutcome::Certificate(c) => Some(c),
            SplittingOutcome::HypothesisFailure(_) => None,
        }
    }

    pub fn failure(&self) -> Option<&HypothesisFailure> {
        match self {
            SplittingOutcome::Certificate(_) => None,
            SplittingOutcome::HypothesisFailure(f) => Some(f),
        }
    }
}

fn locate(traj: &FlowTrajectory, t: f64) -> Result<usize> {
    if traj.is_empty() {
        return Err(Error::Usage("empty trajectory".into()));
    }
    let i = traj.index_of(t);
    let slack = 0.5 * traj.output_dt.max(0.0) + 1e-12 * t.abs().max(1.0);
    if (traj.states[i].time() - t).abs() > slack {
        return Err(Error::Usage(format!(
            "time {t} is not an output time of the trajectory [{}, {}]",
            traj.t0(),
            traj.t1()
        )));
    }
    Ok(i)
}

/// Checks the splitting hypotheses on `[t0, t1]` and, if they hold, builds a
/// certificate from the `½` eigencluster at `t0`, with residuals aggregated
/// over every output time in the interval.
pub fn detect_splitting(
    traj: &FlowTrajectory,
    t0: f64,
    t1: f64,
    tol: &SplittingTolerances,
) -> Result<SplittingOutcome> {
    if !(t0 < t1) {
        return Err(Error::Usage(format!("need t0 < t1, got {t0} and {t1}")));
    }
    let i0 = locate(traj, t0)?;
    let i1 = locate(traj, t1)?;
    if i0 >= i1 {
        return Err(Error::Usage("t0 and t1 fall on the same output time".into()));
    }
    if traj.spectra.len() != traj.states.len() {
        return Err(Error::Usage("spectra missing at some output times".into()));
    }
    let s0 = &traj.spectra[i0];
    let s1 = &traj.spectra[i1];
    if s0.eigenvalues.len() < 2 || s1.eigenvalues.len() < 2 {
        return Err(Error::Usage("spectra must track at least λ₁".into()));
    }

    let tracked = &s0.eigenvalues[1..];
    let k = tracked
        .iter()
        .rposition(|l| (l - 0.5).abs() <= CLUSTER_WINDOW)
        .map_or(0, |p| p + 1);
    let lambda_k_t0 = if k > 0 {
        tracked[k - 1]
    } else {
        tracked
            .iter()
            .copied()
            .min_by(|a, b| (a - 0.5).abs().total_cmp(&(b - 0.5).abs()))
            .unwrap_or(f64::NAN)
    };
    let record = HypothesisRecord {
        t0: traj.states[i0].time(),
        t1: traj.states[i1].time(),
        k,
        lambda_k_t0: Some(lambda_k_t0),
        lambda_1_t1: Some(s1.eigenvalues[1]),
    };
    let fail = |h: Hypothesis, record: HypothesisRecord| {
        Ok(SplittingOutcome::HypothesisFailure(HypothesisFailure {
            violated: h,
            description: h.describe().to_string(),
            record,
            tolerances: *tol,
        }))
    };
    if k == 0 || (lambda_k_t0 - 0.5).abs() > tol.eigenvalue {
        return fail(Hypothesis::LambdaKAtHalf, record);
    }
    if s1.eigenvalues[1] < 0.5 - tol.eigenvalue {
        return fail(Hypothesis::Lambda1AtT1, record);
    }

    let dm0 = traj.states[i0].manifold();
    let volume = dm0.total_volume();
    let directions: Vec<Vec<f64>> = s0.eigenfunctions[1..=k]
        .iter()
        .map(|u| {
            let energy = dm0.integrate(&grad_dot(u, u, dm0)?);
            if !(energy > 0.0) {
                return Err(Error::Degeneracy("eigenfunction with zero energy".into()));
            }
            let c = (volume / energy).sqrt();
            Ok(u.iter().map(|v| v * c).collect())
        })
        .collect::<Result<_>>()?;
    let split_axes = split_axes(&directions, dm0)?;

    let mut cert = SplittingCertificate {
        k,
        record,
        eigenvalues: tracked[..k].to_vec(),
        directions,
        split_axes,
        sampled_times: Vec::new(),
        residuals: CertificateResiduals::empty(),
        tolerances: *tol,
        valid: false,
    };
    let mut total: Option<CertificateResiduals> = None;
    for i in i0..=i1 {
        let mut r = certificate_residuals(&cert, &traj.states[i])?;
        r.eigenvalue_cluster = traj.spectra[i].eigenvalues[1..=k]
            .iter()
            .map(|l| (l - 0.5).abs())
            .fold(0.0, f64::max);
        match total.as_mut() {
            Some(t) => t.merge(&r),
            None => total = Some(r),
        }
        cert.sampled_times.push(traj.states[i].time());
    }
    cert.residuals = total.unwrap_or_else(CertificateResiduals::empty);
    cert.valid = cert.residuals.within(tol);
    Ok(SplittingOutcome::Certificate(cert))
}

fn split_axes(directions: &[Vec<f64>], dm: &DiscreteWeightedManifold) -> Result<Vec<usize>> {
    let mut axes = Vec::new();
    for a in 0..dm.dimension() {
        let inv = dm.broadcast(a, &dm.profile(a).metric);
        let mut split = false;
        for u in directions {
            let du = dm.partial(u, a);
            let share: Vec<f64> = du.iter().zip(&inv).map(|(d, g)| d * d / g).collect();
            let total = dm.integrate(&grad_dot(u, u, dm)?);
            if dm.integrate(&share) > SPLIT_SHARE * total {
                split = true;
            }
        }
        if split {
            axes.push(a);
        }
    }
    Ok(axes)
}

/// Weighted average of `field` over the split axes, broadcast back.
fn average_over(field: &[f64], axes: &[usize], dm: &DiscreteWeightedManifold) -> Vec<f64> {
    let grid = dm.grid();
    let keep: Vec<usize> = (0..dm.dimension()).filter(|a| !axes.contains(a)).collect();
    let key = |i: usize| {
        keep.iter()
            .fold(0usize, |acc, &a| acc * grid.shape()[a] + grid.coordinate_index(i, a))
    };
    let groups: usize = keep.iter().map(|&a| grid.shape()[a]).product();
    let mut num = vec![0.0; groups];
    let mut den = vec![0.0; groups];
    let m = dm.measure();
    for i in 0..dm.len() {
        num[key(i)] += field[i] * m[i];
        den[key(i)] += m[i];
    }
    (0..dm.len()).map(|i| num[key(i)] / den[key(i)]).collect()
}

fn sup(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().map(f64::abs).fold(0.0, f64::max)
}

/// Recomputes the residuals of `cert`'s directions on `state`. The
/// eigenvalue entry is left at zero; it needs the spectrum.
pub fn certificate_residuals(cert: &SplittingCertificate, state: &FlowState) -> Result<CertificateResiduals> {
    if cert.k == 0 {
        return Ok(CertificateResiduals::empty());
    }
    let dm = state.manifold();
    for u in &cert.directions {
        dm.check_field(u, "certificate direction")?;
    }
    let n = dm.dimension();
    let k = cert.directions.len();
    let volume = dm.total_volume();
    let metric: Vec<Vec<f64>> = (0..n).map(|a| dm.broadcast(a, &dm.profile(a).metric)).collect();
    let gamma: Vec<Vec<f64>> = (0..n).map(|a| dm.broadcast(a, &dm.profile(a).gamma)).collect();
    let d1: Vec<Vec<Vec<f64>>> = cert
        .directions
        .iter()
        .map(|u| (0..n).map(|a| dm.partial(u, a)).collect())
        .collect();

    let mut r = CertificateResiduals::empty();
    for u in &cert.directions {
        r.hessian_energy.push(hessian_norm_sq(u, dm)?.max(0.0));
        let g2 = grad_dot(u, u, dm)?;
        r.gradient_norm.push(sup(g2.iter().map(|v| v.max(0.0).sqrt() - 1.0)));
        let lu = drift_laplacian(u, dm)?;
        let res: Vec<f64> = lu.iter().zip(u).map(|(l, u)| (l + 0.5 * u).powi(2)).collect();
        let norm: Vec<f64> = u.iter().map(|v| v * v).collect();
        let denom = dm.integrate(&norm);
        r.stationarity.push(if denom > 0.0 {
            (dm.integrate(&res) / denom).max(0.0).sqrt()
        } else {
            0.0
        });
    }
    for i in 0..k {
        for j in i..k {
            let delta = if i == j { 1.0 } else { 0.0 };
            let dev: Vec<f64> = grad_dot(&cert.directions[i], &cert.directions[j], dm)?
                .iter()
                .map(|v| (v - delta).abs())
                .collect();
            r.pairing_max = r.pairing_max.max(sup(dev.iter().copied()));
            r.pairing_mean = r.pairing_mean.max(dm.integrate(&dev) / volume);
        }
    }

    let f = dm.weight_field();
    let fbar: Vec<f64> = (0..dm.len())
        .map(|p| f[p] - 0.25 * cert.directions.iter().map(|u| u[p] * u[p]).sum::<f64>())
        .collect();
    let f_n = average_over(&fbar, &cert.split_axes, dm);
    r.f_decomposition = sup(fbar.iter().zip(&f_n).map(|(a, b)| a - b));

    // g_N = g - Σ du_i ⊗ du_i, differentiated along each ∇u_i.
    let grads: Vec<Vec<Vec<f64>>> = cert
        .directions
        .iter()
        .map(|u| gradient(u, dm))
        .collect::<Result<_>>()?;
    for a in 0..n {
        for b in a..n {
            let block: Vec<f64> = (0..dm.len())
                .map(|p| {
                    let g = if a == b { metric[a][p] } else { 0.0 };
                    g - (0..k).map(|i| d1[i][a][p] * d1[i][b][p]).sum::<f64>()
                })
                .collect();
            let dblock: Vec<Vec<f64>> = (0..n).map(|c| dm.partial(&block, c)).collect();
            for x in &grads {
                let s = sup((0..dm.len()).map(|p| {
                    let along: f64 = (0..n).map(|c| x[c][p] * dblock[c][p]).sum();
                    along / (metric[a][p] * metric[b][p]).sqrt()
                }));
                r.metric_block = r.metric_block.max(s);
            }
        }
    }

    // ∂_t g_aa = g_aa - 2 Hess_f(a, a) compared with g_N - 2 Hess_{f_N};
    // ∂_t f = n/2 - Δf compared with (n - k)/2 - Δ f_N.
    let mut lap_gap = vec![0.5 * k as f64; dm.len()];
    for a in 0..n {
        let p = dm.profile(a);
        let hess_f: Vec<f64> = dm.broadcast(
            a,
            &(0..p.metric.len())
                .map(|j| p.weight_d2[j] - p.gamma[j] * p.weight_d1[j])
                .collect::<Vec<_>>(),
        );
        let df_n = dm.partial(&f_n, a);
        let d2f_n = dm.partial2(&f_n, a);
        let mut worst = 0.0f64;
        for q in 0..dm.len() {
            let g = metric[a][q];
            let hess_n = d2f_n[q] - gamma[a][q] * df_n[q];
            let g_n = g - (0..k).map(|i| d1[i][a][q].powi(2)).sum::<f64>();
            let rate = g - 2.0 * hess_f[q];
            worst = worst.max(((rate - (g_n - 2.0 * hess_n)) / g).abs());
            lap_gap[q] -= (hess_f[q] - hess_n) / g;
        }
        r.flow_metric = r.flow_metric.max(worst);
    }
    r.flow_weight = sup(lap_gap);
    Ok(r)
}
