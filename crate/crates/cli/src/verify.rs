//! The acceptance suite: ten criteria with pinned tolerances.

use std::f64::consts::LN_2;
use std::time::Instant;

use driftflow_core::comparison::{blowup_horizon, eigenvalue_bound, logistic_envelope, BoundCurve};
use driftflow_core::flow::{
    commutator_residual, functional_residuals, mixing_series, run_family, FlowConfig, FlowTrajectory,
};
use driftflow_core::geometry::{
    discretize, product_family, round_circle_family, scaled_gaussian_family, AnalyticFamily,
    ContinuumFactor, ContinuumState, Resolution, TrigPoly,
};
use driftflow_core::oracle::{dense_spectrum, finite_diff_time_derivative, integrate_equality_ode};
use driftflow_core::spectral::{
    assemble_forms, bochner_residual, lowest_eigenpairs, subspace_iteration, DEFAULT_TOLERANCE,
};
use driftflow_core::splitting::{detect_splitting, SplittingOutcome, SplittingTolerances};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::parse_config;
use crate::error::CliResult;
use crate::execute::simulate;

pub const SEED: u64 = 20_240_601;

/// One measured quantity against its pinned limit.
#[derive(Debug, Clone, Serialize)]
pub struct Measurement {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    /// `true` when the value must stay at or below the limit, `false` when
    /// it must reach at least the limit.
    pub upper: bool,
}

impl Measurement {
    pub fn passed(&self) -> bool {
        if self.upper {
            self.value <= self.limit
        } else {
            self.value >= self.limit
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub id: u8,
    pub title: &'static str,
    pub measurements: Vec<Measurement>,
    pub error: Option<String>,
    pub seconds: f64,
}

impl CriterionReport {
    pub fn passed(&self) -> bool {
        self.error.is_none() && !self.measurements.is_empty() && self.measurements.iter().all(Measurement::passed)
    }

    pub fn line(&self) -> String {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        let mut s = format!("criterion {:02} {status} {}", self.id, self.title);
        if let Some(e) = &self.error {
            s.push_str(&format!(" error=\"{}\"", e.replace('"', "'")));
        }
        for m in &self.measurements {
            let op = match (m.upper, m.passed()) {
                (true, true) => "<=",
                (true, false) => ">",
                (false, true) => ">=",
                (false, false) => "<",
            };
            s.push_str(&format!(" {}={:.3e}{op}{:.1e}", m.name, m.value, m.limit));
        }
        s
    }
}

struct Sheet(Vec<Measurement>);

impl Sheet {
    fn at_most(&mut self, name: impl Into<String>, value: f64, limit: f64) {
        self.0.push(Measurement { name: name.into(), value: nan_fails(value, true), limit, upper: true });
    }

    fn at_least(&mut self, name: impl Into<String>, value: f64, limit: f64) {
        self.0.push(Measurement { name: name.into(), value: nan_fails(value, false), limit, upper: false });
    }

    fn holds(&mut self, name: impl Into<String>, ok: bool) {
        self.at_least(name, if ok { 1.0 } else { 0.0 }, 1.0);
    }
}

fn nan_fails(v: f64, upper: bool) -> f64 {
    match (v.is_nan(), upper) {
        (true, true) => f64::INFINITY,
        (true, false) => f64::NEG_INFINITY,
        _ => v,
    }
}

pub const TITLES: [&str; 10] = [
    "sharpness",
    "eternal-sub-half",
    "bound-compliance",
    "evolution-identities",
    "drift-bochner",
    "commutator",
    "comparison-suite",
    "gram-schmidt-derivative",
    "splitting",
    "spectral-correctness",
];

pub fn run_criterion(id: u8) -> CriterionReport {
    let start = Instant::now();
    let mut sheet = Sheet(Vec::new());
    let result = match id {
        1 => sharpness(&mut sheet),
        2 => eternal(&mut sheet),
        3 => bound_compliance(&mut sheet),
        4 => identities(&mut sheet),
        5 => bochner(&mut sheet),
        6 => commutator(&mut sheet),
        7 => comparison(&mut sheet),
        8 => gram_schmidt(&mut sheet),
        9 => splitting(&mut sheet),
        10 => spectral(&mut sheet),
        _ => panic!("no criterion {id}"),
    };
    CriterionReport {
        id,
        title: TITLES[id as usize - 1],
        measurements: sheet.0,
        error: result.err().map(|e| e.to_string()),
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn run_all() -> Vec<CriterionReport> {
    (1..=10).map(run_criterion).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 { 0.0 } else { (a - b).abs() / s }
}

fn sharp_lambda(t: f64) -> f64 {
    let l0 = 0.25;
    let e = t.exp();
    l0 / (2.0 * l0 * (1.0 - e) + e)
}

fn sharpness(s: &mut Sheet) -> CliResult<()> {
    let start = Instant::now();
    let fam = scaled_gaussian_family(2.0, 1, 0.0)?;
    let cfg = FlowConfig { horizon: LN_2, eigen_count: 1, ..Default::default() };
    let traj = run_family(&fam, Resolution::default(), &cfg)?;
    let analytic = traj.analytic.as_ref().expect("family run");
    let (mut a_err, mut g_err) = (0.0f64, 0.0f64);
    for (i, t) in traj.times().into_iter().enumerate() {
        a_err = a_err.max(rel(analytic[i][1], sharp_lambda(t)));
        g_err = g_err.max(rel(traj.spectra[i].eigenvalues[1], sharp_lambda(t)));
    }
    s.at_most("analytic_rel", a_err, 1e-8);
    s.at_most("galerkin_rel", g_err, 1e-6);
    s.at_most("seconds", start.elapsed().as_secs_f64(), 5.0);

    // The same scenario through the scenario runner: λ₁ column against the
    // bound column of the emitted CSV.
    let config = parse_config(
        "name = \"sharpness\"\n[geometry]\nkind = \"scaled_gaussian\"\nu0 = 2.0\n\
         [flow]\nhorizon = 0.6931471805599453\neigen_count = 1\noutput_every = 10\n",
    )?;
    let (_, art) = simulate(&config)?;
    let mut lines = art.trajectory_csv.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name);
    let (Some(li), Some(bi)) = (col("lambda_1"), col("bound_1")) else {
        s.holds("csv_columns", false);
        return Ok(());
    };
    let mut csv_err = 0.0f64;
    for line in lines {
        let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap_or(f64::NAN)).collect();
        csv_err = csv_err.max(nan_fails(rel(cells[li], cells[bi]), true));
    }
    s.at_most("csv_lambda_vs_bound", csv_err, 1e-8);
    Ok(())
}

fn eternal(s: &mut Sheet) -> CliResult<()> {
    let fam = scaled_gaussian_family(2.0, 1, 0.0)?;
    let cfg = FlowConfig { horizon: 5.0, eigen_count: 1, output_every: 10, ..Default::default() };
    let traj = run_family(&fam, Resolution::default(), &cfg)?;
    let worst = traj.lambda(1).into_iter().fold(f64::NEG_INFINITY, f64::max);
    s.at_least("margin", 0.5 - worst, 1e-3);
    s.at_least("horizon", traj.t1(), 5.0 - 1e-12);
    Ok(())
}

fn bound_excess(traj: &FlowTrajectory) -> CliResult<f64> {
    let k = traj.config.eigen_count;
    let t0 = traj.t0();
    let mut worst = f64::NEG_INFINITY;
    for j in 1..=k {
        let curve = BoundCurve::new(traj.spectra[0].eigenvalues[j])?;
        for (i, t) in traj.times().into_iter().enumerate() {
            if curve.is_valid_at(t - t0) {
                worst = worst.max(traj.spectra[i].eigenvalues[j] - curve.eval(t - t0)?);
            }
        }
    }
    Ok(worst)
}

fn bound_compliance(s: &mut Sheet) -> CliResult<()> {
    let start = Instant::now();
    let cases: Vec<(String, AnalyticFamily, f64, usize)> = vec![
        ("sg0.5".into(), scaled_gaussian_family(0.5, 1, 0.0)?, 0.6, 3),
        ("sg1".into(), scaled_gaussian_family(1.0, 1, 0.0)?, 1.0, 3),
        ("sg2".into(), scaled_gaussian_family(2.0, 1, 0.0)?, 1.0, 3),
        ("rc0.25".into(), round_circle_family(0.25, 0.0)?, 1.0, 4),
        ("rc1".into(), round_circle_family(1.0, 0.0)?, 1.0, 4),
        ("rc4".into(), round_circle_family(4.0, 0.0)?, 1.0, 4),
        (
            "product".into(),
            product_family(vec![scaled_gaussian_family(2.0, 1, 0.0)?, round_circle_family(1.0, 0.0)?])?,
            0.5,
            4,
        ),
    ];
    for (name, fam, horizon, k) in cases {
        let res = if name == "product" {
            Resolution { circle_nodes: 32, hermite_order: 12 }
        } else {
            Resolution::default()
        };
        let cfg = FlowConfig { horizon, eigen_count: k, output_every: 10, ..Default::default() };
        let traj = run_family(&fam, res, &cfg)?;
        s.at_most(format!("{name}_excess"), bound_excess(&traj)?, 1e-6);
        if name == "rc1" {
            let mut margin = f64::INFINITY;
            for (i, t) in traj.times().into_iter().enumerate() {
                if t > 0.0 && t <= 0.5 + 1e-12 {
                    margin = margin.min(eigenvalue_bound(1.0, t)? - traj.spectra[i].eigenvalues[1]);
                }
            }
            s.at_least("rc1_strict_margin", margin, f64::MIN_POSITIVE);
        }
    }
    s.at_most("seconds", start.elapsed().as_secs_f64(), 30.0);
    Ok(())
}

fn identities(s: &mut Sheet) -> CliResult<()> {
    let fam = round_circle_family(1.0, 0.0)?;
    let cfg = FlowConfig { dt: 1e-3, horizon: 0.3, eigen_count: 2, tracked_scalars: 2, ..Default::default() };
    let traj = run_family(&fam, Resolution::default(), &cfg)?;
    let r = functional_residuals(&traj)?;
    s.at_most("pairing_rel", r.pairing, 1e-4);
    s.at_most("norm_rel", r.norm, 1e-4);
    s.at_most("energy_increase_rel", r.energy_increase, 1e-8);
    s.at_most("volume_drift_rel", r.volume_drift, 1e-6);
    s.at_most("mean_drift", r.mean_drift, 1e-9);
    Ok(())
}

fn random_trig(rng: &mut ChaCha8Rng, degree: usize, amp: f64) -> TrigPoly {
    let cos = (0..=degree).map(|_| rng.gen_range(-amp..amp)).collect();
    let sin = (0..=degree).map(|m| if m == 0 { 0.0 } else { rng.gen_range(-amp..amp) }).collect();
    TrigPoly::new(cos, sin)
}

fn bochner(s: &mut Sheet) -> CliResult<()> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let mut metric = random_trig(&mut rng, 2, 0.15);
        metric.cos[0] = rng.gen_range(0.5..2.0);
        let fdeg = rng.gen_range(0..=3);
        let weight = random_trig(&mut rng, fdeg, 0.5);
        let udeg = rng.gen_range(1..=5);
        let u = random_trig(&mut rng, udeg, 1.0);
        let st = ContinuumState::new(vec![ContinuumFactor::Circle { metric, weight }], 0.0, 0.0)?;
        let dm = discretize(&st, Resolution { circle_nodes: 256, ..Default::default() })?;
        let field = dm.sample(|c| u.eval(c[0]));
        worst = worst.max(bochner_residual(&field, &dm)?.relative());
    }
    s.at_most("worst_rel", worst, 1e-8);
    s.at_most("seconds", start.elapsed().as_secs_f64(), 5.0);
    Ok(())
}

fn commutator(s: &mut Sheet) -> CliResult<()> {
    let fam = scaled_gaussian_family(1.0, 1, 0.0)?;
    let cfg = FlowConfig { horizon: 0.2, eigen_count: 1, tracked_scalars: 1, output_every: 20, ..Default::default() };
    let traj = run_family(&fam, Resolution::default(), &cfg)?;
    let x = traj.states[0].manifold().sample(|c| c[0]);
    let r = commutator_residual(&x, &traj, traj.len() / 2)?;
    s.at_most("static_soliton_abs", r.absolute, 1e-12);

    let fam = round_circle_family(1.0, 0.0)?;
    let cfg = FlowConfig { dt: 1e-3, horizon: 0.3, eigen_count: 1, ..Default::default() };
    let traj = run_family(&fam, Resolution::default(), &cfg)?;
    let c = traj.states[0].manifold().sample(|c| c[0].cos());
    let mut worst = 0.0f64;
    for i in 1..traj.len() - 1 {
        worst = worst.max(commutator_residual(&c, &traj, i)?.relative());
    }
    s.at_most("round_circle_cos_rel", worst, 1e-5);
    Ok(())
}

fn comparison(s: &mut Sheet) -> CliResult<()> {
    let lambdas = [0.05, 0.1, 0.25, 0.4, 0.5, 0.6, 0.75, 1.0, 2.0, 5.0];
    let times = [0.01, 0.05, 0.1, 0.3, 0.7, 1.0, 2.0];
    let mut ode = 0.0f64;
    let mut semigroup = 0.0f64;
    let mut cases = [false; 3];
    for &l in &lambdas {
        let h = blowup_horizon(l);
        cases[if l < 0.5 { 0 } else if l == 0.5 { 1 } else { 2 }] = true;
        for &t in times.iter().filter(|&&t| t < 0.9 * h) {
            let b = eigenvalue_bound(l, t)?;
            ode = ode.max(rel(b, integrate_equality_ode(l, t, 1e-4)?));
            for &t1 in times.iter().filter(|&&t1| t1 < t) {
                let two = eigenvalue_bound(eigenvalue_bound(l, t1)?, t - t1)?;
                semigroup = semigroup.max(rel(two, b));
            }
        }
    }
    s.holds("all_three_cases", cases.iter().all(|&c| c));
    s.at_most("bound_vs_ode_rel", ode, 1e-10);
    s.at_most("semigroup_rel", semigroup, 1e-12);
    s.at_most("blowup_horizon_1", (blowup_horizon(1.0) - LN_2).abs(), 1e-12);
    let mut logistic = 0.0f64;
    for &t in &times {
        logistic = logistic.max((logistic_envelope(1.0, t)? - 1.0).abs());
    }
    s.at_most("logistic_at_one", logistic, 0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut excess = f64::NEG_INFINITY;
    for _ in 0..100 {
        let h0: f64 = if rng.gen_bool(0.1) { 1.0 } else { rng.gen_range(0.0..1.0) };
        let (a, b, w) = (rng.gen_range(0.0..0.5), rng.gen_range(0.0..0.5), rng.gen_range(0.5..6.0));
        let r = move |t: f64| a + b * (w * t).sin().powi(2);
        let rhs = |t: f64, h: f64| h * (h - 1.0) - r(t);
        let dt = 1e-3;
        let mut h = h0;
        for i in 0..3000 {
            let t = i as f64 * dt;
            let k1 = rhs(t, h);
            let k2 = rhs(t + 0.5 * dt, h + 0.5 * dt * k1);
            let k3 = rhs(t + 0.5 * dt, h + 0.5 * dt * k2);
            let k4 = rhs(t + dt, h + dt * k3);
            h += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            excess = excess.max(h - logistic_envelope(h0, t + dt)?);
        }
    }
    s.at_most("rk4_over_envelope", excess, 1e-9);
    Ok(())
}

fn gram_schmidt(s: &mut Sheet) -> CliResult<()> {
    let a11_slope = |u0: f64| -> CliResult<f64> {
        let fam = scaled_gaussian_family(u0, 1, 0.0)?;
        let cfg = FlowConfig { horizon: 0.01, eigen_count: 1, tracked_scalars: 1, ..Default::default() };
        let traj = run_family(&fam, Resolution::default(), &cfg)?;
        let a: Vec<f64> = mixing_series(&traj)?.iter().map(|m| m[(0, 0)]).collect();
        Ok(finite_diff_time_derivative(&a, traj.output_dt)?[0])
    };
    s.at_most("sharp_example_dev", (a11_slope(2.0)? + 0.25).abs(), 1e-4);
    s.at_most("static_soliton_dev", a11_slope(1.0)?.abs(), 1e-10);
    Ok(())
}

fn splitting(s: &mut Sheet) -> CliResult<()> {
    let fam = product_family(vec![scaled_gaussian_family(1.0, 1, 0.0)?, round_circle_family(0.25, 0.0)?])?;
    let cfg = FlowConfig { horizon: 0.2, eigen_count: 2, output_every: 20, ..Default::default() };
    let traj = run_family(&fam, Resolution { circle_nodes: 32, hermite_order: 12 }, &cfg)?;
    let out = detect_splitting(&traj, traj.t0(), traj.t1(), &SplittingTolerances::analytic())?;
    match out.certificate() {
        Some(c) => {
            s.holds("certificate_valid", c.valid);
            let l = c.record.lambda_k_t0.unwrap_or(f64::NAN);
            s.at_most("lambda_k_minus_half", (l - 0.5).abs(), 1e-8);
            let r = &c.residuals;
            s.at_most("hessian_energy", r.hessian_energy.iter().copied().fold(0.0, f64::max), 1e-10);
            s.at_most("gradient_norm", r.gradient_norm.iter().copied().fold(0.0, f64::max), 1e-8);
            s.at_most("f_decomposition", r.f_decomposition, 1e-8);
        }
        None => s.holds("certificate_valid", false),
    }

    let cfg = FlowConfig { horizon: 0.1, eigen_count: 1, output_every: 20, ..Default::default() };
    for (name, fam) in [
        ("control_sg2", scaled_gaussian_family(2.0, 1, 0.0)?),
        ("control_rc4", round_circle_family(4.0, 0.0)?),
    ] {
        let traj = run_family(&fam, Resolution::default(), &cfg)?;
        let out = detect_splitting(&traj, traj.t0(), traj.t1(), &SplittingTolerances::analytic())?;
        s.holds(name, matches!(out, SplittingOutcome::HypothesisFailure(_)));
    }

    let config = parse_config(
        "name = \"split\"\n[geometry]\nkind = \"product\"\n\
         [[geometry.factors]]\nkind = \"scaled_gaussian\"\nu0 = 1.0\n\
         [[geometry.factors]]\nkind = \"round_circle\"\na0 = 0.25\n\
         [resolution]\ncircle_nodes = 32\nhermite_order = 12\n\
         [flow]\nhorizon = 0.2\neigen_count = 2\noutput_every = 20\nmode_cutoff = 16\n\
         [verify]\nsplitting = true\n",
    )?;
    let (_, art) = simulate(&config)?;
    s.holds("runner_certificate_valid", art.certificate.as_ref().is_some_and(SplittingOutcome::is_valid));
    Ok(())
}

fn spectral(s: &mut Sheet) -> CliResult<()> {
    let mut gauss = 0.0f64;
    for a in [0.25, 0.5, 1.0, 2.0, 4.0] {
        let st = ContinuumState::new(vec![ContinuumFactor::Gaussian { scale: a, offset: 0.0 }], 0.0, 0.0)?;
        let dm = discretize(&st, Resolution::default())?;
        let spec = lowest_eigenpairs(&assemble_forms(&dm)?, 6, DEFAULT_TOLERANCE)?;
        for (m, l) in spec.eigenvalues.iter().enumerate() {
            let want = m as f64 / (2.0 * a);
            gauss = gauss.max((l - want).abs() / want.max(1.0));
        }
    }
    s.at_most("gaussian_multiples", gauss, 1e-12);

    let mut vs_dense = 0.0f64;
    let mut vs_formula = 0.0f64;
    let res = Resolution { circle_nodes: 64, ..Default::default() };
    for a in [0.25, 1.0, 4.0] {
        let st = round_circle_family(a, 0.0)?.evaluate(0.0)?;
        let dm = discretize(&st, res)?;
        let forms = assemble_forms(&dm)?;
        let spec = lowest_eigenpairs(&forms, 6, DEFAULT_TOLERANCE)?;
        let dense = dense_spectrum(&forms)?;
        for (m, l) in spec.eigenvalues.iter().enumerate().skip(1) {
            let mode = m.div_ceil(2) as f64;
            vs_formula = vs_formula.max(rel(*l, mode * mode / a));
            vs_dense = vs_dense.max(rel(*l, dense[m]));
        }
    }
    let st = ContinuumState::new(
        vec![ContinuumFactor::Circle {
            metric: TrigPoly::new(vec![1.3, 0.2], vec![0.0, -0.1]),
            weight: TrigPoly::new(vec![0.1, 0.3, 0.05], vec![0.0, 0.2]),
        }],
        0.0,
        0.0,
    )?;
    let dm = discretize(&st, res)?;
    let forms = assemble_forms(&dm)?;
    let spec = lowest_eigenpairs(&forms, 6, DEFAULT_TOLERANCE)?;
    let dense = dense_spectrum(&forms)?;
    for (m, l) in spec.eigenvalues.iter().enumerate().skip(1) {
        vs_dense = vs_dense.max(rel(*l, dense[m]));
    }
    let f = &forms.factors()[0];
    let (iter_vals, _) = subspace_iteration(&f.stiffness, &f.mass, 6, DEFAULT_TOLERANCE)?;
    let iterative = iter_vals[..6]
        .iter()
        .zip(&dense[1..])
        .map(|(a, b)| rel(*a, *b))
        .fold(0.0, f64::max);
    s.at_most("circle_iterative_vs_dense", iterative, 1e-10);
    s.at_most("circle_vs_formula", vs_formula, 1e-10);
    s.at_most("circle_vs_dense", vs_dense, 1e-10);
    Ok(())
}
