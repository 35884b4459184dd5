use std::sync::OnceLock;

use driftflow_core::flow::{evolve_scalar, run_family, FlowConfig, FlowTrajectory};
use driftflow_core::geometry::{product_family, round_circle_family, scaled_gaussian_family, Resolution};
use driftflow_core::splitting::{
    certificate_residuals, detect_splitting, Hypothesis, SplittingOutcome, SplittingTolerances,
};
use driftflow_core::Error;
use proptest::prelude::*;

fn product_run() -> &'static FlowTrajectory {
    static TRAJ: OnceLock<FlowTrajectory> = OnceLock::new();
    TRAJ.get_or_init(|| {
        let fam = product_family(vec![
            scaled_gaussian_family(1.0, 1, 0.0).unwrap(),
            round_circle_family(0.25, 0.0).unwrap(),
        ])
        .unwrap();
        let cfg = FlowConfig { horizon: 0.2, eigen_count: 2, output_every: 20, ..Default::default() };
        run_family(&fam, Resolution { circle_nodes: 32, hermite_order: 12 }, &cfg).unwrap()
    })
}

#[test]
fn product_with_static_gaussian_factor_splits() {
    let traj = product_run();
    let tol = SplittingTolerances::analytic();
    let out = detect_splitting(traj, traj.t0(), traj.t1(), &tol).unwrap();
    let cert = out.certificate().expect("certificate");
    assert!(cert.valid, "{:?}", cert.residuals);
    assert_eq!(cert.k, 1);
    assert_eq!(cert.split_axes, vec![0]);
    assert_eq!(cert.sampled_times.len(), traj.len());
    let r = &cert.residuals;
    assert!(r.eigenvalue_cluster < 1e-8);
    assert!(r.hessian_energy[0] < 1e-10);
    assert!(r.gradient_norm[0] < 1e-8);
    assert!(r.f_decomposition < 1e-8);
    for v in [r.pairing_max, r.metric_block, r.flow_metric, r.flow_weight, r.stationarity[0]] {
        assert!(v < 1e-9, "{r:?}");
    }

    // The direction is ±x up to the chosen scaling.
    let dm = traj.states[0].manifold();
    let x = dm.sample(|c| c[0]);
    let dev = cert.directions[0]
        .iter()
        .zip(&x)
        .map(|(u, x)| (u.abs() - x.abs()).abs())
        .fold(0.0, f64::max);
    assert!(dev < 1e-9, "{dev}");

    // Stationarity: evolving a direction leaves it in place.
    let evolved = evolve_scalar(&cert.directions[0], traj).unwrap();
    let last = evolved.last().unwrap();
    let diff: Vec<f64> = last.iter().zip(&cert.directions[0]).map(|(a, b)| (a - b).powi(2)).collect();
    let norm: Vec<f64> = cert.directions[0].iter().map(|v| v * v).collect();
    assert!((dm.integrate(&diff) / dm.integrate(&norm)).sqrt() < 1e-8);

    // Residuals recomputed on a later state agree.
    let later = certificate_residuals(cert, traj.states.last().unwrap()).unwrap();
    assert!(later.hessian_energy[0] < 1e-10);

    let json = serde_json::to_string(&out).unwrap();
    assert!(json.contains("\"lambda_k_t0\""));
}

#[test]
fn negative_controls_fail_hypotheses() {
    let cfg = FlowConfig { horizon: 0.1, eigen_count: 1, output_every: 20, ..Default::default() };
    let tol = SplittingTolerances::analytic();

    let traj = run_family(&scaled_gaussian_family(2.0, 1, 0.0).unwrap(), Resolution::default(), &cfg).unwrap();
    match detect_splitting(&traj, traj.t0(), traj.t1(), &tol).unwrap() {
        SplittingOutcome::HypothesisFailure(f) => {
            assert_eq!(f.violated, Hypothesis::LambdaKAtHalf);
            assert!((f.record.lambda_k_t0.unwrap() - 0.25).abs() < 1e-12);
        }
        other => panic!("{other:?}"),
    }

    let traj = run_family(&round_circle_family(4.0, 0.0).unwrap(), Resolution::default(), &cfg).unwrap();
    let out = detect_splitting(&traj, traj.t0(), traj.t1(), &tol).unwrap();
    assert!(!out.is_valid());
    assert!(out.failure().is_some());
}

#[test]
fn second_eigenvalue_at_half_still_needs_lambda1() {
    // λ₂ = ½ at t₀ on ScaledGaussian(2), but λ₁ has dropped below ½ by t₁.
    let cfg = FlowConfig { horizon: 0.1, eigen_count: 2, output_every: 20, ..Default::default() };
    let traj = run_family(&scaled_gaussian_family(2.0, 1, 0.0).unwrap(), Resolution::default(), &cfg).unwrap();
    let out = detect_splitting(&traj, traj.t0(), traj.t1(), &SplittingTolerances::analytic()).unwrap();
    let f = out.failure().expect("failure");
    assert_eq!(f.violated, Hypothesis::Lambda1AtT1);
    assert_eq!(f.record.k, 2);
}

#[test]
fn bad_times_are_usage_errors() {
    let traj = product_run();
    let tol = SplittingTolerances::analytic();
    assert!(matches!(detect_splitting(traj, 0.1, 0.1, &tol), Err(Error::Usage(_))));
    assert!(matches!(detect_splitting(traj, 0.0, 5.0, &tol), Err(Error::Usage(_))));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    #[test]
    fn validity_is_monotone_in_tolerance(e1 in -14.0f64..-2.0, shrink in -6.0f64..0.0) {
        let traj = product_run();
        let loose = SplittingTolerances::analytic().scaled(10f64.powf(e1 + 10.0));
        let tight = loose.scaled(10f64.powf(shrink));
        let a = detect_splitting(traj, traj.t0(), traj.t1(), &loose).unwrap().is_valid();
        let b = detect_splitting(traj, traj.t0(), traj.t1(), &tight).unwrap().is_valid();
        prop_assert!(a || !b);
    }
}
