use driftflow_core::comparison::eigenvalue_bound;
use driftflow_core::flow::{
    commutator_residual, evolve_scalar, functional_residuals, mixing_series, run_family,
    step_modified_flow, FlowConfig, FlowState,
};
use driftflow_core::geometry::{
    product_family, round_circle_family, scaled_gaussian_family, ContinuumFactor, ContinuumState,
    FactorGeometry, Resolution, TrigPoly,
};
use driftflow_core::Error;

fn res() -> Resolution {
    Resolution::default()
}

fn circle_metric(state: &FlowState) -> Vec<f64> {
    match &state.geometry().factors[0] {
        FactorGeometry::Circle { metric, .. } => metric.clone(),
        _ => panic!("not a circle"),
    }
}

#[test]
fn single_steps_match_closed_forms() {
    let cfg = FlowConfig::default();
    let st = FlowState::from_continuum(&scaled_gaussian_family(1.0, 1, 0.0).unwrap().evaluate(0.0).unwrap(), res()).unwrap();
    let next = step_modified_flow(&st, 0.01, &cfg).unwrap();
    assert_eq!(next.geometry().factors, st.geometry().factors);

    let st = FlowState::from_continuum(&round_circle_family(1.0, 0.0).unwrap().evaluate(0.0).unwrap(), res()).unwrap();
    let next = step_modified_flow(&st, 0.01, &cfg).unwrap();
    for a in circle_metric(&next) {
        assert!((a - 0.01f64.exp()).abs() < 1e-12);
    }

    let fam = scaled_gaussian_family(2.0, 1, 0.0).unwrap();
    let st = FlowState::from_continuum(&fam.evaluate(0.0).unwrap(), res()).unwrap();
    let next = step_modified_flow(&st, 0.01, &cfg).unwrap();
    let FactorGeometry::Gaussian { scale, offset } = next.geometry().factors[0] else { panic!() };
    let u = 1.0 + 0.01f64.exp();
    assert!((scale - u).abs() < 1e-12);
    assert!((offset - 0.5 * u.ln()).abs() < 1e-12);
    assert!(step_modified_flow(&st, 1.0, &cfg).is_err());
}

#[test]
fn sharp_example_tracks_bound() {
    let fam = scaled_gaussian_family(2.0, 1, 0.0).unwrap();
    let cfg = FlowConfig { horizon: 2f64.ln(), eigen_count: 1, ..Default::default() };
    let traj = run_family(&fam, res(), &cfg).unwrap();
    assert!((traj.t1() - 2f64.ln()).abs() < 1e-14);
    for (t, l) in traj.times().iter().zip(traj.lambda(1)) {
        let b = eigenvalue_bound(0.25, *t).unwrap();
        assert!(((l - b) / b).abs() < 1e-8, "t={t}: {l} vs {b}");
    }
}

#[test]
fn round_circle_lambda_decays() {
    let fam = round_circle_family(1.0, 0.0).unwrap();
    let cfg = FlowConfig { horizon: 0.5, eigen_count: 2, output_every: 10, ..Default::default() };
    let traj = run_family(&fam, res(), &cfg).unwrap();
    assert_eq!(traj.len(), 51);
    for (t, l) in traj.times().iter().zip(traj.lambda(1)) {
        assert!((l - (-t).exp()).abs() < 1e-8);
    }
}

#[test]
fn zero_horizon_returns_initial_state() {
    let fam = round_circle_family(2.0, 0.3).unwrap();
    let cfg = FlowConfig { horizon: 0.0, ..Default::default() };
    let traj = run_family(&fam, res(), &cfg).unwrap();
    assert_eq!(traj.len(), 1);
    assert_eq!(traj.t0(), 0.3);
    assert_eq!(circle_metric(&traj.states[0]), vec![2.0; 64]);
}

#[test]
fn extinction_is_a_flow_breakdown() {
    let fam = scaled_gaussian_family(0.5, 1, 0.0).unwrap();
    let cfg = FlowConfig { horizon: 0.8, eigen_count: 1, output_every: 50, ..Default::default() };
    assert!(matches!(run_family(&fam, res(), &cfg), Err(Error::FlowBreakdown { .. })));
}

#[test]
fn rough_circle_trips_the_stability_monitor() {
    let st = ContinuumState::new(
        vec![ContinuumFactor::Circle {
            metric: TrigPoly::constant(1.0),
            weight: TrigPoly::new(vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1e-3], vec![]),
        }],
        0.0,
        0.0,
    )
    .unwrap();
    let cfg = FlowConfig { horizon: 1.0, eigen_count: 1, output_every: 100, ..Default::default() };
    match driftflow_core::flow::run_flow(&st, Resolution { circle_nodes: 32, ..res() }, &cfg) {
        Err(Error::Stability { .. }) | Err(Error::FlowBreakdown { .. }) => {}
        other => panic!("expected a stability error, got {:?}", other.map(|t| t.len())),
    }
}

#[test]
fn scalars_on_static_soliton() {
    let fam = scaled_gaussian_family(1.0, 1, 0.0).unwrap();
    let cfg = FlowConfig { horizon: 0.2, eigen_count: 1, tracked_scalars: 1, output_every: 20, ..Default::default() };
    let traj = run_family(&fam, res(), &cfg).unwrap();
    let x0 = &traj.scalars[0][0];
    for fields in &traj.scalars {
        for (a, b) in fields[0].iter().zip(x0) {
            assert!((a - b).abs() < 1e-12, "{a} {b}");
        }
    }
    let one = vec![1.0; x0.len()];
    let evolved = evolve_scalar(&one, &traj).unwrap();
    for (t, u) in traj.times().iter().zip(&evolved) {
        assert!(u.iter().all(|v| (v - (t / 2.0).exp()).abs() < 1e-12));
    }
    let mix = mixing_series(&traj).unwrap();
    assert!(mix.iter().all(|m| (m[(0, 0)] - 1.0).abs() < 1e-10));
    let dm = traj.states[3].manifold();
    let r = commutator_residual(x0, &traj, 3).unwrap();
    assert!(r.absolute < 1e-12, "{r:?}");
    assert!(dm.len() == x0.len());
}

#[test]
fn round_circle_identities() {
    let fam = round_circle_family(1.0, 0.0).unwrap();
    let cfg = FlowConfig { horizon: 0.3, eigen_count: 2, tracked_scalars: 2, ..Default::default() };
    let traj = run_family(&fam, res(), &cfg).unwrap();
    let r = functional_residuals(&traj).unwrap();
    assert!(r.pairing < 1e-4 && r.norm < 1e-4, "{r:?}");
    assert!(r.energy_increase < 1e-8, "{r:?}");
    assert!(r.volume_drift < 1e-6 && r.mean_drift < 1e-9, "{r:?}");
    let c = traj.states[0].manifold().sample(|c| c[0].cos());
    let cr = commutator_residual(&c, &traj, traj.len() / 2).unwrap();
    assert!(cr.relative() < 1e-5, "{cr:?}");
}

#[test]
fn gram_schmidt_derivative_on_sharp_example() {
    let fam = scaled_gaussian_family(2.0, 1, 0.0).unwrap();
    let cfg = FlowConfig { horizon: 0.01, eigen_count: 1, tracked_scalars: 1, ..Default::default() };
    let traj = run_family(&fam, res(), &cfg).unwrap();
    let a: Vec<f64> = mixing_series(&traj).unwrap().iter().map(|m| m[(0, 0)]).collect();
    let d = driftflow_core::oracle::finite_diff_time_derivative(&a, traj.output_dt).unwrap();
    assert!((d[0] + 0.25).abs() < 1e-4, "{}", d[0]);
}

#[test]
fn product_flow_spectrum_is_minkowski_sum() {
    let fam = product_family(vec![
        scaled_gaussian_family(2.0, 1, 0.0).unwrap(),
        round_circle_family(0.5, 0.0).unwrap(),
    ])
    .unwrap();
    let cfg = FlowConfig { horizon: 0.2, eigen_count: 4, output_every: 50, ..Default::default() };
    let traj = run_family(&fam, Resolution { circle_nodes: 32, hermite_order: 10 }, &cfg).unwrap();
    let analytic = traj.analytic.as_ref().unwrap();
    for (spec, exact) in traj.spectra.iter().zip(analytic) {
        for (a, b) in spec.eigenvalues.iter().zip(exact) {
            assert!((a - b).abs() < 1e-9 * b.max(1.0), "{a} vs {b}");
        }
    }
    let v = traj.volumes();
    assert!(v.iter().all(|x| ((x - v[0]) / v[0]).abs() < 1e-10));
}
