//! Flow integration behaviour against exact oracles: heat-kernel decay
//! rates, scheme convergence orders, the metric-flow/heat-flow gauge
//! equivalence, and the monotone quantities along trajectories.

use hymflow_core::bundle::{make_test_bundle, perturb_bundle_metric, BundleKind};
use hymflow_core::diagnostics::energy_identity_residual;
use hymflow_core::flow::{
    cfl_timestep, integrate, trajectory_equivalence, FlowConfig, FlowState, Scheme,
};
use hymflow_core::geometry::{build_torus_geometry, GridGeometry, MetricField};

fn flat(npts: usize) -> (GridGeometry<f64>, MetricField<f64>) {
    let g = build_torus_geometry::<f64>(1, npts, &[]).unwrap();
    let m = MetricField::flat(&g);
    (g, m)
}

fn conformal(geom: &GridGeometry<f64>, amplitude: f64) -> hymflow_core::Bundle {
    make_test_bundle(
        geom,
        &BundleKind::ConformalLine {
            amplitude,
            mode: vec![1, 0],
        },
    )
    .unwrap()
}

#[test]
fn metric_flow_decay_matches_heat_kernel_rate() {
    // Single Fourier mode on the flat unit torus: the conformal factor obeys
    // the linear heat equation with rate −4π²|m|² exactly.
    let (geom, metric) = flat(16);
    let b = conformal(&geom, 0.2);
    let cfg = FlowConfig {
        t_end: 0.06,
        record_every: 16,
        lambda: Some(0.0),
        ..FlowConfig::default()
    };
    let traj = integrate(&geom, &metric, FlowState::Metric(b), &cfg).unwrap();
    // ‖ΛF‖₂ is proportional to the surviving mode amplitude
    let recs = &traj.records;
    let k0 = recs.len() / 4;
    let k1 = 3 * recs.len() / 4;
    let measured =
        (recs[k1].l2_lambda_f / recs[k0].l2_lambda_f).ln() / (recs[k1].t - recs[k0].t);
    let exact = -4.0 * std::f64::consts::PI.powi(2);
    let rel = ((measured - exact) / exact).abs();
    assert!(rel < 0.01, "rate {measured} vs {exact}: rel err {rel:e}");
}

#[test]
fn rk4_self_convergence_order() {
    let (geom, metric) = flat(16);
    let b = conformal(&geom, 0.5);
    let t_end = 0.048;
    let run = |dt: f64| -> Vec<num_complex::Complex<f64>> {
        let cfg = FlowConfig {
            dt: Some(dt),
            t_end,
            cfl: 0.5,
            record_every: 1 << 20,
            lambda: Some(0.0),
            ..FlowConfig::default()
        };
        let traj = integrate(&geom, &metric, FlowState::Metric(b.clone()), &cfg).unwrap();
        traj.final_state.as_metric().unwrap().h().data().to_vec()
    };
    let dt0 = 4.0e-4;
    let h1 = run(dt0);
    let h2 = run(dt0 / 2.0);
    let h4 = run(dt0 / 4.0);
    let dist = |a: &[num_complex::Complex<f64>], b: &[num_complex::Complex<f64>]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>()
            .sqrt()
    };
    let e1 = dist(&h1, &h2);
    let e2 = dist(&h2, &h4);
    let order = (e1 / e2).log2();
    assert!(
        order >= 3.5,
        "rk4 self-convergence order {order:.2} (e1={e1:e}, e2={e2:e})"
    );
}

#[test]
fn euler_agrees_with_rk4_at_first_order() {
    let (geom, metric) = flat(16);
    let b = conformal(&geom, 0.3);
    let t_end = 0.02;
    let run = |dt: f64, scheme: Scheme| -> Vec<num_complex::Complex<f64>> {
        let cfg = FlowConfig {
            dt: Some(dt),
            t_end,
            cfl: 0.5,
            scheme,
            record_every: 1 << 20,
            lambda: Some(0.0),
            ..FlowConfig::default()
        };
        let traj = integrate(&geom, &metric, FlowState::Metric(b.clone()), &cfg).unwrap();
        traj.final_state.as_metric().unwrap().h().data().to_vec()
    };
    let dist = |a: &[num_complex::Complex<f64>], b: &[num_complex::Complex<f64>]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>()
            .sqrt()
    };
    let d1 = dist(&run(2.0e-4, Scheme::Euler), &run(2.0e-4, Scheme::Rk4));
    let d2 = dist(&run(1.0e-4, Scheme::Euler), &run(1.0e-4, Scheme::Rk4));
    assert!(d1 > 0.0 && d2 > 0.0);
    let ratio = d1 / d2;
    assert!(
        (1.5..3.0).contains(&ratio),
        "euler-vs-rk4 gap should halve with dt: ratio {ratio:.2}"
    );
}

#[test]
fn two_flows_are_gauge_equivalent() {
    let (geom, metric) = flat(16);
    let b = conformal(&geom, 0.1);
    let dt = 2.0e-4;
    let run_pair = |dt: f64| -> Vec<(f64, f64)> {
        let cfg = FlowConfig {
            dt: Some(dt),
            t_end: 0.01,
            cfl: 0.5,
            scheme: Scheme::Euler,
            record_every: 8,
            checkpoint_every: 8,
            lambda: Some(0.0),
            ..FlowConfig::default()
        };
        let traj_h = integrate(&geom, &metric, FlowState::Metric(b.clone()), &cfg).unwrap();
        let traj_a = integrate(
            &geom,
            &metric,
            FlowState::Conn(b.connection().unwrap()),
            &cfg,
        )
        .unwrap();
        trajectory_equivalence(&geom, &metric, &traj_h, &traj_a).unwrap()
    };
    let disc = run_pair(dt);
    assert!(disc[0].1 < 1e-12, "t=0 discrepancy {:e}", disc[0].1);
    let worst = disc.iter().map(|(_, d)| *d).fold(0.0, f64::max);
    assert!(worst <= 5.0 * dt, "discrepancy {worst:e} vs 5dt {:e}", 5.0 * dt);

    let disc_half = run_pair(dt / 2.0);
    let worst_half = disc_half.iter().map(|(_, d)| *d).fold(0.0, f64::max);
    assert!(
        worst_half <= 0.6 * worst + 1e-12,
        "halving dt should halve the discrepancy: {worst:e} -> {worst_half:e}"
    );
}

#[test]
fn stationary_equivalence_is_exact() {
    let (geom, metric) = flat(16);
    let b = make_test_bundle(&geom, &BundleKind::FluxLine { flux: vec![1] }).unwrap();
    let cfg = FlowConfig {
        t_end: 0.005,
        record_every: 16,
        checkpoint_every: 16,
        ..FlowConfig::default()
    };
    let traj_h = integrate(&geom, &metric, FlowState::Metric(b.clone()), &cfg).unwrap();
    let traj_a = integrate(
        &geom,
        &metric,
        FlowState::Conn(b.connection().unwrap()),
        &cfg,
    )
    .unwrap();
    let disc = trajectory_equivalence(&geom, &metric, &traj_h, &traj_a).unwrap();
    for (t, d) in disc {
        assert!(d < 1e-9, "t={t}: discrepancy {d:e}");
    }
}

#[test]
fn heat_flow_monotone_quantities() {
    let (geom, metric) = flat(16);
    let b = perturb_bundle_metric(
        &geom,
        &make_test_bundle(&geom, &BundleKind::FluxLine { flux: vec![1] }).unwrap(),
        0.15,
        &[1, 0],
    );
    let cfg = FlowConfig {
        t_end: 0.25,
        record_every: 8,
        ..FlowConfig::default()
    };
    let traj = integrate(&geom, &metric, FlowState::Conn(b.connection().unwrap()), &cfg)
        .unwrap();
    let recs = &traj.records;
    let sup0 = recs[0].sup_lambda_f;
    let steps_per_record = 8.0;
    for k in 1..recs.len() {
        assert!(
            recs[k].sup_lambda_f <= sup0 * (1.0 + 1e-6),
            "max principle violated at t={}",
            recs[k].t
        );
        assert!(
            recs[k].l2_lambda_f <= recs[k - 1].l2_lambda_f + 1e-8 * steps_per_record,
            "‖ΛF‖₂ increased at t={}",
            recs[k].t
        );
        assert!(
            recs[k].ym <= recs[k - 1].ym + 1e-6 * recs[0].ym * steps_per_record,
            "YM increased at t={}",
            recs[k].t
        );
        assert!(recs[k].integrability_resid <= 10.0 * recs[0].integrability_resid + 1e-10);
    }
    // I(t) decays by orders of magnitude over the run
    let i0 = recs[0].i_func;
    let i_end = recs.last().unwrap().i_func;
    assert!(
        i_end <= 1e-6 * i0,
        "I(t) decay insufficient: {i_end:e} vs initial {i0:e}"
    );
    // the energy identity holds to time-quadrature accuracy
    let resid = energy_identity_residual(&traj);
    let worst = resid.iter().cloned().fold(0.0, f64::max);
    assert!(worst < 1e-3, "energy identity residual {worst:e}");
}

#[test]
fn cfl_bound_scales_with_resolution() {
    let (g16, m16) = flat(16);
    let (g32, m32) = flat(32);
    let b16 = cfl_timestep(&g16, &m16, 0.1);
    let b32 = cfl_timestep(&g32, &m32, 0.1);
    assert!((b16 / b32 - 4.0).abs() < 1e-12);
}
