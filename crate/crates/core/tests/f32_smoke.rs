//! The core is generic over the scalar: a single-precision instantiation
//! must build every structure and reproduce the coarse physics. Quantitative
//! tolerances elsewhere assume f64; this is a smoke check only.

use hymflow_core::bundle::{degree_slope_lambda, make_test_bundle, BundleKind};
use hymflow_core::flow::{integrate, FlowConfig, FlowState};
use hymflow_core::geometry::{build_torus_geometry, metric_condition_check, MetricField};

#[test]
fn single_precision_instantiation_runs() {
    let geom = build_torus_geometry::<f32>(1, 16, &[]).unwrap();
    let metric = MetricField::<f32>::flat(&geom);
    let (g, a, k) = metric_condition_check(&geom, &metric).unwrap();
    assert!(g < 1e-5 && a == 0.0 && k < 1e-5);

    let bundle = make_test_bundle(&geom, &BundleKind::FluxLine { flux: vec![1] }).unwrap();
    let (deg, _, lambda) = degree_slope_lambda(&geom, &metric, &bundle).unwrap();
    assert!((deg - 1.0).abs() < 1e-4, "deg {deg}");
    assert!((lambda - 2.0 * std::f32::consts::PI).abs() < 1e-3);

    let cfg = FlowConfig::<f32> {
        t_end: 0.001,
        record_every: 4,
        ..FlowConfig::default()
    };
    let traj = integrate(&geom, &metric, FlowState::Metric(bundle), &cfg).unwrap();
    assert!(traj.status.is_completed());
    assert!(traj.records.iter().all(|r| r.is_finite()));
    // the Einstein state stays put at single precision too
    assert!(traj.records.last().unwrap().he_resid < 1e-3);
}
