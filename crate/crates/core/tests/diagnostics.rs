//! Diagnostics machinery against constructed inputs: kernel-weighted local
//! energies, the scaled-density mask, spectral clustering of iΛF, and the
//! local energy estimate along stored trajectories.

use num_complex::Complex;

use hymflow_core::bundle::{make_test_bundle, perturb_bundle_metric, BundleKind};
use hymflow_core::diagnostics::{
    density_scan, density_scan_energy, eigenvalue_clustering, local_energy_check,
    phi_monotonicity,
};
use hymflow_core::flow::{integrate, FlowConfig, FlowState};
use hymflow_core::geometry::forms::FormField;
use hymflow_core::geometry::{build_torus_geometry, GridGeometry, MetricField};

fn flat(npts: usize) -> (GridGeometry<f64>, MetricField<f64>) {
    let g = build_torus_geometry::<f64>(1, npts, &[]).unwrap();
    let m = MetricField::flat(&g);
    (g, m)
}

#[test]
fn density_scan_zero_and_bump() {
    let (geom, metric) = flat(16);
    // F = 0: empty mask
    let zero = FormField::<f64>::zeros_like_degree(&geom, 1, 1, 1);
    let map = density_scan(&geom, &metric, None, &zero, 0.2, 1e-2).unwrap();
    assert_eq!(map.exceedances(), 0);
    assert!(map.values.iter().all(|&v| v == 0.0));

    // single-cell energy bump: the mask marks exactly the r-ball around it
    let bump_site = {
        let c = vec![5usize, 9];
        geom.site_index(&c)
    };
    let mut energy = vec![0.0; geom.site_count()];
    let cell = geom.cell_volume();
    // value r^{4-2n}·e·cell at distance ≤ r must cross eps1
    energy[bump_site] = 2.0 * 1e-2 / (0.1f64.powi(2) * cell);
    let map = density_scan_energy(&geom, &metric, &energy, 0.1, 1e-2).unwrap();
    assert!(map.exceedances() > 0, "bump not detected");
    let bump_pos = geom.position(bump_site);
    for site in 0..geom.site_count() {
        if map.mask[site] {
            let d = geom.distance(&geom.position(site), &bump_pos);
            assert!(
                d <= 0.1 + 2.0 * geom.min_spacing(),
                "mask leaked to distance {d}"
            );
        }
    }

    // radius beyond the injectivity radius is rejected
    assert!(density_scan_energy(&geom, &metric, &energy, 0.6, 1e-2).is_err());
}

#[test]
fn density_scan_scaling_in_radius() {
    // smooth bounded energy: values scale like r⁴ (n = 1)
    let (geom, metric) = flat(16);
    let energy: Vec<f64> = (0..geom.site_count())
        .map(|s| {
            let x = geom.position(s);
            1.0 + 0.3 * (std::f64::consts::TAU * x[0]).cos()
        })
        .collect();
    let v1 = density_scan_energy(&geom, &metric, &energy, 0.25, 1e9)
        .unwrap()
        .values
        .iter()
        .cloned()
        .fold(0.0, f64::max);
    let v2 = density_scan_energy(&geom, &metric, &energy, 0.125, 1e9)
        .unwrap()
        .values
        .iter()
        .cloned()
        .fold(0.0, f64::max);
    let ratio = v1 / v2;
    assert!(
        (8.0..32.0).contains(&ratio),
        "expected ~2^4 scaling, got {ratio}"
    );
}

#[test]
fn clustering_splits_flux_pair_and_keeps_extension_together() {
    let (geom, metric) = flat(16);
    // direct sum of flux ±1: spectra at ±2π exactly at the HE point
    let b = make_test_bundle(
        &geom,
        &BundleKind::DirectSum(vec![
            BundleKind::FluxLine { flux: vec![1] },
            BundleKind::FluxLine { flux: vec![-1] },
        ]),
    )
    .unwrap();
    let f = hymflow_core::bundle::curvature(&geom, &b).unwrap();
    let ilf = hymflow_core::geometry::lambda_contract(&metric, &f.f11)
        .unwrap()
        .scaled(Complex::new(0.0, 1.0));
    let clusters = eigenvalue_clustering(&ilf, Some(b.h()), 1e-9, None).unwrap();
    assert_eq!(clusters.len(), 2, "{clusters:?}");
    let pi2 = 2.0 * std::f64::consts::PI;
    assert!((clusters[0].center - pi2).abs() < 1e-9);
    assert!((clusters[1].center + pi2).abs() < 1e-9);
    assert_eq!(clusters[0].multiplicity, 1);
    assert_eq!(clusters[1].multiplicity, 1);
    assert!(clusters[0].spread < 1e-9 && clusters[1].spread < 1e-9);

    // non-split extension with equal degrees: one cluster around zero
    let e = make_test_bundle(&geom, &BundleKind::Extension { class: vec![(1.0, 0.0)] })
        .unwrap();
    let fe = hymflow_core::bundle::curvature(&geom, &e).unwrap();
    let ilfe = hymflow_core::geometry::lambda_contract(&metric, &fe.f11)
        .unwrap()
        .scaled(Complex::new(0.0, 1.0));
    // he_resid for this state is O(|class|²); pass it as the gap cushion
    let clusters = eigenvalue_clustering(&ilfe, Some(e.h()), 1.0, None).unwrap();
    assert_eq!(clusters.len(), 1, "{clusters:?}");
    assert_eq!(clusters[0].multiplicity, 2);
}

#[test]
fn clustering_survives_noise() {
    let (geom, _) = flat(16);
    // pseudo-random Hermitian field: no crash, sane output
    let mut field = FormField::<f64>::zeros(1, 0, 0, 2, geom.site_count());
    let mut state = 0x9e3779b97f4a7c15u64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state as f64 / u64::MAX as f64) - 0.5
    };
    for site in 0..geom.site_count() {
        let d0 = next();
        let d1 = next();
        let off = Complex::new(next(), next());
        *field.at_mut(0, 0, 0, site) = Complex::new(d0, 0.0);
        *field.at_mut(0, 1, 1, site) = Complex::new(d1, 0.0);
        *field.at_mut(0, 0, 1, site) = off;
        *field.at_mut(0, 1, 0, site) = off.conj();
    }
    let clusters = eigenvalue_clustering(&field, None, 0.0, None).unwrap();
    assert!(!clusters.is_empty());
    let total: usize = clusters.iter().map(|c| c.multiplicity).sum();
    assert!(total <= 2, "multiplicities {total}");
    for c in &clusters {
        assert!(c.spread.is_finite() && c.center.is_finite());
    }
}

fn stored_flux_run(
    geom: &GridGeometry<f64>,
    metric: &MetricField<f64>,
    t_end: f64,
) -> hymflow_core::flow::Trajectory<f64> {
    let b = perturb_bundle_metric(
        geom,
        &make_test_bundle(geom, &BundleKind::FluxLine { flux: vec![1] }).unwrap(),
        0.08,
        &[1, 0],
    );
    let cfg = FlowConfig {
        t_end,
        record_every: 4,
        store_energy: true,
        ..FlowConfig::default()
    };
    integrate(geom, metric, FlowState::Conn(b.connection().unwrap()), &cfg).unwrap()
}

#[test]
fn phi_profile_and_verdict_on_stored_run() {
    // radii must sit well inside the cutoff plateau (kernel mass retention)
    // while staying grid-resolved: N = 64 with a dyadic pair near 2h.
    let (geom, metric) = flat(64);
    let t0 = 0.012;
    let traj = stored_flux_run(&geom, &metric, t0);
    let x0 = vec![0.5, 0.5];
    let rs = [0.017, 0.034];
    let report = phi_monotonicity(&geom, &metric, &traj, &x0, t0, &rs, 0.5, 20.0).unwrap();
    assert!(report.verdict, "margin {:e}", report.worst_margin);
    assert!(report.phi.iter().all(|&p| p.is_finite() && p >= 0.0));
    // near-constant curvature: the r⁴-normalized profile is flat within 20%
    let a = report.phi_normalized[0];
    let b = report.phi_normalized[1];
    let var = (a - b).abs() / a.max(b);
    assert!(var < 0.2, "normalized profile varies {var:.3}");

    // window-coverage and radius preconditions are enforced
    assert!(phi_monotonicity(&geom, &metric, &traj, &x0, t0, &[0.3], 0.5, 20.0).is_err());
    assert!(phi_monotonicity(&geom, &metric, &traj, &x0, 5.0, &[0.034], 0.5, 20.0).is_err());
}

#[test]
fn phi_vanishes_on_flat_trajectories() {
    // F ≡ 0: Φ ≡ 0 and the verdict is trivially true
    let (geom, metric) = flat(16);
    let b = make_test_bundle(&geom, &BundleKind::TrivialLine).unwrap();
    let cfg = FlowConfig {
        t_end: 0.02,
        record_every: 2,
        store_energy: true,
        ..FlowConfig::default()
    };
    let traj = integrate(&geom, &metric, FlowState::Conn(b.connection().unwrap()), &cfg)
        .unwrap();
    let rep = phi_monotonicity(
        &geom,
        &metric,
        &traj,
        &[0.25, 0.25],
        0.02,
        &[0.02, 0.04],
        0.2,
        20.0,
    )
    .unwrap();
    assert!(rep.verdict);
    assert!(rep.phi.iter().all(|&p| p.abs() < 1e-20));
}

#[test]
fn split_sum_he_residual_sits_at_the_gap_scale() {
    // λ = 0 for the balanced sum while the blocks carry ±2π: the Einstein
    // residual measures the gap and sup|ΛF| stays positive
    let (geom, metric) = flat(16);
    let b = make_test_bundle(
        &geom,
        &BundleKind::DirectSum(vec![
            BundleKind::FluxLine { flux: vec![1] },
            BundleKind::FluxLine { flux: vec![-1] },
        ]),
    )
    .unwrap();
    let obs = hymflow_core::diagnostics::flow_observables(
        &geom,
        &metric,
        &FlowState::Metric(b),
        0.0,
        0.0,
    )
    .unwrap();
    // Frobenius norm of diag(2π, −2π): the block gap sets the scale
    let gap_scale = 2.0 * std::f64::consts::PI * 2.0f64.sqrt();
    assert!(
        (obs.record.he_resid - gap_scale).abs() < 1e-9,
        "{}",
        obs.record.he_resid
    );
    assert!(obs.record.sup_lambda_f > 1.0);
}

#[test]
fn local_energy_estimate_holds_with_measured_constant() {
    let (geom, metric) = flat(16);
    let traj = stored_flux_run(&geom, &metric, 0.05);
    let x0 = vec![0.25, 0.75];
    let (lhs, rhs) = local_energy_check(
        &geom, &metric, &traj, &x0, 0.2, /*s=*/ 0.04, /*tau=*/ 0.01, 10.0,
    )
    .unwrap();
    assert!(
        lhs <= rhs,
        "local energy estimate violated: {lhs} > {rhs}"
    );
    // stationary comparison s = τ collapses to the ball inclusion
    let (l2, r2) = local_energy_check(&geom, &metric, &traj, &x0, 0.2, 0.03, 0.03, 10.0).unwrap();
    assert!(l2 <= r2 + 1e-12);
    // R at the i_X/2 maximum is accepted; beyond it is rejected
    assert!(local_energy_check(&geom, &metric, &traj, &x0, 0.25, 0.04, 0.01, 10.0).is_ok());
    assert!(local_energy_check(&geom, &metric, &traj, &x0, 0.3, 0.04, 0.01, 10.0).is_err());
}
