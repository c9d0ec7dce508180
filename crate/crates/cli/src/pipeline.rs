//! Orchestration: build geometry → certify the base metric → build the
//! bundle → integrate → emit CSV, checkpoint and a verdict summary. The exit
//! code is 0 only if every enabled invariant verdict passed.

use std::path::{Path, PathBuf};

use crate::checkpoint;
use crate::config::{bundle_kind, default_mode, FlowKind, RunConfig, TriState};
use crate::csvout;
use crate::error::CliError;

use hymflow_core::bundle::{
    degree_slope_lambda, make_test_bundle, perturb_bundle_metric_with_phase,
};
use hymflow_core::diagnostics::{
    cluster_cushion, density_scan, eigenvalue_clustering, flow_observables, phi_monotonicity,
};
use hymflow_core::flow::{
    cfl_timestep, integrate, rhs_cross_check, trajectory_equivalence, FlowConfig, FlowState,
    FlowStatus, Trajectory,
};
use hymflow_core::geometry::{
    build_torus_geometry, l2_norm, lambda_contract, make_test_metric, make_test_metric_with_mode,
    metric_condition_check, GridGeometry, MetricField, MetricKind,
};
use hymflow_core::scalar::imag_unit;
use hymflow_core::Real;

const GAUDUCHON_CERT_TOL: f64 = 1e-8;

#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub out: Option<String>,
    pub seed: Option<u64>,
}

pub fn apply_overrides(cfg: &mut RunConfig, ov: &Overrides) {
    if let Some(dt) = ov.dt {
        cfg.flow.dt = Some(dt);
    }
    if let Some(t_end) = ov.t_end {
        cfg.flow.t_end = t_end;
    }
    if let Some(out) = &ov.out {
        cfg.output.dir = out.clone();
    }
    if let Some(seed) = ov.seed {
        cfg.seed = seed;
    }
}

pub struct RunReport {
    pub exit_code: i32,
    pub lines: Vec<String>,
}

impl RunReport {
    fn new() -> Self {
        RunReport {
            exit_code: 0,
            lines: Vec::new(),
        }
    }

    fn say(&mut self, s: impl Into<String>) {
        self.lines.push(s.into());
    }

    fn verdict(&mut self, name: &str, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        self.lines.push(format!("[{tag}] {name}: {detail}"));
        if !pass {
            self.exit_code = 1;
        }
    }
}

pub struct Scene {
    pub geom: GridGeometry<Real>,
    pub metric: MetricField<Real>,
    pub certified_gauduchon: bool,
    pub residuals: (f64, f64, f64),
    pub omega_norm: f64,
}

pub fn build_scene(cfg: &RunConfig) -> Result<Scene, CliError> {
    let geom = build_torus_geometry::<Real>(cfg.geometry.n, cfg.geometry.npts, &cfg.geometry.periods)?;
    // an explicit mode overrides the kind-specific default (the torsion test
    // metrics need particular mode planes)
    let metric = if cfg.metric.mode.is_empty() {
        make_test_metric(&geom, cfg.metric.kind, cfg.metric.amplitude)?
    } else {
        make_test_metric_with_mode(&geom, cfg.metric.kind, cfg.metric.amplitude, &cfg.metric.mode)?
    };
    let residuals = metric_condition_check(&geom, &metric)?;
    let omega_norm = l2_norm(&geom, &metric, None, &metric.omega());
    let certified_gauduchon = residuals.0 <= GAUDUCHON_CERT_TOL * (omega_norm + 1e-30);
    Ok(Scene {
        geom,
        metric,
        certified_gauduchon,
        residuals,
        omega_norm,
    })
}

fn seed_phase(seed: u64) -> f64 {
    // splitmix-style scramble into [0, 2π)
    let mut z = seed.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64 * std::f64::consts::TAU
}

pub fn build_bundle(
    cfg: &RunConfig,
    scene: &Scene,
) -> Result<hymflow_core::Bundle, CliError> {
    let mut bundle = make_test_bundle(&scene.geom, &bundle_kind(cfg))?;
    if cfg.bundle.perturb_amplitude != 0.0 {
        let mode = default_mode(&cfg.bundle.perturb_mode, cfg.geometry.n);
        bundle = perturb_bundle_metric_with_phase(
            &scene.geom,
            &bundle,
            cfg.bundle.perturb_amplitude,
            &mode,
            seed_phase(cfg.seed),
        );
    }
    Ok(bundle)
}

fn flow_config(cfg: &RunConfig, force_energy: bool) -> FlowConfig<Real> {
    FlowConfig {
        dt: cfg.flow.dt,
        t_end: cfg.flow.t_end,
        cfl: cfg.flow.cfl,
        scheme: cfg.flow.scheme,
        record_every: cfg.flow.record_every,
        checkpoint_every: cfg.flow.checkpoint_every,
        store_energy: cfg.flow.store_energy || force_energy,
        blowup_factor: cfg.flow.blowup_factor,
        lambda: None,
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

const PLOT_STUB: &str = r#"#!/usr/bin/env python3
# Render the diagnostics series produced alongside this script.
import csv, sys
try:
    import matplotlib.pyplot as plt
except ImportError:
    sys.exit("matplotlib is required for plotting")

path = sys.argv[1] if len(sys.argv) > 1 else "diagnostics.csv"
rows = list(csv.DictReader(open(path)))
t = [float(r["t"]) for r in rows]
for col in ("ym", "l2_lambda_f", "he_resid", "i_func"):
    plt.semilogy(t, [max(float(r[col]), 1e-300) for r in rows], label=col)
plt.xlabel("t"); plt.legend(); plt.tight_layout()
plt.savefig("diagnostics.png", dpi=150)
print("wrote diagnostics.png")
"#;

fn describe_metric(report: &mut RunReport, cfg: &RunConfig, scene: &Scene) {
    let (g, a, k) = scene.residuals;
    report.say(format!(
        "metric: kind={:?} amplitude={} | residuals: gauduchon={:.3e} astheno={:.3e} kahler={:.3e} (|omega| = {:.3e})",
        cfg.metric.kind, cfg.metric.amplitude, g, a, k, scene.omega_norm
    ));
    report.say(format!(
        "metric certification: gauduchon = {}",
        if scene.certified_gauduchon { "yes" } else { "NO" }
    ));
}

/// `verify-metric`: residuals and the certification verdict for the kind.
pub fn verify_metric(cfg: &RunConfig) -> Result<RunReport, CliError> {
    let scene = build_scene(cfg)?;
    let mut report = RunReport::new();
    describe_metric(&mut report, cfg, &scene);
    let (g, _, k) = scene.residuals;
    let pass = match cfg.metric.kind {
        MetricKind::KahlerFlat | MetricKind::KahlerWarped => {
            k <= GAUDUCHON_CERT_TOL * scene.omega_norm && scene.certified_gauduchon
        }
        MetricKind::GauduchonNonkahler => {
            scene.certified_gauduchon && k > 0.01 * scene.omega_norm
        }
        MetricKind::NonGauduchonBump => g > 1e-3 * scene.omega_norm,
    };
    report.verdict(
        "metric-kind-certificate",
        pass,
        format!("{:?} satisfies its defining residual profile", cfg.metric.kind),
    );
    Ok(report)
}

/// `run`: the full scenario. Writes diagnostics.csv, checkpoint_final.hymf,
/// plot.py and summary.txt under the output directory.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunReport, CliError> {
    let mut report = RunReport::new();
    let scene = build_scene(cfg)?;
    describe_metric(&mut report, cfg, &scene);

    // hypothesis gating for Gauduchon-dependent checks
    let torsion_enabled = match cfg.diagnostics.check_torsion {
        TriState::Off => false,
        TriState::Auto => scene.certified_gauduchon,
        TriState::On => {
            if scene.certified_gauduchon {
                true
            } else {
                report.say(
                    "warning: torsion-cancellation check disabled: base metric is not Gauduchon-certified",
                );
                false
            }
        }
    };
    let energy_enabled = match cfg.diagnostics.check_energy_identity {
        TriState::Off => false,
        TriState::On => true,
        TriState::Auto => scene.certified_gauduchon,
    };

    let bundle = build_bundle(cfg, &scene)?;
    let (deg, slope, lambda) = degree_slope_lambda(&scene.geom, &scene.metric, &bundle)?;
    report.say(format!(
        "bundle: kind={} rank={} | deg={:.6e} slope={:.6e} lambda={:.6e}",
        cfg.bundle.kind,
        bundle.rank(),
        deg,
        slope,
        lambda
    ));
    let cross = rhs_cross_check(&scene.geom, &scene.metric, &bundle.connection()?)?;
    report.say(format!("heat-flow rhs cross-check residual: {cross:.3e}"));

    let initial = match cfg.flow.kind {
        FlowKind::Metric => FlowState::Metric(bundle.clone()),
        FlowKind::Heat => FlowState::Conn(bundle.connection()?),
    };
    let need_energy = matches!(cfg.diagnostics.check_phi, TriState::On);
    let fc = flow_config(cfg, need_energy);
    let bound = cfl_timestep(&scene.geom, &scene.metric, cfg.flow.cfl);
    report.say(format!(
        "flow: kind={:?} scheme={:?} dt={} (cfl bound {bound:.3e}) t_end={}",
        cfg.flow.kind,
        cfg.flow.scheme,
        fc.dt.map(|d| format!("{d:.3e}")).unwrap_or("auto".into()),
        cfg.flow.t_end
    ));

    let traj = integrate(&scene.geom, &scene.metric, initial, &fc)?;

    let out_dir = PathBuf::from(&cfg.output.dir);
    write_text(&out_dir.join("diagnostics.csv"), &csvout::render(&traj.records))?;
    write_text(&out_dir.join("plot.py"), PLOT_STUB)?;
    let ck = checkpoint::encode(
        &scene.geom,
        &scene.metric,
        &traj.final_state,
        traj.final_time,
        traj.lambda,
    );
    checkpoint::write_atomic(&out_dir.join("checkpoint_final.hymf"), &ck)?;

    match &traj.status {
        FlowStatus::Completed => {
            report.say(format!(
                "flow completed: {} records to t = {:.6e}",
                traj.records.len(),
                traj.final_time
            ));
        }
        FlowStatus::Aborted { t, error } => {
            report.say(format!(
                "flow ABORTED at t = {t:.6e}: {error}; last good state saved to checkpoint_final.hymf"
            ));
            report.exit_code = 3;
            let text = report.lines.join("\n");
            write_text(&out_dir.join("summary.txt"), &text)?;
            return Ok(report);
        }
    }

    evaluate_verdicts(&mut report, cfg, &scene, &traj, torsion_enabled, energy_enabled)?;
    write_text(&out_dir.join("summary.txt"), &report.lines.join("\n"))?;
    Ok(report)
}

fn evaluate_verdicts(
    report: &mut RunReport,
    cfg: &RunConfig,
    scene: &Scene,
    traj: &Trajectory<Real>,
    torsion_enabled: bool,
    energy_enabled: bool,
) -> Result<(), CliError> {
    let recs = &traj.records;
    let steps_per_record = cfg.flow.record_every as f64;

    // final-state observables and clustering
    let obs = flow_observables(
        &scene.geom,
        &scene.metric,
        &traj.final_state,
        traj.lambda,
        traj.final_time,
    )?;
    report.say(format!(
        "final: he_resid={:.6e} sup|ΛF|={:.6e} ‖ΛF‖₂={:.6e} ym={:.6e} I={:.6e}",
        obs.record.he_resid,
        obs.record.sup_lambda_f,
        obs.record.l2_lambda_f,
        obs.record.ym,
        obs.record.i_func
    ));
    let f11 = match &traj.final_state {
        FlowState::Metric(b) => hymflow_core::bundle::curvature(&scene.geom, b)?.f11,
        FlowState::Conn(c) => c.curvature(&scene.geom)?.f11,
    };
    let ilf = lambda_contract(&scene.metric, &f11)?.scaled(imag_unit());
    let h_for_eigs = match &traj.final_state {
        FlowState::Metric(b) => b.h().clone(),
        FlowState::Conn(c) => c.h0().clone(),
    };
    let cushion = cluster_cushion(&scene.geom, &scene.metric, &traj.final_state)?;
    let clusters = eigenvalue_clustering(&ilf, Some(&h_for_eigs), cushion, None)?;
    for c in &clusters {
        report.say(format!(
            "cluster: center={:.6e} multiplicity={} spread={:.3e}",
            c.center, c.multiplicity, c.spread
        ));
    }

    if matches!(cfg.diagnostics.check_max_principle, TriState::On | TriState::Auto) {
        let sup0 = recs[0].sup_lambda_f;
        let mut ok = true;
        let mut detail = format!("sup|ΛF|(0) = {sup0:.3e}");
        for k in 1..recs.len() {
            if recs[k].sup_lambda_f > sup0 * (1.0 + 1e-6) {
                ok = false;
                detail = format!(
                    "sup|ΛF| rose to {:.6e} at t={:.3e}",
                    recs[k].sup_lambda_f, recs[k].t
                );
                break;
            }
            if recs[k].l2_lambda_f > recs[k - 1].l2_lambda_f + 1e-8 * steps_per_record {
                ok = false;
                detail = format!("‖ΛF‖₂ increased at t={:.3e}", recs[k].t);
                break;
            }
        }
        report.verdict("max-principle", ok, detail);
    }

    if scene.certified_gauduchon {
        let mut ok = true;
        let mut detail = "YM non-increasing".to_string();
        for k in 1..recs.len() {
            if recs[k].ym > recs[k - 1].ym + 1e-6 * recs[0].ym * steps_per_record {
                ok = false;
                detail = format!("YM increased at t={:.3e}", recs[k].t);
                break;
            }
        }
        report.verdict("ym-monotone", ok, detail);
    }

    if energy_enabled {
        let worst = recs
            .iter()
            .map(|r| r.energy_ident_resid)
            .fold(0.0f64, f64::max);
        report.verdict(
            "energy-identity",
            worst <= 1e-3,
            format!("max residual {worst:.3e} (tolerance 1e-3)"),
        );
    }

    if torsion_enabled {
        let ratio = obs.record.torsion_pair.abs() / (obs.torsion_denominator + 1e-30);
        let pass = obs.torsion_denominator <= 1e-14 || ratio <= 1e-4;
        report.verdict(
            "torsion-cancellation",
            pass,
            format!(
                "|pairing|/∫|(τ+τ̄)*F||∂A/∂t| = {ratio:.3e} (scale {:.3e})",
                obs.torsion_denominator
            ),
        );
    }

    {
        let i0 = recs[0].integrability_resid;
        let i1 = recs.last().unwrap().integrability_resid;
        report.verdict(
            "integrability-drift",
            i1 <= 10.0 * i0 + 1e-10,
            format!("residual {i0:.3e} -> {i1:.3e}"),
        );
    }

    if matches!(cfg.diagnostics.check_density_empty, TriState::On | TriState::Auto) {
        let r = cfg
            .diagnostics
            .density_radius
            .unwrap_or(2.0 * scene.geom.min_spacing());
        let map = density_scan(
            &scene.geom,
            &scene.metric,
            None,
            &f11,
            r,
            cfg.diagnostics.eps1,
        )?;
        let exceed = map.exceedances();
        report.verdict(
            "density-mask-empty",
            exceed == 0,
            format!(
                "r={r:.3e} eps1={:.3e}: {exceed} exceedances, max value {:.3e}",
                cfg.diagnostics.eps1,
                map.values.iter().cloned().fold(0.0, f64::max)
            ),
        );
    }

    if matches!(cfg.diagnostics.check_phi, TriState::On) {
        let n = scene.geom.complex_dim();
        let h = scene.geom.min_spacing();
        let rs = if cfg.diagnostics.phi_radii.is_empty() {
            vec![1.1 * h, 2.2 * h]
        } else {
            cfg.diagnostics.phi_radii.clone()
        };
        let x0 = if cfg.diagnostics.phi_base.is_empty() {
            vec![0.5; 2 * n]
        } else {
            cfg.diagnostics.phi_base.clone()
        };
        let t0 = cfg.diagnostics.phi_t0.unwrap_or(traj.final_time);
        let big_r = cfg
            .diagnostics
            .phi_cutoff
            .unwrap_or(scene.geom.injectivity_radius());
        match phi_monotonicity(
            &scene.geom,
            &scene.metric,
            traj,
            &x0,
            t0,
            &rs,
            big_r,
            cfg.diagnostics.phi_calib,
        ) {
            Ok(rep) => {
                for (r, (phi, norm)) in rep
                    .rs
                    .iter()
                    .zip(rep.phi.iter().zip(&rep.phi_normalized))
                {
                    report.say(format!("phi: r={r:.4e} phi={phi:.6e} phi/r^4={norm:.6e}"));
                }
                report.verdict(
                    "phi-monotonicity",
                    rep.verdict,
                    format!("worst margin {:.3e} with C={}", rep.worst_margin, cfg.diagnostics.phi_calib),
                );
            }
            Err(e) => {
                report.verdict("phi-monotonicity", false, format!("not evaluable: {e}"));
            }
        }
    }
    Ok(())
}

/// `compare-flows`: run both formulations from the same data and compare
/// gauge-invariant observables through the gauge link at every stored time.
pub fn compare_flows(cfg: &RunConfig) -> Result<RunReport, CliError> {
    let mut report = RunReport::new();
    let scene = build_scene(cfg)?;
    describe_metric(&mut report, cfg, &scene);
    let bundle = build_bundle(cfg, &scene)?;

    let mut fc = flow_config(cfg, false);
    if fc.checkpoint_every == 0 {
        fc.checkpoint_every = cfg.flow.record_every;
    }
    let traj_h = integrate(
        &scene.geom,
        &scene.metric,
        FlowState::Metric(bundle.clone()),
        &fc,
    )?;
    let traj_a = integrate(
        &scene.geom,
        &scene.metric,
        FlowState::Conn(bundle.connection()?),
        &fc,
    )?;
    if !traj_h.status.is_completed() || !traj_a.status.is_completed() {
        report.say("one of the flows aborted; no comparison");
        report.exit_code = 3;
        return Ok(report);
    }
    let disc = trajectory_equivalence(&scene.geom, &scene.metric, &traj_h, &traj_a)?;

    let out_dir = PathBuf::from(&cfg.output.dir);
    let mut csv = String::from("t,discrepancy\n");
    for (t, d) in &disc {
        csv.push_str(&format!(
            "{},{}\n",
            csvout::format_value(*t),
            csvout::format_value(*d)
        ));
    }
    write_text(&out_dir.join("compare.csv"), &csv)?;

    let worst = disc.iter().map(|(_, d)| *d).fold(0.0, f64::max);
    let dt = traj_h.dt;
    report.say(format!(
        "compared {} stored times; worst discrepancy {worst:.6e} at dt={dt:.3e}",
        disc.len()
    ));
    report.verdict(
        "gauge-equivalence",
        worst <= 5.0 * dt,
        format!("worst discrepancy {worst:.3e} vs 5·dt = {:.3e}", 5.0 * dt),
    );
    Ok(report)
}

/// `diagnose`: one-shot observables of a checkpoint, with optional scaled
/// density scan and kernel-weighted monotonicity probe.
pub fn diagnose(path: &Path, phi: bool, sigma_scan: bool) -> Result<RunReport, CliError> {
    let mut report = RunReport::new();
    let ck = checkpoint::read_file(path)?;
    let geom = ck.geometry()?;
    let metric = ck.metric(&geom)?;
    let state = ck.state(&geom)?;
    let t = ck.time();
    let lambda = ck.lambda();
    report.say(format!(
        "checkpoint: n={} N={} rank={} t={:.6e} lambda={:.6e}",
        ck.n, ck.npts, ck.rank, t, lambda
    ));

    let obs = flow_observables(&geom, &metric, &state, lambda, t)?;
    report.say(format!(
        "observables: ym={:.6e} sup|ΛF|={:.6e} ‖ΛF‖₂={:.6e} he_resid={:.6e} I={:.6e} integ={:.3e}",
        obs.record.ym,
        obs.record.sup_lambda_f,
        obs.record.l2_lambda_f,
        obs.record.he_resid,
        obs.record.i_func,
        obs.record.integrability_resid
    ));
    let f11 = match &state {
        FlowState::Metric(b) => hymflow_core::bundle::curvature(&geom, b)?.f11,
        FlowState::Conn(c) => c.curvature(&geom)?.f11,
    };
    let ilf = lambda_contract(&metric, &f11)?.scaled(imag_unit());
    let h_for_eigs = match &state {
        FlowState::Metric(b) => b.h().clone(),
        FlowState::Conn(c) => c.h0().clone(),
    };
    let cushion = cluster_cushion(&geom, &metric, &state)?;
    let clusters = eigenvalue_clustering(&ilf, Some(&h_for_eigs), cushion, None)?;
    for c in &clusters {
        report.say(format!(
            "cluster: center={:.6e} multiplicity={} spread={:.3e}",
            c.center, c.multiplicity, c.spread
        ));
    }

    if sigma_scan {
        let r = 2.0 * geom.min_spacing();
        let map = density_scan(&geom, &metric, None, &f11, r, 1e-2)?;
        report.say(format!(
            "density scan: r={r:.4e} eps1=1e-2 exceedances={} max={:.3e}",
            map.exceedances(),
            map.values.iter().cloned().fold(0.0, f64::max)
        ));
    }

    if phi {
        // continue the flow over a short horizon to sample e(x, t)
        let h = geom.min_spacing();
        let rs = vec![1.5 * h, 3.0 * h];
        let horizon = 4.0 * rs[1] * rs[1] * 1.25;
        let fc = FlowConfig {
            t_end: horizon,
            record_every: 2,
            store_energy: true,
            ..FlowConfig::default()
        };
        let traj = integrate(&geom, &metric, state, &fc)?;
        let x0 = vec![0.5; geom.real_dim()];
        match phi_monotonicity(
            &geom,
            &metric,
            &traj,
            &x0,
            traj.final_time,
            &rs,
            geom.injectivity_radius(),
            20.0,
        ) {
            Ok(rep) => {
                for (r, phi_v) in rep.rs.iter().zip(&rep.phi) {
                    report.say(format!("phi: r={r:.4e} phi={phi_v:.6e}"));
                }
                report.say(format!(
                    "phi verdict (C=20): {}",
                    if rep.verdict { "holds" } else { "VIOLATED" }
                ));
            }
            Err(e) => report.say(format!("phi not evaluable: {e}")),
        }
    }
    Ok(report)
}
