//! Line-based run configuration: `section.key = value` with `#` comments.
//! Unknown keys are hard errors; cross-field rules are validated after
//! parsing so typos never silently change a run.

use std::collections::BTreeSet;

use crate::error::CliError;
use hymflow_core::bundle::BundleKind;
use hymflow_core::flow::Scheme;
use hymflow_core::geometry::MetricKind;

#[derive(Debug, Clone, PartialEq)]
pub enum TriState {
    Auto,
    On,
    Off,
}

#[derive(Debug, Clone)]
pub struct GeometryConfig {
    pub n: usize,
    pub npts: usize,
    pub periods: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MetricConfig {
    pub kind: MetricKind,
    pub amplitude: f64,
    pub mode: Vec<i32>,
}

#[derive(Debug, Clone)]
pub struct BundleConfig {
    pub kind: String,
    pub amplitude: f64,
    pub mode: Vec<i32>,
    /// per block, per complex axis
    pub fluxes: Vec<Vec<i64>>,
    /// extension class: one (re, im) per complex direction
    pub class: Vec<(f64, f64)>,
    pub perturb_amplitude: f64,
    pub perturb_mode: Vec<i32>,
}

#[derive(Debug, Clone)]
pub struct FlowSection {
    pub kind: FlowKind,
    pub dt: Option<f64>,
    pub t_end: f64,
    pub cfl: f64,
    pub scheme: Scheme,
    pub record_every: usize,
    pub checkpoint_every: usize,
    pub store_energy: bool,
    pub blowup_factor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowKind {
    Metric,
    Heat,
}

#[derive(Debug, Clone)]
pub struct DiagnosticsConfig {
    pub eps1: f64,
    pub density_radius: Option<f64>,
    pub phi_radii: Vec<f64>,
    pub phi_base: Vec<f64>,
    pub phi_t0: Option<f64>,
    pub phi_cutoff: Option<f64>,
    pub phi_calib: f64,
    pub check_torsion: TriState,
    pub check_max_principle: TriState,
    pub check_energy_identity: TriState,
    pub check_density_empty: TriState,
    pub check_phi: TriState,
}

#[derive(Debug, Clone)]
pub struct OutputConfig {
    pub dir: String,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub metric: MetricConfig,
    pub bundle: BundleConfig,
    pub flow: FlowSection,
    pub diagnostics: DiagnosticsConfig,
    pub output: OutputConfig,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            geometry: GeometryConfig {
                n: 1,
                npts: 16,
                periods: Vec::new(),
            },
            metric: MetricConfig {
                kind: MetricKind::KahlerFlat,
                amplitude: 0.0,
                mode: Vec::new(),
            },
            bundle: BundleConfig {
                kind: "trivial_line".into(),
                amplitude: 0.2,
                mode: Vec::new(),
                fluxes: Vec::new(),
                class: Vec::new(),
                perturb_amplitude: 0.0,
                perturb_mode: Vec::new(),
            },
            flow: FlowSection {
                kind: FlowKind::Metric,
                dt: None,
                t_end: 0.1,
                cfl: 0.1,
                scheme: Scheme::Rk4,
                record_every: 10,
                checkpoint_every: 0,
                store_energy: false,
                blowup_factor: 1e6,
            },
            diagnostics: DiagnosticsConfig {
                eps1: 1e-2,
                density_radius: None,
                phi_radii: Vec::new(),
                phi_base: Vec::new(),
                phi_t0: None,
                phi_cutoff: None,
                phi_calib: 20.0,
                check_torsion: TriState::Auto,
                check_max_principle: TriState::On,
                check_energy_identity: TriState::Auto,
                check_density_empty: TriState::On,
                check_phi: TriState::Off,
            },
            output: OutputConfig { dir: "out".into() },
            seed: 0,
        }
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError> {
    value
        .split(',')
        .map(|v| v.trim())
        .filter(|v| !v.is_empty())
        .map(|v| {
            v.parse::<T>().map_err(|_| CliError::Semantic {
                key: key.to_string(),
                msg: format!("cannot parse list entry `{v}`"),
            })
        })
        .collect()
}

fn parse_scalar<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.parse::<T>().map_err(|_| CliError::Semantic {
        key: key.to_string(),
        msg: format!("cannot parse `{value}`"),
    })
}

fn parse_tristate(key: &str, value: &str) -> Result<TriState, CliError> {
    match value {
        "auto" => Ok(TriState::Auto),
        "on" | "true" => Ok(TriState::On),
        "off" | "false" => Ok(TriState::Off),
        other => Err(CliError::Semantic {
            key: key.to_string(),
            msg: format!("expected auto|on|off, got `{other}`"),
        }),
    }
}

/// Parse the line-based config text into a fully validated RunConfig.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    let mut seen = BTreeSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Syntax {
                line: line_no,
                msg: format!("expected `section.key = value`, got `{line}`"),
            });
        };
        let key = key.trim();
        let value = value.trim();
        if !seen.insert(key.to_string()) {
            return Err(CliError::Syntax {
                line: line_no,
                msg: format!("duplicate key `{key}`"),
            });
        }

        match key {
            "geometry.n" => cfg.geometry.n = parse_scalar(key, value)?,
            "geometry.N" => cfg.geometry.npts = parse_scalar(key, value)?,
            "geometry.periods" => cfg.geometry.periods = parse_list(key, value)?,

            "metric.kind" => {
                cfg.metric.kind = match value {
                    "kahler_flat" => MetricKind::KahlerFlat,
                    "kahler_warped" => MetricKind::KahlerWarped,
                    "gauduchon_nonkahler" => MetricKind::GauduchonNonkahler,
                    "nongauduchon_bump" => MetricKind::NonGauduchonBump,
                    other => {
                        return Err(CliError::Semantic {
                            key: key.to_string(),
                            msg: format!("unknown metric kind `{other}`"),
                        })
                    }
                }
            }
            "metric.amplitude" => cfg.metric.amplitude = parse_scalar(key, value)?,
            "metric.mode" => cfg.metric.mode = parse_list(key, value)?,

            "bundle.kind" => cfg.bundle.kind = value.to_string(),
            "bundle.amplitude" => cfg.bundle.amplitude = parse_scalar(key, value)?,
            "bundle.mode" => cfg.bundle.mode = parse_list(key, value)?,
            "bundle.fluxes" => {
                cfg.bundle.fluxes = value
                    .split(';')
                    .map(|blk| parse_list::<i64>(key, blk))
                    .collect::<Result<Vec<_>, _>>()?;
            }
            "bundle.class" => {
                let flat: Vec<f64> = parse_list(key, value)?;
                if !flat.len().is_multiple_of(2) {
                    return Err(CliError::Semantic {
                        key: key.to_string(),
                        msg: "class needs re,im pairs".into(),
                    });
                }
                cfg.bundle.class = flat.chunks(2).map(|c| (c[0], c[1])).collect();
            }
            "bundle.perturb_amplitude" => cfg.bundle.perturb_amplitude = parse_scalar(key, value)?,
            "bundle.perturb_mode" => cfg.bundle.perturb_mode = parse_list(key, value)?,

            "flow.kind" => {
                cfg.flow.kind = match value {
                    "metric" => FlowKind::Metric,
                    "heat" => FlowKind::Heat,
                    other => {
                        return Err(CliError::Semantic {
                            key: key.to_string(),
                            msg: format!("expected metric|heat, got `{other}`"),
                        })
                    }
                }
            }
            "flow.dt" => {
                cfg.flow.dt = if value == "auto" {
                    None
                } else {
                    Some(parse_scalar(key, value)?)
                }
            }
            "flow.t_end" => cfg.flow.t_end = parse_scalar(key, value)?,
            "flow.cfl" => cfg.flow.cfl = parse_scalar(key, value)?,
            "flow.scheme" => {
                cfg.flow.scheme = match value {
                    "rk4" => Scheme::Rk4,
                    "euler" => Scheme::Euler,
                    other => {
                        return Err(CliError::Semantic {
                            key: key.to_string(),
                            msg: format!("expected rk4|euler, got `{other}`"),
                        })
                    }
                }
            }
            "flow.record_every" => cfg.flow.record_every = parse_scalar(key, value)?,
            "flow.checkpoint_every" => cfg.flow.checkpoint_every = parse_scalar(key, value)?,
            "flow.store_energy" => {
                cfg.flow.store_energy = matches!(parse_tristate(key, value)?, TriState::On)
            }
            "flow.blowup_factor" => cfg.flow.blowup_factor = parse_scalar(key, value)?,

            "diagnostics.eps1" => cfg.diagnostics.eps1 = parse_scalar(key, value)?,
            "diagnostics.density_radius" => {
                cfg.diagnostics.density_radius = Some(parse_scalar(key, value)?)
            }
            "diagnostics.phi_radii" => cfg.diagnostics.phi_radii = parse_list(key, value)?,
            "diagnostics.phi_base" => cfg.diagnostics.phi_base = parse_list(key, value)?,
            "diagnostics.phi_t0" => {
                cfg.diagnostics.phi_t0 = if value == "auto" {
                    None
                } else {
                    Some(parse_scalar(key, value)?)
                }
            }
            "diagnostics.phi_cutoff" => {
                cfg.diagnostics.phi_cutoff = Some(parse_scalar(key, value)?)
            }
            "diagnostics.phi_calib" => cfg.diagnostics.phi_calib = parse_scalar(key, value)?,
            "diagnostics.check_torsion" => {
                cfg.diagnostics.check_torsion = parse_tristate(key, value)?
            }
            "diagnostics.check_max_principle" => {
                cfg.diagnostics.check_max_principle = parse_tristate(key, value)?
            }
            "diagnostics.check_energy_identity" => {
                cfg.diagnostics.check_energy_identity = parse_tristate(key, value)?
            }
            "diagnostics.check_density_empty" => {
                cfg.diagnostics.check_density_empty = parse_tristate(key, value)?
            }
            "diagnostics.check_phi" => cfg.diagnostics.check_phi = parse_tristate(key, value)?,

            "output.dir" => cfg.output.dir = value.to_string(),
            "run.seed" => cfg.seed = parse_scalar(key, value)?,

            other => {
                return Err(CliError::UnknownKey {
                    key: other.to_string(),
                })
            }
        }
    }

    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    let n = cfg.geometry.n;
    if n != 1 && n != 2 {
        return Err(CliError::Semantic {
            key: "geometry.n".into(),
            msg: format!("complex dimension must be 1 or 2, got {n}"),
        });
    }
    if !cfg.geometry.periods.is_empty() && cfg.geometry.periods.len() != 2 * n {
        return Err(CliError::Semantic {
            key: "geometry.periods".into(),
            msg: format!("need {} periods (one per real axis)", 2 * n),
        });
    }
    if matches!(
        cfg.metric.kind,
        MetricKind::GauduchonNonkahler | MetricKind::NonGauduchonBump
    ) && n != 2
    {
        return Err(CliError::Semantic {
            key: "metric.kind".into(),
            msg: "torsion test metrics require geometry.n = 2".into(),
        });
    }
    if !cfg.metric.mode.is_empty() && cfg.metric.mode.len() != 2 * n {
        return Err(CliError::Semantic {
            key: "metric.mode".into(),
            msg: format!("need {} mode entries", 2 * n),
        });
    }
    match cfg.bundle.kind.as_str() {
        "trivial_line" | "conformal_line" => {}
        "flux_line" => {
            if cfg.bundle.fluxes.len() != 1 || cfg.bundle.fluxes[0].len() != n {
                return Err(CliError::Semantic {
                    key: "bundle.fluxes".into(),
                    msg: format!("flux_line needs one block with {n} flux entries"),
                });
            }
        }
        "direct_sum" => {
            if cfg.bundle.fluxes.len() < 2 {
                return Err(CliError::Semantic {
                    key: "bundle.fluxes".into(),
                    msg: "direct_sum needs at least two flux blocks (use 0 for trivial)".into(),
                });
            }
            for blk in &cfg.bundle.fluxes {
                if blk.len() != n {
                    return Err(CliError::Semantic {
                        key: "bundle.fluxes".into(),
                        msg: format!("each block needs {n} flux entries"),
                    });
                }
            }
        }
        "extension" => {
            if cfg.bundle.class.len() != n {
                return Err(CliError::Semantic {
                    key: "bundle.class".into(),
                    msg: format!("extension class needs {n} re,im pairs"),
                });
            }
        }
        other => {
            return Err(CliError::Semantic {
                key: "bundle.kind".into(),
                msg: format!("unknown bundle kind `{other}`"),
            })
        }
    }
    if cfg.flow.t_end <= 0.0 {
        return Err(CliError::Semantic {
            key: "flow.t_end".into(),
            msg: "t_end must be positive".into(),
        });
    }
    if !(0.0 < cfg.flow.cfl && cfg.flow.cfl <= 1.0) {
        return Err(CliError::Semantic {
            key: "flow.cfl".into(),
            msg: "cfl must lie in (0, 1]".into(),
        });
    }
    if cfg.flow.record_every == 0 {
        return Err(CliError::Semantic {
            key: "flow.record_every".into(),
            msg: "record_every must be at least 1".into(),
        });
    }
    if !cfg.diagnostics.phi_base.is_empty() && cfg.diagnostics.phi_base.len() != 2 * n {
        return Err(CliError::Semantic {
            key: "diagnostics.phi_base".into(),
            msg: format!("need {} coordinates", 2 * n),
        });
    }
    Ok(())
}

/// Bundle construction recipe from the config (before H-perturbation).
pub fn bundle_kind(cfg: &RunConfig) -> BundleKind {
    match cfg.bundle.kind.as_str() {
        "trivial_line" => BundleKind::TrivialLine,
        "conformal_line" => BundleKind::ConformalLine {
            amplitude: cfg.bundle.amplitude,
            mode: default_mode(&cfg.bundle.mode, cfg.geometry.n),
        },
        "flux_line" => BundleKind::FluxLine {
            flux: cfg.bundle.fluxes[0].clone(),
        },
        "direct_sum" => BundleKind::DirectSum(
            cfg.bundle
                .fluxes
                .iter()
                .map(|f| BundleKind::FluxLine { flux: f.clone() })
                .collect(),
        ),
        "extension" => BundleKind::Extension {
            class: cfg.bundle.class.clone(),
        },
        _ => unreachable!("validated"),
    }
}

pub fn default_mode(mode: &[i32], n: usize) -> Vec<i32> {
    if mode.is_empty() {
        let mut m = vec![0; 2 * n];
        m[0] = 1;
        m
    } else {
        mode.to_vec()
    }
}
