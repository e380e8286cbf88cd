//! Experiment configuration, execution and reporting.

pub mod config;
pub mod rate;

pub use config::{ExperimentConfig, ExperimentKind, Geometry};
pub use rate::{fit_rate, RateReport};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use crate::dynamics::{dynamic_error_sweep, instability_demo, InitialData};
use crate::error::{Error, Result};
use crate::fourier::FourierField;
use crate::potentials::Potential;
use crate::stability::{instability_eigenprobe, stability_constant, DispersionSpectrum};
use crate::statics::{static_converge_sweep, MacroForce, StaticOptions};
use crate::stress::{stress_consistency_field, CbModel};
use config::GrowthExpectation;

/// Command-line overrides of a configuration.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
}

/// One acceptance check of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub band: [f64; 2],
    pub passed: bool,
}

impl Check {
    fn new(name: &str, value: f64, band: [f64; 2]) -> Self {
        Self {
            name: name.to_string(),
            value,
            band,
            passed: value >= band[0] && value <= band[1],
        }
    }
}

/// Result of [`run`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub kind: ExperimentKind,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub csv: String,
    pub report: Value,
    pub csv_path: Option<PathBuf>,
    pub report_path: Option<PathBuf>,
}

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// SHA-256 of the canonical JSON form of the configuration, excluding the
/// worker count and output directory, which do not affect results.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut cfg = cfg.clone();
    cfg.workers = None;
    cfg.output.dir = None;
    let canonical = serde_json::to_string(&cfg).expect("config serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

struct Output {
    csv: String,
    result: Value,
    checks: Vec<Check>,
}

/// Runs an experiment on a worker pool of the configured size and writes
/// `<name>.csv` and `<name>.report.json` when an output directory is set.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    let mut cfg = cfg.clone();
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if let Some(w) = opts.workers {
        cfg.workers = Some(w);
    }
    cfg.validate()?;
    let hash = config_hash(&cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let out = pool.install(|| execute(&cfg))?;
    let passed = out.checks.iter().all(|c| c.passed);

    let header = [
        format!("latcb {TOOL_VERSION}"),
        format!("experiment {}", cfg.kind),
        format!("config sha256 {hash}"),
        format!("seed {}", cfg.seed),
    ];
    let mut csv = String::new();
    for h in &header {
        csv.push_str(&format!("# {h}\n"));
    }
    csv.push_str(&out.csv);
    let report = json!({
        "tool": "latcb",
        "version": TOOL_VERSION,
        "config_hash": hash,
        "seed": cfg.seed,
        "kind": cfg.kind,
        "passed": passed,
        "checks": out.checks,
        "result": out.result,
    });

    let dir = opts.out_dir.clone().or_else(|| cfg.output.dir.as_ref().map(PathBuf::from));
    let (mut csv_path, mut report_path) = (None, None);
    if let Some(dir) = dir {
        std::fs::create_dir_all(&dir)?;
        let name = cfg.name();
        let c = dir.join(format!("{name}.csv"));
        let r = dir.join(format!("{name}.report.json"));
        write_atomic(&c, csv.as_bytes())?;
        let text = serde_json::to_string_pretty(&report).map_err(|e| Error::Numerical(e.to_string()))?;
        write_atomic(&r, text.as_bytes())?;
        csv_path = Some(c);
        report_path = Some(r);
    }
    Ok(RunOutcome {
        kind: cfg.kind,
        passed,
        checks: out.checks,
        csv,
        report,
        csv_path,
        report_path,
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Numerical(e.to_string()))
}

fn build_potential(cfg: &ExperimentConfig) -> Result<Potential> {
    let spec = cfg
        .potential
        .as_ref()
        .ok_or_else(|| Error::Config("missing [potential] section".into()))?;
    spec.build(&cfg.geometry.orientation()?)
}

fn rate_checks(name: &str, rate: &RateReport, band: Option<[f64; 2]>, checks: &mut Vec<Check>) {
    if let Some(b) = band {
        checks.push(Check::new(name, rate.slope, b));
    }
}

fn execute(cfg: &ExperimentConfig) -> Result<Output> {
    match cfg.kind {
        ExperimentKind::Stability => run_stability(cfg),
        ExperimentKind::Dispersion => run_dispersion(cfg),
        ExperimentKind::StressConsistency => run_stress(cfg),
        ExperimentKind::StaticConverge => run_static(cfg),
        ExperimentKind::DynamicConverge => run_dynamic(cfg),
        ExperimentKind::InstabilityDemo => run_instability(cfg),
    }
}

fn run_stability(cfg: &ExperimentConfig) -> Result<Output> {
    let p = build_potential(cfg)?;
    let sec = cfg.stability.clone().unwrap_or_default();
    let report = stability_constant(&p, sec.grid)?;
    let mut checks = Vec::new();
    if let Some([v, tol]) = sec.expect_gamma {
        checks.push(Check::new("gamma", report.gamma, [v - tol, v + tol]));
    }
    let probe = match sec.probe_cells {
        Some(n) => Some(instability_eigenprobe(&p, n)?),
        None => None,
    };
    if let (Some([v, tol]), Some(pr)) = (sec.expect_quotient, &probe) {
        checks.push(Check::new("probe_rayleigh_quotient", pr.rayleigh_quotient, [v - tol, v + tol]));
    }
    let spectrum = DispersionSpectrum::compute(&p, sec.grid)?;
    Ok(Output {
        csv: spectrum.to_csv(),
        result: json!({ "stability": to_value(&report)?, "probe": to_value(&probe)? }),
        checks,
    })
}

fn run_dispersion(cfg: &ExperimentConfig) -> Result<Output> {
    let p = build_potential(cfg)?;
    let sec = cfg.dispersion.clone().unwrap_or_default();
    let spectrum = DispersionSpectrum::compute(&p, sec.grid)?;
    let min_ev = spectrum
        .points
        .iter()
        .map(|pt| pt.eigenvalues[0])
        .fold(f64::INFINITY, f64::min);
    Ok(Output {
        csv: spectrum.to_csv(),
        result: json!({
            "grid": sec.grid,
            "max_frequency": spectrum.max_frequency(),
            "min_eigenvalue": min_ev,
        }),
        checks: Vec::new(),
    })
}

fn run_stress(cfg: &ExperimentConfig) -> Result<Output> {
    let p = build_potential(cfg)?;
    let sec = cfg.stress.as_ref().expect("validated");
    let model = CbModel::new(p.clone());
    let cells = cfg.geometry.cells()?;
    let rows = cells
        .par_iter()
        .map(|&n| stress_consistency_field(&p, &model, &sec.field, n, sec.per_cell, sec.stride))
        .collect::<Result<Vec<_>>>()?;
    let eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let stress_rate = fit_rate(&eps, &rows.iter().map(|r| r.stress).collect::<Vec<_>>(), None)?;
    let div_rate = fit_rate(&eps, &rows.iter().map(|r| r.divergence).collect::<Vec<_>>(), None)?;
    let mut checks = Vec::new();
    rate_checks("stress_slope", &stress_rate, sec.stress_band, &mut checks);
    rate_checks("divergence_slope", &div_rate, sec.divergence_band, &mut checks);
    let mut csv = format!(
        "# stress slope {:.6} divergence slope {:.6}\neps,cells,stress_gap,divergence_gap\n",
        stress_rate.slope, div_rate.slope
    );
    for (r, n) in rows.iter().zip(&cells) {
        csv.push_str(&format!("{:.17e},{n},{:.17e},{:.17e}\n", r.eps, r.stress, r.divergence));
    }
    Ok(Output {
        csv,
        result: json!({
            "rows": to_value(&rows)?,
            "stress_rate": to_value(&stress_rate)?,
            "divergence_rate": to_value(&div_rate)?,
        }),
        checks,
    })
}

fn run_static(cfg: &ExperimentConfig) -> Result<Output> {
    let p = build_potential(cfg)?;
    let sec = cfg.statics.as_ref().expect("validated");
    let cells = cfg.geometry.cells()?;
    let opts = StaticOptions {
        seed: cfg.seed,
        ..sec.options.clone()
    };
    let force = MacroForce::new(sec.force.clone(), sec.delta)?;
    let sweep = static_converge_sweep(&p, &force, &cells, &opts)?;
    let mut checks = Vec::new();
    rate_checks("slope", &sweep.rate, sec.band, &mut checks);
    let mut halving = None;
    if let Some(band) = sec.halving_band {
        let half = MacroForce::new(sec.force.clone(), 0.5 * sec.delta)?;
        let hs = static_converge_sweep(&p, &half, &cells, &opts)?;
        let ratios: Vec<f64> = hs.runs.iter().zip(&sweep.runs).map(|(h, f)| h.error / f.error).collect();
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        checks.push(Check::new("delta_halving_ratio_min", lo, band));
        checks.push(Check::new("delta_halving_ratio_max", hi, band));
        halving = Some(ratios);
    }
    Ok(Output {
        csv: sweep.to_csv(&[]),
        result: json!({ "sweep": to_value(&sweep)?, "delta_halving_ratios": halving }),
        checks,
    })
}

fn run_dynamic(cfg: &ExperimentConfig) -> Result<Output> {
    let p = build_potential(cfg)?;
    let sec = cfg.dynamics.as_ref().expect("validated");
    let cells = cfg.geometry.cells()?;
    let data = InitialData::new(
        sec.u0.clone(),
        sec.u1.clone().unwrap_or_else(|| FourierField::zero(sec.u0.dim)),
    )?;
    let sweep = dynamic_error_sweep(&p, &data, &cells, sec.t_macro, &sec.options)?;
    let mut checks = Vec::new();
    rate_checks("slope", &sweep.rate, sec.band, &mut checks);
    if let Some(m) = sec.max_half_dt_change {
        checks.push(Check::new("half_dt_change", sweep.half_dt_change, [0.0, m]));
    }
    Ok(Output {
        csv: sweep.to_csv(&[]),
        result: to_value(&sweep)?,
        checks,
    })
}

fn run_instability(cfg: &ExperimentConfig) -> Result<Output> {
    let sec = cfg.instability.as_ref().expect("validated");
    let report = instability_demo(sec.a1, sec.a2, sec.cells, sec.profile, sec.dt)?;
    let mut checks = Vec::new();
    match sec.expect {
        Some(GrowthExpectation::Growth) => {
            checks.push(Check::new("min_growth_ratio", report.min_growth_ratio, [1.0, f64::INFINITY]))
        }
        Some(GrowthExpectation::Bounded) => {
            checks.push(Check::new("max_velocity_ratio", report.max_velocity_ratio, [0.0, 2.0]))
        }
        None => {}
    }
    Ok(Output {
        csv: report.to_csv(&[]),
        result: json!({
            "eps": report.eps,
            "profile": report.profile,
            "window": report.window,
            "min_growth_ratio": report.min_growth_ratio,
            "max_velocity_ratio": report.max_velocity_ratio,
            "dt": report.dt,
            "continuum_max": report.continuum_max,
        }),
        checks,
    })
}
