//! Single scenario runs: flow, checks, oracle comparisons and artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use driftflow_core::comparison::{eigenvalue_bound, BoundCurve};
use driftflow_core::flow::{
    commutator_residual, functional_residuals, norm_residual_series, run_family, run_flow, FlowTrajectory,
};
use driftflow_core::oracle::{dense_spectrum, integrate_equality_ode, OracleReport, DENSE_LIMIT};
use driftflow_core::spectral::{assemble_forms, bochner_residual, energy_profile};
use driftflow_core::splitting::{detect_splitting, SplittingOutcome, SplittingTolerances};
use driftflow_core::Error as CoreError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Scenario, ScenarioConfig};
use crate::error::{CliError, CliResult};

pub const MANIFEST_FORMAT: &str = "driftflow-run/1";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const BOUNDS_FILE: &str = "bounds.csv";
pub const CERTIFICATE_FILE: &str = "certificate.json";
pub const MANIFEST_FILE: &str = "manifest.json";

pub const ORACLE_TOLERANCE: f64 = 1e-8;
pub const ENERGY_MONOTONE_TOLERANCE: f64 = 1e-8;
pub const VOLUME_TOLERANCE: f64 = 1e-6;
pub const MEAN_TOLERANCE: f64 = 1e-9;
const EQUALITY_ODE_STEP: f64 = 1e-4;
const TINY_SCALE: f64 = 1e-10;

/// Fixed 17-significant-digit rendering used in every CSV cell.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckRecord {
    pub name: String,
    pub passed: bool,
    pub skipped: bool,
    pub value: Option<f64>,
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckRecord {
    fn measured(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= tolerance,
            skipped: false,
            value: value.is_finite().then_some(value),
            tolerance,
            note: None,
        }
    }

    fn skipped(name: &str, tolerance: f64, note: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: true,
            skipped: true,
            value: None,
            tolerance,
            note: Some(note.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileRecord {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Versions {
    pub driftflow: String,
    pub manifest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub solver: f64,
    pub step: f64,
    pub bound_slack: f64,
    pub identity: f64,
    pub commutator: f64,
    pub bochner: f64,
    pub oracle: f64,
    pub energy_monotone: f64,
    pub volume: f64,
    pub mean: f64,
    pub splitting: SplittingTolerances,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSummary {
    pub outputs: usize,
    pub internal_steps: usize,
    pub t0: f64,
    pub t1: f64,
    pub checks_passed: usize,
    pub checks_failed: usize,
    pub checks_skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub format: String,
    pub name: String,
    pub config_sha256: String,
    pub config: ScenarioConfig,
    pub versions: Versions,
    pub tolerances: Tolerances,
    pub files: Vec<FileRecord>,
    pub oracle_reports: Vec<OracleReport>,
    pub checks: Vec<CheckRecord>,
    pub summary: RunSummary,
}

impl RunManifest {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub fn parse_manifest(text: &str) -> CliResult<RunManifest> {
    let m: RunManifest =
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("manifest: {e}")))?;
    if m.format != MANIFEST_FORMAT {
        return Err(CliError::Config(format!("manifest: unsupported format {:?}", m.format)));
    }
    for f in &m.files {
        if f.name.is_empty() || f.name.contains(['/', '\\']) || f.name.starts_with('.') {
            return Err(CliError::Config(format!("manifest: bad file name {:?}", f.name)));
        }
        if f.sha256.len() != 64 || !f.sha256.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(CliError::Config(format!("manifest: bad digest for {}", f.name)));
        }
    }
    Ok(m)
}

pub fn config_digest(config: &ScenarioConfig) -> String {
    let canonical = serde_json::to_string(config).expect("config serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// In-memory products of a run, before anything touches the disk.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub trajectory_csv: String,
    pub bounds_csv: String,
    pub certificate: Option<SplittingOutcome>,
    pub oracle_reports: Vec<OracleReport>,
    pub checks: Vec<CheckRecord>,
    pub tolerances: Tolerances,
    pub summary: RunSummary,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

/// Runs the flow for `config` and computes every artifact.
pub fn simulate(config: &ScenarioConfig) -> CliResult<(FlowTrajectory, RunArtifacts)> {
    config.validate()?;
    let traj = match config.scenario()? {
        Scenario::Family(f) => run_family(&f, config.resolution, &config.flow)?,
        Scenario::State(s) => run_flow(&s, config.resolution, &config.flow)?,
    };
    let artifacts = build_artifacts(config, &traj)?;
    Ok((traj, artifacts))
}

/// Runs `config` and writes its artifacts into `out`. Nothing is written
/// unless the run itself succeeds.
pub fn execute(config: &ScenarioConfig, out: &Path) -> CliResult<RunOutcome> {
    let (_, art) = simulate(config)?;
    write_run(config, art, out)
}

fn write_run(config: &ScenarioConfig, art: RunArtifacts, out: &Path) -> CliResult<RunOutcome> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut payloads: Vec<(&str, Vec<u8>)> = vec![
        (TRAJECTORY_FILE, art.trajectory_csv.into_bytes()),
        (BOUNDS_FILE, art.bounds_csv.into_bytes()),
    ];
    if let Some(cert) = &art.certificate {
        let mut text = serde_json::to_string_pretty(cert).expect("certificate serializes");
        text.push('\n');
        payloads.push((CERTIFICATE_FILE, text.into_bytes()));
    } else {
        remove_stale(&out.join(CERTIFICATE_FILE))?;
    }
    let mut files = Vec::new();
    for (name, bytes) in &payloads {
        let path = out.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        files.push(FileRecord {
            name: name.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len() as u64,
        });
    }
    let manifest = RunManifest {
        format: MANIFEST_FORMAT.into(),
        name: config.name.clone(),
        config_sha256: config_digest(config),
        config: config.clone(),
        versions: Versions {
            driftflow: env!("CARGO_PKG_VERSION").into(),
            manifest: MANIFEST_FORMAT.into(),
        },
        tolerances: art.tolerances,
        files,
        oracle_reports: art.oracle_reports,
        checks: art.checks,
        summary: art.summary,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    let path = out.join(MANIFEST_FILE);
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(RunOutcome {
        dir: out.to_path_buf(),
        manifest,
    })
}

fn remove_stale(path: &Path) -> CliResult<()> {
    match fs::remove_file(path) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
        Err(e) => Err(CliError::io(path, e)),
    }
}

fn bound_row(l0: &[f64], s: f64) -> Vec<f64> {
    l0.iter()
        .map(|&l| eigenvalue_bound(l, s).unwrap_or(f64::INFINITY))
        .collect()
}

pub fn build_artifacts(config: &ScenarioConfig, traj: &FlowTrajectory) -> CliResult<RunArtifacts> {
    let k = config.flow.eigen_count;
    let m = config.flow.tracked_scalars;
    let v = &config.verify;
    let times = traj.times();
    let t0 = traj.t0();
    let n = traj.len();
    let l0: Vec<f64> = (1..=k).map(|j| traj.spectra[0].eigenvalues[j]).collect();

    let residual_ij = if m > 0 && n >= 3 {
        norm_residual_series(traj)?
    } else {
        vec![f64::NAN; n]
    };
    let probe = &traj.spectra[0].eigenfunctions[1];
    let commutator: Vec<f64> = if n >= 3 {
        (0..n)
            .map(|i| {
                commutator_residual(probe, traj, i)
                    .map(|r| if r.scale < TINY_SCALE { r.absolute } else { r.relative() })
            })
            .collect::<Result<_, _>>()?
    } else {
        vec![f64::NAN; n]
    };

    let mut csv = String::from("t");
    for j in 0..=k {
        let _ = write!(csv, ",lambda_{j}");
    }
    for j in 1..=k {
        let _ = write!(csv, ",bound_{j}");
    }
    csv.push_str(",volume");
    for i in 1..=m {
        let _ = write!(csv, ",E_{i}");
    }
    csv.push_str(",residual_IJ,residual_commutator\n");
    let mut bounds = String::from("s,t");
    for j in 1..=k {
        let _ = write!(bounds, ",bound_{j}");
    }
    bounds.push('\n');

    for (i, &t) in times.iter().enumerate() {
        let row = bound_row(&l0, t - t0);
        let mut cells = vec![fmt_num(t)];
        cells.extend(traj.spectra[i].eigenvalues.iter().map(|&x| fmt_num(x)));
        cells.extend(row.iter().map(|&x| fmt_num(x)));
        cells.push(fmt_num(traj.states[i].volume()));
        cells.extend((0..m).map(|a| fmt_num(traj.functionals[i].energy(a))));
        cells.push(fmt_num(residual_ij[i]));
        cells.push(fmt_num(commutator[i]));
        csv.push_str(&cells.join(","));
        csv.push('\n');

        let mut cells = vec![fmt_num(t - t0), fmt_num(t)];
        cells.extend(row.iter().map(|&x| fmt_num(x)));
        bounds.push_str(&cells.join(","));
        bounds.push('\n');
    }

    let mut checks = Vec::new();
    if v.bounds {
        let mut excess = f64::NEG_INFINITY;
        for (i, &t) in times.iter().enumerate() {
            for j in 1..=k {
                let curve = BoundCurve::new(l0[j - 1])?;
                if curve.is_valid_at(t - t0) {
                    excess = excess.max(traj.spectra[i].eigenvalues[j] - curve.eval(t - t0)?);
                }
            }
        }
        checks.push(CheckRecord::measured("bound_compliance", excess.max(0.0), v.bound_slack));
    }

    if v.functionals {
        if m > 0 && n >= 3 {
            let r = functional_residuals(traj)?;
            checks.push(CheckRecord::measured("identity_pairing", r.pairing, v.identity_tolerance));
            checks.push(CheckRecord::measured("identity_norm", r.norm, v.identity_tolerance));
            checks.push(CheckRecord::measured("energy_monotone", r.energy_increase, ENERGY_MONOTONE_TOLERANCE));
            checks.push(CheckRecord::measured("volume_drift", r.volume_drift, VOLUME_TOLERANCE));
            checks.push(CheckRecord::measured("mean_drift", r.mean_drift, MEAN_TOLERANCE));
        } else {
            checks.push(CheckRecord::skipped(
                "identity_pairing",
                v.identity_tolerance,
                "needs tracked_scalars >= 1 and 3 outputs",
            ));
        }
    }

    if v.commutator {
        if n >= 3 {
            let worst = commutator[1..n - 1].iter().copied().fold(0.0, f64::max);
            checks.push(CheckRecord::measured("commutator", worst, v.commutator_tolerance));
        } else {
            checks.push(CheckRecord::skipped("commutator", v.commutator_tolerance, "needs 3 outputs"));
        }
    }

    if v.bochner {
        let mut worst = 0.0f64;
        for i in [0, n - 1] {
            let dm = traj.states[i].manifold();
            for u in traj.spectra[i].eigenfunctions.iter().skip(1) {
                let b = bochner_residual(u, dm)?;
                let scale = b.lhs.abs().max(b.rhs.abs()).max(energy_profile(u, dm)?.e);
                worst = worst.max(if scale > 0.0 { b.absolute() / scale } else { 0.0 });
            }
        }
        checks.push(CheckRecord::measured("bochner", worst, v.bochner_tolerance));
    }

    let mut oracle_reports = Vec::new();
    let forms = assemble_forms(traj.states[0].manifold())?;
    if forms.dim() <= DENSE_LIMIT {
        let dense = dense_spectrum(&forms)?;
        let r = OracleReport::compare(
            "dense_spectrum",
            &format!("t={};dim={}", fmt_num(t0), forms.dim()),
            dense[1..=k.min(dense.len() - 1)].to_vec(),
            l0[..k.min(dense.len() - 1)].to_vec(),
        )?;
        checks.push(CheckRecord::measured("oracle_dense_spectrum", r.rel_deviation, ORACLE_TOLERANCE));
        oracle_reports.push(r);
    } else {
        checks.push(CheckRecord::skipped(
            "oracle_dense_spectrum",
            ORACLE_TOLERANCE,
            format!("dimension {} above {DENSE_LIMIT}", forms.dim()),
        ));
    }
    if let Some(analytic) = &traj.analytic {
        let last = n - 1;
        let r = OracleReport::compare(
            "analytic_spectrum",
            &format!("t={}", fmt_num(times[last])),
            analytic[last][1..=k].to_vec(),
            traj.spectra[last].eigenvalues[1..=k].to_vec(),
        )?;
        checks.push(CheckRecord::measured("oracle_analytic_spectrum", r.rel_deviation, ORACLE_TOLERANCE));
        oracle_reports.push(r);
    }
    let s_end = times[n - 1] - t0;
    if s_end > 0.0 {
        let (mut reference, mut target) = (Vec::new(), Vec::new());
        for &l in &l0 {
            if BoundCurve::new(l)?.is_valid_at(s_end) {
                match integrate_equality_ode(l, s_end, EQUALITY_ODE_STEP) {
                    Ok(x) => {
                        reference.push(x);
                        target.push(eigenvalue_bound(l, s_end)?);
                    }
                    Err(CoreError::Horizon { .. }) => {}
                    Err(e) => return Err(e.into()),
                }
            }
        }
        if !reference.is_empty() {
            let r = OracleReport::compare(
                "equality_ode",
                &format!("s={};dt={}", fmt_num(s_end), fmt_num(EQUALITY_ODE_STEP)),
                reference,
                target,
            )?;
            checks.push(CheckRecord::measured("oracle_equality_ode", r.rel_deviation, ORACLE_TOLERANCE));
            oracle_reports.push(r);
        }
    }

    let split_tol = config
        .splitting
        .unwrap_or_else(|| SplittingTolerances::for_trajectory(traj));
    let certificate = if v.splitting {
        if n < 2 {
            checks.push(CheckRecord::skipped("splitting", 0.0, "needs 2 outputs"));
            None
        } else {
            let outcome = detect_splitting(traj, t0, times[n - 1], &split_tol)?;
            checks.push(match &outcome {
                SplittingOutcome::Certificate(c) => CheckRecord {
                    name: "splitting".into(),
                    passed: c.valid,
                    skipped: false,
                    value: Some(if c.valid { 0.0 } else { 1.0 }),
                    tolerance: 0.0,
                    note: Some(format!("k={}", c.k)),
                },
                SplittingOutcome::HypothesisFailure(f) => {
                    CheckRecord::skipped("splitting", 0.0, format!("hypothesis failure: {}", f.description))
                }
            });
            Some(outcome)
        }
    } else {
        None
    };

    let summary = RunSummary {
        outputs: n,
        internal_steps: traj.internal_steps,
        t0,
        t1: times[n - 1],
        checks_passed: checks.iter().filter(|c| c.passed && !c.skipped).count(),
        checks_failed: checks.iter().filter(|c| !c.passed).count(),
        checks_skipped: checks.iter().filter(|c| c.skipped).count(),
    };
    Ok(RunArtifacts {
        trajectory_csv: csv,
        bounds_csv: bounds,
        certificate,
        oracle_reports,
        checks,
        tolerances: Tolerances {
            solver: config.flow.solver_tolerance,
            step: config.flow.step_tolerance,
            bound_slack: v.bound_slack,
            identity: v.identity_tolerance,
            commutator: v.commutator_tolerance,
            bochner: v.bochner_tolerance,
            oracle: ORACLE_TOLERANCE,
            energy_monotone: ENERGY_MONOTONE_TOLERANCE,
            volume: VOLUME_TOLERANCE,
            mean: MEAN_TOLERANCE,
            splitting: split_tol,
        },
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_have_seventeen_digits() {
        assert_eq!(fmt_num(0.25), "2.5000000000000000e-1");
        assert_eq!(fmt_num(-1.0 / 3.0), "-3.3333333333333331e-1");
        assert_eq!(fmt_num(f64::INFINITY), "inf");
        assert_eq!(fmt_num(f64::NAN), "nan");
    }

    #[test]
    fn manifest_rejects_path_names() {
        let bad = r#"{"format":"driftflow-run/1","files":[{"name":"../x","sha256":"00","bytes":1}]}"#;
        assert!(parse_manifest(bad).is_err());
        assert!(parse_manifest("{}").is_err());
    }
}
